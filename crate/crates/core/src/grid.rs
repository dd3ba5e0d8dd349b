//! Truncated uniform grids, sampled fields and the FLD1 dump format.
//!
//! Samples sit at cell centres `x = -R + (i + 1/2) h`, `h = 2R/n`. Values are
//! stored row-major with `x1` slowest and `x3` fastest:
//! `index = (i1 * n + i2) * n + i3`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::data_fields::Point3;
use crate::error::{Error, Result};

/// Axis-order tag written to FLD1 headers: `x1` slowest, `x3` fastest.
pub const AXIS_ORDER_X1_SLOWEST: u8 = 0;
const FLD1_MAGIC: &[u8; 4] = b"FLD1";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub half_width: f64,
    pub n: usize,
}

impl GridSpec {
    pub fn new(half_width: f64, n: usize) -> Result<Self> {
        let g = Self { half_width, n };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.half_width.is_finite() && self.half_width > 0.0) {
            return Err(Error::InvalidGrid(format!("half width {} must be positive", self.half_width)));
        }
        if self.n < 16 || !self.n.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!("n = {} must be even and >= 16", self.n)));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(3)
    }

    /// Coordinate of sample `i` along any axis.
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.spacing()
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.coord(i)).collect()
    }

    pub fn index(&self, i1: usize, i2: usize, i3: usize) -> usize {
        (i1 * self.n + i2) * self.n + i3
    }

    pub fn unindex(&self, idx: usize) -> [usize; 3] {
        let n = self.n;
        [idx / (n * n), (idx / n) % n, idx % n]
    }

    pub fn point(&self, idx: usize) -> Point3 {
        let [a, b, c] = self.unindex(idx);
        Point3::new(self.coord(a), self.coord(b), self.coord(c))
    }

    /// Evaluates `f` at every sample.
    pub fn sample(&self, f: impl Fn(Point3) -> f64) -> Vec<f64> {
        let xs = self.coords();
        let mut out = Vec::with_capacity(self.len());
        for &a in &xs {
            for &b in &xs {
                for &c in &xs {
                    out.push(f(Point3::new(a, b, c)));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self { grid, values: vec![c; grid.len()] }
    }

    pub fn sample(grid: GridSpec, f: impl Fn(Point3) -> f64) -> Self {
        Self { grid, values: grid.sample(f) }
    }

    pub fn at(&self, i1: usize, i2: usize, i3: usize) -> f64 {
        self.values[self.grid.index(i1, i2, i3)]
    }

    pub fn sup(&self) -> f64 {
        sup_abs(&self.values)
    }

    /// Riemann sum `h^3 * sum(values)`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|v| a * v).collect() }
    }

    pub fn write_fld1(&self, w: impl Write) -> Result<()> {
        write_fld1(w, self.grid, &[&self.values])
    }

    pub fn read_fld1(r: impl Read) -> Result<Self> {
        let (grid, mut comps) = read_fld1(r)?;
        if comps.len() != 1 {
            return Err(Error::Format(format!("expected 1 component, found {}", comps.len())));
        }
        Ok(Self { grid, values: comps.pop().unwrap() })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub components: [ScalarField; 3],
    /// Measured `max |div v|`, when it has been computed.
    pub max_divergence: Option<f64>,
}

impl VectorField {
    pub fn new(components: [ScalarField; 3]) -> Result<Self> {
        let g = components[0].grid;
        if components.iter().any(|c| c.grid != g) {
            return Err(Error::InvalidGrid("components must share one grid".into()));
        }
        Ok(Self { components, max_divergence: None })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            components: std::array::from_fn(|_| ScalarField::zeros(grid)),
            max_divergence: None,
        }
    }

    pub fn sample(grid: GridSpec, f: impl Fn(Point3) -> [f64; 3]) -> Self {
        let mut comps: [Vec<f64>; 3] = std::array::from_fn(|_| Vec::with_capacity(grid.len()));
        let xs = grid.coords();
        for &a in &xs {
            for &b in &xs {
                for &c in &xs {
                    let v = f(Point3::new(a, b, c));
                    for i in 0..3 {
                        comps[i].push(v[i]);
                    }
                }
            }
        }
        Self {
            components: comps.map(|values| ScalarField { grid, values }),
            max_divergence: None,
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.components[0].grid
    }

    pub fn sup(&self) -> f64 {
        self.components.iter().map(|c| c.sup()).fold(0.0, f64::max)
    }

    pub fn write_fld1(&self, w: impl Write) -> Result<()> {
        let c = &self.components;
        write_fld1(w, self.grid(), &[&c[0].values, &c[1].values, &c[2].values])
    }

    pub fn read_fld1(r: impl Read) -> Result<Self> {
        let (grid, comps) = read_fld1(r)?;
        let comps: [Vec<f64>; 3] = comps
            .try_into()
            .map_err(|c: Vec<Vec<f64>>| Error::Format(format!("expected 3 components, found {}", c.len())))?;
        Ok(Self {
            components: comps.map(|values| ScalarField { grid, values }),
            max_divergence: None,
        })
    }
}

/// Fields at ascending times starting at `0`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSlab<T> {
    pub times: Vec<f64>,
    pub fields: Vec<T>,
}

impl<T> TimeSlab<T> {
    pub fn new(times: Vec<f64>, fields: Vec<T>) -> Result<Self> {
        if times.len() != fields.len() || times.is_empty() {
            return Err(Error::InvalidGrid("time slab needs one field per time".into()));
        }
        if times[0] != 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("slab times must start at 0 and ascend".into()));
        }
        Ok(Self { times, fields })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn last(&self) -> &T {
        self.fields.last().unwrap()
    }
}

pub fn sup_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Writes an FLD1 dump: little-endian header followed by each component's
/// `n^3` values.
pub fn write_fld1(mut w: impl Write, grid: GridSpec, comps: &[&[f64]]) -> Result<()> {
    let ncomp = u8::try_from(comps.len()).map_err(|_| Error::Format("too many components".into()))?;
    let n = u32::try_from(grid.n).map_err(|_| Error::Format("grid too large".into()))?;
    let mut buf = Vec::with_capacity(18 + comps.len() * grid.len() * 8);
    buf.extend_from_slice(FLD1_MAGIC);
    buf.extend_from_slice(&n.to_le_bytes());
    buf.extend_from_slice(&grid.half_width.to_le_bytes());
    buf.push(ncomp);
    buf.push(AXIS_ORDER_X1_SLOWEST);
    for c in comps {
        if c.len() != grid.len() {
            return Err(Error::Format("component length does not match grid".into()));
        }
        for v in c.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads an FLD1 dump written by [`write_fld1`].
pub fn read_fld1(mut r: impl Read) -> Result<(GridSpec, Vec<Vec<f64>>)> {
    let mut head = [0u8; 18];
    r.read_exact(&mut head)?;
    if &head[0..4] != FLD1_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let n = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
    let half_width = f64::from_le_bytes(head[8..16].try_into().unwrap());
    let ncomp = head[16] as usize;
    if head[17] != AXIS_ORDER_X1_SLOWEST {
        return Err(Error::Format(format!("unsupported axis-order tag {}", head[17])));
    }
    let grid = GridSpec { half_width, n };
    let mut bytes = vec![0u8; ncomp * grid.len() * 8];
    r.read_exact(&mut bytes)?;
    let comps = bytes
        .chunks_exact(grid.len() * 8)
        .map(|c| c.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect())
        .collect();
    Ok((grid, comps))
}
