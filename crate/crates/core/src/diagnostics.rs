//! Regularity, singularity and residual estimators, and the report type.

use std::collections::BTreeMap;
use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_fields::{certify_decay, fit_slope, DecayCertificate, Jacobian, Point3};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField, TimeSlab, VectorField};
use crate::holder::{PairSet, Region, DEFAULT_PAIRS};
use crate::iteration::{LimitRow, NormRecord};
use crate::spectral::{Spectral, Spectrum};

/// Log-log slope below which a profile counts as growing as `r -> 0`.
pub const GROWTH_SLOPE: f64 = -0.05;

/// Sampled `C^delta` seminorm over `region` with the default seeded pair
/// budget.
pub fn holder_seminorm(field: &ScalarField, delta: f64, region: &Region) -> f64 {
    holder_seminorm_seeded(field, delta, region, 0)
}

pub fn holder_seminorm_seeded(field: &ScalarField, delta: f64, region: &Region, seed: u64) -> f64 {
    PairSet::generate(field.grid, region, DEFAULT_PAIRS, DEFAULT_PAIRS, seed).seminorm(&field.values, delta)
}

/// Local Hölder exponent at the plane `x1 = 0`.
///
/// `M(g)` is the largest difference over straddling pairs with a gap of
/// `g` cells, restricted to `|x2|, |x3| <= half`. Cell-centred sampling
/// adds a constant offset `|f(h/2) - f(0)|` to `M`, so the exponent is the
/// log-log slope of the dyadic increments `M(2g) - M(g)` against `g h`.
pub fn holder_exponent(field: &ScalarField, levels: u32, half: f64) -> f64 {
    let g = field.grid;
    let n = g.n;
    let h = g.spacing();
    let inner: Vec<usize> = (0..n).filter(|&i| g.coord(i).abs() <= half).collect();
    let mut sup_at_gap = Vec::new();
    for m in 0..=levels {
        let gap = 1usize << m;
        if gap >= n / 2 {
            break;
        }
        let mut worst = 0.0f64;
        for a in 0..gap {
            let (i1, j1) = (n / 2 - 1 - a, n / 2 - 1 - a + gap);
            for &i2 in &inner {
                for &i3 in &inner {
                    worst = worst.max((field.at(i1, i2, i3) - field.at(j1, i2, i3)).abs());
                }
            }
        }
        sup_at_gap.push((gap as f64 * h, worst));
    }
    let mut logd = Vec::new();
    let mut logm = Vec::new();
    for w in sup_at_gap.windows(2) {
        let inc = w[1].1 - w[0].1;
        if inc > 0.0 {
            logd.push(w[0].0.ln());
            logm.push(inc.ln());
        }
    }
    if logd.len() < 2 {
        return f64::NAN;
    }
    fit_slope(&logd, &logm)
}

/// Largest nearest-neighbour difference quotient of a field.
pub fn gradient_sup_fd(f: &ScalarField) -> f64 {
    let g = f.grid;
    let n = g.n;
    let h = g.spacing();
    let mut worst = 0.0f64;
    for i1 in 0..n {
        for i2 in 0..n {
            for i3 in 0..n {
                let v = f.at(i1, i2, i3);
                if i1 + 1 < n {
                    worst = worst.max((f.at(i1 + 1, i2, i3) - v).abs());
                }
                if i2 + 1 < n {
                    worst = worst.max((f.at(i1, i2 + 1, i3) - v).abs());
                }
                if i3 + 1 < n {
                    worst = worst.max((f.at(i1, i2, i3 + 1) - v).abs());
                }
            }
        }
    }
    worst / h
}

/// Spatial Lipschitz constant of a slab: the largest finite-difference
/// gradient over its nodes.
pub fn lipschitz_estimate(slab: &TimeSlab<ScalarField>) -> Result<f64> {
    if slab.len() < 2 {
        return Err(Error::InsufficientSamples("Lipschitz estimate needs at least 2 time nodes".into()));
    }
    Ok(slab.fields.iter().map(gradient_sup_fd).fold(0.0, f64::max))
}

fn spectral_derivative(sp: &Spectral, s: &[Complex64], j: usize) -> Vec<f64> {
    sp.inverse(&sp.derivative(s, j))
}

/// Spectral curl.
pub fn vorticity(v: &VectorField) -> VectorField {
    let sp = Spectral::new(v.grid());
    let s: Vec<Spectrum> = v.components.iter().map(|c| sp.forward(&c.values)).collect();
    // Component along the remaining axis: d_b v_c - d_c v_b.
    let curl = |b: usize, c: usize| -> ScalarField {
        let p = spectral_derivative(&sp, &s[c], b);
        let q = spectral_derivative(&sp, &s[b], c);
        ScalarField { grid: v.grid(), values: p.iter().zip(&q).map(|(x, y)| x - y).collect() }
    };
    VectorField::new([curl(1, 2), curl(2, 0), curl(0, 1)]).expect("shared grid")
}

/// Spectral Jacobian `J[i][j] = d v_i / d x_j` on the grid.
pub fn jacobian_fields(v: &VectorField) -> [[Vec<f64>; 3]; 3] {
    let sp = Spectral::new(v.grid());
    std::array::from_fn(|i| {
        let s = sp.forward(&v.components[i].values);
        std::array::from_fn(|j| spectral_derivative(&sp, &s, j))
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trend {
    Bounded,
    Growing,
}

pub fn classify(slope: f64) -> Trend {
    if slope < GROWTH_SLOPE {
        Trend::Growing
    } else {
        Trend::Bounded
    }
}

/// One shell of a slab scan: suprema over `r_inner <= |x1| < r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlabRow {
    pub r: f64,
    pub sup_omega1: f64,
    pub sup_grad_v2: f64,
    pub sup_grad_v3: f64,
    pub sup_v1: f64,
}

/// Log-log slopes of the four columns against `r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlabSlopes {
    pub omega1: f64,
    pub grad_v2: f64,
    pub grad_v3: f64,
    pub v1: f64,
}

impl SlabSlopes {
    fn of(rows: &[SlabRow]) -> Self {
        let lr: Vec<f64> = rows.iter().map(|r| r.r.ln()).collect();
        let col = |f: &dyn Fn(&SlabRow) -> f64| {
            let ys: Vec<f64> = rows.iter().map(|r| f(r).max(1e-300).ln()).collect();
            fit_slope(&lr, &ys)
        };
        Self {
            omega1: col(&|r| r.sup_omega1),
            grad_v2: col(&|r| r.sup_grad_v2),
            grad_v3: col(&|r| r.sup_grad_v3),
            v1: col(&|r| r.sup_v1),
        }
    }

    pub fn trends(&self) -> SlabTrends {
        SlabTrends {
            omega1: classify(self.omega1),
            grad_v2: classify(self.grad_v2),
            grad_v3: classify(self.grad_v3),
            v1: classify(self.v1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlabTrends {
    pub omega1: Trend,
    pub grad_v2: Trend,
    pub grad_v3: Trend,
    pub v1: Trend,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlabPositionProfile {
    pub x2: f64,
    pub x3: f64,
    pub slopes: SlabSlopes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlabProfile {
    /// Suprema over every sampled position.
    pub rows: Vec<SlabRow>,
    pub slopes: SlabSlopes,
    pub trends: SlabTrends,
    /// Per `(x2, x3)` slopes; empty for grid scans.
    pub positions: Vec<SlabPositionProfile>,
}

impl SlabProfile {
    fn from_rows(rows: Vec<SlabRow>, positions: Vec<SlabPositionProfile>) -> Self {
        let slopes = SlabSlopes::of(&rows);
        Self { trends: slopes.trends(), rows, slopes, positions }
    }

    /// Every position shows the same trend as the aggregate in each column.
    pub fn uniform(&self) -> bool {
        self.positions.iter().all(|p| p.slopes.trends() == self.trends)
    }
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.len() < 2 || radii.windows(2).any(|w| w[1] >= w[0]) || radii.iter().any(|&r| r <= 0.0) {
        return Err(Error::InvalidParams("radii must be positive, descending, at least 2".into()));
    }
    Ok(())
}

fn shell(radii: &[f64], k: usize) -> (f64, f64) {
    let r = radii[k];
    (radii.get(k + 1).copied().unwrap_or(0.5 * r), r)
}

fn row_from_jacobian(r: f64, v1: f64, j: &Jacobian, row: &mut SlabRow) {
    row.r = r;
    row.sup_omega1 = row.sup_omega1.max((j[2][1] - j[1][2]).abs());
    let norm = |i: usize| (0..3).map(|c| j[i][c] * j[i][c]).sum::<f64>().sqrt();
    row.sup_grad_v2 = row.sup_grad_v2.max(norm(1));
    row.sup_grad_v3 = row.sup_grad_v3.max(norm(2));
    row.sup_v1 = row.sup_v1.max(v1.abs());
}

fn empty_row(r: f64) -> SlabRow {
    SlabRow { r, sup_omega1: 0.0, sup_grad_v2: 0.0, sup_grad_v3: 0.0, sup_v1: 0.0 }
}

/// Slab scan of a grid field with spectral derivatives. Row `k` covers the
/// shell between `radii[k + 1]` (or `radii[k] / 2`) and `radii[k]`.
pub fn singular_slab_scan(v: &VectorField, radii: &[f64]) -> Result<SlabProfile> {
    check_radii(radii)?;
    let g = v.grid();
    let jac = jacobian_fields(v);
    let mut rows = Vec::with_capacity(radii.len());
    for k in 0..radii.len() {
        let (lo, hi) = shell(radii, k);
        let mut row = empty_row(hi);
        let mut count = 0;
        for i1 in 0..g.n {
            let a = g.coord(i1).abs();
            if a < lo || a >= hi {
                continue;
            }
            for p in g.index(i1, 0, 0)..g.index(i1, 0, 0) + g.n * g.n {
                let j: Jacobian = std::array::from_fn(|i| std::array::from_fn(|c| jac[i][c][p]));
                row_from_jacobian(hi, v.components[0].values[p], &j, &mut row);
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::InsufficientSamples(format!("no grid samples in shell [{lo}, {hi})")));
        }
        rows.push(row);
    }
    Ok(SlabProfile::from_rows(rows, vec![]))
}

/// Slab scan of a closed-form field: `samples` geometric `x1` values per
/// shell and sign at each `(x2, x3)` position.
pub fn singular_slab_scan_fn(
    eval: impl Fn(Point3) -> Result<([f64; 3], Jacobian)>,
    radii: &[f64],
    positions: &[(f64, f64)],
    samples: usize,
) -> Result<SlabProfile> {
    check_radii(radii)?;
    if positions.is_empty() || samples < 2 {
        return Err(Error::InsufficientSamples("need positions and at least 2 samples per shell".into()));
    }
    let mut per_pos = Vec::with_capacity(positions.len());
    let mut total: Vec<SlabRow> = radii.iter().map(|&r| empty_row(r)).collect();
    for &(x2, x3) in positions {
        let mut rows = Vec::with_capacity(radii.len());
        for k in 0..radii.len() {
            let (lo, hi) = shell(radii, k);
            let mut row = empty_row(hi);
            for s in 0..samples {
                let a = lo * (hi / lo).powf(s as f64 / samples as f64);
                for x1 in [a, -a] {
                    let (val, j) = eval(Point3::new(x1, x2, x3))?;
                    row_from_jacobian(hi, val[0], &j, &mut row);
                    row_from_jacobian(hi, val[0], &j, &mut total[k]);
                }
            }
            rows.push(row);
        }
        per_pos.push(SlabPositionProfile { x2, x3, slopes: SlabSlopes::of(&rows) });
    }
    Ok(SlabProfile::from_rows(total, per_pos))
}

/// Trilinear interpolation of cell-centred samples, clamped at the box.
pub fn trilinear(f: &ScalarField, x: Point3) -> f64 {
    let g = f.grid;
    let n = g.n;
    let h = g.spacing();
    let locate = |c: f64| {
        let u = ((c + g.half_width) / h - 0.5).clamp(0.0, (n - 1) as f64);
        let i = (u.floor() as usize).min(n - 2);
        (i, u - i as f64)
    };
    let (i, a) = locate(x.x1);
    let (j, b) = locate(x.x2);
    let (k, c) = locate(x.x3);
    let mut s = 0.0;
    for (di, wa) in [(0, 1.0 - a), (1, a)] {
        for (dj, wb) in [(0, 1.0 - b), (1, b)] {
            for (dk, wc) in [(0, 1.0 - c), (1, c)] {
                s += wa * wb * wc * f.at(i + di, j + dj, k + dk);
            }
        }
    }
    s
}

/// Radii at which a grid field's decay is fitted: a quarter, half and three
/// quarters of the half-width.
pub fn decay_radii(grid: &GridSpec) -> [f64; 3] {
    let r = grid.half_width;
    [0.25 * r, 0.5 * r, 0.75 * r]
}

/// Decay certificate of order `2m` for each component of a grid field.
pub fn grid_decay_certificates(v: &VectorField, m: u32) -> Result<Vec<DecayCertificate>> {
    let radii = decay_radii(&v.grid());
    v.components
        .iter()
        .filter(|c| c.sup() > 0.0)
        .map(|c| certify_decay(|x| trilinear(c, x), 2 * m, m.min(2), &radii))
        .collect()
}

/// Resamples `v` onto the compactified grid `y_j = arctan x_j` and returns
/// the largest finite-difference `y`-derivative of order at most `m`.
pub fn compactify_check(v: &VectorField, m: u32) -> Result<f64> {
    if m > 2 {
        return Err(Error::InvalidParams("compactified check supports m <= 2".into()));
    }
    if v.sup() == 0.0 {
        return Ok(0.0);
    }
    for cert in grid_decay_certificates(v, m)? {
        if !cert.holds() {
            return Err(Error::CertificateMissing(format!(
                "fitted decay {:.3} below order {}",
                cert.fitted_exponent, cert.l
            )));
        }
    }
    Ok(compactified_sup(v, m))
}

/// The compactified sup of [`compactify_check`] without the decay
/// precondition.
pub fn compactified_sup(v: &VectorField, m: u32) -> f64 {
    assert!(m <= 2, "compactified sup supports m <= 2");
    let g = v.grid();
    let n = g.n;
    let ymax = g.half_width.atan();
    let hy = 2.0 * ymax / n as f64;
    let ys: Vec<f64> = (0..n).map(|i| -ymax + (i as f64 + 0.5) * hy).collect();
    let mut worst = 0.0f64;
    for c in &v.components {
        let mut u = Vec::with_capacity(n * n * n);
        for &a in &ys {
            for &b in &ys {
                for &d in &ys {
                    u.push(trilinear(c, Point3::new(a.tan(), b.tan(), d.tan())));
                }
            }
        }
        let at = |i: usize, j: usize, k: usize| u[(i * n + j) * n + k];
        for i in 1..n - 1 {
            for j in 1..n - 1 {
                for k in 1..n - 1 {
                    let f0 = at(i, j, k);
                    worst = worst.max(f0.abs());
                    if m == 0 {
                        continue;
                    }
                    let nb = |ax: usize, s: isize| {
                        let mut idx = [i as isize, j as isize, k as isize];
                        idx[ax] += s;
                        at(idx[0] as usize, idx[1] as usize, idx[2] as usize)
                    };
                    for ax in 0..3 {
                        worst = worst.max(((nb(ax, 1) - nb(ax, -1)) / (2.0 * hy)).abs());
                        if m == 2 {
                            worst = worst.max(((nb(ax, 1) - 2.0 * f0 + nb(ax, -1)) / (hy * hy)).abs());
                        }
                    }
                }
            }
        }
    }
    worst
}

/// How the pressure gradient enters the residual.
pub enum PressureMethod<'a> {
    /// Grid quadrature of the Newton-kernel gradient against the source
    /// with local Taylor subtraction.
    Direct,
    /// Spectral inversion on the periodic box.
    Spectral,
    /// Caller-supplied `grad p`.
    Exact(&'a dyn Fn(Point3) -> [f64; 3]),
}

/// Which Euler system the residual measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeDirection {
    /// `d_t v - (v . grad) v + grad p` with `Laplace p = Q`.
    Reversed,
    /// `d_t v + (v . grad) v + grad p` with `Laplace p = -Q`.
    Forward,
}

pub struct ResidualOptions<'a> {
    pub pressure: PressureMethod<'a>,
    pub direction: TimeDirection,
    /// Interior node of the three-point time stencil; default the last
    /// interior node.
    pub node: Option<usize>,
}

impl Default for ResidualOptions<'_> {
    fn default() -> Self {
        Self { pressure: PressureMethod::Direct, direction: TimeDirection::Reversed, node: None }
    }
}

/// Derivative weights of the quadratic through `(t0, t1, t2)` at `t1`.
fn three_point_weights(t0: f64, t1: f64, t2: f64) -> [f64; 3] {
    let (a, b) = (t1 - t0, t2 - t1);
    [-b / (a * (a + b)), (b - a) / (a * b), a / (b * (a + b))]
}

/// Cutoff radius of the Taylor subtraction in the direct pressure sum.
const SUBTRACTION_RADIUS: f64 = 1.0;

/// Second-order Taylor data of the pressure source at a point.
#[derive(Clone, Copy, Debug)]
pub struct Taylor {
    pub value: f64,
    pub grad: [f64; 3],
    pub hess: [[f64; 3]; 3],
}

/// `grad (K * Q)(x)` by a cell sum over the grid with the quadratic Taylor
/// polynomial of `Q` at `x` subtracted inside a Gaussian cutoff; the
/// subtracted part is added back in closed form.
pub fn direct_pressure_gradient(q: &ScalarField, t: &Taylor, x: Point3) -> [f64; 3] {
    let g = q.grid;
    let rho2 = SUBTRACTION_RADIUS * SUBTRACTION_RADIUS;
    let xs = g.coords();
    let mut acc = [0.0; 3];
    let mut p = 0;
    for &a in &xs {
        for &b in &xs {
            for &c in &xs {
                let s = [a - x.x1, b - x.x2, c - x.x3];
                let r2 = s[0] * s[0] + s[1] * s[1] + s[2] * s[2];
                if r2 > 0.0 {
                    let chi = (-r2 / rho2).exp();
                    let mut poly = t.value;
                    for j in 0..3 {
                        poly += t.grad[j] * s[j];
                        for k in 0..3 {
                            poly += 0.5 * t.hess[j][k] * s[j] * s[k];
                        }
                    }
                    let w = (q.values[p] - chi * poly) / (4.0 * std::f64::consts::PI * r2 * r2.sqrt());
                    // dK/dx_i evaluated at x - y is -s_i / (4 pi |s|^3).
                    for i in 0..3 {
                        acc[i] -= s[i] * w;
                    }
                }
                p += 1;
            }
        }
    }
    let h3 = g.cell_volume();
    // The constant and quadratic terms are odd against the kernel; the
    // linear term gives -d_iQ / 3 * int_0^inf r chi(r) dr = -d_iQ rho^2 / 6.
    std::array::from_fn(|i| acc[i] * h3 - t.grad[i] * rho2 / 6.0)
}

/// Residual `max_probe |d_t v -+ (v . grad) v + grad p|` at one interior
/// time node, with spectral interpolation of `v` and its gradient.
pub fn reversed_euler_residual(slab: &TimeSlab<VectorField>, probes: &[Point3], opts: &ResidualOptions) -> Result<f64> {
    let pts = residual_at_probes(slab, probes, opts)?;
    Ok(pts.iter().map(|r| r.iter().map(|c| c * c).sum::<f64>().sqrt()).fold(0.0, f64::max))
}

/// Residual vectors at each probe.
pub fn residual_at_probes(slab: &TimeSlab<VectorField>, probes: &[Point3], opts: &ResidualOptions) -> Result<Vec<[f64; 3]>> {
    if slab.len() < 3 {
        return Err(Error::InsufficientSamples("residual needs at least 3 time nodes".into()));
    }
    let node = opts.node.unwrap_or(slab.len() - 2);
    if node == 0 || node + 1 >= slab.len() {
        return Err(Error::InvalidParams("residual node must be interior".into()));
    }
    let g = slab.fields[0].grid();
    let sp = Spectral::new(g);
    let specs = |v: &VectorField| -> [Spectrum; 3] { std::array::from_fn(|i| sp.forward(&v.components[i].values)) };
    let s_prev = specs(&slab.fields[node - 1]);
    let s_mid = specs(&slab.fields[node]);
    let s_next = specs(&slab.fields[node + 1]);
    let w = three_point_weights(slab.times[node - 1], slab.times[node], slab.times[node + 1]);

    // Pressure source Q = sum v_{m,j} v_{j,m} on the grid.
    let needs_q = !matches!(opts.pressure, PressureMethod::Exact(_));
    let q_spec = needs_q.then(|| {
        let jac: [[Vec<f64>; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| spectral_derivative(&sp, &s_mid[i], j)));
        let q: Vec<f64> = (0..g.len())
            .map(|p| (0..3).flat_map(|m| (0..3).map(move |j| (m, j))).map(|(m, j)| jac[m][j][p] * jac[j][m][p]).sum())
            .collect();
        (ScalarField { grid: g, values: q.clone() }, sp.forward(&q))
    });
    let dq: Vec<Spectrum> = match (&opts.pressure, &q_spec) {
        (PressureMethod::Direct, Some((_, qs))) => (0..3).map(|j| sp.derivative(qs, j)).collect(),
        _ => vec![],
    };
    // Laplace p = s Q.
    let s = match opts.direction {
        TimeDirection::Reversed => 1.0,
        TimeDirection::Forward => -1.0,
    };
    let transport = match opts.direction {
        TimeDirection::Reversed => -1.0,
        TimeDirection::Forward => 1.0,
    };

    let mut out = Vec::with_capacity(probes.len());
    for &x in probes {
        let xa = x.to_array();
        let v: [f64; 3] = std::array::from_fn(|i| sp.interpolate(&s_mid[i], xa, None));
        let mut r = [0.0; 3];
        for i in 0..3 {
            let dt = w[0] * sp.interpolate(&s_prev[i], xa, None)
                + w[1] * v[i]
                + w[2] * sp.interpolate(&s_next[i], xa, None);
            let adv: f64 = (0..3).map(|j| v[j] * sp.interpolate(&s_mid[i], xa, Some(j))).sum();
            r[i] = dt + transport * adv;
        }
        let grad_p: [f64; 3] = match (&opts.pressure, &q_spec) {
            (PressureMethod::Exact(f), _) => f(x),
            (PressureMethod::Direct, Some((q, qs))) => {
                let taylor = Taylor {
                    value: sp.interpolate(qs, xa, None),
                    grad: std::array::from_fn(|j| sp.interpolate(qs, xa, Some(j))),
                    hess: std::array::from_fn(|j| std::array::from_fn(|k| sp.interpolate(&dq[j], xa, Some(k)))),
                };
                direct_pressure_gradient(q, &taylor, x).map(|c| s * c)
            }
            (PressureMethod::Spectral, Some((_, qs))) => std::array::from_fn(|i| {
                let mut p = qs.clone();
                sp.apply(&mut p, |md| crate::convolution::leray_symbol(md, i));
                s * sp.interpolate(&p, xa, None)
            }),
            _ => unreachable!("pressure source computed for non-exact methods"),
        };
        for i in 0..3 {
            r[i] += grad_p[i];
        }
        out.push(r);
    }
    Ok(out)
}

/// Seeded probes in `|x_i| <= half` with `|x1| >= min_x1`.
pub fn residual_probes(count: usize, half: f64, min_x1: f64, seed: u64) -> Result<Vec<Point3>> {
    if !(min_x1 >= 0.0 && min_x1 < half) {
        return Err(Error::InvalidParams(format!("probe exclusion {min_x1} must lie in [0, {half})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p = Point3::new(rng.gen_range(-half..half), rng.gen_range(-half..half), rng.gen_range(-half..half));
        if p.x1.abs() >= min_x1 {
            out.push(p);
        }
    }
    Ok(out)
}

/// Grid `l1` sums `h^3 sum |d_j v_i|` of the derivative magnitudes, per
/// component.
pub fn derivative_l1(v: &VectorField) -> [f64; 3] {
    let jac = jacobian_fields(v);
    let h3 = v.grid().cell_volume();
    std::array::from_fn(|i| (0..3).map(|j| jac[i][j].iter().map(|x| x.abs()).sum::<f64>()).sum::<f64>() * h3)
}

/// Every measured constant of a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    /// `None` where too few dyadic increments were positive to fit.
    pub holder_exponents: BTreeMap<String, Option<f64>>,
    pub lipschitz_b: f64,
    pub lipschitz_l: f64,
    pub m2: f64,
    pub t_measured: Option<f64>,
    pub contraction: Vec<NormRecord>,
    pub singular_slab_profile: Vec<SlabRow>,
    pub singular_slab_trends: Option<SlabTrends>,
    pub compactified_sup: Vec<f64>,
    pub decay: Vec<DecayCertificate>,
    pub residual_trend: Vec<(usize, f64)>,
    pub limit_table: Vec<LimitRow>,
    pub cauchy_verdict: Option<crate::iteration::CauchyVerdict>,
    pub force_sup: Vec<[f64; 3]>,
    /// Named checks that failed; empty when everything passed.
    pub failures: Vec<String>,
}

impl DiagnosticsReport {
    pub fn write_json(&self, w: impl Write) -> Result<()> {
        serde_json::to_writer_pretty(w, self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn read_json(r: impl std::io::Read) -> Result<Self> {
        serde_json::from_reader(r).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Writes rows as CSV with the given header; each row must have the same
/// number of columns.
pub fn write_csv(mut w: impl Write, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    writeln!(w, "{}", header.join(","))?;
    for r in rows {
        let cells: Vec<String> = r
            .iter()
            .map(|v| if v.fract() == 0.0 && v.abs() < 1e15 { format!("{v}") } else { format!("{v:e}") })
            .collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn slab_rows_csv(rows: &[SlabRow]) -> (Vec<&'static str>, Vec<Vec<f64>>) {
    (
        vec!["r", "sup_omega1", "sup_grad_v2", "sup_grad_v3", "sup_v1"],
        rows.iter().map(|r| vec![r.r, r.sup_omega1, r.sup_grad_v2, r.sup_grad_v3, r.sup_v1]).collect(),
    )
}

pub fn norm_rows_csv(rows: &[NormRecord]) -> (Vec<&'static str>, Vec<Vec<f64>>) {
    (
        vec!["k", "sup_incr", "holder_c1delta_incr", "grid_h2_incr", "diff_norm", "contraction_ratio", "slab_disagreement"],
        rows.iter()
            .map(|r| {
                vec![
                    r.k as f64,
                    r.sup_incr,
                    r.holder_c1delta_incr,
                    r.grid_h2_incr,
                    r.diff_norm,
                    r.contraction_ratio.unwrap_or(f64::NAN),
                    r.slab_disagreement,
                ]
            })
            .collect(),
    )
}

pub fn limit_rows_csv(rows: &[LimitRow]) -> (Vec<&'static str>, Vec<Vec<f64>>) {
    (
        vec!["nu", "eps", "horizon", "nsteps_time", "sup_incr", "holder_c1delta_incr", "grid_h2_incr", "max_ratio", "contracting", "cauchy_diff"],
        rows.iter()
            .map(|r| {
                vec![
                    r.nu,
                    r.eps,
                    r.horizon,
                    r.nsteps_time as f64,
                    r.sup_incr,
                    r.holder_c1delta_incr,
                    r.grid_h2_incr,
                    r.max_ratio.unwrap_or(f64::NAN),
                    if r.contracting { 1.0 } else { 0.0 },
                    r.cauchy_diff.unwrap_or(f64::NAN),
                ]
            })
            .collect(),
    )
}
