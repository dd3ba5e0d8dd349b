//! Real-to-complex 3D FFT on the periodic extension of a [`GridSpec`].
//!
//! A spectrum is stored as `n * n * (n/2 + 1)` complex coefficients with
//! index `(k1 * n + k2) * m + k3`, `m = n/2 + 1`: full axes for `x1` and
//! `x2`, the non-negative half for `x3`. The forward transform is
//! unnormalised; [`Spectral::inverse`] divides by `n^3`.

use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

use crate::grid::GridSpec;

pub type Spectrum = Vec<Complex64>;

/// Runs `f(index, slab)` over consecutive slabs of `size` elements, in
/// parallel with the `parallel` feature.
fn for_each_slab<T: Send>(data: &mut [T], size: usize, f: impl Fn(usize, &mut [T]) + Sync + Send) {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        data.par_chunks_exact_mut(size).enumerate().for_each(|(i, s)| f(i, s));
    }
    #[cfg(not(feature = "parallel"))]
    data.chunks_exact_mut(size).enumerate().for_each(|(i, s)| f(i, s));
}

pub struct Spectral {
    grid: GridSpec,
    n: usize,
    m: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    xi: Vec<f64>,
}

/// Wavevector of one mode; `nyquist[j]` marks the unpaired `k = n/2` mode.
#[derive(Clone, Copy, Debug)]
pub struct Mode {
    pub xi: [f64; 3],
    pub nyquist: [bool; 3],
    /// `|k_j| <= n/3` on every axis.
    pub resolved: bool,
}

impl Mode {
    pub fn norm_sq(&self) -> f64 {
        self.xi.iter().map(|v| v * v).sum()
    }

    /// Symbol of `d/dx_j`, zero on the Nyquist plane of axis `j`.
    pub fn ik(&self, j: usize) -> Complex64 {
        if self.nyquist[j] {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, self.xi[j])
        }
    }
}

impl Spectral {
    pub fn new(grid: GridSpec) -> Self {
        let n = grid.n;
        let mut rp = RealFftPlanner::<f64>::new();
        let mut cp = FftPlanner::<f64>::new();
        let dk = std::f64::consts::PI / grid.half_width;
        let xi = (0..n)
            .map(|k| if k <= n / 2 { k as f64 * dk } else { (k as f64 - n as f64) * dk })
            .collect();
        Self {
            grid,
            n,
            m: n / 2 + 1,
            r2c: rp.plan_fft_forward(n),
            c2r: rp.plan_fft_inverse(n),
            fwd: cp.plan_fft_forward(n),
            inv: cp.plan_fft_inverse(n),
            xi,
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn spectrum_len(&self) -> usize {
        self.n * self.n * self.m
    }

    pub fn zeros(&self) -> Spectrum {
        vec![Complex64::new(0.0, 0.0); self.spectrum_len()]
    }

    /// Signed wavenumber for full-axis index `k`.
    pub fn wavenumber(&self, k: usize) -> f64 {
        self.xi[k]
    }

    pub fn mode(&self, idx: usize) -> Mode {
        let (n, m) = (self.n, self.m);
        let k3 = idx % m;
        let k2 = (idx / m) % n;
        let k1 = idx / (m * n);
        let cut = n / 3;
        let signed = |k: usize| if k <= n / 2 { k } else { n - k };
        Mode {
            xi: [self.xi[k1], self.xi[k2], self.xi[k3]],
            nyquist: [k1 == n / 2, k2 == n / 2, k3 == n / 2],
            resolved: signed(k1) <= cut && signed(k2) <= cut && k3 <= cut,
        }
    }

    /// Multiplicity of a half-spectrum coefficient in the full spectrum.
    pub fn hermitian_weight(&self, idx: usize) -> f64 {
        let k3 = idx % self.m;
        if k3 == 0 || k3 == self.n / 2 {
            1.0
        } else {
            2.0
        }
    }

    pub fn forward(&self, values: &[f64]) -> Spectrum {
        let (n, m) = (self.n, self.m);
        assert_eq!(values.len(), n * n * n, "field does not match grid");
        let mut out = self.zeros();
        for_each_slab(&mut out, n * m, |k1, slab| {
            let mut line = vec![0.0; n];
            let mut scratch = self.r2c.make_scratch_vec();
            let src = &values[k1 * n * n..(k1 + 1) * n * n];
            for (row, dst) in src.chunks_exact(n).zip(slab.chunks_exact_mut(m)) {
                line.copy_from_slice(row);
                self.r2c.process_with_scratch(&mut line, dst, &mut scratch).expect("r2c sizes");
            }
        });
        self.complex_axes(&mut out, &self.fwd);
        out
    }

    pub fn inverse(&self, spec: &[Complex64]) -> Vec<f64> {
        let (n, m) = (self.n, self.m);
        assert_eq!(spec.len(), self.spectrum_len(), "spectrum does not match grid");
        let mut work = spec.to_vec();
        self.complex_axes(&mut work, &self.inv);
        let mut out = vec![0.0; n * n * n];
        let scale = 1.0 / (n * n * n) as f64;
        let work = &work;
        for_each_slab(&mut out, n * n, |k1, slab| {
            let mut scratch = self.c2r.make_scratch_vec();
            let mut line = vec![Complex64::new(0.0, 0.0); m];
            let src = &work[k1 * n * m..(k1 + 1) * n * m];
            for (row, dst) in src.chunks_exact(m).zip(slab.chunks_exact_mut(n)) {
                line.copy_from_slice(row);
                // The k3 = 0 and Nyquist bins of a real field are real; drop rounding residue.
                line[0].im = 0.0;
                line[m - 1].im = 0.0;
                self.c2r.process_with_scratch(&mut line, dst, &mut scratch).expect("c2r sizes");
                for v in dst.iter_mut() {
                    *v *= scale;
                }
            }
        });
        out
    }

    /// Transforms along `x2` then `x1`.
    fn complex_axes(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let (n, m) = (self.n, self.m);
        let transform = |lines: &mut [Complex64]| {
            let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
            plan.process_with_scratch(lines, &mut scratch);
        };
        // x2: for each k1, the slab [k2][k3] is transposed into m lines.
        for_each_slab(data, n * m, |_, slab| {
            let mut lines = vec![Complex64::new(0.0, 0.0); n * m];
            for k2 in 0..n {
                for k3 in 0..m {
                    lines[k3 * n + k2] = slab[k2 * m + k3];
                }
            }
            transform(&mut lines);
            for k2 in 0..n {
                for k3 in 0..m {
                    slab[k2 * m + k3] = lines[k3 * n + k2];
                }
            }
        });
        // x1: gather the [k3][k1] plane of every k2, transform, scatter back.
        let mut planes = vec![Complex64::new(0.0, 0.0); n * n * m];
        for k1 in 0..n {
            for k2 in 0..n {
                let base = (k1 * n + k2) * m;
                for k3 in 0..m {
                    planes[(k2 * m + k3) * n + k1] = data[base + k3];
                }
            }
        }
        for_each_slab(&mut planes, n * m, |_, plane| transform(plane));
        for k1 in 0..n {
            for k2 in 0..n {
                let base = (k1 * n + k2) * m;
                for k3 in 0..m {
                    data[base + k3] = planes[(k2 * m + k3) * n + k1];
                }
            }
        }
    }

    /// Multiplies every coefficient by `symbol(mode)`.
    pub fn apply(&self, spec: &mut [Complex64], symbol: impl Fn(&Mode) -> Complex64) {
        for (idx, c) in spec.iter_mut().enumerate() {
            *c *= symbol(&self.mode(idx));
        }
    }

    /// Multiplies every coefficient by a real symbol.
    pub fn apply_real(&self, spec: &mut [Complex64], symbol: impl Fn(&Mode) -> f64) {
        for (idx, c) in spec.iter_mut().enumerate() {
            *c *= symbol(&self.mode(idx));
        }
    }

    /// Spectrum of `d/dx_j`.
    pub fn derivative(&self, spec: &[Complex64], j: usize) -> Spectrum {
        let mut out = spec.to_vec();
        self.apply(&mut out, |md| md.ik(j));
        out
    }

    /// Zeroes every mode outside the two-thirds band.
    pub fn dealias(&self, spec: &mut [Complex64]) {
        for (idx, c) in spec.iter_mut().enumerate() {
            if !self.mode(idx).resolved {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// Continuous `sum |f|^2 * weight(xi) * h^3` via Parseval.
    pub fn weighted_energy(&self, spec: &[Complex64], weight: impl Fn(&Mode) -> f64) -> f64 {
        let total: f64 = spec
            .iter()
            .enumerate()
            .map(|(idx, c)| c.norm_sqr() * self.hermitian_weight(idx) * weight(&self.mode(idx)))
            .sum();
        total * self.grid.cell_volume() / self.grid.len() as f64
    }

    /// Trigonometric interpolant at an arbitrary point. Nyquist modes are
    /// dropped; the optional axis selects a spectral derivative.
    pub fn interpolate(&self, spec: &[Complex64], x: [f64; 3], deriv: Option<usize>) -> f64 {
        let (n, m) = (self.n, self.m);
        let x0 = -self.grid.half_width + 0.5 * self.grid.spacing();
        let phase = |a: usize, len: usize| -> Vec<Complex64> {
            (0..len)
                .map(|k| {
                    if k == n / 2 {
                        Complex64::new(0.0, 0.0)
                    } else {
                        let mut p = Complex64::from_polar(1.0, self.xi[k] * (x[a] - x0));
                        if deriv == Some(a) {
                            p *= Complex64::new(0.0, self.xi[k]);
                        }
                        p
                    }
                })
                .collect()
        };
        let (p1, p2, p3) = (phase(0, n), phase(1, n), phase(2, m));
        let mut total = 0.0;
        for k1 in 0..n {
            let mut acc1 = Complex64::new(0.0, 0.0);
            for k2 in 0..n {
                let row = &spec[(k1 * n + k2) * m..(k1 * n + k2 + 1) * m];
                let mut acc = row[0] * p3[0];
                for k3 in 1..m - 1 {
                    acc += 2.0 * row[k3] * p3[k3];
                }
                acc1 += acc * p2[k2];
            }
            total += (acc1 * p1[k1]).re;
        }
        total / (n * n * n) as f64
    }
}
