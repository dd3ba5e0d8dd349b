//! Spatial and space-time convolutions on the periodic truncation, plus
//! direct-quadrature references on the full box.

use num_complex::Complex64;

use crate::data_fields::Point3;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField, TimeSlab};
use crate::kernels::{gaussian, KernelSpec};
use crate::quadrature::{integrate_box, Rule};
use crate::spectral::{Mode, Spectral, Spectrum};

/// Relative two-level disagreement above which a slab is too coarse.
pub const SLAB_TOLERANCE: f64 = 1e-3;

/// Symbol of `G_nu(t)`: `exp(-nu t |xi|^2)`.
pub fn heat_symbol(md: &Mode, nu: f64, t: f64) -> f64 {
    (-nu * t * md.norm_sq()).exp()
}

/// Symbol of `d_i Laplace^-1`, which is convolution with `dK/dx_i`.
pub fn leray_symbol(md: &Mode, i: usize) -> Complex64 {
    let k2 = md.norm_sq();
    if k2 == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        -md.ik(i) / k2
    }
}

/// Convolution engine bound to one grid.
pub struct Convolver {
    pub spectral: Spectral,
}

impl Convolver {
    pub fn new(grid: GridSpec) -> Self {
        Self { spectral: Spectral::new(grid) }
    }

    pub fn grid(&self) -> GridSpec {
        self.spectral.grid()
    }

    fn check(&self, f: &ScalarField) {
        assert_eq!(f.grid, self.grid(), "field grid does not match engine grid");
    }

    fn filtered(&self, f: &ScalarField, symbol: impl Fn(&Mode) -> Complex64) -> ScalarField {
        self.check(f);
        let mut s = self.spectral.forward(&f.values);
        self.spectral.apply(&mut s, symbol);
        ScalarField { grid: f.grid, values: self.spectral.inverse(&s) }
    }

    /// `f * G_nu(t)`.
    pub fn heat(&self, f: &ScalarField, nu: f64, t: f64) -> ScalarField {
        if t == 0.0 {
            return f.clone();
        }
        self.filtered(f, |md| Complex64::new(heat_symbol(md, nu, t), 0.0))
    }

    /// `f * dG_nu/dx_j (t)`.
    pub fn heat_grad(&self, f: &ScalarField, nu: f64, t: f64, j: usize) -> Result<ScalarField> {
        if t == 0.0 {
            return Err(Error::ZeroTime);
        }
        Ok(self.filtered(f, |md| md.ik(j) * heat_symbol(md, nu, t)))
    }

    /// `f *_sp G_eps` at unit kernel time.
    pub fn mollify(&self, f: &ScalarField, eps: f64) -> ScalarField {
        if eps == 0.0 {
            return f.clone();
        }
        self.heat(f, eps, 1.0)
    }

    /// `dK/dx_i *_sp source`, the mean of the source projected out.
    pub fn leray_grad(&self, source: &ScalarField, i: usize) -> ScalarField {
        self.filtered(source, |md| leray_symbol(md, i))
    }

    /// Spectral derivative `d f / dx_j`.
    pub fn derivative(&self, f: &ScalarField, j: usize) -> ScalarField {
        self.filtered(f, |md| md.ik(j))
    }

    /// `-nu Laplace f`.
    pub fn negative_viscous_laplacian(&self, f: &ScalarField, nu: f64) -> ScalarField {
        self.filtered(f, |md| Complex64::new(nu * md.norm_sq(), 0.0))
    }

    /// Duhamel integral `int_0^t F(s) * G_nu(t - s) ds` with `t` the last
    /// slab time, optionally followed by `d/dx_j`.
    ///
    /// `F` is taken piecewise linear in time and each interval is integrated
    /// exactly against the heat symbol. The same integral over every other
    /// node is the Richardson partner; a relative disagreement above
    /// [`SLAB_TOLERANCE`] is [`Error::InsufficientSlab`].
    pub fn spacetime(
        &self,
        slab: &TimeSlab<ScalarField>,
        nu: f64,
        t: f64,
        deriv: Option<usize>,
    ) -> Result<ScalarField> {
        if (slab.final_time() - t).abs() > 1e-12 * t.max(1.0) {
            return Err(Error::InvalidParams(format!(
                "slab ends at {} but t = {t}",
                slab.final_time()
            )));
        }
        let spectra: Vec<Spectrum> = slab
            .fields
            .iter()
            .map(|f| {
                self.check(f);
                self.spectral.forward(&f.values)
            })
            .collect();
        let fine = self.duhamel_final(&spectra, &slab.times, nu);
        if slab.len() >= 3 && slab.len() % 2 == 1 {
            let idx: Vec<usize> = (0..slab.len()).step_by(2).collect();
            let coarse_spectra: Vec<Spectrum> = idx.iter().map(|&k| spectra[k].clone()).collect();
            let coarse_times: Vec<f64> = idx.iter().map(|&k| slab.times[k]).collect();
            let coarse = self.duhamel_final(&coarse_spectra, &coarse_times, nu);
            let scale = self.spectral.weighted_energy(&fine, |_| 1.0).sqrt();
            let diff: Spectrum = fine.iter().zip(&coarse).map(|(a, b)| a - b).collect();
            let err = self.spectral.weighted_energy(&diff, |_| 1.0).sqrt();
            // Fine nodes have half the step, so the fine error is ~1/4 of this.
            let disagreement = if scale > 0.0 { err / scale / 3.0 } else { 0.0 };
            if disagreement > SLAB_TOLERANCE {
                return Err(Error::InsufficientSlab { disagreement });
            }
        }
        let mut out = fine;
        if let Some(j) = deriv {
            self.spectral.apply(&mut out, |md| md.ik(j));
        }
        Ok(ScalarField { grid: self.grid(), values: self.spectral.inverse(&out) })
    }

    fn duhamel_final(&self, spectra: &[Spectrum], times: &[f64], nu: f64) -> Spectrum {
        let mut stepper = Duhamel::new(&self.spectral, nu);
        let mut last = self.spectral.zeros();
        for (s, &t) in spectra.iter().zip(times) {
            last = stepper.push(s, t);
        }
        last
    }
}

/// `phi1(z) = (1 - e^-z)/z` and `psi(z) = (1 - e^-z (1 + z))/z^2`.
pub fn exponential_weights(z: f64) -> (f64, f64) {
    if z < 0.1 {
        // Alternating series; 12 terms are exact to rounding for z < 0.1.
        let (mut phi1, mut psi) = (0.0, 0.0);
        let mut term = 1.0; // (-z)^k / k!
        for k in 0..12 {
            phi1 += term / (k + 1) as f64;
            psi += term / (k + 2) as f64;
            term *= -z / (k + 1) as f64;
        }
        (phi1, psi)
    } else {
        let e = (-z).exp();
        ((1.0 - e) / z, (1.0 - e * (1.0 + z)) / (z * z))
    }
}

/// Streaming exact-exponential Duhamel integrator for piecewise-linear
/// forcing: push the forcing spectrum at each ascending node, receive the
/// integral up to that node.
pub struct Duhamel<'a> {
    spectral: &'a Spectral,
    nu: f64,
    state: Option<(f64, Spectrum, Spectrum)>,
    norms: Vec<f64>,
}

impl<'a> Duhamel<'a> {
    pub fn new(spectral: &'a Spectral, nu: f64) -> Self {
        let norms = (0..spectral.spectrum_len()).map(|i| spectral.mode(i).norm_sq()).collect();
        Self { spectral, nu, state: None, norms }
    }

    pub fn push(&mut self, forcing: &[Complex64], t: f64) -> Spectrum {
        let out = match self.state.take() {
            None => self.spectral.zeros(),
            Some((t_prev, u_prev, f_prev)) => {
                let dt = t - t_prev;
                assert!(dt > 0.0, "Duhamel nodes must ascend");
                u_prev
                    .iter()
                    .zip(&f_prev)
                    .zip(forcing)
                    .zip(&self.norms)
                    .map(|(((u, fp), fc), k2)| {
                        let z = self.nu * k2 * dt;
                        let (phi1, psi) = exponential_weights(z);
                        u * (-z).exp() + dt * (fp * psi + fc * (phi1 - psi))
                    })
                    .collect()
            }
        };
        self.state = Some((t, out.clone(), forcing.to_vec()));
        out
    }
}

/// `n_intervals` intervals on `[0, t]` whose widths grow geometrically by
/// `ratio` away from `0`.
pub fn graded_times(t: f64, n_intervals: usize, ratio: f64) -> Vec<f64> {
    let total: f64 = (0..n_intervals).map(|k| ratio.powi(k as i32)).sum();
    let mut times = Vec::with_capacity(n_intervals + 1);
    let mut acc = 0.0;
    times.push(0.0);
    for k in 0..n_intervals {
        acc += ratio.powi(k as i32);
        times.push(if k + 1 == n_intervals { t } else { t * acc / total });
    }
    times
}

pub fn heat_convolve(f: &ScalarField, nu: f64, t: f64) -> ScalarField {
    Convolver::new(f.grid).heat(f, nu, t)
}

pub fn heat_grad_convolve(f: &ScalarField, nu: f64, t: f64, j: usize) -> Result<ScalarField> {
    Convolver::new(f.grid).heat_grad(f, nu, t, j)
}

pub fn mollify(f: &ScalarField, eps: f64) -> ScalarField {
    Convolver::new(f.grid).mollify(f, eps)
}

pub fn leray_grad_convolve(source: &ScalarField, i: usize) -> ScalarField {
    Convolver::new(source.grid).leray_grad(source, i)
}

pub fn spacetime_convolve(
    slab: &TimeSlab<ScalarField>,
    nu: f64,
    t: f64,
    deriv: Option<usize>,
) -> Result<ScalarField> {
    let grid = slab.fields[0].grid;
    Convolver::new(grid).spacetime(slab, nu, t, deriv)
}

/// Direct free-space reference: `int f(x - y) G_nu(t, y) dy` by tensor
/// Gauss–Legendre over `|y_j| <= 10 sqrt(nu t)`.
pub fn direct_heat_convolve(f: impl Fn(Point3) -> f64, nu: f64, t: f64, x: Point3) -> f64 {
    let spec = KernelSpec { nu, eps: 0.0, t };
    let half = 10.0 * spec.diffusion().sqrt();
    let r = Rule::composite(-half, half, 8, 10);
    integrate_box(
        |y| f(Point3::new(x.x1 - y.x1, x.x2 - y.x2, x.x3 - y.x3)) * gaussian(&spec, y),
        [&r, &r, &r],
    )
}

/// Direct reference for `f` supported in `[-a, a]^3`: `int f(z) G_nu(t, x - z) dz`
/// by tensor Gauss–Legendre over the support.
pub fn direct_heat_convolve_compact(
    f: impl Fn(Point3) -> f64,
    a: f64,
    nu: f64,
    t: f64,
    x: Point3,
    rule: &Rule,
) -> f64 {
    let spec = KernelSpec { nu, eps: 0.0, t };
    debug_assert!(rule.nodes.iter().all(|z| z.abs() <= a));
    integrate_box(
        |z| f(z) * gaussian(&spec, Point3::new(x.x1 - z.x1, x.x2 - z.x2, x.x3 - z.x3)),
        [rule, rule, rule],
    )
}

/// Direct reference on sampled data: midpoint sum over the box (no periodic
/// images) of `f(y) G_nu(t, x - y) h^3`.
pub fn direct_heat_convolve_sampled(f: &ScalarField, nu: f64, t: f64, x: Point3) -> f64 {
    let spec = KernelSpec { nu, eps: 0.0, t };
    let g = f.grid;
    let vol = g.cell_volume();
    f.values
        .iter()
        .enumerate()
        .map(|(idx, v)| {
            let y = g.point(idx);
            v * gaussian(&spec, Point3::new(x.x1 - y.x1, x.x2 - y.x2, x.x3 - y.x3))
        })
        .sum::<f64>()
        * vol
}
