//! Heat kernels, the Newtonian kernel gradient and the kernel facts used by
//! the fixed-point estimates.

use serde::{Deserialize, Serialize};

use crate::data_fields::Point3;
use crate::error::{Error, Result};
use crate::quadrature::{integrate_box, Rule};

use std::f64::consts::PI;

/// Viscosity `nu`, mollifier width `eps` and elapsed time `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub nu: f64,
    pub eps: f64,
    pub t: f64,
}

impl KernelSpec {
    pub fn new(nu: f64, eps: f64, t: f64) -> Result<Self> {
        let s = Self { nu, eps, t };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu.is_finite() && self.nu > 0.0) {
            return Err(Error::InvalidParams(format!("nu = {} must be positive", self.nu)));
        }
        if !(self.t.is_finite() && self.t > 0.0) {
            return Err(Error::InvalidParams(format!("t = {} must be positive", self.t)));
        }
        if !(self.eps.is_finite() && self.eps >= 0.0) {
            return Err(Error::InvalidParams(format!("eps = {} must be non-negative", self.eps)));
        }
        Ok(())
    }

    /// `nu * t`, the only combination the heat kernel depends on.
    pub fn diffusion(&self) -> f64 {
        self.nu * self.t
    }
}

/// `(4 pi nu t)^(-3/2) exp(-|y|^2 / (4 nu t))`.
pub fn gaussian(spec: &KernelSpec, y: Point3) -> f64 {
    let d = 4.0 * spec.diffusion();
    let r2 = y.x1 * y.x1 + y.x2 * y.x2 + y.x3 * y.x3;
    (PI * d).powf(-1.5) * (-r2 / d).exp()
}

/// `d/dy_i` of [`gaussian`]: `(-2 y_i / (4 nu t)) G`.
pub fn gaussian_grad(spec: &KernelSpec, y: Point3, i: usize) -> f64 {
    (-2.0 * y.axis(i) / (4.0 * spec.diffusion())) * gaussian(spec, y)
}

/// Newtonian kernel `K(x) = -1 / (4 pi |x|)`, so that `Laplace K = delta`.
pub fn newton_kernel(x: Point3) -> Result<f64> {
    let r = x.norm();
    if r == 0.0 {
        return Err(Error::SingularPoint("Newtonian kernel at the origin".into()));
    }
    Ok(-1.0 / (4.0 * PI * r))
}

/// `d K / dx_i = x_i / (4 pi |x|^3)`.
pub fn newton_kernel_grad(x: Point3, i: usize) -> Result<f64> {
    let r = x.norm();
    if r == 0.0 {
        return Err(Error::SingularPoint("Newtonian kernel gradient at the origin".into()));
    }
    Ok(x.axis(i) / (4.0 * PI * r * r * r))
}

/// Second-moment constant of the antisymmetrised derivative kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub measured_m2: f64,
    pub analytic_m2: f64,
    /// `4 L M2` for the supplied Lipschitz constant `L`.
    pub lipschitz_bound: f64,
}

fn box_rule(half: f64, order: usize) -> Rule {
    Rule::composite(-half, half, 1, order)
}

/// `int_{R^3} (4 y_i^2 / (4 nu sigma)) G_nu(sigma, y) dy` with `sigma = spec.t`.
/// The closed form is `2` for every `nu` and `sigma`.
pub fn weighted_moment_full_space(spec: &KernelSpec, i: usize, order: usize) -> f64 {
    let half = 10.0 * spec.diffusion().sqrt();
    let r = box_rule(half, order);
    let d = 4.0 * spec.diffusion();
    integrate_box(|y| 4.0 * y.axis(i).powi(2) / d * gaussian(spec, y), [&r, &r, &r])
}

/// Half-space version of [`weighted_moment_full_space`] (`y_i >= 0`); equals `1`.
fn weighted_moment_half_space(nu: f64, sigma: f64, i: usize, order: usize) -> f64 {
    let spec = KernelSpec { nu, eps: 0.0, t: sigma };
    let half = 10.0 * spec.diffusion().sqrt();
    let full = box_rule(half, order);
    let positive = Rule::composite(0.0, half, 1, order);
    let mut rules = [&full, &full, &full];
    rules[i] = &positive;
    let d = 4.0 * spec.diffusion();
    integrate_box(|y| 4.0 * y.axis(i).powi(2) / d * gaussian(&spec, y), rules)
}

fn second_moment_at(nu: f64, horizon: f64, i: usize, time_order: usize, space_order: usize) -> f64 {
    // sigma = tau^2 keeps the time integrand smooth at sigma = 0.
    let taus = Rule::composite(0.0, horizon.sqrt(), 1, time_order);
    let integral = taus.integrate(|tau| {
        2.0 * tau * weighted_moment_half_space(nu, tau * tau, i, space_order)
    });
    integral / 4.0
}

/// `M2 = (1/4) int_0^T int_{y_i >= 0} (4 y_i^2 / (4 nu sigma)) G_nu dy dsigma`.
///
/// The inner integral is `1` for every `sigma`, so `M2 = T / 4`.
pub fn second_moment(spec: &KernelSpec, horizon: f64, lipschitz: f64) -> Result<MomentReport> {
    spec.validate()?;
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(Error::InvalidParams(format!("horizon {horizon} must be non-negative")));
    }
    if horizon == 0.0 {
        return Ok(MomentReport { measured_m2: 0.0, analytic_m2: 0.0, lipschitz_bound: 0.0 });
    }
    let coarse = second_moment_at(spec.nu, horizon, 0, 8, 24);
    let fine = second_moment_at(spec.nu, horizon, 0, 16, 48);
    let disagreement = (coarse - fine).abs();
    if disagreement > 1e-4 {
        return Err(Error::QuadratureNonConvergent { disagreement });
    }
    Ok(MomentReport {
        measured_m2: fine,
        analytic_m2: horizon / 4.0,
        lipschitz_bound: 4.0 * lipschitz * fine,
    })
}

/// Probe set of [`degeneracy_scan`]: 21 points across `x_i in [-0.5, 0.5]`
/// (including `0`) at each of 3 x 3 transverse offsets.
pub fn degeneracy_probes(i: usize) -> Vec<Point3> {
    let offsets = [-0.25, 0.0, 0.25];
    let mut out = vec![];
    for k in 0..21 {
        let s = (k as f64 - 10.0) / 20.0;
        for a in offsets {
            for b in offsets {
                let mut q = [0.0; 3];
                let others: Vec<usize> = (0..3).filter(|&j| j != i).collect();
                q[i] = s;
                q[others[0]] = a;
                q[others[1]] = b;
                out.push(Point3::from_array(q));
            }
        }
    }
    out
}

/// Sup over [`degeneracy_probes`] of `|f * dG_nu/dy_i (t, .)|`, one value per
/// viscosity. The integral is taken over `y_i >= 0` against the
/// antisymmetrised integrand `f(x - y) - f(x - y^-)`, which is exactly `0`
/// for constant `f`.
pub fn degeneracy_scan(f: impl Fn(Point3) -> f64, t: f64, i: usize, nus: &[f64]) -> Result<Vec<f64>> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidParams(format!("t = {t} must be positive")));
    }
    if nus.iter().any(|&nu| !(nu > 0.0)) || nus.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParams("viscosities must be positive and descending".into()));
    }
    let probes = degeneracy_probes(i);
    let mut out = Vec::with_capacity(nus.len());
    for &nu in nus {
        let spec = KernelSpec { nu, eps: 0.0, t };
        let half = 10.0 * spec.diffusion().sqrt();
        let along = Rule::composite(0.0, half, 12, 8);
        let across = Rule::composite(-half, half, 5, 8);
        let mut rules = [&across, &across, &across];
        rules[i] = &along;
        let mut sup = 0.0f64;
        for x in &probes {
            let v = integrate_box(
                |y| {
                    let a = f(Point3::new(x.x1 - y.x1, x.x2 - y.x2, x.x3 - y.x3));
                    let ym = y.reflected(i);
                    let b = f(Point3::new(x.x1 - ym.x1, x.x2 - ym.x2, x.x3 - ym.x3));
                    (a - b) * gaussian_grad(&spec, y, i)
                },
                rules,
            );
            sup = sup.max(v.abs());
        }
        out.push(sup);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(nu: f64, t: f64) -> KernelSpec {
        KernelSpec::new(nu, 0.0, t).unwrap()
    }

    #[test]
    fn validation() {
        assert!(KernelSpec::new(0.0, 0.0, 1.0).is_err());
        assert!(KernelSpec::new(1.0, -1.0, 1.0).is_err());
        assert!(KernelSpec::new(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn gaussian_normalisation_and_mass() {
        let s = spec(1.0 / (4.0 * PI), 1.0);
        assert!((gaussian(&s, Point3::ORIGIN) - 1.0).abs() < 1e-15);
        for (nu, t) in [(0.1, 1.0), (1e-3, 0.3), (2.0, 5.0)] {
            let s = spec(nu, t);
            let r = box_rule(10.0 * s.diffusion().sqrt(), 40);
            let mass = integrate_box(|y| gaussian(&s, y), [&r, &r, &r]);
            assert!((mass - 1.0).abs() < 1e-8, "mass {mass}");
        }
        let y = Point3::new(0.1, -0.2, 0.3);
        assert_eq!(gaussian(&s, y), gaussian(&s, Point3::new(-0.1, 0.2, -0.3)));
    }

    #[test]
    fn gradient_is_antisymmetric_and_matches_fd() {
        let s = spec(0.05, 0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let y = Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            for i in 0..3 {
                let g = gaussian_grad(&s, y, i);
                assert_eq!(g, -gaussian_grad(&s, y.reflected(i), i));
                let h = 1e-5;
                let fd = (gaussian(&s, y.shifted(i, h)) - gaussian(&s, y.shifted(i, -h))) / (2.0 * h);
                assert!((g - fd).abs() <= 1e-6 * g.abs().max(1e-3 * gaussian(&s, y)));
            }
        }
        assert_eq!(gaussian_grad(&s, Point3::new(0.0, 1.0, 1.0), 0), 0.0);
    }

    #[test]
    fn semigroup_by_self_convolution() {
        let (s1, s2, s12) = (spec(0.1, 0.5), spec(0.1, 0.3), spec(0.1, 0.8));
        let r = box_rule(10.0 * s1.diffusion().sqrt(), 40);
        for x in [Point3::ORIGIN, Point3::new(0.2, -0.1, 0.3), Point3::new(0.5, 0.0, 0.0)] {
            let conv = integrate_box(
                |y| gaussian(&s1, y) * gaussian(&s2, Point3::new(x.x1 - y.x1, x.x2 - y.x2, x.x3 - y.x3)),
                [&r, &r, &r],
            );
            assert!((conv - gaussian(&s12, x)).abs() < 1e-6);
        }
    }

    #[test]
    fn full_space_moment_is_two() {
        for (nu, sigma) in [(0.1, 1.0), (1e-3, 0.5), (3.0, 0.01)] {
            for i in 0..3 {
                let m = weighted_moment_full_space(&spec(nu, sigma), i, 40);
                assert!((m - 2.0).abs() < 1e-6, "{m}");
            }
        }
    }

    #[test]
    fn second_moment_is_quarter_horizon_and_nu_free() {
        let reports: Vec<_> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|&nu| second_moment(&spec(nu, 1.0), 0.5, 2.0).unwrap())
            .collect();
        for r in &reports {
            assert!((r.measured_m2 - 0.125).abs() < 1e-8);
            assert_eq!(r.analytic_m2, 0.125);
            assert!((r.lipschitz_bound - 4.0 * 2.0 * r.measured_m2).abs() < 1e-15);
            assert!((r.measured_m2 - reports[0].measured_m2).abs() < 1e-6);
        }
        let zero = second_moment(&spec(0.1, 1.0), 0.0, 1.0).unwrap();
        assert_eq!(zero.measured_m2, 0.0);
        let small = second_moment(&spec(0.1, 1.0), 1e-8, 1.0).unwrap();
        assert!(small.measured_m2 < 1e-8);
    }

    #[test]
    fn newton_kernel_facts() {
        let v = newton_kernel_grad(Point3::new(1.0, 0.0, 0.0), 0).unwrap();
        assert!((v - 1.0 / (4.0 * PI)).abs() < 1e-16);
        assert!(newton_kernel_grad(Point3::ORIGIN, 1).is_err());
        let x = Point3::new(0.3, -0.7, 1.1);
        for i in 0..3 {
            let a = newton_kernel_grad(x, i).unwrap();
            assert_eq!(newton_kernel_grad(Point3::new(-0.3, 0.7, -1.1), i).unwrap(), -a);
            let b = newton_kernel_grad(Point3::new(0.6, -1.4, 2.2), i).unwrap();
            assert!((b - a / 4.0).abs() < 1e-16);
            let h = 1e-5;
            let fd = (newton_kernel(x.shifted(i, h)).unwrap() - newton_kernel(x.shifted(i, -h)).unwrap()) / (2.0 * h);
            assert!((fd - a).abs() < 1e-9);
        }
        // Harmonic off the origin: sum_i d_i (dK/dx_i) = 0.
        let h = 1e-4;
        let lap: f64 = (0..3)
            .map(|i| {
                (newton_kernel_grad(x.shifted(i, h), i).unwrap() - newton_kernel_grad(x.shifted(i, -h), i).unwrap())
                    / (2.0 * h)
            })
            .sum();
        assert!(lap.abs() < 1e-6 * x.norm().powi(-3));
    }

    #[test]
    fn degeneracy_of_constant_is_zero() {
        let v = degeneracy_scan(|_| 3.0, 1.0, 0, &[1e-1, 1e-2]).unwrap();
        assert_eq!(v, vec![0.0, 0.0]);
        assert!(degeneracy_scan(|_| 1.0, 1.0, 0, &[1e-2, 1e-1]).is_err());
    }

    #[test]
    fn degeneracy_of_step_follows_one_dimensional_gaussian() {
        // For a unit step across x_i = 0 the convolution equals the 1D heat
        // kernel at x_i, whose peak 1/sqrt(4 pi nu t) grows as nu decreases.
        let nus = [1e-1, 1e-2, 1e-3, 1e-4];
        let vals = degeneracy_scan(|x| if x.x1 > 0.0 { 1.0 } else { 0.0 }, 1.0, 0, &nus).unwrap();
        for (v, nu) in vals.iter().zip(nus) {
            let peak = 1.0 / (4.0 * PI * nu).sqrt();
            assert!((v - peak).abs() < 1e-6 * peak, "{v} vs {peak}");
        }
        assert!(vals.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn probes_include_axis_origin() {
        let p = degeneracy_probes(1);
        assert_eq!(p.len(), 189);
        assert!(p.contains(&Point3::ORIGIN));
        assert!(p.iter().all(|q| q.x2.abs() <= 0.5 + 1e-12 && q.x1.abs() <= 0.25));
    }
}
