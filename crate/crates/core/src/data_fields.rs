//! Closed-form singular-oscillatory data.
//!
//! Two families are provided. The planar family concentrates its singular
//! behaviour on the plane `x1 = 0`:
//!
//! ```text
//! h1 = A(x1) w(x2) q(x3)
//! h2 = -x2 A'(x1) w(x2) q(x3)                  (= -x2 dh1/dx1)
//! h3 = 1/2 x2 A'(x1) w'(x2) w(x3)
//! ```
//!
//! with `A = g(x1) w(x1)`, `g(s) = |s|^b sin(|s|^-a)`, `w(s) = (1+s^2)^-2`
//! and `q(s) = -2 s (1+s^2)^-3`, so that `phi = w(x1) w(x2) q(x3)` is the
//! weight function. The radial family is built from the profile
//! `S(r) = r^b sin(r^-a) / (1+r^2)^2`.
//!
//! All derivatives are hand-derived closed forms; the tests check them
//! against finite differences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of R^3. Axis `0` is `x1`, the direction normal to the singular plane.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 { x1: 0.0, x2: 0.0, x3: 0.0 };

    pub const fn new(x1: f64, x2: f64, x3: f64) -> Self {
        Self { x1, x2, x3 }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x1, self.x2, self.x3]
    }

    pub fn axis(self, i: usize) -> f64 {
        self.to_array()[i]
    }

    pub fn norm(self) -> f64 {
        (self.x1 * self.x1 + self.x2 * self.x2 + self.x3 * self.x3).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x1.is_finite() && self.x2.is_finite() && self.x3.is_finite()
    }

    /// Copy of `self` with coordinate `i` shifted by `d`.
    pub fn shifted(self, i: usize, d: f64) -> Self {
        let mut a = self.to_array();
        a[i] += d;
        Self::from_array(a)
    }

    /// Copy of `self` with coordinate `i` negated.
    pub fn reflected(self, i: usize) -> Self {
        let mut a = self.to_array();
        a[i] = -a[i];
        Self::from_array(a)
    }
}

/// Which data family a run uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Oscillation across the plane `x1 = 0`.
    Planar,
    /// Oscillation around the origin.
    Radial,
}

/// Which closed form is used for `h2` and `h3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataVariant {
    /// `h2 = -x2 dh1/dx1` exactly and `h3` chosen so that `div h = 0`.
    DivergenceFree,
    /// The expanded formulas exactly as printed (factor `-2 x1/(1+x1^2)` in
    /// `h2`, printed expression for `h3`). Kept for comparison only.
    AsDisplayed,
}

/// Exponents of the data family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub alpha0: f64,
    pub beta0: f64,
    pub family: Family,
    #[serde(default = "default_variant")]
    pub variant: DataVariant,
}

fn default_variant() -> DataVariant {
    DataVariant::DivergenceFree
}

impl Default for Params {
    fn default() -> Self {
        Self {
            alpha0: 0.4,
            beta0: 1.8,
            family: Family::Planar,
            variant: DataVariant::DivergenceFree,
        }
    }
}

impl Params {
    /// Validated constructor.
    pub fn new(alpha0: f64, beta0: f64, family: Family) -> Result<Self> {
        let p = Self {
            alpha0,
            beta0,
            family,
            variant: DataVariant::DivergenceFree,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_variant(mut self, variant: DataVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = (self.alpha0, self.beta0);
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidParams("exponents must be finite".into()));
        }
        if !(a > 0.0 && a < 0.5) {
            return Err(Error::InvalidParams(format!("alpha0 = {a} must lie in (0, 0.5)")));
        }
        match self.family {
            Family::Planar => {
                if !(b > 1.5 && b < 1.5 + a) {
                    return Err(Error::InvalidParams(format!(
                        "beta0 = {b} must lie in (1.5, 1.5 + alpha0) = (1.5, {})",
                        1.5 + a
                    )));
                }
            }
            Family::Radial => {
                if b <= 1.5 {
                    return Err(Error::InvalidParams(format!("beta0 = {b} must exceed 1.5")));
                }
                if b >= 1.0 + a {
                    // (1.5, 1 + alpha0) is empty for alpha0 < 0.5.
                    log::warn!(
                        "radial family: beta0 = {b} >= 1 + alpha0 = {}; the admissible interval is empty",
                        1.0 + a
                    );
                }
            }
        }
        Ok(())
    }

    /// `beta0 - 1 - alpha0`, the Hölder exponent of the first derivative.
    pub fn gamma(&self) -> f64 {
        self.beta0 - 1.0 - self.alpha0
    }

    /// `2 beta0 - 3`, the Hölder exponent of the first increment derivatives.
    pub fn holder_delta(&self) -> f64 {
        2.0 * self.beta0 - 3.0
    }
}

/// Row `i`, column `j` holds `d f_i / d x_j`.
pub type Jacobian = [[f64; 3]; 3];

#[inline]
fn w(s: f64) -> f64 {
    let d = 1.0 + s * s;
    1.0 / (d * d)
}

#[inline]
fn w_d1(s: f64) -> f64 {
    let d = 1.0 + s * s;
    -4.0 * s / (d * d * d)
}

#[inline]
fn w_d2(s: f64) -> f64 {
    let d = 1.0 + s * s;
    -4.0 / (d * d * d) + 24.0 * s * s / (d * d * d * d)
}

#[inline]
fn q(s: f64) -> f64 {
    let d = 1.0 + s * s;
    -2.0 * s / (d * d * d)
}

#[inline]
fn q_d1(s: f64) -> f64 {
    let d = 1.0 + s * s;
    -2.0 / (d * d * d) + 12.0 * s * s / (d * d * d * d)
}

/// `G(s) = s^b sin(s^-a)` and its first two derivatives for `s > 0`.
fn osc(s: f64, a: f64, b: f64) -> [f64; 3] {
    let u = s.powf(-a);
    let (sn, cs) = u.sin_cos();
    let g = s.powf(b) * sn;
    let g1 = b * s.powf(b - 1.0) * sn - a * s.powf(b - 1.0 - a) * cs;
    let g2 = b * (b - 1.0) * s.powf(b - 2.0) * sn
        - a * (2.0 * b - 1.0 - a) * s.powf(b - 2.0 - a) * cs
        - a * a * s.powf(b - 2.0 - 2.0 * a) * sn;
    [g, g1, g2]
}

/// `g(x) = G(|x|)` with signed-power convention, and `g', g''`.
/// Returns `None` for `g''` at `x = 0` where it has no limit.
fn osc_signed(x: f64, a: f64, b: f64) -> ([f64; 2], Option<f64>) {
    if x == 0.0 {
        return ([0.0, 0.0], None);
    }
    let [g, g1, g2] = osc(x.abs(), a, b);
    ([g, x.signum() * g1], Some(g2))
}

/// `A = g w`, `A'`, `A''` along `x1`.
fn profile(x1: f64, p: &Params) -> ([f64; 2], Option<f64>) {
    let ([g, g1], g2) = osc_signed(x1, p.alpha0, p.beta0);
    let (w0, w1, w2) = (w(x1), w_d1(x1), w_d2(x1));
    let a0 = g * w0;
    let a1 = g1 * w0 + g * w1;
    let a2 = g2.map(|g2| g2 * w0 + 2.0 * g1 * w1 + g * w2);
    ([a0, a1], a2)
}

/// The weight `phi(x) = -2 x3 / (1+x3^2)^3 * prod_{i<3} (1+x_i^2)^-2`.
pub fn eval_phi(x: Point3) -> f64 {
    q(x.x3) * w(x.x1) * w(x.x2)
}

/// Planar data `(h1, h2, h3)`, extended by `0` on the plane `x1 = 0`.
pub fn eval_h(x: Point3, p: &Params) -> [f64; 3] {
    if x.x1 == 0.0 {
        return [0.0; 3];
    }
    match p.variant {
        DataVariant::DivergenceFree => {
            let ([a0, a1], _) = profile(x.x1, p);
            let (w2, q3) = (w(x.x2), q(x.x3));
            [
                a0 * w2 * q3,
                -x.x2 * a1 * w2 * q3,
                0.5 * x.x2 * a1 * w_d1(x.x2) * w(x.x3),
            ]
        }
        DataVariant::AsDisplayed => eval_h_displayed(x, p),
    }
}

fn eval_h_displayed(x: Point3, p: &Params) -> [f64; 3] {
    let ([g, g1], _) = osc_signed(x.x1, p.alpha0, p.beta0);
    let phi = eval_phi(x);
    let (x1, x2) = (x.x1, x.x2);
    let h1 = g * phi;
    let h2 = -x2 * g1 * phi - x2 * g * phi * (-2.0 * x1 / (1.0 + x1 * x1));
    let prod = w(x1) * w(x2) * w(x.x3);
    let d2 = 1.0 + x2 * x2;
    let h3 = g1 * (-x2 * x2 / d2) * prod
        + g * 4.0 * x1 * x2 * x2 / ((1.0 + x1 * x1) * d2 * d2) * prod;
    [h1, h2, h3]
}

/// Analytic Jacobian of the planar data (divergence-free variant).
///
/// On `x1 = 0` the entries `(1,0)` and `(2,0)` contain `A''`, which has no
/// limit; those are reported as [`Error::SingularPoint`] unless their
/// prefactor vanishes. Every other entry extends by its limit `0`.
pub fn eval_grad_h(x: Point3, p: &Params) -> Result<Jacobian> {
    let ([a0, a1], a2) = profile(x.x1, p);
    let (x2, x3) = (x.x2, x.x3);
    let (w2, w2d, w2dd) = (w(x2), w_d1(x2), w_d2(x2));
    let (q3, q3d) = (q(x3), q_d1(x3));
    let (w3, w3d) = (w(x3), w_d1(x3));

    let pref_21 = -x2 * w2 * q3;
    let pref_31 = 0.5 * x2 * w2d * w3;
    let a2 = match a2 {
        Some(v) => v,
        None if pref_21 == 0.0 && pref_31 == 0.0 => 0.0,
        None => {
            return Err(Error::SingularPoint(format!(
                "d h2/dx1 and d h3/dx1 have no limit at x1 = 0 (x2 = {x2}, x3 = {x3})"
            )))
        }
    };
    Ok([
        [a1 * w2 * q3, a0 * w2d * q3, a0 * w2 * q3d],
        [pref_21 * a2, -a1 * (w2 + x2 * w2d) * q3, -x2 * a1 * w2 * q3d],
        [pref_31 * a2, 0.5 * a1 * (w2d + x2 * w2dd) * w3, 0.5 * x2 * a1 * w2d * w3d],
    ])
}

/// Analytic divergence of the planar data.
pub fn divergence_h(x: Point3, p: &Params) -> Result<f64> {
    if x.x1 == 0.0 {
        return Err(Error::SingularPoint("divergence undefined on x1 = 0".into()));
    }
    let j = eval_grad_h(x, p)?;
    Ok(j[0][0] + j[1][1] + j[2][2])
}

/// Radial profile `S(r)` and `S'(r)`.
fn radial_profile(r: f64, p: &Params) -> [f64; 2] {
    if r == 0.0 {
        return [0.0, 0.0];
    }
    let [g, g1, _] = osc(r, p.alpha0, p.beta0);
    let d = 1.0 + r * r;
    [g / (d * d), g1 / (d * d) - 4.0 * r * g / (d * d * d)]
}

/// Radial data `(f1, f2, f3)`; `f(0) = 0`.
pub fn eval_f(x: Point3, p: &Params) -> [f64; 3] {
    let [s, _] = radial_profile(x.norm(), p);
    [x.x2 * x.x3 * s, -0.5 * x.x1 * x.x3 * s, -0.5 * x.x1 * x.x2 * s]
}

/// Analytic Jacobian of the radial data; zero at the origin.
pub fn eval_grad_f(x: Point3, p: &Params) -> Jacobian {
    let r = x.norm();
    if r == 0.0 {
        return [[0.0; 3]; 3];
    }
    let [s, s1] = radial_profile(r, p);
    let sr = s1 / r;
    let [x1, x2, x3] = x.to_array();
    [
        [x1 * x2 * x3 * sr, x3 * s + x2 * x2 * x3 * sr, x2 * s + x2 * x3 * x3 * sr],
        [
            -0.5 * (x3 * s + x1 * x1 * x3 * sr),
            -0.5 * x1 * x2 * x3 * sr,
            -0.5 * (x1 * s + x1 * x3 * x3 * sr),
        ],
        [
            -0.5 * (x2 * s + x1 * x1 * x2 * sr),
            -0.5 * (x1 * s + x1 * x2 * x2 * sr),
            -0.5 * x1 * x2 * x3 * sr,
        ],
    ]
}

/// Data of whichever family `p` selects.
pub fn eval_data(x: Point3, p: &Params) -> [f64; 3] {
    match p.family {
        Family::Planar => eval_h(x, p),
        Family::Radial => eval_f(x, p),
    }
}

/// Jacobian of whichever family `p` selects.
pub fn eval_grad_data(x: Point3, p: &Params) -> Result<Jacobian> {
    match p.family {
        Family::Planar => eval_grad_h(x, p),
        Family::Radial => Ok(eval_grad_f(x, p)),
    }
}

/// Fourth-order central-difference Jacobian of an arbitrary vector evaluator.
pub fn fd_jacobian(f: impl Fn(Point3) -> [f64; 3], x: Point3, step: f64) -> Jacobian {
    let mut jac = [[0.0; 3]; 3];
    for j in 0..3 {
        let fp1 = f(x.shifted(j, step));
        let fm1 = f(x.shifted(j, -step));
        let fp2 = f(x.shifted(j, 2.0 * step));
        let fm2 = f(x.shifted(j, -2.0 * step));
        for i in 0..3 {
            jac[i][j] = (8.0 * (fp1[i] - fm1[i]) - (fp2[i] - fm2[i])) / (12.0 * step);
        }
    }
    jac
}

/// Finite-difference step resolving the local oscillation `|x1|^-alpha0`.
pub fn resolving_step(x: Point3, p: &Params) -> f64 {
    let s = x.x1.abs().min(1.0);
    // Local wavelength of sin(s^-a) is ~ s^(1+a) / a.
    let wavelength = s.powf(1.0 + p.alpha0) / p.alpha0;
    (2e-3 * wavelength).clamp(1e-9, 1e-4)
}

/// Membership certificate for the class of functions whose derivatives up
/// to order `m` decay like `|x|^-l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayCertificate {
    pub l: u32,
    pub m: u32,
    /// Smallest fitted decay exponent over all multi-indices `|gamma| <= m`.
    pub fitted_exponent: f64,
    /// Largest `sup_{|x|=R} |D^gamma f| * (1 + R^l)` over the sampled radii.
    pub max_ratio_constant: f64,
}

/// Fit slack for the decay exponent.
pub const DECAY_FIT_TOLERANCE: f64 = 0.25;

impl DecayCertificate {
    pub fn holds(&self) -> bool {
        self.fitted_exponent >= self.l as f64 - DECAY_FIT_TOLERANCE
    }
}

/// Quasi-uniform points on the unit sphere.
pub fn fibonacci_sphere(count: usize) -> Vec<Point3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|k| {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
            let rho = (1.0 - z * z).sqrt();
            let th = golden * k as f64;
            Point3::new(rho * th.cos(), rho * th.sin(), z)
        })
        .collect()
}

/// Slope of the least-squares line through `(xs, ys)`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

const SPHERE_SAMPLES: usize = 20_000;

/// Log-log fit of `sup_{|x|=R} |D^gamma field|` against `R` for every
/// multi-index `|gamma| <= m`. Derivatives are central differences.
pub fn certify_decay(
    field: impl Fn(Point3) -> f64,
    l: u32,
    m: u32,
    radii: &[f64],
) -> Result<DecayCertificate> {
    if radii.len() < 3 {
        return Err(Error::InsufficientSamples(format!(
            "need at least 3 radii, got {}",
            radii.len()
        )));
    }
    if radii.iter().any(|&r| r < 1.0) || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParams("radii must be >= 1 and ascending".into()));
    }
    if m > 2 {
        return Err(Error::InvalidParams("derivative order m must be <= 2".into()));
    }

    let mut indices: Vec<Vec<usize>> = vec![vec![]];
    if m >= 1 {
        indices.extend((0..3).map(|i| vec![i]));
    }
    if m >= 2 {
        for i in 0..3 {
            for j in i..3 {
                indices.push(vec![i, j]);
            }
        }
    }

    let dirs = fibonacci_sphere(SPHERE_SAMPLES);
    let step = 1e-3;
    let deriv = |x: Point3, gamma: &[usize]| -> f64 {
        match gamma {
            [] => field(x),
            [i] => (field(x.shifted(*i, step)) - field(x.shifted(*i, -step))) / (2.0 * step),
            [i, j] => {
                let f = |a: f64, b: f64| field(x.shifted(*i, a).shifted(*j, b));
                (f(step, step) - f(step, -step) - f(-step, step) + f(-step, -step))
                    / (4.0 * step * step)
            }
            _ => unreachable!(),
        }
    };

    let logr: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let mut fitted = f64::INFINITY;
    let mut constant = 0.0f64;
    for gamma in &indices {
        let sups: Vec<f64> = radii
            .iter()
            .map(|&r| {
                dirs.iter()
                    .map(|d| deriv(Point3::new(r * d.x1, r * d.x2, r * d.x3), gamma).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        for (s, r) in sups.iter().zip(radii) {
            constant = constant.max(s * (1.0 + r.powi(l as i32)));
        }
        if sups.iter().all(|&s| s == 0.0) {
            continue;
        }
        let logs: Vec<f64> = sups.iter().map(|s| s.max(1e-300).ln()).collect();
        fitted = fitted.min(-fit_slope(&logr, &logs));
    }
    Ok(DecayCertificate {
        l,
        m,
        fitted_exponent: fitted,
        max_ratio_constant: constant,
    })
}
