#![allow(dead_code)]

use rev_euler::quadrature::{gauss_legendre, Rule};
use rev_euler::Point3;

/// `grad (K * Q)(x)` for `Laplace K = delta` in spherical coordinates about
/// `x`, where the Jacobian `r^2` cancels the kernel singularity:
/// `-(1/4 pi) int_0^rmax int_S2 s_i Q(x + r s) dOmega dr`.
pub fn newton_gradient_spherical(q: impl Fn(Point3) -> f64, x: Point3, rmax: f64) -> [f64; 3] {
    let radial = Rule::composite(0.0, rmax, 24, 12);
    let polar = gauss_legendre(32);
    let azimuth = 64;
    let mut acc = [0.0; 3];
    for (r, wr) in radial.nodes.iter().zip(&radial.weights) {
        for (ct, wt) in polar.nodes.iter().zip(&polar.weights) {
            let st = (1.0 - ct * ct).sqrt();
            for k in 0..azimuth {
                let ph = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / azimuth as f64;
                let s = [st * ph.cos(), st * ph.sin(), *ct];
                let w = wr * wt * 2.0 * std::f64::consts::PI / azimuth as f64;
                let val = q(Point3::new(x.x1 + r * s[0], x.x2 + r * s[1], x.x3 + r * s[2]));
                for i in 0..3 {
                    acc[i] += w * s[i] * val;
                }
            }
        }
    }
    acc.map(|a| -a / (4.0 * std::f64::consts::PI))
}

/// Windowed rotation `a e^{-|x|^2} (x2, -x1, 0)` and its Jacobian.
pub fn windowed_rotation(a: f64, x: Point3) -> ([f64; 3], [[f64; 3]; 3]) {
    let w = (-(x.x1 * x.x1 + x.x2 * x.x2 + x.x3 * x.x3)).exp();
    let p = x.to_array();
    let dw: [f64; 3] = std::array::from_fn(|j| -2.0 * p[j] * w);
    let v = [a * w * x.x2, -a * w * x.x1, 0.0];
    let mut jac = [[0.0; 3]; 3];
    for j in 0..3 {
        jac[0][j] = a * (dw[j] * x.x2 + if j == 1 { w } else { 0.0 });
        jac[1][j] = -a * (dw[j] * x.x1 + if j == 0 { w } else { 0.0 });
    }
    (v, jac)
}

/// `sum_{m,j} J_mj J_jm`.
pub fn contraction(j: &[[f64; 3]; 3]) -> f64 {
    (0..3).flat_map(|m| (0..3).map(move |k| (m, k))).map(|(m, k)| j[m][k] * j[k][m]).sum()
}

/// Steady swirl `a e^{-rho^2} (-x2, x1, 0)` with `rho^2 = x1^2 + x2^2`; the
/// reversed-Euler pressure gradient is `-a^2 e^{-2 rho^2} (x1, x2, 0)`.
pub fn swirl(a: f64, x: Point3) -> [f64; 3] {
    let w = a * (-(x.x1 * x.x1 + x.x2 * x.x2)).exp();
    [-w * x.x2, w * x.x1, 0.0]
}

pub fn swirl_pressure_gradient(a: f64, x: Point3) -> [f64; 3] {
    let e = a * a * (-2.0 * (x.x1 * x.x1 + x.x2 * x.x2)).exp();
    [-e * x.x1, -e * x.x2, 0.0]
}
