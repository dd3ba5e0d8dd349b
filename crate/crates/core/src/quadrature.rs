//! Gauss–Legendre rules and tensor-product integration.

use crate::data_fields::Point3;

/// Nodes and weights on an interval.
#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// `n`-point Gauss–Legendre rule on `[-1, 1]`, nodes found by Newton
/// iteration on the three-term recurrence.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1, "rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[k] = -x;
        nodes[n - 1 - k] = x;
        weights[k] = w;
        weights[n - 1 - k] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule { nodes, weights }
}

impl Rule {
    /// Composite rule: `panels` equal panels on `[a, b]`, `order` nodes each.
    pub fn composite(a: f64, b: f64, panels: usize, order: usize) -> Self {
        let base = gauss_legendre(order);
        let h = (b - a) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * h;
            for (x, w) in base.nodes.iter().zip(&base.weights) {
                nodes.push(mid + 0.5 * h * x);
                weights.push(0.5 * h * w);
            }
        }
        Self { nodes, weights }
    }

    /// Composite rule on `[a, b]` with panel edges graded geometrically
    /// toward `a` (ratio between neighbouring panel widths).
    pub fn graded(a: f64, b: f64, panels: usize, order: usize, ratio: f64) -> Self {
        let base = gauss_legendre(order);
        let total: f64 = (0..panels).map(|p| ratio.powi(p as i32)).sum();
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        let mut left = a;
        for p in 0..panels {
            let h = (b - a) * ratio.powi(p as i32) / total;
            let mid = left + 0.5 * h;
            for (x, w) in base.nodes.iter().zip(&base.weights) {
                nodes.push(mid + 0.5 * h * x);
                weights.push(0.5 * h * w);
            }
            left += h;
        }
        Self { nodes, weights }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }
}

/// Tensor-product integral of `f` over the box spanned by three rules.
pub fn integrate_box(f: impl Fn(Point3) -> f64, rules: [&Rule; 3]) -> f64 {
    let [r1, r2, r3] = rules;
    let mut total = 0.0;
    for (a, wa) in r1.nodes.iter().zip(&r1.weights) {
        let mut s2 = 0.0;
        for (b, wb) in r2.nodes.iter().zip(&r2.weights) {
            let mut s3 = 0.0;
            for (c, wc) in r3.nodes.iter().zip(&r3.weights) {
                s3 += wc * f(Point3::new(*a, *b, *c));
            }
            s2 += wb * s3;
        }
        total += wa * s2;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_rules_match_closed_forms() {
        let r = gauss_legendre(2);
        let x = 1.0 / 3f64.sqrt();
        assert!((r.nodes[0] + x).abs() < 1e-15 && (r.nodes[1] - x).abs() < 1e-15);
        assert!((r.weights[0] - 1.0).abs() < 1e-15);
        let r = gauss_legendre(3);
        assert!((r.nodes[2] - 0.6f64.sqrt()).abs() < 1e-15);
        assert!((r.weights[1] - 8.0 / 9.0).abs() < 1e-15);
        let r = gauss_legendre(1);
        assert_eq!(r.nodes, vec![0.0]);
        assert!((r.weights[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn exact_for_polynomials_up_to_2n_minus_1() {
        for n in [4, 9, 20] {
            let r = gauss_legendre(n);
            for p in 0..2 * n {
                let got = r.integrate(|x| x.powi(p as i32));
                let want = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
                assert!((got - want).abs() < 1e-13, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn composite_and_graded() {
        let r = Rule::composite(0.0, std::f64::consts::PI, 8, 6);
        assert!((r.integrate(f64::sin) - 2.0).abs() < 1e-13);
        let g = Rule::graded(0.0, 1.0, 12, 8, 1.5);
        // sqrt singularity at the graded end.
        assert!((g.integrate(f64::sqrt) - 2.0 / 3.0).abs() < 1e-7);
        assert!((g.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn box_integral() {
        let r = Rule::composite(-1.0, 1.0, 1, 4);
        let v = integrate_box(|p| p.x1 * p.x1 * p.x2 * p.x2 + p.x3, [&r, &r, &r]);
        assert!((v - 8.0 / 9.0).abs() < 1e-14);
    }
}
