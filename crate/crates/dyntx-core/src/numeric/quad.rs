//! Gauss-Legendre quadrature rules.

/// A Gauss-Legendre rule stored on [0, 1].
///
/// Nodes are computed by Newton iteration on the Legendre polynomial from the
/// Chebyshev initial guess; the iteration is monotone and converges to
/// machine precision in a handful of steps for any practical order.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Build the `n`-point rule.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature order must be at least 1");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Root of P_n in (-1, 1), highest first.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            // Map from [-1, 1] to [0, 1].
            nodes[i] = 0.5 * (1.0 - x);
            nodes[n - 1 - i] = 0.5 * (1.0 + x);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        GaussLegendre { nodes, weights }
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// True when the rule is empty (never; kept for API completeness).
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes on [0, 1] in increasing order.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Weights summing to 1.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Integrate `f` over [0, 1].
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Legendre polynomial value and derivative at `x` by the three-term
/// recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn five_point_rule_matches_reference() {
        // Classical 5-point nodes/weights on [-1, 1], mapped to [0, 1].
        let rule = GaussLegendre::new(5);
        let ref_nodes = [-0.906_179_845_938_664, -0.538_469_310_105_683, 0.0];
        let ref_weights = [0.236_926_885_056_189, 0.478_628_670_499_366, 0.568_888_888_888_889];
        for (i, (&rn, &rw)) in ref_nodes.iter().zip(&ref_weights).enumerate() {
            assert_abs_diff_eq!(rule.nodes()[i], 0.5 * (1.0 + rn), epsilon = 1e-14);
            assert_abs_diff_eq!(rule.weights()[i], 0.5 * rw, epsilon = 1e-14);
        }
    }

    #[test]
    fn weights_sum_to_one() {
        for n in [1, 2, 3, 8, 16, 32] {
            let rule = GaussLegendre::new(n);
            let s: f64 = rule.weights().iter().sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn exact_for_polynomials_up_to_degree_2n_minus_1() {
        let n = 6;
        let rule = GaussLegendre::new(n);
        for deg in 0..(2 * n) {
            let got = rule.integrate(|x| x.powi(deg as i32));
            let want = 1.0 / (deg as f64 + 1.0);
            assert_abs_diff_eq!(got, want, epsilon = 1e-13);
        }
    }

    #[test]
    fn smooth_integrand_converges() {
        let f = |x: f64| (3.0 * x).sin().exp();
        let a = GaussLegendre::new(16).integrate(f);
        let b = GaussLegendre::new(48).integrate(f);
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }
}
