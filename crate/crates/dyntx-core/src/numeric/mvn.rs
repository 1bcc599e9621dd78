//! Multivariate-normal rectangle probabilities.
//!
//! Writing the vector as `X = L Z` for the Cholesky factor `L` and iid
//! standard normal `Z`, the rectangle probability becomes a nested chain of
//! one-dimensional integrals with affine bounds:
//!
//! ```text
//! P = int_{a_1}^{b_1} phi(z_1) int_{a_2(z_1)}^{b_2(z_1)} phi(z_2) ... dz
//! ```
//!
//! Each layer is integrated with a composite Gauss-Legendre rule in `z`
//! space, keeping the Gaussian weight explicit. The integrand of every layer
//! is entire, so the rule converges spectrally; the alternative of mapping
//! layers to the unit cube through the normal quantile looks tidier but puts
//! an unbounded derivative at the cube boundary and stalls around 1e-5
//! accuracy. The innermost layer is a plain CDF difference and needs no
//! nodes.

use crate::error::{Error, Result};

use super::normal::{norm_cdf, norm_pdf};
use super::quad::GaussLegendre;

/// Integration bounds are clipped here; the normal mass beyond is ~1e-17.
const CLIP: f64 = 8.5;
/// Maximum panel width for the composite rule.
const PANEL: f64 = 3.0;
/// Subtrees whose accumulated weight is below this cannot move the result.
const PRUNE: f64 = 1e-18;

/// Classification of a one-sided threshold constraint on a latent rank,
/// used when assembling rectangle bounds from structural thresholds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum HalfLine {
    /// Excludes nothing; no integration dimension needed.
    Certain,
    /// Unsatisfiable; the enclosing path has probability zero.
    Empty,
    /// A genuine bound pair.
    Dim(f64, f64),
}

pub(crate) fn half_line(lo: f64, hi: f64) -> HalfLine {
    if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
        HalfLine::Certain
    } else if hi == f64::NEG_INFINITY || lo == f64::INFINITY || lo >= hi {
        HalfLine::Empty
    } else {
        HalfLine::Dim(lo, hi)
    }
}

/// Cholesky factorization of a symmetric positive-definite matrix.
///
/// `a` is row-major `n x n`; the result is the lower factor, row-major, with
/// the strict upper triangle zeroed. Failure means the matrix is not positive
/// definite to working precision, which doubles as the validity check for
/// latent correlation matrices.
pub fn cholesky_lower(a: &[f64], n: usize) -> Result<Vec<f64>> {
    assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 1e-12 {
                    return Err(Error::Numeric(format!(
                        "matrix not positive definite: pivot {s:.3e} at index {i}"
                    )));
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Ok(l)
}

/// Rectangle-probability integrator for a zero-mean normal vector with a
/// fixed correlation matrix.
///
/// `prob` evaluates `Pr[lower_i < X_i <= upper_i for all i]`. Bounds may be
/// infinite. Dimensions unbounded on both sides integrate to one; callers
/// should drop them (marginalizing a normal vector is just deleting rows and
/// columns of the correlation matrix) because keeping them only adds cost.
#[derive(Clone, Debug)]
pub struct MvnRect {
    dim: usize,
    chol: Vec<f64>,
}

impl MvnRect {
    /// Build from a row-major correlation (or covariance) matrix.
    pub fn new(corr: &[f64], dim: usize) -> Result<Self> {
        let chol = cholesky_lower(corr, dim)?;
        Ok(MvnRect { dim, chol })
    }

    /// Dimension of the underlying vector.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Probability of the rectangle `(lower, upper]` under the configured law.
    pub fn prob(&self, lower: &[f64], upper: &[f64], rule: &GaussLegendre) -> f64 {
        assert_eq!(lower.len(), self.dim);
        assert_eq!(upper.len(), self.dim);
        if self.dim == 0 {
            return 1.0;
        }
        let mut zs = vec![0.0; self.dim];
        self.layer(0, 1.0, &mut zs, lower, upper, rule).clamp(0.0, 1.0)
    }

    fn layer(
        &self,
        i: usize,
        weight: f64,
        zs: &mut [f64],
        lower: &[f64],
        upper: &[f64],
        rule: &GaussLegendre,
    ) -> f64 {
        let n = self.dim;
        let mut shift = 0.0;
        for k in 0..i {
            shift += self.chol[i * n + k] * zs[k];
        }
        let scale = self.chol[i * n + i];
        let a = conditional_bound(lower[i], shift, scale).max(-CLIP);
        let b = conditional_bound(upper[i], shift, scale).min(CLIP);
        if a >= b {
            return 0.0;
        }
        if i + 1 == n {
            return weight * (norm_cdf(b) - norm_cdf(a));
        }
        let panels = ((b - a) / PANEL).ceil() as usize;
        let h = (b - a) / panels as f64;
        let mut acc = 0.0;
        for p in 0..panels {
            let start = a + p as f64 * h;
            for (&u, &w) in rule.nodes().iter().zip(rule.weights()) {
                let z = start + u * h;
                let wt = weight * w * h * norm_pdf(z);
                if wt < PRUNE {
                    continue;
                }
                zs[i] = z;
                acc += self.layer(i + 1, wt, zs, lower, upper, rule);
            }
        }
        acc
    }
}

fn conditional_bound(b: f64, shift: f64, scale: f64) -> f64 {
    if b.is_infinite() {
        b
    } else {
        (b - shift) / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn equicorr(n: usize, rho: f64) -> Vec<f64> {
        let mut a = vec![rho; n * n];
        for i in 0..n {
            a[i * n + i] = 1.0;
        }
        a
    }

    /// With equicorrelation 1/2 the orthant probability is 1/(n+1): write
    /// X_i = (Z_0 + Z_i)/sqrt(2) with iid normals, then all X_i <= 0 iff Z_0
    /// is the minimum of the exchangeable set {Z_0, -Z_1, ..., -Z_n}.
    #[test]
    fn orthant_equicorrelation_half() {
        let rule = GaussLegendre::new(16);
        for n in [2usize, 3, 4, 6] {
            let rect = MvnRect::new(&equicorr(n, 0.5), n).unwrap();
            let lower = vec![f64::NEG_INFINITY; n];
            let upper = vec![0.0; n];
            let p = rect.prob(&lower, &upper, &rule);
            assert_abs_diff_eq!(p, 1.0 / (n as f64 + 1.0), epsilon = 1e-10);
        }
    }

    #[test]
    fn bivariate_quadrant_asin_formula() {
        let rule = GaussLegendre::new(16);
        for rho in [-0.8, -0.3, 0.0, 0.25, 0.7] {
            let rect = MvnRect::new(&equicorr(2, rho), 2).unwrap();
            let p = rect.prob(&[f64::NEG_INFINITY; 2], &[0.0; 2], &rule);
            let want = 0.25 + rho.asin() / (2.0 * std::f64::consts::PI);
            assert_abs_diff_eq!(p, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn independence_factorizes() {
        let rule = GaussLegendre::new(16);
        let n = 4;
        let rect = MvnRect::new(&equicorr(n, 0.0), n).unwrap();
        let lower = [-0.5, f64::NEG_INFINITY, 0.2, -2.0];
        let upper = [1.25, 0.4, f64::INFINITY, 2.0];
        let p = rect.prob(&lower, &upper, &rule);
        let want: f64 = lower
            .iter()
            .zip(&upper)
            .map(|(&a, &b)| norm_cdf(b) - norm_cdf(a))
            .product();
        assert_abs_diff_eq!(p, want, epsilon = 1e-12);
    }

    #[test]
    fn order_16_vs_32_stable() {
        // Correlation pattern of the bundled two-period example model.
        let corr = [
            1.0, 0.3, 0.5, 0.3, //
            0.3, 1.0, 0.3, 0.5, //
            0.5, 0.3, 1.0, 0.3, //
            0.3, 0.5, 0.3, 1.0,
        ];
        let rect = MvnRect::new(&corr, 4).unwrap();
        let r16 = GaussLegendre::new(16);
        let r32 = GaussLegendre::new(32);
        let cases = [
            ([-0.3, f64::NEG_INFINITY, 0.2, -1.0], [1.1, 0.4, f64::INFINITY, 1.0]),
            ([-3.5, -3.5, -3.5, -3.5], [3.5, 0.0, 1.5, 0.5]),
            ([0.0, 0.0, 0.0, 0.0], [3.5, 3.5, 3.5, 3.5]),
        ];
        for (lo, hi) in cases {
            let a = rect.prob(&lo, &hi, &r16);
            let b = rect.prob(&lo, &hi, &r32);
            assert!((a - b).abs() <= 1e-10, "order drift {:.3e}", (a - b).abs());
        }
    }

    #[test]
    fn monte_carlo_cross_check() {
        use rand::Rng;
        let corr = [
            1.0, 0.3, 0.5, 0.3, //
            0.3, 1.0, 0.3, 0.5, //
            0.5, 0.3, 1.0, 0.3, //
            0.3, 0.5, 0.3, 1.0,
        ];
        let n = 4;
        let rect = MvnRect::new(&corr, n).unwrap();
        let rule = GaussLegendre::new(16);
        let lower = [-0.3, f64::NEG_INFINITY, 0.2, -1.0];
        let upper = [1.1, 0.4, f64::INFINITY, 1.0];
        let p = rect.prob(&lower, &upper, &rule);

        let chol = cholesky_lower(&corr, n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let draws = 1_000_000usize;
        let mut hits = 0usize;
        let mut z = [0.0f64; 4];
        for _ in 0..draws {
            for zi in z.iter_mut() {
                *zi = crate::numeric::norm_quantile(rng.random::<f64>());
            }
            let mut ok = true;
            for i in 0..n {
                let mut x = 0.0;
                for k in 0..=i {
                    x += chol[i * n + k] * z[k];
                }
                if !(x > lower[i] && x <= upper[i]) {
                    ok = false;
                    break;
                }
            }
            hits += ok as usize;
        }
        let est = hits as f64 / draws as f64;
        let se = (est * (1.0 - est) / draws as f64).sqrt();
        assert!(
            (p - est).abs() <= 4.0 * se,
            "quadrature {p:.6} vs monte carlo {est:.6} (se {se:.2e})"
        );
    }

    #[test]
    fn rejects_non_pd() {
        let bad = [1.0, 0.9, 0.9, 0.9, 1.0, 0.9, 0.9, 0.9, 0.2];
        assert!(cholesky_lower(&bad, 3).is_err());
    }
}
