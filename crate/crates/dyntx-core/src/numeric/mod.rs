//! Numerical kernels: univariate normal functions, Gauss-Legendre rules, and
//! multivariate-normal rectangle probabilities.
//!
//! The probability of a latent-variable rectangle under a correlated normal
//! vector is the one non-trivial integral in this crate; everything else is
//! bookkeeping over such rectangles. The implementation transforms the
//! rectangle to the unit cube by sequential conditioning (one Cholesky factor,
//! one normal quantile per inner dimension), which turns the indicator
//! integrand into a smooth product of conditional CDF differences; a tensor
//! Gauss-Legendre rule of modest order then converges to ~1e-9, where a raw
//! quadrature against the indicator would not.

mod mvn;
mod normal;
mod quad;

pub use mvn::{cholesky_lower, MvnRect};
pub(crate) use mvn::{half_line, HalfLine};
pub use normal::{norm_cdf, norm_pdf, norm_quantile};
pub use quad::GaussLegendre;
