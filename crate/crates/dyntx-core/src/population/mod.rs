//! One query interface over conditional population probabilities.
//!
//! Every identification routine consumes a [`PopulationEvaluator`] and asks
//! only one kind of question: `Pr[target | given]` for a pair of [`Event`]s.
//! Three backends answer it:
//!
//! - [`exact_evaluator`]: integrates the structural model by quadrature.
//!   Deterministic, no sampling error; restricted to arm-invariant latents
//!   and short horizons.
//! - [`mc_population_evaluator`]: counts over a large simulated population.
//!   Approximates the population law with known `sqrt(p(1-p)/n)` error.
//! - [`empirical_evaluator`]: counts over an observed panel; this is the
//!   estimation backend, and it supports baseline-stratum restriction and
//!   resampling for the bootstrap.
//!
//! Identification code is backend-agnostic: swapping the exact backend for a
//! counting one turns an identification argument into an estimator.

mod counting;
mod empirical;
mod event;
mod exact;
mod mc;
mod panel;

pub use empirical::{empirical_evaluator, EmpiricalEvaluator};
pub use event::Event;
pub use exact::{exact_evaluator, ExactEvaluator};
pub use mc::{mc_population_evaluator, McEvaluator};
pub use panel::PanelData;
pub(crate) use panel::Row;

use crate::error::Result;
use crate::model::Horizon;

/// Which kind of backend answered a query.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackendKind {
    /// Quadrature over the structural model; no sampling error.
    Exact,
    /// Counting over a simulated population.
    Simulated,
    /// Counting over an observed panel.
    Empirical,
}

/// A conditional probability together with how well it is measured.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellStats {
    /// `Pr[target | given]`.
    pub estimate: f64,
    /// Number of observations in the conditioning cell; 0 for exact answers.
    pub count: u64,
    /// Sampling standard error of `estimate`; 0 for exact answers.
    pub std_error: f64,
}

impl CellStats {
    /// An exactly computed probability.
    pub fn exact(p: f64) -> Self {
        CellStats { estimate: p, count: 0, std_error: 0.0 }
    }

    /// A counted probability with its binomial standard error.
    pub fn counted(num: u64, den: u64) -> Self {
        let p = num as f64 / den as f64;
        CellStats {
            estimate: p,
            count: den,
            std_error: (p * (1.0 - p) / den as f64).sqrt(),
        }
    }
}

/// Query interface over the population law of `(Y, D, X, Z)`.
pub trait PopulationEvaluator: Sync {
    /// Number of panel periods.
    fn horizon(&self) -> Horizon;

    /// Number of shifter grid points at period `t`.
    fn x_card(&self, t: usize) -> usize;

    /// What kind of backend this is.
    fn kind(&self) -> BackendKind;

    /// `Pr[target | given]`.
    ///
    /// Errors with `UnreachableCell` when the conditioning event has no (or
    /// too little) support, and with `InvalidQuery` on malformed events.
    fn prob(&self, target: &Event, given: &Event) -> Result<CellStats>;

    /// Additive numerical slack of a single returned probability (quadrature
    /// truncation for the exact backend; counting backends return exact
    /// ratios, so 0).
    fn base_tol(&self) -> f64;

    /// The same population restricted to one baseline stratum. Only the
    /// empirical backend carries strata.
    fn stratum_restricted(&self, w0: u8) -> Result<Box<dyn PopulationEvaluator>>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counted_stats_follow_the_binomial_formula() {
        let s = CellStats::counted(25, 100);
        assert_eq!(s.estimate, 0.25);
        assert_eq!(s.count, 100);
        assert!((s.std_error - (0.25f64 * 0.75 / 100.0).sqrt()).abs() < 1e-15);
        let e = CellStats::exact(0.3);
        assert_eq!(e.count, 0);
        assert_eq!(e.std_error, 0.0);
    }
}
