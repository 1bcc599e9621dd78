//! Point identification of potential-outcome quantities from the
//! observational law.
//!
//! The engine consumes only a [`PopulationEvaluator`]: run it against the
//! exact backend and you get the population-identified value; run it against
//! a panel and the same arithmetic is the plug-in estimator.
//!
//! The core argument is recursive. At an active period, individuals whose
//! treatment conforms with the target path contribute their observed outcome
//! transitions directly; individuals who deviate are redirected through a
//! shifter substitution: a grid point where the deviators' outcome threshold
//! equals the target-arm threshold at the queried point, detected from
//! instrument contrasts ([`hstat`]) without ever recovering the thresholds
//! themselves. Deviation weights use within-period instrument variation, so
//! the whole object is identified despite freely correlated selection.

mod engine;
mod golden;
mod hstat;
mod period;

pub use engine::{
    identify_arsf, identify_arsf_at, identify_arsf_traced, identify_ate,
    identify_joint_prob, identify_transition_ate, identify_transition_prob,
    Identified, JointQuery,
};
pub use golden::flat_arsf_two_period;
pub use hstat::{
    h_arm, h_pair, instrument_gap, match_lambda, mu_gap_sign, require_relevance,
    scan_matches, MatchScan,
};
pub use period::identify_period_ate;

use serde::Serialize;
use crate::bits::Bits;
use crate::population::{Event, PopulationEvaluator};
use crate::Result;

/// A value with propagated sampling uncertainty (zero on exact backends).
///
/// Standard errors are first-order delta-method propagations that treat
/// distinct cells as independent; they are indicative only, and the
/// bootstrap is the supported inference path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Measured {
    pub value: f64,
    pub std_error: f64,
}

impl Measured {
    pub(crate) fn exact(value: f64) -> Self {
        Measured { value, std_error: 0.0 }
    }

    /// Difference assuming independence.
    pub(crate) fn minus(self, other: Measured) -> Measured {
        Measured {
            value: self.value - other.value,
            std_error: self.std_error.hypot(other.std_error),
        }
    }
}

/// The observable conditioning cell of one period: full outcome history and
/// the treatment history restricted to the coordinates the query pins down
/// (a masked regime leaves inactive coordinates free, which marginalizes
/// them).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HistoryCell {
    pub t: usize,
    pub y_prev: Bits,
    d_vals: Bits,
    d_mask: Bits,
}

impl HistoryCell {
    /// Cell with every treatment coordinate pinned.
    pub fn full(t: usize, y_prev: Bits, d_prev: Bits) -> Self {
        debug_assert_eq!(y_prev.len(), t);
        debug_assert_eq!(d_prev.len(), t);
        HistoryCell {
            t,
            y_prev,
            d_vals: d_prev,
            d_mask: Bits::ones(t),
        }
    }

    /// Cell with treatment pinned only where `d_mask` is set.
    pub fn masked(t: usize, y_prev: Bits, d_vals: Bits, d_mask: Bits) -> Self {
        debug_assert_eq!(y_prev.len(), t);
        HistoryCell { t, y_prev, d_vals, d_mask }
    }

    /// The conditioning event: all past outcomes plus pinned treatments.
    /// Past instruments and shifters are deliberately absent; every
    /// statistic built on this cell is marginal over them.
    pub(crate) fn given(&self, eval: &dyn PopulationEvaluator) -> Event {
        let mut e = Event::none(eval.horizon());
        for s in 0..self.t {
            e = e.with_y(s, self.y_prev.get(s));
            if self.d_mask.get(s) {
                e = e.with_d(s, self.d_vals.get(s));
            }
        }
        e
    }
}

/// `Pr[Y_t = y, D_t = arm | cell, Z_t = z, X_t = x]`, the building block of
/// every instrument contrast.
pub(crate) fn joint_outcome_arm(
    eval: &dyn PopulationEvaluator,
    cell: &HistoryCell,
    arm: bool,
    z: bool,
    x: usize,
) -> Result<Measured> {
    let given = cell.given(eval).with_z(cell.t, z).with_x(cell.t, x);
    let target = Event::none(eval.horizon())
        .with_y(cell.t, true)
        .with_d(cell.t, arm);
    let stats = eval.prob(&target, &given)?;
    Ok(Measured {
        value: stats.estimate,
        std_error: stats.std_error,
    })
}
