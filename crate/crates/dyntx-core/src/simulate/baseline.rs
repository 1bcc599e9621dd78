//! Sequential-adjustment baseline (the g-computation formula).
//!
//! Adjusts for observed history only: it multiplies conditional outcome
//! transitions along the forced treatment path,
//!
//! `sum over y-paths of prod_t Pr[Y_t = y_t | D^t = d^t, Y^{t-1} = y^{t-1}, X^t = x^t]`,
//!
//! with instruments marginalized out. Under treatment exogeneity this equals
//! the potential-outcome mean; under endogenous selection it is biased,
//! which is exactly what makes it a useful comparator for the
//! instrument-based engine.

use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::model::Regime;
use crate::population::{Event, PopulationEvaluator};

use super::oracle::OracleValue;

/// Terminal-outcome mean under sequential adjustment, with a delta-method
/// standard error propagated from the cell standard errors (zero on exact
/// backends).
pub fn g_computation(
    eval: &dyn PopulationEvaluator,
    regime: &Regime,
    x: &[usize],
) -> Result<OracleValue> {
    if !regime.is_full() {
        return Err(Error::InvalidQuery(
            "sequential adjustment is defined for fully specified regimes".into(),
        ));
    }
    if regime.len() != eval.horizon().get() || x.len() != eval.horizon().get() {
        return Err(Error::InvalidQuery(format!(
            "regime and shifter paths must have {} periods",
            eval.horizon().get()
        )));
    }
    let (value, var) = g_rec(eval, regime, x, 0, Bits::EMPTY)?;
    Ok(OracleValue {
        value,
        std_error: var.sqrt(),
    })
}

fn g_rec(
    eval: &dyn PopulationEvaluator,
    regime: &Regime,
    x: &[usize],
    t: usize,
    y_hist: Bits,
) -> Result<(f64, f64)> {
    let h = eval.horizon();
    let target = Event::none(h).with_y(t, true);
    let mut given = Event::none(h);
    for s in 0..=t {
        given = given
            .with_d(s, regime.arm(s).expect("full regime"))
            .with_x(s, x[s]);
    }
    for s in 0..t {
        given = given.with_y(s, y_hist.get(s));
    }
    let stats = eval.prob(&target, &given)?;
    let p = stats.estimate;
    let var_p = stats.std_error * stats.std_error;
    if t == h.terminal() {
        return Ok((p, var_p));
    }
    // Zero-weight branches are skipped; their cells may be empty and their
    // delta-method term vanishes because var_p is zero whenever p is 0 or 1.
    let (v1, var1) = if p > 0.0 {
        g_rec(eval, regime, x, t + 1, y_hist.pushed(true))?
    } else {
        (0.0, 0.0)
    };
    let (v0, var0) = if p < 1.0 {
        g_rec(eval, regime, x, t + 1, y_hist.pushed(false))?
    } else {
        (0.0, 0.0)
    };
    let value = p * v1 + (1.0 - p) * v0;
    let spread = v1 - v0;
    let var = spread * spread * var_p + p * p * var1 + (1.0 - p) * (1.0 - p) * var0;
    Ok((value, var))
}
