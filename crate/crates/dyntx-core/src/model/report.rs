//! Identification diagnostics computed from the structural model itself.
//!
//! A well-formed model can still be unidentifiable: the instrument has to
//! move the treatment in every conditioning cell (relevance), and every
//! outcome threshold reachable under a target arm has to be matched by some
//! shifter value under the opposite arm (support). These checks evaluate both
//! directly on the threshold tables, so they describe the population a model
//! generates, not any estimator. The same conditions are re-derived from
//! observable queries inside the identification engine; there they can fail
//! with sampling noise, here they are sharp.

use serde::{Deserialize, Serialize};

use crate::bits::Bits;
use crate::numeric::norm_cdf;
use crate::tol;

use super::structural::StructuralModel;

/// Instrument strength in one conditioning cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RelevanceCell {
    pub t: usize,
    pub y_prev: Bits,
    pub d_prev: Bits,
    /// `Pr[D_t = 1 | z = 1] - Pr[D_t = 1 | z = 0]` holding the ranks at their
    /// marginal law (the structural first-stage gap; its sign also tells the
    /// engine which instrument direction raises take-up).
    pub gap: f64,
    /// Treatment is deterministic here (an absorbing or forced cell), so no
    /// instrument variation is needed.
    pub deterministic: bool,
    pub ok: bool,
}

/// A target-arm threshold with no matching shifter value on the opposite arm.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SupportGap {
    pub t: usize,
    pub y_prev: Bits,
    pub d_prev: Bits,
    /// Arm the counterfactual wants to hold fixed.
    pub target_arm: bool,
    /// Shifter index whose threshold has no partner.
    pub x: usize,
    /// The unmatched threshold value.
    pub mu: f64,
}

/// Full identification diagnostic for a model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub relevance: Vec<RelevanceCell>,
    pub min_relevance_gap: f64,
    pub support_gaps: Vec<SupportGap>,
    /// Instrument assignment probabilities that put all mass on one value.
    pub degenerate_instruments: Vec<usize>,
    pub ok: bool,
}

impl AssumptionReport {
    /// Diagnose a model. `relevance_tol` is the minimum absolute first-stage
    /// gap and `match_tol` the threshold-equality tolerance.
    pub fn for_model(model: &StructuralModel, relevance_tol: f64, match_tol: f64) -> Self {
        let relevance = check_relevance(model, relevance_tol);
        let support_gaps = check_support(model, match_tol);
        let degenerate_instruments = model
            .horizon
            .periods()
            .filter(|&t| {
                let p = model.z_law[t];
                !(p > 0.0 && p < 1.0)
            })
            .collect::<Vec<_>>();
        let min_relevance_gap = relevance
            .iter()
            .filter(|c| !c.deterministic)
            .map(|c| c.gap.abs())
            .fold(f64::INFINITY, f64::min);
        let ok = relevance.iter().all(|c| c.ok)
            && support_gaps.is_empty()
            && degenerate_instruments.is_empty();
        AssumptionReport {
            relevance,
            min_relevance_gap,
            support_gaps,
            degenerate_instruments,
            ok,
        }
    }

    /// Diagnose with the default population tolerances.
    pub fn standard(model: &StructuralModel) -> Self {
        Self::for_model(model, tol::RELEVANCE_TOL_POP, 1e-9)
    }
}

/// First-stage gaps for every conditioning cell of every period.
pub fn check_relevance(model: &StructuralModel, tol: f64) -> Vec<RelevanceCell> {
    let mut out = Vec::new();
    for t in model.horizon.periods() {
        for y_prev in Bits::enumerate(t) {
            for d_prev in Bits::enumerate(t) {
                let hi = model.pi_at(t, y_prev, d_prev, true);
                let lo = model.pi_at(t, y_prev, d_prev, false);
                let deterministic = hi.is_infinite() && lo.is_infinite() && hi == lo;
                let gap = norm_cdf(hi) - norm_cdf(lo);
                out.push(RelevanceCell {
                    t,
                    y_prev,
                    d_prev,
                    gap,
                    deterministic,
                    ok: deterministic || gap.abs() >= tol,
                });
            }
        }
    }
    out
}

/// Matching-support gaps: thresholds under a target arm that no shifter value
/// reproduces under the realized (opposite) arm, per conditioning cell.
pub fn check_support(model: &StructuralModel, tol: f64) -> Vec<SupportGap> {
    let mut out = Vec::new();
    for t in model.horizon.periods() {
        let k = model.x_grid.k(t);
        for y_prev in Bits::enumerate(t) {
            for d_prev in Bits::enumerate(t) {
                for target_arm in [false, true] {
                    let d_tgt = d_prev.pushed(target_arm);
                    let d_alt = d_prev.pushed(!target_arm);
                    for x in 0..k {
                        let mu = model.mu_at(t, y_prev, d_tgt, x);
                        let matched = (0..k).any(|xt| {
                            let alt = model.mu_at(t, y_prev, d_alt, xt);
                            thresholds_match(mu, alt, tol)
                        });
                        if !matched {
                            out.push(SupportGap { t, y_prev, d_prev, target_arm, x, mu });
                        }
                    }
                }
            }
        }
    }
    out
}

/// Equality of thresholds, treating equal infinities as matched.
pub fn thresholds_match(a: f64, b: f64, tol: f64) -> bool {
    if a.is_infinite() || b.is_infinite() {
        a == b
    } else {
        (a - b).abs() <= tol
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;

    #[test]
    fn example_model_passes_both_checks() {
        let report = AssumptionReport::standard(&presets::example_model());
        assert!(report.ok, "{report:?}");
        assert!(report.support_gaps.is_empty());
        // Weakest first stage: the fully treated successful history at the
        // terminal period.
        assert!((report.min_relevance_gap - 0.177_453).abs() < 1e-4, "{}", report.min_relevance_gap);
    }

    #[test]
    fn gapped_model_reports_the_two_terminal_gaps() {
        let report = AssumptionReport::standard(&presets::gapped_model());
        assert!(!report.ok);
        // One unmatched threshold per target arm, in each of the four
        // terminal conditioning cells.
        assert_eq!(report.support_gaps.len(), 8);
        for gap in &report.support_gaps {
            assert_eq!(gap.t, 1);
            let expect_x = if gap.target_arm { 0 } else { 3 };
            assert_eq!(gap.x, expect_x, "{gap:?}");
        }
    }

    #[test]
    fn weak_instrument_is_flagged() {
        let mut m = presets::example_model();
        let pi0 = m.pi[0].clone();
        m.pi[0] = crate::model::PiTable::from_fn(0, |y, d, _z| pi0.get(y, d, false));
        let report = AssumptionReport::standard(&m);
        assert!(!report.ok);
        assert!(report.relevance.iter().any(|c| !c.ok && c.t == 0));
    }
}
