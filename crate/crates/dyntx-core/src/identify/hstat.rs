//! Instrument contrasts: threshold-gap signs and shifter matching.
//!
//! Within a conditioning cell, shifting the instrument moves selection but
//! not outcomes. The contrast
//!
//! `h^a(x) = Pr[Y=1, D=a | Z=1, cell, x] - Pr[Y=1, D=a | Z=0, cell, x]`
//!
//! isolates the individuals the instrument pushes across the selection
//! threshold: it equals (plus or minus the direction of the instrument
//! push) the mass of those compliers whose outcome rank clears the arm-`a`
//! threshold at `x`. Adding the arm-1 contrast at one point to the arm-0
//! contrast at another cancels the complier mass and leaves a quantity whose
//! sign is the sign of the threshold gap between the two points: zero means
//! the thresholds agree, which is exactly the matching condition the
//! identification engine needs when it redirects deviators.

use crate::error::{Error, Result};
use crate::population::{BackendKind, Event, PopulationEvaluator};
use crate::tol::{H_ZERO_SE_MULT, H_ZERO_TOL_EXACT, RELEVANCE_SE_MULT, RELEVANCE_TOL_POP};

use super::{joint_outcome_arm, HistoryCell, Measured};

/// Instrument push on selection within a cell:
/// `Pr[D_t = 1 | Z_t = 1, cell] - Pr[D_t = 1 | Z_t = 0, cell]`.
///
/// The current shifter is not conditioned on: selection is excluded from it,
/// so leaving it out costs nothing and keeps cells large.
pub fn instrument_gap(
    eval: &dyn PopulationEvaluator,
    cell: &HistoryCell,
) -> Result<Measured> {
    let target = Event::none(eval.horizon()).with_d(cell.t, true);
    let base = cell.given(eval);
    let hi = eval.prob(&target, &base.clone().with_z(cell.t, true))?;
    let lo = eval.prob(&target, &base.with_z(cell.t, false))?;
    Ok(Measured {
        value: hi.estimate - lo.estimate,
        std_error: hi.std_error.hypot(lo.std_error),
    })
}

/// The instrument gap, or an error when it is too small to use.
///
/// Exact backends compare against an absolute floor; counting backends
/// additionally require the gap to clear its own noise level.
pub fn require_relevance(
    eval: &dyn PopulationEvaluator,
    cell: &HistoryCell,
) -> Result<Measured> {
    let gap = instrument_gap(eval, cell)?;
    let floor = match eval.kind() {
        BackendKind::Exact => RELEVANCE_TOL_POP,
        _ => RELEVANCE_TOL_POP.max(RELEVANCE_SE_MULT * gap.std_error),
    };
    if gap.value.abs() < floor {
        return Err(Error::IrrelevantInstrument(format!(
            "instrument moves selection by {:.2e} at period {} cell (y={}, d={}), floor {floor:.2e}",
            gap.value, cell.t, cell.y_prev, cell.d_vals
        )));
    }
    Ok(gap)
}

/// One-arm instrument contrast `h^arm(x)` in a cell.
pub fn h_arm(
    eval: &dyn PopulationEvaluator,
    cell: &HistoryCell,
    arm: bool,
    x: usize,
) -> Result<Measured> {
    let hi = joint_outcome_arm(eval, cell, arm, true, x)?;
    let lo = joint_outcome_arm(eval, cell, arm, false, x)?;
    Ok(hi.minus(lo))
}

/// Cross-arm contrast `h^1(x_arm1) + h^0(x_arm0)`. Its sign (after aligning
/// with the instrument direction) is the sign of
/// `mu(arm 1 at x_arm1) - mu(arm 0 at x_arm0)`.
pub fn h_pair(
    eval: &dyn PopulationEvaluator,
    cell: &HistoryCell,
    x_arm1: usize,
    x_arm0: usize,
) -> Result<Measured> {
    let a1 = h_arm(eval, cell, true, x_arm1)?;
    let a0 = h_arm(eval, cell, false, x_arm0)?;
    Ok(Measured {
        value: a1.value + a0.value,
        std_error: a1.std_error.hypot(a0.std_error),
    })
}

fn zero_tol(eval: &dyn PopulationEvaluator, stat: Measured) -> f64 {
    match eval.kind() {
        BackendKind::Exact => H_ZERO_TOL_EXACT,
        _ => H_ZERO_TOL_EXACT.max(H_ZERO_SE_MULT * stat.std_error),
    }
}

/// Sign of `mu(target_arm at x_target) - mu(other arm at x_other)` within a
/// cell: -1, 0 (within tolerance of equal), or +1.
pub fn mu_gap_sign(
    eval: &dyn PopulationEvaluator,
    cell: &HistoryCell,
    target_arm: bool,
    x_target: usize,
    x_other: usize,
) -> Result<i8> {
    let gap = require_relevance(eval, cell)?;
    let rho = if target_arm {
        h_pair(eval, cell, x_target, x_other)?
    } else {
        h_pair(eval, cell, x_other, x_target)?
    };
    if rho.value.abs() <= zero_tol(eval, rho) {
        return Ok(0);
    }
    let mut sign = if rho.value > 0.0 { 1i8 } else { -1i8 };
    // The pair statistic is complier mass times the threshold-gap sign,
    // oriented by which way the instrument pushes selection.
    if gap.value < 0.0 {
        sign = -sign;
    }
    if !target_arm {
        sign = -sign;
    }
    Ok(sign)
}

/// Result of scanning the shifter grid for matches to `(target_arm, x)`.
#[derive(Clone, Debug)]
pub struct MatchScan {
    pub target_arm: bool,
    pub x: usize,
    /// Pair statistic per candidate grid point of the opposite arm.
    pub residuals: Vec<Measured>,
    /// Zero tolerance used for each candidate.
    pub zero_tol: Vec<f64>,
    /// Sign of `mu(target_arm at x) - mu(other arm at candidate)`.
    pub gap_sign: Vec<i8>,
    /// Every defensible match (residual within its zero tolerance), sorted
    /// by residual magnitude. Any of them identifies the same value up to
    /// the tolerance; the engine audits that claim when there are several.
    pub candidates: Vec<usize>,
    /// Minimal-residual candidate.
    pub chosen: Option<usize>,
}

/// Scan every opposite-arm grid point for a threshold match.
pub fn scan_matches(
    eval: &dyn PopulationEvaluator,
    cell: &HistoryCell,
    target_arm: bool,
    x: usize,
) -> Result<MatchScan> {
    let gap = require_relevance(eval, cell)?;
    let k = eval.x_card(cell.t);
    if x >= k {
        return Err(Error::InvalidQuery(format!(
            "x index {x} out of range at period {}",
            cell.t
        )));
    }
    let mut residuals = Vec::with_capacity(k);
    let mut tols = Vec::with_capacity(k);
    let mut signs = Vec::with_capacity(k);
    for cand in 0..k {
        let rho = if target_arm {
            h_pair(eval, cell, x, cand)?
        } else {
            h_pair(eval, cell, cand, x)?
        };
        let tol = zero_tol(eval, rho);
        let sign = if rho.value.abs() <= tol {
            0
        } else {
            let mut s = if rho.value > 0.0 { 1i8 } else { -1i8 };
            if gap.value < 0.0 {
                s = -s;
            }
            if !target_arm {
                s = -s;
            }
            s
        };
        residuals.push(rho);
        tols.push(tol);
        signs.push(sign);
    }
    let mut candidates: Vec<usize> = (0..k)
        .filter(|&c| residuals[c].value.abs() <= tols[c])
        .collect();
    candidates.sort_by(|&a, &b| {
        residuals[a]
            .value
            .abs()
            .total_cmp(&residuals[b].value.abs())
    });
    let chosen = candidates.first().copied();
    Ok(MatchScan {
        target_arm,
        x,
        residuals,
        zero_tol: tols,
        gap_sign: signs,
        candidates,
        chosen,
    })
}

/// The shifter substitution for redirecting deviators: a grid point where
/// the opposite arm's threshold equals the target arm's threshold at `x`.
pub fn match_lambda(
    eval: &dyn PopulationEvaluator,
    cell: &HistoryCell,
    target_arm: bool,
    x: usize,
) -> Result<usize> {
    let scan = scan_matches(eval, cell, target_arm, x)?;
    scan.chosen.ok_or_else(|| {
        Error::NoMatch(format!(
            "no opposite-arm shifter matches arm {} at x={x}, period {}, cell (y={}, d={})",
            target_arm as u8, cell.t, cell.y_prev, cell.d_vals
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::Bits;
    use crate::model::presets;
    use crate::population::exact_evaluator;
    use crate::tol::DEFAULT_QUAD_ORDER;

    fn eval() -> crate::population::ExactEvaluator {
        exact_evaluator(&presets::example_model(), DEFAULT_QUAD_ORDER).unwrap()
    }

    #[test]
    fn instrument_gap_matches_the_propensity_contrast() {
        let ev = eval();
        let cell = HistoryCell::full(0, Bits::EMPTY, Bits::EMPTY);
        let gap = require_relevance(&ev, &cell).unwrap();
        let want = crate::numeric::norm_cdf(0.5) - crate::numeric::norm_cdf(-0.3);
        assert!((gap.value - want).abs() < 1e-9, "{} vs {want}", gap.value);
    }

    #[test]
    fn arm_contrasts_have_the_predicted_signs() {
        // Arm-1 contrasts count compliers into treatment (positive when the
        // instrument pushes up); arm-0 contrasts count them out (negative).
        let ev = eval();
        let cell = HistoryCell::full(0, Bits::EMPTY, Bits::EMPTY);
        for x in 0..5 {
            assert!(h_arm(&ev, &cell, true, x).unwrap().value > 0.0);
            assert!(h_arm(&ev, &cell, false, x).unwrap().value < 0.0);
        }
    }

    #[test]
    fn threshold_gap_signs_match_the_structural_tables() {
        // Period-0 thresholds: arm 1 at x has shift s1[x], arm 0 at x has
        // shift s1[(x+1) % 5]; both share intercept 0.1.
        let model = presets::example_model();
        let ev = eval();
        let cell = HistoryCell::full(0, Bits::EMPTY, Bits::EMPTY);
        for target_arm in [false, true] {
            for x_t in 0..5 {
                for x_o in 0..5 {
                    let mu_t =
                        model.mu_at(0, Bits::EMPTY, Bits::EMPTY.pushed(target_arm), x_t);
                    let mu_o =
                        model.mu_at(0, Bits::EMPTY, Bits::EMPTY.pushed(!target_arm), x_o);
                    let diff = mu_t - mu_o;
                    let want = if diff.abs() < 1e-9 { 0 } else { diff.signum() as i8 };
                    let got = mu_gap_sign(&ev, &cell, target_arm, x_t, x_o).unwrap();
                    assert_eq!(
                        got, want,
                        "arm {target_arm} x_t={x_t} x_o={x_o}: mu {mu_t} vs {mu_o}"
                    );
                }
            }
        }
    }

    #[test]
    fn matching_finds_the_cyclic_neighbor() {
        // By construction mu(1, x) = mu(0, (x + 4) % 5) at period 0: arm 1
        // at x uses shift s1[x] and arm 0 at x~ uses s1[(x~ + 1) % 5].
        let ev = eval();
        let cell = HistoryCell::full(0, Bits::EMPTY, Bits::EMPTY);
        for x in 0..5 {
            let m = match_lambda(&ev, &cell, true, x).unwrap();
            assert_eq!(m, (x + 4) % 5, "target arm 1 at x={x}");
            let m0 = match_lambda(&ev, &cell, false, x).unwrap();
            assert_eq!(m0, (x + 1) % 5, "target arm 0 at x={x}");
        }
    }

    #[test]
    fn matching_reports_support_failure_on_the_truncated_grid() {
        let model = presets::gapped_model();
        let ev = exact_evaluator(&model, DEFAULT_QUAD_ORDER).unwrap();
        // Terminal period, cell (y0=0, d0=0): arm 1 at x=0 needs the removed
        // grid point.
        let cell = HistoryCell::full(1, Bits::zeros(1), Bits::zeros(1));
        let err = match_lambda(&ev, &cell, true, 0).unwrap_err();
        assert!(matches!(err, Error::NoMatch(_)), "{err}");
        let scan = scan_matches(&ev, &cell, true, 0).unwrap();
        assert!(scan.chosen.is_none());
        assert!(scan.candidates.is_empty());
        // All remaining candidates have strictly larger thresholds: the
        // matched point was the smallest-shift one.
        assert!(scan.gap_sign.iter().all(|&s| s == -1), "{:?}", scan.gap_sign);
    }

    #[test]
    fn degenerate_instruments_are_refused() {
        let mut model = presets::example_model();
        // Make the period-0 instrument useless in the selection equation.
        model.pi[0] = crate::model::PiTable::from_fn(0, |_, _, _| -0.3);
        let ev = exact_evaluator(&model, DEFAULT_QUAD_ORDER).unwrap();
        let cell = HistoryCell::full(0, Bits::EMPTY, Bits::EMPTY);
        let err = match_lambda(&ev, &cell, true, 0).unwrap_err();
        assert!(matches!(err, Error::IrrelevantInstrument(_)), "{err}");
    }
}
