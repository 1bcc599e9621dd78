//! Flat two-period transcription of the identification formula.
//!
//! The recursion in [`super::engine`] is general over horizons, masks, and
//! constraint sets, which makes its control flow the riskiest part of the
//! crate. This module writes out the two-period full-regime terminal value
//! as one explicit formula, with every conditioning event spelled out by
//! hand, and serves as a cross-check: the two must agree to fp dust on any
//! backend, because they describe the same arithmetic.

use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::population::{BackendKind, Event, PopulationEvaluator};

use super::engine::BRANCH_FLOOR;
use super::{hstat, HistoryCell};

/// Terminal average potential outcome of a full two-period regime, written
/// flat. Mirrors [`super::identify_arsf`] on the same evaluator.
pub fn flat_arsf_two_period(
    eval: &dyn PopulationEvaluator,
    regime: &crate::model::Regime,
    x: &[usize],
) -> Result<f64> {
    let h = eval.horizon();
    if h.get() != 2 {
        return Err(Error::InvalidQuery(
            "flat transcription covers exactly two periods".into(),
        ));
    }
    if !regime.is_full() || regime.len() != 2 || x.len() != 2 {
        return Err(Error::InvalidQuery(
            "flat transcription needs a full two-period regime and shifter path".into(),
        ));
    }
    let d0 = regime.d().get(0);
    let d1 = regime.d().get(1);
    let droppable = eval.kind() != BackendKind::Exact;

    let mut w_sum = 0.0;
    let mut acc = 0.0;
    for mask in 0u32..4 {
        let z0 = mask & 1 == 1;
        let z1 = mask >> 1 & 1 == 1;
        let q_z = eval
            .prob(
                &Event::none(h).with_z(0, z0).with_z(1, z1),
                &Event::none(h),
            )?
            .estimate;
        if q_z <= 0.0 {
            continue;
        }

        let per_z = (|| -> Result<f64> {
            // Period-0 split between conformers and deviators.
            let given0 = Event::none(h).with_z(0, z0).with_x(0, x[0]);
            let w0_cons = eval.prob(&Event::none(h).with_d(0, d0), &given0)?.estimate;
            let w0_flip = eval.prob(&Event::none(h).with_d(0, !d0), &given0)?.estimate;

            let v_cons = if w0_cons > BRANCH_FLOOR {
                continuation(eval, z0, z1, d0, x[0], d1, x[1])?
            } else {
                0.0
            };
            let v_flip = if w0_flip > BRANCH_FLOOR {
                let cell0 = HistoryCell::full(0, Bits::EMPTY, Bits::EMPTY);
                let x0_sub = hstat::match_lambda(eval, &cell0, d0, x[0])?;
                continuation(eval, z0, z1, !d0, x0_sub, d1, x[1])?
            } else {
                0.0
            };
            Ok(w0_cons * v_cons + w0_flip * v_flip)
        })();
        match per_z {
            Ok(value) => {
                w_sum += q_z;
                acc += q_z * value;
            }
            // Same support policy as the recursion: a counting backend
            // drops the assignment; the identified value is assignment
            // invariant, so the kept average is consistent.
            Err(Error::UnreachableCell(_)) if droppable => {}
            Err(e) => return Err(e),
        }
    }
    if w_sum <= 0.0 {
        return Err(Error::DegenerateConditioning(
            "every instrument assignment failed cell support".into(),
        ));
    }
    Ok((acc / w_sum).clamp(0.0, 1.0))
}

/// `E[Y_1(d1 at x1)]` within the realized period-0 branch `(d0_real at
/// x0_real)`: expand the period-0 outcome, then split the terminal period
/// into conformers and redirected deviators.
fn continuation(
    eval: &dyn PopulationEvaluator,
    z0: bool,
    z1: bool,
    d0_real: bool,
    x0_real: usize,
    d1: bool,
    x1: usize,
) -> Result<f64> {
    let h = eval.horizon();
    let given_y0 = Event::none(h)
        .with_z(0, z0)
        .with_x(0, x0_real)
        .with_d(0, d0_real);
    let mut acc = 0.0;
    for y0 in [true, false] {
        let q_y = eval
            .prob(&Event::none(h).with_y(0, y0), &given_y0)?
            .estimate;
        if q_y <= BRANCH_FLOOR {
            continue;
        }
        let given1 = Event::none(h)
            .with_y(0, y0)
            .with_d(0, d0_real)
            .with_z(0, z0)
            .with_x(0, x0_real)
            .with_z(1, z1)
            .with_x(1, x1);
        let w1_cons = eval.prob(&Event::none(h).with_d(1, d1), &given1)?.estimate;
        let w1_flip = eval.prob(&Event::none(h).with_d(1, !d1), &given1)?.estimate;
        let y1 = Event::none(h).with_y(1, true);
        let p_cons = if w1_cons > BRANCH_FLOOR {
            eval.prob(&y1, &given1.clone().with_d(1, d1))?.estimate
        } else {
            0.0
        };
        let p_flip = if w1_flip > BRANCH_FLOOR {
            let cell1 = HistoryCell::full(
                1,
                Bits::EMPTY.pushed(y0),
                Bits::EMPTY.pushed(d0_real),
            );
            let x1_sub = hstat::match_lambda(eval, &cell1, d1, x1)?;
            eval.prob(&y1, &given1.clone().with_x(1, x1_sub).with_d(1, !d1))?
                .estimate
        } else {
            0.0
        };
        acc += q_y * (w1_cons * p_cons + w1_flip * p_flip);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identify::identify_arsf;
    use crate::model::{presets, Regime};
    use crate::population::exact_evaluator;
    use crate::tol::DEFAULT_QUAD_ORDER;

    #[test]
    fn flat_and_recursive_forms_agree_exactly() {
        let model = presets::example_model();
        let eval = exact_evaluator(&model, DEFAULT_QUAD_ORDER).unwrap();
        for regime in Regime::enumerate_full(2) {
            for x0 in 0..5 {
                for x1 in 0..5 {
                    let x = [x0, x1];
                    let flat = flat_arsf_two_period(&eval, &regime, &x).unwrap();
                    let rec = identify_arsf(&eval, &regime, &x).unwrap().value;
                    assert!(
                        (flat - rec).abs() < 1e-12,
                        "{regime} at {x:?}: flat {flat} vs recursive {rec}"
                    );
                }
            }
        }
    }

    #[test]
    fn agreement_holds_on_a_counted_population() {
        // Full-length conditioning cells are thin: the deepest ones hold
        // about 0.03 of a quarter of the 4% shifter cell, so a million draws
        // keeps them clear of the support floor.
        let model = presets::example_model();
        let eval =
            crate::population::mc_population_evaluator(&model, 1_000_000, 7).unwrap();
        let regime = Regime::full("10".parse().unwrap());
        let x = [2usize, 1usize];
        let flat = flat_arsf_two_period(&eval, &regime, &x).unwrap();
        let rec = identify_arsf(&eval, &regime, &x).unwrap();
        // Exact agreement even when an assignment lacks support: both forms
        // must drop the same assignments and renormalize identically.
        assert!(
            (flat - rec.value).abs() < 1e-12,
            "flat {flat} vs recursive {}",
            rec.value
        );
        assert_eq!(rec.per_z.len() + rec.dropped_z, 4);
    }

    #[test]
    fn masked_regimes_are_refused() {
        let model = presets::example_model();
        let eval = exact_evaluator(&model, DEFAULT_QUAD_ORDER).unwrap();
        let masked: Regime = "1.".parse().unwrap();
        assert!(flat_arsf_two_period(&eval, &masked, &[2, 2]).is_err());
    }
}
