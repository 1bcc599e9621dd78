//! Terminal-period treatment contrast conditional on the pre-terminal
//! outcome, with the treatment history left to the observational process.
//!
//! The estimand sets only the terminal arm: individuals reach the terminal
//! period through their own selection, conditioned on the shifter path and
//! on landing at `Y_{T-1} = y_prev`. Identification needs one redirection
//! layer: within each realized history cell, terminal deviators are sent to
//! the matched shifter point of the opposite arm, exactly as in the full
//! recursion, but no earlier period is ever intervened on.

use std::collections::HashMap;

use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::population::{BackendKind, Event, PopulationEvaluator};
use crate::tol::TRANSITION_DENOM_FLOOR;

use super::{hstat, HistoryCell, Measured};

/// Branch mass below which a history cell cannot move the result.
const PREFIX_FLOOR: f64 = 1e-11;

/// `E[Y_T(1) - Y_T(0) | Y_{T-1} = y_prev, X = x]` with the treatment
/// history observational.
pub fn identify_period_ate(
    eval: &dyn PopulationEvaluator,
    x: &[usize],
    y_prev: bool,
) -> Result<Measured> {
    let h = eval.horizon();
    let t_len = h.get();
    let term = h.terminal();
    if term == 0 {
        return Err(Error::InvalidQuery(
            "terminal-period contrast needs at least two periods".into(),
        ));
    }
    if x.len() != t_len {
        return Err(Error::InvalidQuery(format!(
            "shifter path must span {t_len} periods"
        )));
    }
    for (t, &xi) in x.iter().enumerate() {
        if xi >= eval.x_card(t) {
            return Err(Error::InvalidQuery(format!(
                "x index {xi} out of range at period {t}"
            )));
        }
    }
    let droppable = eval.kind() != BackendKind::Exact;
    // The redirection target depends only on the realized history cell, not
    // on the instrument assignment; resolve each cell once.
    let mut matches: HashMap<(u8, u8, bool), usize> = HashMap::new();

    let mut num = [Measured::exact(0.0); 2];
    let mut den = Measured::exact(0.0);
    let mut kept = 0usize;
    let mut last_drop: Option<String> = None;
    for z in Bits::enumerate(t_len) {
        let q = {
            let mut target = Event::none(h);
            for t in 0..t_len {
                target = target.with_z(t, z.get(t));
            }
            eval.prob(&target, &Event::none(h))?
        };
        if q.estimate <= 0.0 {
            continue;
        }
        match z_contribution(eval, x, y_prev, z, &mut matches) {
            Ok((num_z, den_z)) => {
                for arm in 0..2 {
                    num[arm].value += q.estimate * num_z[arm].value;
                    num[arm].std_error = num[arm].std_error.hypot(
                        (q.estimate * num_z[arm].std_error)
                            .hypot(num_z[arm].value * q.std_error),
                    );
                }
                den.value += q.estimate * den_z.value;
                den.std_error = den.std_error.hypot(
                    (q.estimate * den_z.std_error).hypot(den_z.value * q.std_error),
                );
                kept += 1;
            }
            Err(Error::UnreachableCell(why)) if droppable => last_drop = Some(why),
            Err(e) => return Err(e),
        }
    }
    if kept == 0 {
        // Surface the offending cell when every assignment dropped.
        return Err(match last_drop {
            Some(why) => Error::UnreachableCell(why),
            None => Error::DegenerateConditioning(
                "every instrument assignment failed cell support".into(),
            ),
        });
    }
    // Both sums run over the same kept assignments, so the dropped weight
    // cancels in the ratio.
    if den.value < TRANSITION_DENOM_FLOOR {
        return Err(Error::DegenerateConditioning(format!(
            "conditioning outcome event has probability {:.2e}",
            den.value
        )));
    }
    let contrast = num[1].minus(num[0]);
    let value = contrast.value / den.value;
    let var = (contrast.std_error / den.value).powi(2)
        + (contrast.value * den.std_error / (den.value * den.value)).powi(2);
    Ok(Measured {
        value,
        std_error: var.sqrt(),
    })
}

/// Numerators (per terminal arm) and denominator under one instrument
/// assignment: sums over realized histories compatible with `y_prev`.
fn z_contribution(
    eval: &dyn PopulationEvaluator,
    x: &[usize],
    y_prev: bool,
    z: Bits,
    matches: &mut HashMap<(u8, u8, bool), usize>,
) -> Result<([Measured; 2], Measured)> {
    let h = eval.horizon();
    let term = h.terminal();
    let mut num = [Measured::exact(0.0); 2];
    let mut den = Measured::exact(0.0);
    let design = {
        let mut e = Event::none(h);
        for t in 0..term {
            e = e.with_z(t, z.get(t)).with_x(t, x[t]);
        }
        e
    };
    for d_prefix in Bits::enumerate(term) {
        for y_head in Bits::enumerate(term.saturating_sub(1)) {
            let y_hist = y_head.pushed(y_prev);
            let mut target = Event::none(h);
            for t in 0..term {
                target = target.with_y(t, y_hist.get(t)).with_d(t, d_prefix.get(t));
            }
            let w = eval.prob(&target, &design)?;
            if w.estimate <= PREFIX_FLOOR {
                continue;
            }
            den.value += w.estimate;
            den.std_error = den.std_error.hypot(w.std_error);
            let given = design
                .clone()
                .and(&target)
                .expect("design and history constrain disjoint coordinates")
                .with_z(term, z.get(term))
                .with_x(term, x[term]);
            for arm in [false, true] {
                let r = terminal_branch(eval, &given, y_hist, d_prefix, arm, x[term], matches)?;
                let i = arm as usize;
                num[i].value += w.estimate * r.value;
                num[i].std_error = num[i].std_error.hypot(
                    (w.estimate * r.std_error).hypot(r.value * w.std_error),
                );
            }
        }
    }
    Ok((num, den))
}

/// `E[Y_T(arm) | history cell]`: conforming mass keeps its observed terminal
/// transition, deviating mass is redirected to the matched shifter point.
fn terminal_branch(
    eval: &dyn PopulationEvaluator,
    given: &Event,
    y_hist: Bits,
    d_prefix: Bits,
    arm: bool,
    x_term: usize,
    matches: &mut HashMap<(u8, u8, bool), usize>,
) -> Result<Measured> {
    let h = eval.horizon();
    let term = h.terminal();
    let w_cons = eval.prob(&Event::none(h).with_d(term, arm), given)?;
    let w_flip = eval.prob(&Event::none(h).with_d(term, !arm), given)?;
    let y_target = Event::none(h).with_y(term, true);
    let p_cons = if w_cons.estimate > PREFIX_FLOOR {
        eval.prob(&y_target, &given.clone().with_d(term, arm))?
    } else {
        crate::population::CellStats::exact(0.0)
    };
    let p_flip = if w_flip.estimate > PREFIX_FLOOR {
        let key = (y_hist.raw(), d_prefix.raw(), arm);
        let matched = match matches.get(&key) {
            Some(&m) => m,
            None => {
                let cell = HistoryCell::full(term, y_hist, d_prefix);
                let m = hstat::match_lambda(eval, &cell, arm, x_term)?;
                matches.insert(key, m);
                m
            }
        };
        eval.prob(
            &y_target,
            &given.clone().with_x(term, matched).with_d(term, !arm),
        )?
    } else {
        crate::population::CellStats::exact(0.0)
    };
    let value = w_cons.estimate * p_cons.estimate + w_flip.estimate * p_flip.estimate;
    let spread = p_cons.estimate - p_flip.estimate;
    let var = (spread * w_cons.std_error).powi(2)
        + (w_cons.estimate * p_cons.std_error).powi(2)
        + (w_flip.estimate * p_flip.std_error).powi(2);
    Ok(Measured {
        value,
        std_error: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;
    use crate::population::exact_evaluator;
    use crate::simulate::oracle::quadrature_period_ate;
    use crate::tol::DEFAULT_QUAD_ORDER;

    #[test]
    fn terminal_contrast_matches_the_forced_oracle() {
        let model = presets::example_model();
        let eval = exact_evaluator(&model, DEFAULT_QUAD_ORDER).unwrap();
        for y_prev in [false, true] {
            for x in [[2usize, 2usize], [0, 4], [4, 1]] {
                let got = identify_period_ate(&eval, &x, y_prev).unwrap();
                let want =
                    quadrature_period_ate(&model, &x, y_prev, DEFAULT_QUAD_ORDER).unwrap();
                assert!(
                    (got.value - want).abs() < 1e-6,
                    "y_prev={y_prev} x={x:?}: {} vs {want}",
                    got.value
                );
            }
        }
    }

    #[test]
    fn exogenous_selection_needs_no_correction() {
        // With independent latents the observational conditional equals the
        // potential-outcome contrast directly; the redirection machinery
        // must not disturb it.
        let model = presets::example_model_exogenous();
        let eval = exact_evaluator(&model, DEFAULT_QUAD_ORDER).unwrap();
        let x = [1usize, 3usize];
        let got = identify_period_ate(&eval, &x, true).unwrap();
        let want = quadrature_period_ate(&model, &x, true, DEFAULT_QUAD_ORDER).unwrap();
        assert!((got.value - want).abs() < 1e-6, "{} vs {want}", got.value);
    }
}
