//! The identification recursion over treatment paths.
//!
//! For a target path `d` and shifter path `x`, the engine walks periods
//! forward holding an instrument assignment fixed. At an active period `t`
//! the population splits into conformers (`D_t` equals the target arm,
//! weight queried from the data) and deviators. Conformers contribute their
//! observed outcome transition at `x_t`; deviators are redirected to the
//! matched shifter point where their arm's outcome threshold equals the
//! target arm's at `x_t`, so their observed transitions reproduce the target
//! outcome law, and the walk continues down both branches (a deviator branch
//! can deviate again later). Inactive periods of a masked query are plain
//! outcome expansions with treatment, instrument, and shifter marginalized.
//!
//! Every quantity is computed once per instrument assignment and then
//! averaged with the assignment's probability. The identified value does not
//! depend on the assignment (instruments are excluded from outcomes), which
//! the per-assignment values expose for testing; averaging just reduces
//! noise on counting backends. On counting backends an assignment whose
//! cells fall under the support floor is dropped and the weights are
//! renormalized, which is consistent for exactly the same reason.
//!
//! When a noisy backend cannot distinguish several shifter points as the
//! match, the engine uses the minimal-residual one, then audits the others:
//! the final value is recomputed under each alternative, the spread is
//! recorded, and a spread beyond [`MATCH_SPREAD_FACTOR`] times the matching
//! tolerance fails the query instead of silently picking a side.

use serde::Serialize;
use std::cell::RefCell;
use std::collections::HashMap;

use crate::bits::{Bits, MAX_LEN};
use crate::error::{Error, Result};
use crate::model::Regime;
use crate::population::{BackendKind, Event, PopulationEvaluator};
use crate::tol::{
    EXACT_MASS_FLOOR, MATCH_SPREAD_FACTOR, TRANSITION_DENOM_FLOOR,
};

use super::hstat::{self, MatchScan};
use super::{HistoryCell, Measured};

/// Branches lighter than this cannot move any tested tolerance and are
/// skipped; recursing into them would only manufacture support failures.
pub(crate) const BRANCH_FLOOR: f64 = 10.0 * EXACT_MASS_FLOOR;

/// Sibling weights may disagree with one by more than fp dust only if a
/// backend is inconsistent; above this the engine refuses to continue.
const WEIGHT_SUM_PANIC: f64 = 1e-6;

/// A joint potential-outcome query: probability that the outcome path under
/// the (possibly masked) target regime hits every `(period, value)`
/// constraint, given the shifter path at active periods.
#[derive(Clone, Debug)]
pub struct JointQuery {
    pub regime: Regime,
    pub x: Vec<usize>,
    pub constraints: Vec<(usize, bool)>,
}

/// An identified value with its evaluation diagnostics.
#[derive(Clone, Debug, Serialize)]
pub struct Identified {
    pub value: f64,
    /// First-order propagated standard error; zero on exact backends.
    pub std_error: f64,
    /// Per-instrument-assignment values before averaging. Each entry lists
    /// the assignment as `(period, value)` pairs over active periods.
    pub per_z: Vec<(Vec<(usize, bool)>, f64)>,
    /// Assignments dropped for lack of cell support (counting backends).
    pub dropped_z: usize,
    /// Largest observed deviation from one of any sibling weight pair
    /// (conform/deviate) or outcome alphabet sum.
    pub weight_sum_residual: f64,
    /// Largest shift of the value under an alternative shifter match.
    pub match_spread: f64,
    pub trace: Vec<String>,
}

impl Identified {
    pub fn measured(&self) -> Measured {
        Measured {
            value: self.value,
            std_error: self.std_error,
        }
    }
}

/// `Pr[outcome constraints hold under the regime | x at active periods]`.
pub fn identify_joint_prob(
    eval: &dyn PopulationEvaluator,
    regime: &Regime,
    x: &[usize],
    constraints: &[(usize, bool)],
) -> Result<Identified> {
    run(eval, regime, x, constraints, false)
}

/// Average potential outcome at period `t` under the regime prefix:
/// `E[Y_t(regime) | x at active periods]`.
pub fn identify_arsf_at(
    eval: &dyn PopulationEvaluator,
    regime: &Regime,
    x: &[usize],
    t: usize,
) -> Result<Identified> {
    run(eval, regime, x, &[(t, true)], false)
}

/// Terminal-period average potential outcome under the regime.
pub fn identify_arsf(
    eval: &dyn PopulationEvaluator,
    regime: &Regime,
    x: &[usize],
) -> Result<Identified> {
    identify_arsf_at(eval, regime, x, eval.horizon().terminal())
}

/// Terminal-period average potential outcome, with a recursion trace.
pub fn identify_arsf_traced(
    eval: &dyn PopulationEvaluator,
    regime: &Regime,
    x: &[usize],
) -> Result<Identified> {
    run(
        eval,
        regime,
        x,
        &[(eval.horizon().terminal(), true)],
        true,
    )
}

/// Terminal average treatment effect between two regimes at a common
/// shifter path.
pub fn identify_ate(
    eval: &dyn PopulationEvaluator,
    regime_a: &Regime,
    regime_b: &Regime,
    x: &[usize],
) -> Result<Measured> {
    let a = identify_arsf(eval, regime_a, x)?;
    let b = identify_arsf(eval, regime_b, x)?;
    Ok(a.measured().minus(b.measured()))
}

/// `Pr[Y_term(regime) = 1 | Y_period(regime) = y_prev, x]`: the terminal
/// transition probability conditional on a potential-outcome history event.
pub fn identify_transition_prob(
    eval: &dyn PopulationEvaluator,
    regime: &Regime,
    x: &[usize],
    period: usize,
    y_prev: bool,
) -> Result<Measured> {
    let term = eval.horizon().terminal();
    if period >= term {
        return Err(Error::InvalidQuery(format!(
            "conditioning period {period} must precede the terminal period {term}"
        )));
    }
    let num = run(eval, regime, x, &[(period, y_prev), (term, true)], false)?;
    let den = run(eval, regime, x, &[(period, y_prev)], false)?;
    if den.value < TRANSITION_DENOM_FLOOR {
        return Err(Error::DegenerateConditioning(format!(
            "conditioning outcome event has probability {:.2e}",
            den.value
        )));
    }
    let value = num.value / den.value;
    // Delta method for the ratio.
    let var = (num.std_error / den.value).powi(2)
        + (num.value * den.std_error / (den.value * den.value)).powi(2);
    Ok(Measured {
        value,
        std_error: var.sqrt(),
    })
}

/// Transition effect: contrast of [`identify_transition_prob`] between two
/// regimes.
pub fn identify_transition_ate(
    eval: &dyn PopulationEvaluator,
    regime_a: &Regime,
    regime_b: &Regime,
    x: &[usize],
    period: usize,
    y_prev: bool,
) -> Result<Measured> {
    let a = identify_transition_prob(eval, regime_a, x, period, y_prev)?;
    let b = identify_transition_prob(eval, regime_b, x, period, y_prev)?;
    Ok(a.minus(b))
}

fn run(
    eval: &dyn PopulationEvaluator,
    regime: &Regime,
    x: &[usize],
    constraints: &[(usize, bool)],
    trace_on: bool,
) -> Result<Identified> {
    let t_len = eval.horizon().get();
    if regime.len() != t_len || x.len() != t_len {
        return Err(Error::InvalidQuery(format!(
            "regime and shifter paths must span {t_len} periods"
        )));
    }
    if constraints.is_empty() {
        return Err(Error::InvalidQuery("no outcome constraints given".into()));
    }
    let mut per_period: Vec<Option<bool>> = vec![None; t_len];
    let mut t_end = 0;
    for &(t, v) in constraints {
        if t >= t_len {
            return Err(Error::InvalidQuery(format!(
                "constraint period {t} out of range"
            )));
        }
        if per_period[t].is_some_and(|c| c != v) {
            // Contradictory constraints: the event is empty.
            return Ok(Identified {
                value: 0.0,
                std_error: 0.0,
                per_z: Vec::new(),
                dropped_z: 0,
                weight_sum_residual: 0.0,
                match_spread: 0.0,
                trace: Vec::new(),
            });
        }
        per_period[t] = Some(v);
        t_end = t_end.max(t);
    }
    for t in 0..=t_end {
        if regime.is_active(t) && x[t] >= eval.x_card(t) {
            return Err(Error::InvalidQuery(format!(
                "x index {} out of range at period {t}",
                x[t]
            )));
        }
    }
    let mut x_arr = [0u8; MAX_LEN];
    for (t, &xi) in x.iter().enumerate() {
        x_arr[t] = xi as u8;
    }
    let mut engine = Engine {
        eval,
        regime: *regime,
        constraints: per_period,
        t_end,
        trace_on,
        matches: RefCell::new(HashMap::new()),
        override_node: None,
    };
    let active: Vec<usize> = (0..=t_end).filter(|&t| regime.is_active(t)).collect();

    let mut main = z_loop(&engine, &active, x_arr)?;

    // Audit every flip node where the backend could not single out the
    // match: the identified value must not depend on which defensible
    // candidate is substituted.
    let probes: Vec<(FlipKey, MatchScan)> = engine
        .matches
        .borrow()
        .iter()
        .filter(|(_, scan)| scan.candidates.len() > 1)
        .map(|(k, scan)| (*k, scan.clone()))
        .collect();
    let mut match_spread = 0.0f64;
    for (key, scan) in probes {
        let chosen = scan.chosen.expect("multi-candidate scan has a chosen match");
        for &alt in scan.candidates.iter().filter(|&&c| c != chosen) {
            engine.override_node = Some((key, alt));
            match z_loop(&engine, &active, x_arr) {
                Ok(alt_run) => {
                    let spread = (alt_run.value - main.value).abs();
                    match_spread = match_spread.max(spread);
                    let tol = scan.zero_tol[alt].max(scan.zero_tol[chosen]);
                    if trace_on {
                        main.trace.push(format!(
                            "match audit t={}: alternate x~={alt} (over {chosen}) shifts value by {spread:.3e}, tol {tol:.1e}",
                            key.0
                        ));
                    }
                    if spread > MATCH_SPREAD_FACTOR * tol {
                        return Err(Error::Numeric(format!(
                            "shifter matches {chosen} and {alt} at period {} disagree: \
                             value shifts by {spread:.3e} against tolerance {tol:.1e}",
                            key.0
                        )));
                    }
                }
                // The alternative path may lack support of its own; that
                // leaves the audit inconclusive, not the value wrong.
                Err(
                    Error::UnreachableCell(why)
                    | Error::NoMatch(why)
                    | Error::DegenerateConditioning(why),
                ) => {
                    if trace_on {
                        main.trace.push(format!(
                            "match audit t={}: alternate x~={alt} not evaluable ({why})",
                            key.0
                        ));
                    }
                }
                Err(e) => return Err(e),
            }
        }
        engine.override_node = None;
    }

    Ok(Identified {
        value: main.value,
        std_error: main.var.sqrt(),
        per_z: main.per_z,
        dropped_z: main.dropped,
        weight_sum_residual: main.weight_residual,
        match_spread,
        trace: main.trace,
    })
}

struct ZAggregate {
    value: f64,
    var: f64,
    per_z: Vec<(Vec<(usize, bool)>, f64)>,
    dropped: usize,
    weight_residual: f64,
    trace: Vec<String>,
}

fn z_loop(engine: &Engine, active: &[usize], x_arr: [u8; MAX_LEN]) -> Result<ZAggregate> {
    let eval = engine.eval;
    let t_len = eval.horizon().get();
    let droppable = eval.kind() != BackendKind::Exact;

    let mut per_z = Vec::new();
    let mut trace = Vec::new();
    let mut dropped = 0usize;
    let mut last_drop: Option<String> = None;
    let mut weight_residual = 0.0f64;
    let mut w_sum = 0.0;
    let mut acc = 0.0;
    let mut kept: Vec<(f64, f64, f64, f64)> = Vec::new(); // (q, var_q, value, var)
    for mask in 0u32..(1 << active.len()) {
        let assignment: Vec<(usize, bool)> = active
            .iter()
            .enumerate()
            .map(|(i, &t)| (t, mask >> i & 1 == 1))
            .collect();
        let q = z_weight(eval, &assignment)?;
        if q.value <= 0.0 {
            continue;
        }
        let mut z = vec![None; t_len];
        for &(t, v) in &assignment {
            z[t] = Some(v);
        }
        let mut zrun = ZRun {
            eng: engine,
            z,
            memo: HashMap::new(),
            weight_residual: 0.0,
            trace: Vec::new(),
        };
        match zrun.node(0, engine.regime.d(), x_arr, Bits::EMPTY) {
            Ok((v, var)) => {
                per_z.push((assignment, v));
                weight_residual = weight_residual.max(zrun.weight_residual);
                trace.append(&mut zrun.trace);
                w_sum += q.value;
                acc += q.value * v;
                kept.push((q.value, q.std_error * q.std_error, v, var));
            }
            Err(Error::UnreachableCell(why)) if droppable => {
                dropped += 1;
                if engine.trace_on {
                    trace.push(format!("drop z {assignment:?}: {why}"));
                }
                last_drop = Some(why);
            }
            Err(e) => return Err(e),
        }
    }
    if w_sum <= 0.0 {
        // Every assignment dropped: surface the offending cell instead of a
        // bare degenerate-conditioning report.
        return Err(match last_drop {
            Some(why) => Error::UnreachableCell(why),
            None => Error::DegenerateConditioning(
                "every instrument assignment failed cell support".into(),
            ),
        });
    }
    let value = acc / w_sum;
    let mut var = 0.0;
    for (q, var_q, v, var_v) in kept {
        var += (q / w_sum).powi(2) * var_v + ((v - value) / w_sum).powi(2) * var_q;
    }
    Ok(ZAggregate {
        value: value.clamp(0.0, 1.0),
        var,
        per_z,
        dropped,
        weight_residual,
        trace,
    })
}

/// Probability of one instrument assignment. Instruments are exogenous, so
/// no conditioning is needed (or wanted: the marginal cell is the largest).
fn z_weight(
    eval: &dyn PopulationEvaluator,
    assignment: &[(usize, bool)],
) -> Result<Measured> {
    let h = eval.horizon();
    let mut target = Event::none(h);
    for &(t, v) in assignment {
        target = target.with_z(t, v);
    }
    let stats = eval.prob(&target, &Event::none(h))?;
    Ok(Measured {
        value: stats.estimate,
        std_error: stats.std_error,
    })
}

/// Identity of one redirection site: period, realized outcome history,
/// realized treatment prefix, target arm, and the shifter point to match.
type FlipKey = (usize, u8, u8, bool, u8);

struct Engine<'e> {
    eval: &'e dyn PopulationEvaluator,
    regime: Regime,
    constraints: Vec<Option<bool>>,
    t_end: usize,
    trace_on: bool,
    /// Scan cache: the redirection target depends only on the realized
    /// cell, not on the instrument assignment being integrated over.
    matches: RefCell<HashMap<FlipKey, MatchScan>>,
    /// One-site substitution used by the match audit.
    override_node: Option<(FlipKey, usize)>,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct NodeKey {
    t: usize,
    d: u8,
    y: u8,
    x: u64,
}

fn pack_x(x: &[u8; MAX_LEN]) -> u64 {
    x.iter()
        .enumerate()
        .fold(0u64, |a, (i, &v)| a | (v as u64) << (8 * i))
}

struct ZRun<'a, 'e> {
    eng: &'a Engine<'e>,
    z: Vec<Option<bool>>,
    memo: HashMap<NodeKey, (f64, f64)>,
    weight_residual: f64,
    trace: Vec<String>,
}

impl ZRun<'_, '_> {
    /// Conditioning observable up to period `t`: all past outcomes, plus
    /// instrument, shifter, and treatment at active periods (instrument and
    /// shifter including period `t` itself, treatment up to `t - 1`).
    fn prefix_given(&self, t: usize, d_vals: Bits, x_cur: &[u8; MAX_LEN], y_hist: Bits) -> Event {
        let mut e = Event::none(self.eng.eval.horizon());
        for s in 0..t {
            e = e.with_y(s, y_hist.get(s));
            if self.eng.regime.is_active(s) {
                e = e.with_d(s, d_vals.get(s));
            }
        }
        for s in 0..=t.min(self.eng.t_end) {
            if self.eng.regime.is_active(s) {
                if let Some(zv) = self.z[s] {
                    e = e.with_z(s, zv);
                }
                e = e.with_x(s, x_cur[s] as usize);
            }
        }
        e
    }

    /// The shifter point deviators are redirected to, resolved through the
    /// engine-wide scan cache and the audit override.
    fn matched_x(
        &mut self,
        t: usize,
        d_vals: Bits,
        x_cur: &[u8; MAX_LEN],
        y_hist: Bits,
    ) -> Result<usize> {
        let arm = d_vals.get(t);
        let key: FlipKey = (t, y_hist.raw(), d_vals.prefix(t).raw(), arm, x_cur[t]);
        let cached = self.eng.matches.borrow().get(&key).cloned();
        let scan = match cached {
            Some(scan) => scan,
            None => {
                let cell = HistoryCell::masked(
                    t,
                    y_hist,
                    d_vals.prefix(t),
                    self.eng.regime.active().prefix(t),
                );
                let scan = hstat::scan_matches(self.eng.eval, &cell, arm, x_cur[t] as usize)?;
                self.eng.matches.borrow_mut().insert(key, scan.clone());
                scan
            }
        };
        if let Some((site, alt)) = self.eng.override_node {
            if site == key {
                return Ok(alt);
            }
        }
        scan.chosen.ok_or_else(|| {
            Error::NoMatch(format!(
                "no opposite-arm shifter matches arm {} at x={}, period {t}, cell (y={y_hist}, d={})",
                arm as u8,
                x_cur[t],
                d_vals.prefix(t)
            ))
        })
    }

    fn node(
        &mut self,
        t: usize,
        d_vals: Bits,
        x_cur: [u8; MAX_LEN],
        y_hist: Bits,
    ) -> Result<(f64, f64)> {
        if t > self.eng.t_end {
            return Ok((1.0, 0.0));
        }
        let key = NodeKey {
            t,
            d: d_vals.raw(),
            y: y_hist.raw(),
            x: pack_x(&x_cur),
        };
        if let Some(&hit) = self.memo.get(&key) {
            return Ok(hit);
        }
        let out = if self.eng.regime.is_active(t) {
            self.active_node(t, d_vals, x_cur, y_hist)?
        } else {
            self.outcome_step(t, d_vals, x_cur, y_hist, false)?
        };
        self.memo.insert(key, out);
        Ok(out)
    }

    fn active_node(
        &mut self,
        t: usize,
        d_vals: Bits,
        x_cur: [u8; MAX_LEN],
        y_hist: Bits,
    ) -> Result<(f64, f64)> {
        let eval = self.eng.eval;
        let arm = d_vals.get(t);
        let given = self.prefix_given(t, d_vals, &x_cur, y_hist);
        let h = eval.horizon();
        let w_cons = eval.prob(&Event::none(h).with_d(t, arm), &given)?;
        let w_flip = eval.prob(&Event::none(h).with_d(t, !arm), &given)?;
        let resid = (w_cons.estimate + w_flip.estimate - 1.0).abs();
        self.weight_residual = self.weight_residual.max(resid);
        if resid > WEIGHT_SUM_PANIC {
            return Err(Error::Numeric(format!(
                "treatment branch weights sum to 1{resid:+.2e} at period {t}"
            )));
        }

        let (v_cons, var_cons) = if w_cons.estimate > BRANCH_FLOOR {
            self.outcome_step(t, d_vals, x_cur, y_hist, true)?
        } else {
            (0.0, 0.0)
        };
        let (v_flip, var_flip) = if w_flip.estimate > BRANCH_FLOOR {
            let matched = self.matched_x(t, d_vals, &x_cur, y_hist)?;
            if self.eng.trace_on {
                self.trace.push(format!(
                    "t={t} y={y_hist} d={d_vals} x={}: deviators (w={:.4}) redirected to x~={matched}",
                    x_cur[t], w_flip.estimate
                ));
            }
            let mut x_sub = x_cur;
            x_sub[t] = matched as u8;
            self.outcome_step(t, d_vals.flipped(t), x_sub, y_hist, true)?
        } else {
            (0.0, 0.0)
        };

        let value = w_cons.estimate * v_cons + w_flip.estimate * v_flip;
        let spread = v_cons - v_flip;
        let var = spread * spread * w_cons.std_error * w_cons.std_error
            + w_cons.estimate * w_cons.estimate * var_cons
            + w_flip.estimate * w_flip.estimate * var_flip;
        Ok((value, var))
    }

    /// Expand the period-`t` outcome given the realized arm (`conditioned`
    /// when the period is active) and recurse.
    fn outcome_step(
        &mut self,
        t: usize,
        d_vals: Bits,
        x_cur: [u8; MAX_LEN],
        y_hist: Bits,
        conditioned: bool,
    ) -> Result<(f64, f64)> {
        let eval = self.eng.eval;
        let h = eval.horizon();
        let mut given = self.prefix_given(t, d_vals, &x_cur, y_hist);
        if conditioned {
            given = given.with_d(t, d_vals.get(t));
        }
        let branch = |zr: &mut Self, y_t: bool| -> Result<(Measured, f64, f64)> {
            let q = eval.prob(&Event::none(h).with_y(t, y_t), &given)?;
            let q = Measured {
                value: q.estimate,
                std_error: q.std_error,
            };
            if q.value <= BRANCH_FLOOR {
                return Ok((q, 0.0, 0.0));
            }
            let (v, var) = zr.node(t + 1, d_vals, x_cur, y_hist.pushed(y_t))?;
            Ok((q, v, var))
        };
        match self.eng.constraints[t] {
            Some(yv) => {
                let (q, v, var) = branch(self, yv)?;
                // Joint semantics: keep the constrained branch with its
                // weight, no renormalization.
                let value = q.value * v;
                let dvar = v * v * q.std_error * q.std_error + q.value * q.value * var;
                Ok((value, dvar))
            }
            None => {
                let (q1, v1, var1) = branch(self, true)?;
                let (q0, v0, var0) = branch(self, false)?;
                let resid = (q1.value + q0.value - 1.0).abs();
                self.weight_residual = self.weight_residual.max(resid);
                if resid > WEIGHT_SUM_PANIC {
                    return Err(Error::Numeric(format!(
                        "outcome branch weights sum to 1{resid:+.2e} at period {t}"
                    )));
                }
                let value = q1.value * v1 + q0.value * v0;
                let spread = v1 - v0;
                let var = spread * spread * q1.std_error * q1.std_error
                    + q1.value * q1.value * var1
                    + q0.value * q0.value * var0;
                Ok((value, var))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;
    use crate::population::exact_evaluator;
    use crate::simulate::oracle::quadrature_regime_outcomes;
    use crate::tol::DEFAULT_QUAD_ORDER;

    fn full(bits: &str) -> Regime {
        Regime::full(bits.parse().unwrap())
    }

    #[test]
    fn identified_arsf_matches_the_forced_oracle_under_endogeneity() {
        let model = presets::example_model();
        let eval = exact_evaluator(&model, DEFAULT_QUAD_ORDER).unwrap();
        for (regime, x) in [
            (full("11"), [2usize, 2usize]),
            (full("00"), [1, 3]),
            (full("10"), [0, 4]),
            (full("01"), [4, 0]),
        ] {
            let got = identify_arsf(&eval, &regime, &x).unwrap();
            let want =
                quadrature_regime_outcomes(&model, &regime, &x, DEFAULT_QUAD_ORDER).unwrap()[1];
            assert!(
                (got.value - want).abs() < 1e-6,
                "{regime} at {x:?}: {} vs {want}",
                got.value
            );
            assert!(got.weight_sum_residual < 1e-10);
            assert_eq!(got.dropped_z, 0);
            // Exact scans single out the match; nothing to audit.
            assert_eq!(got.match_spread, 0.0);
        }
    }

    #[test]
    fn per_assignment_values_are_invariant() {
        // Instruments are excluded from outcomes, so each assignment must
        // identify the same number.
        let model = presets::example_model();
        let eval = exact_evaluator(&model, DEFAULT_QUAD_ORDER).unwrap();
        let got = identify_arsf(&eval, &full("10"), &[2, 1]).unwrap();
        assert_eq!(got.per_z.len(), 4);
        for (assignment, v) in &got.per_z {
            assert!(
                (v - got.value).abs() < 1e-7,
                "assignment {assignment:?}: {v} vs {}",
                got.value
            );
        }
    }

    #[test]
    fn per_period_values_truncate_the_horizon() {
        let model = presets::example_model();
        let eval = exact_evaluator(&model, DEFAULT_QUAD_ORDER).unwrap();
        let regime = full("11");
        let x = [3usize, 1usize];
        let want =
            quadrature_regime_outcomes(&model, &regime, &x, DEFAULT_QUAD_ORDER).unwrap();
        for t in 0..2 {
            let got = identify_arsf_at(&eval, &regime, &x, t).unwrap();
            assert!(
                (got.value - want[t]).abs() < 1e-6,
                "t={t}: {} vs {}",
                got.value,
                want[t]
            );
        }
    }

    #[test]
    fn masked_queries_match_the_masked_oracle() {
        let model = presets::masked_example_model();
        let eval = exact_evaluator(&model, DEFAULT_QUAD_ORDER).unwrap();
        for arm in [false, true] {
            let regime = Regime::masked(
                Bits::from_slice(&[arm, false]),
                Bits::from_slice(&[true, false]),
            )
            .unwrap();
            let x = [1usize, 0usize];
            let got = identify_arsf(&eval, &regime, &x).unwrap();
            let want = crate::simulate::oracle::quadrature_regime_outcomes(
                &model,
                &regime,
                &x,
                DEFAULT_QUAD_ORDER,
            )
            .unwrap()[1];
            assert!(
                (got.value - want).abs() < 1e-6,
                "arm {arm}: {} vs {want}",
                got.value
            );
            // Only the active period's instrument is aggregated over.
            assert_eq!(got.per_z.len(), 2);
        }
    }

    #[test]
    fn fully_masked_regime_reduces_to_the_full_one() {
        let model = presets::example_model();
        let eval = exact_evaluator(&model, DEFAULT_QUAD_ORDER).unwrap();
        let d: Bits = "10".parse().unwrap();
        let full_r = Regime::full(d);
        let masked_all = Regime::masked(d, Bits::ones(2)).unwrap();
        let x = [2usize, 3usize];
        let a = identify_arsf(&eval, &full_r, &x).unwrap();
        let b = identify_arsf(&eval, &masked_all, &x).unwrap();
        assert_eq!(a.value, b.value);
    }

    #[test]
    fn transition_probabilities_match_the_forced_oracle() {
        let model = presets::example_model();
        let eval = exact_evaluator(&model, DEFAULT_QUAD_ORDER).unwrap();
        let regime = full("11");
        let x = [2usize, 2usize];
        for y_prev in [false, true] {
            let got = identify_transition_prob(&eval, &regime, &x, 0, y_prev).unwrap();
            let want = crate::simulate::oracle::quadrature_transition(
                &model,
                &regime,
                &x,
                0,
                y_prev,
                DEFAULT_QUAD_ORDER,
            )
            .unwrap();
            assert!(
                (got.value - want).abs() < 1e-6,
                "y_prev={y_prev}: {} vs {want}",
                got.value
            );
        }
    }

    #[test]
    fn contradictory_constraints_identify_zero() {
        let model = presets::example_model();
        let eval = exact_evaluator(&model, DEFAULT_QUAD_ORDER).unwrap();
        let got =
            identify_joint_prob(&eval, &full("11"), &[2, 2], &[(0, true), (0, false)])
                .unwrap();
        assert_eq!(got.value, 0.0);
    }

    #[test]
    fn traced_runs_record_redirections() {
        let model = presets::example_model();
        let eval = exact_evaluator(&model, DEFAULT_QUAD_ORDER).unwrap();
        let got = identify_arsf_traced(&eval, &full("11"), &[2, 2]).unwrap();
        assert!(!got.trace.is_empty());
        assert!(got.trace.iter().any(|l| l.contains("redirected")));
    }

    #[test]
    fn noisy_matches_are_audited_not_refused() {
        // On a counted population the zero tolerance inflates with cell
        // noise and several shifter points can pass as matches. The engine
        // must pick the minimal residual, audit the rest, and report how
        // much the answer moves.
        let model = presets::example_model();
        let eval =
            crate::population::mc_population_evaluator(&model, 150_000, 11).unwrap();
        let regime = full("11");
        let x = [2usize, 2usize];
        let got = identify_arsf_at(&eval, &regime, &x, 0).unwrap();
        let exact = exact_evaluator(&model, DEFAULT_QUAD_ORDER).unwrap();
        let want = identify_arsf_at(&exact, &regime, &x, 0).unwrap();
        // Sampling noise plus at worst a neighbor-match substitution.
        assert!(
            (got.value - want.value).abs() < 0.1,
            "{} vs {}",
            got.value,
            want.value
        );
    }
}
