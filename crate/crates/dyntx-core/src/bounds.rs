//! Interval identification when the shifter grid cannot deliver a match.
//!
//! The point recursion redirects deviators to a grid point with an equal
//! outcome threshold. When no such point exists (a support gap, detected as
//! `NoMatch`), the threshold-gap signs still order the candidates: a
//! substitution whose threshold sits below the target's understates the
//! outcome probability and yields a lower bound, one sitting above yields an
//! upper bound. At a terminal redirection both directions are applied with
//! the tightest-residual candidate per side; missing sides fall back to the
//! trivial 0 or 1. An interior redirection feeds later periods whose
//! thresholds may reorder with the realized outcome, so no one-sided
//! ordering survives the continuation: the whole deviator branch is
//! bracketed by [0, 1] there.
//!
//! Intervals combine linearly through the point-identified branch weights,
//! so the result is an interval for the same aggregate the point engine
//! computes, and it degenerates to the point value when every match exists.

use serde::Serialize;
use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};

use crate::bits::{Bits, MAX_LEN};
use crate::error::{Error, Result};
use crate::identify::{scan_matches, HistoryCell, MatchScan};
use crate::model::Regime;
use crate::population::{BackendKind, Event, PopulationEvaluator};
use crate::tol::EXACT_MASS_FLOOR;

/// Branch mass below which a branch is skipped, as in the point engine.
const BRANCH_FLOOR: f64 = 10.0 * EXACT_MASS_FLOOR;

/// A closed subinterval of the identifiable range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    /// True when the interval carries no more information than a point,
    /// up to fp dust.
    pub fn is_degenerate(&self) -> bool {
        self.width() <= 1e-9
    }
}

/// One redirection site where no match existed, and which one-sided
/// substitutions were applied there.
#[derive(Clone, Debug, Serialize)]
pub struct BoundSite {
    pub t: usize,
    pub y_prev: Bits,
    pub d_prev: Bits,
    pub target_arm: bool,
    pub x: usize,
    /// Grid point whose substituted branch served as the lower bound.
    pub lower_from: Option<usize>,
    /// Grid point whose substituted branch served as the upper bound.
    pub upper_from: Option<usize>,
}

/// Interval identification of one regime value, with the per-site ledger.
#[derive(Clone, Debug, Serialize)]
pub struct BoundsResult {
    pub regime: Regime,
    pub x: Vec<usize>,
    pub interval: Interval,
    /// Redirection sites where the point recursion would have failed.
    pub sites: Vec<BoundSite>,
    /// Instrument assignments dropped for lack of support (counting).
    pub dropped_z: usize,
}

/// Interval for the terminal average potential outcome under the regime.
/// Degenerates to the point value when every redirection has a match.
pub fn bound_arsf(
    eval: &dyn PopulationEvaluator,
    regime: &Regime,
    x: &[usize],
) -> Result<BoundsResult> {
    bound_joint_prob(eval, regime, x, &[(eval.horizon().terminal(), true)])
}

/// Interval for a constrained joint potential-outcome probability.
pub fn bound_joint_prob(
    eval: &dyn PopulationEvaluator,
    regime: &Regime,
    x: &[usize],
    constraints: &[(usize, bool)],
) -> Result<BoundsResult> {
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
            return Ok(BoundsResult {
                regime: *regime,
                x: x.to_vec(),
                interval: Interval { lo: 0.0, hi: 0.0 },
                sites: Vec::new(),
                dropped_z: 0,
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
    let engine = BoundEngine {
        eval,
        regime: *regime,
        constraints: per_period,
        t_end,
        matches: RefCell::new(HashMap::new()),
        sites: RefCell::new(BTreeMap::new()),
    };
    let active: Vec<usize> = (0..=t_end).filter(|&t| regime.is_active(t)).collect();
    let droppable = eval.kind() != BackendKind::Exact;

    let mut w_sum = 0.0;
    let mut acc_lo = 0.0;
    let mut acc_hi = 0.0;
    let mut dropped = 0usize;
    let mut last_drop: Option<String> = None;
    for mask in 0u32..(1 << active.len()) {
        let assignment: Vec<(usize, bool)> = active
            .iter()
            .enumerate()
            .map(|(i, &t)| (t, mask >> i & 1 == 1))
            .collect();
        let mut target = Event::none(eval.horizon());
        for &(t, v) in &assignment {
            target = target.with_z(t, v);
        }
        let q = eval.prob(&target, &Event::none(eval.horizon()))?.estimate;
        if q <= 0.0 {
            continue;
        }
        let mut z = vec![None; t_len];
        for &(t, v) in &assignment {
            z[t] = Some(v);
        }
        let mut run = BoundZRun {
            eng: &engine,
            z,
            memo: HashMap::new(),
        };
        match run.node(0, engine.regime.d(), x_arr, Bits::EMPTY) {
            Ok((lo, hi)) => {
                w_sum += q;
                acc_lo += q * lo;
                acc_hi += q * hi;
            }
            Err(Error::UnreachableCell(why)) if droppable => {
                dropped += 1;
                last_drop = Some(why);
            }
            Err(e) => return Err(e),
        }
    }
    if w_sum <= 0.0 {
        // Surface the offending cell when every assignment dropped.
        return Err(match last_drop {
            Some(why) => Error::UnreachableCell(why),
            None => Error::DegenerateConditioning(
                "every instrument assignment failed cell support".into(),
            ),
        });
    }
    let interval = Interval {
        lo: (acc_lo / w_sum).clamp(0.0, 1.0),
        hi: (acc_hi / w_sum).clamp(0.0, 1.0),
    };
    Ok(BoundsResult {
        regime: *regime,
        x: x.to_vec(),
        interval,
        sites: engine.sites.into_inner().into_values().collect(),
        dropped_z: dropped,
    })
}

/// Interval difference of two regime values at a common shifter path,
/// clipped to the effect range.
pub fn bound_ate(
    eval: &dyn PopulationEvaluator,
    regime_a: &Regime,
    regime_b: &Regime,
    x: &[usize],
) -> Result<Interval> {
    let a = bound_arsf(eval, regime_a, x)?.interval;
    let b = bound_arsf(eval, regime_b, x)?.interval;
    Ok(Interval {
        lo: (a.lo - b.hi).clamp(-1.0, 1.0),
        hi: (a.hi - b.lo).clamp(-1.0, 1.0),
    })
}

type FlipKey = (usize, u8, u8, bool, u8);

struct BoundEngine<'e> {
    eval: &'e dyn PopulationEvaluator,
    regime: Regime,
    constraints: Vec<Option<bool>>,
    t_end: usize,
    matches: RefCell<HashMap<FlipKey, MatchScan>>,
    /// Ordered so the reported ledger is deterministic.
    sites: RefCell<BTreeMap<FlipKey, BoundSite>>,
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

struct BoundZRun<'a, 'e> {
    eng: &'a BoundEngine<'e>,
    z: Vec<Option<bool>>,
    memo: HashMap<NodeKey, (f64, f64)>,
}

impl BoundZRun<'_, '_> {
    /// Same conditioning convention as the point engine.
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

    fn scan(&self, t: usize, d_vals: Bits, x_cur: &[u8; MAX_LEN], y_hist: Bits) -> Result<MatchScan> {
        let arm = d_vals.get(t);
        let key: FlipKey = (t, y_hist.raw(), d_vals.prefix(t).raw(), arm, x_cur[t]);
        if let Some(scan) = self.eng.matches.borrow().get(&key) {
            return Ok(scan.clone());
        }
        let cell = HistoryCell::masked(
            t,
            y_hist,
            d_vals.prefix(t),
            self.eng.regime.active().prefix(t),
        );
        let scan = scan_matches(self.eng.eval, &cell, arm, x_cur[t] as usize)?;
        self.eng.matches.borrow_mut().insert(key, scan.clone());
        Ok(scan)
    }

    fn node(
        &mut self,
        t: usize,
        d_vals: Bits,
        x_cur: [u8; MAX_LEN],
        y_hist: Bits,
    ) -> Result<(f64, f64)> {
        if t > self.eng.t_end {
            return Ok((1.0, 1.0));
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
        let w_cons = eval.prob(&Event::none(h).with_d(t, arm), &given)?.estimate;
        let w_flip = eval.prob(&Event::none(h).with_d(t, !arm), &given)?.estimate;

        let (lo_cons, hi_cons) = if w_cons > BRANCH_FLOOR {
            self.outcome_step(t, d_vals, x_cur, y_hist, true)?
        } else {
            (0.0, 0.0)
        };
        let (lo_flip, hi_flip) = if w_flip > BRANCH_FLOOR {
            let scan = self.scan(t, d_vals, &x_cur, y_hist)?;
            match scan.chosen {
                Some(matched) => {
                    let mut x_sub = x_cur;
                    x_sub[t] = matched as u8;
                    self.outcome_step(t, d_vals.flipped(t), x_sub, y_hist, true)?
                }
                None => self.failed_site(t, d_vals, x_cur, y_hist, &scan)?,
            }
        } else {
            (0.0, 0.0)
        };

        Ok((
            w_cons * lo_cons + w_flip * lo_flip,
            w_cons * hi_cons + w_flip * hi_flip,
        ))
    }

    /// Interval for a deviator branch with no match. Terminal redirections
    /// get one-sided substitutions ordered by the threshold-gap signs;
    /// interior ones are bracketed trivially.
    fn failed_site(
        &mut self,
        t: usize,
        d_vals: Bits,
        x_cur: [u8; MAX_LEN],
        y_hist: Bits,
        scan: &MatchScan,
    ) -> Result<(f64, f64)> {
        let arm = d_vals.get(t);
        let key: FlipKey = (t, y_hist.raw(), d_vals.prefix(t).raw(), arm, x_cur[t]);
        let terminal = t == self.eng.t_end;
        let yv = self.eng.constraints[t].filter(|_| terminal);
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut lower_from = None;
        let mut upper_from = None;
        if let Some(yv) = yv {
            // One-sided substitution: a candidate whose threshold sits below
            // the target's understates Pr[Y_t = 1] for the deviators, and
            // overstates Pr[Y_t = 0]. Use the tightest-residual candidate on
            // each side.
            let per_side = |want: i8| -> Option<usize> {
                (0..scan.gap_sign.len())
                    .filter(|&c| scan.gap_sign[c] == want)
                    .min_by(|&a, &b| {
                        scan.residuals[a]
                            .value
                            .abs()
                            .total_cmp(&scan.residuals[b].value.abs())
                    })
            };
            let (want_lo, want_hi) = if yv { (1, -1) } else { (-1, 1) };
            lower_from = per_side(want_lo);
            upper_from = per_side(want_hi);
            let eval = self.eng.eval;
            let h = eval.horizon();
            let value_at = |cand: usize| -> Result<f64> {
                let mut x_sub = x_cur;
                x_sub[t] = cand as u8;
                let given = self
                    .prefix_given(t, d_vals.flipped(t), &x_sub, y_hist)
                    .with_d(t, !arm);
                Ok(eval.prob(&Event::none(h).with_y(t, yv), &given)?.estimate)
            };
            if let Some(c) = lower_from {
                lo = value_at(c)?;
            }
            if let Some(c) = upper_from {
                hi = value_at(c)?;
            }
            // Signs are measured with tolerance; never let the sides cross.
            if lo > hi {
                (lo, hi) = (hi.min(lo), hi.max(lo));
            }
        }
        self.eng.sites.borrow_mut().entry(key).or_insert(BoundSite {
            t,
            y_prev: y_hist,
            d_prev: d_vals.prefix(t),
            target_arm: arm,
            x: x_cur[t] as usize,
            lower_from,
            upper_from,
        });
        Ok((lo, hi))
    }

    /// Expand the period-`t` outcome and recurse, interval-valued.
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
        let branch = |zr: &mut Self, y_t: bool| -> Result<(f64, f64, f64)> {
            let q = eval.prob(&Event::none(h).with_y(t, y_t), &given)?.estimate;
            if q <= BRANCH_FLOOR {
                return Ok((q, 0.0, 0.0));
            }
            let (lo, hi) = zr.node(t + 1, d_vals, x_cur, y_hist.pushed(y_t))?;
            Ok((q, lo, hi))
        };
        match self.eng.constraints[t] {
            Some(yv) => {
                let (q, lo, hi) = branch(self, yv)?;
                Ok((q * lo, q * hi))
            }
            None => {
                let (q1, lo1, hi1) = branch(self, true)?;
                let (q0, lo0, hi0) = branch(self, false)?;
                Ok((q1 * lo1 + q0 * lo0, q1 * hi1 + q0 * hi0))
            }
        }
    }
}
