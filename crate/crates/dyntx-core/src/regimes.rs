//! Regime ranking: the optimal forced sequence and bound-based exclusion.
//!
//! A planner choosing among forced treatment sequences ranks them by an
//! objective that is affine in regime values: either the terminal mean
//! outcome net of a per-treatment cost, or a weighted sum of per-period
//! mean outcomes net of per-period costs. Affinity means the ranking
//! inherits point identification wherever the recursion finds matches and
//! interval identification where it does not, and that the argmax set is
//! invariant to jointly rescaling all weights by a positive constant.
//!
//! With intervals in play the output is a partial order: a regime is
//! excluded only when some other regime's objective lower bound strictly
//! exceeds its upper bound. Everything not excluded stays a candidate.

use serde::{Deserialize, Serialize};
use rayon::prelude::*;

use crate::bits::Bits;
use crate::bounds::{bound_joint_prob, Interval};
use crate::error::{Error, Result};
use crate::identify::{identify_arsf_at, Measured};
use crate::model::Regime;
use crate::population::PopulationEvaluator;

/// Absolute slack for argmax membership and for strict interval dominance.
/// Keeps fp dust from simultaneously placing a regime in the argmax set and
/// in the excluded set.
const ARGMAX_TOL: f64 = 1e-10;

/// The ranking objective, affine in identified regime values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveSpec {
    /// `w * E[Y_T(d) | .] - cost * #{mandated treatments}`.
    Terminal { w: f64, cost: f64 },
    /// `sum_t w[t] * E[Y_t(d) | .] - sum_t cost[t] * d_t`, one weight and
    /// one cost per period. Periods with `w[t] == 0` are not evaluated.
    WeightedSum { w: Vec<f64>, cost: Vec<f64> },
}

impl ObjectiveSpec {
    /// The undiscounted terminal regime value: `w = 1`, no costs.
    pub fn terminal_value() -> Self {
        ObjectiveSpec::Terminal { w: 1.0, cost: 0.0 }
    }

    fn validate(&self, t_len: usize) -> Result<()> {
        match self {
            ObjectiveSpec::Terminal { w, cost } => {
                if !w.is_finite() || !cost.is_finite() {
                    return Err(Error::InvalidQuery(
                        "objective weights must be finite".into(),
                    ));
                }
            }
            ObjectiveSpec::WeightedSum { w, cost } => {
                if w.len() != t_len || cost.len() != t_len {
                    return Err(Error::InvalidQuery(format!(
                        "per-period objective needs {t_len} weights and costs, \
                         got {} and {}",
                        w.len(),
                        cost.len()
                    )));
                }
                if w.iter().chain(cost).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidQuery(
                        "objective weights must be finite".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Periods whose regime value the objective needs, with their weights.
    fn periods(&self, t_len: usize) -> Vec<(usize, f64)> {
        match self {
            ObjectiveSpec::Terminal { w, .. } => {
                if *w == 0.0 {
                    Vec::new()
                } else {
                    vec![(t_len - 1, *w)]
                }
            }
            ObjectiveSpec::WeightedSum { w, .. } => w
                .iter()
                .enumerate()
                .filter(|(_, &wt)| wt != 0.0)
                .map(|(t, &wt)| (t, wt))
                .collect(),
        }
    }

    /// Total treatment cost charged to the regime. Only mandated arms count:
    /// at inactive periods the subject chooses, so no cost is incurred by
    /// the planner.
    fn cost_of(&self, regime: &Regime) -> f64 {
        match self {
            ObjectiveSpec::Terminal { cost, .. } => {
                let treated = (0..regime.len())
                    .filter(|&t| regime.arm(t) == Some(true))
                    .count();
                cost * treated as f64
            }
            ObjectiveSpec::WeightedSum { cost, .. } => (0..regime.len())
                .filter(|&t| regime.arm(t) == Some(true))
                .map(|t| cost[t])
                .sum(),
        }
    }
}

/// One regime's objective: a point when every period is point-identified,
/// an interval otherwise.
#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeValue {
    Point(Measured),
    Interval(Interval),
}

impl RegimeValue {
    pub fn lo(&self) -> f64 {
        match self {
            RegimeValue::Point(m) => m.value,
            RegimeValue::Interval(i) => i.lo,
        }
    }

    pub fn hi(&self) -> f64 {
        match self {
            RegimeValue::Point(m) => m.value,
            RegimeValue::Interval(i) => i.hi,
        }
    }

    pub fn is_point(&self) -> bool {
        matches!(self, RegimeValue::Point(_))
    }
}

/// A regime with its evaluated objective.
#[derive(Clone, Debug, Serialize)]
pub struct RegimeEntry {
    pub regime: Regime,
    pub value: RegimeValue,
}

/// How much of an order the evaluation produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RankingStatus {
    /// Every regime point-valued; the argmax set is exact.
    Ranked,
    /// Intervals present and dominance excluded at least one regime.
    PartiallyRanked,
    /// Intervals present and dominance excludes nothing.
    Inconclusive,
}

/// The ranking over one regime set at one stratum and shifter path.
#[derive(Clone, Debug, Serialize)]
pub struct RegimeRanking {
    /// Baseline stratum the evaluation conditioned on, when any.
    pub stratum: Option<u8>,
    pub objective: ObjectiveSpec,
    /// Shifter path the regime values condition on.
    pub x: Vec<usize>,
    /// One entry per input regime, in input order.
    pub entries: Vec<RegimeEntry>,
    /// Maximizers: within `1e-10` of the maximum when all entries are
    /// points, otherwise every regime not excluded by interval dominance.
    pub argmax: Vec<Regime>,
    /// Regimes provably suboptimal: some other entry's lower bound strictly
    /// exceeds their upper bound.
    pub excluded: Vec<Regime>,
    pub status: RankingStatus,
}

/// Knobs for `rank_regimes`.
#[derive(Clone, Debug)]
pub struct RankOptions {
    /// Shifter path conditioned on at active periods.
    pub x: Vec<usize>,
    /// Fall back to interval identification at support gaps instead of
    /// failing the whole ranking.
    pub allow_bounds: bool,
}

impl RankOptions {
    pub fn at(x: &[usize]) -> Self {
        RankOptions {
            x: x.to_vec(),
            allow_bounds: true,
        }
    }
}

/// Evaluate the objective for every regime and return the argmax and
/// excluded sets. Regime evaluations run in parallel; entries keep the
/// input order, so output is deterministic.
pub fn rank_regimes(
    eval: &dyn PopulationEvaluator,
    objective: &ObjectiveSpec,
    stratum: Option<u8>,
    regimes: &[Regime],
    opts: &RankOptions,
) -> Result<RegimeRanking> {
    if regimes.is_empty() {
        return Err(Error::InvalidQuery("no regimes to rank".into()));
    }
    let t_len = eval.horizon().get();
    objective.validate(t_len)?;
    for r in regimes {
        if r.len() != t_len {
            return Err(Error::InvalidQuery(format!(
                "regime {r} does not span {t_len} periods"
            )));
        }
    }

    let restricted;
    let ev: &dyn PopulationEvaluator = match stratum {
        Some(w0) => {
            restricted = eval.stratum_restricted(w0)?;
            &*restricted
        }
        None => eval,
    };

    let values: Vec<Result<RegimeValue>> = regimes
        .par_iter()
        .map(|r| objective_value(ev, objective, r, opts))
        .collect();
    let mut entries = Vec::with_capacity(regimes.len());
    for (r, v) in regimes.iter().zip(values) {
        entries.push(RegimeEntry {
            regime: *r,
            value: v?,
        });
    }

    let excluded = exclusion_set(&entries);
    let all_points = entries.iter().all(|e| e.value.is_point());
    let argmax: Vec<Regime> = if all_points {
        let max = entries.iter().map(|e| e.value.hi()).fold(f64::MIN, f64::max);
        entries
            .iter()
            .filter(|e| e.value.hi() >= max - ARGMAX_TOL)
            .map(|e| e.regime)
            .collect()
    } else {
        entries
            .iter()
            .filter(|e| !excluded.contains(&e.regime))
            .map(|e| e.regime)
            .collect()
    };
    let status = if all_points {
        RankingStatus::Ranked
    } else if excluded.is_empty() {
        RankingStatus::Inconclusive
    } else {
        RankingStatus::PartiallyRanked
    };

    Ok(RegimeRanking {
        stratum,
        objective: objective.clone(),
        x: opts.x.clone(),
        entries,
        argmax,
        excluded,
        status,
    })
}

/// Regimes some other entry dominates: its objective lower bound strictly
/// exceeds theirs' upper bound (points count as degenerate intervals).
pub fn exclusion_set(entries: &[RegimeEntry]) -> Vec<Regime> {
    entries
        .iter()
        .filter(|e| {
            entries
                .iter()
                .any(|o| o.value.lo() > e.value.hi() + ARGMAX_TOL)
        })
        .map(|e| e.regime)
        .collect()
}

/// The regime set a once-started-never-stopped treatment admits: the `T+1`
/// nondecreasing sequences, ordered by start period (all-ones first,
/// never-treat last).
pub fn monotone_regimes(t_len: usize) -> Vec<Regime> {
    (0..=t_len)
        .map(|start| {
            let arms: Vec<bool> = (0..t_len).map(|t| t >= start).collect();
            Regime::full(Bits::from_slice(&arms))
        })
        .collect()
}

fn objective_value(
    ev: &dyn PopulationEvaluator,
    objective: &ObjectiveSpec,
    regime: &Regime,
    opts: &RankOptions,
) -> Result<RegimeValue> {
    let t_len = ev.horizon().get();
    let cost = objective.cost_of(regime);
    let mut lo = -cost;
    let mut hi = -cost;
    let mut var = 0.0;
    let mut interval_seen = false;
    for (t, wt) in objective.periods(t_len) {
        match identify_arsf_at(ev, regime, &opts.x, t) {
            Ok(id) => {
                lo += wt * id.value;
                hi += wt * id.value;
                // Cross-period sampling covariance is not tracked; the
                // combined error treats periods as independent.
                var += (wt * id.std_error).powi(2);
            }
            Err(Error::NoMatch(_)) if opts.allow_bounds => {
                let b = bound_joint_prob(ev, regime, &opts.x, &[(t, true)])?;
                let (l, h) = if wt >= 0.0 {
                    (wt * b.interval.lo, wt * b.interval.hi)
                } else {
                    (wt * b.interval.hi, wt * b.interval.lo)
                };
                lo += l;
                hi += h;
                interval_seen = true;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(if interval_seen {
        RegimeValue::Interval(Interval { lo, hi })
    } else {
        RegimeValue::Point(Measured {
            value: lo,
            std_error: var.sqrt(),
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets::{example_model, gapped_model, random_matched_pair};
    use crate::population::exact_evaluator;
    use crate::simulate::oracle::quadrature_regime_outcomes;
    use crate::tol::DEFAULT_QUAD_ORDER;

    fn oracle_objective(
        model: &crate::model::StructuralModel,
        objective: &ObjectiveSpec,
        regime: &Regime,
        x: &[usize],
    ) -> f64 {
        let vals =
            quadrature_regime_outcomes(model, regime, x, DEFAULT_QUAD_ORDER).unwrap();
        let mut total = -objective.cost_of(regime);
        for (t, wt) in objective.periods(regime.len()) {
            total += wt * vals[t];
        }
        total
    }

    fn oracle_argmax(
        model: &crate::model::StructuralModel,
        objective: &ObjectiveSpec,
        regimes: &[Regime],
        x: &[usize],
    ) -> Vec<Regime> {
        let vals: Vec<f64> = regimes
            .iter()
            .map(|r| oracle_objective(model, objective, r, x))
            .collect();
        let max = vals.iter().copied().fold(f64::MIN, f64::max);
        regimes
            .iter()
            .zip(&vals)
            .filter(|(_, &v)| v >= max - ARGMAX_TOL)
            .map(|(r, _)| *r)
            .collect()
    }

    #[test]
    fn argmax_matches_the_oracle_for_both_objective_kinds() {
        let model = example_model();
        let eval = exact_evaluator(&model, DEFAULT_QUAD_ORDER).unwrap();
        let regimes: Vec<Regime> = Regime::enumerate_full(2).collect();
        let x = [2usize, 2];
        let objectives = [
            ObjectiveSpec::Terminal { w: 1.0, cost: 0.0 },
            ObjectiveSpec::Terminal { w: 1.0, cost: 0.04 },
            ObjectiveSpec::WeightedSum {
                w: vec![0.4, 1.0],
                cost: vec![0.05, 0.1],
            },
        ];
        for objective in &objectives {
            let ranking =
                rank_regimes(&eval, objective, None, &regimes, &RankOptions::at(&x))
                    .unwrap();
            assert_eq!(ranking.status, RankingStatus::Ranked);
            assert_eq!(
                ranking.argmax,
                oracle_argmax(&model, objective, &regimes, &x),
                "objective {objective:?}"
            );
            for entry in &ranking.entries {
                let want = oracle_objective(&model, objective, &entry.regime, &x);
                assert!((entry.value.lo() - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn positive_rescaling_leaves_the_argmax_set_unchanged() {
        let model = example_model();
        let eval = exact_evaluator(&model, DEFAULT_QUAD_ORDER).unwrap();
        let regimes: Vec<Regime> = Regime::enumerate_full(2).collect();
        let opts = RankOptions::at(&[1, 3]);
        let base = ObjectiveSpec::WeightedSum {
            w: vec![0.4, 1.0],
            cost: vec![0.05, 0.1],
        };
        let scaled = ObjectiveSpec::WeightedSum {
            w: vec![0.4 * 7.3, 7.3],
            cost: vec![0.05 * 7.3, 0.1 * 7.3],
        };
        let a = rank_regimes(&eval, &base, None, &regimes, &opts).unwrap();
        let b = rank_regimes(&eval, &scaled, None, &regimes, &opts).unwrap();
        assert_eq!(a.argmax, b.argmax);
        assert_eq!(a.excluded, b.excluded);
    }

    #[test]
    fn identical_objectives_tie_into_a_full_argmax_set() {
        let model = example_model();
        let eval = exact_evaluator(&model, DEFAULT_QUAD_ORDER).unwrap();
        let regimes: Vec<Regime> = Regime::enumerate_full(2).collect();
        // Zero weight on every period: nothing is evaluated, every regime
        // ties at zero, and no tie is broken arbitrarily.
        let flat = ObjectiveSpec::Terminal { w: 0.0, cost: 0.0 };
        let ranking =
            rank_regimes(&eval, &flat, None, &regimes, &RankOptions::at(&[0, 0]))
                .unwrap();
        assert_eq!(ranking.argmax.len(), 4);
        assert!(ranking.excluded.is_empty());
    }

    #[test]
    fn support_gaps_demote_the_ranking_to_intervals() {
        let gapped = gapped_model();
        let eval = exact_evaluator(&gapped, DEFAULT_QUAD_ORDER).unwrap();
        let regimes: Vec<Regime> = Regime::enumerate_full(2).collect();
        let objective = ObjectiveSpec::terminal_value();
        let x = [2usize, 0];
        let ranking =
            rank_regimes(&eval, &objective, None, &regimes, &RankOptions::at(&x))
                .unwrap();
        assert_ne!(ranking.status, RankingStatus::Ranked);
        assert!(ranking.entries.iter().any(|e| !e.value.is_point()));
        // Whatever the order says, it must be sound: every interval covers
        // its oracle value and the oracle optimum is never excluded.
        for entry in &ranking.entries {
            let want = oracle_objective(&gapped, &objective, &entry.regime, &x);
            assert!(
                entry.value.lo() - 1e-6 <= want && want <= entry.value.hi() + 1e-6,
                "{} not in [{}, {}]",
                want,
                entry.value.lo(),
                entry.value.hi()
            );
        }
        let best = oracle_argmax(&gapped, &objective, &regimes, &x);
        for r in &best {
            assert!(!ranking.excluded.contains(r));
        }
        for r in &ranking.excluded {
            assert!(!ranking.argmax.contains(r));
        }
    }

    #[test]
    fn oracle_optimum_survives_exclusion_across_random_gapped_models() {
        let objective = ObjectiveSpec::terminal_value();
        let x = [2usize, 1];
        for seed in 0..5u64 {
            let (full, gapped) = random_matched_pair(seed);
            let eval = exact_evaluator(&gapped, DEFAULT_QUAD_ORDER).unwrap();
            let regimes: Vec<Regime> = Regime::enumerate_full(2).collect();
            let ranking =
                rank_regimes(&eval, &objective, None, &regimes, &RankOptions::at(&x))
                    .unwrap();
            // Oracle ranking comes from the un-gapped model: the gap removes
            // observability, not the underlying structural law.
            let best = oracle_argmax(&full, &objective, &regimes, &x);
            for r in &best {
                assert!(
                    !ranking.excluded.contains(r),
                    "seed {seed}: oracle optimum {r} excluded"
                );
            }
        }
    }

    #[test]
    fn irreversible_treatment_admits_the_monotone_sequences() {
        let set = monotone_regimes(2);
        assert_eq!(set.len(), 3);
        for r in &set {
            assert!(r.d().is_nondecreasing());
        }
        assert_eq!(monotone_regimes(3).len(), 4);

        let model = example_model();
        let eval = exact_evaluator(&model, DEFAULT_QUAD_ORDER).unwrap();
        let ranking = rank_regimes(
            &eval,
            &ObjectiveSpec::terminal_value(),
            None,
            &set,
            &RankOptions::at(&[2, 2]),
        )
        .unwrap();
        assert_eq!(ranking.entries.len(), 3);
        assert_eq!(ranking.status, RankingStatus::Ranked);
    }

    #[test]
    fn strata_are_refused_where_the_backend_has_none() {
        let model = example_model();
        let eval = exact_evaluator(&model, DEFAULT_QUAD_ORDER).unwrap();
        let regimes: Vec<Regime> = Regime::enumerate_full(2).collect();
        let err = rank_regimes(
            &eval,
            &ObjectiveSpec::terminal_value(),
            Some(1),
            &regimes,
            &RankOptions::at(&[2, 2]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidQuery(_)));
    }

    #[test]
    fn malformed_objectives_are_rejected() {
        let model = example_model();
        let eval = exact_evaluator(&model, DEFAULT_QUAD_ORDER).unwrap();
        let regimes: Vec<Regime> = Regime::enumerate_full(2).collect();
        let opts = RankOptions::at(&[0, 0]);
        let short = ObjectiveSpec::WeightedSum {
            w: vec![1.0],
            cost: vec![0.0],
        };
        assert!(rank_regimes(&eval, &short, None, &regimes, &opts).is_err());
        let inf = ObjectiveSpec::Terminal {
            w: f64::INFINITY,
            cost: 0.0,
        };
        assert!(rank_regimes(&eval, &inf, None, &regimes, &opts).is_err());
    }
}
