//! Ground-truth potential-outcome values computed directly from the
//! structural model.
//!
//! Two independent engines:
//!
//! * Monte Carlo: force the regime inside the simulator and average. Works
//!   for every latent specification; accuracy is O(1/sqrt(draws)) and each
//!   value carries a standard error.
//! * Quadrature: enumerate the discrete paths consistent with the query and
//!   integrate the latent rectangle of each path exactly. Only available for
//!   the arm-invariant latent spec; accuracy is at quadrature precision,
//!   which the tolerance tests need.
//!
//! Neither engine touches the identification code; they share nothing with
//! it beyond the model itself.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::model::{CorrMatrix, Regime, StructuralModel};
use crate::numeric::{half_line, GaussLegendre, HalfLine, MvnRect};
use serde::Serialize;

use crate::tol::{ORACLE_DENOM_MIN_HITS, TRANSITION_DENOM_FLOOR};

use super::{draw_categorical, LatentDraw, Sampler};

/// A Monte Carlo oracle value with its sampling uncertainty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OracleValue {
    pub value: f64,
    pub std_error: f64,
}

fn check_query(model: &StructuralModel, regime: &Regime, x: &[usize]) -> Result<()> {
    let t_len = model.t();
    if regime.len() != t_len {
        return Err(Error::InvalidQuery(format!(
            "regime has {} periods, model has {t_len}",
            regime.len()
        )));
    }
    if x.len() != t_len {
        return Err(Error::InvalidQuery(format!(
            "x path has {} periods, model has {t_len}",
            x.len()
        )));
    }
    for (t, &xi) in x.iter().enumerate() {
        if xi >= model.x_grid.k(t) {
            return Err(Error::InvalidQuery(format!(
                "x index {xi} out of range at period {t}"
            )));
        }
    }
    Ok(())
}

/// Roll one individual forward with treatments forced at active periods.
///
/// Inactive periods run the model's own selection equation on drawn
/// instruments; inactive-period shifters are drawn from the model law, so
/// masked queries marginalize them exactly as the definition requires.
fn roll_forced(
    model: &StructuralModel,
    latents: &LatentDraw,
    rng: &mut impl Rng,
    regime: &Regime,
    x: &[usize],
) -> Bits {
    let mut d_bits = Bits::EMPTY;
    let mut y_bits = Bits::EMPTY;
    for t in model.horizon.periods() {
        let d_t = match regime.arm(t) {
            Some(arm) => arm,
            None => {
                let z_t = rng.random_bool(model.z_law[t]);
                model.pi_at(t, y_bits, d_bits, z_t) >= latents.v[t]
            }
        };
        d_bits = d_bits.pushed(d_t);
        let x_t = if regime.is_active(t) {
            x[t]
        } else {
            draw_categorical(&model.x_law[t], rng)
        };
        let mu = model.mu_at(t, y_bits, d_bits, x_t);
        y_bits = y_bits.pushed(mu >= latents.u(t, d_t));
    }
    y_bits
}

/// Per-period potential-outcome means under a forced regime:
/// entry `t` is `E[Y_t(regime) | x at active periods]`.
pub fn mc_regime_outcomes(
    model: &StructuralModel,
    regime: &Regime,
    x: &[usize],
    draws: usize,
    seed: u64,
) -> Result<Vec<OracleValue>> {
    check_query(model, regime, x)?;
    if draws == 0 {
        return Err(Error::InvalidQuery("draw count must be positive".into()));
    }
    let sampler = Sampler::new(model)?;
    let t_len = model.t();
    let counts: Vec<u64> = (0..draws)
        .into_par_iter()
        .fold(
            || vec![0u64; t_len],
            |mut acc, i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                let latents = sampler.draw(&mut rng);
                let y = roll_forced(model, &latents, &mut rng, regime, x);
                for t in 0..t_len {
                    acc[t] += y.get(t) as u64;
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; t_len],
            |mut a, b| {
                for (ai, bi) in a.iter_mut().zip(b) {
                    *ai += bi;
                }
                a
            },
        );
    let n = draws as f64;
    Ok(counts
        .into_iter()
        .map(|c| {
            let p = c as f64 / n;
            OracleValue {
                value: p,
                std_error: (p * (1.0 - p) / n).sqrt(),
            }
        })
        .collect())
}

/// Conditional-on-history contrast estimated by forcing both terminal arms
/// on shared latents: `E[Y_term(1) - Y_term(0) | Y_{term-1} = y_prev, X = x]`
/// where the history up to `term - 1` evolves observationally.
pub fn mc_period_ate(
    model: &StructuralModel,
    x: &[usize],
    y_prev: bool,
    draws: usize,
    seed: u64,
) -> Result<OracleValue> {
    check_query(model, &Regime::full(Bits::zeros(model.t())), x)?;
    let term = model.horizon.terminal();
    if term == 0 {
        return Err(Error::InvalidQuery(
            "terminal-period contrast needs at least two periods".into(),
        ));
    }
    let sampler = Sampler::new(model)?;
    // Per draw: (accepted, diff) where diff in {-1, 0, 1}.
    let (hits, sum, sumsq) = (0..draws)
        .into_par_iter()
        .fold(
            || (0u64, 0i64, 0u64),
            |(mut hits, mut sum, mut sumsq), i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                let latents = sampler.draw(&mut rng);
                let mut d_bits = Bits::EMPTY;
                let mut y_bits = Bits::EMPTY;
                for t in 0..term {
                    let z_t = rng.random_bool(model.z_law[t]);
                    let d_t = model.pi_at(t, y_bits, d_bits, z_t) >= latents.v[t];
                    d_bits = d_bits.pushed(d_t);
                    let mu = model.mu_at(t, y_bits, d_bits, x[t]);
                    y_bits = y_bits.pushed(mu >= latents.u(t, d_t));
                }
                if y_bits.get(term - 1) == y_prev {
                    hits += 1;
                    let y1 = model.mu_at(term, y_bits, d_bits.pushed(true), x[term])
                        >= latents.u(term, true);
                    let y0 = model.mu_at(term, y_bits, d_bits.pushed(false), x[term])
                        >= latents.u(term, false);
                    let diff = y1 as i64 - y0 as i64;
                    sum += diff;
                    sumsq += diff.unsigned_abs();
                }
                (hits, sum, sumsq)
            },
        )
        .reduce(
            || (0u64, 0i64, 0u64),
            |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2),
        );
    if (hits as f64) < ORACLE_DENOM_MIN_HITS {
        return Err(Error::DegenerateConditioning(format!(
            "only {hits} draws hit the conditioning event"
        )));
    }
    let m = hits as f64;
    let mean = sum as f64 / m;
    let var = (sumsq as f64 / m - mean * mean).max(0.0);
    Ok(OracleValue {
        value: mean,
        std_error: (var / m).sqrt(),
    })
}

/// Ratio oracle `Pr[Y_term(d) = 1 | Y_period(d) = y_prev, x]` by forced
/// simulation.
pub fn mc_transition(
    model: &StructuralModel,
    regime: &Regime,
    x: &[usize],
    period: usize,
    y_prev: bool,
    draws: usize,
    seed: u64,
) -> Result<OracleValue> {
    check_query(model, regime, x)?;
    let term = model.horizon.terminal();
    if period >= term {
        return Err(Error::InvalidQuery(format!(
            "conditioning period {period} must precede the terminal period {term}"
        )));
    }
    let sampler = Sampler::new(model)?;
    let (den, num) = (0..draws)
        .into_par_iter()
        .fold(
            || (0u64, 0u64),
            |(mut den, mut num), i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                let latents = sampler.draw(&mut rng);
                let y = roll_forced(model, &latents, &mut rng, regime, x);
                if y.get(period) == y_prev {
                    den += 1;
                    num += y.get(term) as u64;
                }
                (den, num)
            },
        )
        .reduce(|| (0u64, 0u64), |a, b| (a.0 + b.0, a.1 + b.1));
    if (den as f64) < ORACLE_DENOM_MIN_HITS {
        return Err(Error::DegenerateConditioning(format!(
            "only {den} draws hit the conditioning event"
        )));
    }
    let p = num as f64 / den as f64;
    Ok(OracleValue {
        value: p,
        std_error: (p * (1.0 - p) / den as f64).sqrt(),
    })
}

/// Path-enumeration quadrature over the joint latent normal.
struct QuadCtx<'m> {
    model: &'m StructuralModel,
    corr: &'m CorrMatrix,
    regime: Regime,
    x: &'m [usize],
    /// Per-period outcome constraint; `t_max` is the last Some index.
    constraints: Vec<Option<bool>>,
    t_max: usize,
    /// When set, inactive-period shifters are pinned to the query path
    /// (conditioning) instead of integrated over the model law
    /// (marginalizing).
    condition_inactive_x: bool,
    rule: GaussLegendre,
}

impl QuadCtx<'_> {
    fn total(&self) -> Result<f64> {
        let mut dims = Vec::new();
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        self.step(0, Bits::EMPTY, Bits::EMPTY, 1.0, &mut dims, &mut lo, &mut hi)
    }

    /// Sum over period-t choices, accumulating rectangle dimensions.
    /// Latent index convention: `t` for the outcome rank at period t,
    /// `t_len + t` for the selection rank.
    fn step(
        &self,
        t: usize,
        y_hist: Bits,
        d_hist: Bits,
        weight: f64,
        dims: &mut Vec<usize>,
        lo: &mut Vec<f64>,
        hi: &mut Vec<f64>,
    ) -> Result<f64> {
        if weight == 0.0 {
            return Ok(0.0);
        }
        if t > self.t_max {
            return Ok(weight * self.rect(dims, lo, hi)?);
        }
        let t_len = self.model.t();
        let mut acc = 0.0;
        // (d_t, extra design weight, optional selection dimension)
        let mut branches: Vec<(bool, f64, Option<(f64, f64)>)> = Vec::new();
        match self.regime.arm(t) {
            Some(arm) => branches.push((arm, 1.0, None)),
            None => {
                for z_t in [false, true] {
                    let wz = self.model.z_prob(t, z_t);
                    if wz == 0.0 {
                        continue;
                    }
                    let pi = self.model.pi_at(t, y_hist, d_hist, z_t);
                    for d_t in [false, true] {
                        let (l, h) = if d_t {
                            (f64::NEG_INFINITY, pi)
                        } else {
                            (pi, f64::INFINITY)
                        };
                        match half_line(l, h) {
                            HalfLine::Empty => {}
                            HalfLine::Certain => branches.push((d_t, wz, None)),
                            HalfLine::Dim(l, h) => branches.push((d_t, wz, Some((l, h)))),
                        }
                    }
                }
            }
        }
        for (d_t, wz, v_dim) in branches {
            let d_next = d_hist.pushed(d_t);
            let depth = dims.len();
            if let Some((l, h)) = v_dim {
                dims.push(t_len + t);
                lo.push(l);
                hi.push(h);
            }
            let xs: Vec<(usize, f64)> = if self.regime.is_active(t) || self.condition_inactive_x {
                vec![(self.x[t], 1.0)]
            } else {
                (0..self.model.x_grid.k(t))
                    .map(|i| (i, self.model.x_prob(t, i)))
                    .filter(|&(_, w)| w > 0.0)
                    .collect()
            };
            for (x_t, wx) in xs {
                let mu = self.model.mu_at(t, y_hist, d_next, x_t);
                let ys: [Option<bool>; 2] = match self.constraints[t] {
                    Some(v) => [Some(v), None],
                    None => [Some(false), Some(true)],
                };
                for y_t in ys.into_iter().flatten() {
                    let (l, h) = if y_t {
                        (f64::NEG_INFINITY, mu)
                    } else {
                        (mu, f64::INFINITY)
                    };
                    let u_depth = dims.len();
                    match half_line(l, h) {
                        HalfLine::Empty => continue,
                        HalfLine::Certain => {}
                        HalfLine::Dim(l, h) => {
                            dims.push(t);
                            lo.push(l);
                            hi.push(h);
                        }
                    }
                    acc += self.step(
                        t + 1,
                        y_hist.pushed(y_t),
                        d_next,
                        weight * wz * wx,
                        dims,
                        lo,
                        hi,
                    )?;
                    dims.truncate(u_depth);
                    lo.truncate(u_depth);
                    hi.truncate(u_depth);
                }
            }
            dims.truncate(depth);
            lo.truncate(depth);
            hi.truncate(depth);
        }
        Ok(acc)
    }

    fn rect(&self, dims: &[usize], lo: &[f64], hi: &[f64]) -> Result<f64> {
        if dims.is_empty() {
            return Ok(1.0);
        }
        let sub = self.corr.submatrix(dims);
        let rect = MvnRect::new(&sub, dims.len())?;
        Ok(rect.prob(lo, hi, &self.rule))
    }
}

/// Joint probability of outcome constraints under a forced regime,
/// `Pr[Y_t(regime) = v for (t, v) in constraints | x at active periods]`,
/// by exact quadrature. Arm-invariant latent specs only.
pub fn quadrature_regime_joint(
    model: &StructuralModel,
    regime: &Regime,
    x: &[usize],
    y_constraints: &[(usize, bool)],
    order: usize,
) -> Result<f64> {
    quadrature_joint_impl(model, regime, x, y_constraints, false, order)
}

fn quadrature_joint_impl(
    model: &StructuralModel,
    regime: &Regime,
    x: &[usize],
    y_constraints: &[(usize, bool)],
    condition_inactive_x: bool,
    order: usize,
) -> Result<f64> {
    check_query(model, regime, x)?;
    let corr = model.latent.corr().ok_or_else(|| {
        Error::UnsupportedLatent(
            "quadrature oracles need the arm-invariant latent spec".into(),
        )
    })?;
    if y_constraints.is_empty() {
        return Err(Error::InvalidQuery("no outcome constraints given".into()));
    }
    let mut constraints = vec![None; model.t()];
    let mut t_max = 0;
    for &(t, v) in y_constraints {
        if t >= model.t() {
            return Err(Error::InvalidQuery(format!(
                "constraint period {t} out of range"
            )));
        }
        if constraints[t].is_some_and(|c| c != v) {
            return Ok(0.0);
        }
        constraints[t] = Some(v);
        t_max = t_max.max(t);
    }
    let ctx = QuadCtx {
        model,
        corr,
        regime: *regime,
        x,
        constraints,
        t_max,
        condition_inactive_x,
        rule: GaussLegendre::new(order),
    };
    ctx.total()
}

/// Per-period potential-outcome means by quadrature; exact counterpart of
/// [`mc_regime_outcomes`].
pub fn quadrature_regime_outcomes(
    model: &StructuralModel,
    regime: &Regime,
    x: &[usize],
    order: usize,
) -> Result<Vec<f64>> {
    model
        .horizon
        .periods()
        .map(|t| quadrature_regime_joint(model, regime, x, &[(t, true)], order))
        .collect()
}

/// Exact counterpart of [`mc_transition`].
pub fn quadrature_transition(
    model: &StructuralModel,
    regime: &Regime,
    x: &[usize],
    period: usize,
    y_prev: bool,
    order: usize,
) -> Result<f64> {
    let term = model.horizon.terminal();
    if period >= term {
        return Err(Error::InvalidQuery(format!(
            "conditioning period {period} must precede the terminal period {term}"
        )));
    }
    let den = quadrature_regime_joint(model, regime, x, &[(period, y_prev)], order)?;
    if den < TRANSITION_DENOM_FLOOR {
        return Err(Error::DegenerateConditioning(format!(
            "conditioning event has probability {den:.2e}"
        )));
    }
    let num =
        quadrature_regime_joint(model, regime, x, &[(period, y_prev), (term, true)], order)?;
    Ok(num / den)
}

/// Exact counterpart of [`mc_period_ate`]: the history up to the terminal
/// period evolves observationally (selection integrated out), the shifter
/// path is pinned at `x` everywhere, and only the terminal arm is forced.
pub fn quadrature_period_ate(
    model: &StructuralModel,
    x: &[usize],
    y_prev: bool,
    order: usize,
) -> Result<f64> {
    let term = model.horizon.terminal();
    if term == 0 {
        return Err(Error::InvalidQuery(
            "terminal-period contrast needs at least two periods".into(),
        ));
    }
    let free = Regime::masked(Bits::zeros(model.t()), Bits::zeros(model.t()))?;
    let den = quadrature_joint_impl(model, &free, x, &[(term - 1, y_prev)], true, order)?;
    if den < TRANSITION_DENOM_FLOOR {
        return Err(Error::DegenerateConditioning(format!(
            "conditioning event has probability {den:.2e}"
        )));
    }
    let mut arms = [0.0; 2];
    for (i, arm) in [false, true].into_iter().enumerate() {
        let regime = Regime::masked(
            Bits::zeros(model.t()).with(term, arm),
            Bits::zeros(model.t()).with(term, true),
        )?;
        let num = quadrature_joint_impl(
            model,
            &regime,
            x,
            &[(term - 1, y_prev), (term, true)],
            true,
            order,
        )?;
        arms[i] = num / den;
    }
    Ok(arms[1] - arms[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tol::DEFAULT_QUAD_ORDER;
    use crate::model::presets;
    use crate::numeric::norm_cdf;

    fn full(bits: &str) -> Regime {
        Regime::full(bits.parse().unwrap())
    }

    #[test]
    fn first_period_quadrature_matches_the_closed_form() {
        // With everything forced, E[Y_0(d_0) | x_0] = Phi(mu_0) exactly.
        let model = presets::example_model();
        for (d0, x0, mu) in [(false, 0usize, 0.1 - 0.3), (true, 3usize, 0.1 + 0.3)] {
            let regime = Regime::full(Bits::from_slice(&[d0, false]));
            let vals =
                quadrature_regime_outcomes(&model, &regime, &[x0, 0], DEFAULT_QUAD_ORDER)
                    .unwrap();
            assert!(
                (vals[0] - norm_cdf(mu)).abs() < 1e-10,
                "d0={d0} x0={x0}: {} vs {}",
                vals[0],
                norm_cdf(mu)
            );
        }
    }

    #[test]
    fn quadrature_and_monte_carlo_agree_on_forced_regimes() {
        let model = presets::example_model();
        for (regime, x) in [
            (full("11"), [2usize, 2usize]),
            (full("00"), [0, 4]),
            (full("10"), [4, 1]),
        ] {
            let exact =
                quadrature_regime_outcomes(&model, &regime, &x, DEFAULT_QUAD_ORDER).unwrap();
            let mc = mc_regime_outcomes(&model, &regime, &x, 400_000, 11).unwrap();
            for (t, (e, m)) in exact.iter().zip(&mc).enumerate() {
                assert!(
                    (e - m.value).abs() < 4.0 * m.std_error,
                    "t={t}: exact {e} vs mc {} +- {}",
                    m.value,
                    m.std_error
                );
            }
        }
    }

    #[test]
    fn masked_regimes_integrate_out_inactive_periods() {
        let model = presets::masked_example_model();
        let regime = Regime::masked(
            Bits::from_slice(&[true, false]),
            Bits::from_slice(&[true, false]),
        )
        .unwrap();
        let exact =
            quadrature_regime_outcomes(&model, &regime, &[1, 0], DEFAULT_QUAD_ORDER).unwrap();
        let mc = mc_regime_outcomes(&model, &regime, &[1, 0], 400_000, 5).unwrap();
        assert!((exact[1] - mc[1].value).abs() < 4.0 * mc[1].std_error);
        // The query must not depend on the inactive-period shifter entry.
        let other =
            quadrature_regime_outcomes(&model, &regime, &[1, 4], DEFAULT_QUAD_ORDER).unwrap();
        assert_eq!(exact[1], other[1]);
    }

    #[test]
    fn transition_oracles_agree_and_guard_their_denominator() {
        let model = presets::example_model();
        let regime = full("11");
        let x = [2usize, 2usize];
        for y_prev in [false, true] {
            let exact =
                quadrature_transition(&model, &regime, &x, 0, y_prev, DEFAULT_QUAD_ORDER)
                    .unwrap();
            let mc = mc_transition(&model, &regime, &x, 0, y_prev, 400_000, 13).unwrap();
            assert!(
                (exact - mc.value).abs() < 4.0 * mc.std_error,
                "y_prev={y_prev}: {exact} vs {} +- {}",
                mc.value,
                mc.std_error
            );
        }
        let err = mc_transition(&model, &regime, &x, 0, true, 3, 13).unwrap_err();
        assert!(matches!(err, Error::DegenerateConditioning(_)));
    }

    #[test]
    fn period_contrast_oracles_agree() {
        let model = presets::example_model();
        let x = [1usize, 2usize];
        for y_prev in [false, true] {
            let exact = quadrature_period_ate(&model, &x, y_prev, DEFAULT_QUAD_ORDER).unwrap();
            let mc = mc_period_ate(&model, &x, y_prev, 400_000, 17).unwrap();
            assert!(
                (exact - mc.value).abs() < 4.0 * mc.std_error,
                "y_prev={y_prev}: {exact} vs {} +- {}",
                mc.value,
                mc.std_error
            );
        }
    }

    #[test]
    fn joint_constraints_are_consistent_with_marginals() {
        let model = presets::example_model();
        let regime = full("10");
        let x = [3usize, 1usize];
        let joint1 =
            quadrature_regime_joint(&model, &regime, &x, &[(0, true), (1, true)], 16).unwrap();
        let joint0 =
            quadrature_regime_joint(&model, &regime, &x, &[(0, false), (1, true)], 16).unwrap();
        let marg = quadrature_regime_joint(&model, &regime, &x, &[(1, true)], 16).unwrap();
        assert!((joint1 + joint0 - marg).abs() < 1e-10);
        let contradiction =
            quadrature_regime_joint(&model, &regime, &x, &[(0, true), (0, false)], 16).unwrap();
        assert_eq!(contradiction, 0.0);
    }

    #[test]
    fn general_latent_spec_is_rejected_by_quadrature_but_not_monte_carlo() {
        let mut model = presets::example_model();
        model.latent = crate::model::LatentSpec::RsGeneral {
            a: vec![0.6, 0.8],
            b: vec![0.8, 0.6],
            c: vec![0.5, 0.5],
            e: vec![0.75f64.sqrt(), 0.75f64.sqrt()],
        };
        let regime = full("11");
        let err = quadrature_regime_outcomes(&model, &regime, &[0, 0], 16).unwrap_err();
        assert!(matches!(err, Error::UnsupportedLatent(_)));
        mc_regime_outcomes(&model, &regime, &[0, 0], 10_000, 3).unwrap();
    }
}
