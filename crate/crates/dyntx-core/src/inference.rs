//! Plug-in estimation and cluster bootstrap over observed panels.
//!
//! Estimation is frequency substitution: build the counting evaluator over
//! the panel and run the same identification code that the exact backend
//! runs, with the matching tolerance widened by the cells' binomial standard
//! errors. Uncertainty comes from resampling whole individuals (rows carry
//! full paths, so within-person dependence survives resampling) and reading
//! percentile intervals off the replicate distribution.

use serde::{Deserialize, Serialize};
use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::identify::{
    identify_arsf_at, identify_ate, identify_period_ate, identify_transition_ate, Measured,
};
use crate::model::Regime;
use crate::population::{empirical_evaluator, PanelData, PopulationEvaluator};
use crate::tol::BOOTSTRAP_MAX_FAILURE_FRAC;

/// A scalar functional of the population law, named by what it measures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionalSpec {
    /// `E[Y_period(regime) | x]`; `period: None` means the terminal period.
    Arsf {
        regime: Regime,
        x: Vec<usize>,
        period: Option<usize>,
    },
    /// Terminal contrast `E[Y_T(a) - Y_T(b) | x]`.
    Ate {
        regime_a: Regime,
        regime_b: Regime,
        x: Vec<usize>,
    },
    /// Contrast of terminal transition probabilities conditional on the
    /// potential outcome at `period` being `y_prev`.
    TransitionAte {
        regime_a: Regime,
        regime_b: Regime,
        x: Vec<usize>,
        period: usize,
        y_prev: bool,
    },
    /// Terminal-period effect among observed histories with `Y_{T-1} = y_prev`.
    PeriodAte { x: Vec<usize>, y_prev: bool },
}

impl fmt::Display for FunctionalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let xs = |x: &[usize]| {
            x.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        match self {
            FunctionalSpec::Arsf { regime, x, period } => match period {
                Some(t) => write!(f, "arsf[t={t}](d={regime}, x={})", xs(x)),
                None => write!(f, "arsf(d={regime}, x={})", xs(x)),
            },
            FunctionalSpec::Ate {
                regime_a,
                regime_b,
                x,
            } => write!(f, "ate(d={regime_a} vs d={regime_b}, x={})", xs(x)),
            FunctionalSpec::TransitionAte {
                regime_a,
                regime_b,
                x,
                period,
                y_prev,
            } => write!(
                f,
                "transition_ate(d={regime_a} vs d={regime_b}, x={}, y_{period}={})",
                xs(x),
                u8::from(*y_prev)
            ),
            FunctionalSpec::PeriodAte { x, y_prev } => {
                write!(f, "period_ate(x={}, y_prev={})", xs(x), u8::from(*y_prev))
            }
        }
    }
}

/// Evaluate the functional against any backend.
pub fn evaluate_functional(
    eval: &dyn PopulationEvaluator,
    spec: &FunctionalSpec,
) -> Result<Measured> {
    match spec {
        FunctionalSpec::Arsf { regime, x, period } => {
            let t = period.unwrap_or_else(|| eval.horizon().terminal());
            identify_arsf_at(eval, regime, x, t).map(|id| id.measured())
        }
        FunctionalSpec::Ate {
            regime_a,
            regime_b,
            x,
        } => identify_ate(eval, regime_a, regime_b, x),
        FunctionalSpec::TransitionAte {
            regime_a,
            regime_b,
            x,
            period,
            y_prev,
        } => identify_transition_ate(eval, regime_a, regime_b, x, *period, *y_prev),
        FunctionalSpec::PeriodAte { x, y_prev } => identify_period_ate(eval, x, *y_prev),
    }
}

/// Plug-in point estimate: counting evaluator over the panel, then the
/// identification recursion with std-error widened matching tolerances.
pub fn estimate(data: &PanelData, spec: &FunctionalSpec) -> Result<Measured> {
    let eval = empirical_evaluator(data)?;
    evaluate_functional(&eval, spec)
}

/// Percentile bootstrap output.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BootstrapResult {
    /// Rendered functional id, e.g. `arsf(d=11, x=2,2)`.
    pub functional: String,
    /// Full-sample plug-in estimate.
    pub estimate: Measured,
    /// Requested replicates.
    pub b: usize,
    /// Two-sided level: the interval is `[q_{alpha/2}, q_{1-alpha/2}]`.
    pub alpha: f64,
    pub ci: (f64, f64),
    /// Replicates whose panel lost a needed cell to resampling.
    pub failures: usize,
    /// Successful replicate values, in replicate order.
    pub replicates: Vec<f64>,
}

/// Resample individuals with replacement `b` times and read off the
/// percentile interval. Replicates run in parallel; replicate `r` draws
/// from its own counter-indexed stream, so results do not depend on thread
/// scheduling.
pub fn bootstrap(
    data: &PanelData,
    spec: &FunctionalSpec,
    b: usize,
    seed: u64,
    alpha: f64,
) -> Result<BootstrapResult> {
    if b < 100 {
        return Err(Error::InvalidQuery(format!(
            "bootstrap needs at least 100 replicates, got {b}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidQuery(format!(
            "interval level alpha={alpha} outside (0, 1)"
        )));
    }
    let eval = empirical_evaluator(data)?;
    let estimate = evaluate_functional(&eval, spec)?;

    let outcomes: Vec<Option<f64>> = (0..b as u64)
        .into_par_iter()
        .map(|r| {
            let replica = eval.resampled(seed, r);
            evaluate_functional(&replica, spec).ok().map(|m| m.value)
        })
        .collect();
    let failures = outcomes.iter().filter(|o| o.is_none()).count();
    if failures as f64 > BOOTSTRAP_MAX_FAILURE_FRAC * b as f64 {
        return Err(Error::TooManyFailures {
            failed: failures,
            total: b,
        });
    }
    let replicates: Vec<f64> = outcomes.into_iter().flatten().collect();
    let mut sorted = replicates.clone();
    sorted.sort_by(f64::total_cmp);
    let ci = (
        quantile(&sorted, alpha / 2.0),
        quantile(&sorted, 1.0 - alpha / 2.0),
    );
    Ok(BootstrapResult {
        functional: spec.to_string(),
        estimate,
        b,
        alpha,
        ci,
        failures,
        replicates,
    })
}

/// Order-statistic quantile with linear interpolation.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[sorted.len() - 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::MAX_LEN;
    use crate::model::presets::example_model;
    use crate::model::Horizon;
    use crate::population::{exact_evaluator, Row};
    use crate::simulate::simulate_panel;
    use crate::tol::DEFAULT_QUAD_ORDER;

    fn regime(s: &str) -> Regime {
        s.parse().unwrap()
    }

    /// A panel of identical paths: z=(1,0), d=(1,1), y=(0,1), x=(2,4).
    fn degenerate_panel(n: usize) -> PanelData {
        let mut x = [0u8; MAX_LEN];
        x[0] = 2;
        x[1] = 4;
        let row = Row {
            z: 0b01,
            d: 0b11,
            y: 0b10,
            x,
            w0: 0,
        };
        PanelData::from_rows(Horizon::new(2).unwrap(), vec![3, 5], vec![row; n])
    }

    #[test]
    fn large_panels_reproduce_the_exact_value() {
        let model = example_model();
        let panel = simulate_panel(&model, 1_000_000, 42, 1).unwrap();
        let spec = FunctionalSpec::Arsf {
            regime: regime("10"),
            x: vec![2, 2],
            period: None,
        };
        let got = estimate(&panel, &spec).unwrap();
        let exact = exact_evaluator(&model, DEFAULT_QUAD_ORDER).unwrap();
        let want = evaluate_functional(&exact, &spec).unwrap();
        assert!(
            (got.value - want.value).abs() <= 4.0 * got.std_error.max(1e-9),
            "empirical {} vs exact {} (se {})",
            got.value,
            want.value,
            got.std_error
        );
    }

    #[test]
    fn contrasting_a_regime_with_itself_is_exactly_zero() {
        let model = example_model();
        let panel = simulate_panel(&model, 100_000, 3, 1).unwrap();
        let spec = FunctionalSpec::Ate {
            regime_a: regime("01"),
            regime_b: regime("01"),
            x: vec![2, 2],
        };
        assert_eq!(estimate(&panel, &spec).unwrap().value, 0.0);
    }

    #[test]
    fn missing_cells_fail_with_the_cell_named() {
        let panel = degenerate_panel(200);
        let spec = FunctionalSpec::Arsf {
            regime: regime("00"),
            x: vec![2, 4],
            period: None,
        };
        match estimate(&panel, &spec) {
            Err(Error::UnreachableCell(msg)) => {
                assert!(!msg.is_empty());
            }
            other => panic!("expected a named unreachable cell, got {other:?}"),
        }
    }

    #[test]
    fn degenerate_panels_bootstrap_to_a_zero_width_interval() {
        let panel = degenerate_panel(200);
        // The one regime the panel can speak to: the observed path itself.
        let spec = FunctionalSpec::Arsf {
            regime: regime("11"),
            x: vec![2, 4],
            period: None,
        };
        let got = bootstrap(&panel, &spec, 100, 9, 0.05).unwrap();
        assert_eq!(got.estimate.value, 1.0);
        assert_eq!(got.ci, (1.0, 1.0));
        assert_eq!(got.failures, 0);
        assert_eq!(got.replicates.len(), 100);
    }

    #[test]
    fn fixed_seeds_reproduce_identical_replicates() {
        let model = example_model();
        let panel = simulate_panel(&model, 2_000, 5, 1).unwrap();
        let spec = FunctionalSpec::Arsf {
            regime: regime("11"),
            x: vec![2, 2],
            period: Some(0),
        };
        let a = bootstrap(&panel, &spec, 120, 77, 0.10).unwrap();
        let b = bootstrap(&panel, &spec, 120, 77, 0.10).unwrap();
        assert_eq!(a, b);
        assert!(a.ci.0 >= 0.0 && a.ci.1 <= 1.0);
        assert!(a.ci.0 <= a.estimate.value && a.estimate.value <= a.ci.1);
        let c = bootstrap(&panel, &spec, 120, 78, 0.10).unwrap();
        assert_ne!(a.replicates, c.replicates);
    }

    #[test]
    fn undersized_bootstrap_requests_are_rejected() {
        let panel = degenerate_panel(60);
        let spec = FunctionalSpec::Arsf {
            regime: regime("11"),
            x: vec![2, 4],
            period: None,
        };
        assert!(matches!(
            bootstrap(&panel, &spec, 99, 1, 0.05),
            Err(Error::InvalidQuery(_))
        ));
        assert!(matches!(
            bootstrap(&panel, &spec, 100, 1, 1.5),
            Err(Error::InvalidQuery(_))
        ));
    }
}
