//! Simulated-population backend: counts over a large synthetic panel.
//!
//! Sits between the exact backend (no error, restricted models) and the
//! empirical backend (an actual sample): it works for every latent
//! specification and any horizon, with sampling error that shrinks as the
//! draw budget grows. Design-only queries (instruments and shifters, whose
//! law the model states directly) are answered exactly rather than counted,
//! so branch weights stay noise-free.

use crate::error::{Error, Result};
use crate::model::{Horizon, StructuralModel};
use crate::simulate::observational_rows;
use crate::tol::MC_CELL_FLOOR;

use super::counting::AtomTable;
use super::event::Event;
use super::{BackendKind, CellStats, PopulationEvaluator};

const MIN_DRAWS: usize = 100_000;

pub struct McEvaluator {
    model: StructuralModel,
    table: AtomTable,
}

/// Simulate `draws` individuals from the model and count over them.
pub fn mc_population_evaluator(
    model: &StructuralModel,
    draws: usize,
    seed: u64,
) -> Result<McEvaluator> {
    if draws < MIN_DRAWS {
        return Err(Error::InvalidQuery(format!(
            "simulated population needs at least {MIN_DRAWS} draws, got {draws}"
        )));
    }
    let rows = observational_rows(model, draws, seed, 1)?;
    let x_card = model.horizon.periods().map(|t| model.x_grid.k(t)).collect();
    Ok(McEvaluator {
        model: model.clone(),
        table: AtomTable::new(model.horizon, x_card, &rows, MC_CELL_FLOOR),
    })
}

impl McEvaluator {
    /// Probability of a design-only event straight from the model law.
    fn design_mass(&self, e: &Event) -> f64 {
        let mut p = 1.0;
        for t in self.model.horizon.periods() {
            if let Some(z) = e.z_at(t) {
                p *= self.model.z_prob(t, z);
            }
            if let Some(i) = e.x_at(t) {
                p *= self.model.x_prob(t, i);
            }
        }
        p
    }
}

impl PopulationEvaluator for McEvaluator {
    fn horizon(&self) -> Horizon {
        self.table.horizon()
    }

    fn x_card(&self, t: usize) -> usize {
        self.table.x_card(t)
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Simulated
    }

    fn prob(&self, target: &Event, given: &Event) -> Result<CellStats> {
        if target.is_design_only() && given.is_design_only() {
            return match given.and(target) {
                None => Ok(CellStats::exact(0.0)),
                Some(joint) => {
                    let den = self.design_mass(given);
                    if den == 0.0 {
                        return Err(Error::UnreachableCell(format!(
                            "design event [{given}] has zero probability"
                        )));
                    }
                    Ok(CellStats::exact(self.design_mass(&joint) / den))
                }
            };
        }
        self.table.prob(target, given)
    }

    fn base_tol(&self) -> f64 {
        0.0
    }

    fn stratum_restricted(&self, _w0: u8) -> Result<Box<dyn PopulationEvaluator>> {
        Err(Error::InvalidQuery(
            "simulated populations carry no baseline strata".into(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;
    use crate::numeric::norm_cdf;

    #[test]
    fn counted_margins_match_the_structural_law() {
        let model = presets::example_model();
        let eval = mc_population_evaluator(&model, 200_000, 21).unwrap();
        let h = eval.horizon();

        // Pr[D_0 = 1 | Z_0 = 1] = Phi(0.5); counted, so allow 4 SE.
        let stats = eval
            .prob(
                &Event::none(h).with_d(0, true),
                &Event::none(h).with_z(0, true),
            )
            .unwrap();
        let want = norm_cdf(0.5);
        assert!(stats.count > 0 && stats.std_error > 0.0);
        assert!(
            (stats.estimate - want).abs() < 4.0 * stats.std_error,
            "{} vs {want}",
            stats.estimate
        );
    }

    #[test]
    fn design_queries_are_answered_exactly() {
        let model = presets::example_model();
        let eval = mc_population_evaluator(&model, 100_000, 21).unwrap();
        let h = eval.horizon();
        let stats = eval
            .prob(
                &Event::none(h).with_z(1, true).with_x(0, 2),
                &Event::none(h).with_x(1, 3),
            )
            .unwrap();
        assert_eq!(stats.std_error, 0.0);
        assert_eq!(stats.count, 0);
        assert!((stats.estimate - 0.5 * 0.2).abs() < 1e-15);

        let conflict = eval
            .prob(
                &Event::none(h).with_z(0, true),
                &Event::none(h).with_z(0, false),
            )
            .unwrap();
        assert_eq!(conflict.estimate, 0.0);
    }

    #[test]
    fn draw_budget_is_validated() {
        let model = presets::example_model();
        assert!(matches!(
            mc_population_evaluator(&model, 10, 0),
            Err(Error::InvalidQuery(_))
        ));
    }

    #[test]
    fn no_strata_on_simulated_populations() {
        let model = presets::example_model();
        let eval = mc_population_evaluator(&model, 100_000, 2).unwrap();
        assert!(eval.stratum_restricted(0).is_err());
    }
}
