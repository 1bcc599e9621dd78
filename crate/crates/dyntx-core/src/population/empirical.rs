//! Empirical backend: counts over an observed panel.
//!
//! This is the estimation path: running the identification routines against
//! this backend is plug-in estimation, and [`EmpiricalEvaluator::resampled`]
//! provides individual-level bootstrap replicates for inference.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::Horizon;
use crate::tol::EMPIRICAL_CELL_FLOOR;

use super::counting::AtomTable;
use super::event::Event;
use super::panel::PanelData;
use super::{BackendKind, CellStats, PopulationEvaluator};

pub struct EmpiricalEvaluator {
    table: AtomTable,
}

/// Count over the given panel.
pub fn empirical_evaluator(panel: &PanelData) -> Result<EmpiricalEvaluator> {
    let x_card = panel.horizon().periods().map(|t| panel.x_card(t)).collect();
    Ok(EmpiricalEvaluator {
        table: AtomTable::new(
            panel.horizon(),
            x_card,
            panel.rows(),
            EMPIRICAL_CELL_FLOOR,
        ),
    })
}

impl EmpiricalEvaluator {
    /// Number of individuals behind this evaluator.
    pub fn n(&self) -> u64 {
        self.table.total()
    }

    /// One bootstrap replicate: individuals resampled with replacement.
    /// `(seed, replicate)` fully determines the draw, so replicates are
    /// reproducible and independent across indices.
    pub fn resampled(&self, seed: u64, replicate: u64) -> EmpiricalEvaluator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(replicate);
        EmpiricalEvaluator {
            table: self.table.resampled(&mut rng),
        }
    }
}

impl PopulationEvaluator for EmpiricalEvaluator {
    fn horizon(&self) -> Horizon {
        self.table.horizon()
    }

    fn x_card(&self, t: usize) -> usize {
        self.table.x_card(t)
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Empirical
    }

    fn prob(&self, target: &Event, given: &Event) -> Result<CellStats> {
        self.table.prob(target, given)
    }

    fn base_tol(&self) -> f64 {
        0.0
    }

    fn stratum_restricted(&self, w0: u8) -> Result<Box<dyn PopulationEvaluator>> {
        Ok(Box::new(EmpiricalEvaluator {
            table: self.table.restricted(w0)?,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;
    use crate::simulate::simulate_panel;

    #[test]
    fn panel_counts_round_trip_through_the_evaluator() {
        let model = presets::example_model();
        let panel = simulate_panel(&model, 5_000, 3, 2).unwrap();
        let eval = empirical_evaluator(&panel).unwrap();
        assert_eq!(eval.n(), 5_000);
        let h = eval.horizon();
        let stats = eval
            .prob(&Event::none(h).with_d(0, true), &Event::none(h))
            .unwrap();
        let direct = panel.rows().iter().filter(|r| r.d & 1 == 1).count();
        assert_eq!(stats.estimate, direct as f64 / 5_000.0);
    }

    #[test]
    fn stratum_restriction_and_resampling_compose() {
        let model = presets::example_model();
        let panel = simulate_panel(&model, 4_000, 9, 4).unwrap();
        let eval = empirical_evaluator(&panel).unwrap();
        let h = eval.horizon();
        let any = Event::none(h);
        let sub = eval.stratum_restricted(2).unwrap();
        let d = Event::none(h).with_d(1, true);
        // Strata are independent labels, so the restricted share should be
        // close to the full-panel share.
        let full = eval.prob(&d, &any).unwrap();
        let part = sub.prob(&d, &any).unwrap();
        assert!((full.estimate - part.estimate).abs() < 5.0 * part.std_error);

        let rep = eval.resampled(11, 0);
        assert_eq!(rep.n(), 4_000);
        let again = eval.resampled(11, 0);
        assert_eq!(
            rep.prob(&d, &any).unwrap(),
            again.prob(&d, &any).unwrap(),
            "same (seed, replicate) must reproduce the same table"
        );
        let other = eval.resampled(11, 1);
        assert_ne!(
            rep.prob(&d, &any).unwrap().estimate,
            other.prob(&d, &any).unwrap().estimate,
            "distinct replicates should differ on a cell this small"
        );
    }
}
