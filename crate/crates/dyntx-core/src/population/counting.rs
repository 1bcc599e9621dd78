//! Shared counting core for the simulated and empirical backends.
//!
//! Rows with identical observables are grouped into atoms, so a probability
//! query scans a few thousand distinct histories instead of the full panel,
//! and bootstrap resampling becomes a multinomial over atom counts.

use std::collections::HashMap;
use std::sync::RwLock;

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::Horizon;

use super::event::Event;
use super::panel::Row;
use super::CellStats;

pub(super) struct AtomTable {
    horizon: Horizon,
    x_card: Vec<usize>,
    atoms: Vec<(Row, u64)>,
    /// Cumulative atom counts, for inverse-CDF resampling.
    cum: Vec<u64>,
    total: u64,
    /// Minimum conditioning-cell size below which a query is refused.
    cell_floor: u64,
    memo: RwLock<HashMap<(u128, u128), CellStats>>,
}

impl AtomTable {
    pub fn new(horizon: Horizon, x_card: Vec<usize>, rows: &[Row], cell_floor: u64) -> Self {
        let mut groups: HashMap<Row, u64> = HashMap::new();
        for row in rows {
            *groups.entry(*row).or_insert(0) += 1;
        }
        let mut atoms: Vec<(Row, u64)> = groups.into_iter().collect();
        // HashMap iteration order is nondeterministic; queries would not
        // care, but resampling indexes into this vector.
        atoms.sort_unstable_by_key(|(r, _)| (r.y, r.d, r.z, r.x, r.w0));
        Self::from_atoms(horizon, x_card, atoms, cell_floor)
    }

    fn from_atoms(
        horizon: Horizon,
        x_card: Vec<usize>,
        atoms: Vec<(Row, u64)>,
        cell_floor: u64,
    ) -> Self {
        let mut cum = Vec::with_capacity(atoms.len());
        let mut total = 0;
        for &(_, c) in &atoms {
            total += c;
            cum.push(total);
        }
        AtomTable {
            horizon,
            x_card,
            atoms,
            cum,
            total,
            cell_floor,
            memo: RwLock::new(HashMap::new()),
        }
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    pub fn x_card(&self, t: usize) -> usize {
        self.x_card[t]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    #[cfg(test)]
    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    /// Raw matching counts `(#target and given, #given)`.
    pub fn count(&self, target: &Event, given: &Event) -> (u64, u64) {
        let joint = given.and(target);
        let mut num = 0;
        let mut den = 0;
        for (row, c) in &self.atoms {
            if row.matches(given) {
                den += c;
                if let Some(j) = &joint {
                    if row.matches(j) {
                        num += c;
                    }
                }
            }
        }
        (num, den)
    }

    fn check_events(&self, target: &Event, given: &Event) -> Result<()> {
        for e in [target, given] {
            if e.len() != self.horizon.get() {
                return Err(Error::InvalidQuery(format!(
                    "event spans {} periods, population has {}",
                    e.len(),
                    self.horizon.get()
                )));
            }
            for t in self.horizon.periods() {
                if let Some(i) = e.x_at(t) {
                    if i >= self.x_card[t] {
                        return Err(Error::InvalidQuery(format!(
                            "x index {i} out of range at period {t}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn prob(&self, target: &Event, given: &Event) -> Result<CellStats> {
        self.check_events(target, given)?;
        let key = (target.pack(), given.pack());
        if let Some(hit) = self.memo.read().expect("memo lock").get(&key) {
            return Ok(*hit);
        }
        let (num, den) = self.count(target, given);
        if den < self.cell_floor {
            return Err(Error::UnreachableCell(format!(
                "conditioning cell [{given}] holds {den} observations, floor is {}",
                self.cell_floor
            )));
        }
        let stats = CellStats::counted(num, den);
        self.memo.write().expect("memo lock").insert(key, stats);
        Ok(stats)
    }

    /// The sub-table of one baseline stratum.
    pub fn restricted(&self, w0: u8) -> Result<AtomTable> {
        let atoms: Vec<(Row, u64)> = self
            .atoms
            .iter()
            .filter(|(r, _)| r.w0 == w0)
            .copied()
            .collect();
        if atoms.is_empty() {
            return Err(Error::UnreachableCell(format!(
                "baseline stratum {w0} holds no observations"
            )));
        }
        Ok(Self::from_atoms(
            self.horizon,
            self.x_card.clone(),
            atoms,
            self.cell_floor,
        ))
    }

    /// A nonparametric-bootstrap replicate: resample `total` individuals
    /// with replacement, as a multinomial over atoms.
    pub fn resampled(&self, rng: &mut impl Rng) -> AtomTable {
        let mut counts = vec![0u64; self.atoms.len()];
        for _ in 0..self.total {
            let u = rng.random_range(0..self.total);
            let idx = self.cum.partition_point(|&c| c <= u);
            counts[idx] += 1;
        }
        let atoms = self
            .atoms
            .iter()
            .zip(&counts)
            .filter(|(_, &c)| c > 0)
            .map(|(&(row, _), &c)| (row, c))
            .collect();
        Self::from_atoms(
            self.horizon,
            self.x_card.clone(),
            atoms,
            self.cell_floor,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_rows() -> Vec<Row> {
        // 6 individuals over 2 periods, two duplicated histories.
        let mk = |z, d, y, x0, x1, w0| Row { z, d, y, x: {
            let mut x = [0u8; crate::bits::MAX_LEN];
            x[0] = x0;
            x[1] = x1;
            x
        }, w0 };
        vec![
            mk(0b01, 0b01, 0b10, 1, 2, 0),
            mk(0b01, 0b01, 0b10, 1, 2, 0),
            mk(0b10, 0b11, 0b11, 0, 2, 1),
            mk(0b00, 0b00, 0b00, 3, 4, 1),
            mk(0b00, 0b00, 0b00, 3, 4, 1),
            mk(0b11, 0b01, 0b01, 2, 0, 0),
        ]
    }

    fn toy_table(floor: u64) -> AtomTable {
        AtomTable::new(Horizon::new(2).unwrap(), vec![5, 5], &toy_rows(), floor)
    }

    #[test]
    fn grouping_preserves_multiplicity() {
        let table = toy_table(1);
        assert_eq!(table.atom_count(), 4);
        assert_eq!(table.total(), 6);
        let h = Horizon::new(2).unwrap();
        let any = Event::none(h);
        let d0 = Event::none(h).with_d(0, true);
        assert_eq!(table.count(&d0, &any), (4, 6));
        let stats = table.prob(&d0, &any).unwrap();
        assert_eq!(stats.estimate, 4.0 / 6.0);
        assert_eq!(stats.count, 6);
    }

    #[test]
    fn conflicting_conjunction_counts_zero() {
        let table = toy_table(1);
        let h = Horizon::new(2).unwrap();
        let target = Event::none(h).with_y(0, true);
        let given = Event::none(h).with_y(0, false);
        let stats = table.prob(&target, &given).unwrap();
        assert_eq!(stats.estimate, 0.0);
    }

    #[test]
    fn small_cells_are_refused() {
        let table = toy_table(5);
        let h = Horizon::new(2).unwrap();
        let target = Event::none(h).with_y(1, true);
        let given = Event::none(h).with_x(0, 0);
        let err = table.prob(&target, &given).unwrap_err();
        assert!(matches!(err, Error::UnreachableCell(_)), "{err}");
    }

    #[test]
    fn stratum_restriction_filters_rows() {
        let table = toy_table(1);
        let sub = table.restricted(1).unwrap();
        assert_eq!(sub.total(), 3);
        assert!(table.restricted(7).is_err());
    }

    #[test]
    fn resampling_preserves_the_population_size() {
        let table = toy_table(1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let rep = table.resampled(&mut rng);
            assert_eq!(rep.total(), 6);
            assert!(rep.atom_count() <= 4);
        }
    }

    #[test]
    fn out_of_range_x_is_an_invalid_query() {
        let table = toy_table(1);
        let h = Horizon::new(2).unwrap();
        let any = Event::none(h);
        let bad = Event::none(h).with_x(0, 9);
        assert!(matches!(
            table.prob(&any, &bad),
            Err(Error::InvalidQuery(_))
        ));
    }
}
