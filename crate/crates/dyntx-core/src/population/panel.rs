//! Observed panels: one row of observables per individual.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bits::MAX_LEN;
use crate::error::{Error, Result};
use crate::model::Horizon;

use super::event::Event;

/// One individual's full history, bit-packed per field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub(crate) struct Row {
    pub z: u8,
    pub d: u8,
    pub y: u8,
    pub x: [u8; MAX_LEN],
    pub w0: u8,
}

impl Row {
    pub fn matches(&self, e: &Event) -> bool {
        for t in 0..e.len() {
            if let Some(v) = e.z_at(t) {
                if ((self.z >> t) & 1 == 1) != v {
                    return false;
                }
            }
            if let Some(v) = e.d_at(t) {
                if ((self.d >> t) & 1 == 1) != v {
                    return false;
                }
            }
            if let Some(v) = e.y_at(t) {
                if ((self.y >> t) & 1 == 1) != v {
                    return false;
                }
            }
            if let Some(i) = e.x_at(t) {
                if self.x[t] as usize != i {
                    return false;
                }
            }
        }
        true
    }
}

/// Long-format CSV record: one period of one individual.
#[derive(Serialize, Deserialize)]
struct CsvRecord {
    id: u64,
    t: usize,
    y: u8,
    d: u8,
    x: u8,
    z: u8,
    w0: u8,
}

/// A panel of `n` individuals observed over a fixed horizon.
///
/// The on-disk form is long-format CSV with header `id,t,y,d,x,z,w0`:
/// periods `t` are 0-based, `x` is the shifter grid index, and `w0` is an
/// optional baseline stratum label (0 when there is none). Every individual
/// must appear with exactly one record per period.
#[derive(Clone, Debug)]
pub struct PanelData {
    horizon: Horizon,
    x_card: Vec<usize>,
    rows: Vec<Row>,
}

impl PanelData {
    pub(crate) fn from_rows(horizon: Horizon, x_card: Vec<usize>, rows: Vec<Row>) -> Self {
        debug_assert_eq!(x_card.len(), horizon.get());
        PanelData { horizon, x_card, rows }
    }

    /// Number of individuals.
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    /// Shifter grid cardinality at period `t`.
    pub fn x_card(&self, t: usize) -> usize {
        self.x_card[t]
    }

    /// Number of baseline strata (`max w0 + 1`).
    pub fn strata(&self) -> u8 {
        self.rows.iter().map(|r| r.w0).max().map_or(1, |m| m + 1)
    }

    pub(crate) fn rows(&self) -> &[Row] {
        &self.rows
    }

    /// Replace the per-period grid cardinalities (useful when a small panel
    /// did not realize every grid value the model can produce).
    pub fn set_x_card(&mut self, x_card: Vec<usize>) -> Result<()> {
        if x_card.len() != self.horizon.get() {
            return Err(Error::InvalidModel(format!(
                "x cardinality covers {} periods, expected {}",
                x_card.len(),
                self.horizon.get()
            )));
        }
        for (t, &k) in x_card.iter().enumerate() {
            let seen = self.rows.iter().map(|r| r.x[t] as usize).max().unwrap_or(0);
            if k <= seen {
                return Err(Error::InvalidModel(format!(
                    "x cardinality {k} at period {t} but the panel contains index {seen}"
                )));
            }
        }
        self.x_card = x_card;
        Ok(())
    }

    /// Serialize to long-format CSV.
    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for (i, row) in self.rows.iter().enumerate() {
            for t in self.horizon.periods() {
                w.serialize(CsvRecord {
                    id: i as u64,
                    t,
                    y: (row.y >> t) & 1,
                    d: (row.d >> t) & 1,
                    x: row.x[t],
                    z: (row.z >> t) & 1,
                    w0: row.w0,
                })
                .expect("csv serialization of plain integers");
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory writer")).expect("ascii csv")
    }

    /// Parse long-format CSV; the horizon and grid sizes are inferred.
    pub fn from_csv_string(text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut order: Vec<u64> = Vec::new();
        let mut partial: HashMap<u64, (Row, u16)> = HashMap::new();
        let mut horizon_seen = 0usize;
        for (line, record) in reader.deserialize::<CsvRecord>().enumerate() {
            let r = record.map_err(|e| Error::InvalidModel(format!("panel record {line}: {e}")))?;
            if r.t >= MAX_LEN {
                return Err(Error::InvalidModel(format!(
                    "panel record {line}: period {} exceeds {MAX_LEN}",
                    r.t
                )));
            }
            for (name, v) in [("y", r.y), ("d", r.d), ("z", r.z)] {
                if v > 1 {
                    return Err(Error::InvalidModel(format!(
                        "panel record {line}: {name} = {v}, expected 0 or 1"
                    )));
                }
            }
            horizon_seen = horizon_seen.max(r.t + 1);
            let entry = partial.entry(r.id).or_insert_with(|| {
                order.push(r.id);
                (Row { z: 0, d: 0, y: 0, x: [0; MAX_LEN], w0: r.w0 }, 0)
            });
            if entry.1 & (1 << r.t) != 0 {
                return Err(Error::InvalidModel(format!(
                    "panel has two records for id {} period {}",
                    r.id, r.t
                )));
            }
            entry.1 |= 1 << r.t;
            entry.0.z |= r.z << r.t;
            entry.0.d |= r.d << r.t;
            entry.0.y |= r.y << r.t;
            entry.0.x[r.t] = r.x;
            if entry.0.w0 != r.w0 {
                return Err(Error::InvalidModel(format!(
                    "id {} changes stratum across periods",
                    r.id
                )));
            }
        }
        let horizon = Horizon::new(horizon_seen)?;
        let full = (1u16 << horizon_seen) - 1;
        let mut rows = Vec::with_capacity(order.len());
        for id in order {
            let (row, mask) = partial[&id];
            if mask != full {
                return Err(Error::InvalidModel(format!(
                    "id {id} is missing periods (mask {mask:0b}, expected {full:0b})"
                )));
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::InvalidModel("panel has no records".into()));
        }
        let x_card = (0..horizon_seen)
            .map(|t| rows.iter().map(|r| r.x[t] as usize + 1).max().unwrap())
            .collect();
        Ok(PanelData { horizon, x_card, rows })
    }

    /// Write long-format CSV to a file.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())
            .map_err(|e| Error::Io(format!("writing {}: {e}", path.display())))
    }

    /// Read long-format CSV from a file.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("reading {}: {e}", path.display())))?;
        Self::from_csv_string(&text)
    }
}
