//! Dense threshold tables for the outcome and selection equations.
//!
//! Period `t` (0-based) conditions on the outcome history `y^{t-1}` (`t`
//! bits) and the treatment path. The outcome threshold additionally sees the
//! current treatment and the current shifter value, the selection threshold
//! sees the current instrument. Entries may be `+inf`/`-inf`, which makes the
//! corresponding indicator deterministic; that is how absorbing (irreversible)
//! processes are expressed.

use crate::bits::Bits;

/// Outcome thresholds for one period: `mu_t(y^{t-1}, d^t, x_t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MuTable {
    t: usize,
    k: usize,
    vals: Vec<f64>,
}

impl MuTable {
    /// Build the full table for period `t` over a grid of `k` shifter points.
    pub fn from_fn(t: usize, k: usize, f: impl Fn(Bits, Bits, usize) -> f64) -> Self {
        let mut vals = vec![0.0; (1 << t) * (1 << (t + 1)) * k];
        let mut table = MuTable { t, k, vals: Vec::new() };
        for y in Bits::enumerate(t) {
            for d in Bits::enumerate(t + 1) {
                for x in 0..k {
                    vals[table.idx(y, d, x)] = f(y, d, x);
                }
            }
        }
        table.vals = vals;
        table
    }

    fn idx(&self, y_prev: Bits, d: Bits, x: usize) -> usize {
        debug_assert_eq!(y_prev.len(), self.t);
        debug_assert_eq!(d.len(), self.t + 1);
        debug_assert!(x < self.k);
        ((y_prev.raw() as usize) << (self.t + 1) | d.raw() as usize) * self.k + x
    }

    /// Threshold for outcome history `y_prev`, treatment path `d` (through
    /// the current period), and current shifter index `x`.
    pub fn get(&self, y_prev: Bits, d: Bits, x: usize) -> f64 {
        self.vals[self.idx(y_prev, d, x)]
    }

    /// Overwrite one entry.
    pub fn set(&mut self, y_prev: Bits, d: Bits, x: usize, v: f64) {
        let i = self.idx(y_prev, d, x);
        self.vals[i] = v;
    }

    /// Period index.
    pub fn period(&self) -> usize {
        self.t
    }

    /// Number of shifter grid points.
    pub fn k(&self) -> usize {
        self.k
    }

    /// All entries, for validation sweeps.
    pub fn values(&self) -> &[f64] {
        &self.vals
    }
}

/// Selection thresholds for one period: `pi_t(y^{t-1}, d^{t-1}, z_t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PiTable {
    t: usize,
    vals: Vec<f64>,
}

impl PiTable {
    /// Build the full table for period `t`.
    pub fn from_fn(t: usize, f: impl Fn(Bits, Bits, bool) -> f64) -> Self {
        let mut vals = vec![0.0; (1 << t) * (1 << t) * 2];
        let mut table = PiTable { t, vals: Vec::new() };
        for y in Bits::enumerate(t) {
            for d in Bits::enumerate(t) {
                for z in [false, true] {
                    vals[table.idx(y, d, z)] = f(y, d, z);
                }
            }
        }
        table.vals = vals;
        table
    }

    fn idx(&self, y_prev: Bits, d_prev: Bits, z: bool) -> usize {
        debug_assert_eq!(y_prev.len(), self.t);
        debug_assert_eq!(d_prev.len(), self.t);
        (((y_prev.raw() as usize) << self.t | d_prev.raw() as usize) << 1) | z as usize
    }

    /// Threshold for outcome history `y_prev`, treatment history `d_prev`,
    /// and current instrument value `z`.
    pub fn get(&self, y_prev: Bits, d_prev: Bits, z: bool) -> f64 {
        self.vals[self.idx(y_prev, d_prev, z)]
    }

    /// Overwrite one entry.
    pub fn set(&mut self, y_prev: Bits, d_prev: Bits, z: bool, v: f64) {
        let i = self.idx(y_prev, d_prev, z);
        self.vals[i] = v;
    }

    /// Period index.
    pub fn period(&self) -> usize {
        self.t
    }

    /// All entries, for validation sweeps.
    pub fn values(&self) -> &[f64] {
        &self.vals
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mu_table_roundtrips_entries() {
        let t = MuTable::from_fn(1, 3, |y, d, x| {
            y.raw() as f64 * 100.0 + d.raw() as f64 * 10.0 + x as f64
        });
        assert_eq!(t.period(), 1);
        assert_eq!(t.k(), 3);
        for y in Bits::enumerate(1) {
            for d in Bits::enumerate(2) {
                for x in 0..3 {
                    let want = y.raw() as f64 * 100.0 + d.raw() as f64 * 10.0 + x as f64;
                    assert_eq!(t.get(y, d, x), want);
                }
            }
        }
    }

    #[test]
    fn pi_table_roundtrips_entries() {
        let t = PiTable::from_fn(2, |y, d, z| {
            y.raw() as f64 * 100.0 + d.raw() as f64 * 10.0 + z as u8 as f64
        });
        for y in Bits::enumerate(2) {
            for d in Bits::enumerate(2) {
                for z in [false, true] {
                    let want = y.raw() as f64 * 100.0 + d.raw() as f64 * 10.0 + z as u8 as f64;
                    assert_eq!(t.get(y, d, z), want);
                }
            }
        }
    }

    #[test]
    fn set_overwrites_single_cell() {
        let mut t = MuTable::from_fn(0, 2, |_, _, _| 0.0);
        t.set(Bits::EMPTY, Bits::from_raw(1, 1), 1, f64::INFINITY);
        assert_eq!(t.get(Bits::EMPTY, Bits::from_raw(1, 1), 1), f64::INFINITY);
        assert_eq!(t.get(Bits::EMPTY, Bits::from_raw(0, 1), 1), 0.0);
    }
}
