//! Conditioning and target events over panel observables.

use std::fmt;

use crate::bits::MAX_LEN;
use crate::model::Horizon;

/// A conjunction of equality constraints on the observables of one panel:
/// per period, optionally `Z_t = z`, `X_t = x`, `D_t = d`, `Y_t = y`.
///
/// `None` entries are unconstrained (marginalized when conditioning on the
/// event, free when the event is a query target). Identification code builds
/// conditioning prefixes by constraining periods `0..=t` and leaving the rest
/// open.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Event {
    z: Vec<Option<bool>>,
    x: Vec<Option<usize>>,
    d: Vec<Option<bool>>,
    y: Vec<Option<bool>>,
}

impl Event {
    /// The unconstrained event over `horizon` periods.
    pub fn none(horizon: Horizon) -> Self {
        let t = horizon.get();
        Event {
            z: vec![None; t],
            x: vec![None; t],
            d: vec![None; t],
            y: vec![None; t],
        }
    }

    /// Number of periods.
    pub fn len(&self) -> usize {
        self.z.len()
    }

    /// True when the event has zero periods (never constructed in practice).
    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Copy with `Z_t = v`.
    pub fn with_z(mut self, t: usize, v: bool) -> Self {
        self.z[t] = Some(v);
        self
    }

    /// Copy with `X_t = index`.
    pub fn with_x(mut self, t: usize, index: usize) -> Self {
        self.x[t] = Some(index);
        self
    }

    /// Copy with `D_t = v`.
    pub fn with_d(mut self, t: usize, v: bool) -> Self {
        self.d[t] = Some(v);
        self
    }

    /// Copy with `Y_t = v`.
    pub fn with_y(mut self, t: usize, v: bool) -> Self {
        self.y[t] = Some(v);
        self
    }

    /// Copy with the period-`t` constraint on the given field removed.
    pub fn clear_z(mut self, t: usize) -> Self {
        self.z[t] = None;
        self
    }

    pub fn clear_x(mut self, t: usize) -> Self {
        self.x[t] = None;
        self
    }

    pub fn z_at(&self, t: usize) -> Option<bool> {
        self.z[t]
    }

    pub fn x_at(&self, t: usize) -> Option<usize> {
        self.x[t]
    }

    pub fn d_at(&self, t: usize) -> Option<bool> {
        self.d[t]
    }

    pub fn y_at(&self, t: usize) -> Option<bool> {
        self.y[t]
    }

    /// True when nothing is constrained.
    pub fn is_unconstrained(&self) -> bool {
        self.max_constrained().is_none()
    }

    /// Latest period carrying any constraint.
    pub fn max_constrained(&self) -> Option<usize> {
        (0..self.len())
            .rev()
            .find(|&t| {
                self.z[t].is_some()
                    || self.x[t].is_some()
                    || self.d[t].is_some()
                    || self.y[t].is_some()
            })
    }

    /// True when only instrument and shifter values are constrained (those
    /// are design variables with a known assignment law).
    pub fn is_design_only(&self) -> bool {
        self.d.iter().all(Option::is_none) && self.y.iter().all(Option::is_none)
    }

    /// Conjunction of two events; `None` when they contradict each other.
    pub fn and(&self, other: &Event) -> Option<Event> {
        debug_assert_eq!(self.len(), other.len());
        let mut out = self.clone();
        for t in 0..self.len() {
            if !merge(&mut out.z[t], other.z[t])
                || !merge(&mut out.x[t], other.x[t])
                || !merge(&mut out.d[t], other.d[t])
                || !merge(&mut out.y[t], other.y[t])
            {
                return None;
            }
        }
        Some(out)
    }

    /// 96-bit packing for memo keys: 12 bits per period, x indices in 6 bits.
    pub fn pack(&self) -> u128 {
        let mut out = 0u128;
        for t in 0..self.len() {
            let mut p = 0u16;
            p |= enc2(self.y[t]);
            p |= enc2(self.d[t]) << 2;
            p |= enc2(self.z[t]) << 4;
            let x = match self.x[t] {
                None => 63,
                Some(i) => {
                    debug_assert!(i < 33);
                    i as u16
                }
            };
            p |= x << 6;
            out |= (p as u128) << (12 * t);
        }
        debug_assert!(self.len() <= MAX_LEN);
        out
    }
}

fn merge<T: Copy + PartialEq>(slot: &mut Option<T>, v: Option<T>) -> bool {
    match (slot.as_ref(), v) {
        (_, None) => true,
        (None, Some(v)) => {
            *slot = Some(v);
            true
        }
        (Some(cur), Some(v)) => *cur == v,
    }
}

fn enc2(v: Option<bool>) -> u16 {
    match v {
        None => 0,
        Some(false) => 1,
        Some(true) => 2,
    }
}

impl fmt::Display for Event {
    /// One character per period and field, `.` meaning unconstrained:
    /// `z=01,x=.3,d=1.,y=..`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bit = |v: Option<bool>| match v {
            None => ".".to_string(),
            Some(b) => (b as u8).to_string(),
        };
        let xs: String = self
            .x
            .iter()
            .map(|v| match v {
                None => ".".to_string(),
                Some(i) => i.to_string(),
            })
            .collect();
        write!(
            f,
            "z={},x={},d={},y={}",
            self.z.iter().copied().map(bit).collect::<String>(),
            xs,
            self.d.iter().copied().map(bit).collect::<String>(),
            self.y.iter().copied().map(bit).collect::<String>(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(n: usize) -> Horizon {
        Horizon::new(n).unwrap()
    }

    #[test]
    fn builders_and_accessors() {
        let e = Event::none(h(3)).with_z(0, true).with_x(1, 4).with_d(2, false).with_y(1, true);
        assert_eq!(e.z_at(0), Some(true));
        assert_eq!(e.x_at(1), Some(4));
        assert_eq!(e.d_at(2), Some(false));
        assert_eq!(e.y_at(1), Some(true));
        assert_eq!(e.max_constrained(), Some(2));
        assert!(!e.is_design_only());
        assert_eq!(e.to_string(), "z=1..,x=.4.,d=..0,y=.1.");
    }

    #[test]
    fn conjunction_merges_and_detects_conflicts() {
        let a = Event::none(h(2)).with_z(0, true).with_d(1, true);
        let b = Event::none(h(2)).with_z(1, false).with_d(1, true);
        let ab = a.and(&b).unwrap();
        assert_eq!(ab.z_at(0), Some(true));
        assert_eq!(ab.z_at(1), Some(false));
        assert_eq!(ab.d_at(1), Some(true));

        let c = Event::none(h(2)).with_d(1, false);
        assert!(a.and(&c).is_none());
    }

    #[test]
    fn packing_is_injective_on_distinct_events() {
        let base = Event::none(h(2));
        let variants = [
            base.clone(),
            base.clone().with_z(0, false),
            base.clone().with_z(0, true),
            base.clone().with_x(0, 0),
            base.clone().with_x(0, 32),
            base.clone().with_d(1, true),
            base.clone().with_y(1, false),
        ];
        let packed: Vec<u128> = variants.iter().map(Event::pack).collect();
        for i in 0..packed.len() {
            for j in 0..i {
                assert_ne!(packed[i], packed[j], "{} vs {}", variants[i], variants[j]);
            }
        }
    }

    #[test]
    fn design_only_detection() {
        let e = Event::none(h(2)).with_z(0, true).with_x(1, 2);
        assert!(e.is_design_only());
        assert!(!e.clone().with_y(0, true).is_design_only());
        assert!(Event::none(h(2)).is_unconstrained());
    }
}
