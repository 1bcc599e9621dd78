//! Treatment regimes, including partially specified (masked) ones.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bits::Bits;
use crate::error::{Error, Result};

/// A deterministic treatment assignment over the horizon.
///
/// A full regime fixes the treatment in every period. A masked regime fixes
/// it only at `active` periods and leaves the rest to the model's own
/// selection process; the inactive components of `d` are normalized to zero
/// so that equality and hashing see only what the regime actually pins down.
///
/// Textual form is one character per period: `0`/`1` at active periods, `.`
/// at inactive ones, so `"1."` intervenes only in the first of two periods.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Regime {
    d: Bits,
    active: Bits,
}

impl Regime {
    /// Regime fixing the treatment in every period.
    pub fn full(d: Bits) -> Self {
        Regime { d, active: Bits::ones(d.len()) }
    }

    /// Regime fixing the treatment at `active` periods only.
    pub fn masked(d: Bits, active: Bits) -> Result<Self> {
        if d.len() != active.len() {
            return Err(Error::InvalidQuery(format!(
                "regime bits have length {} but mask has length {}",
                d.len(),
                active.len()
            )));
        }
        let mut norm = d;
        for t in 0..d.len() {
            if !active.get(t) {
                norm.set(t, false);
            }
        }
        Ok(Regime { d: norm, active })
    }

    /// Horizon length.
    pub fn len(&self) -> usize {
        self.d.len()
    }

    /// True for the zero-length regime.
    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// The assigned treatments; inactive components are zero.
    pub fn d(&self) -> Bits {
        self.d
    }

    /// The intervention mask.
    pub fn active(&self) -> Bits {
        self.active
    }

    /// True when every period is intervened on.
    pub fn is_full(&self) -> bool {
        self.active == Bits::ones(self.active.len())
    }

    /// True when period `t` is intervened on.
    pub fn is_active(&self, t: usize) -> bool {
        self.active.get(t)
    }

    /// The assigned arm at period `t`, or `None` at inactive periods.
    pub fn arm(&self, t: usize) -> Option<bool> {
        self.is_active(t).then(|| self.d.get(t))
    }

    /// Copy with the arm at an active period replaced.
    pub fn with_arm(&self, t: usize, v: bool) -> Self {
        assert!(self.is_active(t), "period {t} is not active");
        Regime { d: self.d.with(t, v), active: self.active }
    }

    /// All `2^len` full regimes, in increasing raw order of the bits.
    pub fn enumerate_full(len: usize) -> impl Iterator<Item = Regime> {
        Bits::enumerate(len).map(Regime::full)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in 0..self.len() {
            let c = match self.arm(t) {
                Some(true) => '1',
                Some(false) => '0',
                None => '.',
            };
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Regime(\"{self}\")")
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.len() > crate::bits::MAX_LEN {
            return Err(Error::InvalidQuery(format!(
                "regime string {s:?} longer than {}",
                crate::bits::MAX_LEN
            )));
        }
        let mut d = Bits::zeros(s.len());
        let mut active = Bits::zeros(s.len());
        for (t, c) in s.chars().enumerate() {
            match c {
                '0' => active.set(t, true),
                '1' => {
                    active.set(t, true);
                    d.set(t, true);
                }
                '.' => {}
                _ => {
                    return Err(Error::InvalidQuery(format!(
                        "regime string {s:?} contains {c:?}; expected '0', '1', or '.'"
                    )))
                }
            }
        }
        Ok(Regime { d, active })
    }
}

impl Serialize for Regime {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Regime {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_regime_roundtrip() {
        let r = Regime::full("101".parse().unwrap());
        assert!(r.is_full());
        assert_eq!(r.to_string(), "101");
        assert_eq!(r.arm(1), Some(false));
        assert_eq!("101".parse::<Regime>().unwrap(), r);
    }

    #[test]
    fn masked_regime_normalizes_inactive_bits() {
        let a = Regime::masked("11".parse().unwrap(), "10".parse().unwrap()).unwrap();
        let b = Regime::masked("10".parse().unwrap(), "10".parse().unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_string(), "1.");
        assert_eq!(a.arm(0), Some(true));
        assert_eq!(a.arm(1), None);
        assert_eq!("1.".parse::<Regime>().unwrap(), a);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(Regime::masked("11".parse().unwrap(), "100".parse().unwrap()).is_err());
        assert!("1x".parse::<Regime>().is_err());
    }
}
