//! Fixed-length binary sequences indexed by period.
//!
//! Outcome histories, treatment paths, regimes, and instrument assignments
//! are all short bit-vectors (horizons are at most [`MAX_LEN`] periods), so
//! one compact `Copy` type serves them all. Bit `i` is period `i` in 0-based
//! code order; the textual form writes periods left to right, so `"10"` means
//! bit 0 set and bit 1 clear.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Maximum supported sequence length.
pub const MAX_LEN: usize = 8;

/// A fixed-length sequence of binary indicators.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bits {
    len: u8,
    raw: u8,
}

impl Bits {
    /// The empty sequence (length zero).
    pub const EMPTY: Bits = Bits { len: 0, raw: 0 };

    /// All-zero sequence of the given length.
    pub fn zeros(len: usize) -> Self {
        assert!(len <= MAX_LEN, "bit sequence length {len} exceeds {MAX_LEN}");
        Bits { len: len as u8, raw: 0 }
    }

    /// All-one sequence of the given length.
    pub fn ones(len: usize) -> Self {
        assert!(len <= MAX_LEN, "bit sequence length {len} exceeds {MAX_LEN}");
        Bits { len: len as u8, raw: ((1u16 << len) - 1) as u8 }
    }

    /// Sequence from the low `len` bits of `raw` (bit `i` of `raw` is period `i`).
    pub fn from_raw(raw: u8, len: usize) -> Self {
        assert!(len <= MAX_LEN);
        let mask = ((1u16 << len) - 1) as u8;
        Bits { len: len as u8, raw: raw & mask }
    }

    /// Sequence from a slice of booleans.
    pub fn from_slice(bits: &[bool]) -> Self {
        let mut b = Bits::zeros(bits.len());
        for (i, &v) in bits.iter().enumerate() {
            b.set(i, v);
        }
        b
    }

    /// Number of periods.
    pub fn len(&self) -> usize {
        self.len as usize
    }

    /// True when the sequence has length zero.
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Packed representation (low `len()` bits).
    pub fn raw(&self) -> u8 {
        self.raw
    }

    /// Bit at period `i`.
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len(), "bit index {i} out of range {}", self.len());
        (self.raw >> i) & 1 == 1
    }

    /// Set bit at period `i`.
    pub fn set(&mut self, i: usize, v: bool) {
        assert!(i < self.len(), "bit index {i} out of range {}", self.len());
        if v {
            self.raw |= 1 << i;
        } else {
            self.raw &= !(1 << i);
        }
    }

    /// Copy with bit `i` set to `v`.
    pub fn with(&self, i: usize, v: bool) -> Self {
        let mut b = *self;
        b.set(i, v);
        b
    }

    /// Copy with bit `i` negated.
    pub fn flipped(&self, i: usize) -> Self {
        self.with(i, !self.get(i))
    }

    /// Copy extended by one trailing period holding `v`.
    pub fn pushed(&self, v: bool) -> Self {
        let mut b = Bits { len: self.len + 1, raw: self.raw };
        assert!(b.len() <= MAX_LEN);
        b.set(self.len(), v);
        b
    }

    /// Leading sub-sequence of length `n`.
    pub fn prefix(&self, n: usize) -> Self {
        assert!(n <= self.len());
        Bits::from_raw(self.raw, n)
    }

    /// Number of set bits.
    pub fn count_ones(&self) -> u32 {
        self.raw.count_ones()
    }

    /// True when no period steps from 1 back to 0 (an absorbing pattern).
    pub fn is_nondecreasing(&self) -> bool {
        (0..self.len().saturating_sub(1)).all(|i| !self.get(i) || self.get(i + 1))
    }

    /// Iterator over the bits in period order.
    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    /// All `2^len` sequences of the given length, in increasing raw order.
    pub fn enumerate(len: usize) -> impl Iterator<Item = Bits> {
        assert!(len <= MAX_LEN);
        (0..(1u16 << len)).map(move |raw| Bits::from_raw(raw as u8, len))
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            write!(f, "{}", if b { '1' } else { '0' })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bits(\"{self}\")")
    }
}

impl FromStr for Bits {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() > MAX_LEN {
            return Err(crate::Error::InvalidQuery(format!(
                "bit string {s:?} longer than {MAX_LEN}"
            )));
        }
        let mut b = Bits::zeros(s.len());
        for (i, c) in s.chars().enumerate() {
            match c {
                '0' => {}
                '1' => b.set(i, true),
                _ => {
                    return Err(crate::Error::InvalidQuery(format!(
                        "bit string {s:?} contains {c:?}; expected only '0'/'1'"
                    )))
                }
            }
        }
        Ok(b)
    }
}

impl Serialize for Bits {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Bits {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_indexing() {
        let b: Bits = "0110".parse().unwrap();
        assert_eq!(b.len(), 4);
        assert!(!b.get(0) && b.get(1) && b.get(2) && !b.get(3));
        assert_eq!(b.to_string(), "0110");
        assert_eq!(b.prefix(2).to_string(), "01");
        assert_eq!(b.flipped(0).to_string(), "1110");
        assert_eq!(b.pushed(true).to_string(), "01101");
    }

    #[test]
    fn empty_sequence() {
        let b = Bits::EMPTY;
        assert_eq!(b.len(), 0);
        assert_eq!(b.to_string(), "");
        assert_eq!("".parse::<Bits>().unwrap(), b);
    }

    #[test]
    fn enumerate_covers_all() {
        let all: Vec<Bits> = Bits::enumerate(3).collect();
        assert_eq!(all.len(), 8);
        assert_eq!(all[0].to_string(), "000");
        assert_eq!(all[5].to_string(), "101"); // raw 5 = bits 0 and 2
        assert_eq!(all[7].to_string(), "111");
    }

    #[test]
    fn nondecreasing_detects_absorbing_patterns() {
        assert!("0011".parse::<Bits>().unwrap().is_nondecreasing());
        assert!("1111".parse::<Bits>().unwrap().is_nondecreasing());
        assert!("0000".parse::<Bits>().unwrap().is_nondecreasing());
        assert!(!"0100".parse::<Bits>().unwrap().is_nondecreasing());
    }

    #[test]
    fn rejects_bad_strings() {
        assert!("012".parse::<Bits>().is_err());
        assert!("001100110".parse::<Bits>().is_err()); // too long
    }

    proptest::proptest! {
        #[test]
        fn display_parse_roundtrip(raw in 0u8..=255, len in 0usize..=MAX_LEN) {
            let b = Bits::from_raw(raw, len);
            let s = b.to_string();
            let back: Bits = s.parse().unwrap();
            proptest::prop_assert_eq!(b, back);
        }
    }
}
