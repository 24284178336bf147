//! Per-scalar binary masks over the flat parameter vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One flag per scalar parameter, in canonical parameter order.
///
/// `true` marks an active connection (weight or bias).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskMask {
    bits: Vec<bool>,
}

impl TaskMask {
    pub fn full(len: usize) -> Self {
        Self {
            bits: vec![true; len],
        }
    }

    pub fn empty(len: usize) -> Self {
        Self {
            bits: vec![false; len],
        }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn set(&mut self, i: usize, on: bool) {
        self.bits[i] = on;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.bits.iter().copied()
    }

    fn check_len(&self, other: &TaskMask) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::shape(format!(
                "mask lengths differ: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(())
    }

    pub fn union(&self, other: &TaskMask) -> Result<TaskMask> {
        self.check_len(other)?;
        Ok(Self::from_bits(
            self.iter().zip(other.iter()).map(|(a, b)| a || b).collect(),
        ))
    }

    pub fn intersection(&self, other: &TaskMask) -> Result<TaskMask> {
        self.check_len(other)?;
        Ok(Self::from_bits(
            self.iter().zip(other.iter()).map(|(a, b)| a && b).collect(),
        ))
    }

    /// Entries set here but not in `other`.
    pub fn difference(&self, other: &TaskMask) -> Result<TaskMask> {
        self.check_len(other)?;
        Ok(Self::from_bits(
            self.iter().zip(other.iter()).map(|(a, b)| a && !b).collect(),
        ))
    }

    pub fn complement(&self) -> TaskMask {
        Self::from_bits(self.iter().map(|b| !b).collect())
    }

    pub fn is_subset_of(&self, other: &TaskMask) -> bool {
        self.len() == other.len() && self.iter().zip(other.iter()).all(|(a, b)| !a || b)
    }

    /// Pack into bytes, LSB-first within each byte.
    pub fn to_packed(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.len().div_ceil(8)];
        for (i, b) in self.iter().enumerate() {
            if b {
                out[i / 8] |= 1 << (i % 8);
            }
        }
        out
    }

    pub fn from_packed(bytes: &[u8], len: usize) -> Result<Self> {
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::shape(format!(
                "packed mask has {} bytes, expected {} for {len} bits",
                bytes.len(),
                len.div_ceil(8)
            )));
        }
        // trailing padding bits must be clear
        if len % 8 != 0 {
            let last = bytes[bytes.len() - 1];
            if last >> (len % 8) != 0 {
                return Err(Error::shape("packed mask has nonzero padding bits"));
            }
        }
        Ok(Self::from_bits(
            (0..len).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn set_algebra() {
        let a = TaskMask::from_bits(vec![true, true, false, false]);
        let b = TaskMask::from_bits(vec![true, false, true, false]);
        assert_eq!(a.union(&b).unwrap().bits(), &[true, true, true, false]);
        assert_eq!(a.intersection(&b).unwrap().bits(), &[true, false, false, false]);
        assert_eq!(a.difference(&b).unwrap().bits(), &[false, true, false, false]);
        assert!(a.intersection(&b).unwrap().is_subset_of(&a));
        assert!(!a.is_subset_of(&b));
        assert!(a.union(&TaskMask::full(3)).is_err());
    }

    #[test]
    fn packed_rejects_bad_padding() {
        assert!(TaskMask::from_packed(&[0b1000_0000], 3).is_err());
        assert!(TaskMask::from_packed(&[0, 0], 3).is_err());
    }

    proptest! {
        #[test]
        fn packing_roundtrips(bits in proptest::collection::vec(any::<bool>(), 0..200)) {
            let m = TaskMask::from_bits(bits);
            let back = TaskMask::from_packed(&m.to_packed(), m.len()).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
