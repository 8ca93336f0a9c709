//! Cumulative ("prefix of ones") targets for ordered categories.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `K` bits, a run of ones followed by zeros. Rank `r` sets the first `r` bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrdinalTarget {
    bits: Vec<bool>,
}

impl OrdinalTarget {
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.bits.iter().take_while(|&&b| b).count()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| f64::from(u8::from(b))).collect()
    }
}

/// Rank is one-based: `rank = token + 1`.
pub fn encode_ordinal(rank: usize, k: usize) -> Result<OrdinalTarget> {
    if rank == 0 || rank > k {
        return Err(Error::OutOfRange(format!("rank {rank} not in 1..={k}")));
    }
    Ok(OrdinalTarget {
        bits: (0..k).map(|i| i < rank).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeRule {
    /// Rank is the position of the first probability at or below one half.
    #[default]
    FirstFailure,
    /// Rank is the number of probabilities above one half.
    Count,
}

/// One-based rank from `K` cumulative probabilities; never below 1.
pub fn decode_ordinal(probs: &[f64], rule: DecodeRule) -> usize {
    let rank = match rule {
        DecodeRule::FirstFailure => probs.iter().position(|&p| p <= 0.5).unwrap_or(probs.len()),
        DecodeRule::Count => probs.iter().filter(|&&p| p > 0.5).count(),
    };
    rank.max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoding_examples() {
        let t = encode_ordinal(3, 15).unwrap();
        let want: Vec<bool> = [1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0].iter().map(|&b| b == 1).collect();
        assert_eq!(t.bits(), want.as_slice());
        assert_eq!(encode_ordinal(1, 15).unwrap().rank(), 1);
        assert!(encode_ordinal(15, 15).unwrap().bits().iter().all(|&b| b));
        assert!(encode_ordinal(0, 15).is_err());
        assert!(encode_ordinal(16, 15).is_err());
    }

    #[test]
    fn decoding_examples() {
        let mut p = vec![0.9, 0.8, 0.6, 0.3];
        p.extend(vec![0.1; 11]);
        assert_eq!(decode_ordinal(&p, DecodeRule::FirstFailure), 3);
        assert_eq!(decode_ordinal(&[0.9; 15], DecodeRule::FirstFailure), 15);
        assert_eq!(decode_ordinal(&[0.2; 15], DecodeRule::FirstFailure), 1);
        assert_eq!(decode_ordinal(&[0.9, 0.2, 0.9, 0.9], DecodeRule::FirstFailure), 1);
        assert_eq!(decode_ordinal(&[0.9, 0.2, 0.9, 0.9], DecodeRule::Count), 3);
        assert_eq!(decode_ordinal(&[0.5; 4], DecodeRule::Count), 1);
    }

    #[test]
    fn hard_round_trip() {
        for k in 1..=15 {
            for r in 1..=k {
                let t = encode_ordinal(r, k).unwrap();
                assert_eq!(decode_ordinal(&t.as_f64(), DecodeRule::FirstFailure), r);
                assert_eq!(decode_ordinal(&t.as_f64(), DecodeRule::Count), r);
                assert!(t.bits().windows(2).all(|w| w[0] >= w[1]));
            }
        }
    }
}
