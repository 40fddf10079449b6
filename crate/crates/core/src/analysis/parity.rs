//! Parity-check cascades over register periods.
//!
//! XORing a sequence with itself shifted by a register's period removes that
//! register's contribution to any linear combination. Chaining `m` such
//! stages XORs `2^m` taps whose offsets are the subset sums of the periods.

use serde::Serialize;
use thiserror::Error;

use crate::bits::BitSeq;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("sequence of {got} bits is too short for a cascade spanning {span} positions")]
pub struct TooShort {
    pub got: usize,
    pub span: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ParityCascade {
    pub periods: Vec<usize>,
}

pub fn build_parity_cascade(periods: &[usize]) -> ParityCascade {
    ParityCascade {
        periods: periods.to_vec(),
    }
}

impl ParityCascade {
    pub fn term_count(&self) -> usize {
        1 << self.periods.len()
    }

    /// Largest tap offset, the sum of all periods.
    pub fn span(&self) -> usize {
        self.periods.iter().sum()
    }

    /// All `2^m` tap offsets, sorted.
    pub fn taps(&self) -> Vec<usize> {
        let mut taps = vec![0usize];
        for &p in &self.periods {
            let shifted: Vec<usize> = taps.iter().map(|t| t + p).collect();
            taps.extend(shifted);
        }
        taps.sort_unstable();
        taps
    }

    /// Residual `r(t) = XOR over taps s of seq(t + s)`, one stage at a time.
    pub fn apply(&self, seq: &BitSeq) -> Result<BitSeq, TooShort> {
        if seq.len() <= self.span() {
            return Err(TooShort {
                got: seq.len(),
                span: self.span(),
            });
        }
        let mut cur = seq.clone();
        for &p in &self.periods {
            let n = cur.len() - p;
            let mut next = cur.slice(0, n);
            next.xor_assign(&cur.slice(p, p + n));
            cur = next;
        }
        Ok(cur)
    }

    /// Same residual from the expanded tap list.
    pub fn apply_direct(&self, seq: &BitSeq) -> Result<BitSeq, TooShort> {
        if seq.len() <= self.span() {
            return Err(TooShort {
                got: seq.len(),
                span: self.span(),
            });
        }
        let taps = self.taps();
        let n = seq.len() - self.span();
        Ok(BitSeq::from_bools((0..n).map(|t| {
            taps.iter().fold(false, |acc, &s| acc ^ seq.get(t + s))
        })))
    }
}
