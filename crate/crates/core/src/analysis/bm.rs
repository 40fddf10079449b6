//! Berlekamp-Massey minimal LFSR synthesis on packed bits.
//!
//! The discrepancy `sum c_i s_(n-i)` is a dot product between the connection
//! polynomial and a reversed window of the input, so the input is stored
//! reversed once and each step costs `O(L / 64)` word operations.

use serde::Serialize;

use crate::bits::BitSeq;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BmResult {
    pub linear_complexity: usize,
    /// Coefficients `c_0 = 1, c_1, ..., c_L` of the connection polynomial:
    /// `s_j = c_1 s_(j-1) + ... + c_L s_(j-L)` for all `j >= L`.
    pub connection: BitSeq,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BmSummary {
    pub bits: usize,
    pub linear_complexity: usize,
}

/// `dst ^= src << shift` on little-endian bit vectors, truncated to `dst`.
fn xor_shifted(dst: &mut [u64], src: &[u64], shift: usize) {
    let (ws, bs) = (shift / 64, shift % 64);
    for (i, &w) in src.iter().enumerate() {
        if w == 0 {
            continue;
        }
        let j = i + ws;
        if j >= dst.len() {
            break;
        }
        dst[j] ^= w << bs;
        if bs != 0 && j + 1 < dst.len() {
            dst[j + 1] ^= w >> (64 - bs);
        }
    }
}

pub fn berlekamp_massey(seq: &BitSeq) -> BmResult {
    let n_bits = seq.len();
    let rev = BitSeq::from_bools(seq.iter().rev());
    let words = (n_bits + 1).div_ceil(64) + 1;
    let mut c = vec![0u64; words];
    let mut b = vec![0u64; words];
    c[0] = 1;
    b[0] = 1;
    let mut l = 0usize;
    let mut m = 1usize;
    // highest word index that can be nonzero in b, kept to bound the shifts
    let mut b_len = 1usize;
    for n in 0..n_bits {
        let base = n_bits - 1 - n;
        let active = (l + 1).div_ceil(64);
        let mut acc = 0u64;
        for (w, &cw) in c[..active].iter().enumerate() {
            acc ^= cw & rev.window64(base + 64 * w);
        }
        if acc.count_ones() & 1 == 0 {
            m += 1;
        } else if 2 * l <= n {
            let t = c.clone();
            xor_shifted(&mut c, &b[..b_len], m);
            b_len = active;
            l = n + 1 - l;
            b = t;
            m = 1;
        } else {
            xor_shifted(&mut c, &b[..b_len], m);
            m += 1;
        }
    }
    let connection = BitSeq::from_bools((0..=l).map(|i| c[i / 64] >> (i % 64) & 1 == 1));
    BmResult {
        linear_complexity: l,
        connection,
    }
}

impl BmResult {
    /// Runs the synthesized LFSR from the first `L` bits of `seq` and checks
    /// that it reproduces the whole sequence.
    pub fn regenerates(&self, seq: &BitSeq) -> bool {
        let l = self.linear_complexity;
        (l..seq.len()).all(|j| {
            let v = (1..=l)
                .filter(|&i| self.connection.get(i) && seq.get(j - i))
                .count()
                & 1
                == 1;
            v == seq.get(j)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf2::EchelonBasis;
    use crate::nlfsr::{FeedbackSpec, Nlfsr};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Shortest LFSR by trying every connection polynomial of each length.
    fn exhaustive_min_lfsr(s: &BitSeq) -> usize {
        let n = s.len();
        for l in 0..=n {
            for c in 0u64..1 << l {
                if (l..n).all(|j| {
                    ((0..l)
                        .filter(|&i| c >> i & 1 == 1 && s.get(j - 1 - i))
                        .count()
                        & 1
                        == 1)
                        == s.get(j)
                }) {
                    return l;
                }
            }
        }
        unreachable!()
    }

    /// Shortest LFSR by testing solvability of the linear system for each length.
    fn solve_min_lfsr(s: &BitSeq) -> usize {
        let n = s.len();
        (0..=n)
            .find(|&l| {
                // rows: [s_(j-1) .. s_(j-l) | s_j]; solvable iff the augmented column adds no rank
                let width = l + 1;
                let mut a = EchelonBasis::new(width.max(1));
                let mut aug = EchelonBasis::new(width);
                for j in l..n {
                    let mut row = vec![0u64; width.div_ceil(64)];
                    for i in 0..l {
                        if s.get(j - 1 - i) {
                            row[i / 64] |= 1 << (i % 64);
                        }
                    }
                    let mut full = row.clone();
                    if s.get(j) {
                        full[l / 64] |= 1 << (l % 64);
                    }
                    a.insert(row);
                    aug.insert(full);
                }
                a.rank() == aug.rank()
            })
            .unwrap()
    }

    #[test]
    fn alternating_sequence() {
        let r = berlekamp_massey(&BitSeq::from_bit_str("0101010101010101"));
        assert_eq!(r.linear_complexity, 2);
    }

    #[test]
    fn edge_cases() {
        assert_eq!(berlekamp_massey(&BitSeq::new()).linear_complexity, 0);
        assert_eq!(berlekamp_massey(&BitSeq::zeros(100)).linear_complexity, 0);
        let mut impulse = BitSeq::zeros(99);
        impulse.push(true);
        assert_eq!(berlekamp_massey(&impulse).linear_complexity, 100);
    }

    #[test]
    fn primitive_lfsr_period() {
        let spec: FeedbackSpec = "4:basic:1".parse().unwrap();
        let s = Nlfsr::new(spec, 1).unwrap().generate(30);
        let r = berlekamp_massey(&s);
        assert_eq!(r.linear_complexity, 4);
        assert_eq!(exhaustive_min_lfsr(&s), 4);
        assert!(r.regenerates(&s));
        // x^4 + x^3 + 1 in connection form: s_j = s_(j-3) + s_(j-4)
        assert_eq!(r.connection.to_bit_string(), "10011");
    }

    #[test]
    fn matches_exhaustive_oracle_on_short_sequences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let n = rng.random_range(1..=14);
            let s = BitSeq::from_bools((0..n).map(|_| rng.random::<bool>()));
            let r = berlekamp_massey(&s);
            assert_eq!(
                r.linear_complexity,
                exhaustive_min_lfsr(&s),
                "{}",
                s.to_bit_string()
            );
            assert!(r.regenerates(&s));
        }
    }

    #[test]
    fn matches_linear_solve_oracle_up_to_24_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..3000 {
            let n = rng.random_range(1..=24);
            let s = BitSeq::from_bools((0..n).map(|_| rng.random::<bool>()));
            assert_eq!(berlekamp_massey(&s).linear_complexity, solve_min_lfsr(&s));
        }
    }

    #[test]
    fn long_sequences_cross_word_boundaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let n = rng.random_range(100..600);
            let s = BitSeq::from_bools((0..n).map(|_| rng.random::<bool>()));
            let r = berlekamp_massey(&s);
            assert!(r.regenerates(&s));
            assert!((r.linear_complexity as i64 - n as i64 / 2).abs() < 40);
        }
    }
}
