//! Empirical correlation between the keystream and XORs of register streams.
//!
//! All subsets are scanned at once: the samples are folded into a signed
//! histogram over combiner inputs, and a Walsh-Hadamard transform of that
//! histogram gives `sum_t (-1)^(z_t + w . x_t)` for every subset mask `w`.

use serde::Serialize;

use crate::bits::BitSeq;

pub const MAX_REGISTERS: usize = 24;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubsetCorrelation {
    /// Bit `i` selects register `i + 1`.
    pub mask: u64,
    pub order: u32,
    /// `P(z = w . x) - 1/2`.
    pub bias: f64,
    /// Correlation sum over `sqrt(samples)`, standard normal under independence.
    pub z_score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationTable {
    pub samples: u64,
    pub max_order: u32,
    pub subsets_tested: u64,
    pub threshold_sigma: f64,
    /// The tested subset with the largest `|z|`.
    pub strongest: Option<SubsetCorrelation>,
    /// Every tested subset beyond the threshold.
    pub significant: Vec<SubsetCorrelation>,
}

/// Signed correlation sums for every mask over `registers` inputs.
pub fn correlation_sums(keystream: &BitSeq, inputs: &[u64], registers: usize) -> Vec<i64> {
    assert!(registers <= MAX_REGISTERS);
    assert_eq!(keystream.len(), inputs.len());
    let mut h = vec![0i64; 1 << registers];
    for (z, &x) in keystream.iter().zip(inputs) {
        h[x as usize] += if z { -1 } else { 1 };
    }
    let mut step = 1;
    while step < h.len() {
        for block in (0..h.len()).step_by(2 * step) {
            for i in block..block + step {
                let (a, b) = (h[i], h[i + step]);
                h[i] = a + b;
                h[i + step] = a - b;
            }
        }
        step *= 2;
    }
    h
}

fn entry(mask: u64, sum: i64, samples: u64) -> SubsetCorrelation {
    SubsetCorrelation {
        mask,
        order: mask.count_ones(),
        bias: sum as f64 / (2.0 * samples as f64),
        z_score: sum as f64 / (samples as f64).sqrt(),
    }
}

/// Scans every nonempty subset of at most `max_order` registers.
/// `inputs[t]` packs the register outputs at time `t`, bit `i` for register `i + 1`.
pub fn correlation_scan(
    keystream: &BitSeq,
    inputs: &[u64],
    registers: usize,
    max_order: u32,
    threshold_sigma: f64,
) -> CorrelationTable {
    let samples = keystream.len() as u64;
    let sums = correlation_sums(keystream, inputs, registers);
    let mut strongest: Option<SubsetCorrelation> = None;
    let mut significant = Vec::new();
    let mut tested = 0;
    for (mask, &sum) in sums.iter().enumerate().skip(1) {
        let mask = mask as u64;
        if mask.count_ones() > max_order {
            continue;
        }
        tested += 1;
        let e = entry(mask, sum, samples);
        if e.z_score.abs() > threshold_sigma {
            significant.push(e.clone());
        }
        if strongest
            .as_ref()
            .is_none_or(|s| e.z_score.abs() > s.z_score.abs())
        {
            strongest = Some(e);
        }
    }
    CorrelationTable {
        samples,
        max_order,
        subsets_tested: tested,
        threshold_sigma,
        strongest,
        significant,
    }
}

/// Correlation of the keystream with a single subset.
pub fn subset_correlation(keystream: &BitSeq, inputs: &[u64], mask: u64) -> SubsetCorrelation {
    let sum: i64 = keystream
        .iter()
        .zip(inputs)
        .map(|(z, &x)| {
            if z ^ ((x & mask).count_ones() & 1 == 1) {
                -1
            } else {
                1
            }
        })
        .sum();
    entry(mask, sum, keystream.len() as u64)
}

/// Packs per-register streams into per-time input words.
pub fn pack_inputs(streams: &[BitSeq]) -> Vec<u64> {
    let len = streams.first().map_or(0, BitSeq::len);
    (0..len)
        .map(|t| {
            streams
                .iter()
                .enumerate()
                .fold(0u64, |acc, (i, s)| acc | (s.get(t) as u64) << i)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlfsr::{FeedbackSpec, Nlfsr};

    fn stream(spec: &str, state: u64, k: usize) -> BitSeq {
        Nlfsr::new(spec.parse::<FeedbackSpec>().unwrap(), state)
            .unwrap()
            .generate(k)
    }

    #[test]
    fn xor_of_two_registers_is_order_one_immune() {
        let k = 20_000;
        let a = stream("7:basic:1", 1, k);
        let b = stream("9:basic:4", 3, k);
        let mut z = a.clone();
        z.xor_assign(&b);
        let inputs = pack_inputs(&[a, b]);
        let t = correlation_scan(&z, &inputs, 2, 1, 4.0);
        assert_eq!(t.subsets_tested, 2);
        assert!(t.significant.is_empty(), "{t:?}");
        let full = correlation_scan(&z, &inputs, 2, 2, 4.0);
        assert_eq!(full.strongest.unwrap().mask, 0b11);
        assert_eq!(full.significant[0].bias, 0.5);
    }

    #[test]
    fn transform_matches_direct_sums() {
        let k = 3000;
        let streams = [
            stream("6:basic:1,(1,2),2", 5, k),
            stream("7:basic:1", 9, k),
            stream("5:basic:2", 1, k),
        ];
        let inputs = pack_inputs(&streams);
        let z = BitSeq::from_bools(
            inputs
                .iter()
                .map(|x| (x & 1 == 1) & (x >> 2 & 1 == 1) ^ (x >> 1 & 1 == 1)),
        );
        let sums = correlation_sums(&z, &inputs, 3);
        for mask in 0..8u64 {
            let direct = subset_correlation(&z, &inputs, mask);
            assert!((direct.z_score * (k as f64).sqrt() - sums[mask as usize] as f64).abs() < 1e-6);
        }
    }
}
