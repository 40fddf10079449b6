//! Cryptanalytic tooling: linear complexity, correlation, parity checks and
//! exhaustive recovery, all sized for toy instances.

pub mod bm;
pub mod correlation;
pub mod parity;
pub mod recovery;

pub use bm::{berlekamp_massey, BmResult, BmSummary};
pub use correlation::{
    correlation_scan, pack_inputs, subset_correlation, CorrelationTable, SubsetCorrelation,
};
pub use parity::{build_parity_cascade, ParityCascade};
pub use recovery::{exhaustive_recovery, Recovery, RecoveryError};

use num_bigint::BigUint;
use serde::Serialize;

use crate::bits::BitSeq;
use crate::bounds::{lc_lower_bound, period_lcm, LcBound};
use crate::ksg::{Ksg, KsgConfig, KsgError};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LcExperiment {
    pub lengths: Vec<usize>,
    pub bits: usize,
    /// Measured LC of each register stream over the same window.
    pub register_lcs: Vec<usize>,
    pub measured: usize,
    pub lower_bound: LcBound,
    /// Product of the measured register LCs over the witness monomial.
    pub witness_product: Option<String>,
    /// Period of the joint state sequence, an upper bound on the LC.
    pub period: String,
}

impl LcExperiment {
    /// Whether the measurement respects both the proven floor and the period.
    pub fn consistent(&self) -> bool {
        let m = BigUint::from(self.measured);
        let floor = self
            .witness_product
            .as_ref()
            .map(|p| p.parse::<BigUint>().expect("decimal"));
        let above = floor.is_none_or(|b| m >= b) && self.lower_bound.value().is_none_or(|b| m >= b);
        above && m <= self.period.parse::<BigUint>().expect("decimal")
    }
}

/// Runs the generator for two full periods (capped at `max_bits`) and
/// measures the linear complexity of the output.
pub fn lc_bound_experiment(
    config: &KsgConfig,
    states: &[u64],
    max_bits: usize,
) -> Result<LcExperiment, KsgError> {
    let lengths = config.lengths();
    let period = period_lcm(&lengths);
    let bits = usize::try_from(&period * 2u8).map_or(max_bits, |b: usize| b.min(max_bits));
    let mut g = Ksg::new(config.clone(), states)?;
    let mut z = BitSeq::with_capacity(bits);
    let mut streams = vec![BitSeq::with_capacity(bits); lengths.len()];
    for _ in 0..bits {
        let (bit, x) = g.next_with_inputs();
        z.push(bit);
        for (i, s) in streams.iter_mut().enumerate() {
            s.push(x >> i & 1 == 1);
        }
    }
    let register_lcs: Vec<usize> = streams
        .iter()
        .map(|s| berlekamp_massey(s).linear_complexity)
        .collect();
    let lower_bound = lc_lower_bound(&lengths, config.combiner());
    let witness_product = match &lower_bound {
        LcBound::Proven { witness, .. } => Some(
            witness
                .iter()
                .fold(BigUint::from(1u8), |acc, &i| acc * register_lcs[i - 1])
                .to_string(),
        ),
        LcBound::Unavailable { .. } => None,
    };
    Ok(LcExperiment {
        register_lcs,
        measured: berlekamp_massey(&z).linear_complexity,
        lower_bound,
        witness_product,
        period: period.to_string(),
        lengths,
        bits,
    })
}
