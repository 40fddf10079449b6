//! Exhaustive initial-state recovery for toy generators.
//!
//! Each register's first 64 output bits are tabulated per start state, so a
//! candidate joint state is tested by evaluating the combiner ANF on whole
//! words: 64 keystream bits per term instead of one.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bits::BitSeq;
use crate::ksg::{Ksg, KsgConfig};
use crate::nlfsr::Nlfsr;

/// Largest joint state the search will enumerate.
pub const MAX_JOINT_BITS: usize = 22;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecoveryError {
    #[error("joint state of {0} bits exceeds the {MAX_JOINT_BITS}-bit search limit")]
    TooLarge(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Recovery {
    pub candidates_tested: u64,
    /// Joint states whose output agrees with the whole given keystream.
    pub states: Vec<Vec<u64>>,
}

fn valid_states(config: &KsgConfig, reg: usize) -> Vec<u64> {
    let spec = &config.registers()[reg];
    (0..=spec.state_mask())
        .filter(|&s| s != spec.degenerate_state())
        .collect()
}

pub fn exhaustive_recovery(
    config: &KsgConfig,
    keystream: &BitSeq,
) -> Result<Recovery, RecoveryError> {
    let bits = config.total_state_bits();
    if bits > MAX_JOINT_BITS {
        return Err(RecoveryError::TooLarge(bits));
    }
    let regs = config.registers();
    let states: Vec<Vec<u64>> = (0..regs.len()).map(|i| valid_states(config, i)).collect();
    let tables: Vec<Vec<u64>> = regs
        .iter()
        .zip(&states)
        .map(|(spec, ss)| {
            ss.iter()
                .map(|&s| {
                    Nlfsr::new(spec.clone(), s)
                        .expect("valid state")
                        .generate(64)
                        .window64(0)
                })
                .collect()
        })
        .collect();
    let prefix_len = keystream.len().min(64);
    let prefix_mask = u64::MAX.checked_shr(64 - prefix_len as u32).unwrap_or(0);
    let target = keystream.window64(0) & prefix_mask;
    let combiner = config.combiner();
    let constant = if combiner.constant() { u64::MAX } else { 0 };
    let terms: Vec<u64> = combiner.terms().iter().map(|m| m.mask()).collect();
    let radices: Vec<usize> = states.iter().map(Vec::len).collect();
    let rest: u64 = radices[1..].iter().map(|&r| r as u64).product();

    let mut found: Vec<Vec<u64>> = (0..radices[0])
        .into_par_iter()
        .flat_map_iter(|first| {
            let mut idx = vec![0usize; radices.len()];
            idx[0] = first;
            let mut hits = Vec::new();
            let mut words = vec![0u64; radices.len()];
            for _ in 0..rest {
                for (j, &i) in idx.iter().enumerate() {
                    words[j] = tables[j][i];
                }
                let z = terms.iter().fold(constant, |acc, &mask| {
                    let mut prod = u64::MAX;
                    let mut m = mask;
                    while m != 0 {
                        prod &= words[m.trailing_zeros() as usize];
                        m &= m - 1;
                    }
                    acc ^ prod
                });
                if (z ^ target) & prefix_mask == 0 {
                    hits.push(
                        idx.iter()
                            .enumerate()
                            .map(|(j, &i)| states[j][i])
                            .collect::<Vec<u64>>(),
                    );
                }
                for j in 1..idx.len() {
                    idx[j] += 1;
                    if idx[j] < radices[j] {
                        break;
                    }
                    idx[j] = 0;
                }
            }
            hits
        })
        .collect();

    if keystream.len() > 64 {
        found.retain(|s| {
            Ksg::new(config.clone(), s)
                .expect("valid states")
                .next_bits(keystream.len())
                == *keystream
        });
    }
    found.sort();
    Ok(Recovery {
        candidates_tested: radices.iter().map(|&r| r as u64).product(),
        states: found,
    })
}
