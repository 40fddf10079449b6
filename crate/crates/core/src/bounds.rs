//! Exact evaluation of the family's linear-complexity, period, cardinality
//! and attack-cost bounds. Everything is computed from register lengths,
//! the combiner ANF and the per-position set sizes; values are big integers
//! and `log2` is only applied for presentation.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::anf::{AnfFunction, Monomial};
use crate::catalog;

/// Exponent of fast matrix multiplication used by the algebraic-attack estimate.
pub const MATRIX_MULT_OMEGA: f64 = 2.38;

pub fn log2_big(x: &BigUint) -> f64 {
    if x.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = x.bits();
    if bits <= 64 {
        return x.to_u64().expect("fits").to_f64().expect("finite").log2();
    }
    let shift = bits - 64;
    let top = (x >> shift).to_u64().expect("fits");
    (top as f64).log2() + shift as f64
}

fn pow2(e: usize) -> BigUint {
    BigUint::one() << e
}

/// Minimum linear complexity of a maximum-period register of length `n`.
pub fn register_lc_floor(n: usize) -> BigUint {
    pow2(n - 1) + n
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum LcBound {
    /// Both conditions hold for the witness monomial; `value` is the product
    /// of `2^(N-1) + N` over its registers.
    Proven {
        witness: Vec<usize>,
        witness_lengths: Vec<usize>,
        value: String,
        log2: f64,
    },
    Unavailable {
        reason: String,
    },
}

impl LcBound {
    pub fn value(&self) -> Option<BigUint> {
        match self {
            LcBound::Proven { value, .. } => value.parse().ok(),
            LcBound::Unavailable { .. } => None,
        }
    }
}

fn pairwise_coprime(lengths: &[usize]) -> bool {
    lengths
        .iter()
        .enumerate()
        .all(|(i, a)| lengths[i + 1..].iter().all(|b| a.gcd(b) == 1))
}

fn positions(m: Monomial) -> Vec<usize> {
    m.indices().collect()
}

/// Checks the two coprimality conditions for the combined linear
/// complexity bound, trying each top-degree monomial as the witness.
pub fn lc_lower_bound(lengths: &[usize], combiner: &AnfFunction) -> LcBound {
    let d = combiner.degree();
    if d == 0 {
        return LcBound::Unavailable {
            reason: "combiner is constant".into(),
        };
    }
    if combiner.num_vars() != lengths.len() {
        return LcBound::Unavailable {
            reason: "combiner arity differs from register count".into(),
        };
    }
    let top: Vec<Monomial> = combiner
        .terms()
        .iter()
        .copied()
        .filter(|t| t.degree() == d)
        .collect();
    let mut last_reason = String::new();
    for &w in &top {
        let idx = positions(w);
        let ns: Vec<usize> = idx.iter().map(|&i| lengths[i - 1]).collect();
        if !pairwise_coprime(&ns) {
            last_reason = format!("lengths {ns:?} of monomial {w} are not pairwise coprime");
            continue;
        }
        // monomials of the same degree that swap exactly one variable of w
        let clash = top
            .iter()
            .filter(|&&o| o != w && (o.mask() & w.mask()).count_ones() == d - 1)
            .find_map(|o| {
                let out = (w.mask() & !o.mask()).trailing_zeros() as usize + 1;
                let inn = (o.mask() & !w.mask()).trailing_zeros() as usize + 1;
                (lengths[out - 1].gcd(&lengths[inn - 1]) != 1)
                    .then(|| format!("{o} swaps x{out} for x{inn} with gcd > 1"))
            });
        if let Some(reason) = clash {
            last_reason = reason;
            continue;
        }
        let value: BigUint = ns.iter().map(|&n| register_lc_floor(n)).product();
        return LcBound::Proven {
            log2: log2_big(&value),
            value: value.to_string(),
            witness: idx,
            witness_lengths: ns,
        };
    }
    LcBound::Unavailable {
        reason: last_reason,
    }
}

/// `gcd(2^a - 1, 2^b - 1) = 2^gcd(a, b) - 1`.
pub fn mersenne_gcd(a: usize, b: usize) -> BigUint {
    pow2(a.gcd(&b)) - 1u8
}

/// Exact `lcm(2^N_i - 1)`. Running products are not Mersenne numbers, so
/// the fold uses a general gcd; [`mersenne_gcd`] covers the pairwise case.
pub fn period_lcm(lengths: &[usize]) -> BigUint {
    lengths
        .iter()
        .fold(BigUint::one(), |acc, &n| acc.lcm(&(pow2(n) - 1u8)))
}

/// `sum N_i + sum log2 |A_i|`.
pub fn brute_force_log2(lengths: &[usize], counts: &[u64]) -> f64 {
    lengths.iter().sum::<usize>() as f64 + catalog::cardinality_log2(counts)
}

/// Total length of the `ci + 1` shortest registers.
pub fn correlation_floor(lengths: &[usize], ci: u32) -> usize {
    let mut sorted = lengths.to_vec();
    sorted.sort_unstable();
    sorted.iter().take(ci as usize + 1).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlgebraicEstimate {
    pub witness: Vec<usize>,
    /// `sum (N_j - 1)` over the witness registers: the degree of the
    /// keystream equations in the initial state bits.
    pub degree: usize,
    /// `sum over top monomials of prod 2^(N_j - 1)`.
    pub monomial_count_log2: f64,
    /// `prod (2^N_j - 2)` over the witness, the alternative monomial count.
    pub full_spectrum_log2: f64,
    pub omega: f64,
    pub cost_log2: f64,
}

pub fn algebraic_attack_estimate(
    lengths: &[usize],
    combiner: &AnfFunction,
    omega: f64,
) -> Option<AlgebraicEstimate> {
    let d = combiner.degree();
    if d == 0 {
        return None;
    }
    let top: Vec<Monomial> = combiner
        .terms()
        .iter()
        .copied()
        .filter(|t| t.degree() == d)
        .collect();
    let weight = |m: &Monomial| m.indices().map(|i| lengths[i - 1] - 1).sum::<usize>();
    let witness = *top.iter().max_by_key(|m| weight(m))?;
    let count: BigUint = top.iter().map(|m| pow2(weight(m))).sum();
    let spectrum: BigUint = witness
        .indices()
        .map(|i| pow2(lengths[i - 1]) - 2u8)
        .product();
    let count_log2 = log2_big(&count);
    Some(AlgebraicEstimate {
        witness: witness.indices().collect(),
        degree: weight(&witness),
        monomial_count_log2: count_log2,
        full_spectrum_log2: log2_big(&spectrum),
        omega,
        cost_log2: omega * count_log2,
    })
}

/// `log2(2^state_bits * 2^-check_bits)`: expected number of guard-register
/// states that keep the guard output zero at every checked position.
pub fn degeneration_log2(guard_state_bits: u32, check_bits: u32) -> i64 {
    guard_state_bits as i64 - check_bits as i64
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub lengths: Vec<usize>,
    pub total_state_bits: usize,
    pub lc_lower_bound: LcBound,
    pub period_lcm: String,
    pub period_lcm_log2: f64,
    pub position_counts: Vec<u64>,
    pub cardinality_log2: f64,
    pub brute_force_log2: f64,
    pub correlation_immunity: u32,
    pub correlation_floor: usize,
    pub algebraic: Option<AlgebraicEstimate>,
    pub debruijn_exponent: String,
}

pub fn bound_report(
    lengths: &[usize],
    combiner: &AnfFunction,
    counts: &[u64],
    ci: u32,
) -> BoundReport {
    let lcm = period_lcm(lengths);
    BoundReport {
        lengths: lengths.to_vec(),
        total_state_bits: lengths.iter().sum(),
        lc_lower_bound: lc_lower_bound(lengths, combiner),
        period_lcm_log2: log2_big(&lcm),
        period_lcm: lcm.to_string(),
        position_counts: counts.to_vec(),
        cardinality_log2: catalog::cardinality_log2(counts),
        brute_force_log2: brute_force_log2(lengths, counts),
        correlation_immunity: ci,
        correlation_floor: correlation_floor(lengths, ci),
        algebraic: algebraic_attack_estimate(lengths, combiner, MATRIX_MULT_OMEGA),
        debruijn_exponent: catalog::debruijn_count_log2(lengths).to_string(),
    }
}
