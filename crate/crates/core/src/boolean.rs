//! Cryptographic criteria of Boolean functions: truth tables, the Moebius
//! and Walsh-Hadamard transforms, correlation immunity, nonlinearity and
//! algebraic immunity.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::anf::{AnfError, AnfFunction};
use crate::gf2::EchelonBasis;

pub const MAX_TT_VARS: usize = 24;
pub const MAX_AI_VARS: usize = 16;

/// The 16-input combiner of the keystream generator: the eight linear inputs
/// `x1..x8` plus a degree-4 nonlinear part on `x9..x16`.
pub const F16_TERMS: &str =
    "1,2,3,4,5,6,7,8,(9,11),(10,11),(10,12),(13,15),(14,15),(14,16),(9,10,11),(10,11,12),(13,14,15,16)";

pub fn combiner_f16() -> AnfFunction {
    AnfFunction::parse_terms(F16_TERMS, 16).expect("builtin combiner parses")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BooleanError {
    #[error("{got} variables exceeds the limit of {limit} for this computation")]
    TooManyVariables { got: usize, limit: usize },
    #[error("truth table needs {expected} hex digits, got {got}")]
    BadHexLength { expected: usize, got: usize },
    #[error("invalid hex in truth table")]
    BadHex,
    #[error(transparent)]
    Anf(#[from] AnfError),
}

/// Entry `x` holds `f(x)`, where bit `i - 1` of `x` is `x_i`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct TruthTable {
    num_vars: usize,
    words: Vec<u64>,
}

const IN_WORD_MASKS: [u64; 6] = [
    0x5555_5555_5555_5555,
    0x3333_3333_3333_3333,
    0x0f0f_0f0f_0f0f_0f0f,
    0x00ff_00ff_00ff_00ff,
    0x0000_ffff_0000_ffff,
    0x0000_0000_ffff_ffff,
];

impl TruthTable {
    pub fn zeros(num_vars: usize) -> Result<Self, BooleanError> {
        if num_vars > MAX_TT_VARS {
            return Err(BooleanError::TooManyVariables {
                got: num_vars,
                limit: MAX_TT_VARS,
            });
        }
        Ok(Self {
            num_vars,
            words: vec![0; (1usize << num_vars).div_ceil(64)],
        })
    }

    pub fn from_fn(num_vars: usize, f: impl Fn(u64) -> bool) -> Result<Self, BooleanError> {
        let mut tt = Self::zeros(num_vars)?;
        for x in 0..tt.len() as u64 {
            if f(x) {
                tt.set(x, true);
            }
        }
        Ok(tt)
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn len(&self) -> usize {
        1 << self.num_vars
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn get(&self, x: u64) -> bool {
        self.words[(x >> 6) as usize] >> (x & 63) & 1 == 1
    }

    pub fn set(&mut self, x: u64, bit: bool) {
        let w = &mut self.words[(x >> 6) as usize];
        if bit {
            *w |= 1 << (x & 63);
        } else {
            *w &= !(1 << (x & 63));
        }
    }

    pub fn weight(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn is_balanced(&self) -> bool {
        self.weight() * 2 == self.len() as u64
    }

    pub fn complement(&self) -> Self {
        let mut out = self.clone();
        for w in &mut out.words {
            *w = !*w;
        }
        out.trim();
        out
    }

    /// Inputs where the function is 1, in increasing order.
    pub fn support(&self) -> impl Iterator<Item = u64> + '_ {
        self.words.iter().enumerate().flat_map(|(i, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros() as u64;
                w &= w - 1;
                Some(i as u64 * 64 + b)
            })
        })
    }

    fn trim(&mut self) {
        if self.num_vars < 6 {
            self.words[0] &= (1u64 << (1 << self.num_vars)) - 1;
        }
    }

    /// In-place Moebius transform; it is its own inverse.
    fn moebius(&mut self) {
        for (i, mask) in IN_WORD_MASKS.iter().enumerate().take(self.num_vars.min(6)) {
            let s = 1 << i;
            for w in &mut self.words {
                *w ^= (*w & mask) << s;
            }
        }
        for i in 6..self.num_vars {
            let stride = 1usize << (i - 6);
            for block in (0..self.words.len()).step_by(2 * stride) {
                for k in block..block + stride {
                    self.words[k + stride] ^= self.words[k];
                }
            }
        }
    }

    /// Hex string of the table bytes, entry 0 in the low bit of the first byte.
    pub fn to_hex(&self) -> String {
        let bytes: Vec<u8> = self.words.iter().flat_map(|w| w.to_le_bytes()).collect();
        let nbytes = self.len().div_ceil(8);
        hex::encode(&bytes[..nbytes])
    }

    pub fn from_hex(num_vars: usize, text: &str) -> Result<Self, BooleanError> {
        let mut tt = Self::zeros(num_vars)?;
        let expected = tt.len().div_ceil(8) * 2;
        if text.len() != expected {
            return Err(BooleanError::BadHexLength {
                expected,
                got: text.len(),
            });
        }
        let bytes = hex::decode(text).map_err(|_| BooleanError::BadHex)?;
        for (i, chunk) in bytes.chunks(8).enumerate() {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            tt.words[i] = u64::from_le_bytes(buf);
        }
        let before = tt.words[0];
        tt.trim();
        if tt.words[0] != before {
            return Err(BooleanError::BadHex);
        }
        Ok(tt)
    }
}

impl fmt::Debug for TruthTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TruthTable({} vars, {})", self.num_vars, self.to_hex())
    }
}

pub fn anf_to_tt(f: &AnfFunction) -> Result<TruthTable, BooleanError> {
    let mut tt = TruthTable::zeros(f.num_vars())?;
    tt.set(0, f.constant());
    for t in f.terms() {
        tt.set(t.mask(), true);
    }
    tt.moebius();
    Ok(tt)
}

pub fn tt_to_anf(tt: &TruthTable) -> AnfFunction {
    let mut coeffs = tt.clone();
    coeffs.moebius();
    let constant = coeffs.get(0);
    let masks: Vec<u64> = coeffs.support().filter(|&m| m != 0).collect();
    AnfFunction::from_masks(tt.num_vars(), constant, masks).expect("masks within arity")
}

/// Signed spectrum `W(w) = sum_x (-1)^(f(x) + x.w)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WalshSpectrum {
    num_vars: usize,
    coefficients: Vec<i32>,
}

impl WalshSpectrum {
    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn coefficients(&self) -> &[i32] {
        &self.coefficients
    }

    pub fn at(&self, mask: u64) -> i32 {
        self.coefficients[mask as usize]
    }

    pub fn max_abs(&self) -> u32 {
        self.coefficients
            .iter()
            .map(|c| c.unsigned_abs())
            .max()
            .unwrap_or(0)
    }

    /// The unsigned sum `sum_x f(x) (-1)^(x.w)`, which equals
    /// `(2^n [w = 0] - W(w)) / 2`.
    pub fn unsigned_sum(&self, mask: u64) -> i64 {
        let total = if mask == 0 { 1i64 << self.num_vars } else { 0 };
        (total - self.at(mask) as i64) / 2
    }

    /// Masks of the given Hamming weight with nonzero coefficient.
    pub fn nonzero_at_weight(&self, weight: u32) -> Vec<u64> {
        (0..self.coefficients.len() as u64)
            .filter(|m| m.count_ones() == weight && self.at(*m) != 0)
            .collect()
    }
}

pub fn walsh_transform(tt: &TruthTable) -> WalshSpectrum {
    let n = tt.num_vars();
    let mut c: Vec<i32> = (0..tt.len() as u64)
        .map(|x| if tt.get(x) { -1 } else { 1 })
        .collect();
    let mut h = 1;
    while h < c.len() {
        for block in (0..c.len()).step_by(2 * h) {
            for i in block..block + h {
                let (a, b) = (c[i], c[i + h]);
                c[i] = a + b;
                c[i + h] = a - b;
            }
        }
        h *= 2;
    }
    WalshSpectrum {
        num_vars: n,
        coefficients: c,
    }
}

/// Largest `t` such that every coefficient with `1 <= wt(w) <= t` vanishes.
pub fn correlation_immunity(spectrum: &WalshSpectrum) -> u32 {
    let first_bad = (1..spectrum.coefficients.len() as u64)
        .filter(|&m| spectrum.at(m) != 0)
        .map(|m| m.count_ones())
        .min();
    match first_bad {
        Some(w) => w - 1,
        None => spectrum.num_vars as u32,
    }
}

/// Distance to the nearest affine function, including the constants.
pub fn nonlinearity(spectrum: &WalshSpectrum) -> u64 {
    let n = spectrum.num_vars;
    if n == 0 {
        return 0;
    }
    (1u64 << (n - 1)) - spectrum.max_abs() as u64 / 2
}

pub fn algebraic_degree(f: &AnfFunction) -> u32 {
    f.degree()
}

/// A minimum-degree annihilator of `f` or of `f + 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AiWitness {
    pub immunity: u32,
    pub annihilator: AnfFunction,
    /// True when the annihilator is for `f + 1` rather than `f`.
    pub of_complement: bool,
}

/// Monomial masks of degree at most `d` over `n` variables, by degree then mask.
fn monomials_up_to(n: usize, d: u32) -> Vec<u64> {
    let mut out: Vec<u64> = (0..1u64 << n).filter(|m| m.count_ones() <= d).collect();
    out.sort_by_key(|m| (m.count_ones(), *m));
    out
}

/// A nonzero `g` of degree at most `d` with `g(x) = 0` on the support of
/// `tt`, i.e. `tt * g = 0`.
pub fn find_annihilator(tt: &TruthTable, d: u32) -> Result<Option<AnfFunction>, BooleanError> {
    let n = tt.num_vars();
    if n > MAX_AI_VARS {
        return Err(BooleanError::TooManyVariables {
            got: n,
            limit: MAX_AI_VARS,
        });
    }
    let cols = monomials_up_to(n, d);
    let words = cols.len().div_ceil(64);
    let mut basis = EchelonBasis::new(cols.len());
    for x in tt.support() {
        let mut row = vec![0u64; words];
        for (j, &m) in cols.iter().enumerate() {
            if x & m == m {
                row[j / 64] |= 1 << (j % 64);
            }
        }
        basis.insert(row);
        if basis.is_full() {
            return Ok(None);
        }
    }
    let Some(v) = basis.kernel_vector() else {
        return Ok(None);
    };
    let masks = cols
        .iter()
        .enumerate()
        .filter(|(j, _)| v[j / 64] >> (j % 64) & 1 == 1)
        .map(|(_, &m)| m);
    Ok(Some(AnfFunction::from_masks(n, false, masks)?))
}

pub fn algebraic_immunity_witness(tt: &TruthTable) -> Result<AiWitness, BooleanError> {
    let complement = tt.complement();
    for d in 0..=tt.num_vars() as u32 {
        if let Some(g) = find_annihilator(tt, d)? {
            return Ok(AiWitness {
                immunity: d,
                annihilator: g,
                of_complement: false,
            });
        }
        if let Some(g) = find_annihilator(&complement, d)? {
            return Ok(AiWitness {
                immunity: d,
                annihilator: g,
                of_complement: true,
            });
        }
    }
    unreachable!("f * (f + 1) = 0 gives an annihilator of degree at most n")
}

pub fn algebraic_immunity(tt: &TruthTable) -> Result<u32, BooleanError> {
    Ok(algebraic_immunity_witness(tt)?.immunity)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BfProfile {
    pub num_vars: usize,
    pub balanced: bool,
    pub algebraic_degree: u32,
    pub correlation_immunity: u32,
    pub nonlinearity: u64,
    pub algebraic_immunity: u32,
}

impl fmt::Display for BfProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "variables            {}", self.num_vars)?;
        writeln!(f, "balanced             {}", self.balanced)?;
        writeln!(f, "algebraic degree     {}", self.algebraic_degree)?;
        writeln!(f, "correlation immunity {}", self.correlation_immunity)?;
        writeln!(f, "nonlinearity         {}", self.nonlinearity)?;
        write!(f, "algebraic immunity   {}", self.algebraic_immunity)
    }
}

pub fn profile(f: &AnfFunction) -> Result<BfProfile, BooleanError> {
    if f.num_vars() > MAX_AI_VARS {
        return Err(BooleanError::TooManyVariables {
            got: f.num_vars(),
            limit: MAX_AI_VARS,
        });
    }
    let tt = anf_to_tt(f)?;
    let spectrum = walsh_transform(&tt);
    Ok(BfProfile {
        num_vars: f.num_vars(),
        balanced: tt.is_balanced(),
        algebraic_degree: algebraic_degree(f),
        correlation_immunity: correlation_immunity(&spectrum),
        nonlinearity: nonlinearity(&spectrum),
        algebraic_immunity: algebraic_immunity(&tt)?,
    })
}

/// Substitutes constants for some inputs and simplifies.
pub fn restrict(f: &AnfFunction, fixed: &[(usize, bool)]) -> AnfFunction {
    let mut zero_mask = 0u64;
    let mut one_mask = 0u64;
    for &(i, v) in fixed {
        if v {
            one_mask |= 1 << (i - 1);
        } else {
            zero_mask |= 1 << (i - 1);
        }
    }
    let masks = f
        .terms()
        .iter()
        .map(|t| t.mask())
        .filter(|m| m & zero_mask == 0)
        .map(|m| m & !one_mask);
    AnfFunction::from_masks(f.num_vars(), f.constant(), masks.collect::<Vec<_>>())
        .expect("same arity")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str, n: usize) -> AnfFunction {
        AnfFunction::parse_terms(text, n).unwrap()
    }

    fn slow_walsh(tt: &TruthTable) -> Vec<i32> {
        (0..tt.len() as u64)
            .map(|w| {
                (0..tt.len() as u64)
                    .map(|x| {
                        if tt.get(x) ^ ((x & w).count_ones() & 1 == 1) {
                            -1
                        } else {
                            1
                        }
                    })
                    .sum()
            })
            .collect()
    }

    fn slow_nonlinearity(tt: &TruthTable) -> u64 {
        let n = tt.num_vars();
        let mut best = u64::MAX;
        for a in 0..1u64 << n {
            for c in [false, true] {
                let d = (0..tt.len() as u64)
                    .filter(|&x| tt.get(x) != (((x & a).count_ones() & 1 == 1) ^ c))
                    .count();
                best = best.min(d as u64);
            }
        }
        best
    }

    fn slow_ai(tt: &TruthTable) -> u32 {
        // Every g of degree <= d, by brute force over coefficient vectors.
        let n = tt.num_vars();
        for d in 0..=n as u32 {
            let cols = monomials_up_to(n, d);
            for coeffs in 1u64..1 << cols.len() {
                let g = |x: u64| {
                    cols.iter()
                        .enumerate()
                        .filter(|(j, m)| coeffs >> j & 1 == 1 && x & **m == **m)
                        .count()
                        & 1
                        == 1
                };
                let ann_f = (0..tt.len() as u64).all(|x| !(tt.get(x) && g(x)));
                let ann_c = (0..tt.len() as u64).all(|x| !(!tt.get(x) && g(x)));
                if ann_f || ann_c {
                    return d;
                }
            }
        }
        unreachable!()
    }

    #[test]
    fn empty_anf_is_zero_table() {
        let tt = anf_to_tt(&AnfFunction::zero(5)).unwrap();
        assert_eq!(tt.weight(), 0);
        assert_eq!(tt_to_anf(&tt), AnfFunction::zero(5));
    }

    #[test]
    fn walsh_small_cases() {
        let zero = anf_to_tt(&AnfFunction::zero(2)).unwrap();
        assert_eq!(walsh_transform(&zero).coefficients(), &[4, 0, 0, 0]);
        let x1 = anf_to_tt(&parse("1", 1)).unwrap();
        assert_eq!(walsh_transform(&x1).coefficients(), &[0, 2]);
    }

    #[test]
    fn unsigned_sum_relation() {
        let tt = anf_to_tt(&parse("1,(2,3)", 3)).unwrap();
        let s = walsh_transform(&tt);
        for w in 0..8u64 {
            let direct: i64 = (0..8u64)
                .map(|x| {
                    if tt.get(x) {
                        if (x & w).count_ones() % 2 == 0 {
                            1
                        } else {
                            -1
                        }
                    } else {
                        0
                    }
                })
                .sum();
            assert_eq!(s.unsigned_sum(w), direct, "w={w}");
        }
    }

    #[test]
    fn correlation_immunity_small() {
        let xor = walsh_transform(&anf_to_tt(&parse("1,2", 2)).unwrap());
        assert_eq!(correlation_immunity(&xor), 1);
        let and = walsh_transform(&anf_to_tt(&parse("(1,2)", 2)).unwrap());
        assert_eq!(correlation_immunity(&and), 0);
    }

    #[test]
    fn nonlinearity_small() {
        let affine = walsh_transform(&anf_to_tt(&parse("1,3", 4).xor_constant(true)).unwrap());
        assert_eq!(nonlinearity(&affine), 0);
        let maj = anf_to_tt(&parse("(1,2),(1,3),(2,3)", 3)).unwrap();
        assert_eq!(nonlinearity(&walsh_transform(&maj)), 2);
        assert_eq!(slow_nonlinearity(&maj), 2);
    }

    #[test]
    fn degree_examples() {
        assert_eq!(
            algebraic_degree(&AnfFunction::zero(3).xor_constant(true)),
            0
        );
        assert_eq!(algebraic_degree(&parse("(1,2,3),4", 4)), 3);
    }

    #[test]
    fn ai_small() {
        let x1 = anf_to_tt(&parse("1", 1)).unwrap();
        let w = algebraic_immunity_witness(&x1).unwrap();
        assert_eq!(w.immunity, 1);
        assert_eq!(w.annihilator.to_poly_string(), "1 + x1");
        let and = anf_to_tt(&parse("(1,2)", 2)).unwrap();
        assert_eq!(algebraic_immunity(&and).unwrap(), 1);
        assert_eq!(
            algebraic_immunity(&TruthTable::zeros(3).unwrap()).unwrap(),
            0
        );
    }

    #[test]
    fn ai_matches_brute_force_on_small_functions() {
        for n in 1..=4usize {
            for seed in 0..40u64 {
                let tt = TruthTable::from_fn(n, |x| {
                    (x.wrapping_mul(0x9e37_79b9_7f4a_7c15)
                        ^ seed.wrapping_mul(0xbf58_476d_1ce4_e5b9))
                    .rotate_left(seed as u32 % 64)
                        >> 63
                        == 1
                })
                .unwrap();
                assert_eq!(
                    algebraic_immunity(&tt).unwrap(),
                    slow_ai(&tt),
                    "n={n} tt={tt:?}"
                );
            }
        }
    }

    #[test]
    fn f16_restriction_degenerates_to_linear() {
        let f = combiner_f16();
        let r = restrict(&f, &[(9, false), (10, false), (13, false), (14, false)]);
        assert_eq!(r, parse("1,2,3,4,5,6,7,8", 16));
    }

    #[test]
    fn hex_roundtrip() {
        let tt = anf_to_tt(&parse("1,(2,3)", 3)).unwrap();
        assert_eq!(TruthTable::from_hex(3, &tt.to_hex()).unwrap(), tt);
        assert!(TruthTable::from_hex(3, "0").is_err());
        assert!(TruthTable::from_hex(2, "ff").is_err());
    }

    fn arb_tt(max_n: usize) -> impl Strategy<Value = TruthTable> {
        (1..=max_n).prop_flat_map(|n| {
            prop::collection::vec(any::<bool>(), 1 << n)
                .prop_map(move |bits| TruthTable::from_fn(n, |x| bits[x as usize]).unwrap())
        })
    }

    proptest! {
        #[test]
        fn anf_roundtrip(tt in arb_tt(8)) {
            let f = tt_to_anf(&tt);
            prop_assert_eq!(anf_to_tt(&f).unwrap(), tt.clone());
            for x in 0..tt.len() as u64 {
                prop_assert_eq!(f.eval(x), tt.get(x));
            }
        }

        #[test]
        fn fast_walsh_matches_direct(tt in arb_tt(10)) {
            let fast = walsh_transform(&tt);
            prop_assert_eq!(fast.coefficients(), &slow_walsh(&tt)[..]);
            let n = tt.num_vars();
            let parseval: i64 = fast.coefficients().iter().map(|&c| (c as i64) * (c as i64)).sum();
            prop_assert_eq!(parseval, 1i64 << (2 * n));
        }

        #[test]
        fn nonlinearity_matches_affine_distance(tt in arb_tt(6)) {
            prop_assert_eq!(nonlinearity(&walsh_transform(&tt)), slow_nonlinearity(&tt));
        }

        #[test]
        fn annihilators_are_sound(tt in arb_tt(8)) {
            let w = algebraic_immunity_witness(&tt).unwrap();
            let target = if w.of_complement { tt.complement() } else { tt.clone() };
            prop_assert!(!w.annihilator.is_zero());
            prop_assert_eq!(w.annihilator.degree(), w.immunity);
            for x in 0..tt.len() as u64 {
                prop_assert!(!(target.get(x) && w.annihilator.eval(x)));
            }
            prop_assert!(w.immunity as usize <= tt.num_vars().div_ceil(2));
        }
    }
}
