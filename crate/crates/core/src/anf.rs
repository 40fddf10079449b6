//! Boolean functions in algebraic normal form.
//!
//! A function is a constant bit XORed with a set of product terms over the
//! variables `x_1..x_n`. Internally each term is a bit mask where bit `i - 1`
//! stands for `x_i`, which caps the arity at 64.
//!
//! The compact term notation used by feedback catalogs lists terms separated
//! by commas, with a parenthesized group forming one product: `1,2,(2,4)` is
//! `x1 + x2 + x2*x4`.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

pub const MAX_VARS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnfError {
    #[error("variable index {index} outside 1..={max}")]
    IndexOutOfRange { index: u64, max: usize },
    #[error("malformed term list at byte {pos}: {reason}")]
    Malformed { pos: usize, reason: &'static str },
    #[error("term {0} appears twice")]
    DuplicateTerm(String),
    #[error("arity {0} exceeds the supported maximum of {MAX_VARS}")]
    TooManyVariables(usize),
}

/// One product term, stored as a variable mask (bit `i - 1` is `x_i`).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Monomial(u64);

impl Monomial {
    pub fn from_mask(mask: u64) -> Self {
        Self(mask)
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        Self(indices.into_iter().fold(0, |m, i| m | 1u64 << (i - 1)))
    }

    pub fn mask(self) -> u64 {
        self.0
    }

    pub fn degree(self) -> u32 {
        self.0.count_ones()
    }

    /// Variable indices in ascending order (1-based).
    pub fn indices(self) -> impl Iterator<Item = usize> {
        let mut m = self.0;
        std::iter::from_fn(move || {
            if m == 0 {
                return None;
            }
            let i = m.trailing_zeros() as usize;
            m &= m - 1;
            Some(i + 1)
        })
    }

    #[inline]
    pub fn eval(self, x: u64) -> bool {
        x & self.0 == self.0
    }
}

impl Ord for Monomial {
    /// Lexicographic on the ascending index tuple, so `(1) < (1,2) < (2)`.
    fn cmp(&self, other: &Self) -> Ordering {
        self.indices().cmp(other.indices())
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.degree() == 1 {
            return write!(f, "{}", self.0.trailing_zeros() + 1);
        }
        let idx: Vec<String> = self.indices().map(|i| i.to_string()).collect();
        write!(f, "({})", idx.join(","))
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct AnfFunction {
    num_vars: usize,
    /// Canonically sorted, no duplicates, no empty term.
    terms: Vec<Monomial>,
    constant: bool,
}

impl AnfFunction {
    pub fn zero(num_vars: usize) -> Self {
        assert!(num_vars <= MAX_VARS);
        Self {
            num_vars,
            terms: Vec::new(),
            constant: false,
        }
    }

    /// Builds a function from possibly repeated masks; repeated terms cancel
    /// and the empty mask toggles the constant.
    pub fn from_masks<I: IntoIterator<Item = u64>>(
        num_vars: usize,
        constant: bool,
        masks: I,
    ) -> Result<Self, AnfError> {
        if num_vars > MAX_VARS {
            return Err(AnfError::TooManyVariables(num_vars));
        }
        let limit = if num_vars == 64 {
            u64::MAX
        } else {
            (1u64 << num_vars) - 1
        };
        let mut set = BTreeSet::new();
        let mut constant = constant;
        for m in masks {
            if m & !limit != 0 {
                let index = (63 - (m & !limit).leading_zeros()) as u64 + 1;
                return Err(AnfError::IndexOutOfRange {
                    index,
                    max: num_vars,
                });
            }
            if m == 0 {
                constant ^= true;
            } else if !set.insert(m) {
                set.remove(&m);
            }
        }
        let mut terms: Vec<Monomial> = set.into_iter().map(Monomial).collect();
        terms.sort();
        Ok(Self {
            num_vars,
            terms,
            constant,
        })
    }

    /// Parses the comma/parenthesis term notation with indices in `1..=num_vars`.
    pub fn parse_terms(text: &str, num_vars: usize) -> Result<Self, AnfError> {
        if num_vars > MAX_VARS {
            return Err(AnfError::TooManyVariables(num_vars));
        }
        let mut parser = TermParser {
            src: text.as_bytes(),
            pos: 0,
            max: num_vars,
        };
        let mut masks = Vec::new();
        parser.skip_ws();
        if parser.at_end() {
            return Ok(Self::zero(num_vars));
        }
        loop {
            masks.push(parser.term()?);
            parser.skip_ws();
            if parser.at_end() {
                break;
            }
            parser.expect(b',', "expected ',' between terms")?;
        }
        let mut seen = BTreeSet::new();
        for &m in &masks {
            if !seen.insert(m) {
                return Err(AnfError::DuplicateTerm(Monomial(m).to_string()));
            }
        }
        Self::from_masks(num_vars, false, masks)
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn constant(&self) -> bool {
        self.constant
    }

    pub fn is_zero(&self) -> bool {
        !self.constant && self.terms.is_empty()
    }

    /// Largest term size; constants have degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|t| t.degree()).max().unwrap_or(0)
    }

    /// Evaluates on an assignment where bit `i - 1` of `x` holds `x_i`.
    pub fn eval(&self, x: u64) -> bool {
        self.terms
            .iter()
            .fold(self.constant, |acc, t| acc ^ t.eval(x))
    }

    pub fn xor_constant(&self, bit: bool) -> Self {
        Self {
            constant: self.constant ^ bit,
            ..self.clone()
        }
    }

    /// Applies `x_i -> x_{map(i)}` to every term.
    pub fn map_indices(
        &self,
        num_vars: usize,
        map: impl Fn(usize) -> usize,
    ) -> Result<Self, AnfError> {
        let masks: Vec<u64> = self
            .terms
            .iter()
            .map(|t| t.indices().fold(0u64, |m, i| m | 1u64 << (map(i) - 1)))
            .collect();
        Self::from_masks(num_vars, self.constant, masks)
    }

    /// The function `x -> self(NOT x)`, expanded back into normal form.
    pub fn complement_inputs(&self) -> Self {
        let mut masks = Vec::new();
        for t in &self.terms {
            // prod_{i in S} (x_i + 1) = sum over all subsets of S
            let full = t.mask();
            let mut sub = full;
            loop {
                masks.push(sub);
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & full;
            }
        }
        Self::from_masks(self.num_vars, self.constant, masks).expect("same arity")
    }

    pub fn compile(&self) -> CompiledAnf {
        CompiledAnf::new(self)
    }

    /// Human-readable polynomial, e.g. `1 + x1 + x2*x4`.
    pub fn to_poly_string(&self) -> String {
        let mut parts = Vec::new();
        if self.constant {
            parts.push("1".to_string());
        }
        for t in &self.terms {
            let v: Vec<String> = t.indices().map(|i| format!("x{i}")).collect();
            parts.push(v.join("*"));
        }
        if parts.is_empty() {
            "0".into()
        } else {
            parts.join(" + ")
        }
    }
}

/// Term notation. The constant bit has no notation and is omitted.
impl fmt::Display for AnfFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.terms.iter().map(|t| t.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

struct TermParser<'a> {
    src: &'a [u8],
    pos: usize,
    max: usize,
}

impl TermParser<'_> {
    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn expect(&mut self, c: u8, reason: &'static str) -> Result<(), AnfError> {
        self.skip_ws();
        if self.src.get(self.pos) == Some(&c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(AnfError::Malformed {
                pos: self.pos,
                reason,
            })
        }
    }

    fn index(&mut self) -> Result<u64, AnfError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(AnfError::Malformed {
                pos: start,
                reason: "expected a variable index",
            });
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        let index: u64 = text.parse().map_err(|_| AnfError::Malformed {
            pos: start,
            reason: "index too large",
        })?;
        if index == 0 || index > self.max as u64 {
            return Err(AnfError::IndexOutOfRange {
                index,
                max: self.max,
            });
        }
        Ok(index)
    }

    fn term(&mut self) -> Result<u64, AnfError> {
        self.skip_ws();
        if self.src.get(self.pos) != Some(&b'(') {
            return Ok(1u64 << (self.index()? - 1));
        }
        let open = self.pos;
        self.pos += 1;
        let mut mask = 0u64;
        loop {
            let bit = 1u64 << (self.index()? - 1);
            if mask & bit != 0 {
                return Err(AnfError::Malformed {
                    pos: self.pos,
                    reason: "variable repeated inside a product",
                });
            }
            mask |= bit;
            self.skip_ws();
            match self.src.get(self.pos) {
                Some(b',') => self.pos += 1,
                Some(b')') => {
                    self.pos += 1;
                    return Ok(mask);
                }
                _ => {
                    return Err(AnfError::Malformed {
                        pos: open,
                        reason: "unclosed parenthesis",
                    })
                }
            }
        }
    }
}

/// Evaluation form: linear terms folded into one parity mask.
#[derive(Clone, Debug)]
pub struct CompiledAnf {
    constant: bool,
    linear: u64,
    products: Vec<u64>,
}

impl CompiledAnf {
    fn new(f: &AnfFunction) -> Self {
        let mut linear = 0;
        let mut products = Vec::new();
        for t in f.terms() {
            if t.degree() == 1 {
                linear |= t.mask();
            } else {
                products.push(t.mask());
            }
        }
        Self {
            constant: f.constant(),
            linear,
            products,
        }
    }

    #[inline]
    pub fn eval(&self, x: u64) -> bool {
        let mut v = self.constant as u32 ^ (x & self.linear).count_ones();
        for &p in &self.products {
            v ^= (x & p == p) as u32;
        }
        v & 1 == 1
    }
}
