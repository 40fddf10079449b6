//! Fibonacci nonlinear feedback shift registers.
//!
//! Conventions: the register emits stage 0, every stage moves one position
//! toward stage 0, and the feedback bit enters stage `N - 1`. A state is an
//! integer whose bit `i` is stage `i`. The feedback is always
//! `f = x0 + g(x1..x_{N-1})`, which makes the state map a permutation.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::anf::{AnfError, AnfFunction, CompiledAnf};
use crate::bits::BitSeq;

/// Longest register the exhaustive period walk accepts.
pub const MAX_EXHAUSTIVE_LEN: usize = 26;
pub const MAX_LEN: usize = 63;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NlfsrError {
    #[error("register length {0} outside 2..={MAX_LEN}")]
    BadLength(usize),
    #[error("feedback function for length {n} must be over x1..x{max} (got arity {got})")]
    ArityMismatch { n: usize, max: usize, got: usize },
    #[error("state {state:#x} does not fit in {n} bits")]
    StateTooWide { state: u64, n: usize },
    #[error("state {state:#x} is the fixed point of the {form} form")]
    DegenerateState { state: u64, form: FeedbackForm },
    #[error("exhaustive walk limited to {MAX_EXHAUSTIVE_LEN} bits, got {0}")]
    TooLongForWalk(usize),
    #[error("unknown feedback form {0:?}")]
    UnknownForm(String),
    #[error("malformed spec {0:?}: expected N:form:rff")]
    MalformedSpec(String),
    #[error("sequence length {got} is not 2^{n}-1")]
    WrongSequenceLength { got: usize, n: usize },
    #[error(transparent)]
    Anf(#[from] AnfError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackForm {
    Basic,
    Reverse,
    Complement,
    ReverseComplement,
}

impl FeedbackForm {
    /// Expansion order used by catalogs and selection indices.
    pub const ALL: [FeedbackForm; 4] = [
        FeedbackForm::Basic,
        FeedbackForm::Reverse,
        FeedbackForm::Complement,
        FeedbackForm::ReverseComplement,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            FeedbackForm::Basic => "basic",
            FeedbackForm::Reverse => "reverse",
            FeedbackForm::Complement => "complement",
            FeedbackForm::ReverseComplement => "reverse_complement",
        }
    }

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn is_reversed(self) -> bool {
        matches!(
            self,
            FeedbackForm::Reverse | FeedbackForm::ReverseComplement
        )
    }

    pub fn is_complemented(self) -> bool {
        matches!(
            self,
            FeedbackForm::Complement | FeedbackForm::ReverseComplement
        )
    }
}

impl fmt::Display for FeedbackForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for FeedbackForm {
    type Err = NlfsrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|f| f.tag() == s)
            .ok_or_else(|| NlfsrError::UnknownForm(s.to_string()))
    }
}

/// Parses a catalog RFF string for a register of length `n`; indices must
/// lie in `1..n` since the RFF never touches `x0`.
pub fn parse_rff(text: &str, n: usize) -> Result<AnfFunction, NlfsrError> {
    if !(2..=MAX_LEN).contains(&n) {
        return Err(NlfsrError::BadLength(n));
    }
    Ok(AnfFunction::parse_terms(text, n - 1)?)
}

/// One register's feedback: length, basic RFF, and the form applied to it.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct FeedbackSpec {
    length: usize,
    basic: AnfFunction,
    form: FeedbackForm,
    rff: AnfFunction,
}

/// Derives the feedback of `form` from a basic RFF.
///
/// Reversal maps `x_i` to `x_{n-i}`, so the register runs the basic sequence
/// backwards in time. Complementing replaces `g(x)` by `g(NOT x)`, so the
/// register emits the bitwise complement; for an odd number of linear terms
/// this is exactly `1 + g`.
pub fn derive_form(
    basic_rff: &AnfFunction,
    n: usize,
    form: FeedbackForm,
) -> Result<FeedbackSpec, NlfsrError> {
    if !(2..=MAX_LEN).contains(&n) {
        return Err(NlfsrError::BadLength(n));
    }
    if basic_rff.num_vars() != n - 1 {
        return Err(NlfsrError::ArityMismatch {
            n,
            max: n - 1,
            got: basic_rff.num_vars(),
        });
    }
    let mut rff = basic_rff.clone();
    if form.is_reversed() {
        rff = rff.map_indices(n - 1, |i| n - i)?;
    }
    if form.is_complemented() {
        rff = rff.complement_inputs();
    }
    Ok(FeedbackSpec {
        length: n,
        basic: basic_rff.clone(),
        form,
        rff,
    })
}

impl FeedbackSpec {
    pub fn length(&self) -> usize {
        self.length
    }

    pub fn form(&self) -> FeedbackForm {
        self.form
    }

    pub fn basic_rff(&self) -> &AnfFunction {
        &self.basic
    }

    /// The effective `g` of this form, over `x1..x_{N-1}`.
    pub fn rff(&self) -> &AnfFunction {
        &self.rff
    }

    pub fn with_form(&self, form: FeedbackForm) -> FeedbackSpec {
        derive_form(&self.basic, self.length, form).expect("already validated")
    }

    pub fn state_mask(&self) -> u64 {
        (1u64 << self.length) - 1
    }

    /// The fixed point excluded from the long cycle.
    pub fn degenerate_state(&self) -> u64 {
        if self.form.is_complemented() {
            self.state_mask()
        } else {
            0
        }
    }

    pub(crate) fn stepper(&self) -> Stepper {
        Stepper {
            n: self.length,
            g: self.rff.compile(),
        }
    }
}

impl fmt::Display for FeedbackSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.length, self.form, self.basic)
    }
}

impl FromStr for FeedbackSpec {
    type Err = NlfsrError;

    /// `N:form:rff`, where `rff` is the basic function in catalog notation.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.splitn(3, ':');
        let (Some(n), Some(form), Some(rff)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(NlfsrError::MalformedSpec(s.to_string()));
        };
        let n: usize = n
            .trim()
            .parse()
            .map_err(|_| NlfsrError::MalformedSpec(s.to_string()))?;
        let basic = parse_rff(rff, n)?;
        derive_form(&basic, n, form.trim().parse()?)
    }
}

/// Bare state-transition function, shared by registers and exhaustive walks.
#[derive(Clone, Debug)]
pub(crate) struct Stepper {
    n: usize,
    g: CompiledAnf,
}

impl Stepper {
    #[inline]
    pub(crate) fn next(&self, state: u64) -> u64 {
        let fb = (state & 1 == 1) ^ self.g.eval(state >> 1);
        (state >> 1) | (fb as u64) << (self.n - 1)
    }
}

#[derive(Clone, Debug)]
pub struct Nlfsr {
    spec: FeedbackSpec,
    stepper: Stepper,
    state: u64,
    steps_taken: u64,
}

impl Nlfsr {
    pub fn new(spec: FeedbackSpec, state: u64) -> Result<Self, NlfsrError> {
        check_state(&spec, state)?;
        let stepper = spec.stepper();
        Ok(Self {
            spec,
            stepper,
            state,
            steps_taken: 0,
        })
    }

    pub fn spec(&self) -> &FeedbackSpec {
        &self.spec
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps_taken
    }

    pub fn set_state(&mut self, state: u64) -> Result<(), NlfsrError> {
        check_state(&self.spec, state)?;
        self.state = state;
        Ok(())
    }

    /// Emits stage 0 and shifts in the feedback bit.
    ///
    /// The constructor rejects the fixed point and the transition is a
    /// permutation, so the state can never become degenerate here.
    #[inline]
    pub fn step(&mut self) -> bool {
        let out = self.state & 1 == 1;
        self.state = self.stepper.next(self.state);
        self.steps_taken += 1;
        out
    }

    pub fn generate(&mut self, k: usize) -> BitSeq {
        let mut out = BitSeq::with_capacity(k);
        for _ in 0..k {
            out.push(self.step());
        }
        out
    }

    pub(crate) fn scrub(&mut self) {
        self.state = 0;
        self.steps_taken = 0;
    }
}

fn check_state(spec: &FeedbackSpec, state: u64) -> Result<(), NlfsrError> {
    if state & !spec.state_mask() != 0 {
        return Err(NlfsrError::StateTooWide {
            state,
            n: spec.length,
        });
    }
    if state == spec.degenerate_state() {
        return Err(NlfsrError::DegenerateState {
            state,
            form: spec.form,
        });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PeriodReport {
    pub length_n: usize,
    pub period: u64,
    pub is_max_period: bool,
    /// The single state left off the cycle, when exactly one is.
    pub off_cycle_state: Option<u64>,
}

/// Walks the cycle through the canonical start state (stage 0 set, all other
/// stages clear) with a visited bitmap, then inspects what was not reached.
pub fn verify_max_period(spec: &FeedbackSpec) -> Result<PeriodReport, NlfsrError> {
    let n = spec.length();
    if n > MAX_EXHAUSTIVE_LEN {
        return Err(NlfsrError::TooLongForWalk(n));
    }
    let total = 1u64 << n;
    let stepper = spec.stepper();
    let mut visited = vec![0u64; (total as usize).div_ceil(64)];
    let start = 1u64;
    let mut state = start;
    let mut period = 0u64;
    loop {
        visited[(state >> 6) as usize] |= 1 << (state & 63);
        state = stepper.next(state);
        period += 1;
        if state == start {
            break;
        }
    }
    let mut off_cycle_state = None;
    if period == total - 1 {
        let (w, word) = visited
            .iter()
            .enumerate()
            .find(|(_, w)| **w != u64::MAX)
            .expect("one state unvisited");
        // only the last word can be partial when n < 6
        let unvisited = (!word).trailing_zeros() as u64 + 64 * w as u64;
        off_cycle_state = Some(unvisited);
    }
    let degenerate = spec.degenerate_state();
    let is_max_period =
        off_cycle_state == Some(degenerate) && stepper.next(degenerate) == degenerate;
    Ok(PeriodReport {
        length_n: n,
        period,
        is_max_period,
        off_cycle_state,
    })
}

/// True iff every nonzero `n`-bit window occurs exactly once in the cyclic
/// sequence (and so the all-zero window never does).
pub fn is_modified_de_bruijn(seq: &BitSeq, n: usize) -> Result<bool, NlfsrError> {
    if n == 0 || n > MAX_EXHAUSTIVE_LEN || seq.len() != (1usize << n) - 1 {
        return Err(NlfsrError::WrongSequenceLength { got: seq.len(), n });
    }
    let len = seq.len();
    let mut seen = vec![0u64; (1usize << n).div_ceil(64)];
    let mut window = 0u64;
    for i in 0..n {
        window |= (seq.get(i % len) as u64) << i;
    }
    for t in 0..len {
        if window == 0 || seen[(window >> 6) as usize] >> (window & 63) & 1 == 1 {
            return Ok(false);
        }
        seen[(window >> 6) as usize] |= 1 << (window & 63);
        window = (window >> 1) | (seq.get((t + n) % len) as u64) << (n - 1);
    }
    Ok(true)
}
