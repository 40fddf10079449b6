//! The combining keystream generator: every cycle reads the output bit of
//! each register, feeds them to the combiner as `x1..xn` in register order,
//! and then steps every register once.

use thiserror::Error;
use zeroize::Zeroize;

use crate::anf::{AnfFunction, CompiledAnf};
use crate::bits::BitSeq;
use crate::boolean::combiner_f16;
use crate::catalog::{Catalog, DESIGN_LENGTHS};
use crate::nlfsr::{FeedbackSpec, Nlfsr, NlfsrError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KsgError {
    #[error("combiner has {combiner} inputs but there are {registers} registers")]
    ArityMismatch { combiner: usize, registers: usize },
    #[error("expected {expected} register states, got {got}")]
    StateCount { expected: usize, got: usize },
    #[error("a generator needs at least one register")]
    NoRegisters,
    #[error("no spec with selection {selection} at length {n}")]
    UnknownSelection { n: usize, selection: usize },
    #[error("register {position}: {source}")]
    Register { position: usize, source: NlfsrError },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KsgConfig {
    registers: Vec<FeedbackSpec>,
    combiner: AnfFunction,
}

impl KsgConfig {
    pub fn new(registers: Vec<FeedbackSpec>, combiner: AnfFunction) -> Result<Self, KsgError> {
        if registers.is_empty() {
            return Err(KsgError::NoRegisters);
        }
        if combiner.num_vars() != registers.len() {
            return Err(KsgError::ArityMismatch {
                combiner: combiner.num_vars(),
                registers: registers.len(),
            });
        }
        Ok(Self {
            registers,
            combiner,
        })
    }

    /// The 16-register generator combined by the builtin `F`, one catalog
    /// selection per design length.
    pub fn full(catalog: &Catalog, selections: &[usize; 16]) -> Result<Self, KsgError> {
        let registers = DESIGN_LENGTHS
            .iter()
            .zip(selections)
            .map(|(&n, &selection)| {
                catalog
                    .spec(n, selection)
                    .ok_or(KsgError::UnknownSelection { n, selection })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(registers, combiner_f16())
    }

    pub fn registers(&self) -> &[FeedbackSpec] {
        &self.registers
    }

    pub fn combiner(&self) -> &AnfFunction {
        &self.combiner
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.registers.iter().map(FeedbackSpec::length).collect()
    }

    pub fn total_state_bits(&self) -> usize {
        self.registers.iter().map(FeedbackSpec::length).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct KsgState {
    pub registers: Vec<u64>,
    pub cycle: u64,
}

impl Zeroize for KsgState {
    fn zeroize(&mut self) {
        self.registers.zeroize();
        self.cycle.zeroize();
    }
}

#[derive(Clone, Debug)]
pub struct Ksg {
    config: KsgConfig,
    registers: Vec<Nlfsr>,
    combiner: CompiledAnf,
    cycle: u64,
}

impl Ksg {
    pub fn new(config: KsgConfig, states: &[u64]) -> Result<Self, KsgError> {
        if states.len() != config.registers.len() {
            return Err(KsgError::StateCount {
                expected: config.registers.len(),
                got: states.len(),
            });
        }
        let registers = config
            .registers
            .iter()
            .zip(states)
            .enumerate()
            .map(|(i, (spec, &s))| {
                Nlfsr::new(spec.clone(), s).map_err(|source| KsgError::Register {
                    position: i + 1,
                    source,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let combiner = config.combiner.compile();
        Ok(Self {
            config,
            registers,
            combiner,
            cycle: 0,
        })
    }

    pub fn from_state(config: KsgConfig, state: &KsgState) -> Result<Self, KsgError> {
        let mut g = Self::new(config, &state.registers)?;
        g.cycle = state.cycle;
        Ok(g)
    }

    pub fn config(&self) -> &KsgConfig {
        &self.config
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn state(&self) -> KsgState {
        KsgState {
            registers: self.registers.iter().map(Nlfsr::state).collect(),
            cycle: self.cycle,
        }
    }

    /// The combiner input of the current cycle: bit `i` is register `i + 1`'s stage 0.
    pub fn inputs(&self) -> u64 {
        self.registers
            .iter()
            .enumerate()
            .fold(0, |acc, (i, r)| acc | (r.state() & 1) << i)
    }

    /// One keystream bit together with the combiner input that produced it.
    #[inline]
    pub fn next_with_inputs(&mut self) -> (bool, u64) {
        let mut x = 0u64;
        for (i, r) in self.registers.iter_mut().enumerate() {
            x |= (r.step() as u64) << i;
        }
        self.cycle += 1;
        (self.combiner.eval(x), x)
    }

    #[inline]
    pub fn next_bit(&mut self) -> bool {
        self.next_with_inputs().0
    }

    pub fn next_bits(&mut self, k: usize) -> BitSeq {
        let mut out = BitSeq::with_capacity(k);
        for _ in 0..k {
            out.push(self.next_bit());
        }
        out
    }

    pub(crate) fn scrub(&mut self) {
        for r in &mut self.registers {
            r.scrub();
        }
        self.cycle = 0;
    }
}

/// Steps a state-only copy of the generator until its joint register state
/// recurs, giving the exact period. `limit` caps the walk.
pub fn measure_period(
    config: &KsgConfig,
    states: &[u64],
    limit: u64,
) -> Result<Option<u64>, KsgError> {
    let mut g = Ksg::new(config.clone(), states)?;
    let start: Vec<u64> = states.to_vec();
    for t in 1..=limit {
        for r in &mut g.registers {
            r.step();
        }
        if g.registers.iter().zip(&start).all(|(r, &s)| r.state() == s) {
            return Ok(Some(t));
        }
    }
    Ok(None)
}
