//! The per-length sets of maximum-period feedback functions.
//!
//! A catalog file is UTF-8 text with one basic entry per line,
//! `N<TAB>rff<TAB>provenance`, and `#` comments. Each basic entry stands for
//! four feedback specs (basic, reverse, complement, reverse complement), and
//! a spec's selection index within its length is `4 * entry + form`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use num_bigint::BigUint;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::anf::AnfFunction;
use crate::nlfsr::{self, derive_form, FeedbackForm, FeedbackSpec, NlfsrError, PeriodReport};

/// Register lengths of the 16 generator positions, in wiring order.
pub const DESIGN_LENGTHS: [usize; 16] =
    [6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 19, 21, 22, 23];

/// Published sizes of the selected sets `|A_i|` per position, all four forms included.
pub const REFERENCE_COUNTS: [u64; 16] = [
    84, 160, 168, 160, 188, 200, 144, 144, 100, 96, 60, 60, 36, 16, 20, 12,
];

const BUILTIN: &str = include_str!("../data/catalog.tsv");

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("line {line}: expected N<TAB>rff[<TAB>provenance]")]
    Malformed { line: usize },
    #[error("line {line}: length {n} is not a design length")]
    UnknownLength { line: usize, n: usize },
    #[error("line {line}: {source}")]
    BadRff { line: usize, source: NlfsrError },
    #[error("line {line}: {form} form of {rff} repeats an existing spec")]
    Duplicate {
        line: usize,
        rff: String,
        form: FeedbackForm,
    },
    #[error("cannot read catalog: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CatalogEntry {
    pub length_n: usize,
    pub basic_rff: AnfFunction,
    pub provenance: String,
    verified: bool,
}

impl CatalogEntry {
    /// Set only by a passing exhaustive verification of all four forms.
    pub fn verified(&self) -> bool {
        self.verified
    }
}

pub fn expand_forms(entry: &CatalogEntry) -> [FeedbackSpec; 4] {
    FeedbackForm::ALL
        .map(|form| derive_form(&entry.basic_rff, entry.length_n, form).expect("validated on load"))
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Catalog {
    by_length: BTreeMap<usize, Vec<CatalogEntry>>,
}

impl Catalog {
    pub fn parse(text: &str) -> Result<Self, CatalogError> {
        let mut by_length: BTreeMap<usize, Vec<CatalogEntry>> = BTreeMap::new();
        let mut seen: HashSet<(usize, AnfFunction)> = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut fields = content.split('\t');
            let n_field = fields.next().ok_or(CatalogError::Malformed { line })?;
            let rff_field = fields.next().ok_or(CatalogError::Malformed { line })?;
            let provenance = fields.next().unwrap_or("").trim().to_string();
            if fields.next().is_some() {
                return Err(CatalogError::Malformed { line });
            }
            let n: usize = n_field
                .trim()
                .parse()
                .map_err(|_| CatalogError::Malformed { line })?;
            if !DESIGN_LENGTHS.contains(&n) {
                return Err(CatalogError::UnknownLength { line, n });
            }
            let basic_rff = nlfsr::parse_rff(rff_field.trim(), n)
                .map_err(|source| CatalogError::BadRff { line, source })?;
            let entry = CatalogEntry {
                length_n: n,
                basic_rff,
                provenance,
                verified: false,
            };
            for spec in expand_forms(&entry) {
                if !seen.insert((n, spec.rff().clone())) {
                    return Err(CatalogError::Duplicate {
                        line,
                        rff: entry.basic_rff.to_string(),
                        form: spec.form(),
                    });
                }
            }
            by_length.entry(n).or_default().push(entry);
        }
        Ok(Self { by_length })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CatalogError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// The shipped catalog, unverified.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN).expect("shipped catalog parses")
    }

    /// The shipped catalog after a full exhaustive verification, computed
    /// once per process.
    pub fn builtin_verified() -> &'static Catalog {
        static CELL: OnceLock<Catalog> = OnceLock::new();
        CELL.get_or_init(|| {
            let mut c = Self::builtin();
            let report = c.verify();
            assert!(
                report.failures.is_empty(),
                "shipped catalog failed verification: {:?}",
                report.failures
            );
            c
        })
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in self.entries() {
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                e.length_n, e.basic_rff, e.provenance
            ));
        }
        out
    }

    /// SHA-256 over the canonical `N<TAB>rff` lines in selection order.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for e in self.entries() {
            h.update(format!("{}\t{}\n", e.length_n, e.basic_rff).as_bytes());
        }
        h.finalize().into()
    }

    pub fn is_empty(&self) -> bool {
        self.by_length.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &CatalogEntry> {
        self.by_length.values().flatten()
    }

    pub fn entries_of(&self, n: usize) -> &[CatalogEntry] {
        self.by_length.get(&n).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn lengths(&self) -> impl Iterator<Item = usize> + '_ {
        self.by_length.keys().copied()
    }

    /// `|S_N|`, counting all four forms.
    pub fn count(&self, n: usize) -> u64 {
        4 * self.entries_of(n).len() as u64
    }

    /// `|A_i|` for each design position.
    pub fn position_counts(&self) -> [u64; 16] {
        DESIGN_LENGTHS.map(|n| self.count(n))
    }

    pub fn spec(&self, n: usize, selection: usize) -> Option<FeedbackSpec> {
        let entry = self.entries_of(n).get(selection / 4)?;
        Some(
            derive_form(
                &entry.basic_rff,
                n,
                FeedbackForm::from_ordinal(selection % 4)?,
            )
            .expect("validated on load"),
        )
    }

    pub fn specs_of(&self, n: usize) -> Vec<FeedbackSpec> {
        self.entries_of(n).iter().flat_map(expand_forms).collect()
    }

    pub fn is_fully_verified(&self) -> bool {
        self.entries().all(|e| e.verified)
    }

    /// True when every position has at least one verified spec.
    pub fn is_usable(&self) -> bool {
        self.is_fully_verified() && DESIGN_LENGTHS.iter().all(|&n| self.count(n) > 0)
    }

    /// Exhaustively walks every spec of every entry and marks the entries
    /// whose four forms all reach period `2^N - 1`.
    pub fn verify(&mut self) -> VerificationReport {
        let jobs: Vec<(usize, usize, FeedbackSpec)> = self
            .by_length
            .iter()
            .flat_map(|(&n, es)| {
                es.iter()
                    .enumerate()
                    .flat_map(move |(i, e)| expand_forms(e).map(|s| (n, i, s)))
            })
            .collect();
        let results: Vec<SpecResult> = jobs
            .into_par_iter()
            .map(|(n, index, spec)| {
                let report = nlfsr::verify_max_period(&spec)
                    .expect("design lengths are within the walk budget");
                SpecResult {
                    length_n: n,
                    entry_index: index,
                    form: spec.form(),
                    report,
                }
            })
            .collect();
        for es in self.by_length.values_mut() {
            for e in es.iter_mut() {
                e.verified = true;
            }
        }
        for r in results.iter().filter(|r| !r.report.is_max_period) {
            self.by_length.get_mut(&r.length_n).expect("known length")[r.entry_index].verified =
                false;
        }
        let failures = results
            .iter()
            .filter(|r| !r.report.is_max_period)
            .cloned()
            .collect();
        let counts = self.by_length.keys().map(|&n| (n, self.count(n))).collect();
        VerificationReport {
            checked: results.len(),
            failures,
            counts,
        }
    }

    pub fn cardinality_log2(&self) -> f64 {
        cardinality_log2(&self.position_counts())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SpecResult {
    pub length_n: usize,
    pub entry_index: usize,
    pub form: FeedbackForm,
    pub report: PeriodReport,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VerificationReport {
    pub checked: usize,
    pub failures: Vec<SpecResult>,
    pub counts: BTreeMap<usize, u64>,
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>3} {:>8} {:>10}", "N", "|S_N|", "reference")?;
        for (&n, &count) in &self.counts {
            let reference = DESIGN_LENGTHS
                .iter()
                .position(|&d| d == n)
                .map(|i| REFERENCE_COUNTS[i]);
            let reference = reference
                .map(|r| r.to_string())
                .unwrap_or_else(|| "-".into());
            writeln!(f, "{n:>3} {count:>8} {reference:>10}")?;
        }
        writeln!(f, "specs checked: {}", self.checked)?;
        for r in &self.failures {
            writeln!(
                f,
                "FAIL N={} entry={} form={} period={}",
                r.length_n, r.entry_index, r.form, r.report.period
            )?;
        }
        write!(f, "failures: {}", self.failures.len())
    }
}

/// `sum log2 |A_i|`, the log of the number of distinct generator wirings.
pub fn cardinality_log2(counts: &[u64]) -> f64 {
    counts.iter().map(|&c| (c as f64).log2()).sum()
}

/// Exponent `sum (2^(N-1) - N + 1)` of the count of all maximum-period
/// Fibonacci NLFSRs over the given lengths.
pub fn debruijn_count_log2(lengths: &[usize]) -> BigUint {
    lengths
        .iter()
        .map(|&n| (BigUint::from(1u8) << (n - 1)) + 1u8 - n)
        .sum()
}

/// Exponent `sum (2^(N-1) - N)` of the classical count of de Bruijn
/// sequences of order `N`, one less per length than the estimate above.
pub fn debruijn_sequence_count_log2(lengths: &[usize]) -> BigUint {
    lengths
        .iter()
        .map(|&n| (BigUint::from(1u8) << (n - 1)) - n)
        .sum()
}
