//! One-shot random instantiation of a secret cipher and its device-side
//! response interface.
//!
//! Creation draws one feedback spec per position uniformly from the catalog
//! and one uniformly random non-degenerate state per register. Selection and
//! state draws come from two disjoint ChaCha20 streams of the same seed, so a
//! seeded run can be audited while an OS-seeded run leaves no transcript.

use std::fmt;

use rand::{Rng, RngCore, SeedableRng, TryRngCore};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use thiserror::Error;
use zeroize::{Zeroize, Zeroizing};

use crate::bits::BitSeq;
use crate::catalog::{Catalog, DESIGN_LENGTHS};
use crate::ksg::{Ksg, KsgConfig, KsgError, KsgState};

pub const BLOB_MAGIC: &[u8; 4] = b"SUC1";
pub const BLOB_VERSION: u8 = 1;
const SELECTION_STREAM: u64 = 0;
const STATE_STREAM: u64 = 1;
const STATE_BYTES: usize = 28;
/// magic, version, fingerprint, count, 16 x (N, selection), two state blocks,
/// cycle, cursor, crc
pub const BLOB_LEN: usize = 4 + 1 + 32 + 1 + 16 * 3 + 2 * STATE_BYTES + 8 + 8 + 4;

#[derive(Debug, Error)]
pub enum GenieError {
    #[error("catalog has not passed exhaustive verification")]
    UnverifiedCatalog,
    #[error("catalog has no spec of length {0}")]
    EmptyPosition(usize),
    #[error("operating system entropy unavailable: {0}")]
    Entropy(String),
    #[error("blob is {got} bytes, expected {BLOB_LEN}")]
    BlobLength { got: usize },
    #[error("blob does not start with SUC1 version {BLOB_VERSION}")]
    BlobHeader,
    #[error("blob checksum mismatch")]
    BlobChecksum,
    #[error("blob was created against a different catalog")]
    CatalogMismatch,
    #[error("blob register layout is invalid: {0}")]
    BlobLayout(String),
    #[error(transparent)]
    Ksg(#[from] KsgError),
}

pub enum EntropySource {
    Os,
    /// Deterministic; for tests and reproducible demos only.
    Seeded([u8; 32]),
}

impl Drop for EntropySource {
    fn drop(&mut self) {
        if let EntropySource::Seeded(seed) = self {
            seed.zeroize();
        }
    }
}

impl EntropySource {
    fn seed(&self) -> Result<Zeroizing<[u8; 32]>, GenieError> {
        let mut seed = Zeroizing::new([0u8; 32]);
        match self {
            EntropySource::Os => rand::rngs::OsRng
                .try_fill_bytes(&mut seed[..])
                .map_err(|e| GenieError::Entropy(e.to_string()))?,
            EntropySource::Seeded(s) => seed.copy_from_slice(s),
        }
        Ok(seed)
    }
}

/// Snapshot of the mutable part of an instance, used to roll back a
/// protocol step.
#[derive(Clone, PartialEq, Eq)]
pub struct SucSnapshot {
    base: KsgState,
    state: KsgState,
    cursor: u64,
}

impl Drop for SucSnapshot {
    fn drop(&mut self) {
        self.base.zeroize();
        self.state.zeroize();
    }
}

pub struct SucInstance {
    fingerprint: [u8; 32],
    selection: [u16; 16],
    /// Register states at response 0 of the current enrollment epoch.
    base: KsgState,
    ksg: Ksg,
    cursor: u64,
}

pub fn genie_create(catalog: &Catalog, entropy: EntropySource) -> Result<SucInstance, GenieError> {
    if !catalog.is_fully_verified() {
        return Err(GenieError::UnverifiedCatalog);
    }
    if let Some(&n) = DESIGN_LENGTHS.iter().find(|&&n| catalog.count(n) == 0) {
        return Err(GenieError::EmptyPosition(n));
    }
    let seed = entropy.seed()?;
    drop(entropy);
    let mut rng = ChaCha20Rng::from_seed(*seed);
    rng.set_stream(SELECTION_STREAM);
    let mut selection = [0u16; 16];
    for (sel, &n) in selection.iter_mut().zip(&DESIGN_LENGTHS) {
        *sel = rng.random_range(0..catalog.count(n)) as u16;
    }
    let config = KsgConfig::full(catalog, &selection.map(usize::from))?;
    rng.set_stream(STATE_STREAM);
    rng.set_word_pos(0);
    let mut states = Zeroizing::new(Vec::with_capacity(16));
    for spec in config.registers() {
        let state = loop {
            let s = rng.next_u64() & spec.state_mask();
            if s != spec.degenerate_state() {
                break s;
            }
        };
        states.push(state);
    }
    let ksg = Ksg::new(config, &states)?;
    Ok(SucInstance {
        fingerprint: catalog.fingerprint(),
        selection,
        base: ksg.state(),
        ksg,
        cursor: 0,
    })
}

impl SucInstance {
    pub fn selection(&self) -> &[u16; 16] {
        &self.selection
    }

    pub fn catalog_fingerprint(&self) -> &[u8; 32] {
        &self.fingerprint
    }

    pub fn config(&self) -> &KsgConfig {
        self.ksg.config()
    }

    /// Index of the next response within the current epoch.
    pub fn cursor(&self) -> u64 {
        self.cursor
    }

    pub fn cycle(&self) -> u64 {
        self.ksg.cycle()
    }

    /// The next `k` keystream bits as one response.
    pub fn respond(&mut self, k: usize) -> BitSeq {
        self.cursor += 1;
        self.ksg.next_bits(k)
    }

    /// A copy of the generator at the current position, for analysing an
    /// instance one already holds the blob of.
    pub fn generator(&self) -> Ksg {
        self.ksg.clone()
    }

    /// Raw keystream without touching the response cursor.
    pub fn keystream(&mut self, k: usize) -> BitSeq {
        self.ksg.next_bits(k)
    }

    pub fn snapshot(&self) -> SucSnapshot {
        SucSnapshot {
            base: self.base.clone(),
            state: self.ksg.state(),
            cursor: self.cursor,
        }
    }

    pub fn restore(&mut self, snapshot: &SucSnapshot) {
        self.ksg = Ksg::from_state(self.ksg.config().clone(), &snapshot.state)
            .expect("snapshot of this instance");
        self.base.zeroize();
        self.base = snapshot.base.clone();
        self.cursor = snapshot.cursor;
    }

    /// Returns to response 0 of the current epoch.
    pub fn rewind(&mut self) {
        let base = self.base.clone();
        self.ksg =
            Ksg::from_state(self.ksg.config().clone(), &base).expect("base of this instance");
        self.cursor = 0;
    }

    /// Starts a new epoch at the current state with cursor 0.
    pub fn rebase(&mut self) {
        self.base.zeroize();
        self.base = self.ksg.state();
        self.cursor = 0;
    }

    /// Overwrites every secret register state with zeros. The instance is
    /// unusable afterwards; dropping an instance runs this automatically.
    pub fn scrub(&mut self) {
        self.base.zeroize();
        self.ksg.scrub();
        self.selection.zeroize();
        self.cursor = 0;
    }

    /// True once [`scrub`](Self::scrub) has cleared the secret material.
    pub fn is_scrubbed(&self) -> bool {
        self.base.registers.iter().all(|&s| s == 0)
            && self.ksg.state().registers.iter().all(|&s| s == 0)
            && self.selection.iter().all(|&s| s == 0)
    }

    pub fn export_blob(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(BLOB_LEN);
        out.extend_from_slice(BLOB_MAGIC);
        out.push(BLOB_VERSION);
        out.extend_from_slice(&self.fingerprint);
        out.push(16);
        for (&n, &sel) in DESIGN_LENGTHS.iter().zip(&self.selection) {
            out.push(n as u8);
            out.extend_from_slice(&sel.to_be_bytes());
        }
        out.extend_from_slice(&pack_states(&self.base.registers));
        let current = self.ksg.state();
        out.extend_from_slice(&pack_states(&current.registers));
        out.extend_from_slice(&current.cycle.to_be_bytes());
        out.extend_from_slice(&self.cursor.to_be_bytes());
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_be_bytes());
        out
    }

    pub fn import_blob(bytes: &[u8], catalog: &Catalog) -> Result<Self, GenieError> {
        if bytes.len() != BLOB_LEN {
            return Err(GenieError::BlobLength { got: bytes.len() });
        }
        let (body, crc) = bytes.split_at(BLOB_LEN - 4);
        if crc32fast::hash(body).to_be_bytes() != crc {
            return Err(GenieError::BlobChecksum);
        }
        if &body[..4] != BLOB_MAGIC || body[4] != BLOB_VERSION {
            return Err(GenieError::BlobHeader);
        }
        let fingerprint: [u8; 32] = body[5..37].try_into().expect("32 bytes");
        if fingerprint != catalog.fingerprint() {
            return Err(GenieError::CatalogMismatch);
        }
        if body[37] != 16 {
            return Err(GenieError::BlobLayout(format!("{} registers", body[37])));
        }
        let mut selection = [0u16; 16];
        for (i, &n) in DESIGN_LENGTHS.iter().enumerate() {
            let rec = &body[38 + 3 * i..41 + 3 * i];
            if rec[0] as usize != n {
                return Err(GenieError::BlobLayout(format!(
                    "position {} has length {}",
                    i + 1,
                    rec[0]
                )));
            }
            selection[i] = u16::from_be_bytes([rec[1], rec[2]]);
        }
        let mut pos = 38 + 48;
        let base = unpack_states(&body[pos..pos + STATE_BYTES]);
        pos += STATE_BYTES;
        let current = unpack_states(&body[pos..pos + STATE_BYTES]);
        pos += STATE_BYTES;
        let cycle = u64::from_be_bytes(body[pos..pos + 8].try_into().expect("8 bytes"));
        let cursor = u64::from_be_bytes(body[pos + 8..pos + 16].try_into().expect("8 bytes"));
        let config = KsgConfig::full(catalog, &selection.map(usize::from))?;
        // validates non-degeneracy of both state sets
        Ksg::new(config.clone(), &base[..])?;
        let ksg = Ksg::from_state(
            config,
            &KsgState {
                registers: current.to_vec(),
                cycle,
            },
        )?;
        Ok(Self {
            fingerprint,
            selection,
            base: KsgState {
                registers: base.to_vec(),
                cycle: 0,
            },
            ksg,
            cursor,
        })
    }
}

impl Drop for SucInstance {
    fn drop(&mut self) {
        self.scrub();
    }
}

impl fmt::Debug for SucInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SucInstance")
            .field("catalog", &hex::encode(&self.fingerprint[..8]))
            .field("cursor", &self.cursor)
            .field("cycle", &self.ksg.cycle())
            .finish_non_exhaustive()
    }
}

fn pack_states(states: &[u64]) -> [u8; STATE_BYTES] {
    let mut bits = BitSeq::with_capacity(223);
    for (&n, &s) in DESIGN_LENGTHS.iter().zip(states) {
        for i in (0..n).rev() {
            bits.push(s >> i & 1 == 1);
        }
    }
    bits.to_bytes_msb()
        .try_into()
        .expect("223 bits fill 28 bytes")
}

fn unpack_states(bytes: &[u8]) -> Zeroizing<[u64; 16]> {
    let bits = BitSeq::from_bytes_msb(bytes, 223).expect("28 bytes");
    let mut out = Zeroizing::new([0u64; 16]);
    let mut pos = 0;
    for (slot, &n) in out.iter_mut().zip(&DESIGN_LENGTHS) {
        for _ in 0..n {
            *slot = (*slot << 1) | bits.get(pos) as u64;
            pos += 1;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntropyAccount {
    pub position_counts: Vec<u64>,
    pub selection_bits: f64,
    /// Nominal state size, the sum of register lengths.
    pub state_bits: usize,
    /// `sum log2(2^N - 1)` once the degenerate state of each register is excluded.
    pub state_entropy_bits: f64,
    pub total_bits: f64,
}

pub fn entropy_account(catalog: &Catalog) -> EntropyAccount {
    let counts = catalog.position_counts();
    let selection_bits = catalog.cardinality_log2();
    let state_entropy_bits: f64 = DESIGN_LENGTHS
        .iter()
        .map(|&n| ((1u64 << n) as f64 - 1.0).log2())
        .sum();
    EntropyAccount {
        position_counts: counts.to_vec(),
        selection_bits,
        state_bits: DESIGN_LENGTHS.iter().sum(),
        state_entropy_bits,
        total_bits: selection_bits + state_entropy_bits,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed(i: u64) -> EntropySource {
        let mut s = [0u8; 32];
        s[..8].copy_from_slice(&i.to_le_bytes());
        EntropySource::Seeded(s)
    }

    fn catalog() -> &'static Catalog {
        Catalog::builtin_verified()
    }

    #[test]
    fn seeded_creation_is_deterministic() {
        let a = genie_create(catalog(), seed(1)).unwrap();
        let b = genie_create(catalog(), seed(1)).unwrap();
        assert_eq!(a.export_blob(), b.export_blob());
        let c = genie_create(catalog(), seed(2)).unwrap();
        assert_ne!(a.selection(), c.selection());
    }

    #[test]
    fn unverified_catalog_rejected() {
        assert!(matches!(
            genie_create(&Catalog::builtin(), seed(1)),
            Err(GenieError::UnverifiedCatalog)
        ));
        let mut partial = Catalog::parse("6\t1,(1,2),2\n").unwrap();
        partial.verify();
        assert!(matches!(
            genie_create(&partial, seed(1)),
            Err(GenieError::EmptyPosition(7))
        ));
    }

    #[test]
    fn os_entropy_creates_valid_instances() {
        let a = genie_create(catalog(), EntropySource::Os).unwrap();
        let b = genie_create(catalog(), EntropySource::Os).unwrap();
        assert_ne!(a.export_blob(), b.export_blob());
    }

    #[test]
    fn responses_segment_the_keystream() {
        let mut a = genie_create(catalog(), seed(3)).unwrap();
        let mut b = genie_create(catalog(), seed(3)).unwrap();
        let mut y = a.respond(128);
        y.append(&a.respond(128));
        assert_eq!(y, b.keystream(256));
        assert_eq!(a.cursor(), 2);
        assert_eq!(b.cursor(), 0);
    }

    #[test]
    fn blob_roundtrip_mid_stream() {
        let mut a = genie_create(catalog(), seed(4)).unwrap();
        for _ in 0..5 {
            a.respond(128);
        }
        let blob = a.export_blob();
        assert_eq!(blob.len(), BLOB_LEN);
        let mut b = SucInstance::import_blob(&blob, catalog()).unwrap();
        assert_eq!(b.cursor(), 5);
        assert_eq!(b.export_blob(), blob);
        assert_eq!(a.respond(128), b.respond(128));
        a.rewind();
        b.rewind();
        assert_eq!(a.respond(64), b.respond(64));
    }

    #[test]
    fn corrupted_blobs_rejected() {
        let blob = genie_create(catalog(), seed(5)).unwrap().export_blob();
        assert!(matches!(
            SucInstance::import_blob(&blob[..50], catalog()),
            Err(GenieError::BlobLength { .. })
        ));
        let mut flipped = blob.clone();
        flipped[60] ^= 1;
        assert!(matches!(
            SucInstance::import_blob(&flipped, catalog()),
            Err(GenieError::BlobChecksum)
        ));
        let other = Catalog::parse(
            &catalog()
                .to_tsv()
                .lines()
                .skip(1)
                .collect::<Vec<_>>()
                .join("\n"),
        )
        .unwrap();
        assert!(matches!(
            SucInstance::import_blob(&blob, &other),
            Err(GenieError::CatalogMismatch)
        ));
    }

    #[test]
    fn snapshot_restore_and_rebase() {
        let mut a = genie_create(catalog(), seed(6)).unwrap();
        let snap = a.snapshot();
        let y0 = a.respond(128);
        a.restore(&snap);
        assert_eq!(a.cursor(), 0);
        assert_eq!(a.respond(128), y0);
        a.rebase();
        assert_eq!(a.cursor(), 0);
        let y = a.respond(128);
        a.rewind();
        assert_eq!(a.respond(128), y);

        let before = a.snapshot();
        a.rebase();
        a.restore(&before);
        a.rewind();
        assert_eq!(a.respond(128), y);
    }

    #[test]
    fn scrub_clears_secrets() {
        let mut a = genie_create(catalog(), seed(7)).unwrap();
        assert!(!a.is_scrubbed());
        a.scrub();
        assert!(a.is_scrubbed());
    }

    #[test]
    fn state_packing_roundtrip() {
        let states: Vec<u64> = DESIGN_LENGTHS.iter().map(|&n| (1u64 << n) - 2).collect();
        assert_eq!(&unpack_states(&pack_states(&states))[..], &states[..]);
    }

    #[test]
    fn selection_frequencies_are_uniform() {
        // one entry per length: four specs per position
        let mut toy = Catalog::parse(
            &DESIGN_LENGTHS
                .iter()
                .map(|&n| {
                    let e = &catalog().entries_of(n)[0];
                    format!("{}\t{}\n", n, e.basic_rff)
                })
                .collect::<String>(),
        )
        .unwrap();
        toy.verify();
        let runs = 4000u64;
        let mut freq = [[0u64; 4]; 16];
        for i in 0..runs {
            let s = genie_create(&toy, seed(10_000 + i)).unwrap();
            for (pos, &sel) in s.selection().iter().enumerate() {
                freq[pos][sel as usize] += 1;
            }
        }
        let expected = runs as f64 / 4.0;
        let sigma = (runs as f64 * 0.25 * 0.75).sqrt();
        for row in freq {
            for c in row {
                assert!((c as f64 - expected).abs() <= 3.0 * sigma, "{row:?}");
            }
        }
    }

    #[test]
    fn entropy_account_adds_up() {
        let e = entropy_account(catalog());
        assert_eq!(e.state_bits, 223);
        assert!(e.state_entropy_bits < 223.0 && e.state_entropy_bits > 222.9);
        assert!((e.total_bits - e.selection_bits - e.state_entropy_bits).abs() < 1e-9);
    }
}
