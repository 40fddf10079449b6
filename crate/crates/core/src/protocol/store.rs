//! Units Individual Records: one JSON object per line, rewritten through a
//! temporary file and an atomic rename on every change.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use zeroize::{Zeroize, Zeroizing};

use super::frame::SerialNumber;

#[derive(Clone, PartialEq, Eq)]
pub struct UirRecord {
    pub sn: SerialNumber,
    /// Response width in bits.
    pub k: usize,
    /// Incremented by every completed update.
    pub epoch: u32,
    pub responses: Vec<Zeroizing<Vec<u8>>>,
    /// Next unconsumed response.
    pub cursor: usize,
}

impl UirRecord {
    pub fn t(&self) -> usize {
        self.responses.len()
    }

    pub fn remaining(&self) -> usize {
        self.t() - self.cursor
    }
}

impl std::fmt::Debug for UirRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UirRecord")
            .field("sn", &hex::encode(self.sn))
            .field("k", &self.k)
            .field("epoch", &self.epoch)
            .field("t", &self.t())
            .field("cursor", &self.cursor)
            .finish_non_exhaustive()
    }
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    sn: String,
    k: usize,
    #[serde(default)]
    epoch: u32,
    responses: Vec<String>,
    cursor: usize,
}

impl Drop for RecordLine {
    fn drop(&mut self) {
        self.responses.zeroize();
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store I/O: {0}")]
    Io(#[from] io::Error),
    #[error("store line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error("device {0} is already enrolled")]
    Duplicate(String),
    #[error("device {0} is not enrolled")]
    Unknown(String),
}

#[derive(Debug, Default)]
pub struct UirStore {
    path: Option<PathBuf>,
    records: BTreeMap<SerialNumber, UirRecord>,
}

fn record_from_line(line: &str, n: usize) -> Result<UirRecord, StoreError> {
    let corrupt = |reason: String| StoreError::Corrupt { line: n, reason };
    let r: RecordLine = serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
    let sn: SerialNumber = hex::decode(&r.sn)
        .ok()
        .and_then(|v| v.try_into().ok())
        .ok_or_else(|| corrupt("serial number must be 16 hex bytes".into()))?;
    let responses = r
        .responses
        .iter()
        .map(|h| {
            hex::decode(h)
                .map(Zeroizing::new)
                .map_err(|e| corrupt(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if r.k == 0 || r.k % 8 != 0 || responses.iter().any(|y| y.len() * 8 != r.k) {
        return Err(corrupt("response width mismatch".into()));
    }
    if r.cursor > responses.len() {
        return Err(corrupt("cursor past the last response".into()));
    }
    Ok(UirRecord {
        sn,
        k: r.k,
        epoch: r.epoch,
        responses,
        cursor: r.cursor,
    })
}

fn record_to_line(r: &UirRecord) -> String {
    let line = RecordLine {
        sn: hex::encode(r.sn),
        k: r.k,
        epoch: r.epoch,
        responses: r.responses.iter().map(hex::encode).collect(),
        cursor: r.cursor,
    };
    serde_json::to_string(&line).expect("record serializes")
}

impl UirStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens a store file, creating an empty store if it does not exist.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let mut records = BTreeMap::new();
        match fs::File::open(&path) {
            Ok(f) => {
                for (i, line) in io::BufReader::new(f).lines().enumerate() {
                    let line = Zeroizing::new(line?);
                    if line.trim().is_empty() {
                        continue;
                    }
                    let r = record_from_line(&line, i + 1)?;
                    records.insert(r.sn, r);
                }
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
        Ok(Self {
            path: Some(path),
            records,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, sn: &SerialNumber) -> Option<&UirRecord> {
        self.records.get(sn)
    }

    pub fn contains(&self, sn: &SerialNumber) -> bool {
        self.records.contains_key(sn)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &UirRecord> {
        self.records.values()
    }

    pub fn insert_new(&mut self, record: UirRecord) -> Result<(), StoreError> {
        if self.records.contains_key(&record.sn) {
            return Err(StoreError::Duplicate(hex::encode(record.sn)));
        }
        self.commit(record)
    }

    /// Replaces an existing record. The in-memory view changes only once the
    /// file has been durably rewritten.
    pub fn replace(&mut self, record: UirRecord) -> Result<(), StoreError> {
        if !self.records.contains_key(&record.sn) {
            return Err(StoreError::Unknown(hex::encode(record.sn)));
        }
        self.commit(record)
    }

    pub fn set_cursor(&mut self, sn: &SerialNumber, cursor: usize) -> Result<(), StoreError> {
        let mut r = self
            .records
            .get(sn)
            .ok_or_else(|| StoreError::Unknown(hex::encode(sn)))?
            .clone();
        r.cursor = cursor.min(r.t());
        self.commit(r)
    }

    fn commit(&mut self, record: UirRecord) -> Result<(), StoreError> {
        if let Some(path) = &self.path {
            let mut next: Vec<&UirRecord> = self
                .records
                .values()
                .filter(|r| r.sn != record.sn)
                .collect();
            next.push(&record);
            next.sort_by_key(|r| r.sn);
            write_atomically(path, &next)?;
        }
        self.records.insert(record.sn, record);
        Ok(())
    }
}

fn write_atomically(path: &Path, records: &[&UirRecord]) -> io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    for r in records {
        let line = Zeroizing::new(record_to_line(r));
        tmp.write_all(line.as_bytes())?;
        tmp.write_all(b"\n")?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
