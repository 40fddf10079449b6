//! Session log used to check that no response keys two completed sessions.

use std::collections::HashMap;
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use super::frame::{Purpose, SerialNumber};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuditEntry {
    pub sn: SerialNumber,
    pub purpose: Purpose,
    pub epoch: u32,
    pub index: usize,
    /// Truncated digest of the response used as key.
    pub key_tag: [u8; 8],
    pub completed: bool,
}

pub(crate) fn key_tag(y: &[u8]) -> [u8; 8] {
    Sha256::digest(y)[..8].try_into().unwrap()
}

#[derive(Debug, Default)]
pub struct AuditLog {
    entries: Mutex<Vec<AuditEntry>>,
}

impl AuditLog {
    pub fn record(&self, entry: AuditEntry) {
        self.entries.lock().unwrap().push(entry);
    }

    pub fn entries(&self) -> Vec<AuditEntry> {
        self.entries.lock().unwrap().clone()
    }

    pub fn completed(&self) -> usize {
        self.entries
            .lock()
            .unwrap()
            .iter()
            .filter(|e| e.completed)
            .count()
    }

    /// Key tags that appear in more than one completed session.
    pub fn reused_keys(&self) -> Vec<[u8; 8]> {
        let mut seen: HashMap<[u8; 8], usize> = HashMap::new();
        for e in self.entries.lock().unwrap().iter().filter(|e| e.completed) {
            *seen.entry(e.key_tag).or_default() += 1;
        }
        let mut reused: Vec<_> = seen
            .into_iter()
            .filter(|&(_, n)| n > 1)
            .map(|(k, _)| k)
            .collect();
        reused.sort_unstable();
        reused
    }
}
