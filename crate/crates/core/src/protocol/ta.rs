//! The trusted authority: holds the UIR store and runs the server side of
//! every session.

use std::collections::{HashMap, HashSet};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use zeroize::Zeroizing;

use super::audit::{key_tag, AuditEntry, AuditLog};
use super::cipher::{open, CipherE, ERef};
use super::frame::{Command, ErrorCode, Message, Purpose, SerialNumber};
use super::store::{UirRecord, UirStore};
use super::transport::{TcpTransport, Transport};
use super::{check_params, ProtocolError, DEFAULT_K, DEFAULT_T};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaultPoint {
    /// After an update payload is decrypted and checked, before the new
    /// record is written.
    BeforePersist,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaConfig {
    /// Response width in bits for new enrollments.
    pub k: usize,
    /// Responses per enrollment.
    pub t: usize,
}

impl Default for TaConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            t: DEFAULT_T,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SessionReport {
    pub sn: String,
    pub purpose: &'static str,
    pub epoch: u32,
    pub index: usize,
    /// The record's cursor after the session.
    pub cursor: usize,
    pub remaining: usize,
}

pub struct TrustedAuthority {
    config: TaConfig,
    store: Mutex<UirStore>,
    locks: Mutex<HashMap<SerialNumber, Arc<Mutex<()>>>>,
    cipher: Box<dyn CipherE>,
    rng: Mutex<ChaCha20Rng>,
    audit: AuditLog,
    faults: Mutex<HashSet<FaultPoint>>,
}

fn purpose_name(p: Purpose) -> &'static str {
    match p {
        Purpose::Enroll => "enroll",
        Purpose::Identify => "identify",
        Purpose::Update => "update",
    }
}

impl TrustedAuthority {
    pub fn new(store: UirStore, config: TaConfig) -> Result<Self, ProtocolError> {
        Self::with_rng(store, config, ChaCha20Rng::from_os_rng())
    }

    /// A TA whose nonces come from `rng`, for reproducible transcripts.
    pub fn with_rng(
        store: UirStore,
        config: TaConfig,
        rng: ChaCha20Rng,
    ) -> Result<Self, ProtocolError> {
        check_params(config.k, config.t)?;
        Ok(Self {
            config,
            store: Mutex::new(store),
            locks: Mutex::default(),
            cipher: Box::new(ERef),
            rng: Mutex::new(rng),
            audit: AuditLog::default(),
            faults: Mutex::default(),
        })
    }

    pub fn config(&self) -> TaConfig {
        self.config
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }

    pub fn record(&self, sn: &SerialNumber) -> Option<UirRecord> {
        self.store.lock().unwrap().get(sn).cloned()
    }

    pub fn records(&self) -> Vec<UirRecord> {
        self.store.lock().unwrap().records().cloned().collect()
    }

    /// Arms a one-shot simulated crash.
    pub fn inject_fault(&self, point: FaultPoint) {
        self.faults.lock().unwrap().insert(point);
    }

    fn fault(&self, point: FaultPoint) -> Result<(), ProtocolError> {
        if self.faults.lock().unwrap().remove(&point) {
            return Err(ProtocolError::Fault(point));
        }
        Ok(())
    }

    fn nonce(&self) -> u64 {
        self.rng.lock().unwrap().next_u64()
    }

    fn lock_for(&self, sn: &SerialNumber) -> Arc<Mutex<()>> {
        Arc::clone(self.locks.lock().unwrap().entry(*sn).or_default())
    }

    /// Runs one session: reads the device's hello and dispatches on its purpose.
    pub fn serve(&self, transport: &mut dyn Transport) -> Result<SessionReport, ProtocolError> {
        match transport.recv()? {
            Some(Message::Hello {
                sn,
                epoch,
                cursor,
                purpose,
            }) => {
                let lock = self.lock_for(&sn);
                let _guard = lock.lock().unwrap();
                let result = match purpose {
                    Purpose::Enroll => self.enroll(transport, sn),
                    Purpose::Identify => self.identify(transport, sn, epoch, cursor as usize),
                    Purpose::Update => self.update(transport, sn, epoch, cursor as usize),
                };
                match &result {
                    Err(ProtocolError::Fault(_)) | Ok(_) => {}
                    Err(e) => {
                        let _ = transport.send(&error_message(e));
                    }
                }
                result
            }
            other => Err(ProtocolError::unexpected("hello", other.as_ref())),
        }
    }

    /// Accepts connections and serves each on its own thread. Stops after
    /// `limit` connections when given.
    pub fn serve_tcp(
        self: &Arc<Self>,
        listener: TcpListener,
        timeout: Duration,
        limit: Option<usize>,
        mut report: impl FnMut(Result<SessionReport, ProtocolError>) + Send + 'static,
    ) -> std::io::Result<()> {
        let (tx, rx) = std::sync::mpsc::channel();
        let reporter = thread::spawn(move || {
            for r in rx {
                report(r);
            }
        });
        let mut workers = Vec::new();
        for (n, conn) in listener.incoming().enumerate() {
            let stream = conn?;
            let ta = Arc::clone(self);
            let tx = tx.clone();
            workers.push(thread::spawn(move || {
                let result = TcpTransport::from_stream(stream, timeout)
                    .map_err(|e| ProtocolError::Transport(e.into()))
                    .and_then(|mut t| ta.serve(&mut t));
                let _ = tx.send(result);
            }));
            if limit.is_some_and(|l| n + 1 >= l) {
                break;
            }
        }
        drop(tx);
        for w in workers {
            let _ = w.join();
        }
        let _ = reporter.join();
        Ok(())
    }

    fn report(&self, sn: SerialNumber, purpose: Purpose, index: usize) -> SessionReport {
        let r = self
            .record(&sn)
            .expect("record exists after a completed session");
        SessionReport {
            sn: hex::encode(sn),
            purpose: purpose_name(purpose),
            epoch: r.epoch,
            index,
            cursor: r.cursor,
            remaining: r.remaining(),
        }
    }

    fn enroll(
        &self,
        tr: &mut dyn Transport,
        sn: SerialNumber,
    ) -> Result<SessionReport, ProtocolError> {
        if self.store.lock().unwrap().contains(&sn) {
            return Err(ProtocolError::AlreadyEnrolled);
        }
        let TaConfig { k, t } = self.config;
        tr.send(&Message::Cmd(Command::Configure {
            k: k as u16,
            t: t as u16,
        }))?;
        let mut responses = Vec::with_capacity(t);
        for i in 0..t {
            tr.send(&Message::Cmd(Command::Next))?;
            match tr.recv()? {
                Some(Message::RespData { index, data })
                    if index as usize == i && data.len() * 8 == k =>
                {
                    responses.push(Zeroizing::new(data));
                }
                other => return Err(ProtocolError::unexpected("response data", other.as_ref())),
            }
        }
        self.store.lock().unwrap().insert_new(UirRecord {
            sn,
            k,
            epoch: 0,
            responses,
            cursor: 0,
        })?;
        tr.send(&Message::Cmd(Command::Commit))?;
        Ok(self.report(sn, Purpose::Enroll, 0))
    }

    /// Sends the challenge for `y` and checks the device's answer.
    fn mutual_auth(
        &self,
        tr: &mut dyn Transport,
        epoch: u32,
        index: usize,
        y: &[u8],
    ) -> Result<u64, ProtocolError> {
        let r_t = self.nonce();
        tr.send(&Message::Challenge {
            epoch,
            index: index as u32,
            ct: self.cipher.encrypt(y, r_t).to_be_bytes(),
            nonce: r_t.to_be_bytes(),
        })?;
        match tr.recv()? {
            Some(Message::Response { ct, nonce }) => {
                if self.cipher.decrypt(y, u64::from_be_bytes(ct)) != u64::from_be_bytes(nonce) {
                    return Err(ProtocolError::Rejected(
                        "device answer does not decrypt to its nonce",
                    ));
                }
                Ok(r_t)
            }
            Some(Message::Error { code, message }) => Err(ProtocolError::Remote { code, message }),
            other => Err(ProtocolError::unexpected("response", other.as_ref())),
        }
    }

    /// An unknown serial number gets a challenge under a random key, so the
    /// rejection looks like a failed authentication.
    fn decoy(&self, tr: &mut dyn Transport) -> Result<SessionReport, ProtocolError> {
        let mut y = Zeroizing::new(vec![0u8; self.config.k / 8]);
        self.rng.lock().unwrap().fill_bytes(&mut y);
        let index = (self.nonce() % self.config.t as u64) as usize;
        let _ = self.mutual_auth(tr, 0, index, &y);
        Err(ProtocolError::UnknownDevice)
    }

    /// The response index for a device at (`epoch`, `cursor`): never behind
    /// the TA's own cursor, so consumed responses stay consumed.
    fn agree_index(record: &UirRecord, epoch: u32, cursor: usize) -> Result<usize, ProtocolError> {
        match epoch.cmp(&record.epoch) {
            std::cmp::Ordering::Equal => Ok(record.cursor.max(cursor)),
            std::cmp::Ordering::Less if epoch + 1 == record.epoch => Ok(record.cursor),
            _ => Err(ProtocolError::Rejected("epoch out of range")),
        }
    }

    fn identify(
        &self,
        tr: &mut dyn Transport,
        sn: SerialNumber,
        epoch: u32,
        cursor: usize,
    ) -> Result<SessionReport, ProtocolError> {
        let Some(record) = self.record(&sn) else {
            return self.decoy(tr);
        };
        let index = Self::agree_index(&record, epoch, cursor)?;
        if index >= record.t() {
            return Err(ProtocolError::Exhausted);
        }
        let y = &record.responses[index];
        let mut entry = AuditEntry {
            sn,
            purpose: Purpose::Identify,
            epoch: record.epoch,
            index,
            key_tag: key_tag(y),
            completed: false,
        };
        let outcome = self.mutual_auth(tr, record.epoch, index, y);
        if outcome.is_ok() {
            self.store.lock().unwrap().set_cursor(&sn, index + 1)?;
            entry.completed = true;
        }
        self.audit.record(entry);
        outcome.map(|_| self.report(sn, Purpose::Identify, index))
    }

    fn update(
        &self,
        tr: &mut dyn Transport,
        sn: SerialNumber,
        epoch: u32,
        cursor: usize,
    ) -> Result<SessionReport, ProtocolError> {
        let Some(record) = self.record(&sn) else {
            return self.decoy(tr);
        };
        if epoch != record.epoch {
            return Err(ProtocolError::Rejected(
                "device must identify before updating",
            ));
        }
        let index = record.t() - 1;
        if Self::agree_index(&record, epoch, cursor)? > index {
            return Err(ProtocolError::Exhausted);
        }
        let y = &record.responses[index];
        let mut entry = AuditEntry {
            sn,
            purpose: Purpose::Update,
            epoch: record.epoch,
            index,
            key_tag: key_tag(y),
            completed: false,
        };
        let result = self.refresh(tr, &record, y);
        entry.completed = result.is_ok();
        self.audit.record(entry);
        result.map(|_| self.report(sn, Purpose::Update, index))
    }

    fn refresh(
        &self,
        tr: &mut dyn Transport,
        record: &UirRecord,
        y: &[u8],
    ) -> Result<(), ProtocolError> {
        let r_t = self.mutual_auth(tr, record.epoch, record.t() - 1, y)?;
        tr.send(&Message::Cmd(Command::Refresh))?;
        let sealed = match tr.recv()? {
            Some(Message::UpdatePayload(p)) => p,
            other => return Err(ProtocolError::unexpected("update payload", other.as_ref())),
        };
        let plain = Zeroizing::new(
            open(self.cipher.as_ref(), y, r_t, &sealed)
                .map_err(|_| ProtocolError::Rejected("update payload does not open"))?,
        );
        let width = record.k / 8;
        if plain.len() != record.t() * width {
            return Err(ProtocolError::Rejected("update payload has the wrong size"));
        }
        let responses = plain
            .chunks_exact(width)
            .map(|c| Zeroizing::new(c.to_vec()))
            .collect();
        self.fault(FaultPoint::BeforePersist)?;
        let next = UirRecord {
            sn: record.sn,
            k: record.k,
            epoch: record.epoch + 1,
            responses,
            cursor: 0,
        };
        self.store.lock().unwrap().replace(next)?;
        tr.send(&Message::Cmd(Command::Commit))?;
        Ok(())
    }
}

fn error_message(e: &ProtocolError) -> Message {
    let code = match e {
        ProtocolError::Rejected(_) | ProtocolError::UnknownDevice => ErrorCode::Rejected,
        ProtocolError::AlreadyEnrolled => ErrorCode::AlreadyEnrolled,
        ProtocolError::Exhausted => ErrorCode::Exhausted,
        ProtocolError::Unexpected { .. } | ProtocolError::BadParameters(_) => ErrorCode::Malformed,
        _ => ErrorCode::Internal,
    };
    // Unknown devices and failed checks read the same on the wire.
    let message = match e {
        ProtocolError::UnknownDevice => "authentication failed".to_string(),
        ProtocolError::Rejected(_) => "authentication failed".to_string(),
        other => other.to_string(),
    };
    Message::Error { code, message }
}
