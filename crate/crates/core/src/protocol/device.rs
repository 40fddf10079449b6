//! The device side: a SUC instance plus its serial number and the
//! enrollment parameters it learned from the TA.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use zeroize::Zeroizing;

use super::cipher::{seal, CipherE, ERef};
use super::frame::{Command, ErrorCode, Message, Purpose, SerialNumber};
use super::transport::Transport;
use super::{check_params, ProtocolError};
use crate::catalog::Catalog;
use crate::genie::{GenieError, SucInstance};

/// Epoch, index, `Y_index` and `R_T` of an answered challenge.
type Answered = (u32, usize, Zeroizing<Vec<u8>>, u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DeviceOutcome {
    pub epoch: u32,
    pub index: usize,
    pub cursor: u64,
}

pub struct Device {
    sn: SerialNumber,
    suc: SucInstance,
    epoch: u32,
    params: Option<(usize, usize)>,
    cipher: Box<dyn CipherE>,
    rng: ChaCha20Rng,
}

impl std::fmt::Debug for Device {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Device")
            .field("sn", &hex::encode(self.sn))
            .field("epoch", &self.epoch)
            .field("cursor", &self.suc.cursor())
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

/// On-disk form of a device.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceFile {
    pub sn: String,
    pub epoch: u32,
    pub k: Option<usize>,
    pub t: Option<usize>,
    pub blob: String,
}

#[derive(Debug, Error)]
pub enum DeviceFileError {
    #[error("device file I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("device file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("device file: {0}")]
    Field(&'static str),
    #[error(transparent)]
    Suc(#[from] GenieError),
}

impl Device {
    pub fn new(sn: SerialNumber, suc: SucInstance) -> Self {
        Self::with_rng(sn, suc, ChaCha20Rng::from_os_rng())
    }

    pub fn with_rng(sn: SerialNumber, suc: SucInstance, rng: ChaCha20Rng) -> Self {
        Self {
            sn,
            suc,
            epoch: 0,
            params: None,
            cipher: Box::new(ERef),
            rng,
        }
    }

    /// Replaces the nonce generator, for reproducible transcripts.
    pub fn set_rng(&mut self, rng: ChaCha20Rng) {
        self.rng = rng;
    }

    pub fn sn(&self) -> &SerialNumber {
        &self.sn
    }

    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    pub fn cursor(&self) -> u64 {
        self.suc.cursor()
    }

    pub fn is_enrolled(&self) -> bool {
        self.params.is_some()
    }

    pub fn suc(&self) -> &SucInstance {
        &self.suc
    }

    pub fn to_file(&self) -> DeviceFile {
        DeviceFile {
            sn: hex::encode(self.sn),
            epoch: self.epoch,
            k: self.params.map(|p| p.0),
            t: self.params.map(|p| p.1),
            blob: hex::encode(self.suc.export_blob()),
        }
    }

    pub fn from_file(file: &DeviceFile, catalog: &Catalog) -> Result<Self, DeviceFileError> {
        let sn = hex::decode(&file.sn)
            .ok()
            .and_then(|v| v.try_into().ok())
            .ok_or(DeviceFileError::Field("sn must be 16 hex bytes"))?;
        let blob = Zeroizing::new(
            hex::decode(&file.blob).map_err(|_| DeviceFileError::Field("blob is not hex"))?,
        );
        let mut d = Self::new(sn, SucInstance::import_blob(&blob, catalog)?);
        d.epoch = file.epoch;
        d.params = match (file.k, file.t) {
            (Some(k), Some(t)) => {
                check_params(k, t).map_err(|_| DeviceFileError::Field("k or t out of range"))?;
                Some((k, t))
            }
            (None, None) => None,
            _ => return Err(DeviceFileError::Field("k and t must both be present")),
        };
        Ok(d)
    }

    pub fn load(path: impl AsRef<Path>, catalog: &Catalog) -> Result<Self, DeviceFileError> {
        let text = Zeroizing::new(fs::read_to_string(path)?);
        Self::from_file(&serde_json::from_str(&text)?, catalog)
    }

    /// Writes the device file through a temporary file and a rename.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DeviceFileError> {
        let path = path.as_ref();
        let dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        let text = Zeroizing::new(serde_json::to_string_pretty(&self.to_file())?);
        tmp.write_all(text.as_bytes())?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| e.error)?;
        Ok(())
    }

    fn hello(&self, purpose: Purpose) -> Message {
        Message::Hello {
            sn: self.sn,
            epoch: self.epoch,
            cursor: self.suc.cursor() as u32,
            purpose,
        }
    }

    fn next_response(&mut self, k: usize) -> Zeroizing<Vec<u8>> {
        Zeroizing::new(self.suc.respond(k).to_bytes_msb())
    }

    pub fn enroll(&mut self, tr: &mut dyn Transport) -> Result<(), ProtocolError> {
        if self.params.is_some() {
            return Err(ProtocolError::AlreadyEnrolled);
        }
        if self.suc.cursor() != 0 {
            return Err(ProtocolError::BadParameters(
                "enrollment needs a fresh instance".into(),
            ));
        }
        tr.send(&self.hello(Purpose::Enroll))?;
        let result = self.enroll_inner(tr);
        self.suc.rewind();
        if let Ok(params) = result {
            self.params = Some(params);
            self.epoch = 0;
        }
        result.map(|_| ())
    }

    fn enroll_inner(&mut self, tr: &mut dyn Transport) -> Result<(usize, usize), ProtocolError> {
        let (k, t) = match recv(tr)? {
            Message::Cmd(Command::Configure { k, t }) => (k as usize, t as usize),
            other => return Err(ProtocolError::unexpected("configure", Some(&other))),
        };
        check_params(k, t)?;
        let mut sent = 0;
        loop {
            match recv(tr)? {
                Message::Cmd(Command::Next) if sent < t => {
                    let data = self.next_response(k);
                    tr.send(&Message::RespData {
                        index: sent as u16,
                        data: data.to_vec(),
                    })?;
                    sent += 1;
                }
                Message::Cmd(Command::Commit) if sent == t => return Ok((k, t)),
                other => return Err(ProtocolError::unexpected("next or commit", Some(&other))),
            }
        }
    }

    /// Moves the instance to response `index` of `epoch`, rolling into the
    /// next epoch when the TA has already committed an update this device
    /// never saw acknowledged. Returns `Y_index`.
    fn position(
        &mut self,
        epoch: u32,
        index: usize,
        k: usize,
        t: usize,
    ) -> Result<Zeroizing<Vec<u8>>, ProtocolError> {
        if epoch == self.epoch + 1 {
            while (self.suc.cursor() as usize) < t {
                self.suc.respond(k);
            }
            self.suc.rebase();
        } else if epoch != self.epoch {
            return Err(ProtocolError::Rejected("challenge for a foreign epoch"));
        }
        if index < self.suc.cursor() as usize || index >= t {
            return Err(ProtocolError::Rejected(
                "challenge index already consumed or out of range",
            ));
        }
        while (self.suc.cursor() as usize) < index {
            self.suc.respond(k);
        }
        Ok(self.next_response(k))
    }

    /// Checks the TA's challenge and answers it. Returns the epoch the
    /// challenge belongs to, the index, `Y_index` and `R_T`.
    fn answer(
        &mut self,
        tr: &mut dyn Transport,
        k: usize,
        t: usize,
        update: bool,
    ) -> Result<Answered, ProtocolError> {
        let (epoch, index, ct, nonce) = match recv(tr)? {
            Message::Challenge {
                epoch,
                index,
                ct,
                nonce,
            } => (epoch, index as usize, ct, nonce),
            other => return Err(ProtocolError::unexpected("challenge", Some(&other))),
        };
        if update && (epoch != self.epoch || index != t - 1) {
            return Err(ProtocolError::Rejected(
                "update must be keyed by the last response",
            ));
        }
        let y = self.position(epoch, index, k, t)?;
        let r_t = u64::from_be_bytes(nonce);
        if self.cipher.decrypt(&y, u64::from_be_bytes(ct)) != r_t {
            return Err(ProtocolError::Rejected(
                "challenge does not decrypt to its nonce",
            ));
        }
        let r_a = self.rng.next_u64();
        tr.send(&Message::Response {
            ct: self.cipher.encrypt(&y, r_a).to_be_bytes(),
            nonce: r_a.to_be_bytes(),
        })?;
        Ok((epoch, index, y, r_t))
    }

    /// Runs a session, restoring the instance if it fails and telling the
    /// TA when this side rejected.
    fn guarded<R>(
        &mut self,
        tr: &mut dyn Transport,
        purpose: Purpose,
        body: impl FnOnce(&mut Self, &mut dyn Transport, usize, usize) -> Result<R, ProtocolError>,
    ) -> Result<R, ProtocolError> {
        let (k, t) = self.params.ok_or(ProtocolError::NotEnrolled)?;
        let snap = self.suc.snapshot();
        let epoch = self.epoch;
        tr.send(&self.hello(purpose))?;
        let result = body(self, tr, k, t);
        if let Err(e) = &result {
            self.suc.restore(&snap);
            self.epoch = epoch;
            if matches!(
                e,
                ProtocolError::Rejected(_) | ProtocolError::Unexpected { .. }
            ) {
                let _ = tr.send(&Message::Error {
                    code: ErrorCode::Rejected,
                    message: "authentication failed".into(),
                });
            }
        }
        result
    }

    pub fn identify(&mut self, tr: &mut dyn Transport) -> Result<DeviceOutcome, ProtocolError> {
        self.guarded(tr, Purpose::Identify, |d, tr, k, t| {
            let (epoch, index, _y, _) = d.answer(tr, k, t, false)?;
            match tr.recv()? {
                None => {
                    d.epoch = epoch;
                    Ok(DeviceOutcome {
                        epoch,
                        index,
                        cursor: d.suc.cursor(),
                    })
                }
                Some(Message::Error { code, message }) => {
                    Err(ProtocolError::Remote { code, message })
                }
                Some(other) => Err(ProtocolError::unexpected("end of session", Some(&other))),
            }
        })
    }

    pub fn update(&mut self, tr: &mut dyn Transport) -> Result<DeviceOutcome, ProtocolError> {
        self.guarded(tr, Purpose::Update, |d, tr, k, t| {
            let (epoch, index, y, r_t) = d.answer(tr, k, t, true)?;
            match recv(tr)? {
                Message::Cmd(Command::Refresh) => {}
                other => return Err(ProtocolError::unexpected("refresh", Some(&other))),
            }
            let mark = d.suc.snapshot();
            let mut fresh = Zeroizing::new(Vec::with_capacity(t * k / 8));
            for _ in 0..t {
                fresh.extend_from_slice(&d.next_response(k));
            }
            tr.send(&Message::UpdatePayload(seal(
                d.cipher.as_ref(),
                &y,
                r_t,
                &fresh,
            )))?;
            match recv(tr)? {
                Message::Cmd(Command::Commit) => {
                    d.suc.restore(&mark);
                    d.suc.rebase();
                    d.epoch = epoch + 1;
                    Ok(DeviceOutcome {
                        epoch: d.epoch,
                        index,
                        cursor: 0,
                    })
                }
                other => Err(ProtocolError::unexpected("commit", Some(&other))),
            }
        })
    }
}

/// Receives a message, mapping a peer error frame and end of stream to errors.
fn recv(tr: &mut dyn Transport) -> Result<Message, ProtocolError> {
    match tr.recv()? {
        Some(Message::Error { code, message }) => Err(ProtocolError::Remote { code, message }),
        Some(m) => Ok(m),
        None => Err(ProtocolError::Closed),
    }
}
