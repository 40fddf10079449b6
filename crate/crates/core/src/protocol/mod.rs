//! Enrollment, identification and update between a trusted authority (TA)
//! and devices carrying a secret unknown cipher.
//!
//! Identification takes three flights: the device's hello, the TA's
//! challenge `E_{Y_i}(R_T) || R_T`, and the device's answer
//! `E_{Y_i}(R_A) || R_A`. The TA then either closes the channel (accept) or
//! sends an error; the device commits its advanced state only on a clean
//! close. Both sides echo their cursor and epoch, and a party that fell
//! behind skips forward, so a dropped or tampered session never leads to a
//! response being used twice.

pub mod audit;
pub mod cipher;
pub mod device;
pub mod frame;
pub mod store;
pub mod ta;
pub mod transport;

pub use audit::{AuditEntry, AuditLog};
pub use cipher::{CipherE, ERef};
pub use device::{Device, DeviceFile, DeviceOutcome};
pub use frame::{
    frame_decode, frame_encode, Command, ErrorCode, FrameError, Message, Purpose, SerialNumber,
};
pub use store::{StoreError, UirRecord, UirStore};
pub use ta::{FaultPoint, SessionReport, TaConfig, TrustedAuthority};
pub use transport::{
    memory_pair, Action, Interceptor, MemoryTransport, TcpTransport, Transport, TransportError,
};

use thiserror::Error;

pub const DEFAULT_K: usize = 128;
pub const DEFAULT_T: usize = 16;
pub const MAX_K: usize = 2048;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("peer reported {code:?}: {message}")]
    Remote { code: ErrorCode, message: String },
    #[error("rejected: {0}")]
    Rejected(&'static str),
    #[error("unknown device")]
    UnknownDevice,
    #[error("device is already enrolled")]
    AlreadyEnrolled,
    #[error("device is not enrolled")]
    NotEnrolled,
    #[error("all responses consumed; run an update")]
    Exhausted,
    #[error("expected {expected}, got {got}")]
    Unexpected { expected: &'static str, got: String },
    #[error("invalid parameters: {0}")]
    BadParameters(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("injected fault at {0:?}")]
    Fault(FaultPoint),
    #[error("peer closed the channel early")]
    Closed,
}

impl ProtocolError {
    fn unexpected(expected: &'static str, got: Option<&Message>) -> Self {
        ProtocolError::Unexpected {
            expected,
            got: got.map_or("end of stream".to_string(), |m| {
                format!("message tag {:#04x}", m.tag())
            }),
        }
    }
}

pub(crate) fn check_params(k: usize, t: usize) -> Result<(), ProtocolError> {
    if k == 0 || k % 8 != 0 || k > MAX_K {
        return Err(ProtocolError::BadParameters(format!(
            "k = {k} must be a positive multiple of 8 up to {MAX_K}"
        )));
    }
    if t == 0 || t > u16::MAX as usize {
        return Err(ProtocolError::BadParameters(format!(
            "t = {t} must be between 1 and {}",
            u16::MAX
        )));
    }
    Ok(())
}
