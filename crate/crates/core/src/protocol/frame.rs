//! Length-prefixed wire frames: 4-byte big-endian payload length, one tag
//! byte, then the payload.

use std::io::{self, Read, Write};

use thiserror::Error;

pub const MAX_PAYLOAD: usize = 1 << 20;
pub const SN_BYTES: usize = 16;
pub const NONCE_BYTES: usize = 8;
const HEADER: usize = 5;

pub type SerialNumber = [u8; SN_BYTES];

const TAG_HELLO: u8 = 0x01;
const TAG_CHALLENGE: u8 = 0x02;
const TAG_RESPONSE: u8 = 0x03;
const TAG_CMD: u8 = 0x04;
const TAG_RESP_DATA: u8 = 0x05;
const TAG_UPDATE: u8 = 0x06;
const TAG_ERROR: u8 = 0x7F;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Enroll,
    Identify,
    Update,
}

impl Purpose {
    fn code(self) -> u8 {
        match self {
            Purpose::Enroll => 0,
            Purpose::Identify => 1,
            Purpose::Update => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        [Purpose::Enroll, Purpose::Identify, Purpose::Update]
            .into_iter()
            .find(|p| p.code() == c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Produce the next response. Encoded as an empty payload.
    Next,
    /// Enrollment parameters: response width and count.
    Configure { k: u16, t: u16 },
    /// Generate and send a fresh set of responses.
    Refresh,
    /// The TA has durably stored what the device just sent.
    Commit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ErrorCode {
    Rejected = 1,
    UnknownDevice = 2,
    AlreadyEnrolled = 3,
    Exhausted = 4,
    Malformed = 5,
    Internal = 6,
}

impl ErrorCode {
    fn from_code(c: u8) -> Option<Self> {
        use ErrorCode::*;
        [
            Rejected,
            UnknownDevice,
            AlreadyEnrolled,
            Exhausted,
            Malformed,
            Internal,
        ]
        .into_iter()
        .find(|e| *e as u8 == c)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Hello {
        sn: SerialNumber,
        epoch: u32,
        cursor: u32,
        purpose: Purpose,
    },
    /// `ct = E_{Y_index}(nonce)`.
    Challenge {
        epoch: u32,
        index: u32,
        ct: [u8; NONCE_BYTES],
        nonce: [u8; NONCE_BYTES],
    },
    Response {
        ct: [u8; NONCE_BYTES],
        nonce: [u8; NONCE_BYTES],
    },
    Cmd(Command),
    RespData {
        index: u16,
        data: Vec<u8>,
    },
    UpdatePayload(Vec<u8>),
    Error {
        code: ErrorCode,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("truncated frame: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("payload of {0} bytes exceeds the frame limit")]
    Oversize(usize),
    #[error("unknown message tag {0:#04x}")]
    UnknownTag(u8),
    #[error("malformed {what} payload")]
    Malformed { what: &'static str },
}

impl Message {
    pub fn tag(&self) -> u8 {
        match self {
            Message::Hello { .. } => TAG_HELLO,
            Message::Challenge { .. } => TAG_CHALLENGE,
            Message::Response { .. } => TAG_RESPONSE,
            Message::Cmd(_) => TAG_CMD,
            Message::RespData { .. } => TAG_RESP_DATA,
            Message::UpdatePayload(_) => TAG_UPDATE,
            Message::Error { .. } => TAG_ERROR,
        }
    }

    fn payload(&self) -> Vec<u8> {
        let mut p = Vec::new();
        match self {
            Message::Hello {
                sn,
                epoch,
                cursor,
                purpose,
            } => {
                p.extend_from_slice(sn);
                p.extend_from_slice(&epoch.to_be_bytes());
                p.extend_from_slice(&cursor.to_be_bytes());
                p.push(purpose.code());
            }
            Message::Challenge {
                epoch,
                index,
                ct,
                nonce,
            } => {
                p.extend_from_slice(&epoch.to_be_bytes());
                p.extend_from_slice(&index.to_be_bytes());
                p.extend_from_slice(ct);
                p.extend_from_slice(nonce);
            }
            Message::Response { ct, nonce } => {
                p.extend_from_slice(ct);
                p.extend_from_slice(nonce);
            }
            Message::Cmd(Command::Next) => {}
            Message::Cmd(Command::Configure { k, t }) => {
                p.push(1);
                p.extend_from_slice(&k.to_be_bytes());
                p.extend_from_slice(&t.to_be_bytes());
            }
            Message::Cmd(Command::Refresh) => p.push(2),
            Message::Cmd(Command::Commit) => p.push(3),
            Message::RespData { index, data } => {
                p.extend_from_slice(&index.to_be_bytes());
                p.extend_from_slice(data);
            }
            Message::UpdatePayload(data) => p.extend_from_slice(data),
            Message::Error { code, message } => {
                p.push(*code as u8);
                p.extend_from_slice(message.as_bytes());
            }
        }
        p
    }

    fn from_payload(tag: u8, p: &[u8]) -> Result<Self, FrameError> {
        fn exact<const N: usize>(p: &[u8], what: &'static str) -> Result<[u8; N], FrameError> {
            p.try_into().map_err(|_| FrameError::Malformed { what })
        }
        let be32 = |b: &[u8]| u32::from_be_bytes(b.try_into().unwrap());
        Ok(match tag {
            TAG_HELLO => {
                let b: [u8; SN_BYTES + 9] = exact(p, "hello")?;
                Message::Hello {
                    sn: b[..SN_BYTES].try_into().unwrap(),
                    epoch: be32(&b[16..20]),
                    cursor: be32(&b[20..24]),
                    purpose: Purpose::from_code(b[24])
                        .ok_or(FrameError::Malformed { what: "hello" })?,
                }
            }
            TAG_CHALLENGE => {
                let b: [u8; 24] = exact(p, "challenge")?;
                Message::Challenge {
                    epoch: be32(&b[..4]),
                    index: be32(&b[4..8]),
                    ct: b[8..16].try_into().unwrap(),
                    nonce: b[16..].try_into().unwrap(),
                }
            }
            TAG_RESPONSE => {
                let b: [u8; 16] = exact(p, "response")?;
                Message::Response {
                    ct: b[..8].try_into().unwrap(),
                    nonce: b[8..].try_into().unwrap(),
                }
            }
            TAG_CMD => Message::Cmd(match p {
                [] => Command::Next,
                [1, k0, k1, t0, t1] => Command::Configure {
                    k: u16::from_be_bytes([*k0, *k1]),
                    t: u16::from_be_bytes([*t0, *t1]),
                },
                [2] => Command::Refresh,
                [3] => Command::Commit,
                _ => return Err(FrameError::Malformed { what: "cmd" }),
            }),
            TAG_RESP_DATA => {
                if p.len() < 2 {
                    return Err(FrameError::Malformed { what: "resp-data" });
                }
                Message::RespData {
                    index: u16::from_be_bytes([p[0], p[1]]),
                    data: p[2..].to_vec(),
                }
            }
            TAG_UPDATE => Message::UpdatePayload(p.to_vec()),
            TAG_ERROR => {
                let (&code, msg) = p
                    .split_first()
                    .ok_or(FrameError::Malformed { what: "error" })?;
                Message::Error {
                    code: ErrorCode::from_code(code)
                        .ok_or(FrameError::Malformed { what: "error" })?,
                    message: String::from_utf8_lossy(msg).into_owned(),
                }
            }
            other => return Err(FrameError::UnknownTag(other)),
        })
    }
}

pub fn frame_encode(msg: &Message) -> Vec<u8> {
    let payload = msg.payload();
    assert!(payload.len() <= MAX_PAYLOAD, "oversize outgoing frame");
    let mut out = Vec::with_capacity(HEADER + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.push(msg.tag());
    out.extend_from_slice(&payload);
    out
}

/// Decodes exactly one frame occupying all of `bytes`.
pub fn frame_decode(bytes: &[u8]) -> Result<Message, FrameError> {
    let (msg, used) = frame_decode_prefix(bytes)?;
    if used != bytes.len() {
        return Err(FrameError::Malformed {
            what: "trailing bytes after",
        });
    }
    Ok(msg)
}

/// Decodes the frame at the start of `bytes`, returning it and its length.
pub fn frame_decode_prefix(bytes: &[u8]) -> Result<(Message, usize), FrameError> {
    if bytes.len() < HEADER {
        return Err(FrameError::Truncated {
            need: HEADER,
            have: bytes.len(),
        });
    }
    let len = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
    if len > MAX_PAYLOAD {
        return Err(FrameError::Oversize(len));
    }
    if bytes.len() < HEADER + len {
        return Err(FrameError::Truncated {
            need: HEADER + len,
            have: bytes.len(),
        });
    }
    let msg = Message::from_payload(bytes[4], &bytes[HEADER..HEADER + len])?;
    Ok((msg, HEADER + len))
}

pub fn write_frame(w: &mut impl Write, msg: &Message) -> io::Result<()> {
    w.write_all(&frame_encode(msg))?;
    w.flush()
}

#[derive(Debug, Error)]
pub enum ReadFrameError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// Reads one frame. `Ok(None)` is a clean end of stream between frames.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Message>, ReadFrameError> {
    let mut header = [0u8; HEADER];
    let mut got = 0;
    while got < HEADER {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => {
                return Err(FrameError::Truncated {
                    need: HEADER,
                    have: got,
                }
                .into())
            }
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_be_bytes(header[..4].try_into().unwrap()) as usize;
    if len > MAX_PAYLOAD {
        return Err(FrameError::Oversize(len).into());
    }
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload)?;
    Ok(Some(Message::from_payload(header[4], &payload)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn samples() -> Vec<Message> {
        vec![
            Message::Hello {
                sn: [0xAB; 16],
                epoch: 2,
                cursor: 7,
                purpose: Purpose::Identify,
            },
            Message::Challenge {
                epoch: 0,
                index: 3,
                ct: [1; 8],
                nonce: [2; 8],
            },
            Message::Response {
                ct: [3; 8],
                nonce: [4; 8],
            },
            Message::Cmd(Command::Next),
            Message::Cmd(Command::Configure { k: 128, t: 16 }),
            Message::Cmd(Command::Refresh),
            Message::Cmd(Command::Commit),
            Message::RespData {
                index: 9,
                data: vec![5; 16],
            },
            Message::UpdatePayload(vec![6; 40]),
            Message::Error {
                code: ErrorCode::Exhausted,
                message: "run update".into(),
            },
        ]
    }

    #[test]
    fn roundtrip_every_message() {
        for m in samples() {
            assert_eq!(frame_decode(&frame_encode(&m)).unwrap(), m);
            let mut cursor = io::Cursor::new(frame_encode(&m));
            assert_eq!(read_frame(&mut cursor).unwrap(), Some(m));
            assert!(read_frame(&mut cursor).unwrap().is_none());
        }
    }

    #[test]
    fn next_command_has_empty_payload() {
        assert_eq!(
            frame_encode(&Message::Cmd(Command::Next)),
            vec![0, 0, 0, 0, TAG_CMD]
        );
    }

    #[test]
    fn strict_validation() {
        let hello = frame_encode(&samples()[0]);
        assert!(matches!(
            frame_decode(&hello[..hello.len() - 1]),
            Err(FrameError::Truncated { .. })
        ));
        assert!(matches!(
            frame_decode(&[0, 0, 0, 0, 0x42]),
            Err(FrameError::UnknownTag(0x42))
        ));
        assert!(matches!(
            frame_decode(&[0, 0x20, 0, 0, 1]),
            Err(FrameError::Oversize(_))
        ));
        assert!(matches!(
            frame_decode(&[0, 0, 0, 1, TAG_HELLO, 0]),
            Err(FrameError::Malformed { .. })
        ));
        let mut long = hello.clone();
        long.push(0);
        assert!(frame_decode(&long).is_err());
        let mut r = io::Cursor::new(hello[..3].to_vec());
        assert!(read_frame(&mut r).is_err());
    }

    proptest! {
        #[test]
        fn random_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let _ = frame_decode(&bytes);
            let _ = read_frame(&mut io::Cursor::new(bytes));
        }

        #[test]
        fn random_payloads_under_valid_tags_never_panic(tag in prop_oneof![1u8..=6, Just(0x7F)], payload in proptest::collection::vec(any::<u8>(), 0..40)) {
            let mut bytes = (payload.len() as u32).to_be_bytes().to_vec();
            bytes.push(tag);
            bytes.extend_from_slice(&payload);
            if let Ok(m) = frame_decode(&bytes) {
                prop_assert_eq!(frame_decode(&frame_encode(&m)).unwrap(), m);
            }
        }
    }
}
