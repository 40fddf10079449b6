//! The block cipher keyed by SUC responses, and the CBC wrapper that carries
//! fresh responses during an update.

use thiserror::Error;

pub const BLOCK_BYTES: usize = 8;

/// An invertible 64-bit block cipher keyed by a response.
pub trait CipherE: Send + Sync {
    fn encrypt(&self, key: &[u8], block: u64) -> u64;
    fn decrypt(&self, key: &[u8], block: u64) -> u64;
}

/// 32-round Feistel network over two 32-bit halves. The key is the first
/// 128 bits of the response, zero-padded, read as four big-endian words.
#[derive(Clone, Copy, Debug, Default)]
pub struct ERef;

const ROUNDS: u32 = 32;
const DELTA: u32 = 0x9E37_79B9;

fn key_words(key: &[u8]) -> [u32; 4] {
    let mut k = [0u8; 16];
    let n = key.len().min(16);
    k[..n].copy_from_slice(&key[..n]);
    std::array::from_fn(|i| {
        u32::from_be_bytes([k[4 * i], k[4 * i + 1], k[4 * i + 2], k[4 * i + 3]])
    })
}

#[inline]
fn round_fn(half: u32, k: &[u32; 4], r: u32) -> u32 {
    let rk = k[(r % 4) as usize] ^ r.wrapping_mul(DELTA);
    half.wrapping_add(rk).rotate_left(r % 31 + 1)
}

impl CipherE for ERef {
    fn encrypt(&self, key: &[u8], block: u64) -> u64 {
        let k = key_words(key);
        let (mut l, mut r) = ((block >> 32) as u32, block as u32);
        for round in 0..ROUNDS {
            (l, r) = (r, l ^ round_fn(r, &k, round));
        }
        (l as u64) << 32 | r as u64
    }

    fn decrypt(&self, key: &[u8], block: u64) -> u64 {
        let k = key_words(key);
        let (mut l, mut r) = ((block >> 32) as u32, block as u32);
        for round in (0..ROUNDS).rev() {
            (l, r) = (r ^ round_fn(l, &k, round), l);
        }
        (l as u64) << 32 | r as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SealError {
    #[error("ciphertext length {0} is not a positive multiple of the block size")]
    Length(usize),
    #[error("bad padding")]
    Padding,
    #[error("checksum mismatch")]
    Checksum,
}

/// CBC encryption of `data || crc32(data)` with 1..=8 bytes of length padding.
pub fn seal(cipher: &dyn CipherE, key: &[u8], iv: u64, data: &[u8]) -> Vec<u8> {
    let mut plain = data.to_vec();
    plain.extend_from_slice(&crc32fast::hash(data).to_be_bytes());
    let pad = BLOCK_BYTES - plain.len() % BLOCK_BYTES;
    plain.extend(std::iter::repeat_n(pad as u8, pad));
    let mut chain = iv;
    let mut out = Vec::with_capacity(plain.len());
    for block in plain.chunks_exact(BLOCK_BYTES) {
        chain = cipher.encrypt(key, u64::from_be_bytes(block.try_into().unwrap()) ^ chain);
        out.extend_from_slice(&chain.to_be_bytes());
    }
    plain.fill(0);
    out
}

pub fn open(
    cipher: &dyn CipherE,
    key: &[u8],
    iv: u64,
    sealed: &[u8],
) -> Result<Vec<u8>, SealError> {
    if sealed.is_empty() || sealed.len() % BLOCK_BYTES != 0 {
        return Err(SealError::Length(sealed.len()));
    }
    let mut chain = iv;
    let mut plain = Vec::with_capacity(sealed.len());
    for block in sealed.chunks_exact(BLOCK_BYTES) {
        let c = u64::from_be_bytes(block.try_into().unwrap());
        plain.extend_from_slice(&(cipher.decrypt(key, c) ^ chain).to_be_bytes());
        chain = c;
    }
    let pad = *plain.last().unwrap() as usize;
    if !(1..=BLOCK_BYTES).contains(&pad)
        || plain.len() < pad + 4
        || !plain[plain.len() - pad..]
            .iter()
            .all(|&b| b as usize == pad)
    {
        return Err(SealError::Padding);
    }
    plain.truncate(plain.len() - pad);
    let crc = u32::from_be_bytes(plain[plain.len() - 4..].try_into().unwrap());
    plain.truncate(plain.len() - 4);
    if crc32fast::hash(&plain) != crc {
        plain.fill(0);
        return Err(SealError::Checksum);
    }
    Ok(plain)
}
