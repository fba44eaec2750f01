//! Hashing and word arithmetic shared by the VM, the proof and the chain.
//!
//! SHA-3 is FIPS-202 SHA3-256. FNV is the basis-free 64-bit mix
//! `fnv64(x, y) = (x * 0x100000001B3) ^ y` with a wrapping multiply.
//! Every hash-to-integer conversion is big-endian.

use std::fmt;

use sha3::{Digest, Sha3_256};

/// 256-bit VM word. All arithmetic used by the VM wraps modulo 2^256.
pub use ethnum::U256 as Word256;
/// Signed 256-bit integer, used for solution-space bounds.
pub use ethnum::I256;

/// 64-bit FNV aggregation state (`snapshot_i`, `state_digest`).
pub type Snapshot64 = u64;

/// 64-bit FNV prime.
pub const FNV_PRIME_64: u64 = 0x0000_0100_0000_01B3;

/// A 32-byte SHA3-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Hash256(pub [u8; 32]);

impl Hash256 {
    pub const ZERO: Hash256 = Hash256([0u8; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    /// The digest read as one big-endian 256-bit integer.
    pub fn to_word(&self) -> Word256 {
        Word256::from_be_bytes(self.0)
    }

    pub fn from_word(w: Word256) -> Self {
        Hash256(w.to_be_bytes())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s.trim()).ok()?;
        let arr: [u8; 32] = bytes.try_into().ok()?;
        Some(Hash256(arr))
    }
}

impl fmt::Debug for Hash256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hash256({})", self.to_hex())
    }
}

impl fmt::Display for Hash256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// SHA3-256 over `data`.
pub fn sha3(data: &[u8]) -> Hash256 {
    Hash256(Sha3_256::digest(data).into())
}

/// SHA3-256 over the concatenation of `parts`, without allocating the joined buffer.
pub fn sha3_concat(parts: &[&[u8]]) -> Hash256 {
    let mut hasher = Sha3_256::new();
    for p in parts {
        hasher.update(p);
    }
    Hash256(hasher.finalize().into())
}

#[inline]
pub fn fnv64(x: u64, y: u64) -> u64 {
    x.wrapping_mul(FNV_PRIME_64) ^ y
}

/// The four big-endian 64-bit groups `H[0..3]` of a digest.
pub fn hash_words(h: &Hash256) -> [u64; 4] {
    let mut out = [0u64; 4];
    for (i, chunk) in h.0.chunks_exact(8).enumerate() {
        out[i] = u64::from_be_bytes(chunk.try_into().expect("8-byte chunk"));
    }
    out
}

/// Inverse of [`hash_words`].
pub fn words_to_hash(words: [u64; 4]) -> Hash256 {
    let mut out = [0u8; 32];
    for (i, w) in words.iter().enumerate() {
        out[8 * i..8 * i + 8].copy_from_slice(&w.to_be_bytes());
    }
    Hash256(out)
}

/// Parses a decimal or `0x`-prefixed unsigned integer.
pub fn parse_word(s: &str) -> Option<Word256> {
    let s = s.trim();
    if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        if hex.is_empty() {
            return None;
        }
        Word256::from_str_radix(hex, 16).ok()
    } else {
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        Word256::from_str_radix(s, 10).ok()
    }
}

/// Parses a decimal or `0x`-prefixed signed integer (`-0x10` is accepted).
pub fn parse_signed(s: &str) -> Option<I256> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let mag = parse_word(body)?;
    if neg {
        if mag > Word256::ONE << 255 {
            return None;
        }
        Some(I256::from_le_bytes(mag.to_le_bytes()).wrapping_neg())
    } else {
        if mag >= Word256::ONE << 255 {
            return None;
        }
        Some(mag.as_i256())
    }
}

/// Parses a decimal or `0x`-prefixed `u64`.
pub fn parse_u64(s: &str) -> Option<u64> {
    let w = parse_word(s)?;
    (w <= Word256::from(u64::MAX)).then(|| w.as_u64())
}

/// Parses a decimal or `0x`-prefixed `u128`.
pub fn parse_u128(s: &str) -> Option<u128> {
    let w = parse_word(s)?;
    (w <= Word256::from(u128::MAX)).then(|| w.as_u128())
}
