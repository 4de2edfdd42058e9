//! Cryptographic primitives: SHA-256 hashing, XOR, injective field
//! encoding, a prime-order group abstraction, Schnorr signatures with batch
//! verification, and a hash-based authenticated stream cipher.
//!
//! Every function here is a pure function of its inputs. Operation counts
//! are reported to [`crate::metrics`] as a side channel that never feeds
//! back into any output.

mod group;
pub(crate) mod schnorr;
mod stream;

use std::fmt;

use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::metrics::{self, OpKind};

pub use group::{GroupElement, GroupKind, GroupParams, GroupScalar};
pub use schnorr::{batch_verify, schnorr_sign, schnorr_verify, BatchItem, Signature};
pub use stream::{stream_decrypt, stream_encrypt, CipherText};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("operands differ in length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("field of {0} bytes does not fit a 16-bit length prefix")]
    FieldTooLong(usize),
    #[error("invalid group element")]
    InvalidElement,
    #[error("invalid group parameters: {0}")]
    InvalidGroup(String),
    #[error("scalar must be nonzero")]
    ZeroScalar,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("authentication tag mismatch")]
    TagMismatch,
    #[error("malformed encoding")]
    Malformed,
}

/// A 32-byte SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const LEN: usize = 32;

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let raw = hex::decode(s.trim()).ok()?;
        Self::from_slice(&raw)
    }

    pub fn from_slice(raw: &[u8]) -> Option<Self> {
        <[u8; 32]>::try_from(raw).ok().map(Digest)
    }
}

impl AsRef<[u8]> for Digest {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// SHA-256 of `data`.
pub fn hash(data: &[u8]) -> Digest {
    metrics::record(OpKind::Hash);
    Digest(Sha256::digest(data).into())
}

pub fn xor(a: &[u8], b: &[u8]) -> Result<Vec<u8>, CryptoError> {
    if a.len() != b.len() {
        return Err(CryptoError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    metrics::record(OpKind::Xor);
    Ok(a.iter().zip(b).map(|(x, y)| x ^ y).collect())
}

/// Fixed-width XOR of two 32-byte strings.
pub fn xor32(a: &[u8; 32], b: &[u8; 32]) -> [u8; 32] {
    metrics::record(OpKind::Xor);
    let mut out = [0u8; 32];
    for (o, (x, y)) in out.iter_mut().zip(a.iter().zip(b)) {
        *o = x ^ y;
    }
    out
}

/// Length-prefixed concatenation: each field is emitted as a big-endian
/// `u16` length followed by its bytes. Injective over field lists.
pub fn canon<F: AsRef<[u8]>>(fields: &[F]) -> Result<Vec<u8>, CryptoError> {
    let total: usize = fields.iter().map(|f| f.as_ref().len() + 2).sum();
    let mut out = Vec::with_capacity(total);
    for field in fields {
        let field = field.as_ref();
        let len = u16::try_from(field.len()).map_err(|_| CryptoError::FieldTooLong(field.len()))?;
        out.extend_from_slice(&len.to_be_bytes());
        out.extend_from_slice(field);
    }
    Ok(out)
}

/// Inverse of [`canon`]. `None` if a length prefix overruns the input.
pub fn split_canon(mut raw: &[u8]) -> Option<Vec<&[u8]>> {
    let mut fields = Vec::new();
    while !raw.is_empty() {
        if raw.len() < 2 {
            return None;
        }
        let len = u16::from_be_bytes([raw[0], raw[1]]) as usize;
        let rest = &raw[2..];
        if rest.len() < len {
            return None;
        }
        fields.push(&rest[..len]);
        raw = &rest[len..];
    }
    Some(fields)
}

/// `hash(canon(fields))`.
pub fn hash_fields<F: AsRef<[u8]>>(fields: &[F]) -> Result<Digest, CryptoError> {
    Ok(hash(&canon(fields)?))
}

/// `hash(canon(fields))` for fields known to be short (labels, digests,
/// fixed-width integers). Panics only if a caller passes a field of 64 KiB or
/// more, which is a programming error at every call site.
pub(crate) fn hash_short<F: AsRef<[u8]>>(fields: &[F]) -> Digest {
    hash_fields(fields).expect("fixed-width fields fit a 16-bit length prefix")
}

pub fn be64(v: u64) -> [u8; 8] {
    v.to_be_bytes()
}
