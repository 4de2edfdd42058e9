//! Wire layout (all integers big-endian):
//!
//! ```text
//! version u8 | msg_type u8 | channel u8 | sender_pid [32] | timestamp_ms u64
//! | nonce [32] | payload_len u16 | payload | auth | cert (V2V only)
//! ```
//!
//! `auth` is a 32-byte MAC on infrastructure channels and an encoded
//! Schnorr signature on V2V. A certificate is
//! `pid [32] | public key | expiry_ms u64 | RA signature`.

use super::setup::{expiry_bytes, SystemParams};
use super::{Channel, MsgType, ProtocolError, RejectReason};
use crate::crypto::{hash_short, Digest, GroupElement, GroupParams, Signature};

pub const FRAME_VERSION: u8 = 0x01;
/// Bytes before the payload.
pub const FRAME_HEADER_LEN: usize = 3 + 32 + 8 + 32 + 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub pid: Digest,
    pub public: GroupElement,
    pub expiry_ms: u64,
    pub ra_sig: Signature,
}

impl Certificate {
    pub(crate) fn issue(
        params: &SystemParams,
        pid: Digest,
        public: GroupElement,
        expiry_ms: u64,
    ) -> Result<Self, ProtocolError> {
        let msg = cert_message(params.group(), &pid, &public, expiry_ms);
        let ra_sig = params.sign(&msg)?;
        Ok(Certificate {
            pid,
            public,
            expiry_ms,
            ra_sig,
        })
    }

    pub fn encoded_len(group: &GroupParams) -> usize {
        32 + group.element_len() + 8 + Signature::encoded_len(group)
    }

    /// The bytes the RA signs.
    pub fn signed_message(&self, group: &GroupParams) -> Vec<u8> {
        cert_message(group, &self.pid, &self.public, self.expiry_ms)
    }

    pub fn encode(&self, group: &GroupParams) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::encoded_len(group));
        out.extend_from_slice(self.pid.as_bytes());
        out.extend_from_slice(&group.encode(&self.public));
        out.extend_from_slice(&expiry_bytes(self.expiry_ms));
        out.extend_from_slice(&self.ra_sig.encode(group));
        out
    }
}

fn cert_message(group: &GroupParams, pid: &Digest, public: &GroupElement, expiry_ms: u64) -> Vec<u8> {
    crate::crypto::canon(&[
        b"cert".as_slice(),
        pid.as_bytes(),
        &group.encode(public),
        &expiry_bytes(expiry_ms),
    ])
    .expect("certificate fields are short")
}

/// Certificate fields as they appear on the wire, before any validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct RawCertificate<'a> {
    pub pid: Digest,
    pub public: &'a [u8],
    pub expiry_ms: u64,
    pub ra_sig: &'a [u8],
}

impl<'a> RawCertificate<'a> {
    pub(crate) fn split(group: &GroupParams, raw: &'a [u8]) -> Option<Self> {
        if raw.len() != Certificate::encoded_len(group) {
            return None;
        }
        let (pid, rest) = raw.split_at(32);
        let (public, rest) = rest.split_at(group.element_len());
        let (expiry, ra_sig) = rest.split_at(8);
        Some(RawCertificate {
            pid: Digest::from_slice(pid)?,
            public,
            expiry_ms: u64::from_be_bytes(expiry.try_into().ok()?),
            ra_sig,
        })
    }

    pub(crate) fn signed_message(&self) -> Vec<u8> {
        crate::crypto::canon(&[
            b"cert".as_slice(),
            self.pid.as_bytes(),
            self.public,
            &expiry_bytes(self.expiry_ms),
        ])
        .expect("certificate fields are short")
    }
}

/// A decoded frame. `auth` and `cert` are kept as raw bytes: their contents
/// are only interpreted during verification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageFrame {
    pub version: u8,
    pub msg_type: MsgType,
    pub channel: Channel,
    pub sender_pid: Digest,
    pub timestamp_ms: u64,
    pub nonce: [u8; 32],
    pub payload: Vec<u8>,
    pub auth: Vec<u8>,
    pub cert: Option<Vec<u8>>,
}

impl MessageFrame {
    /// Length of the authenticator (and certificate) trailer for `channel`.
    pub fn trailer_len(group: &GroupParams, channel: Channel) -> usize {
        if channel.is_signed() {
            Signature::encoded_len(group) + Certificate::encoded_len(group)
        } else {
            Digest::LEN
        }
    }

    pub fn encoded_len(&self) -> usize {
        FRAME_HEADER_LEN + self.payload.len() + self.auth.len() + self.cert.as_ref().map_or(0, Vec::len)
    }

    /// Canonical encoding of every field the authenticator covers.
    pub(crate) fn covered_fields(&self) -> [Vec<u8>; 7] {
        covered_fields(
            self.msg_type,
            self.channel,
            &self.sender_pid,
            self.timestamp_ms,
            &self.nonce,
            &self.payload,
        )
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.push(self.version);
        out.push(self.msg_type as u8);
        out.push(self.channel as u8);
        out.extend_from_slice(self.sender_pid.as_bytes());
        out.extend_from_slice(&self.timestamp_ms.to_be_bytes());
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&(self.payload.len() as u16).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out.extend_from_slice(&self.auth);
        if let Some(cert) = &self.cert {
            out.extend_from_slice(cert);
        }
        out
    }

    /// Parses the fixed layout. Any length or enum inconsistency is
    /// [`RejectReason::Malformed`].
    pub fn decode(group: &GroupParams, raw: &[u8]) -> Result<Self, RejectReason> {
        use RejectReason::Malformed;
        if raw.len() < FRAME_HEADER_LEN {
            return Err(Malformed);
        }
        let version = raw[0];
        if version != FRAME_VERSION {
            return Err(Malformed);
        }
        let msg_type = MsgType::from_byte(raw[1]).ok_or(Malformed)?;
        let channel = Channel::from_byte(raw[2]).ok_or(Malformed)?;
        let sender_pid = Digest::from_slice(&raw[3..35]).ok_or(Malformed)?;
        let timestamp_ms = u64::from_be_bytes(raw[35..43].try_into().map_err(|_| Malformed)?);
        let nonce: [u8; 32] = raw[43..75].try_into().map_err(|_| Malformed)?;
        let payload_len = u16::from_be_bytes([raw[75], raw[76]]) as usize;
        let rest = &raw[FRAME_HEADER_LEN..];
        if rest.len() != payload_len + Self::trailer_len(group, channel) {
            return Err(Malformed);
        }
        let (payload, trailer) = rest.split_at(payload_len);
        let (auth, cert) = if channel.is_signed() {
            let (a, c) = trailer.split_at(Signature::encoded_len(group));
            (a.to_vec(), Some(c.to_vec()))
        } else {
            (trailer.to_vec(), None)
        };
        Ok(MessageFrame {
            version,
            msg_type,
            channel,
            sender_pid,
            timestamp_ms,
            nonce,
            payload: payload.to_vec(),
            auth,
            cert,
        })
    }

    /// Digest signed on V2V: `H(canon(covered fields))`.
    pub fn signing_digest(&self) -> Digest {
        hash_short(&self.covered_fields())
    }

    pub(crate) fn mac(&self, key: &Digest) -> Digest {
        let fields = self.covered_fields();
        let mut all: Vec<&[u8]> = vec![b"mac".as_slice(), key.as_bytes()];
        all.extend(fields.iter().map(Vec::as_slice));
        hash_short(&all)
    }
}

pub(crate) fn covered_fields(
    msg_type: MsgType,
    channel: Channel,
    pid: &Digest,
    timestamp_ms: u64,
    nonce: &[u8; 32],
    payload: &[u8],
) -> [Vec<u8>; 7] {
    [
        vec![FRAME_VERSION],
        vec![msg_type as u8],
        vec![channel as u8],
        pid.0.to_vec(),
        timestamp_ms.to_be_bytes().to_vec(),
        nonce.to_vec(),
        payload.to_vec(),
    ]
}
