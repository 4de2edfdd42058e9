//! The message protocol: RA setup, vehicle and RSU registration, login, and
//! the request / response / key-confirm exchange on the four channels.
//!
//! Infrastructure channels (V2R, V2VC, R2VC) are authenticated with MACs
//! under keys the RA's deployed infrastructure can re-derive from a sender's
//! pseudo-identity. Vehicle-to-vehicle frames are Schnorr-signed and carry an
//! RA-issued certificate, since peer vehicles share no secret.

mod endpoint;
mod frame;
mod session;
mod setup;

use std::fmt;

use thiserror::Error;

use crate::crypto::CryptoError;

pub use endpoint::{Endpoint, EndpointKind, KeyMaterial, ReplayCache, VerifiedMessage};
pub use frame::{Certificate, MessageFrame, FRAME_HEADER_LEN, FRAME_VERSION};
pub use session::{check_confirm, confirm_payload, derive_session_key, SessionKey};
pub use setup::{
    login, ra_init, LoginState, LoginVerifier, Obu, PublicParams, Registrar, RsuSecret, SystemParams,
    TpdRecord, VerifierMode, DEFAULT_FRESHNESS_MS,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("invalid system parameters: {0}")]
    InvalidParams(String),
    #[error("identity, password and RSU identifiers must be non-empty")]
    EmptyCredential,
    #[error("identity or password rejected")]
    BadCredentials,
    #[error("payload of {0} bytes exceeds the 16-bit length field")]
    PayloadTooLong(usize),
    #[error("OBU has no active login")]
    NotLoggedIn,
    #[error("{role} endpoints cannot send on {channel}")]
    ChannelNotPermitted { role: &'static str, channel: Channel },
    #[error("certificate expiry {expiry_ms} is not after issue time {now_ms}")]
    ExpiryInPast { expiry_ms: u64, now_ms: u64 },
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Channel {
    V2V = 0x01,
    V2R = 0x02,
    R2VC = 0x03,
    V2VC = 0x04,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::V2V, Channel::V2R, Channel::R2VC, Channel::V2VC];

    pub fn from_byte(b: u8) -> Option<Self> {
        Channel::ALL.into_iter().find(|c| *c as u8 == b)
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::V2V => "V2V",
            Channel::V2R => "V2R",
            Channel::R2VC => "R2VC",
            Channel::V2VC => "V2VC",
        }
    }

    /// Whether frames on this channel are signed (rather than MACed).
    pub fn is_signed(self) -> bool {
        self == Channel::V2V
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Channel::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown channel {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MsgType {
    Request = 0x01,
    Response = 0x02,
    KeyConfirm = 0x03,
    Data = 0x04,
}

impl MsgType {
    pub fn from_byte(b: u8) -> Option<Self> {
        [MsgType::Request, MsgType::Response, MsgType::KeyConfirm, MsgType::Data]
            .into_iter()
            .find(|m| *m as u8 == b)
    }
}

/// Why a receiver refused a frame. Variants are listed in the order the
/// checks run.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RejectReason {
    #[error("frame does not parse")]
    Malformed,
    #[error("receiver does not accept this channel")]
    ChannelMismatch,
    #[error("timestamp outside the freshness window")]
    StaleTimestamp,
    #[error("(sender, timestamp) already seen")]
    ReplayDetected,
    #[error("authenticator does not verify")]
    BadAuthenticator,
    #[error("certificate not issued by the RA")]
    BadCertificate,
    #[error("certificate expired")]
    ExpiredCertificate,
    #[error("sender pseudo-identity revoked")]
    Revoked,
    #[error("key confirmation mismatch")]
    ConfirmMismatch,
    #[error("authentic frame refused by the application")]
    Unprocessable,
}

impl RejectReason {
    pub const ALL: [RejectReason; 10] = [
        RejectReason::Malformed,
        RejectReason::ChannelMismatch,
        RejectReason::StaleTimestamp,
        RejectReason::ReplayDetected,
        RejectReason::BadAuthenticator,
        RejectReason::BadCertificate,
        RejectReason::ExpiredCertificate,
        RejectReason::Revoked,
        RejectReason::ConfirmMismatch,
        RejectReason::Unprocessable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RejectReason::Malformed => "Malformed",
            RejectReason::ChannelMismatch => "ChannelMismatch",
            RejectReason::StaleTimestamp => "StaleTimestamp",
            RejectReason::ReplayDetected => "ReplayDetected",
            RejectReason::BadAuthenticator => "BadAuthenticator",
            RejectReason::BadCertificate => "BadCertificate",
            RejectReason::ExpiredCertificate => "ExpiredCertificate",
            RejectReason::Revoked => "Revoked",
            RejectReason::ConfirmMismatch => "ConfirmMismatch",
            RejectReason::Unprocessable => "Unprocessable",
        }
    }
}
