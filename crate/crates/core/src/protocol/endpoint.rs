use std::collections::BTreeSet;

use super::frame::{MessageFrame, RawCertificate, FRAME_VERSION};
use super::setup::{link_key, scalar_from_label, LoginState, PublicParams, RsuSecret, SystemParams};
use super::{Channel, MsgType, ProtocolError, RejectReason};
use crate::crypto::{hash_short, schnorr::sign_with_public, schnorr_verify, Digest, GroupElement, GroupParams, Signature};

/// Accepted `(sender_pid, timestamp)` pairs within the freshness window.
#[derive(Debug, Clone)]
pub struct ReplayCache {
    horizon_ms: u64,
    entries: BTreeSet<(u64, Digest)>,
}

impl ReplayCache {
    pub fn new(horizon_ms: u64) -> Self {
        ReplayCache {
            horizon_ms,
            entries: BTreeSet::new(),
        }
    }

    /// Drops entries whose timestamp fell out of the window ending at `now`.
    pub fn evict(&mut self, now_ms: u64) {
        let floor = now_ms.saturating_sub(self.horizon_ms);
        self.entries = self.entries.split_off(&(floor, Digest::default()));
    }

    /// [`RejectReason::ReplayDetected`] if `(pid, t)` was already accepted.
    pub fn check(&mut self, pid: &Digest, t_ms: u64, now_ms: u64) -> Result<(), RejectReason> {
        self.evict(now_ms);
        if self.contains(pid, t_ms) {
            return Err(RejectReason::ReplayDetected);
        }
        Ok(())
    }

    /// Remembers an accepted `(pid, t)`.
    pub fn insert(&mut self, pid: &Digest, t_ms: u64) {
        self.entries.insert((t_ms, *pid));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, pid: &Digest, t_ms: u64) -> bool {
        self.entries.contains(&(t_ms, *pid))
    }
}

/// Key material learned from a verified frame.
#[derive(Debug, Clone, PartialEq)]
pub enum KeyMaterial {
    /// The MAC key shared with the peer (infrastructure channels).
    Symmetric(Digest),
    /// The peer's certified public key (V2V).
    PeerPublic(GroupElement),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifiedMessage {
    pub channel: Channel,
    pub msg_type: MsgType,
    pub sender_pid: Digest,
    pub timestamp_ms: u64,
    pub nonce: [u8; 32],
    pub payload: Vec<u8>,
    pub material: KeyMaterial,
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum EndpointKind {
    Vehicle { public: PublicParams, login: LoginState },
    Rsu { params: SystemParams, secret: RsuSecret },
    Cloud { params: SystemParams, id: Digest },
}

/// One protocol participant, able to build frames and verify frames
/// addressed to it.
#[derive(Debug, Clone)]
pub struct Endpoint {
    kind: EndpointKind,
    revoked: BTreeSet<Digest>,
}

impl Endpoint {
    pub fn vehicle(public: PublicParams, login: LoginState) -> Self {
        Self::from_kind(EndpointKind::Vehicle { public, login })
    }

    pub fn rsu(params: SystemParams, secret: RsuSecret) -> Self {
        Self::from_kind(EndpointKind::Rsu { params, secret })
    }

    pub fn cloud(params: SystemParams, id: Digest) -> Self {
        Self::from_kind(EndpointKind::Cloud { params, id })
    }

    fn from_kind(kind: EndpointKind) -> Self {
        Endpoint {
            kind,
            revoked: BTreeSet::new(),
        }
    }

    pub fn with_revoked(mut self, revoked: BTreeSet<Digest>) -> Self {
        self.revoked = revoked;
        self
    }

    pub fn kind(&self) -> &EndpointKind {
        &self.kind
    }

    pub fn role_name(&self) -> &'static str {
        match self.kind {
            EndpointKind::Vehicle { .. } => "vehicle",
            EndpointKind::Rsu { .. } => "rsu",
            EndpointKind::Cloud { .. } => "cloud",
        }
    }

    /// The identifier this endpoint puts in `sender_pid`.
    pub fn pid(&self) -> Digest {
        match &self.kind {
            EndpointKind::Vehicle { login, .. } => login.pid,
            EndpointKind::Rsu { secret, .. } => secret.rsu_id,
            EndpointKind::Cloud { id, .. } => *id,
        }
    }

    pub fn group(&self) -> &GroupParams {
        match &self.kind {
            EndpointKind::Vehicle { public, .. } => &public.group,
            EndpointKind::Rsu { params, .. } | EndpointKind::Cloud { params, .. } => params.group(),
        }
    }

    pub fn freshness_window_ms(&self) -> u64 {
        match &self.kind {
            EndpointKind::Vehicle { public, .. } => public.freshness_window_ms,
            EndpointKind::Rsu { params, .. } | EndpointKind::Cloud { params, .. } => {
                params.public().freshness_window_ms
            }
        }
    }

    /// Channels this endpoint takes part in, as sender or receiver.
    pub fn accepts(&self, channel: Channel) -> bool {
        matches!(
            (&self.kind, channel),
            (EndpointKind::Vehicle { .. }, Channel::V2V | Channel::V2R | Channel::V2VC)
                | (EndpointKind::Rsu { .. }, Channel::V2R | Channel::R2VC)
                | (EndpointKind::Cloud { .. }, Channel::V2VC | Channel::R2VC)
        )
    }

    /// MAC key shared with `peer` on an infrastructure channel.
    fn mac_key(&self, channel: Channel, peer: &Digest) -> Option<Digest> {
        match (&self.kind, channel) {
            (EndpointKind::Vehicle { login, .. }, Channel::V2R | Channel::V2VC) => {
                Some(link_key(&login.vehicle_secret, peer))
            }
            (EndpointKind::Rsu { params, secret }, Channel::V2R) => {
                Some(link_key(&params.vehicle_secret(peer), &secret.rsu_id))
            }
            (EndpointKind::Rsu { secret, .. }, Channel::R2VC) => Some(secret.k_infra),
            (EndpointKind::Cloud { params, id }, Channel::V2VC) => Some(link_key(&params.vehicle_secret(peer), id)),
            (EndpointKind::Cloud { params, .. }, Channel::R2VC) => Some(params.infra_key(peer)),
            _ => None,
        }
    }

    /// Builds an authenticated frame for `peer` (a scope id, RSU id or
    /// vehicle pid, depending on direction).
    pub fn make_frame(
        &self,
        channel: Channel,
        msg_type: MsgType,
        payload: &[u8],
        timestamp_ms: u64,
        nonce: [u8; 32],
        peer: &Digest,
    ) -> Result<MessageFrame, ProtocolError> {
        if payload.len() > u16::MAX as usize {
            return Err(ProtocolError::PayloadTooLong(payload.len()));
        }
        if !self.accepts(channel) {
            return Err(ProtocolError::ChannelNotPermitted {
                role: self.role_name(),
                channel,
            });
        }
        let mut frame = MessageFrame {
            version: FRAME_VERSION,
            msg_type,
            channel,
            sender_pid: self.pid(),
            timestamp_ms,
            nonce,
            payload: payload.to_vec(),
            auth: Vec::new(),
            cert: None,
        };
        match &self.kind {
            EndpointKind::Vehicle { public, login } if channel.is_signed() => {
                let group = &public.group;
                let digest = frame.signing_digest();
                let x_bytes = login.signing_key.to_bytes();
                let k = scalar_from_label(group, b"k", &hash_short(&[&x_bytes[..], digest.as_bytes()]).0);
                let sig = sign_with_public(group, &login.signing_key, &login.cert.public, digest.as_bytes(), &k)?;
                frame.auth = sig.encode(group);
                frame.cert = Some(login.cert.encode(group));
            }
            _ => {
                let key = self.mac_key(channel, peer).ok_or(ProtocolError::ChannelNotPermitted {
                    role: self.role_name(),
                    channel,
                })?;
                frame.auth = frame.mac(&key).0.to_vec();
            }
        }
        Ok(frame)
    }

    /// [`make_frame`](Self::make_frame) with `msg_type = Request`.
    pub fn make_request(
        &self,
        channel: Channel,
        payload: &[u8],
        timestamp_ms: u64,
        nonce: [u8; 32],
        receiver: &Digest,
    ) -> Result<MessageFrame, ProtocolError> {
        self.make_frame(channel, MsgType::Request, payload, timestamp_ms, nonce, receiver)
    }

    /// Decodes and verifies raw frame bytes.
    pub fn verify_bytes(
        &self,
        raw: &[u8],
        now_ms: u64,
        cache: &mut ReplayCache,
    ) -> Result<VerifiedMessage, RejectReason> {
        let frame = MessageFrame::decode(self.group(), raw)?;
        self.verify_request(&frame, now_ms, cache)
    }

    /// Checks, in order: channel, freshness, replay, authenticator,
    /// certificate, certificate expiry, revocation. The first failure wins.
    pub fn verify_request(
        &self,
        frame: &MessageFrame,
        now_ms: u64,
        cache: &mut ReplayCache,
    ) -> Result<VerifiedMessage, RejectReason> {
        if frame.version != FRAME_VERSION {
            return Err(RejectReason::Malformed);
        }
        if !self.accepts(frame.channel) {
            return Err(RejectReason::ChannelMismatch);
        }
        let group = self.group();
        let expected_trailer = MessageFrame::trailer_len(group, frame.channel);
        let actual_trailer = frame.auth.len() + frame.cert.as_ref().map_or(0, Vec::len);
        if actual_trailer != expected_trailer || frame.cert.is_some() != frame.channel.is_signed() {
            return Err(RejectReason::Malformed);
        }
        if now_ms.abs_diff(frame.timestamp_ms) > self.freshness_window_ms() {
            return Err(RejectReason::StaleTimestamp);
        }
        // Only frames that pass every check are remembered, so forgeries
        // claiming an honest pid cannot block that pid's genuine frames.
        cache.check(&frame.sender_pid, frame.timestamp_ms, now_ms)?;

        let material = if frame.channel.is_signed() {
            self.verify_signed(frame, now_ms)?
        } else {
            let key = self
                .mac_key(frame.channel, &frame.sender_pid)
                .ok_or(RejectReason::ChannelMismatch)?;
            if frame.mac(&key).as_bytes()[..] != frame.auth[..] {
                return Err(RejectReason::BadAuthenticator);
            }
            KeyMaterial::Symmetric(key)
        };
        if self.revoked.contains(&frame.sender_pid) {
            return Err(RejectReason::Revoked);
        }
        cache.insert(&frame.sender_pid, frame.timestamp_ms);
        Ok(VerifiedMessage {
            channel: frame.channel,
            msg_type: frame.msg_type,
            sender_pid: frame.sender_pid,
            timestamp_ms: frame.timestamp_ms,
            nonce: frame.nonce,
            payload: frame.payload.clone(),
            material,
        })
    }

    fn ra_public(&self) -> GroupElement {
        match &self.kind {
            EndpointKind::Vehicle { public, .. } => public.ra_public,
            EndpointKind::Rsu { params, .. } | EndpointKind::Cloud { params, .. } => params.public().ra_public,
        }
    }

    fn verify_signed(&self, frame: &MessageFrame, now_ms: u64) -> Result<KeyMaterial, RejectReason> {
        let group = self.group();
        let cert_raw = frame.cert.as_deref().ok_or(RejectReason::Malformed)?;
        let cert = RawCertificate::split(group, cert_raw).ok_or(RejectReason::Malformed)?;

        // Frame signature under the key the certificate claims.
        let public = group
            .decode_public_key(cert.public)
            .map_err(|_| RejectReason::BadAuthenticator)?;
        let sig = Signature::decode(group, &frame.auth).map_err(|_| RejectReason::BadAuthenticator)?;
        let digest = frame.signing_digest();
        if !schnorr_verify(group, &public, digest.as_bytes(), &sig).map_err(|_| RejectReason::BadAuthenticator)? {
            return Err(RejectReason::BadAuthenticator);
        }

        // Certificate chain to the RA, and binding to the sender.
        let ra_sig = Signature::decode(group, cert.ra_sig).map_err(|_| RejectReason::BadCertificate)?;
        let issued = schnorr_verify(group, &self.ra_public(), &cert.signed_message(), &ra_sig)
            .map_err(|_| RejectReason::BadCertificate)?;
        if !issued || cert.pid != frame.sender_pid {
            return Err(RejectReason::BadCertificate);
        }
        if cert.expiry_ms < now_ms {
            return Err(RejectReason::ExpiredCertificate);
        }
        Ok(KeyMaterial::PeerPublic(public))
    }

    /// The secret both ends feed into session-key derivation: the MAC key on
    /// infrastructure channels, `H("dh", x·X_peer)` on V2V.
    pub fn shared_secret(&self, material: &KeyMaterial) -> Result<Digest, ProtocolError> {
        match (material, &self.kind) {
            (KeyMaterial::Symmetric(k), _) => Ok(*k),
            (KeyMaterial::PeerPublic(peer), EndpointKind::Vehicle { public, login }) => {
                let group = &public.group;
                let dh = group.scalar_mul(peer, &login.signing_key)?;
                Ok(hash_short(&[b"dh".as_slice(), &group.encode(&dh)]))
            }
            (KeyMaterial::PeerPublic(_), _) => Err(ProtocolError::ChannelNotPermitted {
                role: self.role_name(),
                channel: Channel::V2V,
            }),
        }
    }

    /// Symmetric key for a frame this endpoint will send to `peer`; used by
    /// initiators before any response arrives.
    pub fn shared_secret_for(&self, channel: Channel, peer: &Digest, peer_public: Option<&GroupElement>) -> Result<Digest, ProtocolError> {
        if channel.is_signed() {
            let peer_public = peer_public.ok_or(ProtocolError::ChannelNotPermitted {
                role: self.role_name(),
                channel,
            })?;
            self.shared_secret(&KeyMaterial::PeerPublic(*peer_public))
        } else {
            self.mac_key(channel, peer).ok_or(ProtocolError::ChannelNotPermitted {
                role: self.role_name(),
                channel,
            })
        }
    }
}
