use super::endpoint::VerifiedMessage;
use super::{MsgType, RejectReason};
use crate::crypto::{be64, hash_short, Digest};

/// A key agreed by one request/response exchange.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionKey {
    pub key: Digest,
    pub established_at_ms: u64,
    pub peer_pid: Digest,
}

/// `SK = H("SK", shared, nonce_s, nonce_r, T)`, where `T` is the response
/// timestamp. Both ends compute the same value.
pub fn derive_session_key(
    shared: &Digest,
    nonce_s: &[u8; 32],
    nonce_r: &[u8; 32],
    timestamp_ms: u64,
    peer_pid: Digest,
) -> SessionKey {
    let key = hash_short(&[
        b"SK".as_slice(),
        shared.as_bytes(),
        nonce_s,
        nonce_r,
        &be64(timestamp_ms),
    ]);
    SessionKey {
        key,
        established_at_ms: timestamp_ms,
        peer_pid,
    }
}

/// Payload of the optional key-confirmation frame.
pub fn confirm_payload(sk: &SessionKey, timestamp_ms: u64) -> Digest {
    hash_short(&[b"confirm".as_slice(), sk.key.as_bytes(), &be64(timestamp_ms)])
}

/// Checks a verified key-confirmation frame against the local session key.
pub fn check_confirm(sk: &SessionKey, msg: &VerifiedMessage) -> Result<(), RejectReason> {
    if msg.msg_type != MsgType::KeyConfirm || msg.sender_pid != sk.peer_pid {
        return Err(RejectReason::ConfirmMismatch);
    }
    if msg.payload[..] != confirm_payload(sk, msg.timestamp_ms).0[..] {
        return Err(RejectReason::ConfirmMismatch);
    }
    Ok(())
}
