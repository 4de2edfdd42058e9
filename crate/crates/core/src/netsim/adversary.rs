//! Byte-level attack transforms. Nothing here touches key material: every
//! function maps observed wire bytes (plus adversary randomness) to new
//! wire bytes.

use rand::Rng;

use crate::protocol::{Channel, MsgType, FRAME_HEADER_LEN, FRAME_VERSION};

/// Byte range of the nonce field.
pub const NONCE_RANGE: std::ops::Range<usize> = 43..75;

/// Flips each listed bit, counting from the most significant bit of byte 0.
/// Positions wrap around the frame length.
pub fn flip_bits(frame: &[u8], bits: &[usize]) -> Vec<u8> {
    let mut out = frame.to_vec();
    if out.is_empty() {
        return out;
    }
    for &b in bits {
        let b = b % (out.len() * 8);
        out[b / 8] ^= 0x80 >> (b % 8);
    }
    out
}

/// Overwrites the nonce field; frames too short to carry one are returned
/// unchanged.
pub fn substitute_nonce(frame: &[u8], nonce: &[u8; 32]) -> Vec<u8> {
    let mut out = frame.to_vec();
    if out.len() >= NONCE_RANGE.end {
        out[NONCE_RANGE].copy_from_slice(nonce);
    }
    out
}

/// Certificate bytes of an observed V2V frame: everything after the
/// payload and a `sig_len`-byte signature.
pub fn captured_cert(frame: &[u8], sig_len: usize) -> Option<&[u8]> {
    if frame.len() < FRAME_HEADER_LEN || frame[2] != Channel::V2V as u8 {
        return None;
    }
    let payload_len = u16::from_be_bytes([frame[75], frame[76]]) as usize;
    frame.get(FRAME_HEADER_LEN + payload_len + sig_len..)
}

/// A request frame claiming `pid`, with a random payload and authenticator.
/// On V2V the trailer is `auth_len` random bytes followed by `cert` (or
/// `cert_len` random bytes when nothing was captured).
#[allow(clippy::too_many_arguments)]
pub fn forge_request(
    rng: &mut impl Rng,
    channel: Channel,
    pid: &[u8; 32],
    timestamp_ms: u64,
    payload_len: usize,
    auth_len: usize,
    cert: Option<&[u8]>,
    cert_len: usize,
) -> Vec<u8> {
    let mut out = vec![FRAME_VERSION, MsgType::Request as u8, channel as u8];
    out.extend_from_slice(pid);
    out.extend_from_slice(&timestamp_ms.to_be_bytes());
    let mut nonce = [0u8; 32];
    rng.fill(&mut nonce);
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&(payload_len as u16).to_be_bytes());
    let mut random = |n: usize, out: &mut Vec<u8>| {
        let start = out.len();
        out.resize(start + n, 0);
        rng.fill(&mut out[start..]);
    };
    random(payload_len, &mut out);
    random(auth_len, &mut out);
    if channel.is_signed() {
        match cert {
            Some(c) => out.extend_from_slice(c),
            None => random(cert_len, &mut out),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn flips_msb_first() {
        assert_eq!(flip_bits(&[0, 0], &[0]), vec![0x80, 0]);
        assert_eq!(flip_bits(&[0, 0], &[15]), vec![0, 0x01]);
        assert_eq!(flip_bits(&[0, 0], &[16]), vec![0x80, 0]);
        assert_eq!(flip_bits(&[0xff], &[3, 3]), vec![0xff]);
    }

    #[test]
    fn nonce_substitution_touches_only_nonce() {
        let frame: Vec<u8> = (0..120u8).collect();
        let out = substitute_nonce(&frame, &[0xee; 32]);
        assert_eq!(&out[..43], &frame[..43]);
        assert_eq!(&out[43..75], &[0xee; 32]);
        assert_eq!(&out[75..], &frame[75..]);
        assert_eq!(substitute_nonce(&[1, 2, 3], &[0; 32]), vec![1, 2, 3]);
    }

    #[test]
    fn forged_frame_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = forge_request(&mut rng, Channel::V2V, &[7; 32], 5, 10, 65, Some(&[9; 3]), 3);
        assert_eq!(f.len(), FRAME_HEADER_LEN + 10 + 65 + 3);
        assert_eq!(captured_cert(&f, 65), Some(&[9u8; 3][..]));
        let f = forge_request(&mut rng, Channel::V2R, &[7; 32], 5, 0, 32, None, 0);
        assert_eq!(f.len(), FRAME_HEADER_LEN + 32);
        assert_eq!(captured_cert(&f, 65), None);
    }
}
