use super::{be64, hash_fields, hash_short, CryptoError, Digest};

/// Output of [`stream_encrypt`]. The tag binds key, nonce and body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CipherText {
    pub nonce: [u8; 32],
    pub body: Vec<u8>,
    pub tag: Digest,
}

fn apply_keystream(key: &Digest, nonce: &[u8; 32], data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len());
    for (i, chunk) in data.chunks(Digest::LEN).enumerate() {
        let block = hash_short(&[b"ks".as_slice(), key.as_bytes(), nonce, &be64(i as u64)]);
        out.extend(chunk.iter().zip(block.as_bytes()).map(|(a, b)| a ^ b));
    }
    out
}

fn tag(key: &Digest, nonce: &[u8; 32], body: &[u8]) -> Result<Digest, CryptoError> {
    hash_fields(&[b"tag".as_slice(), key.as_bytes(), nonce, body])
}

/// Encrypts with the hash-derived keystream and appends a keyed tag.
///
/// The body must fit a 16-bit length prefix because it is hashed as one
/// canonical field.
pub fn stream_encrypt(key: &Digest, nonce: &[u8; 32], pt: &[u8]) -> Result<CipherText, CryptoError> {
    let body = apply_keystream(key, nonce, pt);
    let tag = tag(key, nonce, &body)?;
    Ok(CipherText {
        nonce: *nonce,
        body,
        tag,
    })
}

/// Checks the tag first and only then releases the plaintext.
pub fn stream_decrypt(key: &Digest, ct: &CipherText) -> Result<Vec<u8>, CryptoError> {
    if tag(key, &ct.nonce, &ct.body)? != ct.tag {
        return Err(CryptoError::TagMismatch);
    }
    Ok(apply_keystream(key, &ct.nonce, &ct.body))
}
