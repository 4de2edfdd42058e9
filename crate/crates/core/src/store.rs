//! The cloud's encrypted record store.
//!
//! Records are stream-cipher ciphertexts tagged with deterministic keyword
//! tokens `H("tok", k_search, keyword)`. The uploader computes the tokens, so
//! the store only ever sees ciphertext and opaque digests. Search is an exact
//! token match through an inverted index. Query repetition and access
//! patterns are visible to the store.
//!
//! On disk, each record is `be32(len) | owner_pid | upload body`, where `len`
//! counts the owner pid and the body, and the body is the same
//! `canon(["up", nonce, be64(T), ct.nonce, ct.body, ct.tag, tokens...])`
//! carried in upload frames.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use thiserror::Error;

use crate::crypto::{be64, canon, hash_short, split_canon, stream_decrypt, stream_encrypt, CipherText, CryptoError, Digest};
use crate::protocol::{Channel, VerifiedMessage};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("a record needs at least one keyword")]
    EmptyKeywords,
    #[error("keywords must be non-empty")]
    EmptyKeyword,
    #[error("upload body does not parse")]
    MalformedUpload,
    #[error("record {0} already stored")]
    DuplicateRecordId(Digest),
    #[error("record {0} not found")]
    NotFound(Digest),
    #[error("store file is corrupt at byte {0}")]
    Corrupt(usize),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Bytes a record occupies in the store file besides ciphertext and tokens:
/// length prefix, owner pid, and the canon-encoded fixed upload fields.
pub const RECORD_OVERHEAD: usize = 4 + 32 + (2 + 2) + (2 + 32) + (2 + 8) + (2 + 32) + 2 + (2 + 32);
/// Bytes per keyword token in the store file (length prefix plus digest).
pub const TOKEN_COST: usize = 2 + 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedRecord {
    pub record_id: Digest,
    pub owner_pid: Digest,
    pub timestamp_ms: u64,
    pub nonce: [u8; 32],
    pub ct: CipherText,
    pub tokens: BTreeSet<Digest>,
}

impl EncryptedRecord {
    /// The upload body carried in Data frames and stored on disk.
    pub fn upload_body(&self) -> Result<Vec<u8>, StoreError> {
        let t = be64(self.timestamp_ms);
        let mut fields: Vec<&[u8]> = vec![
            b"up",
            &self.nonce,
            &t,
            &self.ct.nonce,
            &self.ct.body,
            self.ct.tag.as_bytes(),
        ];
        fields.extend(self.tokens.iter().map(|t| t.as_bytes().as_slice()));
        Ok(canon(&fields)?)
    }

    /// Parses an upload body on behalf of `owner_pid`.
    pub fn from_upload(owner_pid: Digest, body: &[u8]) -> Result<Self, StoreError> {
        let fields = split_canon(body).ok_or(StoreError::MalformedUpload)?;
        if fields.len() < 7 || fields[0] != b"up" {
            return Err(StoreError::MalformedUpload);
        }
        let fixed32 = |f: &[u8]| <[u8; 32]>::try_from(f).map_err(|_| StoreError::MalformedUpload);
        let nonce = fixed32(fields[1])?;
        let timestamp_ms = u64::from_be_bytes(fields[2].try_into().map_err(|_| StoreError::MalformedUpload)?);
        let ct = CipherText {
            nonce: fixed32(fields[3])?,
            body: fields[4].to_vec(),
            tag: Digest(fixed32(fields[5])?),
        };
        let mut tokens = BTreeSet::new();
        for f in &fields[6..] {
            if !tokens.insert(Digest(fixed32(f)?)) {
                return Err(StoreError::MalformedUpload);
            }
        }
        Ok(EncryptedRecord {
            record_id: record_id(&owner_pid, timestamp_ms, &nonce),
            owner_pid,
            timestamp_ms,
            nonce,
            ct,
            tokens,
        })
    }

    /// Size of this record in the store file.
    pub fn stored_len(&self) -> usize {
        RECORD_OVERHEAD + self.ct.body.len() + TOKEN_COST * self.tokens.len()
    }
}

pub fn record_id(owner_pid: &Digest, timestamp_ms: u64, nonce: &[u8; 32]) -> Digest {
    hash_short(&[b"rid".as_slice(), owner_pid.as_bytes(), &be64(timestamp_ms), nonce])
}

/// Per-owner data key, from the owner's long-term secret (`V` for vehicles,
/// the infrastructure key for RSUs).
pub fn data_key(owner_secret: &Digest) -> Digest {
    hash_short(&[b"dk".as_slice(), owner_secret.as_bytes()])
}

/// Per-owner search key.
pub fn search_key(owner_secret: &Digest) -> Digest {
    hash_short(&[b"sk2".as_slice(), owner_secret.as_bytes()])
}

pub fn trapdoor(k_search: &Digest, keyword: &[u8]) -> Result<Digest, StoreError> {
    if keyword.is_empty() {
        return Err(StoreError::EmptyKeyword);
    }
    Ok(crate::crypto::hash_fields(&[b"tok".as_slice(), k_search.as_bytes(), keyword])?)
}

#[allow(clippy::too_many_arguments)]
pub fn make_record(
    owner_pid: Digest,
    payload: &[u8],
    keywords: &[&[u8]],
    data_key: &Digest,
    k_search: &Digest,
    timestamp_ms: u64,
    nonce: [u8; 32],
) -> Result<EncryptedRecord, StoreError> {
    if keywords.is_empty() {
        return Err(StoreError::EmptyKeywords);
    }
    let tokens = keywords
        .iter()
        .map(|kw| trapdoor(k_search, kw))
        .collect::<Result<BTreeSet<_>, _>>()?;
    let ct = stream_encrypt(data_key, &nonce, payload)?;
    Ok(EncryptedRecord {
        record_id: record_id(&owner_pid, timestamp_ms, &nonce),
        owner_pid,
        timestamp_ms,
        nonce,
        ct,
        tokens,
    })
}

/// Records plus the inverted token index. Mutation takes `&mut self`, so a
/// reader never sees a half-applied insert.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StoreState {
    records: BTreeMap<Digest, EncryptedRecord>,
    index: BTreeMap<Digest, BTreeSet<Digest>>,
}

impl StoreState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &EncryptedRecord> {
        self.records.values()
    }

    pub fn get(&self, id: &Digest) -> Option<&EncryptedRecord> {
        self.records.get(id)
    }

    pub fn index(&self) -> &BTreeMap<Digest, BTreeSet<Digest>> {
        &self.index
    }

    pub fn insert(&mut self, record: EncryptedRecord) -> Result<Digest, StoreError> {
        let id = record.record_id;
        if self.records.contains_key(&id) {
            return Err(StoreError::DuplicateRecordId(id));
        }
        for token in &record.tokens {
            self.index.entry(*token).or_default().insert(id);
        }
        self.records.insert(id, record);
        Ok(id)
    }

    /// Stores the record carried by a verified R2VC or V2VC Data frame; the
    /// frame sender becomes the record owner.
    pub fn ingest(&mut self, verified: &VerifiedMessage) -> Result<Digest, StoreError> {
        if !matches!(verified.channel, Channel::R2VC | Channel::V2VC) {
            return Err(StoreError::MalformedUpload);
        }
        let record = EncryptedRecord::from_upload(verified.sender_pid, &verified.payload)?;
        self.insert(record)
    }

    /// Ids of all records carrying `token`, in ascending order.
    pub fn search(&self, token: &Digest) -> Vec<Digest> {
        self.index
            .get(token)
            .map(|ids| ids.iter().copied().collect())
            .unwrap_or_default()
    }

    pub fn retrieve(&self, id: &Digest, data_key: &Digest) -> Result<Vec<u8>, StoreError> {
        let record = self.records.get(id).ok_or(StoreError::NotFound(*id))?;
        Ok(stream_decrypt(data_key, &record.ct)?)
    }

    /// The index recomputed from the record map.
    pub fn rebuilt_index(&self) -> BTreeMap<Digest, BTreeSet<Digest>> {
        let mut index: BTreeMap<Digest, BTreeSet<Digest>> = BTreeMap::new();
        for (id, record) in &self.records {
            for token in &record.tokens {
                index.entry(*token).or_default().insert(*id);
            }
        }
        index
    }

    pub fn index_is_consistent(&self) -> bool {
        self.index == self.rebuilt_index()
    }

    /// Serialized size, equal to `to_bytes().len()`.
    pub fn storage_bytes(&self) -> usize {
        self.records.values().map(EncryptedRecord::stored_len).sum()
    }

    /// Records in record-id order.
    pub fn to_bytes(&self) -> Result<Vec<u8>, StoreError> {
        let mut out = Vec::with_capacity(self.storage_bytes());
        for record in self.records.values() {
            let body = record.upload_body()?;
            let len = (32 + body.len()) as u32;
            out.extend_from_slice(&len.to_be_bytes());
            out.extend_from_slice(record.owner_pid.as_bytes());
            out.extend_from_slice(&body);
        }
        Ok(out)
    }

    /// Parses a store file and rebuilds the index.
    pub fn from_bytes(raw: &[u8]) -> Result<Self, StoreError> {
        let mut store = StoreState::new();
        let mut pos = 0;
        while pos < raw.len() {
            let header = raw.get(pos..pos + 4).ok_or(StoreError::Corrupt(pos))?;
            let len = u32::from_be_bytes(header.try_into().expect("4 bytes")) as usize;
            let entry = raw.get(pos + 4..pos + 4 + len).ok_or(StoreError::Corrupt(pos))?;
            if len < 32 {
                return Err(StoreError::Corrupt(pos));
            }
            let owner = Digest::from_slice(&entry[..32]).expect("32 bytes");
            let record = EncryptedRecord::from_upload(owner, &entry[32..]).map_err(|_| StoreError::Corrupt(pos))?;
            store.insert(record)?;
            pos += 4 + len;
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::hash;
    use crate::protocol::MsgType;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn keys() -> (Digest, Digest) {
        let v = hash(b"owner secret");
        (data_key(&v), search_key(&v))
    }

    fn sample(owner: &[u8], t: u64, kws: &[&[u8]]) -> EncryptedRecord {
        let (dk, sk) = keys();
        make_record(hash(owner), b"payload", kws, &dk, &sk, t, [t as u8; 32]).unwrap()
    }

    #[test]
    fn record_id_vector() {
        // Computed with an independent script.
        let mut nonce = [0u8; 32];
        for (i, b) in nonce.iter_mut().enumerate() {
            *b = i as u8;
        }
        assert_eq!(
            record_id(&hash(b"owner"), 1_700_000_000_000, &nonce).to_hex(),
            "e662c8f160a08ca01a65fae1017ad04fd3696c4c9e51690298868f2b095df30f"
        );
    }

    #[test]
    fn round_trip_and_dedup() {
        let (dk, sk) = keys();
        let r = make_record(hash(b"o"), b"hello cloud", &[b"a", b"b", b"a"], &dk, &sk, 5, [9; 32]).unwrap();
        assert_eq!(r.tokens.len(), 2);
        assert_eq!(stream_decrypt(&dk, &r.ct).unwrap(), b"hello cloud");
        let again = make_record(hash(b"o"), b"hello cloud", &[b"a", b"b"], &dk, &sk, 5, [9; 32]).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn make_record_errors() {
        let (dk, sk) = keys();
        assert!(matches!(
            make_record(hash(b"o"), b"x", &[], &dk, &sk, 0, [0; 32]),
            Err(StoreError::EmptyKeywords)
        ));
        assert!(matches!(
            make_record(hash(b"o"), b"x", &[b""], &dk, &sk, 0, [0; 32]),
            Err(StoreError::EmptyKeyword)
        ));
        let huge = vec![b'k'; 1 << 16];
        assert!(matches!(
            make_record(hash(b"o"), b"x", &[&huge], &dk, &sk, 0, [0; 32]),
            Err(StoreError::Crypto(CryptoError::FieldTooLong(_)))
        ));
    }

    #[test]
    fn trapdoor_properties() {
        let (_, sk) = keys();
        let other = search_key(&hash(b"someone else"));
        assert_eq!(trapdoor(&sk, b"k").unwrap(), trapdoor(&sk, b"k").unwrap());
        let mut seen = BTreeSet::new();
        for i in 0..10_000 {
            let kw = format!("keyword-{i}");
            let t = trapdoor(&sk, kw.as_bytes()).unwrap();
            assert!(seen.insert(t));
            assert_ne!(t, trapdoor(&other, kw.as_bytes()).unwrap());
        }
        assert!(matches!(trapdoor(&sk, b""), Err(StoreError::EmptyKeyword)));
    }

    #[test]
    fn search_retrieve_and_duplicates() {
        let mut store = StoreState::new();
        let (dk, sk) = keys();
        let mut with_kw = Vec::new();
        for i in 0..10u64 {
            let kws: Vec<&[u8]> = if i % 3 == 0 && i > 0 { vec![b"hit", b"x"] } else { vec![b"x"] };
            let id = store.insert(sample(b"o", i, &kws)).unwrap();
            if kws.len() == 2 {
                with_kw.push(id);
            }
        }
        with_kw.sort();
        assert_eq!(with_kw.len(), 3);
        let tok = trapdoor(&sk, b"hit").unwrap();
        assert_eq!(store.search(&tok), with_kw);
        assert_eq!(store.search(&tok), store.search(&tok));
        assert!(store.search(&trapdoor(&sk, b"absent").unwrap()).is_empty());

        let before = store.clone();
        assert!(matches!(
            store.insert(sample(b"o", 3, &[b"hit"])),
            Err(StoreError::DuplicateRecordId(_))
        ));
        assert_eq!(store, before);

        assert_eq!(store.retrieve(&with_kw[0], &dk).unwrap(), b"payload");
        assert!(matches!(
            store.retrieve(&with_kw[0], &hash(b"wrong")),
            Err(StoreError::Crypto(CryptoError::TagMismatch))
        ));
        assert!(matches!(store.retrieve(&hash(b"nope"), &dk), Err(StoreError::NotFound(_))));
    }

    fn upload(channel: Channel, body: Vec<u8>) -> VerifiedMessage {
        VerifiedMessage {
            channel,
            msg_type: MsgType::Data,
            sender_pid: hash(b"o"),
            timestamp_ms: 1,
            nonce: [0; 32],
            payload: body,
            material: crate::protocol::KeyMaterial::Symmetric(Digest::default()),
        }
    }

    #[test]
    fn ingest_upload_bodies() {
        let rec = sample(b"o", 42, &[b"alpha", b"beta"]);
        let mut store = StoreState::new();
        let id = store.ingest(&upload(Channel::R2VC, rec.upload_body().unwrap())).unwrap();
        assert_eq!(id, rec.record_id);
        assert_eq!(store.get(&id), Some(&rec));
        assert!(matches!(
            store.ingest(&upload(Channel::V2VC, rec.upload_body().unwrap())),
            Err(StoreError::DuplicateRecordId(_))
        ));
        for bad in [vec![], b"garbage".to_vec(), canon(&[b"up".as_slice(), b"short"]).unwrap()] {
            assert!(matches!(
                store.ingest(&upload(Channel::V2VC, bad)),
                Err(StoreError::MalformedUpload)
            ));
        }
        assert!(matches!(
            store.ingest(&upload(Channel::V2R, rec.upload_body().unwrap())),
            Err(StoreError::MalformedUpload)
        ));
    }

    #[test]
    fn persistence_round_trip_and_size() {
        let mut store = StoreState::new();
        for i in 0..20u64 {
            let kws: Vec<&[u8]> = [b"a".as_slice(), b"b", b"c"][..(i as usize % 3) + 1].to_vec();
            store.insert(sample(b"o", i, &kws)).unwrap();
        }
        let bytes = store.to_bytes().unwrap();
        assert_eq!(bytes.len(), store.storage_bytes());
        let expected: usize = store
            .records()
            .map(|r| RECORD_OVERHEAD + r.ct.body.len() + TOKEN_COST * r.tokens.len())
            .sum();
        assert_eq!(bytes.len(), expected);
        assert_eq!(RECORD_OVERHEAD, 154);
        let back = StoreState::from_bytes(&bytes).unwrap();
        assert_eq!(back, store);
        assert!(back.index_is_consistent());
        assert!(matches!(StoreState::from_bytes(&bytes[..bytes.len() - 1]), Err(StoreError::Corrupt(_))));
    }

    #[test]
    fn linear_scan_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (dk, sk) = keys();
        let vocab: Vec<String> = (0..100).map(|i| format!("kw{i:03}")).collect();
        let mut store = StoreState::new();
        let mut plain: Vec<(Digest, BTreeSet<usize>)> = Vec::new();
        for i in 0..1000u64 {
            let picks: BTreeSet<usize> = (0..rng.gen_range(1..6)).map(|_| rng.gen_range(0..vocab.len())).collect();
            let kws: Vec<&[u8]> = picks.iter().map(|&k| vocab[k].as_bytes()).collect();
            let mut nonce = [0u8; 32];
            rng.fill(&mut nonce);
            let rec = make_record(hash(b"o"), &i.to_be_bytes(), &kws, &dk, &sk, i, nonce).unwrap();
            plain.push((store.insert(rec).unwrap(), picks));
        }
        for (k, kw) in vocab.iter().enumerate() {
            let mut want: Vec<Digest> = plain.iter().filter(|(_, s)| s.contains(&k)).map(|(id, _)| *id).collect();
            want.sort();
            assert_eq!(store.search(&trapdoor(&sk, kw.as_bytes()).unwrap()), want);
        }
        let bytes = store.to_bytes().unwrap();
        for kw in &vocab {
            assert!(!bytes.windows(kw.len()).any(|w| w == kw.as_bytes()));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn index_matches_rebuild(ops in prop::collection::vec((0u64..30, prop::collection::btree_set(0u8..8, 1..4)), 1..60)) {
            let mut store = StoreState::new();
            for (t, kws) in ops {
                let kws: Vec<Vec<u8>> = kws.into_iter().map(|k| vec![b'k', k]).collect();
                let refs: Vec<&[u8]> = kws.iter().map(Vec::as_slice).collect();
                let _ = store.insert(sample(b"o", t, &refs));
                prop_assert!(store.index_is_consistent());
            }
        }
    }
}
