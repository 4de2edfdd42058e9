use std::collections::{BTreeMap, BTreeSet};

use super::frame::Certificate;
use super::ProtocolError;
use crate::crypto::{
    be64, hash_short, schnorr::sign_with_public, xor32, Digest, GroupElement, GroupParams, GroupScalar,
};

/// Freshness window used when a scenario does not set one.
pub const DEFAULT_FRESHNESS_MS: u64 = 300;

/// `H(label, data) mod q`, rehashing the digest under the same label until
/// the result is nonzero.
pub(crate) fn scalar_from_label(group: &GroupParams, label: &[u8], data: &[u8]) -> GroupScalar {
    let mut d = hash_short(&[label, data]);
    loop {
        let s = group.scalar_from_digest(&d);
        if !s.is_zero() {
            return s;
        }
        d = hash_short(&[label, d.as_bytes()]);
    }
}

pub(crate) fn link_key(vehicle_secret: &Digest, scope: &Digest) -> Digest {
    hash_short(&[b"link".as_slice(), vehicle_secret.as_bytes(), scope.as_bytes()])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VerifierMode {
    /// Full 32-byte login verifier.
    #[default]
    Exact,
    /// Verifier truncated to its low byte, so a stolen TPD matches about one
    /// password in 256.
    Fuzzy,
}

/// The RA's view: master secret plus public data.
#[derive(Debug, Clone)]
pub struct SystemParams {
    master_secret: GroupScalar,
    public: PublicParams,
    verifier_mode: VerifierMode,
}

/// What every OBU is provisioned with.
#[derive(Debug, Clone, PartialEq)]
pub struct PublicParams {
    pub group: GroupParams,
    pub ra_public: GroupElement,
    pub freshness_window_ms: u64,
}

/// RA setup. The master secret is `H("ra", seed) mod q`, so one seed always
/// yields the same parameters.
pub fn ra_init(seed: &[u8; 32], group: GroupParams, freshness_window_ms: u64) -> Result<SystemParams, ProtocolError> {
    if freshness_window_ms == 0 {
        return Err(ProtocolError::InvalidParams("freshness window must be positive".into()));
    }
    let master_secret = scalar_from_label(&group, b"ra", seed);
    let ra_public = group.scalar_mul(&group.generator(), &master_secret)?;
    Ok(SystemParams {
        master_secret,
        public: PublicParams {
            group,
            ra_public,
            freshness_window_ms,
        },
        verifier_mode: VerifierMode::Exact,
    })
}

impl SystemParams {
    pub fn with_verifier_mode(mut self, mode: VerifierMode) -> Self {
        self.verifier_mode = mode;
        self
    }

    pub fn verifier_mode(&self) -> VerifierMode {
        self.verifier_mode
    }

    pub fn public(&self) -> &PublicParams {
        &self.public
    }

    pub fn group(&self) -> &GroupParams {
        &self.public.group
    }

    pub fn master_secret(&self) -> &GroupScalar {
        &self.master_secret
    }

    fn secret_bytes(&self) -> [u8; 32] {
        self.master_secret.to_bytes()
    }

    pub fn pseudo_identity(&self, id: &[u8]) -> Digest {
        hash_short(&[b"pid".as_slice(), id, &self.secret_bytes()])
    }

    /// `V` for a registered vehicle; recomputable by anyone holding the
    /// master secret.
    pub fn vehicle_secret(&self, pid: &Digest) -> Digest {
        hash_short(&[b"v".as_slice(), pid.as_bytes(), &self.secret_bytes()])
    }

    pub fn infra_key(&self, rsu_id: &Digest) -> Digest {
        hash_short(&[b"infra".as_slice(), rsu_id.as_bytes(), &self.secret_bytes()])
    }

    pub(crate) fn sign(&self, msg: &[u8]) -> Result<crate::crypto::Signature, ProtocolError> {
        let group = self.group();
        let k = scalar_from_label(group, b"k", &hash_short(&[&self.secret_bytes()[..], msg]).0);
        Ok(sign_with_public(group, &self.master_secret, &self.public.ra_public, msg, &k)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LoginVerifier {
    Exact(Digest),
    Fuzzy(u8),
}

impl LoginVerifier {
    fn matches(&self, candidate: &Digest) -> bool {
        match self {
            LoginVerifier::Exact(b) => b == candidate,
            LoginVerifier::Fuzzy(b) => *b == candidate.0[31],
        }
    }
}

/// Secret material installed in a vehicle at registration. Nothing in it is
/// usable without the owner's (ID, PW).
#[derive(Debug, Clone, PartialEq)]
pub struct TpdRecord {
    pub pid: Digest,
    /// `V ⊕ H("mask", ID, PW)`.
    pub masked_secret: [u8; 32],
    pub verifier: LoginVerifier,
    pub cert: Certificate,
    /// Signing key under the same password-derived pad.
    pub masked_signing_key: [u8; 32],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RsuSecret {
    pub rsu_id: Digest,
    pub k_infra: Digest,
}

/// The registration authority: issues parameters, TPD records, RSU keys and
/// keeps the identity → pseudo-identity map used for revocation.
#[derive(Debug, Clone)]
pub struct Registrar {
    params: SystemParams,
    vehicles: BTreeMap<Vec<u8>, Digest>,
    revoked: BTreeSet<Digest>,
}

fn mask_pad(id: &[u8], pw: &[u8]) -> Digest {
    hash_short(&[b"mask".as_slice(), id, pw])
}

fn verifier_digest(id: &[u8], pw: &[u8], v: &Digest) -> Digest {
    hash_short(&[b"ver".as_slice(), id, pw, v.as_bytes()])
}

impl Registrar {
    pub fn new(params: SystemParams) -> Self {
        Registrar {
            params,
            vehicles: BTreeMap::new(),
            revoked: BTreeSet::new(),
        }
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn register_vehicle(
        &mut self,
        id: &[u8],
        pw: &[u8],
        expiry_ms: u64,
        now_ms: u64,
    ) -> Result<TpdRecord, ProtocolError> {
        if id.is_empty() || pw.is_empty() {
            return Err(ProtocolError::EmptyCredential);
        }
        if expiry_ms <= now_ms {
            return Err(ProtocolError::ExpiryInPast { expiry_ms, now_ms });
        }
        let p = &self.params;
        let group = p.group();
        let pid = p.pseudo_identity(id);
        let v = p.vehicle_secret(&pid);
        let pad = mask_pad(id, pw);
        let b = verifier_digest(id, pw, &v);
        let verifier = match p.verifier_mode {
            VerifierMode::Exact => LoginVerifier::Exact(b),
            VerifierMode::Fuzzy => LoginVerifier::Fuzzy(b.0[31]),
        };
        let x = scalar_from_label(group, b"sk", v.as_bytes());
        let public = group.scalar_mul(&group.generator(), &x)?;
        let cert = Certificate::issue(p, pid, public, expiry_ms)?;
        self.vehicles.insert(id.to_vec(), pid);
        Ok(TpdRecord {
            pid,
            masked_secret: xor32(&v.0, &pad.0),
            verifier,
            cert,
            masked_signing_key: xor32(&x.to_bytes(), &pad.0),
        })
    }

    pub fn register_rsu(&self, rsu_id_raw: &[u8]) -> Result<RsuSecret, ProtocolError> {
        if rsu_id_raw.is_empty() {
            return Err(ProtocolError::EmptyCredential);
        }
        let rsu_id = hash_short(&[b"rsu".as_slice(), rsu_id_raw]);
        Ok(RsuSecret {
            rsu_id,
            k_infra: self.params.infra_key(&rsu_id),
        })
    }

    /// Identifier of a vehicular-cloud endpoint.
    pub fn register_cloud(&self, vc_id_raw: &[u8]) -> Result<Digest, ProtocolError> {
        if vc_id_raw.is_empty() {
            return Err(ProtocolError::EmptyCredential);
        }
        Ok(hash_short(&[b"vc".as_slice(), vc_id_raw]))
    }

    pub fn pid_of(&self, id: &[u8]) -> Option<Digest> {
        self.vehicles.get(id).copied()
    }

    /// Marks a registered identity revoked; returns its pid.
    pub fn revoke(&mut self, id: &[u8]) -> Option<Digest> {
        let pid = self.pid_of(id)?;
        self.revoked.insert(pid);
        Some(pid)
    }

    pub fn revoked(&self) -> &BTreeSet<Digest> {
        &self.revoked
    }
}

/// Unmasked credentials of a vehicle after a successful login.
#[derive(Debug, Clone, PartialEq)]
pub struct LoginState {
    pub pid: Digest,
    pub vehicle_secret: Digest,
    pub signing_key: GroupScalar,
    pub cert: Certificate,
}

/// Checks (ID, PW) against the TPD and unmasks the stored secrets.
pub fn login(tpd: &TpdRecord, group: &GroupParams, id: &[u8], pw: &[u8]) -> Result<LoginState, ProtocolError> {
    let pad = mask_pad(id, pw);
    let v = Digest(xor32(&tpd.masked_secret, &pad.0));
    if !tpd.verifier.matches(&verifier_digest(id, pw, &v)) {
        return Err(ProtocolError::BadCredentials);
    }
    let raw_x = xor32(&tpd.masked_signing_key, &pad.0);
    let signing_key = group.decode_scalar(&raw_x).map_err(|_| ProtocolError::BadCredentials)?;
    if signing_key.is_zero() {
        return Err(ProtocolError::BadCredentials);
    }
    Ok(LoginState {
        pid: tpd.pid,
        vehicle_secret: v,
        signing_key,
        cert: tpd.cert.clone(),
    })
}

/// An on-board unit: the RA's public parameters, the TPD record and, after
/// a successful login, the unlocked credentials.
#[derive(Debug, Clone)]
pub struct Obu {
    public: PublicParams,
    tpd: TpdRecord,
    session: Option<LoginState>,
}

impl Obu {
    pub fn new(public: PublicParams, tpd: TpdRecord) -> Self {
        Obu {
            public,
            tpd,
            session: None,
        }
    }

    pub fn tpd(&self) -> &TpdRecord {
        &self.tpd
    }

    pub fn public(&self) -> &PublicParams {
        &self.public
    }

    /// A failed attempt clears any previous login.
    pub fn login(&mut self, id: &[u8], pw: &[u8]) -> Result<&LoginState, ProtocolError> {
        self.session = None;
        let state = login(&self.tpd, &self.public.group, id, pw)?;
        Ok(self.session.insert(state))
    }

    pub fn logout(&mut self) {
        self.session = None;
    }

    pub fn login_state(&self) -> Result<&LoginState, ProtocolError> {
        self.session.as_ref().ok_or(ProtocolError::NotLoggedIn)
    }
}

/// The 8-byte expiry encoding used inside certificates.
pub(crate) fn expiry_bytes(expiry_ms: u64) -> [u8; 8] {
    be64(expiry_ms)
}
