#![allow(dead_code)]

use std::collections::BTreeSet;

use vcloud_core::crypto::{Digest, GroupParams};
use vcloud_core::protocol::{ra_init, Endpoint, Obu, Registrar, SystemParams};

pub const NOW: u64 = 1_000;
pub const DELTA: u64 = 300;

/// Two vehicles, an RSU and a cloud node under one RA.
pub struct Fixture {
    pub params: SystemParams,
    pub registrar: Registrar,
    pub alice: Endpoint,
    pub bob: Endpoint,
    pub rsu: Endpoint,
    pub cloud: Endpoint,
}

pub fn vehicle(registrar: &mut Registrar, id: &str, expiry_ms: u64) -> Endpoint {
    let params = registrar.params().clone();
    let pw = format!("pw-{id}");
    let tpd = registrar
        .register_vehicle(id.as_bytes(), pw.as_bytes(), expiry_ms, 0)
        .unwrap();
    let mut obu = Obu::new(params.public().clone(), tpd);
    let state = obu.login(id.as_bytes(), pw.as_bytes()).unwrap().clone();
    Endpoint::vehicle(params.public().clone(), state)
}

pub fn fixture(group: GroupParams) -> Fixture {
    fixture_with_revoked(group, &[])
}

pub fn fixture_with_revoked(group: GroupParams, revoked: &[&str]) -> Fixture {
    let params = ra_init(&[0u8; 32], group, DELTA).unwrap();
    let mut registrar = Registrar::new(params.clone());
    let alice = vehicle(&mut registrar, "alice", 1_000_000);
    let bob = vehicle(&mut registrar, "bob", 1_000_000);
    let rsu = Endpoint::rsu(params.clone(), registrar.register_rsu(b"rsu-1").unwrap());
    let cloud = Endpoint::cloud(params.clone(), registrar.register_cloud(b"vc-1").unwrap());
    for id in revoked {
        registrar.revoke(id.as_bytes());
    }
    let set: BTreeSet<Digest> = registrar.revoked().clone();
    Fixture {
        params,
        alice: alice.with_revoked(set.clone()),
        bob: bob.with_revoked(set.clone()),
        rsu: rsu.with_revoked(set.clone()),
        cloud: cloud.with_revoked(set),
        registrar,
    }
}

use vcloud_core::crypto::Signature;
use vcloud_core::protocol::{Channel, RejectReason, FRAME_HEADER_LEN};

/// The rejection a receiver must report when bit `bit` (MSB-first) of an
/// honest frame `raw` is flipped, derived from the wire layout alone.
pub fn expected_flip(raw: &[u8], group: &GroupParams, receiver: &Endpoint, bit: usize, delta_ms: u64) -> RejectReason {
    use RejectReason::*;
    let byte = bit / 8;
    let mask = 0x80u8 >> (bit % 8);
    let channel = Channel::from_byte(raw[2]).unwrap();
    let payload_len = u16::from_be_bytes([raw[75], raw[76]]) as usize;
    let auth_start = FRAME_HEADER_LEN + payload_len;
    let sig_len = Signature::encoded_len(group);
    match byte {
        0 => Malformed,
        1 => {
            if (1..=4).contains(&(raw[1] ^ mask)) {
                BadAuthenticator
            } else {
                Malformed
            }
        }
        2 => match Channel::from_byte(raw[2] ^ mask) {
            None => Malformed,
            Some(c) if c.is_signed() != channel.is_signed() => Malformed,
            Some(c) if receiver.accepts(c) => BadAuthenticator,
            Some(_) => ChannelMismatch,
        },
        35..=42 => {
            let shift = 8 * (42 - byte) + (7 - bit % 8);
            if shift >= 63 || (1u64 << shift) > delta_ms {
                StaleTimestamp
            } else {
                BadAuthenticator
            }
        }
        75 | 76 => Malformed,
        b if b < auth_start + if channel.is_signed() { sig_len } else { 32 } => BadAuthenticator,
        b => {
            let off = b - auth_start - sig_len;
            let elen = group.element_len();
            if (32..32 + elen).contains(&off) {
                BadAuthenticator
            } else {
                BadCertificate
            }
        }
    }
}
