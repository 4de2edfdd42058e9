use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use p256::elliptic_curve::ff::PrimeField;
use p256::elliptic_curve::group::{Group as _, GroupEncoding};
use p256::{FieldBytes, ProjectivePoint, Scalar};

use super::{CryptoError, Digest};
use crate::metrics::{self, OpKind};

/// Order of the P-256 base point.
const P256_ORDER_HEX: &str = "ffffffff00000000ffffffffffffffffbce6faada7179e84f3b9cac2fc632551";
const P256_ELEMENT_LEN: usize = 33;

/// Scalars are always encoded as 32 big-endian bytes, whatever the group.
pub const SCALAR_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum GroupKind {
    ToyModP,
    StandardCurve,
}

#[derive(Clone, PartialEq, Eq)]
enum Repr {
    /// Subgroup of order `q` in `Z*_p`, generated by `g`.
    Toy { p: u64, q: u64, g: u64, width: usize },
    P256,
}

/// A prime-order group with a fixed generator.
///
/// Two instantiations share this interface: a small subgroup of `Z*_p`
/// (brute-forceable, used for oracle tests) and the NIST P-256 curve.
#[derive(Clone, PartialEq, Eq)]
pub struct GroupParams {
    repr: Repr,
    order: BigUint,
}

impl fmt::Debug for GroupParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.repr {
            Repr::Toy { p, q, g, .. } => write!(f, "ToyModP(p={p}, q={q}, G={g})"),
            Repr::P256 => f.write_str("P256"),
        }
    }
}

/// An integer reduced modulo the group order.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct GroupScalar(BigUint);

impl GroupScalar {
    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    /// 32-byte big-endian encoding.
    pub fn to_bytes(&self) -> [u8; SCALAR_LEN] {
        let raw = self.0.to_bytes_be();
        let mut out = [0u8; SCALAR_LEN];
        out[SCALAR_LEN - raw.len()..].copy_from_slice(&raw);
        out
    }
}

impl fmt::Debug for GroupScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupScalar({})", self.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum GroupElement {
    Toy(u64),
    P256(ProjectivePoint),
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupElement::Toy(v) => write!(f, "Toy({v})"),
            GroupElement::P256(p) => write!(f, "P256({})", hex::encode(p256_bytes(p))),
        }
    }
}

fn p256_bytes(p: &ProjectivePoint) -> [u8; P256_ELEMENT_LEN] {
    let mut out = [0u8; P256_ELEMENT_LEN];
    if !bool::from(p.is_identity()) {
        out.copy_from_slice(&p.to_bytes());
    }
    out
}

fn mod_pow(base: u64, exp: &BigUint, p: u64) -> u64 {
    let mut acc: u128 = 1;
    let base = base as u128 % p as u128;
    for i in (0..exp.bits()).rev() {
        acc = acc * acc % p as u128;
        if exp.bit(i) {
            acc = acc * base % p as u128;
        }
    }
    acc as u64
}

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u64;
    while d.saturating_mul(d) <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

impl GroupParams {
    /// The order-11 subgroup of `Z*_23` generated by 2.
    pub fn toy() -> Self {
        Self::toy_with(23, 11, 2).expect("built-in toy parameters are valid")
    }

    /// A subgroup of `Z*_p` of prime order `q` generated by `g`.
    ///
    /// Only small moduli are accepted: primality is checked by trial division.
    pub fn toy_with(p: u64, q: u64, g: u64) -> Result<Self, CryptoError> {
        if p > u32::MAX as u64 || !is_prime(p) {
            return Err(CryptoError::InvalidGroup(format!("modulus {p} is not a small prime")));
        }
        if !is_prime(q) || !(p - 1).is_multiple_of(q) {
            return Err(CryptoError::InvalidGroup(format!("order {q} is not a prime divisor of p-1")));
        }
        if g <= 1 || g >= p || mod_pow(g, &BigUint::from(q), p) != 1 {
            return Err(CryptoError::InvalidGroup(format!("generator {g} does not have order {q}")));
        }
        let width = ((64 - (p - 1).leading_zeros()) as usize).div_ceil(8);
        Ok(GroupParams {
            repr: Repr::Toy { p, q, g, width },
            order: BigUint::from(q),
        })
    }

    /// NIST P-256 with its standard base point.
    pub fn p256() -> Self {
        GroupParams {
            repr: Repr::P256,
            order: BigUint::parse_bytes(P256_ORDER_HEX.as_bytes(), 16).expect("valid constant"),
        }
    }

    pub fn kind(&self) -> GroupKind {
        match self.repr {
            Repr::Toy { .. } => GroupKind::ToyModP,
            Repr::P256 => GroupKind::StandardCurve,
        }
    }

    /// Toy modulus `p`, if this is the toy instantiation.
    pub fn modulus(&self) -> Option<u64> {
        match self.repr {
            Repr::Toy { p, .. } => Some(p),
            Repr::P256 => None,
        }
    }

    pub fn order(&self) -> &BigUint {
        &self.order
    }

    pub fn generator(&self) -> GroupElement {
        match self.repr {
            Repr::Toy { g, .. } => GroupElement::Toy(g),
            Repr::P256 => GroupElement::P256(ProjectivePoint::GENERATOR),
        }
    }

    pub fn identity(&self) -> GroupElement {
        match self.repr {
            Repr::Toy { .. } => GroupElement::Toy(1),
            Repr::P256 => GroupElement::P256(ProjectivePoint::IDENTITY),
        }
    }

    /// Byte length of an encoded element.
    pub fn element_len(&self) -> usize {
        match self.repr {
            Repr::Toy { width, .. } => width,
            Repr::P256 => P256_ELEMENT_LEN,
        }
    }

    pub fn scalar(&self, v: impl Into<BigUint>) -> GroupScalar {
        GroupScalar(v.into() % &self.order)
    }

    /// Interprets the digest as a big-endian integer and reduces it.
    pub fn scalar_from_digest(&self, d: &Digest) -> GroupScalar {
        self.scalar(BigUint::from_bytes_be(d.as_bytes()))
    }

    /// Decodes a 32-byte scalar, rejecting values that are not reduced.
    pub fn decode_scalar(&self, raw: &[u8]) -> Result<GroupScalar, CryptoError> {
        if raw.len() != SCALAR_LEN {
            return Err(CryptoError::Malformed);
        }
        let v = BigUint::from_bytes_be(raw);
        if v >= self.order {
            return Err(CryptoError::Malformed);
        }
        Ok(GroupScalar(v))
    }

    pub fn scalar_add(&self, a: &GroupScalar, b: &GroupScalar) -> GroupScalar {
        GroupScalar((&a.0 + &b.0) % &self.order)
    }

    pub fn scalar_mul_mod(&self, a: &GroupScalar, b: &GroupScalar) -> GroupScalar {
        GroupScalar((&a.0 * &b.0) % &self.order)
    }

    pub fn encode(&self, e: &GroupElement) -> Vec<u8> {
        match (e, &self.repr) {
            (GroupElement::Toy(v), Repr::Toy { width, .. }) => v.to_be_bytes()[8 - width..].to_vec(),
            (GroupElement::P256(p), Repr::P256) => p256_bytes(p).to_vec(),
            _ => panic!("element does not belong to {self:?}"),
        }
    }

    /// Decodes a canonical encoding; only subgroup members are accepted.
    pub fn decode(&self, raw: &[u8]) -> Result<GroupElement, CryptoError> {
        if raw.len() != self.element_len() {
            return Err(CryptoError::InvalidElement);
        }
        match self.repr {
            Repr::Toy { p, q, .. } => {
                let v = raw.iter().fold(0u64, |acc, b| acc << 8 | *b as u64);
                if v == 0 || v >= p || mod_pow(v, &BigUint::from(q), p) != 1 {
                    return Err(CryptoError::InvalidElement);
                }
                Ok(GroupElement::Toy(v))
            }
            Repr::P256 => {
                if raw.iter().all(|b| *b == 0) {
                    return Ok(GroupElement::P256(ProjectivePoint::IDENTITY));
                }
                let raw: [u8; P256_ELEMENT_LEN] = raw.try_into().map_err(|_| CryptoError::InvalidElement)?;
                let arr = p256::CompressedPoint::from(raw);
                Option::from(ProjectivePoint::from_bytes(&arr))
                    .map(GroupElement::P256)
                    .ok_or(CryptoError::InvalidElement)
            }
        }
    }

    /// Decodes a public key: a valid element other than the identity.
    pub fn decode_public_key(&self, raw: &[u8]) -> Result<GroupElement, CryptoError> {
        let e = self.decode(raw)?;
        if e == self.identity() {
            return Err(CryptoError::InvalidElement);
        }
        Ok(e)
    }

    pub fn contains(&self, e: &GroupElement) -> bool {
        match (e, &self.repr) {
            (GroupElement::Toy(v), Repr::Toy { p, q, .. }) => {
                *v != 0 && v < p && mod_pow(*v, &BigUint::from(*q), *p) == 1
            }
            (GroupElement::P256(_), Repr::P256) => true,
            _ => false,
        }
    }

    /// `k`-fold application of the group operation to `e`.
    pub fn scalar_mul(&self, e: &GroupElement, k: &GroupScalar) -> Result<GroupElement, CryptoError> {
        if !self.contains(e) {
            return Err(CryptoError::InvalidElement);
        }
        metrics::record(OpKind::ScalarMul);
        Ok(self.mul_unchecked(e, k))
    }

    fn mul_unchecked(&self, e: &GroupElement, k: &GroupScalar) -> GroupElement {
        match (e, &self.repr) {
            (GroupElement::Toy(v), Repr::Toy { p, .. }) => GroupElement::Toy(mod_pow(*v, &k.0, *p)),
            (GroupElement::P256(pt), Repr::P256) => GroupElement::P256(pt * &to_p256_scalar(k)),
            _ => unreachable!("membership checked by caller"),
        }
    }

    /// `Π e_i^{k_i}` evaluated as one interleaved multi-exponentiation
    /// (shared doublings), counted as a single scalar multiplication.
    pub fn multi_scalar_mul(
        &self,
        terms: &[(GroupElement, GroupScalar)],
    ) -> Result<GroupElement, CryptoError> {
        if terms.iter().any(|(e, _)| !self.contains(e)) {
            return Err(CryptoError::InvalidElement);
        }
        metrics::record(OpKind::ScalarMul);
        let bits = terms.iter().map(|(_, k)| k.0.bits()).max().unwrap_or(0);
        let mut acc = self.identity();
        for i in (0..bits).rev() {
            acc = self.combine(&acc, &acc);
            for (e, k) in terms {
                if k.0.bit(i) {
                    acc = self.combine(&acc, e);
                }
            }
        }
        Ok(acc)
    }

    /// The group operation.
    pub fn combine(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        match (a, b, &self.repr) {
            (GroupElement::Toy(x), GroupElement::Toy(y), Repr::Toy { p, .. }) => {
                GroupElement::Toy((*x as u128 * *y as u128 % *p as u128) as u64)
            }
            (GroupElement::P256(x), GroupElement::P256(y), Repr::P256) => GroupElement::P256(x + y),
            _ => panic!("elements do not belong to {self:?}"),
        }
    }

    /// `a ⊘ b`: multiplication by the inverse (toy) or point subtraction.
    pub(crate) fn divide(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        match (a, b, &self.repr) {
            (GroupElement::Toy(_), GroupElement::Toy(y), Repr::Toy { p, .. }) => {
                // Fermat inverse in Z*_p.
                let inv = mod_pow(*y, &BigUint::from(*p - 2), *p);
                self.combine(a, &GroupElement::Toy(inv))
            }
            (GroupElement::P256(x), GroupElement::P256(y), Repr::P256) => GroupElement::P256(x - y),
            _ => panic!("elements do not belong to {self:?}"),
        }
    }

    /// The scalar as a `u64`, for small-group diagnostics.
    pub fn scalar_u64(&self, k: &GroupScalar) -> Option<u64> {
        k.0.to_u64()
    }

    pub fn one(&self) -> GroupScalar {
        GroupScalar(BigUint::one())
    }
}

fn to_p256_scalar(k: &GroupScalar) -> Scalar {
    let bytes = k.to_bytes();
    Option::from(Scalar::from_repr(FieldBytes::from(bytes)))
        .expect("scalar reduced modulo the P-256 order")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_scalar_mul_examples() {
        let g = GroupParams::toy();
        let two = g.generator();
        assert_eq!(g.scalar_mul(&two, &g.scalar(5u32)).unwrap(), GroupElement::Toy(9));
        assert_eq!(g.scalar_mul(&two, &g.scalar(0u32)).unwrap(), GroupElement::Toy(1));
        // 11 reduces to 0 mod q; the raw exponent check is done against 2^11 mod 23.
        assert_eq!(mod_pow(2, &BigUint::from(11u32), 23), 1);
        assert_eq!(g.scalar_mul(&two, &g.scalar(11u32)).unwrap(), GroupElement::Toy(1));
    }

    #[test]
    fn toy_rejects_non_members() {
        let g = GroupParams::toy();
        // 5 generates all of Z*_23, so it is outside the order-11 subgroup.
        assert_eq!(g.decode(&[5]), Err(CryptoError::InvalidElement));
        assert_eq!(g.decode(&[0]), Err(CryptoError::InvalidElement));
        assert_eq!(g.decode(&[23]), Err(CryptoError::InvalidElement));
        assert_eq!(g.decode_public_key(&[1]), Err(CryptoError::InvalidElement));
        assert_eq!(g.decode(&[8]).unwrap(), GroupElement::Toy(8));
        assert_eq!(
            g.scalar_mul(&GroupElement::Toy(5), &g.scalar(2u32)),
            Err(CryptoError::InvalidElement)
        );
    }

    #[test]
    fn invalid_toy_parameters() {
        assert!(GroupParams::toy_with(24, 11, 2).is_err());
        assert!(GroupParams::toy_with(23, 7, 2).is_err());
        assert!(GroupParams::toy_with(23, 11, 5).is_err());
        assert!(GroupParams::toy_with(23, 11, 1).is_err());
    }

    #[test]
    fn encodings_round_trip() {
        for g in [GroupParams::toy(), GroupParams::p256()] {
            let gen = g.generator();
            for k in 0u32..20 {
                let e = g.scalar_mul(&gen, &g.scalar(k)).unwrap();
                let enc = g.encode(&e);
                assert_eq!(enc.len(), g.element_len());
                assert_eq!(g.decode(&enc).unwrap(), e);
            }
        }
    }

    #[test]
    fn scalar_decoding_is_canonical() {
        let g = GroupParams::toy();
        let mut raw = [0u8; 32];
        raw[31] = 10;
        assert_eq!(g.decode_scalar(&raw).unwrap(), g.scalar(10u32));
        raw[31] = 11;
        assert_eq!(g.decode_scalar(&raw), Err(CryptoError::Malformed));
        assert_eq!(g.decode_scalar(&raw[1..]), Err(CryptoError::Malformed));
    }

    #[test]
    fn multi_scalar_mul_matches_product_of_powers() {
        for g in [GroupParams::toy(), GroupParams::p256()] {
            let gen = g.generator();
            let terms: Vec<_> = (1u32..6)
                .map(|i| {
                    let e = g.scalar_mul(&gen, &g.scalar(i * 7 + 1)).unwrap();
                    (e, g.scalar(i * 13 + 2))
                })
                .collect();
            let expected = terms.iter().fold(g.identity(), |acc, (e, k)| {
                g.combine(&acc, &g.scalar_mul(e, k).unwrap())
            });
            assert_eq!(g.multi_scalar_mul(&terms).unwrap(), expected);
        }
    }

    #[test]
    fn divide_inverts_combine() {
        for g in [GroupParams::toy(), GroupParams::p256()] {
            let a = g.scalar_mul(&g.generator(), &g.scalar(3u32)).unwrap();
            let b = g.scalar_mul(&g.generator(), &g.scalar(7u32)).unwrap();
            assert_eq!(g.divide(&g.combine(&a, &b), &b), a);
        }
    }
}
