//! Prime-order subgroup arithmetic, Pedersen commitments and small-exponent
//! decoding.
//!
//! Parameters follow the Schnorr-group layout: a prime `q`, a prime
//! `p = k*q + 1`, and two generators `g`, `h` of the order-`q` subgroup of
//! `Z_p^*`. `h` is derived by hashing a fixed public label into the subgroup,
//! so nobody (including the party that generated `p` and `q`) knows
//! `log_g(h)`.
//!
//! Moduli that fit in a machine word take a Montgomery fast path; wider
//! moduli fall back to `num-bigint`.

use std::collections::HashSet;
use std::fmt;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::{CryptoRng, Rng, RngCore};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::{self, CodecError, Reader};

/// Label hashed into the subgroup to derive the second generator `h`.
pub const H_DERIVATION_LABEL: &[u8] = b"vldp/pedersen-second-generator/v1";

const MAX_PRIME_SEARCH: usize = 20_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroupError {
    #[error("group generation failed: {0}")]
    Generation(String),
    #[error("invalid group parameters: {0}")]
    InvalidParams(String),
    #[error("value is not a residue in [1, p-1]")]
    OutOfRange,
    #[error("element is not in the order-q subgroup")]
    NotInGroup,
    #[error("candidate exponents are not distinct mod q")]
    DuplicateCandidates,
    #[error("empty candidate set")]
    EmptyCandidates,
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Clone, PartialEq, Eq, Hash)]
enum Residue {
    Word(u64),
    Wide(BigUint),
}

impl Residue {
    fn to_biguint(&self) -> BigUint {
        match self {
            Residue::Word(v) => BigUint::from(*v),
            Residue::Wide(v) => v.clone(),
        }
    }
}

impl fmt::Debug for Residue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Residue::Word(v) => write!(f, "{v:#x}"),
            Residue::Wide(v) => write!(f, "{v:#x}"),
        }
    }
}

/// An element of the order-`q` subgroup `G` of `Z_p^*`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GroupElement(Residue);

/// An exponent in `Z_q`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Scalar(Residue);

impl GroupElement {
    pub fn to_biguint(&self) -> BigUint {
        self.0.to_biguint()
    }
}

impl Scalar {
    pub fn to_biguint(&self) -> BigUint {
        self.0.to_biguint()
    }

    pub fn is_zero(&self) -> bool {
        match &self.0 {
            Residue::Word(v) => *v == 0,
            Residue::Wide(v) => v.is_zero(),
        }
    }
}

/// Montgomery arithmetic modulo an odd 64-bit modulus.
#[derive(Clone, Debug)]
struct Mont64 {
    modulus: u64,
    neg_inv: u64,
    r2: u64,
    one: u64,
}

impl Mont64 {
    fn new(modulus: u64) -> Self {
        debug_assert!(modulus & 1 == 1);
        // Newton iteration doubles the number of correct low bits each round.
        let mut inv: u64 = modulus;
        for _ in 0..6 {
            inv = inv.wrapping_mul(2u64.wrapping_sub(modulus.wrapping_mul(inv)));
        }
        let m = modulus as u128;
        let r = ((1u128 << 64) % m) as u64;
        let r2 = ((r as u128 * r as u128) % m) as u64;
        Self {
            modulus,
            neg_inv: inv.wrapping_neg(),
            r2,
            one: r,
        }
    }

    #[inline]
    fn redc(&self, t: u128) -> u64 {
        let m = (t as u64).wrapping_mul(self.neg_inv);
        let (sum, carry) = t.overflowing_add(m as u128 * self.modulus as u128);
        let hi = (sum >> 64) as u64;
        if carry || hi >= self.modulus {
            hi.wrapping_sub(self.modulus)
        } else {
            hi
        }
    }

    #[inline]
    fn mul(&self, a: u64, b: u64) -> u64 {
        self.redc(a as u128 * b as u128)
    }

    #[inline]
    fn enter(&self, a: u64) -> u64 {
        self.mul(a, self.r2)
    }

    #[inline]
    fn leave(&self, a: u64) -> u64 {
        self.redc(a as u128)
    }

    fn mul_mod(&self, a: u64, b: u64) -> u64 {
        self.leave(self.mul(self.enter(a), self.enter(b)))
    }

    fn pow(&self, base: u64, exp: u64) -> u64 {
        if exp == 0 {
            return 1 % self.modulus;
        }
        let x = self.enter(base);
        let mut acc = self.one;
        for bit in (0..(64 - exp.leading_zeros())).rev() {
            acc = self.mul(acc, acc);
            if (exp >> bit) & 1 == 1 {
                acc = self.mul(acc, x);
            }
        }
        self.leave(acc)
    }
}

/// Precomputed `base^(j * 16^i)` in Montgomery form, so a 64-bit
/// exponentiation costs at most 16 multiplications.
#[derive(Clone)]
struct FixedBase {
    table: Box<[u64]>,
}

impl FixedBase {
    fn new(mont: &Mont64, base: u64) -> Self {
        let mut table = vec![0u64; 16 * 16];
        let mut step = mont.enter(base);
        for i in 0..16 {
            let row = &mut table[i * 16..(i + 1) * 16];
            row[0] = mont.one;
            for j in 1..16 {
                row[j] = mont.mul(row[j - 1], step);
            }
            step = mont.mul(row[15], step);
        }
        Self {
            table: table.into_boxed_slice(),
        }
    }

    fn pow(&self, mont: &Mont64, exp: u64) -> u64 {
        let mut acc = mont.one;
        let mut e = exp;
        let mut i = 0;
        while e != 0 {
            let nibble = (e & 15) as usize;
            if nibble != 0 {
                acc = mont.mul(acc, self.table[i * 16 + nibble]);
            }
            e >>= 4;
            i += 1;
        }
        mont.leave(acc)
    }
}

impl fmt::Debug for FixedBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FixedBase")
    }
}

#[derive(Clone, Debug)]
enum Arith {
    Word {
        mont: Mont64,
        q: u64,
        g: FixedBase,
        h: FixedBase,
    },
    Wide,
}

/// Public parameters `(p, q, g, h)` shared by prover and verifier.
#[derive(Clone)]
pub struct GroupParams {
    p: BigUint,
    q: BigUint,
    g: BigUint,
    h: BigUint,
    arith: Arith,
}

impl PartialEq for GroupParams {
    fn eq(&self, other: &Self) -> bool {
        self.p == other.p && self.q == other.q && self.g == other.g && self.h == other.h
    }
}

impl Eq for GroupParams {}

impl fmt::Debug for GroupParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupParams")
            .field("p_bits", &self.p.bits())
            .field("q_bits", &self.q.bits())
            .field("p", &format_args!("{:#x}", self.p))
            .field("q", &format_args!("{:#x}", self.q))
            .finish()
    }
}

fn random_bits(bits: u64, rng: &mut impl RngCore) -> BigUint {
    let mut x = rng.gen_biguint(bits);
    x.set_bit(bits - 1, true);
    x
}

fn is_probable_prime(n: &BigUint) -> bool {
    num_prime::nt_funcs::is_prime(n, None).probably()
}

/// Expands a label into a residue mod `p` with SHA-256 in counter mode.
fn hash_to_residue(label: &[u8], counter: u32, p: &BigUint) -> BigUint {
    let want = (p.bits() as usize + 64).div_ceil(8);
    let mut bytes = Vec::with_capacity(want + 32);
    let mut block = 0u32;
    while bytes.len() < want {
        let digest = Sha256::new()
            .chain_update(label)
            .chain_update(counter.to_be_bytes())
            .chain_update(block.to_be_bytes())
            .finalize();
        bytes.extend_from_slice(&digest);
        block += 1;
    }
    BigUint::from_bytes_be(&bytes[..want]) % p
}

impl GroupParams {
    /// Builds parameters from raw values, checking the subgroup invariants
    /// (but not primality, see [`GroupParams::verify_primes`]).
    pub fn new(p: BigUint, q: BigUint, g: BigUint, h: BigUint) -> Result<Self, GroupError> {
        let one = BigUint::one();
        if p <= BigUint::from(3u8) || p.is_even() {
            return Err(GroupError::InvalidParams("p must be an odd prime > 3".into()));
        }
        if q < BigUint::from(2u8) {
            return Err(GroupError::InvalidParams("q must be at least 2".into()));
        }
        if !(&p - &one).is_multiple_of(&q) {
            return Err(GroupError::InvalidParams("q does not divide p - 1".into()));
        }
        for (name, x) in [("g", &g), ("h", &h)] {
            if x.is_zero() || *x >= p {
                return Err(GroupError::InvalidParams(format!("{name} is not a residue mod p")));
            }
            if x.is_one() {
                return Err(GroupError::InvalidParams(format!("{name} is the identity")));
            }
            if x.modpow(&q, &p) != one {
                return Err(GroupError::InvalidParams(format!("{name}^q != 1 mod p")));
            }
        }
        if g == h {
            return Err(GroupError::InvalidParams("g and h must differ".into()));
        }
        let arith = match (p.to_u64(), q.to_u64(), g.to_u64(), h.to_u64()) {
            (Some(pw), Some(qw), Some(gw), Some(hw)) => {
                let mont = Mont64::new(pw);
                Arith::Word {
                    g: FixedBase::new(&mont, gw),
                    h: FixedBase::new(&mont, hw),
                    mont,
                    q: qw,
                }
            }
            _ => Arith::Wide,
        };
        Ok(Self { p, q, g, h, arith })
    }

    /// Generates a fresh Schnorr group with a `q_bits`-bit prime `q` and a
    /// `p_bits`-bit prime `p = k*q + 1`.
    pub fn generate<R: RngCore + CryptoRng>(
        q_bits: u64,
        p_bits: u64,
        rng: &mut R,
    ) -> Result<Self, GroupError> {
        if q_bits < 16 {
            return Err(GroupError::Generation("q_bits must be at least 16".into()));
        }
        if p_bits < q_bits + 2 {
            return Err(GroupError::Generation(
                "p_bits must exceed q_bits by at least 2".into(),
            ));
        }
        let mut attempts = 0usize;
        while attempts < MAX_PRIME_SEARCH {
            let q = loop {
                attempts += 1;
                let mut cand = random_bits(q_bits, rng);
                cand.set_bit(0, true);
                if is_probable_prime(&cand) {
                    break cand;
                }
                if attempts >= MAX_PRIME_SEARCH {
                    return Err(GroupError::Generation("no prime q found".into()));
                }
            };
            // Even k = 2m with p = kq + 1 of exactly p_bits bits. Small
            // cofactor ranges may hold no prime p for this q, so walk each m
            // at most once from a random start, then draw a new q.
            let lo = (BigUint::one() << (p_bits - 1)) - 1u32;
            let hi = (BigUint::one() << p_bits) - 2u32;
            let m_lo = Integer::div_ceil(&Integer::div_ceil(&lo, &q), &BigUint::from(2u8));
            let m_hi = &hi / &q / 2u32;
            if m_lo > m_hi {
                continue;
            }
            let count = &m_hi - &m_lo + 1u32;
            let start = rng.gen_biguint_below(&count);
            let tries = count.to_usize().unwrap_or(usize::MAX).min(64 * p_bits as usize);
            for i in 0..tries {
                attempts += 1;
                let m: BigUint = &m_lo + (&start + i) % &count;
                let p: BigUint = (m << 1u32) * &q + 1u32;
                debug_assert_eq!(p.bits(), p_bits);
                if is_probable_prime(&p) {
                    return Self::with_derived_generators(p, q, rng);
                }
            }
        }
        Err(GroupError::Generation(format!(
            "no ({q_bits}, {p_bits})-bit group found within {MAX_PRIME_SEARCH} attempts"
        )))
    }

    fn with_derived_generators<R: RngCore + CryptoRng>(
        p: BigUint,
        q: BigUint,
        rng: &mut R,
    ) -> Result<Self, GroupError> {
        let one = BigUint::one();
        let cofactor = (&p - &one) / &q;
        let g = loop {
            let x = rng.gen_biguint_range(&BigUint::from(2u8), &(&p - &one));
            let g = x.modpow(&cofactor, &p);
            if !g.is_one() {
                break g;
            }
        };
        let h = Self::derive_h(&p, &q, &g)?;
        Self::new(p, q, g, h)
    }

    /// Hashes [`H_DERIVATION_LABEL`] into the subgroup.
    pub fn derive_h(p: &BigUint, q: &BigUint, g: &BigUint) -> Result<BigUint, GroupError> {
        let cofactor = (p - 1u32) / q;
        for counter in 0..1024u32 {
            let x = hash_to_residue(H_DERIVATION_LABEL, counter, p);
            if x.is_zero() {
                continue;
            }
            let h = x.modpow(&cofactor, p);
            if !h.is_one() && h != *g {
                return Ok(h);
            }
        }
        Err(GroupError::Generation("hash-to-group found no generator".into()))
    }

    /// Probabilistic primality check of `p` and `q`.
    pub fn verify_primes(&self) -> Result<(), GroupError> {
        if !is_probable_prime(&self.q) {
            return Err(GroupError::InvalidParams("q is not prime".into()));
        }
        if !is_probable_prime(&self.p) {
            return Err(GroupError::InvalidParams("p is not prime".into()));
        }
        Ok(())
    }

    pub fn p(&self) -> &BigUint {
        &self.p
    }

    pub fn q(&self) -> &BigUint {
        &self.q
    }

    /// Security parameter `log2 q` (bit length of `q`).
    pub fn security_bits(&self) -> u64 {
        self.q.bits()
    }

    /// Fixed encoded width of a group element in bytes.
    pub fn element_len(&self) -> usize {
        self.p.bits().div_ceil(8) as usize
    }

    /// Fixed encoded width of a scalar in bytes.
    pub fn scalar_len(&self) -> usize {
        self.q.bits().div_ceil(8) as usize
    }

    pub fn g(&self) -> GroupElement {
        self.wrap_element(&self.g)
    }

    pub fn h(&self) -> GroupElement {
        self.wrap_element(&self.h)
    }

    pub fn identity(&self) -> GroupElement {
        match self.arith {
            Arith::Word { .. } => GroupElement(Residue::Word(1)),
            Arith::Wide => GroupElement(Residue::Wide(BigUint::one())),
        }
    }

    fn wrap_element(&self, x: &BigUint) -> GroupElement {
        match self.arith {
            Arith::Word { .. } => GroupElement(Residue::Word(x.to_u64().expect("word-sized"))),
            Arith::Wide => GroupElement(Residue::Wide(x.clone())),
        }
    }

    fn wrap_scalar(&self, x: BigUint) -> Scalar {
        match self.arith {
            Arith::Word { .. } => Scalar(Residue::Word(x.to_u64().expect("word-sized"))),
            Arith::Wide => Scalar(Residue::Wide(x)),
        }
    }

    /// Interprets `x` as a residue in `[1, p-1]` without a membership test.
    pub fn element_from_biguint(&self, x: &BigUint) -> Result<GroupElement, GroupError> {
        if x.is_zero() || *x >= self.p {
            return Err(GroupError::OutOfRange);
        }
        Ok(self.wrap_element(x))
    }

    /// Like [`Self::element_from_biguint`] but also checks `x^q = 1`.
    pub fn element(&self, x: &BigUint) -> Result<GroupElement, GroupError> {
        let e = self.element_from_biguint(x)?;
        if self.is_member(&e) {
            Ok(e)
        } else {
            Err(GroupError::NotInGroup)
        }
    }

    pub fn is_member(&self, e: &GroupElement) -> bool {
        match (&self.arith, &e.0) {
            (Arith::Word { mont, q, .. }, Residue::Word(x)) => mont.pow(*x, *q) == 1,
            _ => e.to_biguint().modpow(&self.q, &self.p).is_one(),
        }
    }

    /// Reduces `x` modulo `q`.
    pub fn scalar(&self, x: &BigUint) -> Scalar {
        self.wrap_scalar(x % &self.q)
    }

    pub fn scalar_from_u64(&self, x: u64) -> Scalar {
        match self.arith {
            Arith::Word { q, .. } => Scalar(Residue::Word(x % q)),
            Arith::Wide => Scalar(Residue::Wide(BigUint::from(x) % &self.q)),
        }
    }

    /// Parses a canonical scalar (must already be below `q`).
    pub fn scalar_canonical(&self, x: &BigUint) -> Result<Scalar, GroupError> {
        if *x >= self.q {
            return Err(GroupError::OutOfRange);
        }
        Ok(self.wrap_scalar(x.clone()))
    }

    pub fn random_scalar<R: RngCore + ?Sized>(&self, rng: &mut R) -> Scalar {
        match self.arith {
            Arith::Word { q, .. } => Scalar(Residue::Word(rng.gen_range(0..q))),
            Arith::Wide => Scalar(Residue::Wide(rng.gen_biguint_below(&self.q))),
        }
    }

    /// Uniform element of `G` with a known exponent.
    pub fn random_element<R: RngCore + ?Sized>(&self, rng: &mut R) -> GroupElement {
        let e = self.random_scalar(rng);
        self.g_pow(&e)
    }

    pub fn scalar_add(&self, a: &Scalar, b: &Scalar) -> Scalar {
        match (&self.arith, &a.0, &b.0) {
            (Arith::Word { q, .. }, Residue::Word(x), Residue::Word(y)) => {
                Scalar(Residue::Word(((*x as u128 + *y as u128) % *q as u128) as u64))
            }
            _ => self.wrap_scalar((a.to_biguint() + b.to_biguint()) % &self.q),
        }
    }

    pub fn scalar_neg(&self, a: &Scalar) -> Scalar {
        match (&self.arith, &a.0) {
            (Arith::Word { q, .. }, Residue::Word(x)) => {
                Scalar(Residue::Word(if *x == 0 { 0 } else { q - x }))
            }
            _ => {
                let x = a.to_biguint();
                if x.is_zero() {
                    self.wrap_scalar(x)
                } else {
                    self.wrap_scalar(&self.q - x)
                }
            }
        }
    }

    pub fn scalar_sub(&self, a: &Scalar, b: &Scalar) -> Scalar {
        self.scalar_add(a, &self.scalar_neg(b))
    }

    pub fn scalar_mul(&self, a: &Scalar, b: &Scalar) -> Scalar {
        match (&self.arith, &a.0, &b.0) {
            (Arith::Word { q, .. }, Residue::Word(x), Residue::Word(y)) => {
                Scalar(Residue::Word(((*x as u128 * *y as u128) % *q as u128) as u64))
            }
            _ => self.wrap_scalar((a.to_biguint() * b.to_biguint()) % &self.q),
        }
    }

    pub fn scalar_sum<'a>(&self, items: impl IntoIterator<Item = &'a Scalar>) -> Scalar {
        items
            .into_iter()
            .fold(self.scalar_from_u64(0), |acc, s| self.scalar_add(&acc, s))
    }

    /// Reads a group element's integer value as an exponent mod `q`.
    pub fn element_to_scalar(&self, e: &GroupElement) -> Scalar {
        match (&self.arith, &e.0) {
            (Arith::Word { q, .. }, Residue::Word(x)) => Scalar(Residue::Word(x % q)),
            _ => self.wrap_scalar(e.to_biguint() % &self.q),
        }
    }

    pub fn mul(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        match (&self.arith, &a.0, &b.0) {
            (Arith::Word { mont, .. }, Residue::Word(x), Residue::Word(y)) => {
                GroupElement(Residue::Word(mont.mul_mod(*x, *y)))
            }
            _ => self.wrap_element(&((a.to_biguint() * b.to_biguint()) % &self.p)),
        }
    }

    /// Exponentiation by a scalar. Only meaningful for subgroup members,
    /// whose order divides `q`.
    pub fn pow(&self, base: &GroupElement, exp: &Scalar) -> GroupElement {
        match (&self.arith, &base.0, &exp.0) {
            (Arith::Word { mont, .. }, Residue::Word(x), Residue::Word(e)) => {
                GroupElement(Residue::Word(mont.pow(*x, *e)))
            }
            _ => GroupElement(Residue::Wide(
                base.to_biguint().modpow(&exp.to_biguint(), &self.p),
            )),
        }
    }

    /// Inverse of a subgroup member (`a^(q-1)`).
    pub fn inv(&self, a: &GroupElement) -> GroupElement {
        let q_minus_one = self.scalar_neg(&self.scalar_from_u64(1));
        self.pow(a, &q_minus_one)
    }

    pub fn div(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        self.mul(a, &self.inv(b))
    }

    pub fn g_pow(&self, exp: &Scalar) -> GroupElement {
        match (&self.arith, &exp.0) {
            (Arith::Word { mont, g, .. }, Residue::Word(e)) => GroupElement(Residue::Word(g.pow(mont, *e))),
            _ => GroupElement(Residue::Wide(self.g.modpow(&exp.to_biguint(), &self.p))),
        }
    }

    pub fn h_pow(&self, exp: &Scalar) -> GroupElement {
        match (&self.arith, &exp.0) {
            (Arith::Word { mont, h, .. }, Residue::Word(e)) => GroupElement(Residue::Word(h.pow(mont, *e))),
            _ => GroupElement(Residue::Wide(self.h.modpow(&exp.to_biguint(), &self.p))),
        }
    }

    /// `g^a * h^b`.
    pub fn g_h_pow(&self, a: &Scalar, b: &Scalar) -> GroupElement {
        self.mul(&self.g_pow(a), &self.h_pow(b))
    }

    /// Pedersen commitment `g^m h^r mod p`.
    pub fn commit(&self, m: &Scalar, r: &Scalar) -> GroupElement {
        self.g_h_pow(m, r)
    }

    pub fn product<'a>(&self, items: impl IntoIterator<Item = &'a GroupElement>) -> GroupElement {
        items
            .into_iter()
            .fold(self.identity(), |acc, e| self.mul(&acc, e))
    }

    /// Finds the unique index `j` with `g^candidates[j] == target`.
    pub fn decode_small_exponent(
        &self,
        target: &GroupElement,
        candidates: &[Scalar],
    ) -> Result<Option<usize>, GroupError> {
        if candidates.is_empty() {
            return Err(GroupError::EmptyCandidates);
        }
        let distinct: HashSet<&Scalar> = candidates.iter().collect();
        if distinct.len() != candidates.len() {
            return Err(GroupError::DuplicateCandidates);
        }
        Ok(candidates.iter().position(|c| self.g_pow(c) == *target))
    }

    /// Appends `e` as a length-prefixed, fixed-width big-endian integer.
    pub fn encode_element(&self, e: &GroupElement, out: &mut Vec<u8>) {
        match &e.0 {
            Residue::Word(x) => put_word(out, *x, self.element_len()),
            Residue::Wide(x) => codec::put_padded(out, &x.to_bytes_be(), self.element_len()),
        }
    }

    pub fn encode_scalar(&self, s: &Scalar, out: &mut Vec<u8>) {
        match &s.0 {
            Residue::Word(x) => put_word(out, *x, self.scalar_len()),
            Residue::Wide(x) => {
                let bytes = if x.is_zero() { Vec::new() } else { x.to_bytes_be() };
                codec::put_padded(out, &bytes, self.scalar_len())
            }
        }
    }

    pub fn decode_element(&self, r: &mut Reader<'_>) -> Result<GroupElement, GroupError> {
        let raw = fixed_width(r, self.element_len())?;
        if let (Arith::Word { mont, .. }, Some(x)) = (&self.arith, word_from_bytes(raw)) {
            if x == 0 || x >= mont.modulus {
                return Err(GroupError::OutOfRange);
            }
            return Ok(GroupElement(Residue::Word(x)));
        }
        self.element_from_biguint(&BigUint::from_bytes_be(raw))
    }

    /// Decodes an element and rejects anything outside the subgroup.
    pub fn decode_member(&self, r: &mut Reader<'_>) -> Result<GroupElement, GroupError> {
        let e = self.decode_element(r)?;
        if self.is_member(&e) {
            Ok(e)
        } else {
            Err(GroupError::NotInGroup)
        }
    }

    pub fn decode_scalar(&self, r: &mut Reader<'_>) -> Result<Scalar, GroupError> {
        let raw = fixed_width(r, self.scalar_len())?;
        if let (Arith::Word { q, .. }, Some(x)) = (&self.arith, word_from_bytes(raw)) {
            if x >= *q {
                return Err(GroupError::OutOfRange);
            }
            return Ok(Scalar(Residue::Word(x)));
        }
        self.scalar_canonical(&BigUint::from_bytes_be(raw))
    }

    /// Length-prefixed big-endian `p, q, g, h`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for x in [&self.p, &self.q, &self.g, &self.h] {
            codec::put_bytes(&mut out, &x.to_bytes_be());
        }
        out
    }

    pub fn read_from(r: &mut Reader<'_>) -> Result<Self, GroupError> {
        let mut vals = Vec::with_capacity(4);
        for _ in 0..4 {
            vals.push(BigUint::from_bytes_be(r.bytes()?));
        }
        let h = vals.pop().unwrap();
        let g = vals.pop().unwrap();
        let q = vals.pop().unwrap();
        let p = vals.pop().unwrap();
        Self::new(p, q, g, h)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GroupError> {
        let mut r = Reader::new(bytes);
        let params = Self::read_from(&mut r)?;
        r.finish()?;
        Ok(params)
    }

    /// Config-file form: one `name = hex` line per parameter.
    pub fn to_hex(&self) -> String {
        format!(
            "p = {:x}\nq = {:x}\ng = {:x}\nh = {:x}\n",
            self.p, self.q, self.g, self.h
        )
    }

    pub fn from_hex(text: &str) -> Result<Self, GroupError> {
        let mut fields: [Option<BigUint>; 4] = Default::default();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| GroupError::InvalidParams(format!("malformed line `{line}`")))?;
            let slot = match key.trim() {
                "p" => 0,
                "q" => 1,
                "g" => 2,
                "h" => 3,
                other => return Err(GroupError::InvalidParams(format!("unknown key `{other}`"))),
            };
            let value = value.trim().trim_start_matches("0x");
            fields[slot] = Some(BigUint::parse_bytes(value.as_bytes(), 16).ok_or_else(|| {
                GroupError::InvalidParams(format!("`{}` is not hexadecimal", key.trim()))
            })?);
        }
        let [p, q, g, h] = fields;
        let missing = || GroupError::InvalidParams("missing one of p, q, g, h".into());
        Self::new(
            p.ok_or_else(missing)?,
            q.ok_or_else(missing)?,
            g.ok_or_else(missing)?,
            h.ok_or_else(missing)?,
        )
    }
}

/// Standard `q` bit length used for a given modulus size.
/// A length-prefixed field that must be exactly `width` bytes, so every
/// value has a single encoding.
fn fixed_width<'a>(r: &mut Reader<'a>, width: usize) -> Result<&'a [u8], GroupError> {
    let raw = r.bytes()?;
    if raw.len() != width {
        return Err(CodecError::Invalid(format!("field of {} bytes, expected {width}", raw.len())).into());
    }
    Ok(raw)
}

fn put_word(out: &mut Vec<u8>, x: u64, width: usize) {
    let bytes = x.to_be_bytes();
    if width >= 8 {
        codec::put_padded(out, &bytes, width);
    } else {
        debug_assert!(x >> (8 * width) == 0);
        codec::put_u32(out, width as u32);
        out.extend_from_slice(&bytes[8 - width..]);
    }
}

/// Big-endian bytes as a `u64`, if they fit.
fn word_from_bytes(raw: &[u8]) -> Option<u64> {
    let significant = raw.iter().position(|&b| b != 0).map_or(&raw[raw.len()..], |i| &raw[i..]);
    if significant.len() > 8 {
        return None;
    }
    Some(significant.iter().fold(0u64, |acc, &b| (acc << 8) | b as u64))
}

pub fn default_q_bits(p_bits: u64) -> u64 {
    match p_bits {
        0..=71 => p_bits.saturating_sub(8).max(16),
        72..=167 => p_bits - 8,
        168..=2047 => 160,
        _ => 256,
    }
}
