//! 1-out-of-n oblivious transfer in the Naor-Pinkas style, used so the
//! verifier (not the prover) picks which slot of the committed distribution
//! vector becomes the report.
//!
//! The verifier publishes `A = g^a`, `B = g^b`, `C = g^(ab - sigma + 1)`.
//! For slot `i` (1-based) the prover draws `r, s` and sends
//!
//! ```text
//! w = g^r A^s                      = g^(r + a s)
//! k = B^r (C g^(i-1))^s            = g^((r + a s) b + (i - sigma) s)
//! y = g^m h^t,  t = int(k) mod q
//! ```
//!
//! Only at `i = sigma` does `w^b` reproduce `k`, letting the verifier strip
//! `h^t` and recover `g^m`. `y` is a Pedersen commitment to `m` with
//! randomness `t`, which the prover knows and later uses as its proof
//! witness.

use rand::RngCore;
use thiserror::Error;

use crate::codec::Reader;
use crate::group::{GroupElement, GroupError, GroupParams, Scalar};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OtError {
    #[error("slot index {index} outside [1, {n}]")]
    IndexOutOfRange { index: u64, n: u64 },
    #[error("decrypted payload is not one of the candidate exponents")]
    NotFound,
    #[error(transparent)]
    Group(#[from] GroupError),
}

/// The verifier's selection message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OtQuery {
    pub a: GroupElement,
    pub b: GroupElement,
    pub c: GroupElement,
}

/// Verifier-side secrets of one query. `sigma` is never revealed.
#[derive(Debug, Clone)]
pub struct OtSecret {
    b: Scalar,
    sigma: u64,
}

impl OtSecret {
    /// The selected slot (1-based).
    pub fn sigma(&self) -> u64 {
        self.sigma
    }
}

/// One encrypted slot `(w, y)`; `y` doubles as the Pedersen commitment the
/// proofs operate on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CipherPair {
    pub w: GroupElement,
    pub y: GroupElement,
}

impl OtQuery {
    pub fn encode(&self, params: &GroupParams, out: &mut Vec<u8>) {
        for e in [&self.a, &self.b, &self.c] {
            params.encode_element(e, out);
        }
    }

    pub fn decode(params: &GroupParams, r: &mut Reader<'_>) -> Result<Self, GroupError> {
        Ok(Self {
            a: params.decode_element(r)?,
            b: params.decode_element(r)?,
            c: params.decode_element(r)?,
        })
    }

    pub fn is_valid(&self, params: &GroupParams) -> bool {
        [&self.a, &self.b, &self.c].iter().all(|e| params.is_member(e))
    }
}

impl CipherPair {
    pub fn encode(&self, params: &GroupParams, out: &mut Vec<u8>) {
        params.encode_element(&self.w, out);
        params.encode_element(&self.y, out);
    }

    pub fn decode(params: &GroupParams, r: &mut Reader<'_>) -> Result<Self, GroupError> {
        Ok(Self {
            w: params.decode_element(r)?,
            y: params.decode_element(r)?,
        })
    }
}

/// Builds the query selecting slot `sigma` (1-based).
pub fn ot_query<R: RngCore + ?Sized>(params: &GroupParams, sigma: u64, rng: &mut R) -> (OtQuery, OtSecret) {
    let a = params.random_scalar(rng);
    let b = params.random_scalar(rng);
    let ab = params.scalar_mul(&a, &b);
    // ab - sigma + 1
    let c_exp = params.scalar_sub(&params.scalar_add(&ab, &params.scalar_from_u64(1)), &params.scalar_from_u64(sigma));
    let query = OtQuery {
        a: params.g_pow(&a),
        b: params.g_pow(&b),
        c: params.g_pow(&c_exp),
    };
    (query, OtSecret { b, sigma })
}

/// Encrypts `g^payload` into slot `index` (1-based), returning the pair and
/// the commitment randomness `t`.
pub fn ot_encrypt_slot<R: RngCore + ?Sized>(
    params: &GroupParams,
    query: &OtQuery,
    index: u64,
    payload: &Scalar,
    rng: &mut R,
) -> (CipherPair, Scalar) {
    let offset = params.g_pow(&params.scalar_from_u64(index.saturating_sub(1)));
    let slot_base = params.mul(&query.c, &offset);
    encrypt_with_base(params, query, &slot_base, payload, rng)
}

fn encrypt_with_base<R: RngCore + ?Sized>(
    params: &GroupParams,
    query: &OtQuery,
    slot_base: &GroupElement,
    payload: &Scalar,
    rng: &mut R,
) -> (CipherPair, Scalar) {
    let r = params.random_scalar(rng);
    let s = params.random_scalar(rng);
    let w = params.mul(&params.g_pow(&r), &params.pow(&query.a, &s));
    let key = params.mul(&params.pow(&query.b, &r), &params.pow(slot_base, &s));
    let mask = params.element_to_scalar(&key);
    let y = params.commit(payload, &mask);
    (CipherPair { w, y }, mask)
}

/// Encrypts a whole vector of payloads into slots `1..=len`.
pub fn ot_encrypt_vector<R: RngCore + ?Sized>(
    params: &GroupParams,
    query: &OtQuery,
    payloads: &[Scalar],
    rng: &mut R,
) -> (Vec<CipherPair>, Vec<Scalar>) {
    let g = params.g();
    let mut slot_base = query.c.clone();
    let mut pairs = Vec::with_capacity(payloads.len());
    let mut masks = Vec::with_capacity(payloads.len());
    for payload in payloads {
        let (pair, mask) = encrypt_with_base(params, query, &slot_base, payload, rng);
        pairs.push(pair);
        masks.push(mask);
        slot_base = params.mul(&slot_base, &g);
    }
    (pairs, masks)
}

/// Strips the mask from the selected slot, yielding `g^m`.
pub fn ot_unmask(params: &GroupParams, secret: &OtSecret, pair: &CipherPair) -> GroupElement {
    let key = params.pow(&pair.w, &secret.b);
    let mask = params.element_to_scalar(&key);
    params.mul(&pair.y, &params.inv(&params.h_pow(&mask)))
}

/// Recovers the index of the selected slot's payload among `candidates`.
pub fn ot_decrypt(
    params: &GroupParams,
    secret: &OtSecret,
    pair: &CipherPair,
    candidates: &[Scalar],
) -> Result<usize, OtError> {
    let target = ot_unmask(params, secret, pair);
    params
        .decode_small_exponent(&target, candidates)?
        .ok_or(OtError::NotFound)
}
