//! Interactive disjunctive (OR) proofs over Pedersen commitments.
//!
//! A statement is a commitment `Y = g^m h^t` and a list of candidate
//! exponents; the prover shows `m` is one of them without saying which. Each
//! disjunct `j` is a Schnorr proof of knowledge of `log_h(Y / g^cand_j)`;
//! the prover simulates every disjunct except the true one and splits the
//! verifier's challenge so the shares sum to it.
//!
//! The same machinery covers per-slot membership (P1), the vector-sum check
//! (P2) and, for OUE, the aggregate mask check (P3) is a direct opening of
//! the product of all commitments.

use std::collections::HashSet;

use rand::RngCore;
use thiserror::Error;

use crate::group::{GroupElement, GroupParams, Scalar};
use crate::ot::CipherPair;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProofError {
    #[error("candidate exponents are not distinct mod q")]
    DuplicateCandidates,
    #[error("a statement needs at least two candidates")]
    TooFewCandidates,
    #[error("true index {index} outside {len} candidates")]
    BadIndex { index: usize, len: usize },
}

/// Why a verification equation was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProofFailure {
    /// Commitment/challenge/response counts do not match the disjunct count.
    Structure,
    /// The challenge shares do not sum to the verifier's challenge.
    ChallengeSum,
    /// `h^s != com * (Y / g^cand)^c` for this disjunct.
    Equation { disjunct: usize },
    /// The aggregate opening does not match the product of commitments.
    Aggregate,
}

/// Candidate exponents together with cached `g^-cand` values.
#[derive(Debug, Clone)]
pub struct Candidates {
    exponents: Vec<Scalar>,
    inverse_powers: Vec<GroupElement>,
}

impl Candidates {
    pub fn new(params: &GroupParams, exponents: Vec<Scalar>) -> Result<Self, ProofError> {
        if exponents.len() < 2 {
            return Err(ProofError::TooFewCandidates);
        }
        if exponents.iter().collect::<HashSet<_>>().len() != exponents.len() {
            return Err(ProofError::DuplicateCandidates);
        }
        let inverse_powers = exponents
            .iter()
            .map(|e| params.g_pow(&params.scalar_neg(e)))
            .collect();
        Ok(Self {
            exponents,
            inverse_powers,
        })
    }

    pub fn exponents(&self) -> &[Scalar] {
        &self.exponents
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    /// Index `j` with `target == g^cand_j`, if any.
    pub fn find(&self, params: &GroupParams, target: &GroupElement) -> Option<usize> {
        let one = params.identity();
        self.inverse_powers
            .iter()
            .position(|inv| params.mul(target, inv) == one)
    }

    /// `Y / g^cand_j`.
    fn strip(&self, params: &GroupParams, statement: &GroupElement, j: usize) -> GroupElement {
        params.mul(statement, &self.inverse_powers[j])
    }
}

/// One OR-statement: "`statement` commits to one of `candidates`".
#[derive(Debug, Clone, Copy)]
pub struct DisjunctSpec<'a> {
    pub statement: &'a GroupElement,
    pub candidates: &'a Candidates,
}

/// First prover message: one commitment per disjunct.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrProofCommit {
    pub commitments: Vec<GroupElement>,
}

/// Final prover message: challenge shares and responses per disjunct.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrProofResponse {
    pub challenges: Vec<Scalar>,
    pub responses: Vec<Scalar>,
}

/// Prover state kept between commitment and response.
#[derive(Debug, Clone)]
pub struct OrProverState {
    true_index: usize,
    nonce: Scalar,
    witness: Scalar,
    challenges: Vec<Scalar>,
    responses: Vec<Scalar>,
}

/// Commits to an OR-proof whose real branch is `true_index`, with `witness`
/// the `h`-exponent of `statement / g^candidates[true_index]`.
///
/// The witness is not checked; an inconsistent one yields a proof the
/// verifier rejects.
pub fn or_prove_commit<R: RngCore + ?Sized>(
    params: &GroupParams,
    spec: DisjunctSpec<'_>,
    true_index: usize,
    witness: &Scalar,
    rng: &mut R,
) -> Result<(OrProofCommit, OrProverState), ProofError> {
    let len = spec.candidates.len();
    if true_index >= len {
        return Err(ProofError::BadIndex { index: true_index, len });
    }
    let nonce = params.random_scalar(rng);
    let mut commitments = Vec::with_capacity(len);
    let mut challenges = Vec::with_capacity(len);
    let mut responses = Vec::with_capacity(len);
    for j in 0..len {
        if j == true_index {
            commitments.push(params.h_pow(&nonce));
            challenges.push(params.scalar_from_u64(0));
            responses.push(params.scalar_from_u64(0));
        } else {
            let c = params.random_scalar(rng);
            let s = params.random_scalar(rng);
            let stripped = spec.candidates.strip(params, spec.statement, j);
            // com = h^s / (Y / g^cand)^c
            let com = params.mul(&params.h_pow(&s), &params.pow(&stripped, &params.scalar_neg(&c)));
            commitments.push(com);
            challenges.push(c);
            responses.push(s);
        }
    }
    Ok((
        OrProofCommit { commitments },
        OrProverState {
            true_index,
            nonce,
            witness: witness.clone(),
            challenges,
            responses,
        },
    ))
}

/// Verifier challenge, uniform in `Z_q`.
pub fn or_challenge<R: RngCore + ?Sized>(params: &GroupParams, rng: &mut R) -> Scalar {
    params.random_scalar(rng)
}

/// A transcript with every disjunct simulated, as produced by a prover that
/// holds no witness at all. It satisfies each disjunct's equation but its
/// shares only sum to the verifier's challenge by luck.
#[derive(Debug, Clone)]
pub struct SimulatedProof {
    pub commit: OrProofCommit,
    pub response: OrProofResponse,
}

pub fn or_simulate<R: RngCore + ?Sized>(params: &GroupParams, spec: DisjunctSpec<'_>, rng: &mut R) -> SimulatedProof {
    let len = spec.candidates.len();
    let mut commitments = Vec::with_capacity(len);
    let mut challenges = Vec::with_capacity(len);
    let mut responses = Vec::with_capacity(len);
    for j in 0..len {
        let c = params.random_scalar(rng);
        let s = params.random_scalar(rng);
        let stripped = spec.candidates.strip(params, spec.statement, j);
        commitments.push(params.mul(&params.h_pow(&s), &params.pow(&stripped, &params.scalar_neg(&c))));
        challenges.push(c);
        responses.push(s);
    }
    SimulatedProof {
        commit: OrProofCommit { commitments },
        response: OrProofResponse { challenges, responses },
    }
}

/// Completes the proof for challenge `x`.
pub fn or_prove_respond(params: &GroupParams, state: OrProverState, x: &Scalar) -> OrProofResponse {
    let OrProverState {
        true_index,
        nonce,
        witness,
        mut challenges,
        mut responses,
    } = state;
    let simulated = params.scalar_sum(
        challenges
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != true_index)
            .map(|(_, c)| c),
    );
    let c_true = params.scalar_sub(x, &simulated);
    responses[true_index] = params.scalar_add(&nonce, &params.scalar_mul(&c_true, &witness));
    challenges[true_index] = c_true;
    OrProofResponse {
        challenges,
        responses,
    }
}

/// Accepts iff the shares sum to `x` and every disjunct's equation holds.
pub fn or_verify(
    params: &GroupParams,
    spec: DisjunctSpec<'_>,
    commit: &OrProofCommit,
    x: &Scalar,
    response: &OrProofResponse,
) -> Result<(), ProofFailure> {
    let len = spec.candidates.len();
    if commit.commitments.len() != len || response.challenges.len() != len || response.responses.len() != len {
        return Err(ProofFailure::Structure);
    }
    if params.scalar_sum(&response.challenges) != *x {
        return Err(ProofFailure::ChallengeSum);
    }
    for j in 0..len {
        let stripped = spec.candidates.strip(params, spec.statement, j);
        let lhs = params.h_pow(&response.responses[j]);
        let rhs = params.mul(&commit.commitments[j], &params.pow(&stripped, &response.challenges[j]));
        if lhs != rhs {
            return Err(ProofFailure::Equation { disjunct: j });
        }
    }
    Ok(())
}

/// The opening `sum t` of the product of all commitments.
pub fn aggregate_mask_prove(params: &GroupParams, masks: &[Scalar]) -> Scalar {
    params.scalar_sum(masks)
}

/// Accepts iff `h^mask_sum * g^expected_exponent == prod y`.
pub fn aggregate_mask_verify(
    params: &GroupParams,
    pairs: &[CipherPair],
    mask_sum: &Scalar,
    expected_exponent: &Scalar,
) -> Result<(), ProofFailure> {
    let product = params.product(pairs.iter().map(|p| &p.y));
    if params.commit(expected_exponent, mask_sum) == product {
        Ok(())
    } else {
        Err(ProofFailure::Aggregate)
    }
}
