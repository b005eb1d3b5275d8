//! Prover and verifier state machines for secure kRR, OUE and OLH.
//!
//! The prover commits to a whole discretized distribution (a vector of `n`
//! slots, or for OUE `d` bit vectors), the verifier picks one slot per
//! vector through oblivious transfer, and the prover proves that every slot
//! holds a legal value (P1), that each vector has the agreed composition
//! (P2) and, for OUE, that exactly one vector is the high-probability one
//! (P3). The report is whatever the verifier decrypts, so the prover cannot
//! choose it.
//!
//! Message flow (sequential mode):
//!
//! ```text
//! P -> V  CONFIG     mechanism, epsilon, d, width, range, flags
//! V -> P  CONFIG     group parameters, OLH seed
//! V -> P  OT-QUERY   one query per vector
//! P -> V  CIPHERS, P1-COMMIT
//! V -> P  CHALLENGE  one per slot
//! P -> V  P1-RESP, P2-COMMIT
//! V -> P  CHALLENGE  one per vector
//! P -> V  P2-RESP [, P3-SUM]
//! V -> P  VERDICT
//! ```
//!
//! In pipelined mode P2-COMMIT travels with P1-COMMIT and both challenge
//! frames go out together, saving one round trip at identical byte cost.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::codec::{self, CodecError, Reader};
use crate::group::{GroupError, GroupParams, Scalar};
use crate::ldp::{self, LdpError, Mechanism, MechanismKind, Report};
use crate::ot::{self, CipherPair, OtQuery, OtSecret};
use crate::params::{self, KrrSharedParams, OueSharedParams, ParamsError};
use crate::proofs::{
    self, Candidates, DisjunctSpec, OrProofCommit, OrProofResponse, OrProverState, ProofError, ProofFailure,
    SimulatedProof,
};
use crate::transport::{Frame, SessionMetrics, Tag};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Ldp(#[from] LdpError),
    #[error(transparent)]
    Proof(#[from] ProofError),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error("input {value} outside [0, {d})")]
    InputOutOfRange { value: u64, d: u64 },
    #[error("behavior {behavior:?} does not apply to {mechanism}")]
    Unsupported { behavior: Behavior, mechanism: Mechanism },
    #[error("unexpected {0} frame")]
    Unexpected(&'static str),
    #[error("malformed {tag} frame: {detail}")]
    Malformed { tag: &'static str, detail: String },
    #[error("no accepted reports to estimate from")]
    EmptyCollection,
}

/// What both parties agree on before a session starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionConfig {
    pub kind: MechanismKind,
    pub width: u64,
    /// Send P2 commitments alongside P1 commitments.
    pub pipelined: bool,
}

impl SessionConfig {
    pub fn new(kind: MechanismKind, width: u64) -> Self {
        Self {
            kind,
            width,
            pipelined: false,
        }
    }

    pub fn pipelined(mut self, on: bool) -> Self {
        self.pipelined = on;
        self
    }

    fn encode(&self, out: &mut Vec<u8>) {
        let (tag, range) = match self.kind {
            MechanismKind::Krr { .. } => (0u8, 0),
            MechanismKind::Oue { .. } => (1, 0),
            MechanismKind::Olh { range, .. } => (2, range),
        };
        codec::put_u8(out, tag);
        codec::put_f64(out, self.kind.epsilon());
        codec::put_u32(out, self.kind.d() as u32);
        codec::put_u32(out, self.width as u32);
        codec::put_u32(out, range as u32);
        codec::put_u8(out, self.pipelined as u8);
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let tag = r.u8()?;
        let epsilon = r.f64()?;
        let d = r.u32()? as u64;
        let width = r.u32()? as u64;
        let range = r.u32()? as u64;
        let flags = r.u8()?;
        let kind = match tag {
            0 => MechanismKind::Krr { d, epsilon },
            1 => MechanismKind::Oue { d, epsilon },
            2 => MechanismKind::Olh { d, epsilon, range },
            t => return Err(CodecError::Invalid(format!("mechanism tag {t}"))),
        };
        if flags & !1 != 0 {
            return Err(CodecError::Invalid(format!("unknown flags {flags:#04x}")));
        }
        Ok(Self {
            kind,
            width,
            pipelined: flags & 1 == 1,
        })
    }

    /// Same mechanism and parameters; the pipelining flag is the client's
    /// choice and is ignored.
    fn same_protocol(&self, other: &SessionConfig) -> bool {
        self.width == other.width
            && self.kind.mechanism() == other.kind.mechanism()
            && self.kind.d() == other.kind.d()
            && self.kind.epsilon().to_bits() == other.kind.epsilon().to_bits()
            && match (self.kind, other.kind) {
                (MechanismKind::Olh { range: a, .. }, MechanismKind::Olh { range: b, .. }) => a == b,
                _ => true,
            }
    }
}

#[derive(Debug)]
enum Shape {
    /// kRR, or OLH over the hashed domain: one vector of `n` categories.
    Slots {
        shared: KrrSharedParams,
        /// `z^j` for `j` in `0..=k`; index `k` is deliberately out of domain.
        payloads: Vec<Scalar>,
        slot: Candidates,
        sum: Candidates,
    },
    /// OUE: `d` vectors of `n` bits.
    Bits {
        shared: OueSharedParams,
        payloads: Vec<Scalar>,
        slot: Candidates,
        sum: Candidates,
        total: Scalar,
    },
}

/// A validated configuration bound to a group, with every candidate set
/// precomputed. Immutable and shared by all sessions of one collection.
#[derive(Debug)]
pub struct SessionPlan {
    config: SessionConfig,
    group: Arc<GroupParams>,
    group_bytes: Vec<u8>,
    shape: Shape,
}

impl SessionPlan {
    pub fn new(config: SessionConfig, group: Arc<GroupParams>) -> Result<Arc<Self>, ProtocolError> {
        config.kind.validate()?;
        let g = &*group;
        let shape = match config.kind {
            MechanismKind::Krr { d, epsilon } => slots_shape(g, epsilon, config.width, d)?,
            MechanismKind::Olh { epsilon, range, .. } => slots_shape(g, epsilon, config.width, range)?,
            MechanismKind::Oue { d, epsilon } => {
                let shared = params::oue_shared_parameters(epsilon, config.width, d)?;
                shared.check_group_order(g.q())?;
                let payloads = (0..3).map(|b| g.scalar_from_u64(b)).collect();
                let slot = Candidates::new(g, vec![g.scalar_from_u64(0), g.scalar_from_u64(1)])?;
                let sum = Candidates::new(g, vec![g.scalar_from_u64(shared.half()), g.scalar_from_u64(shared.l)])?;
                let total = g.scalar_from_u64(shared.total_exponent());
                Shape::Bits {
                    shared,
                    payloads,
                    slot,
                    sum,
                    total,
                }
            }
        };
        Ok(Arc::new(Self {
            config,
            group_bytes: group.to_bytes(),
            group,
            shape,
        }))
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn kind(&self) -> &MechanismKind {
        &self.config.kind
    }

    pub fn group(&self) -> &GroupParams {
        &self.group
    }

    pub fn krr_params(&self) -> Option<&KrrSharedParams> {
        match &self.shape {
            Shape::Slots { shared, .. } => Some(shared),
            Shape::Bits { .. } => None,
        }
    }

    pub fn oue_params(&self) -> Option<&OueSharedParams> {
        match &self.shape {
            Shape::Bits { shared, .. } => Some(shared),
            Shape::Slots { .. } => None,
        }
    }

    /// Number of committed vectors: 1, or `d` for OUE.
    pub fn vectors(&self) -> usize {
        match &self.shape {
            Shape::Slots { .. } => 1,
            Shape::Bits { shared, .. } => shared.d as usize,
        }
    }

    /// Slots per vector.
    pub fn slots(&self) -> usize {
        match &self.shape {
            Shape::Slots { shared, .. } => shared.n as usize,
            Shape::Bits { shared, .. } => shared.n as usize,
        }
    }

    pub fn slot_candidates(&self) -> &Candidates {
        match &self.shape {
            Shape::Slots { slot, .. } | Shape::Bits { slot, .. } => slot,
        }
    }

    pub fn sum_candidates(&self) -> &Candidates {
        match &self.shape {
            Shape::Slots { sum, .. } | Shape::Bits { sum, .. } => sum,
        }
    }

    fn payloads(&self) -> &[Scalar] {
        match &self.shape {
            Shape::Slots { payloads, .. } | Shape::Bits { payloads, .. } => payloads,
        }
    }

    /// Value index that no honest slot may hold.
    fn out_of_domain_value(&self) -> u64 {
        self.payloads().len() as u64 - 1
    }

    /// Support probabilities of the mechanism actually executed, for the
    /// estimator: the discretized `p`, and `q` over the original domain.
    pub fn estimator_probabilities(&self) -> (f64, f64) {
        match (&self.shape, self.config.kind) {
            (Shape::Slots { shared, .. }, MechanismKind::Olh { range, .. }) => {
                (shared.p_approx(), 1.0 / range as f64)
            }
            (Shape::Slots { shared, .. }, _) => (shared.p_approx(), shared.q_approx()),
            (Shape::Bits { shared, .. }, _) => (shared.p_approx(), shared.q_approx()),
        }
    }
}

fn slots_shape(group: &GroupParams, epsilon: f64, width: u64, k: u64) -> Result<Shape, ProtocolError> {
    let shared = params::decide_shared_parameters(epsilon, width, k)?;
    shared.check_group_order(group.q())?;
    let payloads: Vec<Scalar> = (0..=k).map(|j| group.scalar(&shared.slot_exponent(j))).collect();
    let slot = Candidates::new(group, payloads[..k as usize].to_vec())?;
    let sum = Candidates::new(group, (0..k).map(|j| group.scalar(&shared.sum_exponent(j))).collect())?;
    Ok(Shape::Slots {
        shared,
        payloads,
        slot,
        sum,
    })
}

/// How a prover behaves. Everything but `Honest` and `ForeignSeed` is an
/// attempt at output manipulation that the verifier must halt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Behavior {
    Honest,
    /// OLH: hash the input under a seed of the prover's choosing. This only
    /// changes the effective input, so the session is still accepted.
    ForeignSeed(u64),
    /// Every slot holds `target` (OUE: the target's vector is all ones).
    PointMass { target: u64 },
    /// One slot of another category is moved to the true category
    /// (OUE: the true vector gets one extra one).
    SkewedCounts,
    /// One slot encodes a value outside the candidate set.
    OutOfDomainPayload,
    /// OUE: a low-probability vector whose bit count is neither `n/2` nor `l`.
    OueBitSumViolation,
    /// OUE: two vectors with `n/2` ones.
    OueDoublePType,
    /// OUE: no vector with `n/2` ones.
    OueNoPType,
    /// Point-mass vector with a fully simulated P2 proof whose challenge
    /// shares do not sum to the challenge.
    ChallengeSumForgery { target: u64 },
    /// Point-mass vector with a P2 proof simulated for a guessed challenge,
    /// patched afterwards so the shares sum correctly.
    GuessedChallenge { target: u64 },
    /// An out-of-domain slot whose P1 proof is copied from another slot.
    ReusedProof,
    /// Honest commitments but `w` values unrelated to the masks, so the
    /// selected slot cannot be opened.
    InconsistentCipher,
}

impl Behavior {
    pub fn applies_to(&self, mechanism: Mechanism) -> bool {
        match self {
            Behavior::ForeignSeed(_) => mechanism == Mechanism::Olh,
            Behavior::OueBitSumViolation | Behavior::OueDoublePType | Behavior::OueNoPType => {
                mechanism == Mechanism::Oue
            }
            _ => true,
        }
    }

    /// The phase at which the verifier is expected to halt, if any.
    pub fn expected_halt(&self) -> Option<Phase> {
        match self {
            Behavior::Honest | Behavior::ForeignSeed(_) => None,
            Behavior::OutOfDomainPayload | Behavior::ReusedProof => Some(Phase::P1),
            Behavior::PointMass { .. }
            | Behavior::SkewedCounts
            | Behavior::OueBitSumViolation
            | Behavior::ChallengeSumForgery { .. }
            | Behavior::GuessedChallenge { .. } => Some(Phase::P2),
            Behavior::OueDoublePType | Behavior::OueNoPType => Some(Phase::P3),
            Behavior::InconsistentCipher => Some(Phase::Decrypt),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Behavior::Honest => "honest",
            Behavior::ForeignSeed(_) => "foreign-seed",
            Behavior::PointMass { .. } => "point-mass",
            Behavior::SkewedCounts => "skewed-counts",
            Behavior::OutOfDomainPayload => "out-of-domain-payload",
            Behavior::OueBitSumViolation => "oue-bit-sum-violation",
            Behavior::OueDoublePType => "oue-double-p-type",
            Behavior::OueNoPType => "oue-no-p-type",
            Behavior::ChallengeSumForgery { .. } => "challenge-sum-forgery",
            Behavior::GuessedChallenge { .. } => "guessed-challenge",
            Behavior::ReusedProof => "reused-proof",
            Behavior::InconsistentCipher => "inconsistent-cipher",
        }
    }

    fn target(&self) -> Option<u64> {
        match *self {
            Behavior::PointMass { target }
            | Behavior::ChallengeSumForgery { target }
            | Behavior::GuessedChallenge { target } => Some(target),
            _ => None,
        }
    }

    fn forges_p2(&self) -> bool {
        matches!(
            self,
            Behavior::ChallengeSumForgery { .. } | Behavior::GuessedChallenge { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Setup,
    Framing,
    P1,
    P2,
    P3,
    Decrypt,
}

impl Phase {
    const ALL: [Phase; 6] = [
        Phase::Setup,
        Phase::Framing,
        Phase::P1,
        Phase::P2,
        Phase::P3,
        Phase::Decrypt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Setup => "setup",
            Phase::Framing => "framing",
            Phase::P1 => "p1",
            Phase::P2 => "p2",
            Phase::P3 => "p3",
            Phase::Decrypt => "decrypt",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HaltReason {
    ConfigMismatch,
    Malformed(String),
    Unexpected(Tag),
    /// Proof `index` (a slot for P1, a vector for P2) failed.
    Proof { index: usize, failure: ProofFailure },
    /// The selected slot of this vector opened to no candidate.
    Undecodable { vector: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Halt {
    pub phase: Phase,
    pub reason: HaltReason,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Accepted(Report),
    Halted(Halt),
    Aborted(String),
}

impl Verdict {
    pub fn report(&self) -> Option<&Report> {
        match self {
            Verdict::Accepted(r) => Some(r),
            _ => None,
        }
    }

    pub fn halt_phase(&self) -> Option<Phase> {
        match self {
            Verdict::Halted(h) => Some(h.phase),
            _ => None,
        }
    }
}

/// What the prover learns at the end of a session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClientOutcome {
    Accepted,
    Rejected(Phase),
    Aborted(String),
}

fn verdict_body(verdict: &Verdict) -> Vec<u8> {
    match verdict {
        Verdict::Accepted(_) => vec![0, 0],
        Verdict::Halted(h) => vec![1, Phase::ALL.iter().position(|p| *p == h.phase).unwrap_or(0) as u8],
        Verdict::Aborted(_) => vec![2, 0],
    }
}

fn parse_verdict(body: &[u8]) -> ClientOutcome {
    match body {
        [0, _] => ClientOutcome::Accepted,
        [1, p] => ClientOutcome::Rejected(Phase::ALL.get(*p as usize).copied().unwrap_or(Phase::Framing)),
        _ => ClientOutcome::Aborted("server aborted".into()),
    }
}

fn malformed(tag: Tag, detail: impl ToString) -> ProtocolError {
    ProtocolError::Malformed {
        tag: tag.name(),
        detail: detail.to_string(),
    }
}

fn put_scalars(g: &GroupParams, items: &[Scalar], out: &mut Vec<u8>) {
    codec::put_u32(out, items.len() as u32);
    for s in items {
        g.encode_scalar(s, out);
    }
}

fn read_scalars(g: &GroupParams, r: &mut Reader<'_>, expect: usize) -> Result<Vec<Scalar>, GroupError> {
    let n = r.count(1)?;
    if n != expect {
        return Err(CodecError::Invalid(format!("expected {expect} scalars, got {n}")).into());
    }
    (0..n).map(|_| g.decode_scalar(r)).collect()
}

fn put_commits(g: &GroupParams, commits: &[OrProofCommit], out: &mut Vec<u8>) {
    codec::put_u32(out, commits.len() as u32);
    for c in commits {
        codec::put_u32(out, c.commitments.len() as u32);
        for e in &c.commitments {
            g.encode_element(e, out);
        }
    }
}

/// Commitments are not membership-checked: the verification equation
/// `h^s = com * X^c` forces any accepted commitment into the subgroup.
fn read_commits(
    g: &GroupParams,
    r: &mut Reader<'_>,
    expect: usize,
    disjuncts: usize,
) -> Result<Vec<OrProofCommit>, GroupError> {
    let n = r.count(1)?;
    if n != expect {
        return Err(CodecError::Invalid(format!("expected {expect} proofs, got {n}")).into());
    }
    (0..n)
        .map(|_| {
            let k = r.count(1)?;
            if k != disjuncts {
                return Err(CodecError::Invalid(format!("expected {disjuncts} disjuncts, got {k}")).into());
            }
            let commitments = (0..k).map(|_| g.decode_element(r)).collect::<Result<_, _>>()?;
            Ok(OrProofCommit { commitments })
        })
        .collect()
}

fn put_responses(g: &GroupParams, responses: &[OrProofResponse], out: &mut Vec<u8>) {
    codec::put_u32(out, responses.len() as u32);
    for resp in responses {
        codec::put_u32(out, resp.challenges.len() as u32);
        for s in resp.challenges.iter().chain(&resp.responses) {
            g.encode_scalar(s, out);
        }
    }
}

fn read_responses(
    g: &GroupParams,
    r: &mut Reader<'_>,
    expect: usize,
    disjuncts: usize,
) -> Result<Vec<OrProofResponse>, GroupError> {
    let n = r.count(1)?;
    if n != expect {
        return Err(CodecError::Invalid(format!("expected {expect} responses, got {n}")).into());
    }
    (0..n)
        .map(|_| {
            let k = r.count(2)?;
            if k != disjuncts {
                return Err(CodecError::Invalid(format!("expected {disjuncts} disjuncts, got {k}")).into());
            }
            let challenges = (0..k).map(|_| g.decode_scalar(r)).collect::<Result<_, _>>()?;
            let responses = (0..k).map(|_| g.decode_scalar(r)).collect::<Result<_, _>>()?;
            Ok(OrProofResponse { challenges, responses })
        })
        .collect()
}

#[derive(Debug)]
enum SumProof {
    Real(OrProverState),
    Forged(SimulatedProof),
}

#[derive(Debug)]
struct Pending {
    masks: Vec<Scalar>,
    p1: Vec<OrProverState>,
    p2: Vec<SumProof>,
    /// Sequential mode: P2 commitments waiting for the P1 round to finish.
    p2_commit: Option<Frame>,
}

#[derive(Debug)]
enum ProverStage {
    Start,
    AwaitConfig,
    AwaitQuery,
    AwaitP1Challenge(Box<Pending>),
    AwaitP2Challenge(Box<Pending>),
    AwaitVerdict,
    Done,
}

/// Client-side state machine. Feed it every frame from the verifier in
/// order; it returns the frames to send back.
#[derive(Debug)]
pub struct Prover {
    plan: Arc<SessionPlan>,
    input: u64,
    behavior: Behavior,
    rng: ChaCha20Rng,
    session_id: u64,
    seed: u64,
    stage: ProverStage,
    committed: Vec<Vec<u64>>,
    outcome: Option<ClientOutcome>,
}

impl Prover {
    pub fn new(plan: Arc<SessionPlan>, input: u64, behavior: Behavior, rng: ChaCha20Rng) -> Result<Self, ProtocolError> {
        let d = plan.kind().d();
        if input >= d {
            return Err(ProtocolError::InputOutOfRange { value: input, d });
        }
        let mechanism = plan.kind().mechanism();
        if !behavior.applies_to(mechanism) {
            return Err(ProtocolError::Unsupported { behavior, mechanism });
        }
        if let Some(target) = behavior.target() {
            if target >= d {
                return Err(ProtocolError::InputOutOfRange { value: target, d });
            }
        }
        Ok(Self {
            plan,
            input,
            behavior,
            rng,
            session_id: 0,
            seed: 0,
            stage: ProverStage::Start,
            committed: Vec::new(),
            outcome: None,
        })
    }

    pub fn session_id(&self) -> u64 {
        self.session_id
    }

    pub fn outcome(&self) -> Option<&ClientOutcome> {
        self.outcome.as_ref()
    }

    /// The vectors the prover committed to, after shuffling. For kRR/OLH a
    /// value is a category of the (hashed) domain; for OUE a bit.
    pub fn committed_values(&self) -> &[Vec<u64>] {
        &self.committed
    }

    /// The opening CONFIG frame.
    pub fn start(&mut self) -> Frame {
        self.session_id = self.rng.next_u64();
        self.stage = ProverStage::AwaitConfig;
        let mut body = Vec::new();
        self.plan.config.encode(&mut body);
        Frame::new(Tag::Config, self.session_id, body)
    }

    pub fn handle(&mut self, frame: Frame) -> Result<Vec<Frame>, ProtocolError> {
        match frame.tag {
            Tag::Verdict => {
                self.outcome = Some(parse_verdict(&frame.body));
                self.stage = ProverStage::Done;
                return Ok(Vec::new());
            }
            Tag::Abort => {
                self.outcome = Some(ClientOutcome::Aborted(String::from_utf8_lossy(&frame.body).into_owned()));
                self.stage = ProverStage::Done;
                return Ok(Vec::new());
            }
            _ => {}
        }
        if frame.session_id != self.session_id {
            return Err(malformed(frame.tag, "session id mismatch"));
        }
        let stage = std::mem::replace(&mut self.stage, ProverStage::Done);
        match (stage, frame.tag) {
            (ProverStage::AwaitConfig, Tag::Config) => self.on_config(&frame),
            (ProverStage::AwaitQuery, Tag::OtQuery) => self.on_query(&frame),
            (ProverStage::AwaitP1Challenge(pending), Tag::Challenge) => self.on_p1_challenge(&frame, pending),
            (ProverStage::AwaitP2Challenge(pending), Tag::Challenge) => self.on_p2_challenge(&frame, pending),
            (_, tag) => Err(ProtocolError::Unexpected(tag.name())),
        }
    }

    fn abort(&mut self, reason: &str) -> Vec<Frame> {
        self.outcome = Some(ClientOutcome::Aborted(reason.to_string()));
        self.stage = ProverStage::Done;
        vec![Frame::new(Tag::Abort, self.session_id, reason.as_bytes().to_vec())]
    }

    fn on_config(&mut self, frame: &Frame) -> Result<Vec<Frame>, ProtocolError> {
        let mut r = Reader::new(&frame.body);
        let parsed = (|| -> Result<(Vec<u8>, u64), CodecError> {
            let group = r.bytes()?.to_vec();
            let seed = r.u64()?;
            Ok((group, seed))
        })();
        let (group, seed) = parsed.map_err(|e| malformed(Tag::Config, e))?;
        r.finish().map_err(|e| malformed(Tag::Config, e))?;
        if group != self.plan.group_bytes {
            return Ok(self.abort("group parameters differ from the agreed ones"));
        }
        self.seed = seed;
        self.stage = ProverStage::AwaitQuery;
        Ok(Vec::new())
    }

    /// Category the prover actually randomizes (kRR: the input; OLH: its hash).
    fn true_value(&self) -> u64 {
        match *self.plan.kind() {
            MechanismKind::Olh { range, .. } => {
                let seed = match self.behavior {
                    Behavior::ForeignSeed(s) => s,
                    _ => self.seed,
                };
                ldp::olh_hash(seed, self.input, range)
            }
            _ => self.input,
        }
    }

    fn target_value(&self, target: u64) -> u64 {
        match *self.plan.kind() {
            MechanismKind::Olh { range, .. } => ldp::olh_hash(self.seed, target, range),
            _ => target,
        }
    }

    /// Builds the vectors to commit to and, per vector, the sum candidate the
    /// prover claims.
    fn build_vectors(&mut self) -> (Vec<Vec<u64>>, Vec<usize>) {
        let plan = self.plan.clone();
        let ood = plan.out_of_domain_value();
        let c = self.true_value();
        let target = self.behavior.target().map(|t| self.target_value(t));
        let rng = &mut self.rng;
        match &plan.shape {
            Shape::Slots { shared, .. } => {
                let n = shared.n as usize;
                let (mut values, claim) = if let Some(t) = target {
                    (vec![t; n], t)
                } else {
                    let mut v = Vec::with_capacity(n);
                    for k in 0..shared.d {
                        let count = if k == c { shared.l } else { shared.per_other() };
                        v.extend(std::iter::repeat_n(k, count as usize));
                    }
                    (v, c)
                };
                values.shuffle(rng);
                match self.behavior {
                    Behavior::SkewedCounts => {
                        if let Some(slot) = values.iter().position(|&x| x != c) {
                            values[slot] = c;
                        }
                    }
                    Behavior::OutOfDomainPayload => values[0] = ood,
                    Behavior::ReusedProof => values[1] = ood,
                    _ => {}
                }
                (vec![values], vec![claim as usize])
            }
            Shape::Bits { shared, .. } => {
                let d = shared.d;
                let (n, l, half) = (shared.n, shared.l, shared.half());
                let v = self.input;
                let ones: Vec<u64> = (0..d)
                    .map(|j| match self.behavior {
                        Behavior::PointMass { target }
                        | Behavior::ChallengeSumForgery { target }
                        | Behavior::GuessedChallenge { target } => {
                            if j == target {
                                n
                            } else {
                                l
                            }
                        }
                        Behavior::SkewedCounts if j == v => half + 1,
                        Behavior::OueBitSumViolation if j == (v + 1) % d => {
                            if l + 1 == half {
                                l - 1
                            } else {
                                l + 1
                            }
                        }
                        Behavior::OueDoublePType if j == (v + 1) % d => half,
                        Behavior::OueNoPType => l,
                        _ if j == v => half,
                        _ => l,
                    })
                    .collect();
                let mut vectors: Vec<Vec<u64>> = ones
                    .iter()
                    .map(|&k| {
                        let mut bits: Vec<u64> = (0..n).map(|i| (i < k) as u64).collect();
                        bits.shuffle(rng);
                        bits
                    })
                    .collect();
                match self.behavior {
                    Behavior::OutOfDomainPayload => vectors[v as usize][0] = ood,
                    Behavior::ReusedProof => vectors[v as usize][1] = ood,
                    _ => {}
                }
                let claims = ones.iter().map(|&k| if k == half { 0 } else { 1 }).collect();
                (vectors, claims)
            }
        }
    }

    fn on_query(&mut self, frame: &Frame) -> Result<Vec<Frame>, ProtocolError> {
        let plan = self.plan.clone();
        let g = plan.group();
        let mut r = Reader::new(&frame.body);
        let queries = (|| -> Result<Vec<OtQuery>, GroupError> {
            let count = r.count(1)?;
            if count != plan.vectors() {
                return Err(CodecError::Invalid(format!("expected {} queries, got {count}", plan.vectors())).into());
            }
            (0..count).map(|_| OtQuery::decode(g, &mut r)).collect()
        })()
        .map_err(|e| malformed(Tag::OtQuery, e))?;
        r.finish().map_err(|e| malformed(Tag::OtQuery, e))?;
        if !queries.iter().all(|q| q.is_valid(g)) {
            return Ok(self.abort("OT query outside the group"));
        }

        let (vectors, claims) = self.build_vectors();
        let payloads = plan.payloads();
        let n = plan.slots();
        let mut pairs = Vec::with_capacity(vectors.len() * n);
        let mut masks = Vec::with_capacity(vectors.len() * n);
        for (values, query) in vectors.iter().zip(&queries) {
            let exps: Vec<Scalar> = values.iter().map(|&v| payloads[v as usize].clone()).collect();
            let (p, m) = ot::ot_encrypt_vector(g, query, &exps, &mut self.rng);
            pairs.extend(p);
            masks.extend(m);
        }
        if self.behavior == Behavior::InconsistentCipher {
            for pair in &mut pairs {
                pair.w = g.random_element(&mut self.rng);
            }
        }

        // P1: one OR-proof per slot.
        let slot_cands = plan.slot_candidates();
        let mut p1_commits = Vec::with_capacity(pairs.len());
        let mut p1 = Vec::with_capacity(pairs.len());
        for (i, (pair, mask)) in pairs.iter().zip(&masks).enumerate() {
            let value = vectors[i / n][i % n] as usize;
            let claim = if value < slot_cands.len() { value } else { 0 };
            let spec = DisjunctSpec {
                statement: &pair.y,
                candidates: slot_cands,
            };
            let (commit, state) = proofs::or_prove_commit(g, spec, claim, mask, &mut self.rng)?;
            p1_commits.push(commit);
            p1.push(state);
        }
        let reuse = self.reuse_slots();
        if let Some((from, to)) = reuse {
            p1_commits[to] = p1_commits[from].clone();
        }

        // P2: one OR-proof per vector over the product of its slots.
        let sum_cands = plan.sum_candidates();
        let mut p2_commits = Vec::with_capacity(vectors.len());
        let mut p2 = Vec::with_capacity(vectors.len());
        for (j, claim) in claims.iter().enumerate() {
            let range = j * n..(j + 1) * n;
            let statement = g.product(pairs[range.clone()].iter().map(|p| &p.y));
            let spec = DisjunctSpec {
                statement: &statement,
                candidates: sum_cands,
            };
            let valid = vectors[j].iter().all(|&v| (v as usize) < slot_cands.len())
                && self.composition_is_valid(&vectors[j]);
            if self.behavior.forges_p2() && !valid {
                let sim = proofs::or_simulate(g, spec, &mut self.rng);
                p2_commits.push(sim.commit.clone());
                p2.push(SumProof::Forged(sim));
            } else {
                let witness = g.scalar_sum(&masks[range]);
                let (commit, state) = proofs::or_prove_commit(g, spec, *claim, &witness, &mut self.rng)?;
                p2_commits.push(commit);
                p2.push(SumProof::Real(state));
            }
        }

        let sid = self.session_id;
        let mut body = Vec::new();
        codec::put_u32(&mut body, pairs.len() as u32);
        for pair in &pairs {
            pair.encode(g, &mut body);
        }
        let mut out = vec![Frame::new(Tag::Ciphers, sid, body)];
        let mut body = Vec::new();
        put_commits(g, &p1_commits, &mut body);
        out.push(Frame::new(Tag::P1Commit, sid, body));
        let mut body = Vec::new();
        put_commits(g, &p2_commits, &mut body);
        let p2_frame = Frame::new(Tag::P2Commit, sid, body);
        let p2_commit = if plan.config.pipelined {
            out.push(p2_frame);
            None
        } else {
            Some(p2_frame)
        };

        self.committed = vectors;
        self.stage = ProverStage::AwaitP1Challenge(Box::new(Pending {
            masks,
            p1,
            p2,
            p2_commit,
        }));
        Ok(out)
    }

    /// Whether a vector has the composition some honest prover could have.
    fn composition_is_valid(&self, values: &[u64]) -> bool {
        match &self.plan.shape {
            Shape::Slots { shared, .. } => {
                let mut counts = vec![0u64; shared.d as usize];
                for &v in values {
                    counts[v as usize] += 1;
                }
                counts.iter().filter(|&&c| c == shared.l).count() >= 1
                    && counts.iter().filter(|&&c| c != shared.l).all(|&c| c == shared.per_other())
            }
            Shape::Bits { shared, .. } => {
                let ones = values.iter().sum::<u64>();
                ones == shared.half() || ones == shared.l
            }
        }
    }

    /// `(source, destination)` slots for the copied-proof cheat.
    fn reuse_slots(&self) -> Option<(usize, usize)> {
        if self.behavior != Behavior::ReusedProof {
            return None;
        }
        let base = match self.plan.shape {
            Shape::Slots { .. } => 0,
            Shape::Bits { .. } => self.input as usize * self.plan.slots(),
        };
        Some((base, base + 1))
    }

    fn on_p1_challenge(&mut self, frame: &Frame, mut pending: Box<Pending>) -> Result<Vec<Frame>, ProtocolError> {
        let plan = self.plan.clone();
        let g = plan.group();
        let mut r = Reader::new(&frame.body);
        let xs = read_scalars(g, &mut r, pending.p1.len()).map_err(|e| malformed(Tag::Challenge, e))?;
        r.finish().map_err(|e| malformed(Tag::Challenge, e))?;
        let mut responses: Vec<OrProofResponse> = std::mem::take(&mut pending.p1)
            .into_iter()
            .zip(&xs)
            .map(|(state, x)| proofs::or_prove_respond(g, state, x))
            .collect();
        if let Some((from, to)) = self.reuse_slots() {
            responses[to] = responses[from].clone();
        }
        let mut body = Vec::new();
        put_responses(g, &responses, &mut body);
        let mut out = vec![Frame::new(Tag::P1Resp, self.session_id, body)];
        out.extend(pending.p2_commit.take());
        self.stage = ProverStage::AwaitP2Challenge(pending);
        Ok(out)
    }

    #[allow(clippy::boxed_local)] // moved out of the stage enum as is
    fn on_p2_challenge(&mut self, frame: &Frame, pending: Box<Pending>) -> Result<Vec<Frame>, ProtocolError> {
        let plan = self.plan.clone();
        let g = plan.group();
        let mut r = Reader::new(&frame.body);
        let xs = read_scalars(g, &mut r, pending.p2.len()).map_err(|e| malformed(Tag::Challenge, e))?;
        r.finish().map_err(|e| malformed(Tag::Challenge, e))?;
        let Pending { masks, p2, .. } = *pending;
        let responses: Vec<OrProofResponse> = p2
            .into_iter()
            .zip(&xs)
            .map(|(proof, x)| match proof {
                SumProof::Real(state) => proofs::or_prove_respond(g, state, x),
                SumProof::Forged(sim) => {
                    let mut resp = sim.response;
                    if matches!(self.behavior, Behavior::GuessedChallenge { .. }) {
                        let gap = g.scalar_sub(x, &g.scalar_sum(&resp.challenges));
                        resp.challenges[0] = g.scalar_add(&resp.challenges[0], &gap);
                    }
                    resp
                }
            })
            .collect();
        let mut body = Vec::new();
        put_responses(g, &responses, &mut body);
        let mut out = vec![Frame::new(Tag::P2Resp, self.session_id, body)];
        if let Shape::Bits { .. } = plan.shape {
            let mut body = Vec::new();
            g.encode_scalar(&proofs::aggregate_mask_prove(g, &masks), &mut body);
            out.push(Frame::new(Tag::P3Sum, self.session_id, body));
        }
        self.stage = ProverStage::AwaitVerdict;
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VerifierStage {
    AwaitHello,
    AwaitCiphers,
    AwaitP1Commit,
    AwaitP2Commit,
    AwaitP1Resp,
    AwaitP2Resp,
    AwaitP3,
    Done,
}

/// Server-side state machine for one session.
#[derive(Debug)]
pub struct Verifier {
    plan: Arc<SessionPlan>,
    rng: ChaCha20Rng,
    session_id: u64,
    pipelined: bool,
    seed: u64,
    selection: Option<Vec<u64>>,
    stage: VerifierStage,
    secrets: Vec<OtSecret>,
    pairs: Vec<CipherPair>,
    p1_commits: Vec<OrProofCommit>,
    p1_challenges: Vec<Scalar>,
    p2_commits: Vec<OrProofCommit>,
    p2_challenges: Vec<Scalar>,
    verdict: Option<Verdict>,
}

type Step = Result<Vec<Frame>, Halt>;

impl Verifier {
    pub fn new(plan: Arc<SessionPlan>, rng: ChaCha20Rng) -> Self {
        Self {
            plan,
            rng,
            session_id: 0,
            pipelined: false,
            seed: 0,
            selection: None,
            stage: VerifierStage::AwaitHello,
            secrets: Vec::new(),
            pairs: Vec::new(),
            p1_commits: Vec::new(),
            p1_challenges: Vec::new(),
            p2_commits: Vec::new(),
            p2_challenges: Vec::new(),
            verdict: None,
        }
    }

    /// Fixes the selected slot (1-based) of each vector instead of drawing
    /// it at random. Only meant for replay experiments.
    pub fn with_selection(mut self, sigmas: Vec<u64>) -> Self {
        self.selection = Some(sigmas);
        self
    }

    pub fn verdict(&self) -> Option<&Verdict> {
        self.verdict.as_ref()
    }

    /// The OLH hash seed sent to the prover.
    pub fn olh_seed(&self) -> u64 {
        self.seed
    }

    /// Ends the session because the byte stream could not be framed.
    pub fn fail_framing(&mut self, detail: String) -> Vec<Frame> {
        if self.verdict.is_some() {
            return Vec::new();
        }
        self.halt(Halt {
            phase: Phase::Framing,
            reason: HaltReason::Malformed(detail),
        })
    }

    fn halt(&mut self, halt: Halt) -> Vec<Frame> {
        let verdict = Verdict::Halted(halt);
        let body = verdict_body(&verdict);
        self.verdict = Some(verdict);
        self.stage = VerifierStage::Done;
        vec![Frame::new(Tag::Verdict, self.session_id, body)]
    }

    pub fn handle(&mut self, frame: Frame) -> Vec<Frame> {
        if self.stage == VerifierStage::Done {
            return Vec::new();
        }
        if frame.tag == Tag::Abort {
            self.verdict = Some(Verdict::Aborted(String::from_utf8_lossy(&frame.body).into_owned()));
            self.stage = VerifierStage::Done;
            return Vec::new();
        }
        if self.stage != VerifierStage::AwaitHello && frame.session_id != self.session_id {
            return self.halt(framing(frame.tag, "session id mismatch"));
        }
        let step = match (self.stage, frame.tag) {
            (VerifierStage::AwaitHello, Tag::Config) => self.on_hello(&frame),
            (VerifierStage::AwaitCiphers, Tag::Ciphers) => self.on_ciphers(&frame),
            (VerifierStage::AwaitP1Commit, Tag::P1Commit) => self.on_p1_commit(&frame),
            (VerifierStage::AwaitP2Commit, Tag::P2Commit) => self.on_p2_commit(&frame),
            (VerifierStage::AwaitP1Resp, Tag::P1Resp) => self.on_p1_resp(&frame),
            (VerifierStage::AwaitP2Resp, Tag::P2Resp) => self.on_p2_resp(&frame),
            (VerifierStage::AwaitP3, Tag::P3Sum) => self.on_p3(&frame),
            (_, tag) => Err(Halt {
                phase: Phase::Framing,
                reason: HaltReason::Unexpected(tag),
            }),
        };
        match step {
            Ok(frames) => frames,
            Err(halt) => self.halt(halt),
        }
    }

    fn challenges(&mut self, count: usize) -> Vec<Scalar> {
        let g = self.plan.group();
        (0..count).map(|_| proofs::or_challenge(g, &mut self.rng)).collect()
    }

    fn challenge_frame(&self, xs: &[Scalar]) -> Frame {
        let mut body = Vec::new();
        put_scalars(self.plan.group(), xs, &mut body);
        Frame::new(Tag::Challenge, self.session_id, body)
    }

    fn on_hello(&mut self, frame: &Frame) -> Step {
        self.session_id = frame.session_id;
        let mut r = Reader::new(&frame.body);
        let config = SessionConfig::decode(&mut r).map_err(|e| framing(Tag::Config, e))?;
        r.finish().map_err(|e| framing(Tag::Config, e))?;
        if !config.same_protocol(&self.plan.config) {
            return Err(Halt {
                phase: Phase::Setup,
                reason: HaltReason::ConfigMismatch,
            });
        }
        self.pipelined = config.pipelined;
        let plan = self.plan.clone();
        let g = plan.group();
        if let MechanismKind::Olh { .. } = plan.kind() {
            self.seed = self.rng.next_u64();
        }
        let mut body = Vec::new();
        codec::put_bytes(&mut body, &plan.group_bytes);
        codec::put_u64(&mut body, self.seed);
        let mut out = vec![Frame::new(Tag::Config, self.session_id, body)];

        let n = plan.slots() as u64;
        let mut body = Vec::new();
        codec::put_u32(&mut body, plan.vectors() as u32);
        for j in 0..plan.vectors() {
            let sigma = match &self.selection {
                Some(s) => s[j],
                None => self.rng.gen_range(1..=n),
            };
            let (query, secret) = ot::ot_query(g, sigma, &mut self.rng);
            query.encode(g, &mut body);
            self.secrets.push(secret);
        }
        out.push(Frame::new(Tag::OtQuery, self.session_id, body));
        self.stage = VerifierStage::AwaitCiphers;
        Ok(out)
    }

    fn total_slots(&self) -> usize {
        self.plan.vectors() * self.plan.slots()
    }

    fn on_ciphers(&mut self, frame: &Frame) -> Step {
        let plan = self.plan.clone();
        let g = plan.group();
        let expect = self.total_slots();
        let mut r = Reader::new(&frame.body);
        let pairs = (|| -> Result<Vec<CipherPair>, GroupError> {
            let count = r.count(1)?;
            if count != expect {
                return Err(CodecError::Invalid(format!("expected {expect} pairs, got {count}")).into());
            }
            (0..count)
                .map(|_| {
                    Ok(CipherPair {
                        w: g.decode_member(&mut r)?,
                        y: g.decode_member(&mut r)?,
                    })
                })
                .collect()
        })()
        .map_err(|e| framing(Tag::Ciphers, e))?;
        r.finish().map_err(|e| framing(Tag::Ciphers, e))?;
        self.pairs = pairs;
        self.stage = VerifierStage::AwaitP1Commit;
        Ok(Vec::new())
    }

    fn on_p1_commit(&mut self, frame: &Frame) -> Step {
        let mut r = Reader::new(&frame.body);
        let disjuncts = self.plan.slot_candidates().len();
        self.p1_commits = read_commits(self.plan.group(), &mut r, self.total_slots(), disjuncts)
            .map_err(|e| framing(Tag::P1Commit, e))?;
        r.finish().map_err(|e| framing(Tag::P1Commit, e))?;
        if self.pipelined {
            self.stage = VerifierStage::AwaitP2Commit;
            return Ok(Vec::new());
        }
        self.p1_challenges = self.challenges(self.total_slots());
        self.stage = VerifierStage::AwaitP1Resp;
        Ok(vec![self.challenge_frame(&self.p1_challenges)])
    }

    fn on_p2_commit(&mut self, frame: &Frame) -> Step {
        let mut r = Reader::new(&frame.body);
        let disjuncts = self.plan.sum_candidates().len();
        self.p2_commits = read_commits(self.plan.group(), &mut r, self.plan.vectors(), disjuncts)
            .map_err(|e| framing(Tag::P2Commit, e))?;
        r.finish().map_err(|e| framing(Tag::P2Commit, e))?;
        self.p2_challenges = self.challenges(self.plan.vectors());
        if self.pipelined {
            self.p1_challenges = self.challenges(self.total_slots());
            self.stage = VerifierStage::AwaitP1Resp;
            return Ok(vec![
                self.challenge_frame(&self.p1_challenges),
                self.challenge_frame(&self.p2_challenges),
            ]);
        }
        self.stage = VerifierStage::AwaitP2Resp;
        Ok(vec![self.challenge_frame(&self.p2_challenges)])
    }

    fn on_p1_resp(&mut self, frame: &Frame) -> Step {
        let plan = self.plan.clone();
        let g = plan.group();
        let cands = plan.slot_candidates();
        let mut r = Reader::new(&frame.body);
        let responses =
            read_responses(g, &mut r, self.total_slots(), cands.len()).map_err(|e| framing(Tag::P1Resp, e))?;
        r.finish().map_err(|e| framing(Tag::P1Resp, e))?;
        for (i, resp) in responses.iter().enumerate() {
            let spec = DisjunctSpec {
                statement: &self.pairs[i].y,
                candidates: cands,
            };
            proofs::or_verify(g, spec, &self.p1_commits[i], &self.p1_challenges[i], resp).map_err(|failure| Halt {
                phase: Phase::P1,
                reason: HaltReason::Proof { index: i, failure },
            })?;
        }
        self.stage = if self.pipelined {
            VerifierStage::AwaitP2Resp
        } else {
            VerifierStage::AwaitP2Commit
        };
        Ok(Vec::new())
    }

    fn on_p2_resp(&mut self, frame: &Frame) -> Step {
        let plan = self.plan.clone();
        let g = plan.group();
        let cands = plan.sum_candidates();
        let n = plan.slots();
        let mut r = Reader::new(&frame.body);
        let responses =
            read_responses(g, &mut r, plan.vectors(), cands.len()).map_err(|e| framing(Tag::P2Resp, e))?;
        r.finish().map_err(|e| framing(Tag::P2Resp, e))?;
        for (j, resp) in responses.iter().enumerate() {
            let statement = g.product(self.pairs[j * n..(j + 1) * n].iter().map(|p| &p.y));
            let spec = DisjunctSpec {
                statement: &statement,
                candidates: cands,
            };
            proofs::or_verify(g, spec, &self.p2_commits[j], &self.p2_challenges[j], resp).map_err(|failure| Halt {
                phase: Phase::P2,
                reason: HaltReason::Proof { index: j, failure },
            })?;
        }
        if let Shape::Bits { .. } = plan.shape {
            self.stage = VerifierStage::AwaitP3;
            return Ok(Vec::new());
        }
        self.finish()
    }

    fn on_p3(&mut self, frame: &Frame) -> Step {
        let plan = self.plan.clone();
        let g = plan.group();
        let mut r = Reader::new(&frame.body);
        let sum = g.decode_scalar(&mut r).map_err(|e| framing(Tag::P3Sum, e))?;
        r.finish().map_err(|e| framing(Tag::P3Sum, e))?;
        let Shape::Bits { total, .. } = &plan.shape else {
            unreachable!("P3 only runs for OUE");
        };
        proofs::aggregate_mask_verify(g, &self.pairs, &sum, total).map_err(|failure| Halt {
            phase: Phase::P3,
            reason: HaltReason::Proof { index: 0, failure },
        })?;
        self.finish()
    }

    /// All proofs passed: open the selected slots.
    fn finish(&mut self) -> Step {
        let plan = self.plan.clone();
        let g = plan.group();
        let cands = plan.slot_candidates();
        let n = plan.slots();
        let mut values = Vec::with_capacity(plan.vectors());
        for (j, secret) in self.secrets.iter().enumerate() {
            let pair = &self.pairs[j * n + secret.sigma() as usize - 1];
            let opened = ot::ot_unmask(g, secret, pair);
            let value = cands.find(g, &opened).ok_or(Halt {
                phase: Phase::Decrypt,
                reason: HaltReason::Undecodable { vector: j },
            })?;
            values.push(value);
        }
        let report = match plan.kind() {
            MechanismKind::Krr { .. } => Report::Category(values[0] as u32),
            MechanismKind::Olh { .. } => Report::Hashed {
                seed: self.seed,
                value: values[0] as u32,
            },
            MechanismKind::Oue { .. } => Report::Bits(values.iter().map(|&b| b == 1).collect()),
        };
        let verdict = Verdict::Accepted(report);
        let body = verdict_body(&verdict);
        self.verdict = Some(verdict);
        self.stage = VerifierStage::Done;
        Ok(vec![Frame::new(Tag::Verdict, self.session_id, body)])
    }
}

fn framing(tag: Tag, e: impl std::fmt::Display) -> Halt {
    Halt {
        phase: Phase::Framing,
        reason: HaltReason::Malformed(format!("{}: {e}", tag.name())),
    }
}

/// One in-memory session.
#[derive(Debug, Clone)]
pub struct LocalRun {
    pub verdict: Verdict,
    pub client: Option<ClientOutcome>,
    /// Client-side view: sent = towards the verifier.
    pub metrics: SessionMetrics,
    /// Every frame in delivery order, flagged `true` when sent by the prover.
    pub frames: Vec<(bool, Frame)>,
}

/// Drives a prover and a verifier against each other without a network.
pub fn run_local(mut prover: Prover, mut verifier: Verifier, record: bool) -> Result<LocalRun, ProtocolError> {
    let start = std::time::Instant::now();
    let mut metrics = SessionMetrics::default();
    let mut frames = Vec::new();
    let mut to_server = VecDeque::from([prover.start()]);
    let mut to_client = VecDeque::new();
    loop {
        if let Some(f) = to_server.pop_front() {
            metrics.record_sent(&f);
            if record {
                frames.push((true, f.clone()));
            }
            to_client.extend(verifier.handle(f));
        } else if let Some(f) = to_client.pop_front() {
            metrics.record_received(&f);
            if record {
                frames.push((false, f.clone()));
            }
            to_server.extend(prover.handle(f)?);
        } else {
            break;
        }
    }
    metrics.wall_time = start.elapsed();
    Ok(LocalRun {
        verdict: verifier
            .verdict()
            .cloned()
            .unwrap_or_else(|| Verdict::Aborted("session ended early".into())),
        client: prover.outcome().cloned(),
        metrics,
        frames,
    })
}

/// Runs one session with prover and verifier randomness derived from `seed`.
pub fn run_local_session(
    plan: &Arc<SessionPlan>,
    input: u64,
    behavior: Behavior,
    seed: u64,
) -> Result<LocalRun, ProtocolError> {
    let mut master = ChaCha20Rng::seed_from_u64(seed);
    let prover_rng = ChaCha20Rng::from_rng(&mut master).expect("seeding");
    let verifier_rng = ChaCha20Rng::from_rng(&mut master).expect("seeding");
    let prover = Prover::new(plan.clone(), input, behavior, prover_rng)?;
    run_local(prover, Verifier::new(plan.clone(), verifier_rng), false)
}

/// Estimates over the accepted sessions of one collection.
#[derive(Debug, Clone, PartialEq)]
pub struct Collection {
    /// Estimated count per category.
    pub estimates: Vec<f64>,
    pub accepted: usize,
    pub dropped: usize,
}

/// Drops halted and aborted sessions and applies the frequency estimator
/// with the discretized probabilities.
pub fn collect_and_estimate(plan: &SessionPlan, verdicts: &[Verdict]) -> Result<Collection, ProtocolError> {
    let reports: Vec<Report> = verdicts.iter().filter_map(|v| v.report().cloned()).collect();
    if reports.is_empty() {
        return Err(ProtocolError::EmptyCollection);
    }
    let (p, q) = plan.estimator_probabilities();
    let estimates = ldp::estimate_frequencies(plan.kind(), &reports, p, q)?;
    Ok(Collection {
        estimates,
        accepted: reports.len(),
        dropped: verdicts.len() - reports.len(),
    })
}

/// Deterministic per-session seeds from one master seed.
pub fn session_seeds(master: u64) -> impl Iterator<Item = u64> {
    let mut rng = ChaCha20Rng::seed_from_u64(master);
    std::iter::repeat_with(move || rng.next_u64())
}
