//! Targeted poisoning attacks (RPA, RIA, MGA) against plain and secure
//! collections, and the gains they achieve.
//!
//! An attack injects `M` fake clients next to `N` genuine ones
//! (`beta = M / (N + M)`) to raise the estimated frequency of the target
//! set `T`. The gain is `G = sum_t (f'_t - f_t)`: estimated frequency with
//! the fake clients minus without.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, RngCore};
use thiserror::Error;

use crate::ldp::{self, LdpError, Mechanism, MechanismKind, Report};
use crate::protocol::{self, Behavior, ProtocolError, SessionPlan};

/// Seeds tried when looking for an OLH hash under which all targets collide.
const MGA_SEED_SEARCH: u64 = 100_000;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("invalid attack: {0}")]
    Invalid(String),
    #[error(transparent)]
    Ldp(#[from] LdpError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttackKind {
    /// Random perturbed value: a uniformly random valid output.
    Rpa,
    /// Random item: a target chosen uniformly, then perturbed honestly.
    Ria,
    /// Maximal gain: an unperturbed output supporting the targets.
    Mga,
}

impl AttackKind {
    pub const ALL: [AttackKind; 3] = [AttackKind::Rpa, AttackKind::Ria, AttackKind::Mga];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Rpa => "rpa",
            AttackKind::Ria => "ria",
            AttackKind::Mga => "mga",
        }
    }

    /// Whether the attack bypasses the randomizer.
    pub fn manipulates_output(self) -> bool {
        !matches!(self, AttackKind::Ria)
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rpa" => Ok(AttackKind::Rpa),
            "ria" => Ok(AttackKind::Ria),
            "mga" => Ok(AttackKind::Mga),
            other => Err(format!("unknown attack '{other}' (expected rpa, ria or mga)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub targets: Vec<u64>,
    /// Fraction of fake clients among all clients.
    pub beta: f64,
}

impl AttackSpec {
    pub fn new(kind: AttackKind, targets: Vec<u64>, beta: f64) -> Result<Self, AttackError> {
        if targets.is_empty() {
            return Err(AttackError::Invalid("target set is empty".into()));
        }
        if targets.iter().collect::<HashSet<_>>().len() != targets.len() {
            return Err(AttackError::Invalid("targets repeat".into()));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(AttackError::Invalid(format!("beta must lie in (0, 1), got {beta}")));
        }
        Ok(Self { kind, targets, beta })
    }

    pub fn r(&self) -> usize {
        self.targets.len()
    }

    fn validate(&self, d: u64) -> Result<(), AttackError> {
        match self.targets.iter().find(|&&t| t >= d) {
            Some(t) => Err(AttackError::Invalid(format!("target {t} outside [0, {d})"))),
            None => Ok(()),
        }
    }

    /// Number of fake clients to pair with `n` genuine ones.
    pub fn attackers_for(&self, n: usize) -> usize {
        (self.beta * n as f64 / (1.0 - self.beta)).round() as usize
    }
}

/// The report a fake client sends to a plain collection.
pub fn attack_report<R: Rng + ?Sized>(spec: &AttackSpec, kind: &MechanismKind, rng: &mut R) -> Result<Report, AttackError> {
    spec.validate(kind.d())?;
    Ok(match (spec.kind, *kind) {
        (AttackKind::Ria, _) => {
            let t = spec.targets[rng.gen_range(0..spec.r())];
            ldp::perturb(kind, t, rng)?
        }
        (AttackKind::Rpa, MechanismKind::Krr { d, .. }) => Report::Category(rng.gen_range(0..d) as u32),
        (AttackKind::Rpa, MechanismKind::Oue { d, .. }) => Report::Bits((0..d).map(|_| rng.gen_bool(0.5)).collect()),
        (AttackKind::Rpa, MechanismKind::Olh { range, .. }) => Report::Hashed {
            seed: rng.next_u64(),
            value: rng.gen_range(0..range) as u32,
        },
        (AttackKind::Mga, MechanismKind::Krr { .. }) => {
            Report::Category(spec.targets[rng.gen_range(0..spec.r())] as u32)
        }
        (AttackKind::Mga, MechanismKind::Oue { d, epsilon }) => {
            // Targets set, plus random non-target ones so the vector carries
            // as many ones as an honest report would on average.
            let mut bits = vec![false; d as usize];
            for &t in &spec.targets {
                bits[t as usize] = true;
            }
            let q = 1.0 / (epsilon.exp() + 1.0);
            let expected = (0.5 + (d - 1) as f64 * q).floor() as usize;
            let mut others: Vec<usize> = (0..d as usize).filter(|i| !bits[*i]).collect();
            let pad = expected.saturating_sub(spec.r()).min(others.len());
            for _ in 0..pad {
                let i = others.swap_remove(rng.gen_range(0..others.len()));
                bits[i] = true;
            }
            Report::Bits(bits)
        }
        (AttackKind::Mga, MechanismKind::Olh { range, .. }) => {
            let (seed, value) = best_olh_output(&spec.targets, range, rng);
            Report::Hashed {
                seed,
                value: value as u32,
            }
        }
    })
}

/// A seed and hash value supporting as many targets as can be found.
fn best_olh_output<R: RngCore + ?Sized>(targets: &[u64], range: u64, rng: &mut R) -> (u64, u64) {
    let mut best = (0u64, 0u64, 0usize);
    for _ in 0..MGA_SEED_SEARCH {
        let seed = rng.next_u64();
        let mut counts = vec![0usize; range as usize];
        for &t in targets {
            counts[ldp::olh_hash(seed, t, range) as usize] += 1;
        }
        let (value, &hits) = counts.iter().enumerate().max_by_key(|(_, c)| **c).expect("range >= 2");
        if hits > best.2 {
            best = (seed, value as u64, hits);
        }
        if hits == targets.len() {
            break;
        }
    }
    (best.0, best.1)
}

/// Expected gain from the closed forms of the literature, which assume the
/// exact mechanism probabilities (and, for OLH, `g = e^eps + 1`).
pub fn theoretical_gain(spec: &AttackSpec, kind: &MechanismKind, f_t: f64) -> f64 {
    let beta = spec.beta;
    let r = spec.r() as f64;
    let e = kind.epsilon().exp();
    match (spec.kind, kind.mechanism()) {
        (AttackKind::Ria, _) => beta * (1.0 - f_t),
        (AttackKind::Rpa, Mechanism::Krr) => beta * (r / kind.d() as f64 - f_t),
        (AttackKind::Rpa, Mechanism::Oue) => beta * (r - f_t),
        (AttackKind::Rpa, Mechanism::Olh) => -beta * f_t,
        (AttackKind::Mga, Mechanism::Krr) => beta * (1.0 - f_t) + beta * (kind.d() as f64 - r) / (e - 1.0),
        (AttackKind::Mga, _) => beta * (2.0 * r - f_t) + 2.0 * beta * r / (e - 1.0),
    }
}

/// Expected gain of the attacks implemented here when the mechanism that
/// actually runs (and the estimator) has support probabilities `(p, q)`,
/// given the probability `s_t` that a fake report supports each target.
///
/// `E[G] = beta * ((sum_t s_t - r q) / (p - q) - f_T)`.
pub fn expected_gain(spec: &AttackSpec, kind: &MechanismKind, f_t: f64, p: f64, q: f64) -> f64 {
    let r = spec.r() as f64;
    let support_sum = match (spec.kind, *kind) {
        // an honest report of a random target: p for it, q for the others
        (AttackKind::Ria, _) => p + (r - 1.0) * q,
        (AttackKind::Rpa, MechanismKind::Krr { d, .. }) => r / d as f64,
        (AttackKind::Rpa, MechanismKind::Oue { .. }) => r * 0.5,
        (AttackKind::Rpa, MechanismKind::Olh { range, .. }) => r / range as f64,
        (AttackKind::Mga, MechanismKind::Krr { .. }) => 1.0,
        (AttackKind::Mga, _) => r,
    };
    spec.beta * ((support_sum - r * q) / (p - q) - f_t)
}

/// Outcome of one simulated attack.
#[derive(Debug, Clone, PartialEq)]
pub struct GainReport {
    /// Estimated frequency change per target.
    pub deltas: Vec<f64>,
    pub empirical_gain: f64,
    pub theoretical_gain: f64,
    /// Gain expected for this exact mechanism and estimator (0 for
    /// output-manipulating attacks on a secure collection).
    pub expected_gain: f64,
    pub genuine: usize,
    pub attackers: usize,
    /// Fraction of fake clients whose sessions were halted (0 for plain).
    pub halt_rate: f64,
    /// Genuine clients rejected (must be 0).
    pub genuine_halts: usize,
}

/// How genuine and fake clients report.
#[derive(Clone, Copy)]
pub enum Collection<'a> {
    Plain,
    /// Every client runs the verifiable protocol under this plan.
    Secure(&'a Arc<SessionPlan>),
}

/// Secure-protocol behavior of a fake client, and the input it claims.
fn secure_attacker<R: Rng + ?Sized>(spec: &AttackSpec, d: u64, rng: &mut R) -> (u64, Behavior) {
    let t = spec.targets[rng.gen_range(0..spec.r())];
    match spec.kind {
        AttackKind::Ria => (t, Behavior::Honest),
        AttackKind::Mga => (t, Behavior::PointMass { target: t }),
        // a random output has to be forced the same way
        AttackKind::Rpa => {
            let any = rng.gen_range(0..d);
            (any, Behavior::PointMass { target: any })
        }
    }
}

/// Simulates `n` genuine clients drawn from `honest` (a distribution over
/// `[d]`) plus the fake clients implied by `beta`, and measures the gain.
/// The estimate is taken with and without the fake reports over the same
/// genuine ones, so genuine sampling noise mostly cancels.
pub fn simulate_attack<R: Rng + ?Sized>(
    spec: &AttackSpec,
    kind: &MechanismKind,
    honest: &[f64],
    n: usize,
    collection: Collection<'_>,
    rng: &mut R,
) -> Result<GainReport, AttackError> {
    let mut reports = simulate_attacks(std::slice::from_ref(spec), kind, honest, n, collection, rng)?;
    Ok(reports.remove(0))
}

/// Like [`simulate_attack`] for several attacks against one shared set of
/// genuine clients.
pub fn simulate_attacks<R: Rng + ?Sized>(
    specs: &[AttackSpec],
    kind: &MechanismKind,
    honest: &[f64],
    n: usize,
    collection: Collection<'_>,
    rng: &mut R,
) -> Result<Vec<GainReport>, AttackError> {
    let d = kind.d();
    for spec in specs {
        spec.validate(d)?;
    }
    if honest.len() as u64 != d {
        return Err(AttackError::Invalid(format!("distribution has {} entries, d = {d}", honest.len())));
    }
    let sampler = WeightedIndex::new(honest).map_err(|e| AttackError::Invalid(e.to_string()))?;
    let mass: f64 = honest.iter().sum();
    let (p, q) = match collection {
        Collection::Plain => kind.probabilities(),
        Collection::Secure(plan) => {
            if plan.kind() != kind {
                return Err(AttackError::Invalid("plan is for a different mechanism".into()));
            }
            plan.estimator_probabilities()
        }
    };

    let mut genuine = Vec::with_capacity(n);
    let mut genuine_halts = 0;
    for _ in 0..n {
        let v = sampler.sample(rng) as u64;
        match collection {
            Collection::Plain => genuine.push(ldp::perturb(kind, v, rng)?),
            Collection::Secure(plan) => match accepted(plan, v, Behavior::Honest, rng.next_u64())? {
                Some(report) => genuine.push(report),
                None => genuine_halts += 1,
            },
        }
    }
    let genuine_counts = ldp::support_counts(kind, &genuine)?;
    let before = frequencies(&genuine_counts, genuine.len(), p, q)?;

    let mut out = Vec::with_capacity(specs.len());
    for spec in specs {
        let m = spec.attackers_for(n);
        let mut fake = Vec::with_capacity(m);
        let mut halts = 0;
        for _ in 0..m {
            match collection {
                Collection::Plain => fake.push(attack_report(spec, kind, rng)?),
                Collection::Secure(plan) => {
                    let (v, behavior) = secure_attacker(spec, d, rng);
                    match accepted(plan, v, behavior, rng.next_u64())? {
                        Some(report) => fake.push(report),
                        None => halts += 1,
                    }
                }
            }
        }
        let mut counts = ldp::support_counts(kind, &fake)?;
        for (c, g) in counts.iter_mut().zip(&genuine_counts) {
            *c += g;
        }
        let after = frequencies(&counts, genuine.len() + fake.len(), p, q)?;
        let deltas: Vec<f64> = spec.targets.iter().map(|&t| after[t as usize] - before[t as usize]).collect();
        let f_t = spec.targets.iter().map(|&t| honest[t as usize]).sum::<f64>() / mass;
        out.push(GainReport {
            empirical_gain: deltas.iter().sum(),
            deltas,
            theoretical_gain: theoretical_gain(spec, kind, f_t),
            // fake clients that manipulate outputs are expected to be halted
            expected_gain: match collection {
                Collection::Secure(_) if spec.kind.manipulates_output() => 0.0,
                _ => expected_gain(spec, kind, f_t, p, q),
            },
            genuine: n,
            attackers: m,
            halt_rate: if m == 0 { 0.0 } else { halts as f64 / m as f64 },
            genuine_halts,
        });
    }
    Ok(out)
}

/// The report of one secure session, if the verifier accepted it.
fn accepted(plan: &Arc<SessionPlan>, v: u64, behavior: Behavior, seed: u64) -> Result<Option<Report>, AttackError> {
    Ok(protocol::run_local_session(plan, v, behavior, seed)?.verdict.report().cloned())
}

/// Estimated frequencies (fractions of `total`).
fn frequencies(counts: &[u64], total: usize, p: f64, q: f64) -> Result<Vec<f64>, AttackError> {
    if total == 0 {
        return Ok(vec![0.0; counts.len()]);
    }
    let est = ldp::estimate_from_counts(counts, total as u64, p, q)?;
    Ok(est.into_iter().map(|c| c / total as f64).collect())
}

/// Every output-manipulating prover behavior that applies to `mechanism`.
pub fn cheat_catalogue(mechanism: Mechanism, target: u64) -> Vec<Behavior> {
    [
        Behavior::PointMass { target },
        Behavior::SkewedCounts,
        Behavior::OutOfDomainPayload,
        Behavior::OueBitSumViolation,
        Behavior::OueDoublePType,
        Behavior::OueNoPType,
        Behavior::ChallengeSumForgery { target },
        Behavior::GuessedChallenge { target },
        Behavior::ReusedProof,
        Behavior::InconsistentCipher,
    ]
    .into_iter()
    .filter(|b| b.applies_to(mechanism))
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(kind: AttackKind) -> AttackSpec {
        AttackSpec::new(kind, vec![3], 0.05).unwrap()
    }

    #[test]
    fn table_values() {
        let krr = MechanismKind::Krr { d: 10, epsilon: 1.0 };
        let want = 0.045 + 0.05 * 9.0 / (1f64.exp() - 1.0);
        assert!((theoretical_gain(&spec(AttackKind::Mga), &krr, 0.1) - want).abs() < 1e-12);
        assert!((want - 0.3069).abs() < 1e-4);
        for kind in [
            krr,
            MechanismKind::Oue { d: 10, epsilon: 1.0 },
            MechanismKind::Olh { d: 10, epsilon: 1.0, range: 3 },
        ] {
            assert!((theoretical_gain(&spec(AttackKind::Ria), &kind, 0.1) - 0.045).abs() < 1e-12);
        }
        let tiny = AttackSpec::new(AttackKind::Mga, vec![1], 1e-12).unwrap();
        assert!(theoretical_gain(&tiny, &krr, 0.1).abs() < 1e-10);
    }

    #[test]
    fn exact_gain_matches_the_table_where_the_table_is_exact() {
        let f_t = 0.1;
        for (kind, attack) in [
            (MechanismKind::Krr { d: 10, epsilon: 1.0 }, AttackKind::Mga),
            (MechanismKind::Krr { d: 10, epsilon: 1.0 }, AttackKind::Rpa),
            (MechanismKind::Oue { d: 10, epsilon: 1.0 }, AttackKind::Mga),
            (MechanismKind::Oue { d: 10, epsilon: 1.0 }, AttackKind::Rpa),
            (MechanismKind::Olh { d: 10, epsilon: 1.0, range: 3 }, AttackKind::Rpa),
            (MechanismKind::Olh { d: 10, epsilon: 1.0, range: 3 }, AttackKind::Ria),
        ] {
            let s = spec(attack);
            let (p, q) = kind.probabilities();
            let exact = expected_gain(&s, &kind, f_t, p, q);
            assert!((exact - theoretical_gain(&s, &kind, f_t)).abs() < 1e-12, "{kind:?} {attack}");
        }
        // the table's OLH row assumes a non-integer hash range
        let olh = MechanismKind::Olh { d: 10, epsilon: 1.0, range: 3 };
        let (p, q) = olh.probabilities();
        let ratio = expected_gain(&spec(AttackKind::Mga), &olh, f_t, p, q) / theoretical_gain(&spec(AttackKind::Mga), &olh, f_t);
        assert!((ratio - 0.863).abs() < 0.01, "{ratio}");
    }

    #[test]
    fn input_manipulation_gain_does_not_depend_on_the_discretization() {
        let kind = MechanismKind::Krr { d: 10, epsilon: 1.0 };
        for (p, q) in [(2.0 / 11.0, 1.0 / 11.0), (23.0 / 50.0, 9.0 / 50.0), kind.probabilities()] {
            let g = expected_gain(&spec(AttackKind::Ria), &kind, 0.1, p, q);
            assert!((g - 0.05 * 0.9).abs() < 1e-12, "{p} {q}: {g}");
        }
    }

    #[test]
    fn mga_reports() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let krr = MechanismKind::Krr { d: 10, epsilon: 1.0 };
        for _ in 0..20 {
            assert_eq!(attack_report(&spec(AttackKind::Mga), &krr, &mut rng).unwrap(), Report::Category(3));
        }
        let oue = MechanismKind::Oue { d: 5, epsilon: 1.0 };
        let s = AttackSpec::new(AttackKind::Mga, vec![1, 4], 0.05).unwrap();
        let Report::Bits(bits) = attack_report(&s, &oue, &mut rng).unwrap() else { panic!() };
        assert!(bits[1] && bits[4]);
        let olh = MechanismKind::Olh { d: 10, epsilon: 1.0, range: 4 };
        let s = AttackSpec::new(AttackKind::Mga, vec![2, 7], 0.05).unwrap();
        for _ in 0..5 {
            let report = attack_report(&s, &olh, &mut rng).unwrap();
            assert!(ldp::support(&olh, &report, 2) && ldp::support(&olh, &report, 7));
        }
    }

    #[test]
    fn spec_validation() {
        assert!(AttackSpec::new(AttackKind::Mga, vec![], 0.1).is_err());
        assert!(AttackSpec::new(AttackKind::Mga, vec![1, 1], 0.1).is_err());
        assert!(AttackSpec::new(AttackKind::Mga, vec![1], 0.0).is_err());
        assert!(AttackSpec::new(AttackKind::Mga, vec![1], 1.0).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = AttackSpec::new(AttackKind::Mga, vec![12], 0.1).unwrap();
        assert!(attack_report(&s, &MechanismKind::Krr { d: 10, epsilon: 1.0 }, &mut rng).is_err());
        assert_eq!(spec(AttackKind::Mga).attackers_for(100_000), 5263);
        assert_eq!("MGA".parse::<AttackKind>().unwrap(), AttackKind::Mga);
    }

    #[test]
    fn catalogue_sizes() {
        assert_eq!(cheat_catalogue(Mechanism::Krr, 0).len(), 7);
        assert_eq!(cheat_catalogue(Mechanism::Olh, 0).len(), 7);
        assert_eq!(cheat_catalogue(Mechanism::Oue, 0).len(), 10);
        assert!(cheat_catalogue(Mechanism::Krr, 0).iter().all(|b| b.expected_halt().is_some()));
    }

    #[test]
    fn plain_mga_gain_is_close_to_the_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let kind = MechanismKind::Krr { d: 10, epsilon: 1.0 };
        let g = simulate_attack(&spec(AttackKind::Mga), &kind, &[0.1; 10], 20_000, Collection::Plain, &mut rng).unwrap();
        assert!((g.empirical_gain / g.theoretical_gain - 1.0).abs() < 0.05, "{g:?}");
        assert_eq!(g.halt_rate, 0.0);
    }
}
