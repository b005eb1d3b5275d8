//! Plain (unverified) kRR, OUE and OLH, and the pure-LDP frequency estimator
//! the server applies to both plain and secure collections.

use rand::Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::{self, CodecError, Reader};

const OLH_HASH_LABEL: &[u8] = b"vldp/olh-hash/v1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LdpError {
    #[error("category {value} outside [0, {d})")]
    CategoryOutOfRange { value: u64, d: u64 },
    #[error("invalid mechanism: {0}")]
    InvalidMechanism(String),
    #[error("estimator is degenerate: p_hat ({p_hat}) must exceed q_hat ({q_hat})")]
    DegenerateEstimator { p_hat: f64, q_hat: f64 },
    #[error("report does not belong to the mechanism's output space")]
    ReportOutOfDomain,
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Which randomizer a client runs, with its domain and budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MechanismKind {
    Krr { d: u64, epsilon: f64 },
    Oue { d: u64, epsilon: f64 },
    /// `range` is the hashed domain size `g`, `2 <= g < d`.
    Olh { d: u64, epsilon: f64, range: u64 },
}

/// Tag-only view of [`MechanismKind`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mechanism {
    Krr,
    Oue,
    Olh,
}

impl Mechanism {
    pub const ALL: [Mechanism; 3] = [Mechanism::Krr, Mechanism::Oue, Mechanism::Olh];

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Krr => "krr",
            Mechanism::Oue => "oue",
            Mechanism::Olh => "olh",
        }
    }
}

impl std::fmt::Display for Mechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Mechanism {
    type Err = LdpError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "krr" => Ok(Mechanism::Krr),
            "oue" => Ok(Mechanism::Oue),
            "olh" => Ok(Mechanism::Olh),
            other => Err(LdpError::InvalidMechanism(format!("unknown mechanism `{other}`"))),
        }
    }
}

/// Hashed-domain size used in the evaluation (`d/2`).
pub fn default_olh_range(d: u64) -> u64 {
    d / 2
}

/// Variance-optimal hashed-domain size `floor(e^eps + 1)`.
pub fn optimal_olh_range(epsilon: f64) -> u64 {
    (epsilon.exp() + 1.0).floor() as u64
}

impl MechanismKind {
    pub fn new(mechanism: Mechanism, d: u64, epsilon: f64, range: Option<u64>) -> Result<Self, LdpError> {
        let kind = match mechanism {
            Mechanism::Krr => MechanismKind::Krr { d, epsilon },
            Mechanism::Oue => MechanismKind::Oue { d, epsilon },
            Mechanism::Olh => MechanismKind::Olh {
                d,
                epsilon,
                range: range.unwrap_or_else(|| default_olh_range(d)),
            },
        };
        kind.validate()?;
        Ok(kind)
    }

    pub fn validate(&self) -> Result<(), LdpError> {
        if !(self.epsilon() >= 0.0 && self.epsilon().is_finite()) {
            return Err(LdpError::InvalidMechanism(format!(
                "epsilon must be finite and non-negative, got {}",
                self.epsilon()
            )));
        }
        if self.d() < 2 {
            return Err(LdpError::InvalidMechanism(format!("d must be at least 2, got {}", self.d())));
        }
        if self.d() > u32::MAX as u64 {
            return Err(LdpError::InvalidMechanism("d does not fit in 32 bits".into()));
        }
        if let MechanismKind::Olh { d, range, .. } = *self {
            if range < 2 || range >= d {
                return Err(LdpError::InvalidMechanism(format!(
                    "OLH range must satisfy 2 <= g < d, got g = {range}, d = {d}"
                )));
            }
        }
        Ok(())
    }

    pub fn mechanism(&self) -> Mechanism {
        match self {
            MechanismKind::Krr { .. } => Mechanism::Krr,
            MechanismKind::Oue { .. } => Mechanism::Oue,
            MechanismKind::Olh { .. } => Mechanism::Olh,
        }
    }

    pub fn d(&self) -> u64 {
        match *self {
            MechanismKind::Krr { d, .. } | MechanismKind::Oue { d, .. } | MechanismKind::Olh { d, .. } => d,
        }
    }

    pub fn epsilon(&self) -> f64 {
        match *self {
            MechanismKind::Krr { epsilon, .. }
            | MechanismKind::Oue { epsilon, .. }
            | MechanismKind::Olh { epsilon, .. } => epsilon,
        }
    }

    /// Exact pure-LDP support probabilities `(p, q)`.
    pub fn probabilities(&self) -> (f64, f64) {
        let e = self.epsilon().exp();
        match *self {
            MechanismKind::Krr { d, .. } => (e / (e + (d - 1) as f64), 1.0 / (e + (d - 1) as f64)),
            MechanismKind::Oue { .. } => (0.5, 1.0 / (e + 1.0)),
            MechanismKind::Olh { range, .. } => (e / (e + (range - 1) as f64), 1.0 / range as f64),
        }
    }

    /// Whether `report` lies in this mechanism's output space.
    pub fn in_domain(&self, report: &Report) -> bool {
        match (*self, report) {
            (MechanismKind::Krr { d, .. }, Report::Category(v)) => (*v as u64) < d,
            (MechanismKind::Oue { d, .. }, Report::Bits(bits)) => bits.len() as u64 == d,
            (MechanismKind::Olh { range, .. }, Report::Hashed { value, .. }) => (*value as u64) < range,
            _ => false,
        }
    }
}

/// A client's randomized output.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Report {
    /// kRR: a category in `[d]`.
    Category(u32),
    /// OUE: one bit per category.
    Bits(Vec<bool>),
    /// OLH: a value in `[g]` under the hash keyed by `seed`.
    Hashed { seed: u64, value: u32 },
}

impl Report {
    pub fn encode(&self, out: &mut Vec<u8>) {
        match self {
            Report::Category(v) => codec::put_u32(out, *v),
            Report::Bits(bits) => {
                codec::put_u32(out, bits.len() as u32);
                for chunk in bits.chunks(8) {
                    let byte = chunk
                        .iter()
                        .enumerate()
                        .fold(0u8, |acc, (i, &b)| acc | ((b as u8) << (7 - i)));
                    out.push(byte);
                }
            }
            Report::Hashed { seed, value } => {
                codec::put_u64(out, *seed);
                codec::put_u32(out, *value);
            }
        }
    }

    pub fn decode(mechanism: Mechanism, r: &mut Reader<'_>) -> Result<Self, LdpError> {
        Ok(match mechanism {
            Mechanism::Krr => Report::Category(r.u32()?),
            Mechanism::Oue => {
                let len = r.u32()? as usize;
                let mut bits = Vec::with_capacity(len);
                for _ in 0..len.div_ceil(8) {
                    let byte = r.u8()?;
                    for i in 0..8 {
                        if bits.len() < len {
                            bits.push(byte & (0x80 >> i) != 0);
                        }
                    }
                }
                Report::Bits(bits)
            }
            Mechanism::Olh => Report::Hashed {
                seed: r.u64()?,
                value: r.u32()?,
            },
        })
    }
}

/// Keyed hash `H_seed: [d] -> [g]` shared by client and server.
pub fn olh_hash(seed: u64, value: u64, range: u64) -> u64 {
    let digest = Sha256::new()
        .chain_update(OLH_HASH_LABEL)
        .chain_update(seed.to_be_bytes())
        .chain_update(value.to_be_bytes())
        .finalize();
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    u64::from_be_bytes(word) % range
}

fn check_category(v: u64, d: u64) -> Result<(), LdpError> {
    if v >= d {
        return Err(LdpError::CategoryOutOfRange { value: v, d });
    }
    Ok(())
}

/// Generalized randomized response over `[k]`.
fn randomized_response<R: Rng + ?Sized>(v: u64, epsilon: f64, k: u64, rng: &mut R) -> u64 {
    let e = epsilon.exp();
    let keep = e / (e + (k - 1) as f64);
    if rng.gen::<f64>() < keep {
        v
    } else {
        let other = rng.gen_range(0..k - 1);
        if other >= v {
            other + 1
        } else {
            other
        }
    }
}

pub fn perturb_krr<R: Rng + ?Sized>(v: u64, epsilon: f64, d: u64, rng: &mut R) -> Result<Report, LdpError> {
    MechanismKind::Krr { d, epsilon }.validate()?;
    check_category(v, d)?;
    Ok(Report::Category(randomized_response(v, epsilon, d, rng) as u32))
}

pub fn perturb_oue<R: Rng + ?Sized>(v: u64, epsilon: f64, d: u64, rng: &mut R) -> Result<Report, LdpError> {
    MechanismKind::Oue { d, epsilon }.validate()?;
    check_category(v, d)?;
    let q = 1.0 / (epsilon.exp() + 1.0);
    let bits = (0..d)
        .map(|k| rng.gen::<f64>() < if k == v { 0.5 } else { q })
        .collect();
    Ok(Report::Bits(bits))
}

/// OLH with a caller-chosen hash seed.
pub fn perturb_olh_with_seed<R: Rng + ?Sized>(
    v: u64,
    epsilon: f64,
    d: u64,
    range: u64,
    seed: u64,
    rng: &mut R,
) -> Result<Report, LdpError> {
    MechanismKind::Olh { d, epsilon, range }.validate()?;
    check_category(v, d)?;
    let hashed = olh_hash(seed, v, range);
    Ok(Report::Hashed {
        seed,
        value: randomized_response(hashed, epsilon, range, rng) as u32,
    })
}

/// OLH with a fresh per-report seed.
pub fn perturb_olh<R: Rng + ?Sized>(v: u64, epsilon: f64, d: u64, range: u64, rng: &mut R) -> Result<Report, LdpError> {
    let seed = rng.gen();
    perturb_olh_with_seed(v, epsilon, d, range, seed, rng)
}

pub fn perturb<R: Rng + ?Sized>(kind: &MechanismKind, v: u64, rng: &mut R) -> Result<Report, LdpError> {
    match *kind {
        MechanismKind::Krr { d, epsilon } => perturb_krr(v, epsilon, d, rng),
        MechanismKind::Oue { d, epsilon } => perturb_oue(v, epsilon, d, rng),
        MechanismKind::Olh { d, epsilon, range } => perturb_olh(v, epsilon, d, range, rng),
    }
}

/// Whether `report` counts toward category `k`.
pub fn support(kind: &MechanismKind, report: &Report, k: u64) -> bool {
    match (kind, report) {
        (MechanismKind::Krr { .. }, Report::Category(v)) => *v as u64 == k,
        (MechanismKind::Oue { .. }, Report::Bits(bits)) => bits.get(k as usize).copied().unwrap_or(false),
        (MechanismKind::Olh { range, .. }, Report::Hashed { seed, value }) => {
            olh_hash(*seed, k, *range) == *value as u64
        }
        _ => false,
    }
}

/// Per-category support counts.
pub fn support_counts(kind: &MechanismKind, reports: &[Report]) -> Result<Vec<u64>, LdpError> {
    let d = kind.d() as usize;
    let mut counts = vec![0u64; d];
    for report in reports {
        if !kind.in_domain(report) {
            return Err(LdpError::ReportOutOfDomain);
        }
        match report {
            Report::Category(v) => counts[*v as usize] += 1,
            Report::Bits(bits) => {
                for (k, _) in bits.iter().enumerate().filter(|(_, b)| **b) {
                    counts[k] += 1;
                }
            }
            Report::Hashed { .. } => {
                for (k, c) in counts.iter_mut().enumerate() {
                    if support(kind, report, k as u64) {
                        *c += 1;
                    }
                }
            }
        }
    }
    Ok(counts)
}

/// Unbiased count estimates `(C_k - N q_hat) / (p_hat - q_hat)`.
pub fn estimate_frequencies(
    kind: &MechanismKind,
    reports: &[Report],
    p_hat: f64,
    q_hat: f64,
) -> Result<Vec<f64>, LdpError> {
    let counts = support_counts(kind, reports)?;
    estimate_from_counts(&counts, reports.len() as u64, p_hat, q_hat)
}

pub fn estimate_from_counts(counts: &[u64], total: u64, p_hat: f64, q_hat: f64) -> Result<Vec<f64>, LdpError> {
    // also rejects NaN
    if p_hat.partial_cmp(&q_hat) != Some(std::cmp::Ordering::Greater) {
        return Err(LdpError::DegenerateEstimator { p_hat, q_hat });
    }
    let offset = total as f64 * q_hat;
    Ok(counts
        .iter()
        .map(|&c| (c as f64 - offset) / (p_hat - q_hat))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn krr_with_huge_budget_is_deterministic() {
        let mut r = rng(1);
        for _ in 0..1000 {
            assert_eq!(perturb_krr(1, 50.0, 2, &mut r).unwrap(), Report::Category(1));
        }
    }

    #[test]
    fn krr_with_zero_budget_is_a_coin() {
        let mut r = rng(2);
        let trials = 10_000;
        let kept = (0..trials)
            .filter(|_| perturb_krr(0, 0.0, 2, &mut r).unwrap() == Report::Category(0))
            .count() as f64;
        let sigma = (trials as f64 * 0.25).sqrt();
        assert!((kept - trials as f64 / 2.0).abs() < 3.0 * sigma);
    }

    #[test]
    fn out_of_range_inputs_are_rejected() {
        let mut r = rng(3);
        assert!(perturb_krr(4, 1.0, 4, &mut r).is_err());
        assert!(perturb_oue(0, 1.0, 1, &mut r).is_err());
        assert!(perturb_olh(0, 1.0, 10, 10, &mut r).is_err());
        assert!(perturb_olh(0, 1.0, 10, 1, &mut r).is_err());
    }

    #[test]
    fn oue_with_huge_budget_only_flips_the_target() {
        let mut r = rng(4);
        let mut target = 0;
        for _ in 0..2000 {
            let Report::Bits(bits) = perturb_oue(1, 50.0, 3, &mut r).unwrap() else {
                unreachable!()
            };
            assert!(!bits[0] && !bits[2]);
            target += bits[1] as u32;
        }
        assert!((target as f64 - 1000.0).abs() < 3.0 * 500f64.sqrt());
    }

    #[test]
    fn olh_hash_is_deterministic_and_in_range() {
        for v in 0..16 {
            let h = olh_hash(99, v, 8);
            assert_eq!(h, olh_hash(99, v, 8));
            assert!(h < 8);
        }
        let mut r = rng(5);
        for _ in 0..500 {
            let report = perturb_olh_with_seed(7, 50.0, 10, 2, 1234, &mut r).unwrap();
            assert_eq!(
                report,
                Report::Hashed {
                    seed: 1234,
                    value: olh_hash(1234, 7, 2) as u32
                }
            );
        }
    }

    #[test]
    fn support_semantics() {
        let krr = MechanismKind::Krr { d: 5, epsilon: 1.0 };
        assert!(support(&krr, &Report::Category(3), 3));
        assert!(!support(&krr, &Report::Category(3), 4));
        let oue = MechanismKind::Oue { d: 3, epsilon: 1.0 };
        assert!(support(&oue, &Report::Bits(vec![true, false, true]), 2));
        assert!(!support(&oue, &Report::Bits(vec![true, false, true]), 1));
    }

    #[test]
    fn olh_supports_partition_the_domain() {
        // enumerate H over [d]: every category is supported by exactly one value
        let kind = MechanismKind::Olh { d: 16, epsilon: 1.0, range: 5 };
        for seed in 0..50u64 {
            let mut total = 0;
            for value in 0..5u32 {
                let report = Report::Hashed { seed, value };
                total += (0..16).filter(|&k| support(&kind, &report, k)).count();
            }
            assert_eq!(total, 16);
        }
    }

    #[test]
    fn estimator_direct_evaluation() {
        let est = estimate_from_counts(&[30], 100, 0.75, 0.25).unwrap();
        assert!((est[0] - 10.0).abs() < 1e-12);
        let kind = MechanismKind::Krr { d: 3, epsilon: 1.0 };
        let reports: Vec<Report> = [0u32, 0, 2].iter().map(|&v| Report::Category(v)).collect();
        assert_eq!(estimate_frequencies(&kind, &reports, 1.0, 0.0).unwrap(), vec![2.0, 0.0, 1.0]);
        assert!(matches!(
            estimate_frequencies(&kind, &reports, 0.2, 0.2),
            Err(LdpError::DegenerateEstimator { .. })
        ));
        assert_eq!(
            estimate_frequencies(&kind, &[Report::Category(3)], 1.0, 0.0),
            Err(LdpError::ReportOutOfDomain)
        );
    }

    #[test]
    fn report_wire_forms_round_trip() {
        for (mechanism, report) in [
            (Mechanism::Krr, Report::Category(7)),
            (Mechanism::Oue, Report::Bits(vec![true, false, true, true, false, false, false, true, true])),
            (Mechanism::Olh, Report::Hashed { seed: 42, value: 3 }),
        ] {
            let mut out = Vec::new();
            report.encode(&mut out);
            let mut r = Reader::new(&out);
            assert_eq!(Report::decode(mechanism, &mut r).unwrap(), report);
            r.finish().unwrap();
        }
        let mut out = Vec::new();
        Report::Category(0x01020304).encode(&mut out);
        assert_eq!(out, vec![1, 2, 3, 4]);
    }
}
