//! Experiment drivers behind `vldp bench`: parameter approximation,
//! bandwidth and runtime over a grid of configurations. Every row type
//! renders as a CSV record with a fixed header.

use std::sync::Arc;
use std::thread;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::adversary::{AttackSpec, GainReport};
use crate::group::{default_q_bits, GroupError, GroupParams};
use crate::ldp::{default_olh_range, Mechanism, MechanismKind};
use crate::params::{self, ParamsError};
use crate::protocol::{session_seeds, Behavior, ClientOutcome, ProtocolError, SessionConfig, SessionPlan};
use crate::transport::{self, ClientError, ClientRun, ServedSession, ServerOptions};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("honest session {0} was not accepted")]
    Rejected(String),
}

/// A row of CSV output.
pub trait CsvRow {
    fn header() -> &'static [&'static str];
    fn record(&self) -> Vec<String>;
}

#[derive(Debug, Clone)]
pub struct ExperimentGrid {
    pub mechanisms: Vec<Mechanism>,
    pub epsilons: Vec<f64>,
    pub ds: Vec<u64>,
    pub widths: Vec<u64>,
    /// Bit length of `p`.
    pub group_bits: Vec<u64>,
    pub repetitions: usize,
    pub seed: u64,
    /// Run the sessions of one configuration concurrently.
    pub parallel: bool,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        Self {
            mechanisms: Mechanism::ALL.to_vec(),
            epsilons: vec![1.0],
            ds: vec![2, 4, 8, 16, 32],
            widths: vec![100, 1000],
            group_bits: vec![128],
            repetitions: 5,
            seed: 0,
            parallel: false,
        }
    }
}

impl ExperimentGrid {
    pub fn validate(&self, timing: bool) -> Result<(), ExperimentError> {
        let empty = [
            ("mechanisms", self.mechanisms.is_empty()),
            ("epsilons", self.epsilons.is_empty()),
            ("ds", self.ds.is_empty()),
            ("widths", self.widths.is_empty()),
            ("group_bits", self.group_bits.is_empty()),
        ];
        if let Some((axis, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(ExperimentError::Grid(format!("axis '{axis}' is empty")));
        }
        if timing && self.repetitions < 3 {
            return Err(ExperimentError::Grid(format!(
                "timing needs at least 3 repetitions, got {}",
                self.repetitions
            )));
        }
        if self.repetitions == 0 {
            return Err(ExperimentError::Grid("repetitions must be positive".into()));
        }
        Ok(())
    }

    /// `0.1, 0.2, ..., max` (inclusive).
    pub fn epsilon_steps(step: f64, max: f64) -> Vec<f64> {
        let count = (max / step).round() as usize;
        (1..=count).map(|i| (i as f64 * step * 1e9).round() / 1e9).collect()
    }
}

/// The mechanism at one grid point; OLH hashes into `d/2` buckets and is
/// skipped where that leaves fewer than two.
pub fn grid_kind(mechanism: Mechanism, d: u64, epsilon: f64) -> Option<MechanismKind> {
    let range = default_olh_range(d);
    if mechanism == Mechanism::Olh && range < 2 {
        return None;
    }
    MechanismKind::new(mechanism, d, epsilon, Some(range)).ok()
}

/// Deterministic test group with a `p_bits`-bit `p`.
pub fn group_for_bits(p_bits: u64, seed: u64) -> Result<Arc<GroupParams>, GroupError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ p_bits.rotate_left(32));
    Ok(Arc::new(GroupParams::generate(default_q_bits(p_bits), p_bits, &mut rng)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxRow {
    pub mechanism: Mechanism,
    pub epsilon: f64,
    pub d: u64,
    pub width: u64,
    pub l: u64,
    pub n: u64,
    /// Payload radix; 0 for OUE.
    pub z: u64,
    pub p_exact: f64,
    pub p_approx: f64,
    pub q_exact: f64,
    pub q_approx: f64,
}

impl ApproxRow {
    pub fn p_error(&self) -> f64 {
        self.p_exact - self.p_approx
    }

    pub fn q_error(&self) -> f64 {
        self.q_approx - self.q_exact
    }
}

impl CsvRow for ApproxRow {
    fn header() -> &'static [&'static str] {
        &[
            "mechanism", "epsilon", "d", "width", "l", "n", "z", "p_exact", "p_approx", "q_exact", "q_approx",
        ]
    }

    fn record(&self) -> Vec<String> {
        vec![
            self.mechanism.name().into(),
            self.epsilon.to_string(),
            self.d.to_string(),
            self.width.to_string(),
            self.l.to_string(),
            self.n.to_string(),
            self.z.to_string(),
            self.p_exact.to_string(),
            self.p_approx.to_string(),
            self.q_exact.to_string(),
            self.q_approx.to_string(),
        ]
    }
}

/// Approximation of one grid point; `None` where the width admits no valid
/// discretization.
pub fn approximation_row(mechanism: Mechanism, epsilon: f64, d: u64, width: u64) -> Result<Option<ApproxRow>, ParamsError> {
    match grid_kind(mechanism, d, epsilon) {
        Some(kind) => approximation_for(&kind, width),
        None => Ok(None),
    }
}

/// Shared parameters of `kind` at `width` against the exact probabilities.
pub fn approximation_for(kind: &MechanismKind, width: u64) -> Result<Option<ApproxRow>, ParamsError> {
    let (mechanism, epsilon, d) = (kind.mechanism(), kind.epsilon(), kind.d());
    let row = match *kind {
        MechanismKind::Oue { .. } => {
            let shared = match params::oue_shared_parameters(epsilon, width, d) {
                Ok(s) => s,
                Err(ParamsError::InvalidInput(_) | ParamsError::DegenerateOue { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            ApproxRow {
                mechanism,
                epsilon,
                d,
                width,
                l: shared.l,
                n: shared.n,
                z: 0,
                p_exact: 0.5,
                p_approx: shared.p_approx(),
                q_exact: shared.q_exact(),
                q_approx: shared.q_approx(),
            }
        }
        _ => {
            let domain = match *kind {
                MechanismKind::Olh { range, .. } => range,
                _ => d,
            };
            let shared = match params::decide_shared_parameters(epsilon, width, domain) {
                Ok(s) => s,
                Err(ParamsError::InvalidInput(_) | ParamsError::NoValidSplit { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            ApproxRow {
                mechanism,
                epsilon,
                d,
                width,
                l: shared.l,
                n: shared.n,
                z: shared.z,
                p_exact: shared.p_exact(),
                p_approx: shared.p_approx(),
                q_exact: shared.q_exact(),
                q_approx: shared.q_approx(),
            }
        }
    };
    Ok(Some(row))
}

pub fn run_approximation_experiment(grid: &ExperimentGrid) -> Result<Vec<ApproxRow>, ExperimentError> {
    grid.validate(false)?;
    let mut rows = Vec::new();
    for &mechanism in &grid.mechanisms {
        for &d in &grid.ds {
            for &width in &grid.widths {
                for &epsilon in &grid.epsilons {
                    let row = approximation_row(mechanism, epsilon, d, width)
                        .map_err(|e| ExperimentError::Grid(e.to_string()))?;
                    rows.extend(row);
                }
            }
        }
    }
    Ok(rows)
}

/// Client and server views of one loopback session.
#[derive(Debug, Clone)]
pub struct LoopbackSession {
    pub client: ClientRun,
    pub server: ServedSession,
}

/// Runs `sessions` honest clients with input `v` against a fresh loopback
/// server. Results are in client order.
pub fn run_loopback(
    plan: &Arc<SessionPlan>,
    v: u64,
    sessions: usize,
    seed: u64,
    parallel: bool,
) -> Result<Vec<LoopbackSession>, ExperimentError> {
    let options = ServerOptions {
        max_sessions: Some(sessions),
        seed,
        ..ServerOptions::default()
    };
    let server = transport::serve("127.0.0.1:0", plan.clone(), options)?;
    let addr = server.local_addr();
    let seeds: Vec<u64> = session_seeds(seed).take(sessions).collect();
    let connect = |s: u64| -> Result<ClientRun, ClientError> {
        transport::run_client(
            addr,
            plan.clone(),
            v,
            Behavior::Honest,
            ChaCha20Rng::seed_from_u64(s),
            transport::DEFAULT_TIMEOUT,
        )
    };
    let clients: Vec<Result<ClientRun, ClientError>> = if parallel {
        thread::scope(|scope| {
            let handles: Vec<_> = seeds.iter().map(|&s| scope.spawn(move || connect(s))).collect();
            handles.into_iter().map(|h| h.join().expect("client thread")).collect()
        })
    } else {
        seeds.iter().map(|&s| connect(s)).collect()
    };
    let mut served = server.join()?;
    let mut out = Vec::with_capacity(sessions);
    for client in clients {
        let client = client?;
        let index = served
            .iter()
            .position(|s| s.peer == client.local_addr)
            .ok_or_else(|| ExperimentError::Rejected(format!("no server record for {}", client.local_addr)))?;
        let server = served.swap_remove(index);
        if client.outcome != ClientOutcome::Accepted || server.verdict.report().is_none() {
            return Err(ExperimentError::Rejected(format!("{:?} / {:?}", client.outcome, server.verdict)));
        }
        out.push(LoopbackSession { client, server });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthRow {
    pub mechanism: Mechanism,
    pub epsilon: f64,
    pub d: u64,
    pub width: u64,
    pub group_bits: u64,
    /// OT slots per session.
    pub slots: u64,
    pub frames: u64,
    pub client_bytes: u64,
    pub server_bytes: u64,
    pub total_bytes: u64,
}

impl CsvRow for BandwidthRow {
    fn header() -> &'static [&'static str] {
        &[
            "mechanism", "epsilon", "d", "width", "group_bits", "slots", "frames", "client_bytes", "server_bytes",
            "total_bytes",
        ]
    }

    fn record(&self) -> Vec<String> {
        vec![
            self.mechanism.name().into(),
            self.epsilon.to_string(),
            self.d.to_string(),
            self.width.to_string(),
            self.group_bits.to_string(),
            self.slots.to_string(),
            self.frames.to_string(),
            self.client_bytes.to_string(),
            self.server_bytes.to_string(),
            self.total_bytes.to_string(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeRow {
    pub mechanism: Mechanism,
    pub epsilon: f64,
    pub d: u64,
    pub width: u64,
    pub group_bits: u64,
    pub repetitions: usize,
    /// Client wall time from the first request to the verdict.
    pub wall_seconds: f64,
    pub min_seconds: f64,
    pub max_seconds: f64,
}

impl CsvRow for RuntimeRow {
    fn header() -> &'static [&'static str] {
        &[
            "mechanism", "epsilon", "d", "width", "group_bits", "repetitions", "wall_seconds", "min_seconds",
            "max_seconds",
        ]
    }

    fn record(&self) -> Vec<String> {
        vec![
            self.mechanism.name().into(),
            self.epsilon.to_string(),
            self.d.to_string(),
            self.width.to_string(),
            self.group_bits.to_string(),
            self.repetitions.to_string(),
            self.wall_seconds.to_string(),
            self.min_seconds.to_string(),
            self.max_seconds.to_string(),
        ]
    }
}

/// Every runnable configuration of the grid with its plan.
fn grid_plans(grid: &ExperimentGrid) -> Result<Vec<(u64, Arc<SessionPlan>)>, ExperimentError> {
    let mut plans = Vec::new();
    for &bits in &grid.group_bits {
        let group = group_for_bits(bits, grid.seed)?;
        for &mechanism in &grid.mechanisms {
            for &d in &grid.ds {
                for &width in &grid.widths {
                    for &epsilon in &grid.epsilons {
                        if approximation_row(mechanism, epsilon, d, width)
                            .map_err(|e| ExperimentError::Grid(e.to_string()))?
                            .is_none()
                        {
                            continue;
                        }
                        let kind = grid_kind(mechanism, d, epsilon).expect("checked above");
                        let plan = SessionPlan::new(SessionConfig::new(kind, width), group.clone())?;
                        plans.push((bits, plan));
                    }
                }
            }
        }
    }
    Ok(plans)
}

/// Byte totals of one honest session per configuration. Totals do not
/// depend on the input or the randomness.
pub fn run_bandwidth_experiment(grid: &ExperimentGrid) -> Result<Vec<BandwidthRow>, ExperimentError> {
    grid.validate(false)?;
    let mut rows = Vec::new();
    for (bits, plan) in grid_plans(grid)? {
        let session = run_loopback(&plan, 0, 1, grid.seed, false)?.remove(0);
        let m = &session.client.metrics;
        let kind = plan.kind();
        rows.push(BandwidthRow {
            mechanism: kind.mechanism(),
            epsilon: kind.epsilon(),
            d: kind.d(),
            width: plan.config().width,
            group_bits: bits,
            slots: plan.slots() as u64,
            frames: m.frames_sent + m.frames_received,
            client_bytes: m.bytes_sent,
            server_bytes: m.bytes_received,
            total_bytes: m.total_bytes(),
        });
    }
    Ok(rows)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    }
}

/// Median client wall time per configuration over `repetitions` sessions,
/// after one discarded warm-up session.
pub fn run_runtime_experiment(grid: &ExperimentGrid) -> Result<Vec<RuntimeRow>, ExperimentError> {
    grid.validate(true)?;
    let mut rows = Vec::new();
    for (bits, plan) in grid_plans(grid)? {
        let runs = run_loopback(&plan, 0, grid.repetitions + 1, grid.seed, grid.parallel)?;
        let mut times: Vec<f64> = runs[1..].iter().map(|s| s.client.metrics.wall_time.as_secs_f64()).collect();
        let kind = plan.kind();
        rows.push(RuntimeRow {
            mechanism: kind.mechanism(),
            epsilon: kind.epsilon(),
            d: kind.d(),
            width: plan.config().width,
            group_bits: bits,
            repetitions: grid.repetitions,
            wall_seconds: median(&mut times),
            min_seconds: times[0],
            max_seconds: times[times.len() - 1],
        });
    }
    Ok(rows)
}

/// One `attack-sim` result.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackRow {
    pub attack: String,
    pub mechanism: Mechanism,
    pub secure: bool,
    pub beta: f64,
    pub r: usize,
    pub d: u64,
    pub epsilon: f64,
    pub n: usize,
    pub seed: u64,
    pub report: GainReport,
}

impl AttackRow {
    pub fn new(spec: &AttackSpec, kind: &MechanismKind, secure: bool, seed: u64, report: GainReport) -> Self {
        Self {
            attack: spec.kind.name().into(),
            mechanism: kind.mechanism(),
            secure,
            beta: spec.beta,
            r: spec.r(),
            d: kind.d(),
            epsilon: kind.epsilon(),
            n: report.genuine,
            seed,
            report,
        }
    }
}

impl CsvRow for AttackRow {
    fn header() -> &'static [&'static str] {
        &[
            "attack", "mechanism", "secure", "beta", "r", "d", "epsilon", "n", "m", "seed", "empirical_gain",
            "theoretical_gain", "expected_gain", "halt_rate",
        ]
    }

    fn record(&self) -> Vec<String> {
        vec![
            self.attack.clone(),
            self.mechanism.name().into(),
            self.secure.to_string(),
            self.beta.to_string(),
            self.r.to_string(),
            self.d.to_string(),
            self.epsilon.to_string(),
            self.n.to_string(),
            self.report.attackers.to_string(),
            self.seed.to_string(),
            self.report.empirical_gain.to_string(),
            self.report.theoretical_gain.to_string(),
            self.report.expected_gain.to_string(),
            self.report.halt_rate.to_string(),
        ]
    }
}

/// Least-squares line through the points: `(slope, intercept, r_squared)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, my - slope * mx, r2)
}
