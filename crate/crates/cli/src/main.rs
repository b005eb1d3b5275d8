use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};

use vldp_core::adversary::{self, AttackKind, AttackSpec, Collection};
use vldp_core::experiments::{self, ApproxRow, AttackRow, CsvRow, ExperimentGrid};
use vldp_core::group::GroupParams;
use vldp_core::ldp::{Mechanism, MechanismKind, Report};
use vldp_core::protocol::{self, Behavior, ClientOutcome, SessionConfig, SessionPlan, Verdict};
use vldp_core::transport::{self, ServerOptions};

#[derive(Parser)]
#[command(name = "vldp", version, about = "Verifiable local differential privacy: protocols, attacks and benchmarks")]
struct Cli {
    /// Master seed for all randomness.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// CSV output path (default: stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Bit length of the group modulus p.
    #[arg(long, global = true, default_value_t = 128)]
    group_bits: u64,
    /// Seed of the deterministic group generation; server and client must agree.
    #[arg(long, global = true, default_value_t = 0)]
    group_seed: u64,
    /// Read the group from a hex file instead of generating it.
    #[arg(long, global = true)]
    group_file: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct MechArgs {
    #[arg(long, default_value = "krr")]
    mechanism: Mechanism,
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
    #[arg(long, default_value_t = 10)]
    d: u64,
    /// OLH hash range (default d/2).
    #[arg(long)]
    range: Option<u64>,
}

impl MechArgs {
    fn kind(&self) -> Result<MechanismKind> {
        Ok(MechanismKind::new(self.mechanism, self.d, self.eps, self.range)?)
    }
}

#[derive(Args, Clone)]
struct SessionArgs {
    #[command(flatten)]
    mech: MechArgs,
    /// Discretization width.
    #[arg(long, default_value_t = 100)]
    width: u64,
    /// Send both proof commitments in one round trip.
    #[arg(long)]
    pipelined: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Print the shared parameters (l, n, z) and approximation error.
    Params {
        #[command(flatten)]
        mech: MechArgs,
        #[arg(long, default_value_t = 100)]
        width: u64,
    },
    /// Run a verifier accepting client sessions over TCP.
    Server {
        #[command(flatten)]
        session: SessionArgs,
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: String,
        /// Per-read timeout in seconds.
        #[arg(long, default_value_t = 30)]
        timeout: u64,
        /// Exit after this many sessions (default: serve forever).
        #[arg(long)]
        sessions: Option<usize>,
        #[arg(long, default_value_t = 64)]
        max_concurrent: usize,
    },
    /// Run prover sessions against a server.
    Client {
        #[command(flatten)]
        session: SessionArgs,
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: String,
        #[arg(long, default_value_t = 30)]
        timeout: u64,
        #[arg(long, default_value_t = 1)]
        sessions: usize,
        /// The client's true value.
        #[arg(long, default_value_t = 0)]
        value: u64,
        /// honest, foreign-seed, or one of the cheating strategies.
        #[arg(long, default_value = "honest")]
        behavior: String,
        /// Category promoted by point-mass style cheats.
        #[arg(long, default_value_t = 0)]
        target: u64,
    },
    /// Simulate a poisoning attack and measure its gain.
    AttackSim {
        #[arg(long, default_value = "mga")]
        attack: AttackKind,
        #[command(flatten)]
        mech: MechArgs,
        /// Run every client through the verifiable protocol.
        #[arg(long)]
        secure: bool,
        #[arg(long, default_value_t = 0.05)]
        beta: f64,
        /// Number of targets (categories 0..r).
        #[arg(long, default_value_t = 1)]
        r: u64,
        /// Genuine clients.
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        /// Discretization width for --secure.
        #[arg(long, default_value_t = 100)]
        width: u64,
    },
    /// Evaluation experiments.
    Bench {
        #[command(subcommand)]
        experiment: BenchCommand,
    },
}

#[derive(Args, Clone)]
struct GridArgs {
    #[arg(long, value_delimiter = ',')]
    mechanisms: Option<Vec<Mechanism>>,
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    d: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    width: Option<Vec<u64>>,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Exact vs discretized probabilities over an epsilon grid.
    Approx {
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Bytes per session over loopback TCP.
    Bandwidth {
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Median session wall time over loopback TCP.
    Runtime {
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        /// Run the repetitions concurrently (throughput, not latency).
        #[arg(long)]
        parallel: bool,
    },
}

fn output(out: &Option<PathBuf>) -> Result<csv::Writer<Box<dyn Write>>> {
    let sink: Box<dyn Write> = match out {
        Some(path) => Box::new(File::create(path).with_context(|| format!("creating {}", path.display()))?),
        None => Box::new(io::stdout()),
    };
    Ok(csv::Writer::from_writer(sink))
}

fn write_rows<R: CsvRow>(w: &mut csv::Writer<Box<dyn Write>>, rows: &[R]) -> Result<()> {
    w.write_record(R::header())?;
    for row in rows {
        w.write_record(row.record())?;
    }
    w.flush()?;
    Ok(())
}

fn group(cli: &Cli) -> Result<Arc<GroupParams>> {
    if let Some(path) = &cli.group_file {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return Ok(Arc::new(GroupParams::from_hex(text.trim())?));
    }
    Ok(experiments::group_for_bits(cli.group_bits, cli.group_seed)?)
}

fn plan(cli: &Cli, args: &SessionArgs) -> Result<Arc<SessionPlan>> {
    let config = SessionConfig::new(args.mech.kind()?, args.width).pipelined(args.pipelined);
    Ok(SessionPlan::new(config, group(cli)?)?)
}

fn parse_behavior(name: &str, mechanism: Mechanism, target: u64, seed: u64) -> Result<Behavior> {
    let mut all = vec![Behavior::Honest, Behavior::ForeignSeed(seed ^ 0x5eed)];
    all.extend(adversary::cheat_catalogue(mechanism, target));
    all.retain(|b| b.applies_to(mechanism));
    all.iter().copied().find(|b| b.name() == name).ok_or_else(|| {
        let names: Vec<_> = all.iter().map(|b| b.name()).collect();
        anyhow!("unknown behavior '{name}' for {mechanism}; expected one of: {}", names.join(", "))
    })
}

fn report_text(report: &Report) -> String {
    match report {
        Report::Category(c) => c.to_string(),
        Report::Bits(bits) => bits.iter().map(|&b| if b { '1' } else { '0' }).collect(),
        Report::Hashed { seed, value } => format!("{seed:016x}:{value}"),
    }
}

fn params_cmd(cli: &Cli, mech: &MechArgs, width: u64) -> Result<()> {
    let kind = mech.kind()?;
    let row = experiments::approximation_for(&kind, width)?
        .ok_or_else(|| anyhow!("width {width} admits no valid discretization for {kind:?}"))?;
    let mut w = output(&cli.out)?;
    let mut header: Vec<&str> = ApproxRow::header().to_vec();
    header.push("p_error");
    w.write_record(&header)?;
    let mut record = row.record();
    record.push(row.p_error().to_string());
    w.write_record(&record)?;
    w.flush()?;
    Ok(())
}

fn server_cmd(
    cli: &Cli,
    args: &SessionArgs,
    addr: &str,
    timeout: u64,
    sessions: Option<usize>,
    max_concurrent: usize,
) -> Result<()> {
    let plan = plan(cli, args)?;
    let options = ServerOptions {
        max_concurrent,
        timeout: Duration::from_secs(timeout),
        max_sessions: sessions,
        seed: cli.seed,
    };
    let server = transport::serve(addr, plan.clone(), options)?;
    eprintln!("listening on {}", server.local_addr());
    let mut w = output(&cli.out)?;
    w.write_record([
        "session", "peer", "verdict", "phase", "detail", "bytes_sent", "bytes_received", "frames", "wall_seconds",
    ])?;
    w.flush()?;
    let mut verdicts = Vec::new();
    loop {
        let done = server.sessions();
        for s in &done[verdicts.len()..] {
            let (verdict, phase, detail) = match &s.verdict {
                Verdict::Accepted(r) => ("accepted", String::new(), report_text(r)),
                Verdict::Halted(h) => ("halted", h.phase.name().to_string(), format!("{:?}", h.reason)),
                Verdict::Aborted(why) => ("aborted", String::new(), why.clone()),
            };
            let m = &s.metrics;
            w.write_record([
                verdicts.len().to_string(),
                s.peer.to_string(),
                verdict.to_string(),
                phase,
                detail,
                m.bytes_sent.to_string(),
                m.bytes_received.to_string(),
                (m.frames_sent + m.frames_received).to_string(),
                m.wall_time.as_secs_f64().to_string(),
            ])?;
            w.flush()?;
            verdicts.push(s.verdict.clone());
        }
        if sessions.is_some_and(|max| verdicts.len() >= max) {
            break;
        }
        thread::sleep(Duration::from_millis(50));
    }
    server.join()?;
    match protocol::collect_and_estimate(&plan, &verdicts) {
        Ok(c) => {
            eprintln!("accepted {} of {} sessions", c.accepted, c.accepted + c.dropped);
            let freqs: Vec<String> = c.estimates.iter().map(|e| format!("{:.4}", e / c.accepted as f64)).collect();
            eprintln!("estimated frequencies: [{}]", freqs.join(", "));
        }
        Err(e) => eprintln!("no estimate: {e}"),
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn client_cmd(
    cli: &Cli,
    args: &SessionArgs,
    addr: &str,
    timeout: u64,
    sessions: usize,
    value: u64,
    behavior: &str,
    target: u64,
) -> Result<()> {
    let plan = plan(cli, args)?;
    let behavior = parse_behavior(behavior, args.mech.mechanism, target, cli.seed)?;
    let mut w = output(&cli.out)?;
    w.write_record(["session", "behavior", "value", "outcome", "phase", "bytes_sent", "bytes_received", "wall_seconds"])?;
    for (i, seed) in protocol::session_seeds(cli.seed).take(sessions).enumerate() {
        let run = transport::run_client(
            addr,
            plan.clone(),
            value,
            behavior,
            ChaCha20Rng::seed_from_u64(seed),
            Duration::from_secs(timeout),
        )?;
        let (outcome, phase) = match &run.outcome {
            ClientOutcome::Accepted => ("accepted", String::new()),
            ClientOutcome::Rejected(p) => ("rejected", p.name().to_string()),
            ClientOutcome::Aborted(why) => ("aborted", why.clone()),
        };
        w.write_record([
            i.to_string(),
            behavior.name().to_string(),
            value.to_string(),
            outcome.to_string(),
            phase,
            run.metrics.bytes_sent.to_string(),
            run.metrics.bytes_received.to_string(),
            run.metrics.wall_time.as_secs_f64().to_string(),
        ])?;
        w.flush()?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn attack_cmd(
    cli: &Cli,
    attack: AttackKind,
    mech: &MechArgs,
    secure: bool,
    beta: f64,
    r: u64,
    n: usize,
    width: u64,
) -> Result<()> {
    let kind = mech.kind()?;
    if r == 0 || r > kind.d() {
        bail!("--r must lie in [1, d]");
    }
    let spec = AttackSpec::new(attack, (0..r).collect(), beta)?;
    let honest = vec![1.0 / kind.d() as f64; kind.d() as usize];
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let report = if secure {
        let plan = SessionPlan::new(SessionConfig::new(kind, width), group(cli)?)?;
        adversary::simulate_attack(&spec, &kind, &honest, n, Collection::Secure(&plan), &mut rng)?
    } else {
        adversary::simulate_attack(&spec, &kind, &honest, n, Collection::Plain, &mut rng)?
    };
    let mut w = output(&cli.out)?;
    write_rows(&mut w, &[AttackRow::new(&spec, &kind, secure, cli.seed, report)])
}

fn grid(cli: &Cli, args: &GridArgs, approx: bool) -> ExperimentGrid {
    let base = ExperimentGrid::default();
    ExperimentGrid {
        mechanisms: args.mechanisms.clone().unwrap_or(base.mechanisms),
        epsilons: args.eps.clone().unwrap_or_else(|| {
            if approx {
                ExperimentGrid::epsilon_steps(0.1, 5.0)
            } else {
                base.epsilons
            }
        }),
        ds: args.d.clone().unwrap_or_else(|| if approx { vec![2, 4, 8] } else { base.ds }),
        widths: args.width.clone().unwrap_or(base.widths),
        group_bits: vec![cli.group_bits],
        seed: cli.seed,
        ..base
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Params { mech, width } => params_cmd(&cli, mech, *width),
        Command::Server {
            session,
            addr,
            timeout,
            sessions,
            max_concurrent,
        } => server_cmd(&cli, session, addr, *timeout, *sessions, *max_concurrent),
        Command::Client {
            session,
            addr,
            timeout,
            sessions,
            value,
            behavior,
            target,
        } => client_cmd(&cli, session, addr, *timeout, *sessions, *value, behavior, *target),
        Command::AttackSim {
            attack,
            mech,
            secure,
            beta,
            r,
            n,
            width,
        } => attack_cmd(&cli, *attack, mech, *secure, *beta, *r, *n, *width),
        Command::Bench { experiment } => {
            let mut w = output(&cli.out)?;
            match experiment {
                BenchCommand::Approx { grid: g } => {
                    write_rows(&mut w, &experiments::run_approximation_experiment(&grid(&cli, g, true))?)
                }
                BenchCommand::Bandwidth { grid: g } => {
                    write_rows(&mut w, &experiments::run_bandwidth_experiment(&grid(&cli, g, false))?)
                }
                BenchCommand::Runtime { grid: g, reps, parallel } => {
                    let grid = ExperimentGrid {
                        repetitions: *reps,
                        parallel: *parallel,
                        ..grid(&cli, g, false)
                    };
                    write_rows(&mut w, &experiments::run_runtime_experiment(&grid)?)
                }
            }
        }
    }
}
