//! Wire framing and blocking TCP endpoints.
//!
//! Every message travels as
//!
//! ```text
//! +-----+------------------+-------------+-----------------+
//! | tag | session id (u64) | length (u32)| body (length B) |
//! +-----+------------------+-------------+-----------------+
//!   1B        8B BE            4B BE
//! ```
//!
//! and a session is one ordered stream of frames over one connection.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::protocol::{Behavior, ClientOutcome, Prover, SessionPlan, Verdict, Verifier};

pub const HEADER_LEN: usize = 13;
pub const MAX_BODY: usize = 64 << 20;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Tag {
    Config = 1,
    OtQuery = 2,
    Ciphers = 3,
    P1Commit = 4,
    Challenge = 5,
    P1Resp = 6,
    P2Commit = 7,
    P2Resp = 8,
    P3Sum = 9,
    Verdict = 10,
    Abort = 11,
}

impl Tag {
    pub const ALL: [Tag; 11] = [
        Tag::Config,
        Tag::OtQuery,
        Tag::Ciphers,
        Tag::P1Commit,
        Tag::Challenge,
        Tag::P1Resp,
        Tag::P2Commit,
        Tag::P2Resp,
        Tag::P3Sum,
        Tag::Verdict,
        Tag::Abort,
    ];

    pub fn from_u8(b: u8) -> Option<Tag> {
        Tag::ALL.iter().copied().find(|t| *t as u8 == b)
    }

    pub fn name(self) -> &'static str {
        match self {
            Tag::Config => "CONFIG",
            Tag::OtQuery => "OT-QUERY",
            Tag::Ciphers => "CIPHERS",
            Tag::P1Commit => "P1-COMMIT",
            Tag::Challenge => "CHALLENGE",
            Tag::P1Resp => "P1-RESP",
            Tag::P2Commit => "P2-COMMIT",
            Tag::P2Resp => "P2-RESP",
            Tag::P3Sum => "P3-SUM",
            Tag::Verdict => "VERDICT",
            Tag::Abort => "ABORT",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub tag: Tag,
    pub session_id: u64,
    pub body: Vec<u8>,
}

impl Frame {
    pub fn new(tag: Tag, session_id: u64, body: Vec<u8>) -> Self {
        Self { tag, session_id, body }
    }

    /// Size on the wire, header included.
    pub fn wire_len(&self) -> usize {
        HEADER_LEN + self.body.len()
    }
}

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("unknown frame tag {0}")]
    BadTag(u8),
    #[error("frame body of {0} bytes exceeds the limit")]
    TooLarge(usize),
    #[error("truncated frame: have {have} of {need} bytes")]
    Truncated { have: usize, need: usize },
    #[error("{0} bytes after the frame")]
    Trailing(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn encode_frame(frame: &Frame) -> Result<Vec<u8>, FrameError> {
    if frame.body.len() > MAX_BODY {
        return Err(FrameError::TooLarge(frame.body.len()));
    }
    let mut out = Vec::with_capacity(frame.wire_len());
    out.push(frame.tag as u8);
    out.extend_from_slice(&frame.session_id.to_be_bytes());
    out.extend_from_slice(&(frame.body.len() as u32).to_be_bytes());
    out.extend_from_slice(&frame.body);
    Ok(out)
}

fn parse_header(header: &[u8; HEADER_LEN]) -> Result<(Tag, u64, usize), FrameError> {
    let tag = Tag::from_u8(header[0]).ok_or(FrameError::BadTag(header[0]))?;
    let session_id = u64::from_be_bytes(header[1..9].try_into().expect("8 bytes"));
    let len = u32::from_be_bytes(header[9..13].try_into().expect("4 bytes")) as usize;
    if len > MAX_BODY {
        return Err(FrameError::TooLarge(len));
    }
    Ok((tag, session_id, len))
}

/// Decodes exactly one frame occupying all of `bytes`.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, FrameError> {
    if bytes.len() < HEADER_LEN {
        return Err(FrameError::Truncated {
            have: bytes.len(),
            need: HEADER_LEN,
        });
    }
    let header: &[u8; HEADER_LEN] = bytes[..HEADER_LEN].try_into().expect("header");
    let (tag, session_id, len) = parse_header(header)?;
    let need = HEADER_LEN + len;
    if bytes.len() < need {
        return Err(FrameError::Truncated { have: bytes.len(), need });
    }
    if bytes.len() > need {
        return Err(FrameError::Trailing(bytes.len() - need));
    }
    Ok(Frame::new(tag, session_id, bytes[HEADER_LEN..].to_vec()))
}

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> Result<usize, FrameError> {
    let bytes = encode_frame(frame)?;
    w.write_all(&bytes)?;
    Ok(bytes.len())
}

pub fn read_frame<R: Read>(r: &mut R) -> Result<Frame, FrameError> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)?;
    let (tag, session_id, len) = parse_header(&header)?;
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    Ok(Frame::new(tag, session_id, body))
}

/// Byte and time accounting for one session, seen from one endpoint.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionMetrics {
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub frames_sent: u64,
    pub frames_received: u64,
    pub wall_time: Duration,
    /// Time spent handling each incoming frame type.
    pub phase_times: BTreeMap<&'static str, Duration>,
}

impl SessionMetrics {
    pub fn total_bytes(&self) -> u64 {
        self.bytes_sent + self.bytes_received
    }

    pub fn record_sent(&mut self, frame: &Frame) {
        self.bytes_sent += frame.wire_len() as u64;
        self.frames_sent += 1;
    }

    pub fn record_received(&mut self, frame: &Frame) {
        self.bytes_received += frame.wire_len() as u64;
        self.frames_received += 1;
    }

    fn add_phase(&mut self, tag: Tag, elapsed: Duration) {
        *self.phase_times.entry(tag.name()).or_default() += elapsed;
    }
}

/// One finished server-side session.
#[derive(Debug, Clone)]
pub struct ServedSession {
    pub peer: SocketAddr,
    pub verdict: Verdict,
    pub metrics: SessionMetrics,
}

#[derive(Debug, Clone)]
pub struct ServerOptions {
    pub max_concurrent: usize,
    pub timeout: Duration,
    /// Stop after this many sessions; `None` serves until shut down.
    pub max_sessions: Option<usize>,
    pub seed: u64,
}

impl Default for ServerOptions {
    fn default() -> Self {
        Self {
            max_concurrent: 64,
            timeout: DEFAULT_TIMEOUT,
            max_sessions: None,
            seed: 0,
        }
    }
}

/// A running server; verdicts accumulate until [`Server::join`].
pub struct Server {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    results: Arc<Mutex<Vec<ServedSession>>>,
    acceptor: Option<thread::JoinHandle<io::Result<()>>>,
}

impl Server {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Sessions finished so far.
    pub fn sessions(&self) -> Vec<ServedSession> {
        self.results.lock().expect("verdict sink").clone()
    }

    /// Stops accepting and waits for running sessions.
    pub fn shutdown(mut self) -> io::Result<Vec<ServedSession>> {
        self.stop.store(true, Ordering::SeqCst);
        // unblock accept()
        let _ = TcpStream::connect(self.addr);
        self.finish()
    }

    /// Waits for `max_sessions` sessions to finish.
    pub fn join(mut self) -> io::Result<Vec<ServedSession>> {
        self.finish()
    }

    fn finish(&mut self) -> io::Result<Vec<ServedSession>> {
        if let Some(handle) = self.acceptor.take() {
            handle.join().expect("acceptor thread panicked")?;
        }
        Ok(std::mem::take(&mut *self.results.lock().expect("verdict sink")))
    }
}

/// Binds `addr` and runs one verifier session per accepted connection, with
/// at most `max_concurrent` in flight.
pub fn serve<A: ToSocketAddrs>(addr: A, plan: Arc<SessionPlan>, options: ServerOptions) -> io::Result<Server> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let results = Arc::new(Mutex::new(Vec::new()));
    let acceptor = {
        let stop = stop.clone();
        let results = results.clone();
        thread::spawn(move || accept_loop(listener, plan, options, stop, results))
    };
    Ok(Server {
        addr: local,
        stop,
        results,
        acceptor: Some(acceptor),
    })
}

fn accept_loop(
    listener: TcpListener,
    plan: Arc<SessionPlan>,
    options: ServerOptions,
    stop: Arc<AtomicBool>,
    results: Arc<Mutex<Vec<ServedSession>>>,
) -> io::Result<()> {
    let limit = options.max_concurrent.max(1);
    let (done_tx, done_rx) = mpsc::channel::<()>();
    let mut running = 0usize;
    let mut started = 0usize;
    let mut master = ChaCha20Rng::seed_from_u64(options.seed);
    let mut workers = Vec::new();
    loop {
        if options.max_sessions.is_some_and(|max| started >= max) {
            break;
        }
        while done_rx.try_recv().is_ok() {
            running -= 1;
        }
        while running >= limit {
            done_rx.recv().expect("worker channel");
            running -= 1;
        }
        let (stream, peer) = match listener.accept() {
            Ok(conn) => conn,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        };
        if stop.load(Ordering::SeqCst) {
            break;
        }
        started += 1;
        running += 1;
        let plan = plan.clone();
        let results = results.clone();
        let done = done_tx.clone();
        let rng = ChaCha20Rng::from_rng(&mut master).expect("seeding");
        let timeout = options.timeout;
        workers.push(thread::spawn(move || {
            let (verdict, metrics) = serve_connection(stream, plan, rng, timeout);
            results.lock().expect("verdict sink").push(ServedSession { peer, verdict, metrics });
            let _ = done.send(());
        }));
    }
    for w in workers {
        let _ = w.join();
    }
    Ok(())
}

/// Runs one verifier session over `stream`. Any I/O or framing failure ends
/// the session as aborted; it never affects other sessions.
pub fn serve_connection(
    mut stream: TcpStream,
    plan: Arc<SessionPlan>,
    rng: ChaCha20Rng,
    timeout: Duration,
) -> (Verdict, SessionMetrics) {
    let start = Instant::now();
    let mut metrics = SessionMetrics::default();
    let mut verifier = Verifier::new(plan, rng);
    let _ = stream.set_read_timeout(Some(timeout));
    let _ = stream.set_write_timeout(Some(timeout));
    let _ = stream.set_nodelay(true);
    let verdict = loop {
        if let Some(v) = verifier.verdict() {
            break v.clone();
        }
        let frame = match read_frame(&mut stream) {
            Ok(f) => f,
            Err(FrameError::Io(e)) => break Verdict::Aborted(format!("connection: {e}")),
            Err(e) => {
                // unreadable framing: halt and tell the peer if we can
                let v = verifier.fail_framing(e.to_string());
                for out in v {
                    let _ = write_frame(&mut stream, &out).map(|_| metrics.record_sent(&out));
                }
                break verifier.verdict().cloned().expect("halted");
            }
        };
        metrics.record_received(&frame);
        let tag = frame.tag;
        let t0 = Instant::now();
        let replies = verifier.handle(frame);
        metrics.add_phase(tag, t0.elapsed());
        let mut failed = None;
        for out in &replies {
            match write_frame(&mut stream, out) {
                Ok(_) => metrics.record_sent(out),
                Err(e) => {
                    failed = Some(e);
                    break;
                }
            }
        }
        if let Some(e) = failed {
            if verifier.verdict().is_none() {
                break Verdict::Aborted(format!("connection: {e}"));
            }
        }
    };
    metrics.wall_time = start.elapsed();
    (verdict, metrics)
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Protocol(#[from] crate::protocol::ProtocolError),
}

/// Client-side result of one session.
#[derive(Debug, Clone)]
pub struct ClientRun {
    pub outcome: ClientOutcome,
    pub metrics: SessionMetrics,
    /// Client end of the connection, as the server saw it.
    pub local_addr: SocketAddr,
}

/// Connects to `addr` and runs one prover session for input `v`.
pub fn run_client<A: ToSocketAddrs>(
    addr: A,
    plan: Arc<SessionPlan>,
    v: u64,
    behavior: Behavior,
    rng: ChaCha20Rng,
    timeout: Duration,
) -> Result<ClientRun, ClientError> {
    let start = Instant::now();
    let mut stream = TcpStream::connect(addr)?;
    stream.set_read_timeout(Some(timeout))?;
    stream.set_write_timeout(Some(timeout))?;
    stream.set_nodelay(true)?;
    let local_addr = stream.local_addr()?;
    let mut metrics = SessionMetrics::default();
    let mut prover = Prover::new(plan, v, behavior, rng)?;
    let hello = prover.start();
    write_frame(&mut stream, &hello)?;
    metrics.record_sent(&hello);
    let outcome = loop {
        if let Some(outcome) = prover.outcome() {
            break outcome.clone();
        }
        let frame = match read_frame(&mut stream) {
            Ok(f) => f,
            Err(FrameError::Io(e)) if e.kind() == io::ErrorKind::UnexpectedEof => {
                break ClientOutcome::Aborted("server closed the connection".into())
            }
            Err(e) => return Err(e.into()),
        };
        metrics.record_received(&frame);
        let tag = frame.tag;
        let t0 = Instant::now();
        let replies = prover.handle(frame)?;
        metrics.add_phase(tag, t0.elapsed());
        for out in &replies {
            write_frame(&mut stream, out)?;
            metrics.record_sent(out);
        }
    };
    metrics.wall_time = start.elapsed();
    Ok(ClientRun {
        outcome,
        metrics,
        local_addr,
    })
}
