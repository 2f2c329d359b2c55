use std::fmt;
use std::io::{BufReader, Read, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use super::frame::{Frame, Op, PROTOCOL_VERSION};
use super::BridgeError;
use crate::error::Result;
use crate::sampler::ScoreModel;
use crate::tensor::{LatentTensor, Shape};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

/// Overrides any configured endpoint when set.
pub const ENDPOINT_ENV: &str = "NOISECODER_BRIDGE";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    /// Shell command whose stdin/stdout carry the frames.
    Command(String),
    /// `host:port`
    Tcp(String),
}

impl Endpoint {
    /// `$NOISECODER_BRIDGE` if set and non-empty, else `configured`.
    pub fn resolve(configured: Option<&str>) -> Result<Option<Self>, BridgeError> {
        let env = std::env::var(ENDPOINT_ENV).ok().filter(|s| !s.trim().is_empty());
        env.as_deref().or(configured).map(str::parse).transpose()
    }
}

impl FromStr for Endpoint {
    type Err = BridgeError;

    fn from_str(s: &str) -> Result<Self, BridgeError> {
        let s = s.trim();
        let bad = || BridgeError::BadEndpoint(s.to_owned());
        if let Some(cmd) = s.strip_prefix("cmd:") {
            if cmd.trim().is_empty() {
                return Err(bad());
            }
            Ok(Self::Command(cmd.to_owned()))
        } else if let Some(addr) = s.strip_prefix("tcp:") {
            match addr.rsplit_once(':') {
                Some((host, port)) if !host.is_empty() && port.parse::<u16>().is_ok() => Ok(Self::Tcp(addr.to_owned())),
                _ => Err(bad()),
            }
        } else {
            Err(bad())
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Command(c) => write!(f, "cmd:{c}"),
            Self::Tcp(a) => write!(f, "tcp:{a}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BridgeConfig {
    pub endpoint: Endpoint,
    pub shape: Shape,
    pub timeout: Duration,
    /// Upper bound on simultaneously open sessions.
    pub connections: usize,
}

impl BridgeConfig {
    pub fn new(endpoint: Endpoint, shape: Shape) -> Self {
        Self { endpoint, shape, timeout: DEFAULT_TIMEOUT, connections: 1 }
    }

    pub fn timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn connections(mut self, n: usize) -> Self {
        self.connections = n.max(1);
        self
    }
}

enum Transport {
    Child(Child),
    Tcp(TcpStream),
}

/// One handshaken connection. Requests are strictly sequential, so
/// responses match requests in FIFO order.
pub struct Session {
    writer: Box<dyn Write + Send>,
    responses: Receiver<Result<Frame, BridgeError>>,
    transport: Transport,
    shape: Shape,
    timeout: Duration,
    broken: bool,
}

impl Session {
    pub fn connect(endpoint: &Endpoint, shape: Shape, timeout: Duration) -> Result<Self, BridgeError> {
        let (reader, writer, transport): (Box<dyn Read + Send>, Box<dyn Write + Send>, _) = match endpoint {
            Endpoint::Command(cmd) => {
                let mut child = Command::new("sh")
                    .arg("-c")
                    .arg(cmd)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(BridgeError::Transport)?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                (Box::new(stdout), Box::new(stdin), Transport::Child(child))
            }
            Endpoint::Tcp(addr) => {
                let stream = connect_tcp(addr, timeout)?;
                stream.set_nodelay(true).map_err(BridgeError::Transport)?;
                let r = stream.try_clone().map_err(BridgeError::Transport)?;
                let w = stream.try_clone().map_err(BridgeError::Transport)?;
                (Box::new(r), Box::new(w), Transport::Tcp(stream))
            }
        };
        let (tx, responses) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(reader);
            loop {
                let msg = match Frame::read_from(&mut reader) {
                    Ok(Some(frame)) => Ok(frame),
                    Ok(None) => Err(BridgeError::ConnectionLost),
                    Err(e) => Err(e),
                };
                let stop = msg.is_err();
                if tx.send(msg).is_err() || stop {
                    break;
                }
            }
        });
        let mut session = Self { writer, responses, transport, shape, timeout, broken: false };
        session.handshake()?;
        Ok(session)
    }

    fn handshake(&mut self) -> Result<(), BridgeError> {
        let reply = self.round_trip(&Frame::hello(&self.shape.dims()))?;
        match reply.header.op {
            Op::Hello => {}
            Op::Error => return Err(BridgeError::Server(reply.header.message.unwrap_or_default())),
            op => return Err(self.poison(BridgeError::Protocol(format!("expected hello, got {op:?}")))),
        }
        let version = reply.header.version.unwrap_or_default();
        if version != PROTOCOL_VERSION {
            return Err(self.poison(BridgeError::UnsupportedProtocol(version)));
        }
        let server = reply.header.shape.unwrap_or_default();
        if server != self.shape.dims() {
            return Err(self.poison(BridgeError::ShapeMismatch { client: self.shape.dims(), server }));
        }
        Ok(())
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn is_broken(&self) -> bool {
        self.broken
    }

    fn poison(&mut self, e: BridgeError) -> BridgeError {
        if !e.keeps_session() {
            self.broken = true;
        }
        e
    }

    fn round_trip(&mut self, frame: &Frame) -> Result<Frame, BridgeError> {
        if self.broken {
            return Err(BridgeError::ConnectionLost);
        }
        if let Err(e) = frame.write_to(&mut self.writer) {
            return Err(self.poison(e));
        }
        let reply = match self.responses.recv_timeout(self.timeout) {
            Ok(reply) => reply,
            Err(RecvTimeoutError::Timeout) => Err(BridgeError::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(BridgeError::ConnectionLost),
        };
        reply.map_err(|e| self.poison(e))
    }

    /// Sends one denoise frame and waits for its answer.
    pub fn request(&mut self, x: &[f32], sigma: f64, context: Option<&str>) -> Result<Vec<f32>, BridgeError> {
        let dims = self.shape.dims();
        let reply = self.round_trip(&Frame::denoise(&dims, sigma, context, x.to_vec()))?;
        match reply.header.op {
            Op::Denoise => {}
            Op::Error => return Err(BridgeError::Server(reply.header.message.unwrap_or_default())),
            op => return Err(self.poison(BridgeError::Protocol(format!("expected denoise, got {op:?}")))),
        }
        let checked = reply.validate_denoise().map(<[usize]>::to_vec);
        let server = checked.map_err(|e| self.poison(e))?;
        if server != dims {
            return Err(self.poison(BridgeError::ShapeMismatch { client: dims, server }));
        }
        Ok(reply.payload)
    }
}

fn connect_tcp(addr: &str, timeout: Duration) -> Result<TcpStream, BridgeError> {
    let mut last = None;
    for sa in addr.to_socket_addrs().map_err(BridgeError::Transport)? {
        match TcpStream::connect_timeout(&sa, timeout) {
            Ok(s) => return Ok(s),
            Err(e) => last = Some(e),
        }
    }
    Err(BridgeError::Transport(last.unwrap_or_else(|| std::io::Error::other(format!("{addr} resolves to nothing")))))
}

impl Drop for Session {
    fn drop(&mut self) {
        if !self.broken {
            let _ = Frame::bye().write_to(&mut self.writer);
        }
        match &mut self.transport {
            Transport::Tcp(stream) => {
                let _ = stream.shutdown(Shutdown::Both);
            }
            Transport::Child(child) => {
                // Closing stdin lets a well-behaved server exit on its own.
                self.writer = Box::new(std::io::sink());
                let deadline = Instant::now() + Duration::from_secs(2);
                while Instant::now() < deadline {
                    if let Ok(Some(_)) = child.try_wait() {
                        return;
                    }
                    thread::sleep(Duration::from_millis(5));
                }
                let _ = child.kill();
                let _ = child.wait();
            }
        }
    }
}

struct Pool {
    idle: Vec<Session>,
    open: usize,
}

/// A [`ScoreModel`] served by a remote process through a pool of sessions.
pub struct BridgeModel {
    config: BridgeConfig,
    pool: Mutex<Pool>,
    freed: Condvar,
    requests: AtomicU64,
}

impl BridgeModel {
    /// Opens (and handshakes) the first session eagerly so that an
    /// unreachable or incompatible server is reported up front.
    pub fn connect(config: BridgeConfig) -> Result<Self, BridgeError> {
        let first = Session::connect(&config.endpoint, config.shape, config.timeout)?;
        Ok(Self { config, pool: Mutex::new(Pool { idle: vec![first], open: 1 }), freed: Condvar::new(), requests: AtomicU64::new(0) })
    }

    pub fn config(&self) -> &BridgeConfig {
        &self.config
    }

    /// Denoise requests issued so far.
    pub fn requests(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    fn acquire(&self) -> Result<Session, BridgeError> {
        let mut pool = self.pool.lock().expect("pool lock");
        loop {
            if let Some(s) = pool.idle.pop() {
                return Ok(s);
            }
            if pool.open < self.config.connections {
                pool.open += 1;
                drop(pool);
                let c = &self.config;
                return Session::connect(&c.endpoint, c.shape, c.timeout).inspect_err(|_| {
                    self.pool.lock().expect("pool lock").open -= 1;
                    self.freed.notify_one();
                });
            }
            pool = self.freed.wait(pool).expect("pool lock");
        }
    }

    fn release(&self, session: Session) {
        let mut pool = self.pool.lock().expect("pool lock");
        if session.is_broken() {
            pool.open -= 1;
        } else {
            pool.idle.push(session);
        }
        drop(pool);
        self.freed.notify_one();
    }

    pub fn request(&self, x: &[f32], sigma: f64, context: Option<&str>) -> Result<Vec<f32>, BridgeError> {
        let mut session = self.acquire()?;
        self.requests.fetch_add(1, Ordering::Relaxed);
        let out = session.request(x, sigma, context);
        self.release(session);
        out
    }
}

impl ScoreModel for BridgeModel {
    fn shape(&self) -> Shape {
        self.config.shape
    }

    fn denoise(&self, x: &LatentTensor, sigma: f64, context: Option<&str>) -> Result<LatentTensor> {
        x.expect_shape(self.config.shape)?;
        let payload: Vec<f32> = x.data().iter().map(|&v| v as f32).collect();
        let out = self.request(&payload, sigma, context)?;
        LatentTensor::new(self.config.shape, out.into_iter().map(f64::from).collect())
    }
}
