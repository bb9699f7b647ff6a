//! Live mode: the engine paced against the wall clock, with consoles attached.
//!
//! One port accepts two transports. A connection whose first bytes are
//! `GET ` is upgraded to a WebSocket and carries one frame per text message;
//! anything else is read as raw newline-terminated frames. Either way the
//! frames are the ordinary wire protocol.
//!
//! Connection threads only decode frames and forward them to the tick thread,
//! which owns the engine. Outbound traffic goes through one channel per
//! connection. A console typically:
//!
//! 1. sends `hello` and gets one `ack` per unit back (with the leader flag);
//! 2. sends `cmd.*` frames, each answered by an `ack` from `"host"` once the
//!    command is on the radio, or an `error` frame if it was refused;
//! 3. receives `telemetry` frames from every unit every `telemetry_div` ticks.

use std::io::{self, ErrorKind, Read, Write};
use std::net::{IpAddr, Ipv4Addr, SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender, TryRecvError};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use koboshi::swarm::{decode, Ack, Endpoint, ErrorReport, MessageBody, WireMessage};
use thiserror::Error;
use tungstenite::{Message, WebSocket};

use crate::engine::{Engine, Summary};
use crate::scenario::{Scenario, ScenarioError};
use crate::telemetry::TelemetryWriter;

pub const DEFAULT_PORT: u16 = 7878;
pub const DEFAULT_TELEMETRY_DIV: u32 = 5;
/// Longest accepted raw frame, in bytes.
pub const MAX_FRAME_BYTES: usize = 64 * 1024;

const POLL_INTERVAL: Duration = Duration::from_millis(5);
const READ_TIMEOUT: Duration = Duration::from_millis(10);
const SNIFF_TIMEOUT: Duration = Duration::from_millis(500);

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: io::Error },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("invalid serve option: {0}")]
    InvalidOption(String),
    #[error("serve io: {0}")]
    Io(#[from] io::Error),
    #[error("tick thread panicked")]
    Panicked,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServeOptions {
    pub bind: IpAddr,
    /// 0 picks a free port.
    pub port: u16,
    /// Publish telemetry every this many control ticks.
    pub telemetry_div: u32,
    /// Sim seconds per wall second. Zero runs unpaced.
    pub time_scale: f64,
    /// Stop after this many ticks; `None` runs until shut down.
    pub max_ticks: Option<u64>,
    /// Also record every tick's telemetry to this file.
    pub out: Option<PathBuf>,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self {
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: DEFAULT_PORT,
            telemetry_div: DEFAULT_TELEMETRY_DIV,
            time_scale: 1.0,
            max_ticks: None,
            out: None,
        }
    }
}

/// A running server.
pub struct ServeHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    ticker: JoinHandle<Result<Summary, ServeError>>,
    acceptor: JoinHandle<()>,
}

impl ServeHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Asks every thread to wind down; `join` then returns promptly.
    pub fn shutdown(&self) {
        self.stop.store(true, Ordering::SeqCst);
    }

    /// Waits for the tick loop to end (after `max_ticks` or `shutdown`).
    pub fn join(self) -> Result<Summary, ServeError> {
        let result = self.ticker.join().map_err(|_| ServeError::Panicked);
        self.stop.store(true, Ordering::SeqCst);
        let _ = self.acceptor.join();
        result?
    }
}

struct Inbound {
    conn: u64,
    msg: WireMessage,
}

type Outbox = Sender<Arc<str>>;

/// Connection registry shared by all threads.
#[derive(Default)]
struct Hub {
    next_conn: AtomicU64,
    host_seq: AtomicU64,
    subscribers: Mutex<Vec<(u64, Outbox)>>,
}

impl Hub {
    fn register(&self) -> (u64, Receiver<Arc<str>>) {
        let id = self.next_conn.fetch_add(1, Ordering::SeqCst);
        let (tx, rx) = mpsc::channel();
        self.subscribers.lock().expect("hub lock").push((id, tx));
        (id, rx)
    }

    fn unregister(&self, conn: u64) {
        self.subscribers.lock().expect("hub lock").retain(|(id, _)| *id != conn);
    }

    fn send_to(&self, conn: u64, line: Arc<str>) {
        let subs = self.subscribers.lock().expect("hub lock");
        if let Some((_, tx)) = subs.iter().find(|(id, _)| *id == conn) {
            let _ = tx.send(line);
        }
    }

    fn broadcast(&self, line: Arc<str>) {
        let mut subs = self.subscribers.lock().expect("hub lock");
        subs.retain(|(_, tx)| tx.send(line.clone()).is_ok());
    }

    fn host_frame(&self, body: MessageBody) -> Arc<str> {
        let seq = self.host_seq.fetch_add(1, Ordering::SeqCst) + 1;
        WireMessage::new(Endpoint::Host, Endpoint::Console, seq, body).to_line().into()
    }

    fn error_frame(&self, code: &str, message: String) -> Arc<str> {
        self.host_frame(MessageBody::Error(ErrorReport { code: code.to_string(), message }))
    }
}

/// Starts serving `scenario`. Returns once the port is bound.
pub fn serve_live(scenario: &Scenario, opts: ServeOptions) -> Result<ServeHandle, ServeError> {
    if opts.telemetry_div == 0 {
        return Err(ServeError::InvalidOption("telemetry_div must be >= 1".into()));
    }
    if !(opts.time_scale >= 0.0) || !opts.time_scale.is_finite() {
        return Err(ServeError::InvalidOption("time_scale must be a finite number >= 0".into()));
    }
    let engine = Engine::new(scenario)?;
    let out = opts.out.as_ref().map(TelemetryWriter::create).transpose()?;

    let addr = SocketAddr::new(opts.bind, opts.port);
    let listener = TcpListener::bind(addr).map_err(|source| ServeError::Bind { addr, source })?;
    let addr = listener.local_addr()?;
    listener.set_nonblocking(true)?;

    let stop = Arc::new(AtomicBool::new(false));
    let hub = Arc::new(Hub::default());
    let (in_tx, in_rx) = mpsc::channel();

    let acceptor = {
        let (stop, hub) = (stop.clone(), hub.clone());
        thread::spawn(move || accept_loop(listener, stop, hub, in_tx))
    };
    let ticker = {
        let (stop, hub) = (stop.clone(), hub.clone());
        thread::spawn(move || {
            let result = TickLoop::new(engine, opts, hub, in_rx, out).run(&stop);
            stop.store(true, Ordering::SeqCst);
            result
        })
    };
    Ok(ServeHandle { addr, stop, ticker, acceptor })
}

fn accept_loop(listener: TcpListener, stop: Arc<AtomicBool>, hub: Arc<Hub>, inbound: Sender<Inbound>) {
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let (stop, hub, inbound) = (stop.clone(), hub.clone(), inbound.clone());
                thread::spawn(move || {
                    let _ = handle_connection(stream, &stop, &hub, &inbound);
                });
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(POLL_INTERVAL),
            Err(_) => thread::sleep(POLL_INTERVAL),
        }
    }
}

enum Transport {
    Raw { stream: TcpStream, buf: Vec<u8> },
    Ws(Box<WebSocket<TcpStream>>),
}

fn is_timeout(e: &io::Error) -> bool {
    matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut)
}

impl Transport {
    fn open(stream: TcpStream) -> io::Result<Self> {
        stream.set_nonblocking(false)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(SNIFF_TIMEOUT))?;
        let mut head = [0u8; 4];
        let websocket = match stream.peek(&mut head) {
            Ok(n) => n > 0 && b"GET "[..n] == head[..n] && (n == 4 || sniff_rest(&stream)?),
            Err(e) if is_timeout(&e) => false,
            Err(e) => return Err(e),
        };
        let t = if websocket {
            let ws = tungstenite::accept(stream.try_clone()?).map_err(|e| io::Error::other(e.to_string()))?;
            Transport::Ws(Box::new(ws))
        } else {
            Transport::Raw { stream: stream.try_clone()?, buf: Vec::new() }
        };
        stream.set_read_timeout(Some(READ_TIMEOUT))?;
        Ok(t)
    }

    fn send(&mut self, line: &str) -> io::Result<()> {
        match self {
            Transport::Raw { stream, .. } => {
                stream.write_all(line.as_bytes())?;
                stream.write_all(b"\n")
            }
            Transport::Ws(ws) => ws.send(Message::text(line)).map_err(ws_io),
        }
    }

    /// Frames that arrived since the last call, or `None` once the peer is gone.
    fn recv(&mut self) -> io::Result<Option<Vec<Vec<u8>>>> {
        match self {
            Transport::Raw { stream, buf } => {
                let mut chunk = [0u8; 4096];
                match stream.read(&mut chunk) {
                    Ok(0) => return Ok(None),
                    Ok(n) => buf.extend_from_slice(&chunk[..n]),
                    Err(e) if is_timeout(&e) => {}
                    Err(e) => return Err(e),
                }
                let mut frames = Vec::new();
                while let Some(pos) = buf.iter().position(|&b| b == b'\n') {
                    let line: Vec<u8> = buf.drain(..=pos).collect();
                    frames.push(line);
                }
                if buf.len() > MAX_FRAME_BYTES {
                    // hand the oversized fragment on so it is reported as malformed
                    frames.push(std::mem::take(buf));
                }
                Ok(Some(frames))
            }
            Transport::Ws(ws) => match ws.read() {
                Ok(Message::Text(text)) => Ok(Some(split_lines(text.as_bytes()))),
                Ok(Message::Binary(bytes)) => Ok(Some(split_lines(&bytes))),
                Ok(Message::Close(_)) => Ok(None),
                Ok(_) => Ok(Some(Vec::new())),
                Err(tungstenite::Error::Io(e)) if is_timeout(&e) => Ok(Some(Vec::new())),
                Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => Ok(None),
                Err(e) => Err(ws_io(e)),
            },
        }
    }
}

/// Waits briefly for the rest of a possible `GET ` prefix.
fn sniff_rest(stream: &TcpStream) -> io::Result<bool> {
    let deadline = Instant::now() + SNIFF_TIMEOUT;
    let mut head = [0u8; 4];
    while Instant::now() < deadline {
        match stream.peek(&mut head) {
            Ok(4) => return Ok(&head == b"GET "),
            Ok(0) => return Ok(false),
            Ok(n) if b"GET "[..n] != head[..n] => return Ok(false),
            Ok(_) => thread::sleep(POLL_INTERVAL),
            Err(e) if is_timeout(&e) => return Ok(false),
            Err(e) => return Err(e),
        }
    }
    Ok(false)
}

fn split_lines(bytes: &[u8]) -> Vec<Vec<u8>> {
    bytes
        .split(|&b| b == b'\n')
        .filter(|l| !l.iter().all(u8::is_ascii_whitespace))
        .map(<[u8]>::to_vec)
        .collect()
}

fn ws_io(e: tungstenite::Error) -> io::Error {
    match e {
        tungstenite::Error::Io(e) => e,
        other => io::Error::other(other.to_string()),
    }
}

fn handle_connection(
    stream: TcpStream,
    stop: &AtomicBool,
    hub: &Hub,
    inbound: &Sender<Inbound>,
) -> io::Result<()> {
    let mut transport = Transport::open(stream)?;
    let (conn, outbox) = hub.register();
    let result = (|| {
        while !stop.load(Ordering::SeqCst) {
            loop {
                match outbox.try_recv() {
                    Ok(line) => transport.send(&line)?,
                    Err(TryRecvError::Empty) => break,
                    Err(TryRecvError::Disconnected) => return Ok(()),
                }
            }
            let Some(frames) = transport.recv()? else {
                return Ok(());
            };
            for frame in frames {
                if frame.iter().all(u8::is_ascii_whitespace) {
                    continue;
                }
                match decode(&frame) {
                    Ok(msg) => {
                        if inbound.send(Inbound { conn, msg }).is_err() {
                            return Ok(());
                        }
                    }
                    Err(e) => transport.send(&hub.error_frame(e.code(), e.to_string()))?,
                }
            }
        }
        Ok(())
    })();
    hub.unregister(conn);
    result
}

struct TickLoop {
    engine: Engine,
    opts: ServeOptions,
    hub: Arc<Hub>,
    inbound: Receiver<Inbound>,
    out: Option<TelemetryWriter<std::fs::File>>,
    /// Sequence counters for frames units send to consoles, by unit index.
    unit_seq: Vec<u64>,
}

impl TickLoop {
    fn new(
        engine: Engine,
        opts: ServeOptions,
        hub: Arc<Hub>,
        inbound: Receiver<Inbound>,
        out: Option<TelemetryWriter<std::fs::File>>,
    ) -> Self {
        let unit_seq = vec![0; engine.unit_ids().len()];
        Self { engine, opts, hub, inbound, out, unit_seq }
    }

    fn run(mut self, stop: &AtomicBool) -> Result<Summary, ServeError> {
        let start = Instant::now();
        let period = 1.0 / self.engine.scenario().globals.tick_hz;
        while !stop.load(Ordering::SeqCst) {
            let k = self.engine.tick_index();
            if self.opts.max_ticks.is_some_and(|max| k >= max) {
                break;
            }
            if self.opts.time_scale > 0.0 {
                // sim-time checkpoint; when behind, run late rather than skip
                let due = start + Duration::from_secs_f64(k as f64 * period / self.opts.time_scale);
                while Instant::now() < due && !stop.load(Ordering::SeqCst) {
                    thread::sleep((due - Instant::now()).min(POLL_INTERVAL));
                }
            }
            while let Ok(inb) = self.inbound.try_recv() {
                self.handle(inb);
            }
            let records = self.engine.step();
            if let Some(out) = self.out.as_mut() {
                for r in &records {
                    out.write(r)?;
                }
            }
            if k % u64::from(self.opts.telemetry_div) == 0 {
                for (i, r) in records.into_iter().enumerate() {
                    let line = self.unit_frame(i, MessageBody::Telemetry(r));
                    self.hub.broadcast(line);
                }
            }
        }
        if let Some(out) = self.out.take() {
            out.finish()?;
        }
        Ok(self.engine.summary(start.elapsed().as_secs_f64()))
    }

    fn unit_frame(&mut self, index: usize, body: MessageBody) -> Arc<str> {
        self.unit_seq[index] += 1;
        let id = self.engine.unit_ids()[index];
        WireMessage::new(Endpoint::Unit(id), Endpoint::Console, self.unit_seq[index], body)
            .to_line()
            .into()
    }

    fn handle(&mut self, Inbound { conn, msg }: Inbound) {
        match &msg.body {
            MessageBody::Hello(_) => {
                let leader = self.engine.leader();
                for (i, id) in self.engine.unit_ids().into_iter().enumerate() {
                    let ack = Ack { ack_seq: msg.seq, unit: Some(id), leader: Some(leader == Some(id)) };
                    let line = self.unit_frame(i, MessageBody::Ack(ack));
                    self.hub.send_to(conn, line);
                }
            }
            _ if msg.message_type().is_command() => {
                let unit = match msg.dst {
                    Endpoint::Unit(id) => Some(id),
                    _ => None,
                };
                let ack_seq = msg.seq;
                let reply = match self.engine.submit(msg) {
                    Ok(_) => self.hub.host_frame(MessageBody::Ack(Ack { ack_seq, unit, leader: None })),
                    Err(e) => self.hub.error_frame("Rejected", e.to_string()),
                };
                self.hub.send_to(conn, reply);
            }
            _ => {
                let text = format!("{} frames are not accepted from consoles", msg.message_type().as_str());
                self.hub.send_to(conn, self.hub.error_frame("Rejected", text));
            }
        }
    }
}
