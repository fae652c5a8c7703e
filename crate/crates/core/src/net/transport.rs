//! Request/response delivery between parties.
//!
//! Both backends carry the same encoded frames. The in-process backend
//! still encodes and decodes every message so it exercises the codec, and
//! hands the request to the target party on the caller's thread.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter, ErrorKind};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock, Weak};
use std::thread::JoinHandle;
use std::time::Duration;

use crate::channel::DEFAULT_TIMEOUT;

use super::party::Party;
use super::wire::{Frame, Message, PartyRole, WireError};
use super::NetError;

pub trait Transport: Send + Sync {
    fn request(&self, to: PartyRole, msg: &Message) -> Result<Message, NetError>;
}

fn round_trip(msg: &Message) -> Result<Message, NetError> {
    Ok(Message::decode(&msg.encode())?)
}

/// Parties living in this process.
#[derive(Default)]
pub struct InProcTransport {
    parties: RwLock<HashMap<PartyRole, Weak<Party>>>,
}

impl InProcTransport {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn register(&self, party: &Arc<Party>) {
        self.parties.write().unwrap().insert(party.role(), Arc::downgrade(party));
    }
}

impl Transport for InProcTransport {
    fn request(&self, to: PartyRole, msg: &Message) -> Result<Message, NetError> {
        let party = self
            .parties
            .read()
            .unwrap()
            .get(&to)
            .and_then(Weak::upgrade)
            .ok_or(NetError::Unreachable(to))?;
        let reply = party.handle(round_trip(msg)?);
        round_trip(&reply)
    }
}

/// Parties reached over TCP. Connections are pooled per peer; a request
/// takes an idle connection (or opens one) and returns it after the reply.
pub struct TcpTransport {
    peers: HashMap<PartyRole, SocketAddr>,
    pool: Mutex<HashMap<PartyRole, Vec<TcpStream>>>,
    timeout: Duration,
}

impl TcpTransport {
    pub fn new(peers: HashMap<PartyRole, SocketAddr>) -> Self {
        Self::with_timeout(peers, DEFAULT_TIMEOUT)
    }

    pub fn with_timeout(peers: HashMap<PartyRole, SocketAddr>, timeout: Duration) -> Self {
        TcpTransport {
            peers,
            pool: Mutex::new(HashMap::new()),
            timeout,
        }
    }

    /// Resolves `role → "host:port"` pairs.
    pub fn resolve<'a>(peers: impl IntoIterator<Item = (PartyRole, &'a str)>) -> Result<HashMap<PartyRole, SocketAddr>, NetError> {
        peers
            .into_iter()
            .map(|(role, addr)| {
                let resolved = addr
                    .to_socket_addrs()
                    .map_err(|e| NetError::Config(format!("{addr}: {e}")))?
                    .next()
                    .ok_or_else(|| NetError::Config(format!("{addr} resolves to nothing")))?;
                Ok((role, resolved))
            })
            .collect()
    }

    fn connect(&self, to: PartyRole) -> Result<TcpStream, NetError> {
        if let Some(stream) = self.pool.lock().unwrap().get_mut(&to).and_then(Vec::pop) {
            return Ok(stream);
        }
        let addr = self.peers.get(&to).ok_or(NetError::Unreachable(to))?;
        let stream = TcpStream::connect_timeout(addr, self.timeout).map_err(|e| match e.kind() {
            ErrorKind::TimedOut | ErrorKind::WouldBlock => NetError::Timeout(format!("connecting to {addr}")),
            _ => NetError::Unreachable(to),
        })?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(self.timeout))?;
        stream.set_write_timeout(Some(self.timeout))?;
        Ok(stream)
    }
}

fn io_error(e: WireError, to: PartyRole) -> NetError {
    match e {
        WireError::TimedOut => NetError::Timeout(format!("waiting for {}", to.name())),
        other => NetError::Wire(other),
    }
}

impl Transport for TcpTransport {
    fn request(&self, to: PartyRole, msg: &Message) -> Result<Message, NetError> {
        let stream = self.connect(to)?;
        msg.to_frame().write_to(&mut BufWriter::new(&stream)).map_err(|e| io_error(e, to))?;
        let reply = Frame::read_from(&mut BufReader::new(&stream)).map_err(|e| io_error(e, to))?;
        self.pool.lock().unwrap().entry(to).or_default().push(stream);
        Ok(Message::from_frame(reply)?)
    }
}

/// A listening party. Dropping the handle stops accepting connections.
pub struct Server {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl Server {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the accept loop ends.
    pub fn wait(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

/// Serves `party` on `listener`, one thread per connection.
pub fn serve(party: Arc<Party>, listener: TcpListener) -> Result<Server, NetError> {
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let accept = std::thread::Builder::new()
        .name(format!("{}-accept", party.role().name()))
        .spawn(move || {
            for conn in listener.incoming() {
                if flag.load(Ordering::SeqCst) {
                    break;
                }
                let stream = match conn {
                    Ok(s) => s,
                    Err(e) => {
                        log::warn!("accept failed: {e}");
                        continue;
                    }
                };
                let party = party.clone();
                let _ = std::thread::Builder::new()
                    .name(format!("{}-conn", party.role().name()))
                    .spawn(move || connection(&party, stream));
            }
        })?;
    log::info!("serving on {addr}");
    Ok(Server {
        addr,
        stop,
        accept: Some(accept),
    })
}

fn connection(party: &Party, stream: TcpStream) {
    let _ = stream.set_nodelay(true);
    let mut reader = BufReader::new(&stream);
    loop {
        let reply = match Frame::read_from(&mut reader) {
            Ok(frame) => match Message::from_frame(frame) {
                Ok(msg) => party.handle(msg),
                Err(e) => Message::nack(format!("malformed request: {e}"), false),
            },
            Err(WireError::Io(_) | WireError::TimedOut) => return,
            Err(e) => {
                // The stream position is unknown after a bad header.
                let _ = Message::nack(format!("malformed frame: {e}"), false)
                    .to_frame()
                    .write_to(&mut BufWriter::new(&stream));
                return;
            }
        };
        if reply.to_frame().write_to(&mut BufWriter::new(&stream)).is_err() {
            return;
        }
    }
}
