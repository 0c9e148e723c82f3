//! TCP backend. Each agent holds one ordered, reliable stream to the server
//! and exchanges length-prefixed frames on it.

use std::io::{self, ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::frame::{decode, decode_header, DecodeError, HEADER_LEN, MAX_STREAM_PAYLOAD};
use super::{
    check_reply, encode, AbortReason, AgentEndpoint, Message, Payload, Transport, TransportError,
};

#[derive(Debug)]
pub enum ReadError {
    Io(io::Error),
    Decode(DecodeError),
}

/// Reads one frame from a stream.
pub fn read_frame<R: Read>(stream: &mut R) -> Result<Message, ReadError> {
    let mut header = [0u8; HEADER_LEN];
    stream.read_exact(&mut header).map_err(ReadError::Io)?;
    let parsed = decode_header(&header).map_err(ReadError::Decode)?;
    if parsed.payload_len > MAX_STREAM_PAYLOAD {
        return Err(ReadError::Decode(DecodeError::LengthMismatch {
            expected: MAX_STREAM_PAYLOAD,
            actual: parsed.payload_len,
        }));
    }
    let mut frame = Vec::with_capacity(HEADER_LEN + parsed.payload_len);
    frame.extend_from_slice(&header);
    frame.resize(HEADER_LEN + parsed.payload_len, 0);
    stream
        .read_exact(&mut frame[HEADER_LEN..])
        .map_err(ReadError::Io)?;
    decode(&frame).map_err(ReadError::Decode)
}

pub fn write_frame<W: Write>(stream: &mut W, msg: &Message) -> Result<(), TransportError> {
    let bytes = encode(msg)?;
    stream.write_all(&bytes)?;
    stream.flush()?;
    Ok(())
}

/// Agent-side loop: connect to the server, answer frames until `Shutdown`
/// or disconnect, then return the endpoint.
pub fn serve_agent<E: AgentEndpoint>(addr: SocketAddr, mut endpoint: E) -> io::Result<E> {
    let mut stream = TcpStream::connect(addr)?;
    stream.set_nodelay(true)?;
    loop {
        let msg = match read_frame(&mut stream) {
            Ok(m) => m,
            Err(ReadError::Io(_)) => break,
            Err(ReadError::Decode(e)) => {
                return Err(io::Error::new(ErrorKind::InvalidData, e));
            }
        };
        let stop = matches!(msg.payload, Payload::Shutdown);
        if let Some(reply) = endpoint.handle(msg) {
            write_frame(&mut stream, &reply)
                .map_err(|e| io::Error::new(ErrorKind::Other, e.to_string()))?;
        }
        if stop {
            break;
        }
    }
    Ok(endpoint)
}

struct Connection<E> {
    stream: TcpStream,
    worker: Option<JoinHandle<io::Result<E>>>,
}

pub struct TcpTransport<E: AgentEndpoint> {
    conns: Vec<Connection<E>>,
    timeout: Duration,
    addr: SocketAddr,
}

impl<E: AgentEndpoint> TcpTransport<E> {
    /// Binds `127.0.0.1:port` (0 picks a free port) and starts one agent
    /// thread per endpoint, each connecting over loopback. Agent `i` is the
    /// `i`-th accepted connection.
    pub fn spawn_local(endpoints: Vec<E>, port: u16, timeout: Duration) -> io::Result<Self> {
        let listener = TcpListener::bind(("127.0.0.1", port))?;
        let addr = listener.local_addr()?;
        let mut conns = Vec::with_capacity(endpoints.len());
        for endpoint in endpoints {
            let worker = std::thread::spawn(move || serve_agent(addr, endpoint));
            let (stream, _) = listener.accept()?;
            stream.set_nodelay(true)?;
            conns.push(Connection {
                stream,
                worker: Some(worker),
            });
        }
        Ok(Self {
            conns,
            timeout,
            addr,
        })
    }

    /// Accepts `n` agents that connect from elsewhere via [`serve_agent`].
    pub fn accept_remote(listener: &TcpListener, n: usize, timeout: Duration) -> io::Result<Self> {
        let addr = listener.local_addr()?;
        let mut conns = Vec::with_capacity(n);
        for _ in 0..n {
            let (stream, _) = listener.accept()?;
            stream.set_nodelay(true)?;
            conns.push(Connection {
                stream,
                worker: None,
            });
        }
        Ok(Self {
            conns,
            timeout,
            addr,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Sends `Shutdown` everywhere and returns the endpoints of locally
    /// spawned agents.
    pub fn shutdown(mut self) -> io::Result<Vec<E>> {
        for conn in &mut self.conns {
            let _ = write_frame(&mut conn.stream, &Message::new(0, Payload::Shutdown));
        }
        let mut out = Vec::new();
        for conn in &mut self.conns {
            if let Some(worker) = conn.worker.take() {
                out.push(worker.join().expect("agent thread panicked")?);
            }
        }
        Ok(out)
    }
}

impl<E: AgentEndpoint> Transport for TcpTransport<E> {
    fn agent_count(&self) -> usize {
        self.conns.len()
    }

    fn exchange(&mut self, msgs: &[Message]) -> Result<Vec<Message>, TransportError> {
        if msgs.len() != self.conns.len() {
            return Err(TransportError::WrongArity {
                expected: self.conns.len(),
                got: msgs.len(),
            });
        }
        for (i, (conn, msg)) in self.conns.iter_mut().zip(msgs).enumerate() {
            write_frame(&mut conn.stream, msg).map_err(|_| TransportError::RoundAborted {
                agent_id: i as u16,
                round_id: msg.round_id,
                reason: AbortReason::Disconnected,
            })?;
        }
        let deadline = Instant::now() + self.timeout;
        let mut replies = Vec::with_capacity(msgs.len());
        for (i, (conn, msg)) in self.conns.iter_mut().zip(msgs).enumerate() {
            let abort = |reason| TransportError::RoundAborted {
                agent_id: i as u16,
                round_id: msg.round_id,
                reason,
            };
            let wait = deadline.saturating_duration_since(Instant::now());
            if wait.is_zero() {
                return Err(abort(AbortReason::Timeout));
            }
            conn.stream.set_read_timeout(Some(wait))?;
            let reply = read_frame(&mut conn.stream).map_err(|e| match e {
                ReadError::Io(e)
                    if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) =>
                {
                    abort(AbortReason::Timeout)
                }
                ReadError::Io(_) => abort(AbortReason::Disconnected),
                ReadError::Decode(e) => abort(AbortReason::Protocol(e.to_string())),
            })?;
            check_reply(msg, i, &reply)?;
            replies.push(reply);
        }
        Ok(replies)
    }
}
