//! Server/agent message layer.
//!
//! The server talks to agents through a [`Transport`]: one request out to
//! every agent, one reply back from every agent, in agent order. Two backends
//! implement it: [`inproc::InProcTransport`] (threads and channels) and
//! [`tcp::TcpTransport`] (framed messages over TCP streams). Agents implement
//! [`AgentEndpoint`] and never see anything but [`Message`]s.

pub mod frame;
pub mod inproc;
pub mod tcp;

use std::fmt;
use std::time::Duration;

use thiserror::Error;

pub use frame::{decode, encode, DecodeError, EncodeError, Kind, Message, Payload, StateTag};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Agent-side message handler. Returning `None` sends no reply; the backends
/// stop the agent after a `Shutdown`.
pub trait AgentEndpoint: Send + 'static {
    fn handle(&mut self, msg: Message) -> Option<Message>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AbortReason {
    Timeout,
    Disconnected,
    Protocol(String),
}

impl fmt::Display for AbortReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbortReason::Timeout => write!(f, "timed out"),
            AbortReason::Disconnected => write!(f, "disconnected"),
            AbortReason::Protocol(why) => write!(f, "protocol violation: {why}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("round {round_id} aborted: agent {agent_id} {reason}")]
    RoundAborted {
        agent_id: u16,
        round_id: u64,
        reason: AbortReason,
    },
    #[error("expected {expected} messages, got {got}")]
    WrongArity { expected: usize, got: usize },
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Server side of the synchronous request/reply round.
pub trait Transport {
    fn agent_count(&self) -> usize;

    /// Sends `msgs[i]` to agent `i` and waits for all replies. Fails with
    /// `RoundAborted` naming the first agent that does not answer in time.
    fn exchange(&mut self, msgs: &[Message]) -> Result<Vec<Message>, TransportError>;

    /// Sends the same message to every agent.
    fn broadcast(&mut self, msg: &Message) -> Result<Vec<Message>, TransportError> {
        let msgs = vec![msg.clone(); self.agent_count()];
        self.exchange(&msgs)
    }
}

/// Checks that a reply came from the right agent for the right round.
pub(crate) fn check_reply(
    request: &Message,
    agent: usize,
    reply: &Message,
) -> Result<(), TransportError> {
    let agent_id = agent as u16;
    let reason = if reply.round_id != request.round_id {
        Some(format!(
            "reply for round {} to request for round {}",
            reply.round_id, request.round_id
        ))
    } else if reply.agent_id != agent_id {
        Some(format!("reply signed by agent {}", reply.agent_id))
    } else {
        None
    };
    match reason {
        Some(why) => Err(TransportError::RoundAborted {
            agent_id,
            round_id: request.round_id,
            reason: AbortReason::Protocol(why),
        }),
        None => Ok(()),
    }
}
