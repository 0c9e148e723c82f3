//! Channel backend: every agent runs on its own thread inside the process.

use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::{check_reply, AbortReason, AgentEndpoint, Message, Payload, Transport, TransportError};

struct Link<E> {
    to_agent: Sender<Message>,
    from_agent: Receiver<Message>,
    worker: JoinHandle<E>,
}

pub struct InProcTransport<E: AgentEndpoint> {
    links: Vec<Link<E>>,
    timeout: Duration,
}

impl<E: AgentEndpoint> InProcTransport<E> {
    pub fn spawn(endpoints: Vec<E>, timeout: Duration) -> Self {
        let links = endpoints
            .into_iter()
            .map(|mut endpoint| {
                let (to_agent, inbox) = mpsc::channel::<Message>();
                let (outbox, from_agent) = mpsc::channel::<Message>();
                let worker = std::thread::spawn(move || {
                    while let Ok(msg) = inbox.recv() {
                        let stop = matches!(msg.payload, Payload::Shutdown);
                        if let Some(reply) = endpoint.handle(msg) {
                            if outbox.send(reply).is_err() {
                                break;
                            }
                        }
                        if stop {
                            break;
                        }
                    }
                    endpoint
                });
                Link {
                    to_agent,
                    from_agent,
                    worker,
                }
            })
            .collect();
        Self { links, timeout }
    }

    /// Sends `Shutdown` to every agent and hands the endpoints back.
    pub fn shutdown(self) -> Vec<E> {
        for link in &self.links {
            let _ = link.to_agent.send(Message::new(0, Payload::Shutdown));
        }
        self.links
            .into_iter()
            .map(|link| {
                drop(link.to_agent);
                link.worker.join().expect("agent thread panicked")
            })
            .collect()
    }
}

impl<E: AgentEndpoint> Transport for InProcTransport<E> {
    fn agent_count(&self) -> usize {
        self.links.len()
    }

    fn exchange(&mut self, msgs: &[Message]) -> Result<Vec<Message>, TransportError> {
        if msgs.len() != self.links.len() {
            return Err(TransportError::WrongArity {
                expected: self.links.len(),
                got: msgs.len(),
            });
        }
        for (i, (link, msg)) in self.links.iter().zip(msgs).enumerate() {
            link.to_agent
                .send(msg.clone())
                .map_err(|_| TransportError::RoundAborted {
                    agent_id: i as u16,
                    round_id: msg.round_id,
                    reason: AbortReason::Disconnected,
                })?;
        }
        let deadline = Instant::now() + self.timeout;
        let mut replies = Vec::with_capacity(msgs.len());
        for (i, (link, msg)) in self.links.iter().zip(msgs).enumerate() {
            let wait = deadline.saturating_duration_since(Instant::now());
            let abort = |reason| TransportError::RoundAborted {
                agent_id: i as u16,
                round_id: msg.round_id,
                reason,
            };
            let reply = link.from_agent.recv_timeout(wait).map_err(|e| match e {
                RecvTimeoutError::Timeout => abort(AbortReason::Timeout),
                RecvTimeoutError::Disconnected => abort(AbortReason::Disconnected),
            })?;
            check_reply(msg, i, &reply)?;
            replies.push(reply);
        }
        Ok(replies)
    }
}
