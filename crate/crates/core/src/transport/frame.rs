//! Wire format.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "FHQL"
//!      4     1  version (1)
//!      5     1  kind
//!      6     8  round_id    (u64, little-endian)
//!     14     2  agent_id    (u16, little-endian)
//!     16     4  payload_len (u32, little-endian)
//!     20     n  payload
//! ```
//!
//! Payloads (all reals are IEEE-754 binary64, little-endian):
//!
//! | kind | name            | payload                                   |
//! |------|-----------------|-------------------------------------------|
//! | 1    | SelfLearnSignal | steps u64                                 |
//! | 2    | QueryState      | tag u8, state f64 x d                     |
//! | 3    | QValuesReply    | tag u8, values f64 x |A|                  |
//! | 4    | FedTdTarget     | action u32, target f64, state f64 x d     |
//! | 5    | ImproveAck      | steps u64 (interactions consumed)         |
//! | 6    | Shutdown        | empty                                     |
//!
//! There is no kind that carries parameters, architectures or transitions.

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"FHQL";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 20;
/// Upper bound accepted by stream readers before allocating a payload.
pub const MAX_STREAM_PAYLOAD: usize = 1 << 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Kind {
    SelfLearnSignal = 1,
    QueryState = 2,
    QValuesReply = 3,
    FedTdTarget = 4,
    ImproveAck = 5,
    Shutdown = 6,
}

impl Kind {
    pub const ALL: [Kind; 6] = [
        Kind::SelfLearnSignal,
        Kind::QueryState,
        Kind::QValuesReply,
        Kind::FedTdTarget,
        Kind::ImproveAck,
        Kind::Shutdown,
    ];

    pub fn from_byte(b: u8) -> Option<Kind> {
        Kind::ALL.into_iter().find(|k| *k as u8 == b)
    }
}

/// Which state of a federation step a query refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum StateTag {
    Current = 0,
    Next = 1,
}

impl StateTag {
    fn from_byte(b: u8) -> Option<StateTag> {
        match b {
            0 => Some(StateTag::Current),
            1 => Some(StateTag::Next),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    SelfLearnSignal { steps: u64 },
    QueryState { tag: StateTag, state: Vec<f64> },
    QValuesReply { tag: StateTag, values: Vec<f64> },
    FedTdTarget { state: Vec<f64>, action: u32, target: f64 },
    ImproveAck { steps: u64 },
    Shutdown,
}

impl Payload {
    pub fn kind(&self) -> Kind {
        match self {
            Payload::SelfLearnSignal { .. } => Kind::SelfLearnSignal,
            Payload::QueryState { .. } => Kind::QueryState,
            Payload::QValuesReply { .. } => Kind::QValuesReply,
            Payload::FedTdTarget { .. } => Kind::FedTdTarget,
            Payload::ImproveAck { .. } => Kind::ImproveAck,
            Payload::Shutdown => Kind::Shutdown,
        }
    }

    fn encoded_len(&self) -> usize {
        match self {
            Payload::SelfLearnSignal { .. } | Payload::ImproveAck { .. } => 8,
            Payload::QueryState { state, .. } => 1 + 8 * state.len(),
            Payload::QValuesReply { values, .. } => 1 + 8 * values.len(),
            Payload::FedTdTarget { state, .. } => 4 + 8 + 8 * state.len(),
            Payload::Shutdown => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub round_id: u64,
    /// Sender for replies; 0 on server messages.
    pub agent_id: u16,
    pub payload: Payload,
}

impl Message {
    pub fn new(round_id: u64, payload: Payload) -> Self {
        Self {
            round_id,
            agent_id: 0,
            payload,
        }
    }

    pub fn reply(round_id: u64, agent_id: u16, payload: Payload) -> Self {
        Self {
            round_id,
            agent_id,
            payload,
        }
    }

    pub fn kind(&self) -> Kind {
        self.payload.kind()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("payload of {0} bytes exceeds the 32-bit length field")]
    PayloadTooLarge(usize),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("unknown message kind {0}")]
    UnknownKind(u8),
    #[error("length mismatch: expected {expected} bytes, found {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("truncated frame: need {needed} bytes, have {available}")]
    TruncatedFrame { needed: usize, available: usize },
    #[error("malformed payload: {0}")]
    MalformedPayload(&'static str),
}

pub fn encode(m: &Message) -> Result<Vec<u8>, EncodeError> {
    let len = m.payload.encoded_len();
    let len32 = u32::try_from(len).map_err(|_| EncodeError::PayloadTooLarge(len))?;
    let mut out = Vec::with_capacity(HEADER_LEN + len);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(m.kind() as u8);
    out.extend_from_slice(&m.round_id.to_le_bytes());
    out.extend_from_slice(&m.agent_id.to_le_bytes());
    out.extend_from_slice(&len32.to_le_bytes());
    let put_reals = |out: &mut Vec<u8>, xs: &[f64]| {
        for x in xs {
            out.extend_from_slice(&x.to_le_bytes());
        }
    };
    match &m.payload {
        Payload::SelfLearnSignal { steps } | Payload::ImproveAck { steps } => {
            out.extend_from_slice(&steps.to_le_bytes())
        }
        Payload::QueryState { tag, state } => {
            out.push(*tag as u8);
            put_reals(&mut out, state);
        }
        Payload::QValuesReply { tag, values } => {
            out.push(*tag as u8);
            put_reals(&mut out, values);
        }
        Payload::FedTdTarget {
            state,
            action,
            target,
        } => {
            out.extend_from_slice(&action.to_le_bytes());
            out.extend_from_slice(&target.to_le_bytes());
            put_reals(&mut out, state);
        }
        Payload::Shutdown => {}
    }
    debug_assert_eq!(out.len(), HEADER_LEN + len);
    Ok(out)
}

/// Parsed fixed header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub kind: Kind,
    pub round_id: u64,
    pub agent_id: u16,
    pub payload_len: usize,
}

pub fn decode_header(bytes: &[u8]) -> Result<Header, DecodeError> {
    let probe = bytes.len().min(MAGIC.len());
    if bytes[..probe] != MAGIC[..probe] {
        return Err(DecodeError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(DecodeError::TruncatedFrame {
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    if bytes[4] != VERSION {
        return Err(DecodeError::BadVersion(bytes[4]));
    }
    let kind = Kind::from_byte(bytes[5]).ok_or(DecodeError::UnknownKind(bytes[5]))?;
    let round_id = u64::from_le_bytes(bytes[6..14].try_into().expect("8 bytes"));
    let agent_id = u16::from_le_bytes(bytes[14..16].try_into().expect("2 bytes"));
    let payload_len = u32::from_le_bytes(bytes[16..20].try_into().expect("4 bytes")) as usize;
    Ok(Header {
        kind,
        round_id,
        agent_id,
        payload_len,
    })
}

fn reals(bytes: &[u8]) -> Result<Vec<f64>, DecodeError> {
    if bytes.len() % 8 != 0 {
        return Err(DecodeError::MalformedPayload("real array is not a multiple of 8 bytes"));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

fn fixed(payload: &[u8], expected: usize) -> Result<(), DecodeError> {
    if payload.len() != expected {
        return Err(DecodeError::LengthMismatch {
            expected,
            actual: payload.len(),
        });
    }
    Ok(())
}

fn at_least(payload: &[u8], expected: usize) -> Result<(), DecodeError> {
    if payload.len() < expected {
        return Err(DecodeError::LengthMismatch {
            expected,
            actual: payload.len(),
        });
    }
    Ok(())
}

fn decode_payload(kind: Kind, p: &[u8]) -> Result<Payload, DecodeError> {
    let tag = |b: u8| StateTag::from_byte(b).ok_or(DecodeError::MalformedPayload("unknown state tag"));
    Ok(match kind {
        Kind::SelfLearnSignal => {
            fixed(p, 8)?;
            Payload::SelfLearnSignal {
                steps: u64::from_le_bytes(p.try_into().expect("8 bytes")),
            }
        }
        Kind::ImproveAck => {
            fixed(p, 8)?;
            Payload::ImproveAck {
                steps: u64::from_le_bytes(p.try_into().expect("8 bytes")),
            }
        }
        Kind::QueryState => {
            at_least(p, 1)?;
            Payload::QueryState {
                tag: tag(p[0])?,
                state: reals(&p[1..])?,
            }
        }
        Kind::QValuesReply => {
            at_least(p, 1)?;
            Payload::QValuesReply {
                tag: tag(p[0])?,
                values: reals(&p[1..])?,
            }
        }
        Kind::FedTdTarget => {
            at_least(p, 12)?;
            Payload::FedTdTarget {
                action: u32::from_le_bytes(p[0..4].try_into().expect("4 bytes")),
                target: f64::from_le_bytes(p[4..12].try_into().expect("8 bytes")),
                state: reals(&p[12..])?,
            }
        }
        Kind::Shutdown => {
            fixed(p, 0)?;
            Payload::Shutdown
        }
    })
}

/// Parses exactly one frame occupying all of `bytes`.
pub fn decode(bytes: &[u8]) -> Result<Message, DecodeError> {
    let header = decode_header(bytes)?;
    let expected = HEADER_LEN + header.payload_len;
    if bytes.len() < expected {
        return Err(DecodeError::TruncatedFrame {
            needed: expected,
            available: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(DecodeError::LengthMismatch {
            expected,
            actual: bytes.len(),
        });
    }
    let payload = decode_payload(header.kind, &bytes[HEADER_LEN..])?;
    Ok(Message {
        round_id: header.round_id,
        agent_id: header.agent_id,
        payload,
    })
}
