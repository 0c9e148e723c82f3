//! Federated Q-learning across heterogeneous black-box agents.
//!
//! Agents with arbitrary private Q-networks self-learn in their own
//! environment copies. A server periodically queries them at states of its
//! own environment copy, scores actions by consensus plus disagreement,
//! executes the chosen action, and broadcasts a temporal-difference target
//! that every agent regresses toward. Only states, action values and scalar
//! targets ever cross the agent boundary.

pub mod agent;
pub mod config;
pub mod env;
pub mod federation;
pub mod metrics;
pub mod neural;
pub mod orchestrator;
pub mod rng;
pub mod transport;
pub mod verify;
