//! Episodic environments: CartPole and a deterministic chain MDP.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{rng_from_seed, uniform, Rng};

/// Observation vector.
#[derive(Debug, Clone, PartialEq)]
pub struct State(pub Vec<f64>);

impl State {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Action(pub usize);

impl Action {
    pub fn index(self) -> usize {
        self.0
    }
}

/// One environment interaction `(s, a, s', r, done)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: State,
    pub action: Action,
    pub next_state: State,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    CartPole,
    ChainMdp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub horizon: usize,
    pub gamma: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain_length: Option<usize>,
}

impl EnvConfig {
    pub fn cart_pole(horizon: usize, gamma: f64, seed: u64) -> Self {
        Self {
            kind: EnvKind::CartPole,
            horizon,
            gamma,
            seed,
            chain_length: None,
        }
    }

    pub fn chain(length: usize, horizon: usize, gamma: f64, seed: u64) -> Self {
        Self {
            kind: EnvKind::ChainMdp,
            horizon,
            gamma,
            seed,
            chain_length: Some(length),
        }
    }

    /// Returns every violated constraint.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.horizon < 1 {
            out.push("env.horizon must be >= 1".to_string());
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            out.push(format!("env.gamma must lie in (0, 1), got {}", self.gamma));
        }
        if self.kind == EnvKind::ChainMdp {
            match self.chain_length {
                Some(n) if n >= 2 => {}
                Some(n) => out.push(format!("env.chain_length must be >= 2, got {n}")),
                None => out.push("env.chain_length is required for chain_mdp".to_string()),
            }
        }
        out
    }

    pub fn state_dim(&self) -> usize {
        match self.kind {
            EnvKind::CartPole => CartPole::STATE_DIM,
            EnvKind::ChainMdp => self.chain_length.unwrap_or(0),
        }
    }

    pub fn action_count(&self) -> usize {
        2
    }

    /// Per-step reward bound `R`.
    pub fn reward_bound(&self) -> f64 {
        1.0
    }

    /// Bound on any discounted return: `R (1 - gamma^H) / (1 - gamma)`.
    pub fn value_bound(&self) -> f64 {
        self.reward_bound() * (1.0 - self.gamma.powi(self.horizon as i32)) / (1.0 - self.gamma)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("step called on a terminated episode; call reset first")]
    EpisodeTerminated,
    #[error("action {action} out of range for {count} actions")]
    InvalidAction { action: usize, count: usize },
}

/// Classic cart-pole balancing task with explicit Euler integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartPole {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

impl CartPole {
    pub const STATE_DIM: usize = 4;
    pub const GRAVITY: f64 = 9.8;
    pub const MASS_CART: f64 = 1.0;
    pub const MASS_POLE: f64 = 0.1;
    pub const HALF_LENGTH: f64 = 0.5;
    pub const FORCE_MAG: f64 = 10.0;
    pub const TAU: f64 = 0.02;
    pub const X_THRESHOLD: f64 = 2.4;
    pub const THETA_THRESHOLD: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;

    pub fn from_values(v: &[f64]) -> Self {
        Self {
            x: v[0],
            x_dot: v[1],
            theta: v[2],
            theta_dot: v[3],
        }
    }

    pub fn observe(&self) -> State {
        State(vec![self.x, self.x_dot, self.theta, self.theta_dot])
    }

    /// Advances one Euler step; `push_right` selects the sign of the force.
    pub fn advance(&mut self, push_right: bool) {
        let force = if push_right {
            Self::FORCE_MAG
        } else {
            -Self::FORCE_MAG
        };
        let total_mass = Self::MASS_CART + Self::MASS_POLE;
        let pole_mass_length = Self::MASS_POLE * Self::HALF_LENGTH;
        let (sin, cos) = self.theta.sin_cos();
        let temp = (force + pole_mass_length * self.theta_dot * self.theta_dot * sin) / total_mass;
        let theta_acc = (Self::GRAVITY * sin - cos * temp)
            / (Self::HALF_LENGTH * (4.0 / 3.0 - Self::MASS_POLE * cos * cos / total_mass));
        let x_acc = temp - pole_mass_length * theta_acc * cos / total_mass;

        self.x += Self::TAU * self.x_dot;
        self.x_dot += Self::TAU * x_acc;
        self.theta += Self::TAU * self.theta_dot;
        self.theta_dot += Self::TAU * theta_acc;
    }

    pub fn failed(&self) -> bool {
        self.x.abs() > Self::X_THRESHOLD || self.theta.abs() > Self::THETA_THRESHOLD
    }
}

/// Deterministic corridor of `length` cells. Action 0 moves left (clamped at
/// cell 0), action 1 moves right; entering the last cell pays 1 and ends the
/// episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainMdp {
    pub length: usize,
    pub cell: usize,
}

impl ChainMdp {
    pub const LEFT: Action = Action(0);
    pub const RIGHT: Action = Action(1);

    pub fn observe(&self) -> State {
        one_hot(self.cell, self.length)
    }

    /// Pure transition function: `(next_cell, reward, terminal)`.
    pub fn transition(length: usize, cell: usize, action: Action) -> (usize, f64, bool) {
        let next = if action == Self::RIGHT {
            (cell + 1).min(length - 1)
        } else {
            cell.saturating_sub(1)
        };
        let terminal = next == length - 1;
        (next, if terminal { 1.0 } else { 0.0 }, terminal)
    }
}

pub fn one_hot(index: usize, len: usize) -> State {
    let mut v = vec![0.0; len];
    v[index] = 1.0;
    State(v)
}

/// Index of the active cell of a one-hot chain observation.
pub fn chain_cell(state: &State) -> usize {
    state
        .0
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

#[derive(Debug, Clone)]
enum Dynamics {
    CartPole(CartPole),
    Chain(ChainMdp),
}

/// A seeded episodic environment. One owner steps it at a time.
#[derive(Debug, Clone)]
pub struct Environment {
    config: EnvConfig,
    dynamics: Dynamics,
    rng: Rng,
    episode_steps: usize,
    terminated: bool,
    total_steps: u64,
}

impl Environment {
    /// Builds an environment whose initial-state stream is seeded by `seed`
    /// (overriding `config.seed`) and resets it.
    pub fn with_seed(config: &EnvConfig, seed: u64) -> Self {
        let dynamics = match config.kind {
            EnvKind::CartPole => Dynamics::CartPole(CartPole::from_values(&[0.0; 4])),
            EnvKind::ChainMdp => Dynamics::Chain(ChainMdp {
                length: config.chain_length.expect("chain_length validated"),
                cell: 0,
            }),
        };
        let mut env = Self {
            config: config.clone(),
            dynamics,
            rng: rng_from_seed(seed),
            episode_steps: 0,
            terminated: false,
            total_steps: 0,
        };
        env.reset();
        env
    }

    pub fn new(config: &EnvConfig) -> Self {
        Self::with_seed(config, config.seed)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn action_count(&self) -> usize {
        self.config.action_count()
    }

    pub fn state_dim(&self) -> usize {
        self.config.state_dim()
    }

    /// Draws an initial state and clears the episode step counter.
    pub fn reset(&mut self) -> State {
        self.episode_steps = 0;
        self.terminated = false;
        match &mut self.dynamics {
            Dynamics::CartPole(cp) => {
                let mut v = [0.0; 4];
                for slot in &mut v {
                    *slot = uniform(&mut self.rng, -0.05, 0.05);
                }
                *cp = CartPole::from_values(&v);
                cp.observe()
            }
            Dynamics::Chain(chain) => {
                chain.cell = 0;
                chain.observe()
            }
        }
    }

    pub fn state(&self) -> State {
        match &self.dynamics {
            Dynamics::CartPole(cp) => cp.observe(),
            Dynamics::Chain(chain) => chain.observe(),
        }
    }

    /// Places the environment at a chosen state mid-episode.
    pub fn set_state(&mut self, state: &State) {
        match &mut self.dynamics {
            Dynamics::CartPole(cp) => *cp = CartPole::from_values(&state.0),
            Dynamics::Chain(chain) => chain.cell = chain_cell(state),
        }
        self.terminated = false;
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated
    }

    pub fn episode_steps(&self) -> usize {
        self.episode_steps
    }

    /// Number of `step` calls over the lifetime of this instance.
    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    pub fn step(&mut self, action: Action) -> Result<Transition, EnvError> {
        if self.terminated {
            return Err(EnvError::EpisodeTerminated);
        }
        let count = self.action_count();
        if action.0 >= count {
            return Err(EnvError::InvalidAction {
                action: action.0,
                count,
            });
        }
        let state = self.state();
        let (reward, failed) = match &mut self.dynamics {
            Dynamics::CartPole(cp) => {
                cp.advance(action.0 == 1);
                let failed = cp.failed();
                (if failed { 0.0 } else { 1.0 }, failed)
            }
            Dynamics::Chain(chain) => {
                let (next, r, terminal) = ChainMdp::transition(chain.length, chain.cell, action);
                chain.cell = next;
                (r, terminal)
            }
        };
        self.episode_steps += 1;
        self.total_steps += 1;
        let done = failed || self.episode_steps >= self.config.horizon;
        self.terminated = done;
        Ok(Transition {
            state,
            action,
            next_state: self.state(),
            reward,
            done,
        })
    }
}
