//! Black-box Q-learning agents.
//!
//! An agent owns its Q-function, replay memory and random streams. The only
//! things it hands to anyone else are [`QVector`]s computed at states chosen
//! by the server.

use std::collections::VecDeque;

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{chain_cell, Action, EnvError, Environment, State, Transition};
use crate::neural::{Activation, NetworkSpec, NeuralError, Weights};
use crate::rng::{derive_seed, rng_from_seed, stream, Rng};

/// One agent's action values at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct QVector(pub Vec<f64>);

impl QVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn argmax(&self) -> Action {
        Action(argmax(&self.0))
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    /// Dense network with the given hidden widths.
    Network {
        hidden: Vec<usize>,
        activation: Activation,
    },
    /// Explicit `cells x actions` table; requires a one-hot environment.
    Tabular {
        #[serde(default)]
        init_value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExplorationConfig {
    #[default]
    EpsilonGreedy,
    /// Count-based bonus `c * sqrt(ln t / N_t(s, a))`; tabular agents only.
    Ucb { c: f64 },
}

fn default_kappa() -> usize {
    64
}
fn default_replay_capacity() -> usize {
    10_000
}
fn default_batch_size() -> usize {
    128
}
fn default_target_sync() -> usize {
    1000
}
fn default_train_every() -> usize {
    1
}

/// Hyper-parameters of one agent. Every agent may use different values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub name: String,
    pub model: ModelConfig,
    pub learning_rate: f64,
    pub epsilon: f64,
    /// Step size for improvement toward server targets; defaults to `learning_rate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub improve_rate: Option<f64>,
    #[serde(default = "default_kappa")]
    pub kappa: usize,
    #[serde(default = "default_replay_capacity")]
    pub replay_capacity: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_target_sync")]
    pub target_sync_every: usize,
    /// Environment steps between minibatch updates.
    #[serde(default = "default_train_every")]
    pub train_every: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_grad_norm: Option<f64>,
    /// Overrides the experiment-wide self-learning phase length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub self_learn_steps: Option<usize>,
    #[serde(default)]
    pub exploration: ExplorationConfig,
}

impl AgentConfig {
    pub fn network(name: &str, hidden: &[usize], activation: Activation, lr: f64, eps: f64) -> Self {
        Self {
            name: name.to_string(),
            model: ModelConfig::Network {
                hidden: hidden.to_vec(),
                activation,
            },
            learning_rate: lr,
            epsilon: eps,
            improve_rate: None,
            kappa: default_kappa(),
            replay_capacity: default_replay_capacity(),
            batch_size: default_batch_size(),
            target_sync_every: default_target_sync(),
            train_every: default_train_every(),
            max_grad_norm: None,
            self_learn_steps: None,
            exploration: ExplorationConfig::EpsilonGreedy,
        }
    }

    pub fn tabular(name: &str, lr: f64, eps: f64) -> Self {
        Self {
            model: ModelConfig::Tabular { init_value: 0.0 },
            ..Self::network(name, &[1], Activation::Relu, lr, eps)
        }
    }

    pub fn improve_rate(&self) -> f64 {
        self.improve_rate.unwrap_or(self.learning_rate)
    }

    pub fn violations(&self) -> Vec<String> {
        let p = format!("agent '{}'", self.name);
        let mut out = Vec::new();
        if !(self.learning_rate > 0.0) {
            out.push(format!("{p}: learning_rate must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            out.push(format!("{p}: epsilon must lie in [0, 1]"));
        }
        if let Some(r) = self.improve_rate {
            if !(r >= 0.0) {
                out.push(format!("{p}: improve_rate must be >= 0"));
            }
        }
        if self.replay_capacity == 0 {
            out.push(format!("{p}: replay_capacity must be >= 1"));
        }
        if self.batch_size == 0 || self.batch_size > self.replay_capacity {
            out.push(format!("{p}: batch_size must lie in [1, replay_capacity]"));
        }
        if self.target_sync_every == 0 {
            out.push(format!("{p}: target_sync_every must be >= 1"));
        }
        if self.train_every == 0 {
            out.push(format!("{p}: train_every must be >= 1"));
        }
        if let Some(g) = self.max_grad_norm {
            if !(g > 0.0) {
                out.push(format!("{p}: max_grad_norm must be > 0"));
            }
        }
        if let ModelConfig::Network { hidden, .. } = &self.model {
            if hidden.is_empty() || hidden.contains(&0) {
                out.push(format!("{p}: network needs >= 1 hidden layer of width >= 1"));
            }
            if matches!(self.exploration, ExplorationConfig::Ucb { .. }) {
                out.push(format!("{p}: ucb exploration is only available to tabular agents"));
            }
        }
        if let ExplorationConfig::Ucb { c } = self.exploration {
            if !(c >= 0.0) {
                out.push(format!("{p}: ucb c must be >= 0"));
            }
        }
        out
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("state has dimension {got}, agent expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("improvement target must be finite, got {0}")]
    NonFiniteTarget(f64),
}

/// Fixed-capacity FIFO store of private transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Uniform sample with replacement.
    pub fn sample<'a>(&'a self, rng: &mut Rng, n: usize) -> Vec<&'a Transition> {
        (0..n)
            .map(|_| &self.items[rng.gen_range(0..self.items.len())])
            .collect()
    }
}

/// The private Q-function of an agent.
#[derive(Debug, Clone)]
pub enum QFunction {
    Network { online: Weights, target: Weights },
    Table { values: Vec<Vec<f64>>, counts: Vec<Vec<u64>> },
}

impl QFunction {
    fn values(&self, state: &State) -> Result<Vec<f64>, AgentError> {
        match self {
            QFunction::Network { online, .. } => Ok(online.forward(state.values())?),
            QFunction::Table { values, .. } => Ok(values[chain_cell(state)].clone()),
        }
    }
}

/// Seeds of an agent's private streams.
#[derive(Debug, Clone, Copy)]
pub struct AgentSeeds {
    pub init: u64,
    pub exploration: u64,
    pub replay: u64,
}

impl AgentSeeds {
    pub fn derive(agent_seed: u64) -> Self {
        Self {
            init: derive_seed(agent_seed, stream::NET_INIT),
            exploration: derive_seed(agent_seed, stream::EXPLORATION),
            replay: derive_seed(agent_seed, stream::REPLAY),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Agent {
    config: AgentConfig,
    gamma: f64,
    state_dim: usize,
    action_count: usize,
    q: QFunction,
    replay: ReplayBuffer,
    explore_rng: Rng,
    replay_rng: Rng,
    interactions: u64,
    budget: Option<u64>,
}

/// Outcome of a self-learning phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelfLearnReport {
    pub requested: u64,
    pub consumed: u64,
}

impl SelfLearnReport {
    pub fn exhausted(&self) -> bool {
        self.consumed < self.requested
    }
}

impl Agent {
    pub fn new(
        config: AgentConfig,
        state_dim: usize,
        action_count: usize,
        gamma: f64,
        seeds: AgentSeeds,
    ) -> Self {
        let q = match &config.model {
            ModelConfig::Network { hidden, activation } => {
                let spec = NetworkSpec::from_widths(
                    state_dim,
                    hidden,
                    *activation,
                    action_count,
                    seeds.init,
                );
                let online = Weights::init(&spec);
                QFunction::Network {
                    target: online.clone(),
                    online,
                }
            }
            ModelConfig::Tabular { init_value } => QFunction::Table {
                values: vec![vec![*init_value; action_count]; state_dim],
                counts: vec![vec![0; action_count]; state_dim],
            },
        };
        Self {
            replay: ReplayBuffer::new(config.replay_capacity),
            config,
            gamma,
            state_dim,
            action_count,
            q,
            explore_rng: rng_from_seed(seeds.exploration),
            replay_rng: rng_from_seed(seeds.replay),
            interactions: 0,
            budget: None,
        }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn q_function(&self) -> &QFunction {
        &self.q
    }

    pub fn q_function_mut(&mut self) -> &mut QFunction {
        &mut self.q
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    /// Environment interactions consumed by self-learning so far.
    pub fn interactions(&self) -> u64 {
        self.interactions
    }

    /// Caps the total number of self-learning interactions.
    pub fn set_budget(&mut self, budget: Option<u64>) {
        self.budget = budget;
    }

    fn check_state(&self, s: &State) -> Result<(), AgentError> {
        if s.dim() != self.state_dim {
            return Err(AgentError::DimensionMismatch {
                expected: self.state_dim,
                got: s.dim(),
            });
        }
        Ok(())
    }

    /// Action values at `s`. Pure: no stream is advanced and nothing is stored.
    pub fn answer_query(&self, s: &State) -> Result<QVector, AgentError> {
        self.check_state(s)?;
        Ok(QVector(self.q.values(s)?))
    }

    pub fn greedy(&self, s: &State) -> Result<Action, AgentError> {
        Ok(self.answer_query(s)?.argmax())
    }

    /// Behaviour policy: epsilon-greedy with random tie-breaking (or the count
    /// bonus for UCB tables).
    pub fn act(&mut self, s: &State) -> Result<Action, AgentError> {
        if let (ExplorationConfig::Ucb { c }, QFunction::Table { values, counts }) =
            (&self.config.exploration, &self.q)
        {
            let cell = chain_cell(s);
            let n = &counts[cell];
            if let Some(untried) = n.iter().position(|&k| k == 0) {
                return Ok(Action(untried));
            }
            let t = n.iter().sum::<u64>() as f64;
            let scores: Vec<f64> = values[cell]
                .iter()
                .zip(n)
                .map(|(&q, &k)| q + c * (t.ln() / k as f64).sqrt())
                .collect();
            return Ok(Action(argmax(&scores)));
        }
        let u: f64 = self.explore_rng.gen();
        if u < self.config.epsilon {
            return Ok(Action(self.explore_rng.gen_range(0..self.action_count)));
        }
        let q = self.answer_query(s)?;
        let best = q.argmax().0;
        let tied: Vec<usize> = (0..q.0.len()).filter(|&a| q.0[a] == q.0[best]).collect();
        if tied.len() > 1 {
            return Ok(Action(tied[self.explore_rng.gen_range(0..tied.len())]));
        }
        Ok(Action(best))
    }

    /// Runs up to `steps` interactions in the agent's own environment copy,
    /// learning from each one. Stops early when the budget runs out.
    pub fn self_learn(
        &mut self,
        env: &mut Environment,
        steps: u64,
    ) -> Result<SelfLearnReport, AgentError> {
        let allowed = match self.budget {
            Some(b) => steps.min(b.saturating_sub(self.interactions)),
            None => steps,
        };
        for _ in 0..allowed {
            if env.is_terminated() {
                env.reset();
            }
            let s = env.state();
            let a = self.act(&s)?;
            let t = env.step(a)?;
            self.interactions += 1;
            self.learn_from(t)?;
        }
        Ok(SelfLearnReport {
            requested: steps,
            consumed: allowed,
        })
    }

    fn learn_from(&mut self, t: Transition) -> Result<(), AgentError> {
        let gamma = self.gamma;
        let step = self.interactions;
        match &mut self.q {
            QFunction::Table { values, counts } => {
                let cell = chain_cell(&t.state);
                let next = chain_cell(&t.next_state);
                let bootstrap = if t.done {
                    0.0
                } else {
                    gamma * values[next].iter().copied().fold(f64::NEG_INFINITY, f64::max)
                };
                let a = t.action.index();
                let q = &mut values[cell][a];
                *q += self.config.learning_rate * (t.reward + bootstrap - *q);
                counts[cell][a] += 1;
                self.replay.push(t);
            }
            QFunction::Network { .. } => {
                self.replay.push(t);
                if self.replay.len() >= self.config.batch_size
                    && step % self.config.train_every as u64 == 0
                {
                    self.dqn_update()?;
                }
                if step % self.config.target_sync_every as u64 == 0 {
                    if let QFunction::Network { online, target } = &mut self.q {
                        target.clone_from(online);
                    }
                }
            }
        }
        Ok(())
    }

    fn dqn_update(&mut self) -> Result<(), AgentError> {
        let QFunction::Network { online, target } = &mut self.q else {
            return Ok(());
        };
        let batch = self.replay.sample(&mut self.replay_rng, self.config.batch_size);
        let dim = self.state_dim;
        let mut states = Array2::<f64>::zeros((batch.len(), dim));
        let mut next_states = Array2::<f64>::zeros((batch.len(), dim));
        for (i, t) in batch.iter().enumerate() {
            states.row_mut(i).assign(&ndarray::aview1(t.state.values()));
            next_states
                .row_mut(i)
                .assign(&ndarray::aview1(t.next_state.values()));
        }
        let next_q = target.forward_batch(next_states.view())?;
        let targets: Vec<f64> = batch
            .iter()
            .zip(next_q.outer_iter())
            .map(|(t, row)| {
                if t.done {
                    t.reward
                } else {
                    t.reward + self.gamma * row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                }
            })
            .collect();
        let actions: Vec<usize> = batch.iter().map(|t| t.action.index()).collect();
        let (_, mut grad) = online.backward_batch(states.view(), &actions, &targets)?;
        if let Some(max) = self.config.max_grad_norm {
            grad.clip_norm(max);
        }
        online.apply_gradient(&grad, self.config.learning_rate);
        Ok(())
    }

    /// `kappa` squared-error regression steps of `Q(s, a)` toward `target`.
    pub fn improve(&mut self, s: &State, action: Action, target: f64) -> Result<(), AgentError> {
        if !target.is_finite() {
            return Err(AgentError::NonFiniteTarget(target));
        }
        self.check_state(s)?;
        let rate = self.config.improve_rate();
        match &mut self.q {
            QFunction::Network { online, .. } => {
                for _ in 0..self.config.kappa {
                    let (_, mut grad) = online.backward(s.values(), action.index(), target)?;
                    if let Some(max) = self.config.max_grad_norm {
                        grad.clip_norm(max);
                    }
                    online.apply_gradient(&grad, rate);
                }
            }
            QFunction::Table { values, .. } => {
                let q = &mut values[chain_cell(s)][action.index()];
                for _ in 0..self.config.kappa {
                    // d/dq (target - q)^2 = -2 (target - q)
                    *q += 2.0 * rate * (target - *q);
                }
            }
        }
        Ok(())
    }

    /// Greedy rollouts without learning. Returns the undiscounted return of
    /// each episode.
    pub fn evaluate(&self, env: &mut Environment, episodes: usize) -> Result<Vec<f64>, AgentError> {
        let mut returns = Vec::with_capacity(episodes);
        for _ in 0..episodes {
            let mut s = env.reset();
            let mut total = 0.0;
            loop {
                let t = env.step(self.greedy(&s)?)?;
                total += t.reward;
                if t.done {
                    break;
                }
                s = t.next_state;
            }
            returns.push(total);
        }
        Ok(returns)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{one_hot, ChainMdp, EnvConfig};
    use crate::neural::zeroed;

    fn cart_agent(eps: f64) -> Agent {
        let cfg = AgentConfig::network("a", &[8], Activation::Tanh, 0.01, eps);
        Agent::new(cfg, 4, 2, 0.99, AgentSeeds::derive(1))
    }

    fn chain_env() -> Environment {
        Environment::new(&EnvConfig::chain(5, 100, 0.9, 0))
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0, 1.0, 2.0]), 0);
    }

    #[test]
    fn zero_epsilon_is_greedy() {
        let mut agent = cart_agent(0.0);
        let s = State(vec![0.1, -0.2, 0.05, 0.3]);
        let greedy = agent.greedy(&s).unwrap();
        for _ in 0..100 {
            assert_eq!(agent.act(&s).unwrap(), greedy);
        }
    }

    #[test]
    fn greedy_picks_larger_q() {
        let mut agent = cart_agent(0.0);
        if let QFunction::Network { online, .. } = agent.q_function_mut() {
            *online = zeroed(&NetworkSpec::from_widths(4, &[8], Activation::Tanh, 2, 0));
            online.layers[1].bias[0] = 1.0;
            online.layers[1].bias[1] = 3.0;
        }
        assert_eq!(agent.act(&State(vec![0.0; 4])).unwrap(), Action(1));
    }

    #[test]
    fn behaviour_policy_splits_exact_ties() {
        let mut agent = Agent::new(AgentConfig::tabular("t", 0.1, 0.0), 5, 2, 0.9, AgentSeeds::derive(3));
        let s = one_hot(0, 5);
        let n = 10_000;
        let rights = (0..n).filter(|_| agent.act(&s).unwrap() == Action(1)).count() as f64;
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((rights - n as f64 / 2.0).abs() < 3.0 * sigma, "{rights}");
        assert_eq!(agent.greedy(&s).unwrap(), Action(0));
    }

    #[test]
    fn full_epsilon_is_uniform() {
        let mut agent = cart_agent(1.0);
        let s = State(vec![0.0; 4]);
        let n = 10_000;
        let ones = (0..n).filter(|_| agent.act(&s).unwrap() == Action(1)).count() as f64;
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((ones - n as f64 / 2.0).abs() < 3.0 * sigma, "{ones}");
    }

    #[test]
    fn replay_is_fifo() {
        let mut buf = ReplayBuffer::new(3);
        for i in 0..5 {
            buf.push(Transition {
                state: State(vec![i as f64]),
                action: Action(0),
                next_state: State(vec![0.0]),
                reward: 0.0,
                done: false,
            });
        }
        let kept: Vec<f64> = buf.iter().map(|t| t.state.0[0]).collect();
        assert_eq!(kept, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn zero_steps_change_nothing() {
        let mut agent = cart_agent(0.1);
        let mut env = Environment::new(&EnvConfig::cart_pole(500, 0.99, 3));
        let before = agent.answer_query(&env.state()).unwrap();
        let report = agent.self_learn(&mut env, 0).unwrap();
        assert_eq!(report.consumed, 0);
        assert_eq!(agent.interactions(), 0);
        assert_eq!(env.total_steps(), 0);
        assert_eq!(agent.answer_query(&env.state()).unwrap(), before);
    }

    #[test]
    fn budget_stops_phase_early() {
        let mut agent = cart_agent(0.1);
        agent.set_budget(Some(30));
        let mut env = Environment::new(&EnvConfig::cart_pole(500, 0.99, 3));
        let r = agent.self_learn(&mut env, 50).unwrap();
        assert_eq!(r.consumed, 30);
        assert!(r.exhausted());
        assert_eq!(agent.self_learn(&mut env, 50).unwrap().consumed, 0);
        assert_eq!(env.total_steps(), 30);
    }

    #[test]
    fn terminal_transition_uses_reward_only() {
        let mut agent = Agent::new(
            AgentConfig::tabular("t", 1.0, 0.0),
            5,
            2,
            0.9,
            AgentSeeds::derive(0),
        );
        if let QFunction::Table { values, .. } = agent.q_function_mut() {
            values[4] = vec![100.0, 100.0];
        }
        let t = Transition {
            state: one_hot(3, 5),
            action: ChainMdp::RIGHT,
            next_state: one_hot(4, 5),
            reward: 1.0,
            done: true,
        };
        agent.learn_from(t).unwrap();
        assert_eq!(agent.answer_query(&one_hot(3, 5)).unwrap().0[1], 1.0);
    }

    #[test]
    fn tabular_q_learning_reaches_optimum() {
        let mut cfg = AgentConfig::tabular("t", 0.1, 0.3);
        cfg.replay_capacity = 16;
        cfg.batch_size = 1;
        let mut agent = Agent::new(cfg, 5, 2, 0.9, AgentSeeds::derive(7));
        let mut env = chain_env();
        agent.self_learn(&mut env, 10_000).unwrap();
        for k in 0..4 {
            let v = agent.answer_query(&one_hot(k, 5)).unwrap().max();
            let want = 0.9f64.powi(3 - k as i32);
            assert!((v - want).abs() < 0.05, "cell {k}: {v} vs {want}");
        }
    }

    #[test]
    fn ucb_tabular_agent_learns_too() {
        let mut cfg = AgentConfig::tabular("u", 0.1, 0.0);
        cfg.exploration = ExplorationConfig::Ucb { c: 1.0 };
        let mut agent = Agent::new(cfg, 5, 2, 0.9, AgentSeeds::derive(7));
        let mut env = chain_env();
        agent.self_learn(&mut env, 10_000).unwrap();
        let v0 = agent.answer_query(&one_hot(0, 5)).unwrap().max();
        assert!((v0 - 0.729).abs() < 0.05, "{v0}");
    }

    #[test]
    fn queries_are_pure() {
        let agent = cart_agent(0.5);
        let s = State(vec![0.3, 0.1, -0.1, 0.2]);
        let a = agent.answer_query(&s).unwrap();
        let b = agent.answer_query(&s).unwrap();
        assert_eq!(a, b);
        if let QFunction::Network { online, .. } = agent.q_function() {
            assert_eq!(a.0, online.forward(s.values()).unwrap());
        }
        assert!(agent.answer_query(&State(vec![0.0; 3])).is_err());
    }

    #[test]
    fn improve_at_current_value_is_noop() {
        let mut agent = cart_agent(0.1);
        let s = State(vec![0.3, 0.1, -0.1, 0.2]);
        let q = agent.answer_query(&s).unwrap().0[0];
        let before = agent.q_function().clone();
        agent.improve(&s, Action(0), q).unwrap();
        match (before, agent.q_function()) {
            (QFunction::Network { online: a, .. }, QFunction::Network { online: b, .. }) => {
                assert_eq!(&a, b)
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn improve_linear_readout_hand_derivation() {
        // Hidden weights and output weights zero, hidden bias set: only the
        // output layer moves and the update is exact for kappa = 1:
        // q' = q + 2 * rate * (target - q) * (|h|^2 + 1).
        let mut cfg = AgentConfig::network("lin", &[3], Activation::Tanh, 0.01, 0.0);
        cfg.kappa = 1;
        cfg.improve_rate = Some(0.01);
        let mut agent = Agent::new(cfg, 2, 2, 0.9, AgentSeeds::derive(0));
        let hidden_bias = [0.2, -0.4, 0.7];
        if let QFunction::Network { online, .. } = agent.q_function_mut() {
            *online = zeroed(&NetworkSpec::from_widths(2, &[3], Activation::Tanh, 2, 0));
            for (i, b) in hidden_bias.iter().enumerate() {
                online.layers[0].bias[i] = *b;
            }
            online.layers[1].bias[1] = 0.5;
        }
        let s = State(vec![1.0, -1.0]);
        let old = agent.answer_query(&s).unwrap().0[1];
        agent.improve(&s, Action(1), 2.0).unwrap();
        let new = agent.answer_query(&s).unwrap().0[1];
        let feat_sq: f64 = hidden_bias.iter().map(|b: &f64| b.tanh().powi(2)).sum::<f64>() + 1.0;
        let expected = old + 2.0 * 0.01 * (2.0 - old) * feat_sq;
        assert!((new - expected).abs() < 1e-12, "{new} vs {expected}");
    }

    #[test]
    fn non_finite_target_rejected() {
        let mut agent = cart_agent(0.1);
        assert_eq!(
            agent.improve(&State(vec![0.0; 4]), Action(0), f64::NAN).map_err(|e| matches!(e, AgentError::NonFiniteTarget(_))),
            Err(true)
        );
    }

    #[test]
    fn config_violations_are_enumerated() {
        let mut cfg = AgentConfig::network("bad", &[], Activation::Relu, -1.0, 2.0);
        cfg.batch_size = 20_000;
        let v = cfg.violations();
        assert_eq!(v.len(), 4, "{v:?}");
    }
}
