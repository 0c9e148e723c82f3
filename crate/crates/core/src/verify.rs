//! Self-check suites behind the `verify` command: analytic gradients against
//! finite differences, tabular learning against value iteration, the FedTD
//! fixed point, and the concentration bound's Monte Carlo coverage.

use std::time::Duration;

use rand::Rng as _;

use crate::agent::{Agent, AgentConfig, AgentSeeds, QFunction};
use crate::env::{one_hot, Action, ChainMdp, EnvConfig, Environment};
use crate::federation::{coverage_floor, coverage_test, monte_carlo_slack, FedConfig, Sampler};
use crate::neural::{Activation, NetworkSpec, Weights};
use crate::orchestrator::{federation_round, AgentWorker, BudgetLedger};
use crate::rng::{derive_seed, rng_from_seed, uniform};
use crate::transport::inproc::InProcTransport;

/// Outcome of one suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Relative error with an absolute floor for components that are zero in
/// both estimates up to rounding.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-7 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Largest relative error between backprop and central differences over
/// `instances` random networks, inputs, actions and targets.
pub fn gradient_check(instances: usize, h: f64, seed: u64) -> f64 {
    let mut rng = rng_from_seed(seed);
    let mut worst = 0.0f64;
    for i in 0..instances {
        let input_dim = rng.gen_range(1..=6);
        let depth = rng.gen_range(1..=3);
        let widths: Vec<usize> = (0..depth).map(|_| rng.gen_range(1..=8)).collect();
        let activation = if rng.gen::<bool>() { Activation::Tanh } else { Activation::Relu };
        let outputs = rng.gen_range(1..=4);
        let spec = NetworkSpec::from_widths(input_dim, &widths, activation, outputs, derive_seed(seed, i as u64));
        let mut w = Weights::init(&spec);
        // Non-zero biases keep instances away from ReLU kinks at exactly 0.
        for layer in &mut w.layers {
            layer.bias.mapv_inplace(|_| uniform(&mut rng, -0.5, 0.5));
        }
        let input: Vec<f64> = (0..input_dim).map(|_| uniform(&mut rng, -2.0, 2.0)).collect();
        let action = rng.gen_range(0..outputs);
        let target = uniform(&mut rng, -3.0, 3.0);

        let (_, grad) = w.backward(&input, action, target).expect("valid instance");
        let analytic = grad.flatten();
        let loss = |w: &Weights| {
            let q = w.forward(&input).expect("valid instance")[action];
            (target - q).powi(2)
        };
        for (k, &g) in analytic.iter().enumerate() {
            let orig = *w.parameter_mut(k);
            *w.parameter_mut(k) = orig + h;
            let plus = loss(&w);
            *w.parameter_mut(k) = orig - h;
            let minus = loss(&w);
            *w.parameter_mut(k) = orig;
            worst = worst.max(relative_error(g, (plus - minus) / (2.0 * h)));
        }
    }
    worst
}

/// Optimal action values of the chain by value iteration, one row per cell.
pub fn chain_q_star(length: usize, gamma: f64) -> Vec<Vec<f64>> {
    let mut q = vec![vec![0.0; 2]; length];
    for _ in 0..10_000 {
        let mut next = q.clone();
        for (cell, row) in next.iter_mut().enumerate().take(length - 1) {
            for (a, v) in row.iter_mut().enumerate() {
                let (to, r, done) = ChainMdp::transition(length, cell, Action(a));
                *v = if done { r } else { r + gamma * q[to][0].max(q[to][1]) };
            }
        }
        let delta = q
            .iter()
            .flatten()
            .zip(next.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        q = next;
        if delta == 0.0 {
            break;
        }
    }
    q
}

fn table_of(agent: &Agent) -> Vec<Vec<f64>> {
    match agent.q_function() {
        QFunction::Table { values, .. } => values.clone(),
        QFunction::Network { .. } => unreachable!("tabular agent"),
    }
}

fn max_gap(a: &[Vec<f64>], b: &[Vec<f64>], rows: usize) -> f64 {
    a.iter()
        .zip(b)
        .take(rows)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

/// Largest gap between a self-learned table and `Q*` over non-terminal cells.
pub fn tabular_convergence(length: usize, gamma: f64, steps: u64, seed: u64) -> f64 {
    let env_cfg = EnvConfig::chain(length, 100, gamma, seed);
    let mut agent = Agent::new(AgentConfig::tabular("verify", 0.1, 0.3), length, 2, gamma, AgentSeeds::derive(seed));
    let mut env = Environment::new(&env_cfg);
    agent.self_learn(&mut env, steps).expect("chain agent");
    max_gap(&table_of(&agent), &chain_q_star(length, gamma), length - 1)
}

/// Starts a single tabular agent at `Q*`, runs federation rounds with
/// `lambda = 0`, `alpha_s = 1` from every non-terminal cell and returns the
/// largest drift of the table away from `Q*`.
pub fn fedtd_fixed_point_drift(length: usize, gamma: f64) -> f64 {
    let q_star = chain_q_star(length, gamma);
    let env_cfg = EnvConfig::chain(length, 100, gamma, 0);
    let mut cfg = AgentConfig::tabular("fixed", 0.1, 0.0);
    cfg.kappa = 1;
    cfg.improve_rate = Some(0.5);
    let mut agent = Agent::new(cfg, length, 2, gamma, AgentSeeds::derive(0));
    if let QFunction::Table { values, .. } = agent.q_function_mut() {
        values.clone_from(&q_star);
    }
    let worker = AgentWorker::new(0, agent, Environment::new(&env_cfg), Environment::new(&env_cfg), 0, 0);
    let mut transport = InProcTransport::spawn(vec![worker], Duration::from_secs(10));
    let fed = FedConfig {
        lambda: 0.0,
        alpha_s: 1.0,
        ..FedConfig::default()
    };
    let mut server = Environment::new(&env_cfg);
    let mut ledger = BudgetLedger::new(1, u64::MAX / 2);
    for (round, cell) in (0..length - 1).cycle().take(4 * length).enumerate() {
        server.reset();
        server.set_state(&one_hot(cell, length));
        federation_round(&mut transport, &mut server, &fed, 1.0 / (1.0 - gamma), &mut ledger, round as u64)
            .expect("in-process round");
    }
    let agent = transport.shutdown().pop().expect("one agent").agent;
    max_gap(&table_of(&agent), &q_star, length - 1)
}

/// One cell of the coverage grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageCase {
    pub c: f64,
    pub n: usize,
    pub sampler: Sampler,
    pub coverage: f64,
    pub threshold: f64,
}

impl CoverageCase {
    pub fn passed(&self) -> bool {
        self.coverage >= self.threshold
    }
}

/// Empirical coverage of the confidence radius over `c in {1,2,3}`,
/// `N in {3,5,10}` and two bounded samplers.
pub fn coverage_grid(trials: usize, seed: u64) -> Vec<CoverageCase> {
    let samplers = [
        Sampler::Uniform { high: 1.0 },
        Sampler::TwoPoint {
            low: 0.1,
            high: 0.9,
            p_high: 0.5,
        },
    ];
    let mut cases = Vec::new();
    for (ci, c) in [1.0, 2.0, 3.0].into_iter().enumerate() {
        for (ni, n) in [3usize, 5, 10].into_iter().enumerate() {
            for (si, sampler) in samplers.iter().enumerate() {
                let label = (ci * 100 + ni * 10 + si) as u64;
                let mut rng = rng_from_seed(derive_seed(seed, label));
                let coverage = coverage_test(sampler, n, c, 1.0, trials, &mut rng).expect("bounded sampler");
                let floor = coverage_floor(c);
                cases.push(CoverageCase {
                    c,
                    n,
                    sampler: *sampler,
                    coverage,
                    threshold: floor - monte_carlo_slack(floor, trials),
                });
            }
        }
    }
    cases
}

/// Runs every suite at full size.
pub fn run_all(seed: u64) -> Vec<SuiteResult> {
    let grad = gradient_check(100, 1e-5, seed);
    let conv = tabular_convergence(5, 0.9, 10_000, seed);
    let drift = fedtd_fixed_point_drift(5, 0.9);
    let cov = coverage_grid(100_000, seed);
    let worst = cov
        .iter()
        .min_by(|a, b| (a.coverage - a.threshold).total_cmp(&(b.coverage - b.threshold)))
        .expect("non-empty grid");
    vec![
        SuiteResult {
            name: "gradient",
            passed: grad <= 1e-4,
            detail: format!("max relative error {grad:.3e} over 100 networks (limit 1e-4)"),
        },
        SuiteResult {
            name: "chain-convergence",
            passed: conv <= 0.05,
            detail: format!("max |Q - Q*| {conv:.4} after 10000 steps (limit 0.05)"),
        },
        SuiteResult {
            name: "fedtd-fixed-point",
            passed: drift <= 1e-9,
            detail: format!("max drift from Q* {drift:.3e} (limit 1e-9)"),
        },
        SuiteResult {
            name: "coverage",
            passed: cov.iter().all(CoverageCase::passed),
            detail: format!(
                "{} cases; tightest c={} N={} {:?}: {:.5} vs threshold {:.5}",
                cov.len(),
                worst.c,
                worst.n,
                worst.sampler,
                worst.coverage,
                worst.threshold
            ),
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_star_closed_form() {
        let q = chain_q_star(5, 0.9);
        for k in 0..4 {
            assert!((q[k][1] - 0.9f64.powi(3 - k as i32)).abs() < 1e-15);
        }
        assert!((q[0][0] - 0.9f64.powi(4)).abs() < 1e-15);
        assert!((q[2][0] - 0.9f64.powi(3)).abs() < 1e-15);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 1e-9), 0.0);
        assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
    }

    #[test]
    fn small_suites_pass() {
        assert!(gradient_check(10, 1e-5, 1) <= 1e-4);
        assert!(fedtd_fixed_point_drift(4, 0.8) <= 1e-9);
        assert!(coverage_grid(2000, 0).iter().all(CoverageCase::passed));
    }
}
