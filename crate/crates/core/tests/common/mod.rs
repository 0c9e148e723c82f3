#![allow(dead_code)]

use std::path::PathBuf;

use fedhql::agent::AgentConfig;
use fedhql::config::ExperimentConfig;
use fedhql::env::EnvConfig;
use fedhql::federation::FedConfig;
use fedhql::metrics::CurveRow;
use fedhql::orchestrator::EvalRecord;
use fedhql::neural::Activation;

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn table1_config() -> ExperimentConfig {
    ExperimentConfig::load(&workspace_root().join("configs/table1_cartpole.toml")).expect("table 1 config")
}

/// Two small CartPole agents with a short budget.
pub fn small_cartpole(budget: u64) -> ExperimentConfig {
    let mut a = AgentConfig::network("a", &[16], Activation::Tanh, 0.01, 0.1);
    let mut b = AgentConfig::network("b", &[8, 8], Activation::Relu, 0.005, 0.05);
    for cfg in [&mut a, &mut b] {
        cfg.batch_size = 16;
        cfg.train_every = 2;
        cfg.kappa = 8;
        cfg.max_grad_norm = Some(10.0);
    }
    ExperimentConfig {
        budget_per_agent: budget,
        self_learn_steps: 500,
        eval_every: 500,
        eval_episodes: 10,
        seeds: vec![0],
        output_dir: PathBuf::from("out"),
        timeout_secs: 60.0,
        env: EnvConfig::cart_pole(200, 0.99, 0),
        fed: FedConfig::default(),
        agents: vec![a, b],
    }
}

/// Federation switched off in substance: no improvement steps, no
/// optimism, no server TD step.
pub fn degenerate(mut cfg: ExperimentConfig) -> ExperimentConfig {
    cfg.fed.lambda = 0.0;
    cfg.fed.alpha_s = 0.0;
    for a in &mut cfg.agents {
        a.kappa = 0;
    }
    cfg
}

/// Per-agent rows as comparable bit patterns, dropping the consumption
/// adjustment that only exists in federated runs.
pub fn agent_curve(rows: &[CurveRow]) -> Vec<(String, u64, u64, Option<u64>, Option<u64>)> {
    rows.iter()
        .filter(|r| r.agent != "system")
        .map(|r| {
            (
                r.agent.clone(),
                r.consumed.to_bits(),
                r.episode_return.to_bits(),
                r.window_mean.map(f64::to_bits),
                r.max_mean_return.map(f64::to_bits),
            )
        })
        .collect()
}

/// Checkpoints the federated run reached must match the baseline row for row.
pub fn is_prefix_of(fed: &[CurveRow], base: &[CurveRow]) -> bool {
    let f = agent_curve(fed);
    let b = agent_curve(base);
    let mut agents: Vec<&String> = f.iter().map(|r| &r.0).collect();
    agents.dedup();
    agents.iter().all(|agent| {
        let fa: Vec<_> = f.iter().filter(|r| &r.0 == *agent).collect();
        let ba: Vec<_> = b.iter().filter(|r| &r.0 == *agent).collect();
        // The final checkpoint of a federated run falls where its budget
        // ran out, which the baseline never evaluates at.
        let full: Vec<_> = fa.iter().filter(|r| ba.iter().any(|x| x.1 == r.1)).collect();
        !full.is_empty() && full.iter().zip(&ba).all(|(x, y)| **x == *y)
    })
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Per-agent evaluation logs agree bit for bit, including the weight
/// fingerprints, at every checkpoint both runs reached.
pub fn logs_agree(fed: &[Vec<EvalRecord>], base: &[Vec<EvalRecord>]) -> bool {
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    fed.len() == base.len()
        && fed.iter().zip(base).all(|(f, b)| {
            let shared: Vec<_> = f.iter().filter(|r| b.iter().any(|x| x.consumed == r.consumed)).collect();
            shared.len() + 1 >= f.len()
                && shared.iter().zip(b).all(|(x, y)| {
                    x.consumed == y.consumed && bits(&x.returns) == bits(&y.returns) && bits(&x.probe) == bits(&y.probe)
                })
        })
}
