//! Server-side aggregation of agent knowledge.
//!
//! Agents answer a query state with their action values. The server summarises
//! them per action as a mean and a population standard deviation, scores each
//! action optimistically and picks the best score. After executing that action
//! in its own environment copy, it moves the mean value of the chosen pair
//! toward a temporal-difference target built from the agents' values at the
//! next state.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{argmax, QVector};
use crate::env::Action;
use crate::rng::Rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FederationError {
    #[error("no agent replies to aggregate")]
    Empty,
    #[error("agent {index} replied with {got} values, expected {expected}")]
    Ragged {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("value {value} lies outside [0, {bound}]")]
    OutOfRange { value: f64, bound: f64 },
    #[error("parameter {name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UcbMode {
    /// `mean + lambda * std`.
    #[default]
    Practical,
    /// `mean + sqrt(2 c V / N) + 3 b c / N`.
    Theoretical,
}

fn default_lambda() -> f64 {
    1.0
}
fn default_alpha_s() -> f64 {
    0.05
}
fn default_h_fed() -> usize {
    16
}
fn default_c() -> f64 {
    1.0
}

/// Server hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FedConfig {
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_alpha_s")]
    pub alpha_s: f64,
    #[serde(default = "default_h_fed")]
    pub h_fed: usize,
    #[serde(default)]
    pub ucb: UcbMode,
    #[serde(default = "default_c")]
    pub c: f64,
    /// Upper bound on action values; defaults to the environment's
    /// discounted-return bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
}

impl Default for FedConfig {
    fn default() -> Self {
        Self {
            lambda: default_lambda(),
            alpha_s: default_alpha_s(),
            h_fed: default_h_fed(),
            ucb: UcbMode::Practical,
            c: default_c(),
            b: None,
        }
    }
}

impl FedConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.lambda >= 0.0) {
            out.push(format!("fed.lambda must be >= 0, got {}", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.alpha_s) {
            out.push(format!("fed.alpha_s must lie in [0, 1], got {}", self.alpha_s));
        }
        if self.h_fed < 1 {
            out.push("fed.h_fed must be >= 1".into());
        }
        if !(self.c > 0.0) {
            out.push(format!("fed.c must be > 0, got {}", self.c));
        }
        if let Some(b) = self.b {
            if !(b > 0.0) {
                out.push(format!("fed.b must be > 0, got {b}"));
            }
        }
        out
    }
}

/// Per-action summary of the agents' replies at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub ucb: Vec<f64>,
}

fn check_shape(qs: &[QVector]) -> Result<usize, FederationError> {
    let first = qs.first().ok_or(FederationError::Empty)?;
    let width = first.len();
    for (index, q) in qs.iter().enumerate() {
        if q.len() != width {
            return Err(FederationError::Ragged {
                index,
                expected: width,
                got: q.len(),
            });
        }
    }
    Ok(width)
}

/// Mean and population variance of the `a`-th entry across agents.
fn moments(qs: &[QVector], a: usize) -> (f64, f64) {
    let n = qs.len() as f64;
    let mean = qs.iter().map(|q| q.0[a]).sum::<f64>() / n;
    let var = qs.iter().map(|q| (mean - q.0[a]).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Practical scores `mean + lambda * std` for every action.
pub fn aggregate(qs: &[QVector], lambda: f64) -> Result<AggregateStats, FederationError> {
    let width = check_shape(qs)?;
    let mut stats = AggregateStats {
        mean: Vec::with_capacity(width),
        std: Vec::with_capacity(width),
        ucb: Vec::with_capacity(width),
    };
    for a in 0..width {
        let (mean, var) = moments(qs, a);
        let std = var.sqrt();
        stats.mean.push(mean);
        stats.std.push(std);
        stats.ucb.push(mean + lambda * std);
    }
    Ok(stats)
}

/// Scores every action with the concentration bound instead of `lambda * std`.
/// Values are expected in `[0, b]`.
pub fn aggregate_theoretical(
    qs: &[QVector],
    c: f64,
    b: f64,
) -> Result<AggregateStats, FederationError> {
    let width = check_shape(qs)?;
    let mut stats = AggregateStats {
        mean: Vec::with_capacity(width),
        std: Vec::with_capacity(width),
        ucb: Vec::with_capacity(width),
    };
    let column = |a: usize| qs.iter().map(|q| q.0[a]).collect::<Vec<_>>();
    for a in 0..width {
        let (mean, var) = moments(qs, a);
        stats.mean.push(mean);
        stats.std.push(var.sqrt());
        stats.ucb.push(theoretical_ucb(&column(a), c, b)?);
    }
    Ok(stats)
}

/// Lowest-index argmax of the scores.
pub fn select_action(stats: &AggregateStats) -> Action {
    Action(argmax(&stats.ucb))
}

/// Width of the two-sided empirical Bernstein interval:
/// `sqrt(2 c V / N) + 3 b c / N` with `V` the population variance.
pub fn bernstein_radius(variance: f64, n: usize, c: f64, b: f64) -> f64 {
    let n = n as f64;
    (2.0 * c * variance / n).sqrt() + 3.0 * b * c / n
}

/// Upper confidence value `mean + bernstein_radius` for values in `[0, b]`.
pub fn theoretical_ucb(values: &[f64], c: f64, b: f64) -> Result<f64, FederationError> {
    if values.is_empty() {
        return Err(FederationError::Empty);
    }
    if !(c > 0.0) {
        return Err(FederationError::NonPositive { name: "c", value: c });
    }
    if !(b > 0.0) {
        return Err(FederationError::NonPositive { name: "b", value: b });
    }
    if let Some(&value) = values.iter().find(|&&v| !(0.0..=b).contains(&v)) {
        return Err(FederationError::OutOfRange { value, bound: b });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (mean - v).powi(2)).sum::<f64>() / n;
    Ok(mean + bernstein_radius(var, values.len(), c, b))
}

/// One temporal-difference step on the aggregated value of the chosen pair.
/// A terminal transition contributes no bootstrap term.
pub fn fedtd_update(
    qbar_sa: f64,
    reward: f64,
    qbar_next: &QVector,
    done: bool,
    alpha_s: f64,
    gamma: f64,
) -> f64 {
    let bootstrap = if done { 0.0 } else { gamma * qbar_next.max() };
    qbar_sa + alpha_s * (reward + bootstrap - qbar_sa)
}

/// A bounded i.i.d. source with a known expectation.
pub trait BoundedSampler {
    fn sample(&self, rng: &mut Rng) -> f64;
    fn mean(&self) -> f64;
    /// Upper end of the support; the lower end is 0.
    fn upper(&self) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sampler {
    Uniform { high: f64 },
    TwoPoint { low: f64, high: f64, p_high: f64 },
    PointMass(f64),
}

impl BoundedSampler for Sampler {
    fn sample(&self, rng: &mut Rng) -> f64 {
        use rand::Rng as _;
        match *self {
            Sampler::Uniform { high } => high * rng.gen::<f64>(),
            Sampler::TwoPoint { low, high, p_high } => {
                if rng.gen::<f64>() < p_high {
                    high
                } else {
                    low
                }
            }
            Sampler::PointMass(v) => v,
        }
    }

    fn mean(&self) -> f64 {
        match *self {
            Sampler::Uniform { high } => high / 2.0,
            Sampler::TwoPoint { low, high, p_high } => low + p_high * (high - low),
            Sampler::PointMass(v) => v,
        }
    }

    fn upper(&self) -> f64 {
        match *self {
            Sampler::Uniform { high } => high,
            Sampler::TwoPoint { high, .. } => high,
            Sampler::PointMass(v) => v.max(f64::MIN_POSITIVE),
        }
    }
}

/// Guaranteed coverage level `1 - 3 e^{-c}`.
pub fn coverage_floor(c: f64) -> f64 {
    1.0 - 3.0 * (-c).exp()
}

/// Three standard errors of a Bernoulli(p) frequency over `trials`.
pub fn monte_carlo_slack(p: f64, trials: usize) -> f64 {
    let p = p.clamp(0.0, 1.0);
    3.0 * (p * (1.0 - p) / trials as f64).sqrt()
}

/// Fraction of `trials` batches of `n` draws whose empirical mean lies within
/// the Bernstein radius of the true mean.
pub fn coverage_test<S: BoundedSampler + ?Sized>(
    sampler: &S,
    n: usize,
    c: f64,
    b: f64,
    trials: usize,
    rng: &mut Rng,
) -> Result<f64, FederationError> {
    if n == 0 || trials == 0 {
        return Err(FederationError::Empty);
    }
    let mu = sampler.mean();
    let mut draws = vec![0.0; n];
    let mut covered = 0usize;
    for _ in 0..trials {
        for d in draws.iter_mut() {
            let x = sampler.sample(rng);
            if !(0.0..=b).contains(&x) {
                return Err(FederationError::OutOfRange { value: x, bound: b });
            }
            *d = x;
        }
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        if (mean - mu).abs() <= bernstein_radius(var, n, c, b) {
            covered += 1;
        }
    }
    Ok(covered as f64 / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn q(v: &[f64]) -> QVector {
        QVector(v.to_vec())
    }

    #[test]
    fn three_agent_hand_example() {
        let s = aggregate(&[q(&[1.0]), q(&[2.0]), q(&[3.0])], 1.0).unwrap();
        assert!((s.mean[0] - 2.0).abs() < 1e-12);
        assert!((s.std[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((s.ucb[0] - 2.816_496_580_927_726).abs() < 1e-12);
    }

    #[test]
    fn agreement_has_no_spread() {
        let s = aggregate(&vec![q(&[4.0, 1.0]); 4], 10.0).unwrap();
        assert_eq!(s.std, vec![0.0, 0.0]);
        assert_eq!(s.ucb, vec![4.0, 1.0]);
    }

    #[test]
    fn zero_lambda_is_mean() {
        let s = aggregate(&[q(&[1.0, 5.0]), q(&[3.0, -2.0])], 0.0).unwrap();
        assert_eq!(s.ucb, s.mean);
    }

    #[test]
    fn shape_errors() {
        assert_eq!(aggregate(&[], 1.0), Err(FederationError::Empty));
        assert_eq!(
            aggregate(&[q(&[1.0, 2.0]), q(&[1.0])], 1.0),
            Err(FederationError::Ragged {
                index: 1,
                expected: 2,
                got: 1
            })
        );
    }

    #[test]
    fn selection_examples() {
        let stats = |ucb: Vec<f64>| AggregateStats {
            mean: ucb.clone(),
            std: vec![0.0; ucb.len()],
            ucb,
        };
        assert_eq!(select_action(&stats(vec![0.5, 0.9])), Action(1));
        assert_eq!(select_action(&stats(vec![0.7, 0.2, 0.7])), Action(0));
        // Equal means, spread only on action 1.
        let s = aggregate(&[q(&[2.0, 1.0]), q(&[2.0, 3.0])], 1.0).unwrap();
        assert_eq!(s.mean, vec![2.0, 2.0]);
        assert_eq!(s.std, vec![0.0, 1.0]);
        assert_eq!(select_action(&s), Action(1));
    }

    #[test]
    fn theoretical_bound_examples() {
        let v = theoretical_ucb(&[0.3; 4], 1.0, 1.0).unwrap();
        assert!((v - (0.3 + 3.0 / 4.0)).abs() < 1e-12);

        let v = theoretical_ucb(&[0.2, 0.4, 0.6], 1.0, 1.0).unwrap();
        // V = 0.08/3; sqrt(2V/3) = 0.1333..; 3bc/N = 1.
        let expected = 0.4 + (2.0 * (0.08 / 3.0) / 3.0f64).sqrt() + 1.0;
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 1.5333).abs() < 1e-4);

        // Large N shrinks the bonus.
        let vals: Vec<f64> = (0..10_000).map(|i| (i % 2) as f64).collect();
        let bonus = theoretical_ucb(&vals, 1.0, 1.0).unwrap() - 0.5;
        assert!(bonus < 0.05, "{bonus}");
    }

    #[test]
    fn theoretical_rejects_out_of_range() {
        assert_eq!(
            theoretical_ucb(&[0.5, 1.5], 1.0, 1.0),
            Err(FederationError::OutOfRange {
                value: 1.5,
                bound: 1.0
            })
        );
        assert!(theoretical_ucb(&[0.5], 0.0, 1.0).is_err());
        assert!(theoretical_ucb(&[-0.1], 1.0, 1.0).is_err());
    }

    #[test]
    fn fedtd_examples() {
        let v = fedtd_update(2.0, 1.0, &q(&[3.0, -1.0]), false, 0.05, 0.99);
        assert!((v - 2.0985).abs() < 1e-12);
        assert_eq!(fedtd_update(7.0, 0.25, &q(&[9.0]), true, 1.0, 0.99), 0.25);
        // Target 1 + 0.5 * 2 equals current value 2.
        assert_eq!(fedtd_update(2.0, 1.0, &q(&[2.0]), false, 0.3, 0.5), 2.0);
    }

    #[test]
    fn coverage_floor_values() {
        assert!((coverage_floor(3.0) - 0.850_638_8).abs() < 1e-6);
        assert!((coverage_floor(2.0) - 0.593_994).abs() < 1e-6);
    }

    #[test]
    fn point_mass_is_always_covered() {
        let mut rng = rng_from_seed(0);
        let cov = coverage_test(&Sampler::PointMass(0.4), 5, 1.0, 1.0, 10_000, &mut rng).unwrap();
        assert_eq!(cov, 1.0);
    }

    #[test]
    fn coverage_rejects_unbounded_sampler() {
        let mut rng = rng_from_seed(0);
        let r = coverage_test(&Sampler::Uniform { high: 2.0 }, 3, 1.0, 1.0, 10, &mut rng);
        assert!(matches!(r, Err(FederationError::OutOfRange { .. })));
    }

    #[test]
    fn fed_config_violations() {
        let cfg = FedConfig {
            lambda: -1.0,
            alpha_s: 1.5,
            h_fed: 0,
            ucb: UcbMode::Practical,
            c: 0.0,
            b: Some(-2.0),
        };
        assert_eq!(cfg.violations().len(), 5);
        assert!(FedConfig::default().violations().is_empty());
    }
}
