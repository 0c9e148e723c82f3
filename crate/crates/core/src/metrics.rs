//! Learning-curve metrics, bootstrap intervals and the CSV schema.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::rng_from_seed;

/// Evaluation episodes per averaging window.
pub const WINDOW: usize = 10;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("need at least one full window of {window} returns, got {got}")]
    NotEnoughReturns { window: usize, got: usize },
    #[error("window must be >= 1")]
    ZeroWindow,
    #[error("bootstrap needs at least 2 values, got {0}")]
    TooFewValues(usize),
    #[error("confidence level must lie in (0, 1), got {0}")]
    BadLevel(f64),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Means of consecutive, non-overlapping windows; a trailing partial window
/// is dropped.
pub fn window_means(returns: &[f64], window: usize) -> Vec<f64> {
    if window == 0 {
        return Vec::new();
    }
    returns
        .chunks_exact(window)
        .map(|w| w.iter().sum::<f64>() / window as f64)
        .collect()
}

/// Largest window mean over the whole stream.
pub fn max_mean_return(returns: &[f64], window: usize) -> Result<f64, MetricsError> {
    if window == 0 {
        return Err(MetricsError::ZeroWindow);
    }
    window_means(returns, window)
        .into_iter()
        .reduce(f64::max)
        .ok_or(MetricsError::NotEnoughReturns {
            window,
            got: returns.len(),
        })
}

/// Percentile bootstrap interval for the mean.
///
/// Draws `resamples` resamples of `values` with replacement, computes their
/// means, sorts them and reads off the `(1 - level) / 2` and `(1 + level) / 2`
/// quantiles with linear interpolation between order statistics.
pub fn bootstrap_ci(
    values: &[f64],
    level: f64,
    resamples: usize,
    seed: u64,
) -> Result<(f64, f64), MetricsError> {
    if values.len() < 2 {
        return Err(MetricsError::TooFewValues(values.len()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(MetricsError::BadLevel(level));
    }
    let mut rng = rng_from_seed(seed);
    let n = values.len();
    let mut means: Vec<f64> = (0..resamples.max(1))
        .map(|_| (0..n).map(|_| values[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let lo = quantile_sorted(&means, tail);
    let hi = quantile_sorted(&means, 1.0 - tail);
    // Guard the ordering against rounding in degenerate samples.
    let mean = values.iter().sum::<f64>() / n as f64;
    Ok((lo.min(mean), hi.max(mean)))
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// One CSV row. For agent rows each record is one evaluation episode; for
/// `system` rows each record is one checkpoint averaged over agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub run_seed: u64,
    /// Agent index or `system`.
    pub agent: String,
    /// Raw interactions consumed by the agent (mean over agents for `system`).
    pub consumed: f64,
    /// Consumption with the server's interactions shared equally among agents.
    pub consumed_adjusted: f64,
    pub episode_return: f64,
    /// Mean of the window this row completes, if any.
    pub window_mean: Option<f64>,
    /// Best window mean so far, if any.
    pub max_mean_return: Option<f64>,
}

pub const CSV_HEADER: [&str; 7] = [
    "run_seed",
    "agent",
    "consumed",
    "consumed_adjusted",
    "episode_return",
    "window_mean",
    "max_mean_return",
];

pub fn write_csv<W: Write>(out: W, rows: &[CurveRow]) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<CurveRow>, MetricsError> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

/// Final best window mean per agent key (`0`, `1`, ..., `system`) of one run.
pub fn final_scores(rows: &[CurveRow]) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for row in rows {
        if let Some(m) = row.max_mean_return {
            out.insert(row.agent.clone(), m);
        }
    }
    out
}

/// One line of a `report` table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryLine {
    pub condition: String,
    pub agent: String,
    pub runs: usize,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Summarises final max-mean-returns of several runs of one condition.
pub fn summarize(
    condition: &str,
    runs: &[Vec<CurveRow>],
    seed: u64,
) -> Result<Vec<SummaryLine>, MetricsError> {
    let mut per_agent: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for run in runs {
        for (agent, v) in final_scores(run) {
            per_agent.entry(agent).or_default().push(v);
        }
    }
    per_agent
        .into_iter()
        .map(|(agent, values)| {
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let (ci_low, ci_high) = if values.len() >= 2 {
                bootstrap_ci(&values, 0.80, 10_000, seed)?
            } else {
                (mean, mean)
            };
            Ok(SummaryLine {
                condition: condition.to_string(),
                agent,
                runs: values.len(),
                mean,
                ci_low,
                ci_high,
            })
        })
        .collect()
}
