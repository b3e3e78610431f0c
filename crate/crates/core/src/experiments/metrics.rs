//! Monte Carlo metrics and their CSV form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::caching::CacheAction;
use crate::csv_util::{parse_sig17, sig17, write_lines};
use crate::env::Revelation;
use crate::error::check_dim;
use crate::oracle::QTable;
use crate::popularity::PopularityProfile;
use crate::schedule::LambdaSchedule;
use crate::{Error, Result};

use super::LearnerSpec;

/// Popularity mass of `p_l` held by cache `a`.
pub fn cache_hit_fraction(a: &CacheAction, p_l: &PopularityProfile) -> Result<f64> {
    check_dim(a.catalog_size(), p_l.len())?;
    Ok(a.cached_mass(p_l.probs()))
}

/// `‖Q̂ − Q*‖_F / ‖Q*‖_F`.
pub fn normalized_q_error(q_hat: &QTable, q_star: &QTable) -> Result<f64> {
    check_dim(q_star.num_states(), q_hat.num_states())?;
    check_dim(q_star.num_actions(), q_hat.num_actions())?;
    let norm = q_star.norm();
    if norm == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let diff: f64 = q_hat
        .values()
        .iter()
        .zip(q_star.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(diff.sqrt() / norm)
}

pub const NORM_ERROR_METRIC: &str = "relative Frobenius norm ||Q_hat - Q_star||_F / ||Q_star||_F over all state-action pairs";
pub const HIT_METRIC_EXPECTED: &str = "expected local popularity mass of the cached files";
pub const HIT_METRIC_REALIZED: &str = "share of the slot's sampled local requests for cached files";
pub const SEED_MIXING: &str = "splitmix64 finalizer of base_seed xor (realization + 1) * 0x9E3779B97F4A7C15; \
     ChaCha8 stream 0 drives the environment, stream 1 the learner";

/// Per-realization summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub realization: usize,
    pub seed: u64,
    pub mean_cost: f64,
    /// Mean cost over the final summary window.
    pub window_cost: f64,
    /// Mean hit fraction over the final summary window.
    pub window_hit: f64,
    /// Mean cost over the second half of each λ interval.
    pub interval_cost: Vec<f64>,
    /// Mean hit fraction over the second half of each λ interval.
    pub interval_hit: Vec<f64>,
    pub final_norm_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub realization: usize,
    pub seed: u64,
    pub error: String,
}

/// Everything needed to interpret a [`MetricsTrace`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub scenario: String,
    pub description: String,
    pub catalog_size: usize,
    pub capacity: usize,
    pub global_states: usize,
    pub local_states: usize,
    pub gamma: f64,
    pub learner: LearnerSpec,
    pub learner_parameters: Option<usize>,
    pub lambda_schedule: LambdaSchedule,
    pub revelation: Revelation,
    pub horizon: usize,
    pub realizations_requested: usize,
    pub realizations_completed: usize,
    pub base_seed: u64,
    pub seed_mixing: String,
    pub summary_window: usize,
    pub hit_metric: String,
    pub norm_error_metric: Option<String>,
    pub norm_error_every: Option<usize>,
}

/// Realization-averaged per-slot metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTrace {
    pub avg_cost: Vec<f64>,
    pub avg_cost_se: Vec<f64>,
    /// Mean over realizations of each run's cumulative average cost.
    pub run_avg_cost: Vec<f64>,
    pub run_avg_cost_se: Vec<f64>,
    pub hit_fraction: Vec<f64>,
    pub hit_fraction_se: Vec<f64>,
    /// Mean normalized Q error at checkpoint slots, NaN elsewhere.
    pub norm_error: Option<Vec<f64>>,
    pub runs: Vec<RunSummary>,
    pub failures: Vec<RunFailure>,
    pub metadata: Metadata,
}

impl MetricsTrace {
    pub fn horizon(&self) -> usize {
        self.avg_cost.len()
    }

    /// Mean of `avg_cost` over the final `window` slots.
    pub fn window_cost(&self, window: usize) -> f64 {
        tail_mean(&self.avg_cost, window)
    }

    pub fn window_hit(&self, window: usize) -> f64 {
        tail_mean(&self.hit_fraction, window)
    }

    /// Mean and standard error across runs of a per-run statistic.
    pub fn across_runs(&self, stat: impl Fn(&RunSummary) -> f64) -> (f64, f64) {
        mean_and_se(self.runs.iter().map(stat))
    }

    /// Checkpoint slots and their mean normalized error.
    pub fn norm_error_points(&self) -> Vec<(usize, f64)> {
        self.norm_error
            .iter()
            .flatten()
            .enumerate()
            .filter(|(_, v)| !v.is_nan())
            .map(|(t, v)| (t, *v))
            .collect()
    }

    /// CSV `slot,avg_cost,run_avg_cost,hit_fraction[,norm_error]`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut header = "slot,avg_cost,run_avg_cost,hit_fraction".to_string();
        if self.norm_error.is_some() {
            header.push_str(",norm_error");
        }
        let rows = (0..self.horizon()).map(|t| {
            let mut line = format!(
                "{t},{},{},{}",
                sig17(self.avg_cost[t]),
                sig17(self.run_avg_cost[t]),
                sig17(self.hit_fraction[t])
            );
            if let Some(err) = &self.norm_error {
                line.push(',');
                line.push_str(&sig17(err[t]));
            }
            line
        });
        write_lines(path, std::iter::once(header).chain(rows))
    }

    pub fn write_metadata(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.metadata)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Writes `trace` as CSV to `path`.
pub fn export_metrics(trace: &MetricsTrace, path: &Path) -> Result<()> {
    trace.write_csv(path)
}

/// Columns of a metrics CSV read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub slot: Vec<usize>,
    pub avg_cost: Vec<f64>,
    pub run_avg_cost: Vec<f64>,
    pub hit_fraction: Vec<f64>,
    pub norm_error: Option<Vec<f64>>,
}

pub fn read_metrics(path: &Path) -> Result<MetricsTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let with_error = match header {
        "slot,avg_cost,run_avg_cost,hit_fraction" => false,
        "slot,avg_cost,run_avg_cost,hit_fraction,norm_error" => true,
        other => return Err(Error::InvalidConfig(format!("unexpected metrics header {other:?}"))),
    };
    let bad = |line: &str| Error::InvalidConfig(format!("malformed metrics row {line:?}"));
    let mut table = MetricsTable {
        slot: Vec::new(),
        avg_cost: Vec::new(),
        run_avg_cost: Vec::new(),
        hit_fraction: Vec::new(),
        norm_error: with_error.then(Vec::new),
    };
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 4 + usize::from(with_error) {
            return Err(bad(line));
        }
        let num = |i: usize| parse_sig17(cells[i]).map_err(|_| bad(line));
        table.slot.push(cells[0].parse().map_err(|_| bad(line))?);
        table.avg_cost.push(num(1)?);
        table.run_avg_cost.push(num(2)?);
        table.hit_fraction.push(num(3)?);
        if let Some(err) = &mut table.norm_error {
            err.push(num(4)?);
        }
    }
    Ok(table)
}

pub(crate) fn tail_mean(values: &[f64], window: usize) -> f64 {
    let w = window.clamp(1, values.len().max(1));
    let tail = &values[values.len().saturating_sub(w)..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.into_iter().collect();
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// First slot after which the trailing `window`-slot mean of `series` stays
/// within `tolerance` (relative) of `target`.
pub fn band_entry(series: &[f64], target: f64, tolerance: f64, window: usize) -> Option<usize> {
    let w = window.max(1);
    if series.len() < w {
        return None;
    }
    let mut sum: f64 = series[..w].iter().sum();
    let mut inside = Vec::with_capacity(series.len() - w + 1);
    inside.push(((sum / w as f64) - target).abs() <= tolerance * target.abs());
    for t in w..series.len() {
        sum += series[t] - series[t - w];
        inside.push(((sum / w as f64) - target).abs() <= tolerance * target.abs());
    }
    let last_out = inside.iter().rposition(|ok| !ok);
    match last_out {
        None => Some(w - 1),
        Some(i) if i + 1 < inside.len() => Some(i + 1 + w - 1),
        Some(_) => None,
    }
}
