//! JSON report types and aggregation.
//!
//! Schema stability contract: for a given command, every key below is
//! always present in the emitted JSON; fields that do not apply — oracle
//! comparisons without `--oracle`, work counters for estimators that issue
//! no density queries, mode-specific adversary outputs — are `null`, never
//! missing. Two runs with the same configuration and seed produce
//! byte-identical reports except for the `wall_ms` / `median_wall_ms`
//! values.

use serde::Serialize;

/// Echo of the kernel configuration. `beta` is `null` for families that
/// have no second parameter.
#[derive(Debug, Serialize)]
pub struct KernelEcho {
    pub family: String,
    pub scale: f64,
    pub beta: Option<f64>,
}

/// One experiment run: configuration echo, per-trial results, aggregate.
#[derive(Debug, Serialize)]
pub struct ExperimentReport {
    pub command: String,
    pub kernel: KernelEcho,
    pub eps: f64,
    pub backend: String,
    pub seed: u64,
    pub trials: u32,
    pub n: usize,
    pub dim: usize,
    pub input_path: Option<String>,
    pub gen_spec: Option<String>,
    pub oracle_enabled: bool,
    pub oracle_cap: usize,
    /// Human-readable statement of the per-trial pass criterion.
    pub contract: String,
    pub trial_reports: Vec<TrialReport>,
    pub aggregate: Aggregate,
}

/// One trial. `estimate` is the command's scalar summary (the estimated
/// value itself for scalar commands, the l2/Frobenius norm of the estimate
/// for vector- and matrix-valued ones); `detail` carries command-specific
/// extras with a fixed key set per command.
#[derive(Debug, Serialize)]
pub struct TrialReport {
    pub trial: u32,
    /// Derived RNG stream for this trial: `derive_seed(seed, trial)`.
    pub seed: u64,
    pub estimate: f64,
    pub detail: serde_json::Value,
    pub oracle_value: Option<f64>,
    pub relative_error: Option<f64>,
    pub pass: Option<bool>,
    pub kde_work: Option<u64>,
    pub wall_ms: f64,
}

/// Aggregates over the trials of one run.
#[derive(Debug, Serialize)]
pub struct Aggregate {
    /// Passing trials over total trials, exactly; `null` without oracle.
    pub success_rate: Option<f64>,
    pub median_estimate: f64,
    pub median_relative_error: Option<f64>,
    pub median_wall_ms: f64,
    /// Sum of the per-trial density-query work counters (0 when the
    /// command performs none).
    pub total_kde_work: u64,
}

/// Report for the `adversary` command. Mode-specific outputs are `null`
/// for the modes that do not produce them.
#[derive(Debug, Serialize)]
pub struct AdversaryReport {
    pub command: String,
    pub mode: String,
    pub n: u64,
    pub eps: f64,
    pub delta: f64,
    pub legal: Option<bool>,
    pub ratio: Option<f64>,
    pub tail_eigenvalue: Option<f64>,
    pub rayleigh: Option<f64>,
    pub lambda1: Option<f64>,
    pub stagnation_steps: Option<u64>,
    pub signed_inner: Option<f64>,
    pub required_delta: Option<f64>,
}

/// Median of a non-empty slice (average of the two middle order statistics
/// for even lengths). Inputs are finite by construction.
pub fn median(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    }
}

/// Builds the aggregate block from finished trials (at least one).
pub fn aggregate(trials: &[TrialReport]) -> Aggregate {
    let estimates: Vec<f64> = trials.iter().map(|t| t.estimate).collect();
    let walls: Vec<f64> = trials.iter().map(|t| t.wall_ms).collect();
    let rels: Vec<f64> = trials.iter().filter_map(|t| t.relative_error).collect();
    let success_rate = if trials.iter().all(|t| t.pass.is_some()) {
        let passes = trials.iter().filter(|t| t.pass == Some(true)).count();
        Some(passes as f64 / trials.len() as f64)
    } else {
        None
    };
    Aggregate {
        success_rate,
        median_estimate: median(&estimates),
        median_relative_error: if rels.len() == trials.len() {
            Some(median(&rels))
        } else {
            None
        },
        median_wall_ms: median(&walls),
        total_kde_work: trials.iter().map(|t| t.kde_work.unwrap_or(0)).sum(),
    }
}
