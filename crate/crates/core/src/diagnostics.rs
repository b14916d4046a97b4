//! Convergence-bias diagnostics: per-client aggregation-weight maxima
//! (gamma), the selection-bias term O1 they induce, and the
//! rollback-vs-no-rollback comparison built on top of full training runs.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::federation::{run_training, Dataset, RunConfig};
use crate::select::SelectionMask;

/// Per-tensor selection counts across clients.
fn selection_counts(masks: &[SelectionMask]) -> Vec<usize> {
    let len = masks.first().map(|m| m.len()).unwrap_or(0);
    let mut counts = vec![0usize; len];
    for mask in masks {
        for id in mask.selected_ids() {
            counts[id] += 1;
        }
    }
    counts
}

/// `gamma_n = max_k (c_n)_k` where `(c_n)_k` divides client n's mask bit by
/// the number of clients selecting tensor k. `None` when client n selected
/// nothing this round.
pub fn gamma_n(masks: &[SelectionMask], client: usize) -> Option<f64> {
    let counts = selection_counts(masks);
    masks[client]
        .selected_ids()
        .map(|id| 1.0 / counts[id] as f64)
        .fold(None, |acc, c| Some(acc.map_or(c, |a: f64| a.max(c))))
}

/// Selection-bias term: `sum_n (d_theta * gamma_n - sum_k (c_n)_k)`.
/// Clients with empty masks contribute zero.
pub fn o1_term(masks: &[SelectionMask], d_theta: usize) -> f64 {
    o1_weighted(masks, &vec![1.0; d_theta])
}

/// O1 with per-slot weights (e.g. parameter counts), generalizing
/// `d_theta * gamma_n` to `sum_k w_k * gamma_n`.
pub fn o1_weighted(masks: &[SelectionMask], weights: &[f64]) -> f64 {
    let counts = selection_counts(masks);
    let weight_total: f64 = weights.iter().sum();
    let mut total = 0.0;
    for (n, mask) in masks.iter().enumerate() {
        let Some(gamma) = gamma_n(masks, n) else {
            continue;
        };
        let c_sum: f64 = mask
            .selected_ids()
            .map(|id| weights[id] / counts[id] as f64)
            .sum();
        total += weight_total * gamma - c_sum;
    }
    total
}

/// Mean and sample standard deviation, single pass (Welford).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

pub fn summarize(values: &[f64]) -> SummaryStats {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &v) in values.iter().enumerate() {
        let delta = v - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (v - mean);
    }
    let std = if values.len() > 1 {
        (m2 / (values.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    SummaryStats {
        mean,
        std,
        count: values.len(),
    }
}

/// Result of the rollback comparison: O1 statistics for the same
/// configuration with window rollback enabled and disabled.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RollbackStudy {
    pub rollback: SummaryStats,
    pub no_rollback: SummaryStats,
    pub rollback_o1: Vec<f64>,
    pub no_rollback_o1: Vec<f64>,
}

/// Runs the configuration twice with shared seeds, toggling only the
/// rollback flag, and summarizes the per-round O1 series of each mode.
pub fn rollback_study(cfg: &RunConfig, rounds: usize, dataset: &Dataset) -> Result<RollbackStudy> {
    let run_mode = |rollback: bool| -> Result<Vec<f64>> {
        let mut cfg = cfg.clone();
        cfg.rounds = rounds;
        cfg.rollback = rollback;
        let records = run_training(&cfg, dataset)?;
        Ok(records.iter().map(|r| r.o1).collect())
    };
    let rollback_o1 = run_mode(true)?;
    let no_rollback_o1 = run_mode(false)?;
    Ok(RollbackStudy {
        rollback: summarize(&rollback_o1),
        no_rollback: summarize(&no_rollback_o1),
        rollback_o1,
        no_rollback_o1,
    })
}
