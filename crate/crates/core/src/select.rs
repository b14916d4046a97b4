//! Budgeted tensor selection under the chained backward-cost model.
//!
//! Backward time for a selection decomposes around the earliest selected
//! tensor `e`: every selected tensor pays its weight-update time, and every
//! tensor after `e` up to the window's last tensor pays its gradient-pass
//! time (unselected tensors still hand gradients down the chain). The
//! solver fixes each candidate `e` in turn and runs a 0/1 knapsack over the
//! weight-update times of the later tensors.
//!
//! Times are quantized to a 0.1 ms grid before the knapsack: costs round up
//! and the budget rounds down, so any returned mask is feasible against the
//! caller's real-valued budget.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timing::TensorTiming;
use crate::window::{BlockPartition, Window};

/// Binary per-tensor selection, full model length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionMask {
    bits: Vec<u8>,
}

impl SelectionMask {
    pub fn empty(num_tensors: usize) -> SelectionMask {
        SelectionMask {
            bits: vec![0; num_tensors],
        }
    }

    pub fn all_ones(num_tensors: usize) -> SelectionMask {
        SelectionMask {
            bits: vec![1; num_tensors],
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&b| b == 0)
    }

    pub fn select(&mut self, tensor_id: usize) {
        self.bits[tensor_id] = 1;
    }

    pub fn is_selected(&self, tensor_id: usize) -> bool {
        self.bits.get(tensor_id).copied().unwrap_or(0) == 1
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    /// Selected tensor ids in ascending order.
    pub fn selected_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .map(|(id, _)| id)
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }
}

/// Nonnegative per-tensor importance scores, full model length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceVector {
    pub values: Vec<f64>,
}

impl ImportanceVector {
    pub fn zeros(num_tensors: usize) -> ImportanceVector {
        ImportanceVector {
            values: vec![0.0; num_tensors],
        }
    }

    pub fn new(values: Vec<f64>) -> Result<ImportanceVector> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::contract(
                "importance values must be finite and nonnegative",
            ));
        }
        Ok(ImportanceVector { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Scales entries to unit sum; an all-zero vector stays zero.
    pub fn normalized(&self) -> ImportanceVector {
        let total: f64 = self.values.iter().sum();
        if total <= 0.0 {
            return self.clone();
        }
        ImportanceVector {
            values: self.values.iter().map(|v| v / total).collect(),
        }
    }
}

/// Outcome of [`select_tensors`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub mask: SelectionMask,
    /// The caller's budget was negative before selection began; the mask is
    /// empty and the window's end-edge collapse path should engage.
    pub negative_budget: bool,
}

/// Quantization grid for the knapsack, in seconds (0.1 ms).
pub const TIME_GRID_SECONDS: f64 = 1e-4;

/// Largest window (in tensors) the exact solver supports.
const MAX_WINDOW_TENSORS: usize = 128;

fn cost_units(seconds: f64) -> u64 {
    if seconds <= 0.0 {
        0
    } else {
        (seconds / TIME_GRID_SECONDS - 1e-9).ceil() as u64
    }
}

fn budget_units(seconds: f64) -> u64 {
    if seconds <= 0.0 {
        0
    } else {
        (seconds / TIME_GRID_SECONDS + 1e-9).floor() as u64
    }
}

/// Simulated backward time of a selection, in seconds.
///
/// Returns `sum(t_w over selected) + sum(t_g over e+1..=last_tensor)` with
/// `e` the earliest selected tensor, and 0 for an empty mask.
pub fn backward_time(timing: &TensorTiming, mask: &SelectionMask, last_tensor: usize) -> Result<f64> {
    let Some(earliest) = mask.selected_ids().next() else {
        return Ok(0.0);
    };
    if let Some(id) = mask.selected_ids().find(|&id| id > last_tensor) {
        return Err(Error::contract(format!(
            "mask selects tensor {id} beyond last tensor {last_tensor}"
        )));
    }
    let mut total = 0.0;
    for id in mask.selected_ids() {
        total += timing.t_w[id];
    }
    for id in earliest + 1..=last_tensor {
        total += timing.t_g[id];
    }
    Ok(total)
}

/// Candidate solutions ordered by the published tie-break: maximize the
/// importance sum, then prefer fewer tensors, then prefer the
/// lexicographically largest id set (later tensors win).
#[derive(Debug, Clone, Copy)]
struct Candidate {
    value: f64,
    count: u32,
    /// Window-relative membership bits; numeric order matches the
    /// descending-lexicographic order on equally sized id sets.
    bits: u128,
}

impl Candidate {
    const EMPTY: Candidate = Candidate {
        value: 0.0,
        count: 0,
        bits: 0,
    };

    fn beats(&self, other: &Candidate) -> bool {
        if self.value != other.value {
            return self.value > other.value;
        }
        if self.count != other.count {
            return self.count < other.count;
        }
        self.bits > other.bits
    }
}

/// Exact windowed selection: maximizes total importance subject to the
/// backward-time budget, with support confined to the window's tensors.
///
/// `budget` is the runtime threshold minus the caller's effective forward
/// time. A negative budget yields an empty, flagged selection.
pub fn select_tensors(
    importance: &ImportanceVector,
    timing: &TensorTiming,
    window: &Window,
    partition: &BlockPartition,
    budget: f64,
) -> Result<Selection> {
    let num_tensors = timing.t_w.len();
    if importance.len() != num_tensors {
        return Err(Error::contract(format!(
            "importance has {} entries, timing has {num_tensors}",
            importance.len()
        )));
    }
    if importance.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::contract(
            "importance values must be finite and nonnegative",
        ));
    }
    if budget < 0.0 {
        return Ok(Selection {
            mask: SelectionMask::empty(num_tensors),
            negative_budget: true,
        });
    }
    let (first, last) = partition.tensor_span(window);
    let best = solve_window(importance, timing, first, last, budget)?;
    let mut mask = SelectionMask::empty(num_tensors);
    for rel in 0..(last - first + 1) {
        if best.bits >> rel & 1 == 1 {
            mask.select(first + rel);
        }
    }
    Ok(Selection {
        mask,
        negative_budget: false,
    })
}

fn solve_window(
    importance: &ImportanceVector,
    timing: &TensorTiming,
    first: usize,
    last: usize,
    budget: f64,
) -> Result<Candidate> {
    let span = last - first + 1;
    if span > MAX_WINDOW_TENSORS {
        return Err(Error::contract(format!(
            "window spans {span} tensors; the exact solver supports at most {MAX_WINDOW_TENSORS}"
        )));
    }
    let budget = budget_units(budget);
    let tw: Vec<u64> = (first..=last).map(|id| cost_units(timing.t_w[id])).collect();
    let tg: Vec<u64> = (first..=last).map(|id| cost_units(timing.t_g[id])).collect();
    let imp: Vec<f64> = (first..=last).map(|id| importance.values[id]).collect();

    // Gradient-pass cost of everything after a candidate earliest tensor.
    let mut tail_g = vec![0u64; span + 1];
    for rel in (0..span).rev() {
        tail_g[rel] = tail_g[rel + 1] + tg[rel];
    }

    let mut best = Candidate::EMPTY;
    let mut dp: Vec<Candidate> = Vec::new();
    for e in (0..span).rev() {
        let fixed = tail_g[e + 1] + tw[e];
        if fixed > budget {
            continue;
        }
        let cap = budget - fixed;
        let items: Vec<usize> = (e + 1..span).collect();
        let weight_sum: u64 = items.iter().map(|&k| tw[k]).sum();
        let cap = cap.min(weight_sum) as usize;

        let base = Candidate {
            value: 0.0 + imp[e],
            count: 1,
            bits: 1u128 << e,
        };
        dp.clear();
        dp.resize(cap + 1, base);
        for &k in &items {
            let w = tw[k] as usize;
            if w > cap {
                continue;
            }
            for c in (w..=cap).rev() {
                let mut cand = dp[c - w];
                cand.value += imp[k];
                cand.count += 1;
                cand.bits |= 1u128 << k;
                if cand.beats(&dp[c]) {
                    dp[c] = cand;
                }
            }
        }
        if dp[cap].beats(&best) {
            best = dp[cap];
        }
    }
    Ok(best)
}

/// Exhaustive oracle for [`select_tensors`]: enumerates every feasible mask
/// in the window and applies the same tie-break. Refuses windows of more
/// than 20 tensors; this exists to define ground truth in tests and fuzzing.
pub fn brute_force_select(
    importance: &ImportanceVector,
    timing: &TensorTiming,
    window: &Window,
    partition: &BlockPartition,
    budget: f64,
) -> Result<Selection> {
    let num_tensors = timing.t_w.len();
    if budget < 0.0 {
        return Ok(Selection {
            mask: SelectionMask::empty(num_tensors),
            negative_budget: true,
        });
    }
    let (first, last) = partition.tensor_span(window);
    let span = last - first + 1;
    if span > 20 {
        return Err(Error::contract(format!(
            "oracle refuses windows over 20 tensors (got {span})"
        )));
    }
    let budget = budget_units(budget);
    let tw: Vec<u64> = (first..=last).map(|id| cost_units(timing.t_w[id])).collect();
    let tg: Vec<u64> = (first..=last).map(|id| cost_units(timing.t_g[id])).collect();
    let imp: Vec<f64> = (first..=last).map(|id| importance.values[id]).collect();

    let mut best = Candidate::EMPTY;
    for subset in 1u32..(1u32 << span) {
        let earliest = subset.trailing_zeros() as usize;
        let mut units: u64 = (earliest + 1..span).map(|rel| tg[rel]).sum();
        let mut value = 0.0;
        let mut count = 0u32;
        for rel in 0..span {
            if subset >> rel & 1 == 1 {
                units += tw[rel];
                value += imp[rel];
                count += 1;
            }
        }
        if units > budget {
            continue;
        }
        let cand = Candidate {
            value,
            count,
            bits: subset as u128,
        };
        if cand.beats(&best) {
            best = cand;
        }
    }

    let mut mask = SelectionMask::empty(num_tensors);
    for rel in 0..span {
        if best.bits >> rel & 1 == 1 {
            mask.select(first + rel);
        }
    }
    Ok(Selection {
        mask,
        negative_budget: false,
    })
}

/// Canonical objective of a mask: importances summed in ascending id order.
pub fn mask_objective(mask: &SelectionMask, importance: &ImportanceVector) -> f64 {
    let mut acc = 0.0;
    for id in mask.selected_ids() {
        acc += importance.values[id];
    }
    acc
}
