//! Sliding-window state machine: initial window construction, front-edge
//! advancement, end-edge shrinkage, reset on completion, and the disjoint
//! FedEL-C variant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::select::SelectionMask;

/// Contiguous, non-overlapping tensor ranges covering the whole model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPartition {
    /// Per block: (first_tensor, last_tensor), both inclusive.
    ranges: Vec<(usize, usize)>,
}

impl BlockPartition {
    pub fn new(ranges: Vec<(usize, usize)>) -> Result<BlockPartition> {
        if ranges.is_empty() {
            return Err(Error::config("partition needs at least one block"));
        }
        let mut expected = 0usize;
        for &(first, last) in &ranges {
            if first != expected || last < first {
                return Err(Error::config(format!(
                    "partition ranges must be contiguous and ordered, got ({first}, {last}) \
                     where tensor {expected} was expected"
                )));
            }
            expected = last + 1;
        }
        Ok(BlockPartition { ranges })
    }

    pub fn num_blocks(&self) -> usize {
        self.ranges.len()
    }

    pub fn num_tensors(&self) -> usize {
        self.ranges.last().map(|&(_, last)| last + 1).unwrap_or(0)
    }

    /// Inclusive tensor range of one block.
    pub fn range(&self, block_id: usize) -> (usize, usize) {
        self.ranges[block_id]
    }

    /// Block owning a tensor.
    pub fn block_of(&self, tensor_id: usize) -> Option<usize> {
        self.ranges
            .iter()
            .position(|&(first, last)| tensor_id >= first && tensor_id <= last)
    }

    /// Inclusive tensor span covered by a window.
    pub fn tensor_span(&self, window: &Window) -> (usize, usize) {
        (self.ranges[window.end_edge].0, self.ranges[window.front_edge].1)
    }
}

/// The contiguous block range `[end_edge, front_edge]` trained in a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    /// First trained block (inclusive).
    pub end_edge: usize,
    /// Last trained block (inclusive); the exit head lives here.
    pub front_edge: usize,
}

impl Window {
    pub fn new(end_edge: usize, front_edge: usize) -> Window {
        assert!(end_edge <= front_edge, "window edges out of order");
        Window {
            end_edge,
            front_edge,
        }
    }

    pub fn num_blocks(&self) -> usize {
        self.front_edge - self.end_edge + 1
    }

    pub fn contains_block(&self, block_id: usize) -> bool {
        block_id >= self.end_edge && block_id <= self.front_edge
    }
}

/// Which sliding rule a client runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlideVariant {
    /// Shrink the end past unselected leading blocks, then advance the front.
    FedEl,
    /// The end edge jumps to the previous front edge; consecutive windows
    /// are disjoint.
    FedElC,
}

/// Smallest index `m >= start` whose cumulative block time from `start`
/// reaches `t_th`; the last block if the total never does.
fn minimal_prefix(block_times: &[f64], start: usize, t_th: f64) -> usize {
    let mut acc = 0.0;
    for (m, &t) in block_times.iter().enumerate().skip(start) {
        acc += t;
        if acc >= t_th {
            return m;
        }
    }
    block_times.len() - 1
}

/// Window `[0, m]` where `m` is the first block at which the cumulative
/// training time reaches `t_th`; the whole model when the total stays below.
pub fn initial_window(block_times: &[f64], t_th: f64) -> Window {
    Window::new(0, minimal_prefix(block_times, 0, t_th))
}

/// Front-edge movement: the window jumps past the old front edge and the
/// newly included blocks accumulate to just over `t_th`. A front edge
/// already at the last block resets to the initial window.
pub fn advance_front(window: Window, block_times: &[f64], t_th: f64) -> Window {
    let last_block = block_times.len() - 1;
    if window.front_edge >= last_block {
        return initial_window(block_times, t_th);
    }
    let start = window.front_edge + 1;
    Window::new(start, minimal_prefix(block_times, start, t_th))
}

/// End-edge movement: culls leading window blocks whose tensors were all
/// unselected last round, stopping at the first block with a selection.
/// An entirely unselected window collapses to its front block.
pub fn shrink_end(window: Window, last_mask: &SelectionMask, partition: &BlockPartition) -> Window {
    for block in window.end_edge..=window.front_edge {
        let (first, last) = partition.range(block);
        if (first..=last).any(|id| last_mask.is_selected(id)) {
            return Window::new(block, window.front_edge);
        }
    }
    Window::new(window.front_edge, window.front_edge)
}

/// One sliding step, applied at the start of a round using the previous
/// round's window and selection mask.
///
/// FedEL shrinks the end first, then extends the front until the cumulative
/// time measured from the new end reaches `t_th`; the front always moves
/// past the previous front so every slide makes progress. FedEL-C ignores
/// the mask and starts the next window right after the previous front.
/// Either variant resets to the initial window once the front has reached
/// the last block.
pub fn slide(
    window: Window,
    last_mask: &SelectionMask,
    block_times: &[f64],
    t_th: f64,
    partition: &BlockPartition,
    variant: SlideVariant,
) -> Window {
    let last_block = block_times.len() - 1;
    if window.front_edge >= last_block {
        return initial_window(block_times, t_th);
    }
    match variant {
        SlideVariant::FedEl => {
            let end = shrink_end(window, last_mask, partition).end_edge;
            let front = minimal_prefix(block_times, end, t_th).max(window.front_edge + 1);
            Window::new(end, front.min(last_block))
        }
        SlideVariant::FedElC => advance_front(window, block_times, t_th),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_with(len: usize, ids: &[usize]) -> SelectionMask {
        let mut mask = SelectionMask::empty(len);
        for &id in ids {
            mask.select(id);
        }
        mask
    }

    #[test]
    fn initial_window_stops_at_threshold() {
        // 3 + 4 = 7 < 10, 3 + 4 + 5 = 12 >= 10.
        assert_eq!(initial_window(&[3.0, 4.0, 5.0], 10.0), Window::new(0, 2));
    }

    #[test]
    fn initial_window_spans_model_when_budget_exceeds_total() {
        assert_eq!(initial_window(&[3.0, 4.0, 5.0], 100.0), Window::new(0, 2));
        assert_eq!(initial_window(&[3.0, 4.0, 5.0], 12.0), Window::new(0, 2));
    }

    #[test]
    fn initial_window_single_block() {
        assert_eq!(initial_window(&[6.0], 5.0), Window::new(0, 0));
    }

    #[test]
    fn advance_includes_blocks_to_threshold() {
        // Old front at block index 3; remaining times 2, 3, 4, 5 and
        // t_th = 12: 2 + 3 + 4 = 9 < 12, + 5 = 14 >= 12.
        let times = [1.0, 1.0, 1.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let next = advance_front(Window::new(1, 3), &times, 12.0);
        assert_eq!(next, Window::new(4, 7));
    }

    #[test]
    fn advance_from_last_block_resets() {
        let times = [3.0, 4.0, 5.0];
        let next = advance_front(Window::new(2, 2), &times, 10.0);
        assert_eq!(next, initial_window(&times, 10.0));
    }

    #[test]
    fn advance_lands_on_last_block_when_budget_unmet() {
        let times = [5.0, 5.0, 1.0, 1.0];
        let next = advance_front(Window::new(0, 1), &times, 10.0);
        assert_eq!(next, Window::new(2, 3));
    }

    #[test]
    fn shrink_stops_at_first_selected_block() {
        // Blocks 1 and 2 of the window are fully unselected, block 3 has a
        // selection: the end edge moves there.
        let partition =
            BlockPartition::new(vec![(0, 1), (2, 3), (4, 5), (6, 7), (8, 9), (10, 11)]).unwrap();
        let mask = mask_with(12, &[7, 9]);
        let shrunk = shrink_end(Window::new(1, 4), &mask, &partition);
        assert_eq!(shrunk, Window::new(3, 4));
    }

    #[test]
    fn shrink_keeps_fully_selected_window() {
        let partition = BlockPartition::new(vec![(0, 0), (1, 1), (2, 2)]).unwrap();
        let mask = mask_with(3, &[0, 1, 2]);
        assert_eq!(
            shrink_end(Window::new(0, 2), &mask, &partition),
            Window::new(0, 2)
        );
    }

    #[test]
    fn shrink_collapses_to_front_on_empty_mask() {
        let partition = BlockPartition::new(vec![(0, 0), (1, 1), (2, 2)]).unwrap();
        let mask = SelectionMask::empty(3);
        assert_eq!(
            shrink_end(Window::new(0, 2), &mask, &partition),
            Window::new(2, 2)
        );
    }

    #[test]
    fn slide_retains_last_selected_block() {
        // Round 1 window spans blocks 0..=2; blocks 0 and 1 come back
        // unselected while block 2 keeps a selection. With t2 + t3 < t_th
        // <= t2 + t3 + t4 the next window is blocks 2..=4.
        let partition = BlockPartition::new(vec![(0, 0), (1, 1), (2, 2), (3, 3), (4, 4)]).unwrap();
        let times = [3.0, 4.0, 3.0, 3.0, 4.0];
        assert_eq!(initial_window(&times, 8.0), Window::new(0, 2));
        let mask = mask_with(5, &[2]);
        let next = slide(
            Window::new(0, 2),
            &mask,
            &times,
            8.0,
            &partition,
            SlideVariant::FedEl,
        );
        assert_eq!(next, Window::new(2, 4));
    }

    #[test]
    fn slide_fedelc_is_disjoint() {
        let partition = BlockPartition::new(vec![(0, 0), (1, 1), (2, 2), (3, 3), (4, 4)]).unwrap();
        let times = [3.0, 4.0, 3.0, 3.0, 4.0];
        let mask = mask_with(5, &[2]);
        let next = slide(
            Window::new(0, 2),
            &mask,
            &times,
            8.0,
            &partition,
            SlideVariant::FedElC,
        );
        assert_eq!(next, Window::new(3, 4));
    }

    #[test]
    fn slide_uniform_times_marches_and_resets() {
        // Six blocks of t_th/2 each with everything selected: the end stays
        // put, the front advances one block per round, and reaching the last
        // block resets to the initial window. Trajectory worked out by hand.
        let partition =
            BlockPartition::new(vec![(0, 0), (1, 1), (2, 2), (3, 3), (4, 4), (5, 5)]).unwrap();
        let times = [5.0; 6];
        let all = mask_with(6, &[0, 1, 2, 3, 4, 5]);
        let mut w = initial_window(&times, 10.0);
        let mut seen = vec![w];
        for _ in 0..5 {
            w = slide(w, &all, &times, 10.0, &partition, SlideVariant::FedEl);
            seen.push(w);
        }
        assert_eq!(
            seen,
            vec![
                Window::new(0, 1),
                Window::new(0, 2),
                Window::new(0, 3),
                Window::new(0, 4),
                Window::new(0, 5),
                Window::new(0, 1),
            ]
        );
    }

    #[test]
    fn slide_resets_after_front_hits_last_block() {
        let partition = BlockPartition::new(vec![(0, 0), (1, 1), (2, 2)]).unwrap();
        let times = [3.0, 4.0, 5.0];
        let mask = SelectionMask::empty(3);
        let next = slide(
            Window::new(1, 2),
            &mask,
            &times,
            6.0,
            &partition,
            SlideVariant::FedEl,
        );
        assert_eq!(next, initial_window(&times, 6.0));
    }
}
