//! Masked server aggregation: each tensor is averaged over the clients
//! that trained it this round; tensors nobody trained keep their previous
//! global value.

use crate::error::{Error, Result};
use crate::model::ParameterStore;
use crate::select::SelectionMask;

/// One client's contribution to a round.
#[derive(Debug, Clone)]
pub struct ClientUpdate {
    pub params: ParameterStore,
    pub mask: SelectionMask,
    /// Blocks whose exit heads this client trained this round.
    pub trained_heads: Vec<usize>,
}

/// Applies the per-tensor aggregation rule: with `S_k` clients selecting
/// tensor `k`, the new global tensor is their unweighted mean when
/// `S_k > 0` and the previous global tensor otherwise. Heads follow the
/// same rule over the clients whose windows ended at them, unless head
/// aggregation is disabled entirely.
pub fn aggregate(
    updates: &[ClientUpdate],
    prev_global: &ParameterStore,
    aggregate_heads: bool,
) -> Result<ParameterStore> {
    let num_tensors = prev_global.num_tensors();
    for (n, update) in updates.iter().enumerate() {
        if update.params.num_tensors() != num_tensors
            || update.mask.len() != num_tensors
            || update.params.heads.len() != prev_global.heads.len()
        {
            return Err(Error::contract(format!(
                "client {n} update does not share the global key set"
            )));
        }
        for (k, tensor) in update.params.tensors.iter().enumerate() {
            if tensor.len() != prev_global.tensors[k].len() {
                return Err(Error::contract(format!(
                    "client {n} tensor {k} has length {}, global has {}",
                    tensor.len(),
                    prev_global.tensors[k].len()
                )));
            }
        }
    }

    let mut tensors = Vec::with_capacity(num_tensors);
    for k in 0..num_tensors {
        let selecting: Vec<&ClientUpdate> =
            updates.iter().filter(|u| u.mask.is_selected(k)).collect();
        if selecting.is_empty() {
            tensors.push(prev_global.tensors[k].clone());
            continue;
        }
        let mut acc = vec![0.0; prev_global.tensors[k].len()];
        for update in &selecting {
            for (a, v) in acc.iter_mut().zip(&update.params.tensors[k]) {
                *a += v;
            }
        }
        let inv = 1.0 / selecting.len() as f64;
        for a in acc.iter_mut() {
            *a *= inv;
        }
        tensors.push(acc);
    }

    let mut heads = Vec::with_capacity(prev_global.heads.len());
    for (b, prev_head) in prev_global.heads.iter().enumerate() {
        if !aggregate_heads {
            heads.push(prev_head.clone());
            continue;
        }
        let training: Vec<&ClientUpdate> = updates
            .iter()
            .filter(|u| u.trained_heads.contains(&b))
            .collect();
        if training.is_empty() {
            heads.push(prev_head.clone());
            continue;
        }
        let mut acc = vec![0.0; prev_head.len()];
        for update in &training {
            for (a, v) in acc.iter_mut().zip(&update.params.heads[b]) {
                *a += v;
            }
        }
        let inv = 1.0 / training.len() as f64;
        for a in acc.iter_mut() {
            *a *= inv;
        }
        heads.push(acc);
    }

    Ok(ParameterStore { tensors, heads })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: &[f64]) -> ParameterStore {
        ParameterStore {
            tensors: values.iter().map(|&v| vec![v, v * 2.0]).collect(),
            heads: vec![vec![values[0]; 3]],
        }
    }

    fn update(values: &[f64], selected: &[usize], heads: &[usize]) -> ClientUpdate {
        let mut mask = SelectionMask::empty(values.len());
        for &id in selected {
            mask.select(id);
        }
        ClientUpdate {
            params: store(values),
            mask,
            trained_heads: heads.to_vec(),
        }
    }

    #[test]
    fn all_ones_masks_reduce_to_plain_mean() {
        let prev = store(&[0.0, 0.0, 0.0]);
        let updates = vec![
            update(&[1.0, 2.0, 3.0], &[0, 1, 2], &[0]),
            update(&[3.0, 6.0, 9.0], &[0, 1, 2], &[0]),
        ];
        let out = aggregate(&updates, &prev, true).unwrap();
        assert_eq!(out.tensors[0], vec![2.0, 4.0]);
        assert_eq!(out.tensors[1], vec![4.0, 8.0]);
        assert_eq!(out.tensors[2], vec![6.0, 12.0]);
        assert_eq!(out.heads[0], vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn sole_selector_owns_the_tensor() {
        let prev = store(&[0.5, 0.5]);
        let updates = vec![
            update(&[1.0, 7.0], &[1], &[]),
            update(&[9.0, 2.0], &[], &[]),
        ];
        let out = aggregate(&updates, &prev, true).unwrap();
        assert_eq!(out.tensors[1], vec![7.0, 14.0]);
    }

    #[test]
    fn unselected_tensor_keeps_previous_global() {
        let prev = store(&[0.25, -1.5]);
        let updates = vec![
            update(&[1.0, 7.0], &[0], &[]),
            update(&[9.0, 2.0], &[0], &[]),
        ];
        let out = aggregate(&updates, &prev, true).unwrap();
        assert_eq!(out.tensors[1], prev.tensors[1]);
        // Bit-identical, not merely close.
        assert_eq!(out.tensors[1][0].to_bits(), prev.tensors[1][0].to_bits());
        assert_eq!(out.heads[0], prev.heads[0]);
    }

    #[test]
    fn disabled_head_aggregation_keeps_previous_heads() {
        let prev = store(&[0.0, 0.0]);
        let updates = vec![update(&[5.0, 5.0], &[0, 1], &[0])];
        let out = aggregate(&updates, &prev, false).unwrap();
        assert_eq!(out.heads[0], prev.heads[0]);
        assert_eq!(out.tensors[0], vec![5.0, 10.0]);
    }

    #[test]
    fn key_mismatch_is_a_contract_violation() {
        let prev = store(&[0.0, 0.0]);
        let bad = update(&[1.0, 2.0, 3.0], &[0], &[]);
        assert!(matches!(
            aggregate(&[bad], &prev, true),
            Err(Error::Contract(_))
        ));
    }
}
