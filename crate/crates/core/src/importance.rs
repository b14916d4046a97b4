//! Tensor importance: a local estimate from one gradient evaluation, a
//! global estimate from consecutive global models, and the beta blend that
//! combines them.

use crate::error::{Error, Result};
use crate::model::{Batch, ChainModel, ParameterStore};
use crate::select::{ImportanceVector, SelectionMask};
use crate::window::Window;

/// Local importance from a single unmasked gradient evaluation truncated at
/// the window's exit: `lr * |g_k|^2` for each tensor in the window, zero
/// outside.
pub fn local_importance(
    model: &ChainModel,
    batch: &Batch,
    lr: f64,
    window: &Window,
) -> Result<ImportanceVector> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::contract(format!("learning rate {lr} must be > 0")));
    }
    let (first, last) = model.partition().tensor_span(window);
    let mut mask = SelectionMask::empty(model.num_tensors());
    for id in first..=last {
        mask.select(id);
    }
    let cache = model.forward_to_exit(batch, window.front_edge)?;
    let grads = model.backward_masked(&cache, &mask, window)?;

    let mut values = vec![0.0; model.num_tensors()];
    for (id, grad) in grads.tensors.iter().enumerate() {
        if let Some(grad) = grad {
            let mut sq = 0.0;
            for g in grad {
                sq += g * g;
            }
            let imp = lr * sq;
            if !imp.is_finite() {
                return Err(Error::Evaluation(format!(
                    "non-finite gradient on tensor {id} during importance evaluation"
                )));
            }
            values[id] = imp;
        }
    }
    Ok(ImportanceVector { values })
}

/// Global importance from consecutive global models:
/// `|w_curr_k - w_prev_k|^2 / lr` per tensor.
pub fn global_importance(
    w_curr: &ParameterStore,
    w_prev: &ParameterStore,
    lr: f64,
) -> Result<ImportanceVector> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::contract(format!("learning rate {lr} must be > 0")));
    }
    if w_curr.num_tensors() != w_prev.num_tensors() {
        return Err(Error::contract(format!(
            "stores disagree on tensor count: {} vs {}",
            w_curr.num_tensors(),
            w_prev.num_tensors()
        )));
    }
    let mut values = Vec::with_capacity(w_curr.num_tensors());
    for (id, (curr, prev)) in w_curr.tensors.iter().zip(&w_prev.tensors).enumerate() {
        if curr.len() != prev.len() {
            return Err(Error::contract(format!(
                "stores disagree on tensor {id} length: {} vs {}",
                curr.len(),
                prev.len()
            )));
        }
        let mut sq = 0.0;
        for (c, p) in curr.iter().zip(prev.iter()) {
            let d = c - p;
            sq += d * d;
        }
        values.push(sq / lr);
    }
    Ok(ImportanceVector { values })
}

/// Blends local and global importance: each vector is normalized to unit
/// sum (all-zero vectors stay zero), then combined entrywise as
/// `beta * local + (1 - beta) * global`. With `normalize` off the raw
/// vectors blend directly.
pub fn adjust(
    local: &ImportanceVector,
    global: &ImportanceVector,
    beta: f64,
    normalize: bool,
) -> Result<ImportanceVector> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::contract(format!("beta {beta} must be in [0, 1]")));
    }
    if local.len() != global.len() {
        return Err(Error::contract(format!(
            "importance vectors disagree on length: {} vs {}",
            local.len(),
            global.len()
        )));
    }
    let (local, global) = if normalize {
        (local.normalized(), global.normalized())
    } else {
        (local.clone(), global.clone())
    };
    let values = local
        .values
        .iter()
        .zip(&global.values)
        .map(|(l, g)| beta * l + (1.0 - beta) * g)
        .collect();
    Ok(ImportanceVector { values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Batch, ChainModel, ModelShape};

    fn small_model(seed: u64) -> ChainModel {
        let mut model = ChainModel::build(ModelShape {
            input_dim: 2,
            num_classes: 2,
            block_widths: vec![3, 2],
            bias: true,
        })
        .unwrap();
        model.init_uniform(seed);
        for h in model.params.heads.iter_mut() {
            for (i, v) in h.iter_mut().enumerate() {
                *v = 0.1 * (i as f64 - 2.0);
            }
        }
        model
    }

    fn batch() -> Batch {
        Batch::new(vec![0.5, -1.0, 1.5, 0.25, -0.75, 2.0], vec![0, 1, 0], 2).unwrap()
    }

    #[test]
    fn zero_gradient_gives_zero_importance() {
        // A zero model with a zero head has zero loss gradient w.r.t. the
        // backbone (the head blocks all signal).
        let model = ChainModel::build(ModelShape {
            input_dim: 2,
            num_classes: 2,
            block_widths: vec![2],
            bias: true,
        })
        .unwrap();
        let window = Window::new(0, 0);
        let imp = local_importance(&model, &batch(), 0.1, &window).unwrap();
        assert!(imp.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn importance_is_linear_in_learning_rate() {
        let model = small_model(21);
        let window = Window::new(0, 1);
        let single = local_importance(&model, &batch(), 0.05, &window).unwrap();
        let double = local_importance(&model, &batch(), 0.1, &window).unwrap();
        for (a, b) in single.values.iter().zip(&double.values) {
            assert!((b - 2.0 * a).abs() <= 1e-15 * b.abs().max(1.0));
        }
    }

    #[test]
    fn importance_matches_finite_difference_gradients() {
        // Independent check: numeric gradients via central differences,
        // importance must equal lr * sum(g^2) per tensor.
        let mut model = small_model(33);
        let window = Window::new(0, 1);
        let batch = batch();
        let lr = 0.2;
        let imp = local_importance(&model, &batch, lr, &window).unwrap();

        let eps = 1e-5;
        for id in 0..model.num_tensors() {
            let mut sq = 0.0;
            for p in 0..model.params.tensors[id].len() {
                let orig = model.params.tensors[id][p];
                model.params.tensors[id][p] = orig + eps;
                let up = model.evaluate_loss_at_exit(&batch, 1).unwrap();
                model.params.tensors[id][p] = orig - eps;
                let down = model.evaluate_loss_at_exit(&batch, 1).unwrap();
                model.params.tensors[id][p] = orig;
                let g = (up - down) / (2.0 * eps);
                sq += g * g;
            }
            let expected = lr * sq;
            let diff = (imp.values[id] - expected).abs();
            assert!(
                diff <= 1e-6 + 1e-4 * expected.abs(),
                "tensor {id}: importance {} vs finite-difference {expected}",
                imp.values[id]
            );
        }
    }

    #[test]
    fn tensors_outside_window_get_zero_importance() {
        let model = small_model(5);
        let window = Window::new(1, 1);
        let imp = local_importance(&model, &batch(), 0.1, &window).unwrap();
        assert_eq!(imp.values[0], 0.0);
        assert_eq!(imp.values[1], 0.0);
        assert!(imp.values[2] > 0.0 || imp.values[3] > 0.0);
    }

    #[test]
    fn identical_stores_give_zero_global_importance() {
        let model = small_model(8);
        let imp = global_importance(&model.params, &model.params, 0.1).unwrap();
        assert!(imp.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_delta_hand_value() {
        // One scalar tensor moving by 0.2 at lr 0.1: (0.2)^2 / 0.1 = 0.4.
        let mut model = ChainModel::build(ModelShape {
            input_dim: 1,
            num_classes: 2,
            block_widths: vec![1],
            bias: false,
        })
        .unwrap();
        let prev = model.params.clone();
        model.params.tensors[0][0] = 0.2;
        let imp = global_importance(&model.params, &prev, 0.1).unwrap();
        assert!((imp.values[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn three_tensor_hand_case() {
        // Deltas (0.25), (0.5, -1.0), (0): at lr 0.25 the formula gives
        // 0.25, 5.0, 0.0 exactly (all values dyadic).
        let mut model = ChainModel::build(ModelShape {
            input_dim: 1,
            num_classes: 2,
            block_widths: vec![2, 1],
            bias: false,
        })
        .unwrap();
        model.params.tensors[0] = vec![1.0, -0.5];
        model.params.tensors[1] = vec![2.0, 0.75];
        let prev = model.params.clone();
        model.params.tensors[0][0] += 0.25;
        model.params.tensors[1][0] += 0.5;
        model.params.tensors[1][1] -= 1.0;
        let imp = global_importance(&model.params, &prev, 0.25).unwrap();
        assert_eq!(imp.values, vec![0.25, 5.0]);
    }

    #[test]
    fn blend_endpoints_and_default() {
        let local = ImportanceVector::new(vec![1.0, 0.0]).unwrap();
        let global = ImportanceVector::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(
            adjust(&local, &global, 1.0, true).unwrap().values,
            vec![1.0, 0.0]
        );
        assert_eq!(
            adjust(&local, &global, 0.0, true).unwrap().values,
            vec![0.0, 1.0]
        );
        assert_eq!(
            adjust(&local, &global, 0.6, true).unwrap().values,
            vec![0.6, 0.4]
        );
    }

    #[test]
    fn blend_of_identical_vectors_is_normalization() {
        let v = ImportanceVector::new(vec![2.0, 6.0, 0.0]).unwrap();
        for beta in [0.0, 0.3, 1.0] {
            let out = adjust(&v, &v, beta, true).unwrap();
            for (got, want) in out.values.iter().zip([0.25, 0.75, 0.0]) {
                assert!((got - want).abs() <= 1e-15, "beta {beta}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn power_of_two_rescaling_is_absorbed() {
        let local = ImportanceVector::new(vec![0.5, 1.5, 0.25]).unwrap();
        let global = ImportanceVector::new(vec![1.0, 0.0, 3.0]).unwrap();
        let blended = adjust(&local, &global, 0.6, true).unwrap();
        let scaled_local =
            ImportanceVector::new(local.values.iter().map(|v| v * 8.0).collect()).unwrap();
        let rescaled = adjust(&scaled_local, &global, 0.6, true).unwrap();
        assert_eq!(blended.values, rescaled.values);
    }

    #[test]
    fn zero_global_blend_is_scaled_local() {
        let local = ImportanceVector::new(vec![2.0, 2.0]).unwrap();
        let global = ImportanceVector::zeros(2);
        let out = adjust(&local, &global, 0.6, true).unwrap();
        assert_eq!(out.values, vec![0.3, 0.3]);
    }
}
