//! Chain-structured dense model with block partitioning, per-tensor
//! freezing, and one early-exit head per block.
//!
//! The model is a stack of affine+ReLU blocks. Every block carries a
//! zero-initialized affine head mapping its output width to the class
//! count, so a forward pass can terminate at any block boundary. Head
//! parameters live in the [`ParameterStore`] next to the backbone tensors
//! and persist across rounds.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::select::SelectionMask;
use crate::window::{BlockPartition, Window};

/// Static description of one parameter tensor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    /// Contiguous 0-based index, increasing along the forward direction.
    pub tensor_id: usize,
    /// Owning block; non-decreasing in `tensor_id`.
    pub block_id: usize,
    pub shape: Vec<usize>,
    pub param_count: usize,
}

/// Architecture of a [`ChainModel`]: one dense (affine+ReLU) layer per block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelShape {
    pub input_dim: usize,
    pub num_classes: usize,
    /// Output width of each block, input to output.
    pub block_widths: Vec<usize>,
    /// Whether blocks carry a bias tensor in addition to the weight tensor.
    #[serde(default = "default_true")]
    pub bias: bool,
}

fn default_true() -> bool {
    true
}

/// All trainable values: backbone tensors keyed by tensor id plus one head
/// array per block (head weight and bias flattened together).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterStore {
    pub tensors: Vec<Vec<f64>>,
    pub heads: Vec<Vec<f64>>,
}

impl ParameterStore {
    pub fn num_tensors(&self) -> usize {
        self.tensors.len()
    }

    /// True when every backbone and head value is finite.
    pub fn all_finite(&self) -> bool {
        self.tensors
            .iter()
            .chain(self.heads.iter())
            .all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// A mini-batch of rows with integer class labels.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Vec<f64>,
    pub labels: Vec<usize>,
    pub batch_size: usize,
    pub input_dim: usize,
}

impl Batch {
    pub fn new(inputs: Vec<f64>, labels: Vec<usize>, input_dim: usize) -> Result<Batch> {
        if labels.is_empty() {
            return Err(Error::config("batch must contain at least one sample"));
        }
        if inputs.len() != labels.len() * input_dim {
            return Err(Error::config(format!(
                "batch inputs have {} values, expected {} ({} samples x {} dims)",
                inputs.len(),
                labels.len() * input_dim,
                labels.len(),
                input_dim,
            )));
        }
        Ok(Batch {
            batch_size: labels.len(),
            inputs,
            labels,
            input_dim,
        })
    }
}

/// Activations cached by [`ChainModel::forward_to_exit`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub exit_block: usize,
    pub batch_size: usize,
    inputs: Vec<f64>,
    labels: Vec<usize>,
    /// Pre-activation values per block 0..=exit_block.
    pre_acts: Vec<Vec<f64>>,
    /// Post-ReLU values per block 0..=exit_block.
    post_acts: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
}

/// Gradients from a masked backward pass: entries only for selected tensors
/// plus the head that terminated the window.
#[derive(Debug, Clone)]
pub struct GradStore {
    pub tensors: Vec<Option<Vec<f64>>>,
    pub head: Option<(usize, Vec<f64>)>,
    /// Mean cross-entropy of the batch the gradients came from.
    pub loss: f64,
}

/// Chain of dense blocks with per-block early-exit heads.
#[derive(Debug, Clone)]
pub struct ChainModel {
    shape: ModelShape,
    specs: Vec<TensorSpec>,
    partition: BlockPartition,
    /// Per block: weight tensor id and optional bias tensor id.
    block_tensors: Vec<(usize, Option<usize>)>,
    pub params: ParameterStore,
}

impl ChainModel {
    /// Builds the model with all parameters (backbone and heads) at zero.
    pub fn build(shape: ModelShape) -> Result<ChainModel> {
        if shape.block_widths.is_empty() {
            return Err(Error::config("model needs at least one block"));
        }
        if shape.input_dim == 0 || shape.num_classes == 0 {
            return Err(Error::config("input_dim and num_classes must be positive"));
        }
        if shape.block_widths.iter().any(|&w| w == 0) {
            return Err(Error::config("block widths must be positive"));
        }

        let mut specs = Vec::new();
        let mut block_tensors = Vec::new();
        let mut tensors = Vec::new();
        let mut heads = Vec::new();
        let mut ranges = Vec::new();

        let mut in_dim = shape.input_dim;
        for (block_id, &width) in shape.block_widths.iter().enumerate() {
            let first = specs.len();
            let weight_id = specs.len();
            specs.push(TensorSpec {
                tensor_id: weight_id,
                block_id,
                shape: vec![width, in_dim],
                param_count: width * in_dim,
            });
            tensors.push(vec![0.0; width * in_dim]);
            let bias_id = if shape.bias {
                let id = specs.len();
                specs.push(TensorSpec {
                    tensor_id: id,
                    block_id,
                    shape: vec![width],
                    param_count: width,
                });
                tensors.push(vec![0.0; width]);
                Some(id)
            } else {
                None
            };
            ranges.push((first, specs.len() - 1));
            block_tensors.push((weight_id, bias_id));
            heads.push(vec![0.0; shape.num_classes * width + shape.num_classes]);
            in_dim = width;
        }

        Ok(ChainModel {
            shape,
            specs,
            partition: BlockPartition::new(ranges)?,
            block_tensors,
            params: ParameterStore { tensors, heads },
        })
    }

    /// Seeded uniform(-s, s) init with s = 1/sqrt(fan_in) for backbone
    /// tensors. Heads stay zero.
    pub fn init_uniform(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut in_dim = self.shape.input_dim;
        for &(weight_id, bias_id) in &self.block_tensors {
            let bound = 1.0 / (in_dim as f64).sqrt();
            for v in self.params.tensors[weight_id].iter_mut() {
                *v = rng.random_range(-bound..bound);
            }
            if let Some(bias_id) = bias_id {
                for v in self.params.tensors[bias_id].iter_mut() {
                    *v = rng.random_range(-bound..bound);
                }
            }
            in_dim = self.specs[weight_id].shape[0];
        }
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn num_tensors(&self) -> usize {
        self.specs.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.block_tensors.len()
    }

    pub fn num_classes(&self) -> usize {
        self.shape.num_classes
    }

    /// Output width of a block.
    pub fn block_width(&self, block_id: usize) -> usize {
        self.shape.block_widths[block_id]
    }

    /// Parameter count of a block's head (weight + bias).
    pub fn head_param_count(&self, block_id: usize) -> usize {
        self.shape.num_classes * self.shape.block_widths[block_id] + self.shape.num_classes
    }

    /// Total backbone parameter count per block, for FLOP-proportional costs.
    pub fn block_param_count(&self, block_id: usize) -> usize {
        let (first, last) = self.partition.range(block_id);
        (first..=last).map(|t| self.specs[t].param_count).sum()
    }

    fn block_in_dim(&self, block_id: usize) -> usize {
        if block_id == 0 {
            self.shape.input_dim
        } else {
            self.shape.block_widths[block_id - 1]
        }
    }

    /// Forward through blocks `0..=exit_block` followed by that block's head.
    ///
    /// Blocks after `exit_block` are untouched. The cache keeps everything
    /// the masked backward pass needs.
    pub fn forward_to_exit(&self, batch: &Batch, exit_block: usize) -> Result<ForwardCache> {
        if exit_block >= self.num_blocks() {
            return Err(Error::contract(format!(
                "exit block {exit_block} out of range (model has {} blocks)",
                self.num_blocks()
            )));
        }
        if batch.input_dim != self.shape.input_dim {
            return Err(Error::config(format!(
                "batch dim {} does not match model input dim {}",
                batch.input_dim, self.shape.input_dim
            )));
        }
        if let Some(&bad) = batch.labels.iter().find(|&&l| l >= self.shape.num_classes) {
            return Err(Error::config(format!(
                "label {bad} out of range for {} classes",
                self.shape.num_classes
            )));
        }

        let m = batch.batch_size;
        let mut pre_acts = Vec::with_capacity(exit_block + 1);
        let mut post_acts = Vec::with_capacity(exit_block + 1);
        let mut current = batch.inputs.clone();
        let mut in_dim = self.shape.input_dim;

        for block_id in 0..=exit_block {
            let out_dim = self.shape.block_widths[block_id];
            let (weight_id, bias_id) = self.block_tensors[block_id];
            let w = &self.params.tensors[weight_id];
            let mut z = vec![0.0; m * out_dim];
            for row in 0..m {
                let x = &current[row * in_dim..(row + 1) * in_dim];
                let zr = &mut z[row * out_dim..(row + 1) * out_dim];
                for o in 0..out_dim {
                    let wrow = &w[o * in_dim..(o + 1) * in_dim];
                    let mut acc = 0.0;
                    for i in 0..in_dim {
                        acc += wrow[i] * x[i];
                    }
                    zr[o] = acc;
                }
                if let Some(bias_id) = bias_id {
                    let b = &self.params.tensors[bias_id];
                    for o in 0..out_dim {
                        zr[o] += b[o];
                    }
                }
            }
            let a: Vec<f64> = z.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
            pre_acts.push(z);
            post_acts.push(a);
            current = post_acts[block_id].clone();
            in_dim = out_dim;
        }

        let logits = self.head_forward(exit_block, &post_acts[exit_block], m);
        Ok(ForwardCache {
            exit_block,
            batch_size: m,
            inputs: batch.inputs.clone(),
            labels: batch.labels.clone(),
            pre_acts,
            post_acts,
            logits,
        })
    }

    fn head_forward(&self, block_id: usize, acts: &[f64], m: usize) -> Vec<f64> {
        let width = self.shape.block_widths[block_id];
        let classes = self.shape.num_classes;
        let head = &self.params.heads[block_id];
        let (hw, hb) = head.split_at(classes * width);
        let mut logits = vec![0.0; m * classes];
        for row in 0..m {
            let a = &acts[row * width..(row + 1) * width];
            let lr = &mut logits[row * classes..(row + 1) * classes];
            for c in 0..classes {
                let wrow = &hw[c * width..(c + 1) * width];
                let mut acc = hb[c];
                for j in 0..width {
                    acc += wrow[j] * a[j];
                }
                lr[c] = acc;
            }
        }
        logits
    }

    /// Masked backward pass from the cached exit head.
    ///
    /// Returns gradients for the selected tensors and the active head only.
    /// Gradient values for a selected tensor are identical to an unmasked
    /// backward pass truncated at the same exit; the mask decides which
    /// updates exist, not how the chain rule runs.
    pub fn backward_masked(
        &self,
        cache: &ForwardCache,
        mask: &SelectionMask,
        window: &Window,
    ) -> Result<GradStore> {
        if cache.exit_block != window.front_edge {
            return Err(Error::contract(format!(
                "cache exit block {} does not match window front edge {}",
                cache.exit_block, window.front_edge
            )));
        }
        let (win_first, win_last) = self.partition.tensor_span(window);
        if let Some(id) = mask
            .selected_ids()
            .find(|&id| id < win_first || id > win_last)
        {
            return Err(Error::contract(format!(
                "mask selects tensor {id} outside window tensors {win_first}..={win_last}"
            )));
        }

        let m = cache.batch_size;
        let classes = self.shape.num_classes;
        let exit = cache.exit_block;
        let width = self.shape.block_widths[exit];

        // Softmax cross-entropy: dlogits = (softmax - onehot) / m.
        let mut loss = 0.0;
        let mut dlogits = vec![0.0; m * classes];
        for row in 0..m {
            let lr = &cache.logits[row * classes..(row + 1) * classes];
            let max = lr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for &v in lr {
                denom += (v - max).exp();
            }
            let label = cache.labels[row];
            loss += denom.ln() + max - lr[label];
            let dr = &mut dlogits[row * classes..(row + 1) * classes];
            for c in 0..classes {
                let p = (lr[c] - max).exp() / denom;
                dr[c] = (p - if c == label { 1.0 } else { 0.0 }) / m as f64;
            }
        }
        loss /= m as f64;

        // Head gradient and the gradient flowing into the exit activations.
        let head = &self.params.heads[exit];
        let (hw, _hb) = head.split_at(classes * width);
        let acts = &cache.post_acts[exit];
        let mut dhead = vec![0.0; head.len()];
        {
            let (dhw, dhb) = dhead.split_at_mut(classes * width);
            for row in 0..m {
                let a = &acts[row * width..(row + 1) * width];
                let dr = &dlogits[row * classes..(row + 1) * classes];
                for c in 0..classes {
                    dhb[c] += dr[c];
                    let drow = &mut dhw[c * width..(c + 1) * width];
                    for j in 0..width {
                        drow[j] += dr[c] * a[j];
                    }
                }
            }
        }
        let mut da = vec![0.0; m * width];
        for row in 0..m {
            let dr = &dlogits[row * classes..(row + 1) * classes];
            let dar = &mut da[row * width..(row + 1) * width];
            for c in 0..classes {
                let wrow = &hw[c * width..(c + 1) * width];
                for j in 0..width {
                    dar[j] += dr[c] * wrow[j];
                }
            }
        }

        // The chain only needs to run down to the block that owns the
        // earliest selected tensor.
        let stop_block = mask
            .selected_ids()
            .next()
            .map(|id| self.specs[id].block_id);

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.num_tensors()];
        if let Some(stop_block) = stop_block {
            for block_id in (stop_block..=exit).rev() {
                let out_dim = self.shape.block_widths[block_id];
                let in_dim = self.block_in_dim(block_id);
                let (weight_id, bias_id) = self.block_tensors[block_id];
                let z = &cache.pre_acts[block_id];
                // dz = da * relu'(z)
                let mut dz = da;
                for (v, &zv) in dz.iter_mut().zip(z.iter()) {
                    if zv <= 0.0 {
                        *v = 0.0;
                    }
                }
                let prev: &[f64] = if block_id == 0 {
                    &cache.inputs
                } else {
                    &cache.post_acts[block_id - 1]
                };
                if mask.is_selected(weight_id) {
                    let mut dw = vec![0.0; out_dim * in_dim];
                    for row in 0..m {
                        let x = &prev[row * in_dim..(row + 1) * in_dim];
                        let dzr = &dz[row * out_dim..(row + 1) * out_dim];
                        for o in 0..out_dim {
                            let drow = &mut dw[o * in_dim..(o + 1) * in_dim];
                            for i in 0..in_dim {
                                drow[i] += dzr[o] * x[i];
                            }
                        }
                    }
                    grads[weight_id] = Some(dw);
                }
                if let Some(bias_id) = bias_id {
                    if mask.is_selected(bias_id) {
                        let mut db = vec![0.0; out_dim];
                        for row in 0..m {
                            let dzr = &dz[row * out_dim..(row + 1) * out_dim];
                            for o in 0..out_dim {
                                db[o] += dzr[o];
                            }
                        }
                        grads[bias_id] = Some(db);
                    }
                }
                if block_id > stop_block {
                    let w = &self.params.tensors[weight_id];
                    let mut dprev = vec![0.0; m * in_dim];
                    for row in 0..m {
                        let dzr = &dz[row * out_dim..(row + 1) * out_dim];
                        let dpr = &mut dprev[row * in_dim..(row + 1) * in_dim];
                        for o in 0..out_dim {
                            let wrow = &w[o * in_dim..(o + 1) * in_dim];
                            for i in 0..in_dim {
                                dpr[i] += dzr[o] * wrow[i];
                            }
                        }
                    }
                    da = dprev;
                } else {
                    break;
                }
            }
        }

        Ok(GradStore {
            tensors: grads,
            head: Some((exit, dhead)),
            loss,
        })
    }

    /// Mean cross-entropy of the batch at an arbitrary exit head. Exposed
    /// for numerical checks against the analytic gradients.
    pub fn evaluate_loss_at_exit(&self, batch: &Batch, exit_block: usize) -> Result<f64> {
        let cache = self.forward_to_exit(batch, exit_block)?;
        let classes = self.shape.num_classes;
        let mut loss = 0.0;
        for row in 0..batch.batch_size {
            let lr = &cache.logits[row * classes..(row + 1) * classes];
            let max = lr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for &v in lr {
                denom += (v - max).exp();
            }
            loss += denom.ln() + max - lr[cache.labels[row]];
        }
        Ok(loss / batch.batch_size as f64)
    }

    /// Mean cross-entropy and accuracy of the full model (exit at the last
    /// block) on a batch.
    pub fn evaluate(&self, batch: &Batch) -> Result<(f64, f64)> {
        let cache = self.forward_to_exit(batch, self.num_blocks() - 1)?;
        let classes = self.shape.num_classes;
        let mut loss = 0.0;
        let mut correct = 0usize;
        for row in 0..batch.batch_size {
            let lr = &cache.logits[row * classes..(row + 1) * classes];
            let max = lr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for &v in lr {
                denom += (v - max).exp();
            }
            let label = cache.labels[row];
            loss += denom.ln() + max - lr[label];
            let pred = lr
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(c, _)| c)
                .unwrap();
            if pred == label {
                correct += 1;
            }
        }
        Ok((
            loss / batch.batch_size as f64,
            correct as f64 / batch.batch_size as f64,
        ))
    }
}

/// One SGD step: selected tensors move by `-lr * grad`; unselected tensors
/// are bit-identical to their input. The active head, when present in the
/// gradients, is always updated.
pub fn sgd_step(
    store: &mut ParameterStore,
    grads: &GradStore,
    lr: f64,
    mask: &SelectionMask,
) -> Result<()> {
    if lr < 0.0 || !lr.is_finite() {
        return Err(Error::contract(format!("learning rate {lr} must be >= 0")));
    }
    for (id, grad) in grads.tensors.iter().enumerate() {
        if let Some(grad) = grad {
            if mask.is_selected(id) {
                for (w, g) in store.tensors[id].iter_mut().zip(grad.iter()) {
                    *w -= lr * g;
                }
            }
        }
    }
    if let Some((block_id, grad)) = &grads.head {
        for (w, g) in store.heads[*block_id].iter_mut().zip(grad.iter()) {
            *w -= lr * g;
        }
    }
    Ok(())
}
