//! Per-tensor timing profiles: gradient-pass time, weight-update time, and
//! per-block forward time, synthesized proportionally to parameter counts
//! and scaled per device. Stands in for on-device measurement; relative
//! ordering and additivity are what the rest of the pipeline consumes.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ChainModel;
use crate::window::BlockPartition;

/// Simulated device class: a positive multiplier on every time entry.
/// Smaller factors are faster devices; 1.0 is the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub speed_factor: f64,
}

impl DeviceProfile {
    pub fn new(speed_factor: f64) -> Result<DeviceProfile> {
        if !(speed_factor > 0.0 && speed_factor.is_finite()) {
            return Err(Error::config(format!(
                "speed factor must be positive and finite, got {speed_factor}"
            )));
        }
        Ok(DeviceProfile { speed_factor })
    }
}

/// Offline timing profile for one device.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorTiming {
    /// Gradient-pass seconds per tensor.
    pub t_g: Vec<f64>,
    /// Weight-update seconds per tensor.
    pub t_w: Vec<f64>,
    /// Forward seconds per block.
    pub t_fw_block: Vec<f64>,
    /// Forward seconds of each block's exit head.
    pub t_fw_head: Vec<f64>,
}

/// Knobs for synthetic profile generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingSynthesis {
    /// Baseline seconds per parameter at speed factor 1.0.
    pub per_param_seconds: f64,
    /// Uniform jitter amplitude applied once at synthesis (0.05 = +/-5%).
    pub jitter_frac: f64,
    /// Ratio of gradient-pass time to weight-update time per parameter.
    pub grad_update_ratio: f64,
}

impl Default for TimingSynthesis {
    fn default() -> Self {
        TimingSynthesis {
            per_param_seconds: 1e-6,
            jitter_frac: 0.05,
            grad_update_ratio: 1.0,
        }
    }
}

impl TimingSynthesis {
    /// Synthesizes a device profile. Jitter is drawn from `seed` before the
    /// speed factor applies, so the same seed at different speeds yields
    /// exactly proportional profiles.
    pub fn synthesize(
        &self,
        model: &ChainModel,
        device: DeviceProfile,
        seed: u64,
    ) -> TensorTiming {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let jitter = |rng: &mut ChaCha8Rng| {
            if self.jitter_frac > 0.0 {
                1.0 + rng.random_range(-self.jitter_frac..self.jitter_frac)
            } else {
                1.0
            }
        };
        let f = device.speed_factor;
        let mut t_g = Vec::with_capacity(model.num_tensors());
        let mut t_w = Vec::with_capacity(model.num_tensors());
        for spec in model.specs() {
            let base = self.per_param_seconds * spec.param_count as f64;
            t_g.push(base * self.grad_update_ratio * jitter(&mut rng) * f);
            t_w.push(base * jitter(&mut rng) * f);
        }
        let mut t_fw_block = Vec::with_capacity(model.num_blocks());
        let mut t_fw_head = Vec::with_capacity(model.num_blocks());
        for block in 0..model.num_blocks() {
            let base = self.per_param_seconds * model.block_param_count(block) as f64;
            t_fw_block.push(base * jitter(&mut rng) * f);
        }
        for block in 0..model.num_blocks() {
            let base = self.per_param_seconds * model.head_param_count(block) as f64;
            t_fw_head.push(base * jitter(&mut rng) * f);
        }
        TensorTiming {
            t_g,
            t_w,
            t_fw_block,
            t_fw_head,
        }
    }
}

impl TensorTiming {
    pub fn num_tensors(&self) -> usize {
        self.t_g.len()
    }

    /// Rescales every entry; used to derive device-class profiles from a
    /// shared baseline.
    pub fn scaled(&self, factor: f64) -> TensorTiming {
        let scale = |v: &Vec<f64>| v.iter().map(|t| t * factor).collect();
        TensorTiming {
            t_g: scale(&self.t_g),
            t_w: scale(&self.t_w),
            t_fw_block: scale(&self.t_fw_block),
            t_fw_head: scale(&self.t_fw_head),
        }
    }

    /// Forward seconds for a pass through blocks `0..=exit_block` plus that
    /// block's head.
    pub fn forward_seconds(&self, exit_block: usize) -> f64 {
        self.t_fw_block[..=exit_block].iter().sum::<f64>() + self.t_fw_head[exit_block]
    }

    /// Seconds for one full-model training iteration: forward through every
    /// block and the final head, plus an unmasked backward pass.
    pub fn full_iteration_seconds(&self) -> f64 {
        let fwd = self.forward_seconds(self.t_fw_block.len() - 1);
        let upd: f64 = self.t_w.iter().sum();
        let grad: f64 = self.t_g.iter().skip(1).sum();
        fwd + upd + grad
    }

    pub fn validate(&self, partition: &BlockPartition) -> Result<()> {
        if self.t_g.len() != self.t_w.len() || self.t_g.len() != partition.num_tensors() {
            return Err(Error::config(format!(
                "timing covers {} tensors, partition has {}",
                self.t_g.len(),
                partition.num_tensors()
            )));
        }
        if self.t_fw_block.len() != partition.num_blocks()
            || self.t_fw_head.len() != partition.num_blocks()
        {
            return Err(Error::config(format!(
                "timing covers {} blocks, partition has {}",
                self.t_fw_block.len(),
                partition.num_blocks()
            )));
        }
        let ok = |v: &[f64]| v.iter().all(|t| t.is_finite() && *t >= 0.0);
        if !(ok(&self.t_g) && ok(&self.t_w) && ok(&self.t_fw_block) && ok(&self.t_fw_head)) {
            return Err(Error::config(
                "timing entries must be finite and nonnegative",
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ProfileDoc {
            tensors: self
                .t_g
                .iter()
                .zip(&self.t_w)
                .enumerate()
                .map(|(id, (&t_g, &t_w))| TensorEntry { id, t_g, t_w })
                .collect(),
            blocks: self
                .t_fw_block
                .iter()
                .zip(&self.t_fw_head)
                .enumerate()
                .map(|(id, (&t_fw, &t_fw_head))| BlockEntry {
                    id,
                    t_fw,
                    t_fw_head,
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<TensorTiming> {
        let doc: ProfileDoc = serde_json::from_str(text)?;
        for (i, entry) in doc.tensors.iter().enumerate() {
            if entry.id != i {
                return Err(Error::config(format!(
                    "tensor ids must be contiguous from 0, found {} at position {i}",
                    entry.id
                )));
            }
        }
        for (i, entry) in doc.blocks.iter().enumerate() {
            if entry.id != i {
                return Err(Error::config(format!(
                    "block ids must be contiguous from 0, found {} at position {i}",
                    entry.id
                )));
            }
        }
        let timing = TensorTiming {
            t_g: doc.tensors.iter().map(|t| t.t_g).collect(),
            t_w: doc.tensors.iter().map(|t| t.t_w).collect(),
            t_fw_block: doc.blocks.iter().map(|b| b.t_fw).collect(),
            t_fw_head: doc.blocks.iter().map(|b| b.t_fw_head).collect(),
        };
        let ok = |v: &[f64]| v.iter().all(|t| t.is_finite() && *t >= 0.0);
        if !(ok(&timing.t_g) && ok(&timing.t_w) && ok(&timing.t_fw_block) && ok(&timing.t_fw_head))
        {
            return Err(Error::config(
                "timing entries must be finite and nonnegative",
            ));
        }
        Ok(timing)
    }
}

#[derive(Serialize, Deserialize)]
struct ProfileDoc {
    tensors: Vec<TensorEntry>,
    blocks: Vec<BlockEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    id: usize,
    t_g: f64,
    t_w: f64,
}

#[derive(Serialize, Deserialize)]
struct BlockEntry {
    id: usize,
    t_fw: f64,
    #[serde(default)]
    t_fw_head: f64,
}

/// Per-block training time: the sum of gradient-pass and weight-update
/// times over the block's tensors.
pub fn block_times(timing: &TensorTiming, partition: &BlockPartition) -> Result<Vec<f64>> {
    timing.validate(partition)?;
    let mut out = Vec::with_capacity(partition.num_blocks());
    for block in 0..partition.num_blocks() {
        let (first, last) = partition.range(block);
        out.push((first..=last).map(|k| timing.t_g[k] + timing.t_w[k]).sum());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ChainModel, ModelShape};

    fn model() -> ChainModel {
        ChainModel::build(ModelShape {
            input_dim: 4,
            num_classes: 3,
            block_widths: vec![5, 4, 3],
            bias: true,
        })
        .unwrap()
    }

    #[test]
    fn half_speed_factor_halves_every_entry() {
        let model = model();
        let synth = TimingSynthesis::default();
        let base = synth.synthesize(&model, DeviceProfile::new(1.0).unwrap(), 99);
        let half = synth.synthesize(&model, DeviceProfile::new(0.5).unwrap(), 99);
        for (a, b) in base.t_g.iter().zip(&half.t_g) {
            assert_eq!(*b, *a * 0.5);
        }
        for (a, b) in base.t_w.iter().zip(&half.t_w) {
            assert_eq!(*b, *a * 0.5);
        }
        for (a, b) in base.t_fw_block.iter().zip(&half.t_fw_block) {
            assert_eq!(*b, *a * 0.5);
        }
        for (a, b) in base.t_fw_head.iter().zip(&half.t_fw_head) {
            assert_eq!(*b, *a * 0.5);
        }
    }

    #[test]
    fn same_seed_is_deterministic() {
        let model = model();
        let synth = TimingSynthesis::default();
        let a = synth.synthesize(&model, DeviceProfile::new(1.0).unwrap(), 7);
        let b = synth.synthesize(&model, DeviceProfile::new(1.0).unwrap(), 7);
        assert_eq!(a, b);
    }

    #[test]
    fn update_times_proportional_to_param_count_without_jitter() {
        // Two weight tensors of 100 and 200 parameters: t_w ratio 1:2.
        let model = ChainModel::build(ModelShape {
            input_dim: 10,
            num_classes: 2,
            block_widths: vec![10, 20],
            bias: false,
        })
        .unwrap();
        let synth = TimingSynthesis {
            jitter_frac: 0.0,
            ..TimingSynthesis::default()
        };
        let timing = synth.synthesize(&model, DeviceProfile::new(1.0).unwrap(), 0);
        assert_eq!(timing.t_w[1], timing.t_w[0] * 2.0);
        assert_eq!(timing.t_g[1], timing.t_g[0] * 2.0);
    }

    #[test]
    fn block_times_sum_tensor_times() {
        let partition = BlockPartition::new(vec![(0, 1), (2, 2)]).unwrap();
        let timing = TensorTiming {
            t_g: vec![1.0, 3.0, 0.5],
            t_w: vec![2.0, 4.0, 0.25],
            t_fw_block: vec![0.0, 0.0],
            t_fw_head: vec![0.0, 0.0],
        };
        let bt = block_times(&timing, &partition).unwrap();
        assert_eq!(bt, vec![10.0, 0.75]);
    }

    #[test]
    fn five_tensor_two_block_hand_sum() {
        // t_g 1..5, t_w 6..10, blocks {0,1} and {2,3,4}:
        // T0 = (1+6)+(2+7) = 16, T1 = (3+8)+(4+9)+(5+10) = 39.
        let partition = BlockPartition::new(vec![(0, 1), (2, 4)]).unwrap();
        let timing = TensorTiming {
            t_g: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            t_w: vec![6.0, 7.0, 8.0, 9.0, 10.0],
            t_fw_block: vec![0.0, 0.0],
            t_fw_head: vec![0.0, 0.0],
        };
        let bt = block_times(&timing, &partition).unwrap();
        assert_eq!(bt, vec![16.0, 39.0]);
    }

    #[test]
    fn block_totals_conserve_tensor_totals() {
        let model = model();
        let synth = TimingSynthesis::default();
        let timing = synth.synthesize(&model, DeviceProfile::new(1.0).unwrap(), 3);
        let bt = block_times(&timing, model.partition()).unwrap();
        let from_blocks: f64 = bt.iter().sum();
        let from_tensors: f64 = timing
            .t_g
            .iter()
            .zip(&timing.t_w)
            .map(|(g, w)| g + w)
            .sum();
        assert!((from_blocks - from_tensors).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let model = model();
        let timing = TimingSynthesis::default().synthesize(
            &model,
            DeviceProfile::new(1.0).unwrap(),
            13,
        );
        let json = timing.to_json().unwrap();
        let back = TensorTiming::from_json(&json).unwrap();
        assert_eq!(timing, back);
    }

    #[test]
    fn json_without_head_times_loads() {
        let text = r#"{"tensors":[{"id":0,"t_g":0.5,"t_w":1.5}],"blocks":[{"id":0,"t_fw":0.25}]}"#;
        let timing = TensorTiming::from_json(text).unwrap();
        assert_eq!(timing.t_fw_head, vec![0.0]);
        assert_eq!(timing.t_g, vec![0.5]);
    }
}
