//! Datasets for the simulator: a synthetic Gaussian-mixture classification
//! task and a loader for small CSV files.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::Batch;

/// In-memory dataset: row-major features with integer class labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub dims: usize,
    pub num_classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Assembles a batch from dataset row indices.
    pub fn batch_of(&self, indices: &[usize]) -> Result<Batch> {
        let mut inputs = Vec::with_capacity(indices.len() * self.dims);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::contract(format!(
                    "row {i} out of range for dataset of {}",
                    self.len()
                )));
            }
            inputs.extend_from_slice(&self.features[i * self.dims..(i + 1) * self.dims]);
            labels.push(self.labels[i]);
        }
        Batch::new(inputs, labels, self.dims)
    }

    /// Synthetic Gaussian mixture: class means drawn from
    /// `mean_scale * N(0, I)`, samples from `mean + noise_sigma * N(0, I)`,
    /// class counts as balanced as `samples` allows.
    pub fn gaussian_mixture(
        classes: usize,
        dims: usize,
        samples: usize,
        noise_sigma: f64,
        mean_scale: f64,
        seed: u64,
    ) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = Normal::new(0.0, 1.0).unwrap();
        let means: Vec<f64> = (0..classes * dims)
            .map(|_| mean_scale * unit.sample(&mut rng))
            .collect();

        let mut features = Vec::with_capacity(samples * dims);
        let mut labels = Vec::with_capacity(samples);
        for i in 0..samples {
            let class = i % classes;
            labels.push(class);
            for d in 0..dims {
                features.push(means[class * dims + d] + noise_sigma * unit.sample(&mut rng));
            }
        }
        Dataset {
            features,
            labels,
            dims,
            num_classes: classes,
        }
    }

    /// Loads a small CSV: numeric feature columns with the final column as
    /// the integer class label. A non-numeric first row is treated as a
    /// header and skipped.
    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Dataset> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(false)
            .from_path(path.as_ref())?;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut dims = None;
        for (row_idx, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() < 2 {
                return Err(Error::config(format!(
                    "csv row {row_idx} has {} columns; need features plus a label",
                    record.len()
                )));
            }
            let parsed: std::result::Result<Vec<f64>, _> =
                record.iter().map(|f| f.trim().parse::<f64>()).collect();
            let values = match parsed {
                Ok(v) => v,
                Err(_) if row_idx == 0 => continue, // header row
                Err(e) => {
                    return Err(Error::config(format!("csv row {row_idx}: {e}")));
                }
            };
            let d = values.len() - 1;
            match dims {
                None => dims = Some(d),
                Some(expected) if expected != d => {
                    return Err(Error::config(format!(
                        "csv row {row_idx} has {d} feature columns, expected {expected}"
                    )));
                }
                _ => {}
            }
            let label = values[d];
            if label < 0.0 || label.fract() != 0.0 {
                return Err(Error::config(format!(
                    "csv row {row_idx}: label {label} is not a nonnegative integer"
                )));
            }
            labels.push(label as usize);
            features.extend_from_slice(&values[..d]);
        }
        let dims = dims.ok_or_else(|| Error::config("csv contained no data rows"))?;
        let num_classes = labels.iter().copied().max().unwrap_or(0) + 1;
        Ok(Dataset {
            features,
            labels,
            dims,
            num_classes,
        })
    }

    /// Seeded shuffle split into (train, eval) row indices.
    pub fn split_eval(&self, eval_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
        let mut indices: Vec<usize> = (0..self.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        indices.shuffle(&mut rng);
        let eval_len = (self.len() as f64 * eval_fraction).round() as usize;
        let eval_len = eval_len.min(self.len().saturating_sub(1));
        let eval = indices[..eval_len].to_vec();
        let mut train = indices[eval_len..].to_vec();
        train.sort_unstable();
        (train, eval)
    }
}
