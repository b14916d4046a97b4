//! Run configuration: the JSON document the CLI loads, mirrored field for
//! field, plus the per-client view derived from it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelShape;
use crate::timing::DeviceProfile;

/// Training variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Variant {
    #[default]
    #[serde(rename = "fedel", alias = "FedEL")]
    FedEl,
    #[serde(rename = "fedel-c", alias = "FedEL-C")]
    FedElC,
    #[serde(
        rename = "elastic-trainer-only",
        alias = "ElasticTrainer-only",
        alias = "elastictrainer-only"
    )]
    ElasticTrainerOnly,
    #[serde(rename = "fedavg-full", alias = "FedAvg-full")]
    FedAvgFull,
}

impl Variant {
    pub fn parse(text: &str) -> Result<Variant> {
        serde_json::from_value(serde_json::Value::String(text.to_string()))
            .map_err(|_| Error::config(format!("unknown variant '{text}'")))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::FedEl => "fedel",
            Variant::FedElC => "fedel-c",
            Variant::ElasticTrainerOnly => "elastic-trainer-only",
            Variant::FedAvgFull => "fedavg-full",
        }
    }
}

/// Runtime threshold: explicit seconds, or derived from the fastest
/// device's full-model iteration time at run start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TThSpec {
    Seconds(f64),
    FastestFull,
}

impl Serialize for TThSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TThSpec::Seconds(v) => s.serialize_f64(*v),
            TThSpec::FastestFull => s.serialize_str("fastest-full"),
        }
    }
}

impl<'de> Deserialize<'de> for TThSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl serde::de::Visitor<'_> for V {
            type Value = TThSpec;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a number of seconds or the string \"fastest-full\"")
            }

            fn visit_f64<E: serde::de::Error>(self, v: f64) -> std::result::Result<TThSpec, E> {
                Ok(TThSpec::Seconds(v))
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> std::result::Result<TThSpec, E> {
                Ok(TThSpec::Seconds(v as f64))
            }

            fn visit_i64<E: serde::de::Error>(self, v: i64) -> std::result::Result<TThSpec, E> {
                Ok(TThSpec::Seconds(v as f64))
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> std::result::Result<TThSpec, E> {
                if v == "fastest-full" {
                    Ok(TThSpec::FastestFull)
                } else {
                    Err(E::custom(format!(
                        "t_th must be seconds or \"fastest-full\", got \"{v}\""
                    )))
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// Dataset source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum DatasetConfig {
    /// Built-in synthetic Gaussian-mixture classification task.
    Gaussian {
        classes: usize,
        dims: usize,
        samples: usize,
        #[serde(default = "default_noise")]
        noise_sigma: f64,
        #[serde(default = "default_mean_scale")]
        mean_scale: f64,
    },
    /// Small external CSV: numeric feature columns, final column holds the
    /// integer class label.
    Csv { path: String },
}

fn default_noise() -> f64 {
    0.6
}

fn default_mean_scale() -> f64 {
    1.0
}

/// Timing profile source and synthesis knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingConfig {
    #[serde(default = "default_per_param")]
    pub per_param_seconds: f64,
    #[serde(default = "default_jitter")]
    pub jitter_frac: f64,
    #[serde(default = "default_ratio")]
    pub grad_update_ratio: f64,
    /// Replay an externally measured baseline profile instead of
    /// synthesizing one; per-client speed factors still apply.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile_path: Option<String>,
}

fn default_per_param() -> f64 {
    1e-6
}

fn default_jitter() -> f64 {
    0.05
}

fn default_ratio() -> f64 {
    1.0
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            per_param_seconds: default_per_param(),
            jitter_frac: default_jitter(),
            grad_update_ratio: default_ratio(),
            profile_path: None,
        }
    }
}

/// Sweep axes for the ablate command; values live alongside the base
/// configuration they perturb.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_th: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<Vec<Variant>>,
}

/// Full experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Per-iteration runtime threshold shared by all clients.
    pub t_th: TThSpec,
    #[serde(default = "default_beta")]
    pub beta: f64,
    pub rounds: usize,
    pub num_clients: usize,
    #[serde(default = "default_alpha")]
    pub dirichlet_alpha: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub variant: Variant,
    #[serde(default = "default_true")]
    pub normalize_importance: bool,
    #[serde(default = "default_true")]
    pub aggregate_heads: bool,
    #[serde(default = "default_true")]
    pub rollback: bool,
    #[serde(default = "default_lr")]
    pub lr: f64,
    /// Per-round multiplicative decay of the learning rate (eta(t) =
    /// lr * lr_decay^t); 1.0 keeps it constant.
    #[serde(default = "default_lr_decay")]
    pub lr_decay: f64,
    /// Local SGD iterations per round (tau).
    #[serde(default = "default_local_iters")]
    pub local_iters: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Speed factor per client; cycled when shorter than `num_clients`.
    #[serde(default = "default_speed_factors")]
    pub device_speed_factors: Vec<f64>,
    pub model: ModelShape,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub timing: TimingConfig,
    #[serde(default = "default_eval_fraction")]
    pub eval_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

fn default_beta() -> f64 {
    0.6
}

fn default_alpha() -> f64 {
    0.1
}

fn default_true() -> bool {
    true
}

fn default_lr() -> f64 {
    0.05
}

fn default_lr_decay() -> f64 {
    1.0
}

fn default_local_iters() -> usize {
    5
}

fn default_batch_size() -> usize {
    32
}

fn default_speed_factors() -> Vec<f64> {
    vec![1.0]
}

fn default_eval_fraction() -> f64 {
    0.2
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if let TThSpec::Seconds(s) = self.t_th {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::config(format!("t_th must be positive, got {s}")));
            }
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::config(format!("beta {} must be in [0, 1]", self.beta)));
        }
        if self.num_clients == 0 {
            return Err(Error::config("num_clients must be positive"));
        }
        if !(self.dirichlet_alpha > 0.0) {
            return Err(Error::config("dirichlet_alpha must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::config(format!(
                "lr_decay {} must be in (0, 1]",
                self.lr_decay
            )));
        }
        if self.local_iters == 0 {
            return Err(Error::config("local_iters must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if self.device_speed_factors.is_empty() {
            return Err(Error::config("device_speed_factors must not be empty"));
        }
        for &f in &self.device_speed_factors {
            DeviceProfile::new(f)?;
        }
        if !(0.0..1.0).contains(&self.eval_fraction) {
            return Err(Error::config(format!(
                "eval_fraction {} must be in [0, 1)",
                self.eval_fraction
            )));
        }
        if let DatasetConfig::Gaussian { classes, dims, samples, .. } = &self.dataset {
            if *classes < 2 || *dims == 0 || *samples == 0 {
                return Err(Error::config(
                    "gaussian dataset needs >= 2 classes and positive dims/samples",
                ));
            }
            if *dims != self.model.input_dim {
                return Err(Error::config(format!(
                    "dataset dims {} do not match model input_dim {}",
                    dims, self.model.input_dim
                )));
            }
            if *classes != self.model.num_classes {
                return Err(Error::config(format!(
                    "dataset classes {} do not match model num_classes {}",
                    classes, self.model.num_classes
                )));
            }
        }
        Ok(())
    }

    /// The device profile assigned to a client (factors cycle).
    pub fn device_for(&self, client_id: usize) -> DeviceProfile {
        let f = self.device_speed_factors[client_id % self.device_speed_factors.len()];
        DeviceProfile { speed_factor: f }
    }
}

/// Per-client view of the run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClientConfig {
    pub client_id: usize,
    pub device: DeviceProfile,
    pub lr: f64,
    pub local_iters: usize,
    pub data_indices: Vec<usize>,
}
