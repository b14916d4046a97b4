//! Federated orchestration: configuration, datasets, non-iid partitioning,
//! per-client rounds, masked aggregation, and run records.

mod aggregate;
mod config;
mod data;
mod partition;
mod record;
mod run;
pub mod seeds;

pub use aggregate::{aggregate, ClientUpdate};
pub use config::{
    ClientConfig, DatasetConfig, RunConfig, SweepConfig, TThSpec, TimingConfig, Variant,
};
pub use data::Dataset;
pub use partition::dirichlet_partition;
pub use record::{
    checksum, read_jsonl, write_jsonl, write_metrics_csv, ClientRoundRecord, RoundRecord,
};
pub use run::{build_dataset, run_training, Trainer};
