//! Deterministic simulator and library for federated elastic learning on
//! heterogeneous devices: sliding-window partial training, budgeted tensor
//! selection under chained backward costs, tensor-importance adjustment,
//! masked aggregation, and the convergence-bias diagnostics that go with
//! them.

pub mod diagnostics;
pub mod error;
pub mod federation;
pub mod importance;
pub mod model;
pub mod select;
pub mod timing;
pub mod window;

pub use error::{Error, Result};
pub use model::{Batch, ChainModel, ModelShape, ParameterStore, TensorSpec};
pub use select::{ImportanceVector, Selection, SelectionMask};
pub use timing::{DeviceProfile, TensorTiming, TimingSynthesis};
pub use window::{BlockPartition, SlideVariant, Window};
