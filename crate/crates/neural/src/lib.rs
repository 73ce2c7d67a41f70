//! Network construction and training on synthetic line data: fixed
//! architectures for path scoring and a weight-sharing supernet for
//! operation search.

pub mod backbone;
pub mod data;
pub mod error;
pub mod fixed;
pub mod opsearch;
pub mod supernet;
pub mod train;

pub use backbone::{op_prefix, Backbone};
pub use data::{batch_indices, make_batch, Batch};
pub use error::{NeuralError, Result};
pub use fixed::{build_fixed, FixedNet, Tape};
pub use opsearch::{
    alternating_search, arch_objective, default_budget, discretize, warmup, AlphaMode,
    HistoryRecord, OpSearchConfig,
};
pub use supernet::{
    sample_index, softmax, softmax_backward, uniform_choices, ArchParams, Mode, SuperNet, SuperTape,
};
pub use train::{
    evaluate_fixed, train_fixed, EpochRecord, EvalReport, Metrics, MetricsAcc, TrainConfig,
};
