//! Search space, cost model, surrogate scorer and synthetic data for
//! stride-path-constrained backbone search.
//!
//! A backbone is a stack of `L` layers. Each layer has a stride step
//! (`A` = (2,2), `B` = (2,1), `N` = (1,1)) and an operation from a small
//! vocabulary of inverted-bottleneck convolutions plus skip-connect. The
//! strides must map an `H x W` input onto exactly `c1 x c2`.

pub mod archtext;
pub mod cost;
pub mod error;
pub mod kv;
pub mod space;
pub mod surrogate;
pub mod synth;

pub use archtext::{parse_arch, serialize_arch};
pub use cost::{
    arch_cost, expected_flops, flops_table, op_cost, regularizer, regularizer_from_flops,
    regularizer_grad, CostReport, LayerCost, RegularizerConfig,
};
pub use error::{Error, Result};
pub use kv::KvFile;
pub use space::{
    check_constraint, count_space, enumerate_paths, layer_geometry, legal_choices, shape_trace,
    typical_paths, Architecture, LayerGeom, OpFamily, OperationSpec, SpaceCount, SpaceSpec,
    StridePath, StrideStep, SPACE_KEYS,
};
pub use surrogate::{surrogate_score, surrogate_train_curve, SurrogateSpec};
pub use synth::{gen_dataset, Dataset, GlyphSet, SeqSample, SynthConfig};
