//! Two-step search over downsampling paths and per-layer operations, the
//! random-search baseline, run configuration, and artifact output.
//!
//! Step 1 scores candidate paths with every layer fixed to a 3x3 residual
//! conv. Step 2 searches operations on the winning path: a supernet with
//! relaxed architecture parameters on the neural backend, coordinate ascent
//! with restarts on the surrogate backend. Both minimize
//! `r(cost) * loss` under a MAC budget.

pub mod config;
pub mod engine;
pub mod error;
pub mod run;

pub use config::{known_keys, Auto, Backend, DataConfig, RunConfig, SearchRun, SurrogateConfig};
pub use engine::{
    sub_seed, AscentRecord, CandidateRow, Engine, SearchResult, Step1Outcome, Step2History,
    Step2Outcome, SurrogateEval,
};
pub use error::{Result, SearchError};
pub use run::{execute, parse_path, PathResult, RunMode, RunOutput};
