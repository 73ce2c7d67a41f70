//! Dense NCHW kernels with hand-written backward passes, the candidate-op
//! blocks of the search space, and an ADADELTA optimizer.
//!
//! Storage is generic over [`Real`] (f32 in training, f64 for gradient
//! checks); every reduction accumulates in f64.

pub mod activation;
pub mod blocks;
pub mod conv;
pub mod error;
pub mod loss;
pub mod optim;
pub mod store;
pub mod tensor;
pub mod testutil;

pub use activation::{relu6_backward, relu6_forward};
pub use blocks::{init_op, op_backward, op_forward, op_param_specs, OpCache, ParamSpec};
pub use conv::{bias_backward, bias_forward, conv2d_backward, conv2d_forward};
pub use error::{Result, TensorError};
pub use loss::{frame_predictions, frame_softmax_ce};
pub use optim::{adadelta_scalar, adadelta_step, AdadeltaConfig};
pub use store::{Param, ParamStore};
pub use tensor::{Real, Tensor4};
