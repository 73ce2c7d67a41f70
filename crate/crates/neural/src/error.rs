use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error(transparent)]
    Core(#[from] seqnas_core::Error),

    #[error(transparent)]
    Tensor(#[from] seqnas_tensor::TensorError),

    #[error("training diverged in epoch {epoch} ({phase}): non-finite loss")]
    Divergence { epoch: usize, phase: &'static str },

    #[error(
        "no legal architecture fits the budget of {budget} MACs (cheapest reachable: {cheapest})"
    )]
    Infeasible { budget: u64, cheapest: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, NeuralError>;
