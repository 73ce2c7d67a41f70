use thiserror::Error;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Core(#[from] seqnas_core::Error),

    #[error(transparent)]
    Neural(#[from] seqnas_neural::NeuralError),

    #[error(transparent)]
    Tensor(#[from] seqnas_tensor::TensorError),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no legal architecture fits the budget of {budget} MACs (cheapest: {cheapest})")]
    Infeasible { budget: u64, cheapest: u64 },

    #[error("candidate {index} ({path}) failed: {source}")]
    Candidate {
        index: usize,
        path: String,
        #[source]
        source: Box<SearchError>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl SearchError {
    /// Process exit code: 2 configuration or space, 3 budget infeasible,
    /// 4 training divergence, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        use seqnas_core::Error as C;
        use seqnas_neural::NeuralError as N;
        match self {
            SearchError::Config(_) => 2,
            SearchError::Core(e) | SearchError::Neural(N::Core(e)) => match e {
                C::Io(_) => 1,
                _ => 2,
            },
            SearchError::Neural(N::Config(_)) => 2,
            SearchError::Infeasible { .. } | SearchError::Neural(N::Infeasible { .. }) => 3,
            SearchError::Neural(N::Divergence { .. }) => 4,
            SearchError::Candidate { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, SearchError>;
