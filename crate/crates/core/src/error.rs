use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node index {node} out of range for a graph with {num_nodes} nodes")]
    InvalidNode { node: usize, num_nodes: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid perturbation spec: {0}")]
    InvalidSpec(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("perturbation is not admissible: {0}")]
    InadmissiblePerturbation(String),

    #[error("missing bounds for {0}")]
    MissingBounds(String),

    #[error("invalid solver configuration: {0}")]
    SolverConfig(String),

    #[error("variable {0} redeclared with different bounds or domain")]
    BoundConflict(String),

    #[error("enumeration guard exceeded: {0}")]
    GuardExceeded(String),

    #[error("witness failed validation: {0}")]
    WitnessValidation(String),

    #[error("{0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by bad user input, as opposed to internal failures.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidNode { .. }
                | Error::InvalidGraph(_)
                | Error::InvalidSpec(_)
                | Error::InvalidModel(_)
                | Error::Shape(_)
                | Error::SolverConfig(_)
                | Error::GuardExceeded(_)
                | Error::Unsupported(_)
                | Error::Io(_)
                | Error::Json(_)
        )
    }
}
