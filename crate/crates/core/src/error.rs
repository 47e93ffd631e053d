use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{context}: {message}")]
    Validation { context: String, message: String },

    #[error("example id {id} out of range [1, {n}]")]
    IdOutOfRange { id: u64, n: usize },

    #[error("no usable (L_{{t-1}}, L_t) pairs for test example {test_id}")]
    EmptyProblem { test_id: u32 },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("training example {train_id} never observed with recorded losses")]
    NoData { train_id: u32 },

    #[error("training example {train_id}: {reason}")]
    Underdetermined { train_id: u32, reason: String },

    #[error("batch size {size} at step {step} is unsupported; this method requires batch size 1")]
    UnsupportedBatchSize { step: usize, size: usize },

    #[error("run {run_id}: test example {test_id} has no recorded loss at step {step}")]
    MissingLoss { run_id: String, test_id: u32, step: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("checkpoint at step {step}: missing gradient for {example}")]
    MissingGradient { step: usize, example: String },

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("rescale factor undefined: predicted trajectory is identically zero")]
    UndefinedScale,

    #[error("edit #{index} ({edit}): {message}")]
    Edit { index: usize, edit: String, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("training diverged at step {step} (last finite step {last_good})")]
    Diverged { step: usize, last_good: usize },

    #[error("{0}")]
    Construction(String),

    #[error("empty comparison set")]
    EmptyComparison,

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("every λ in the grid failed to produce a usable fit")]
    NoUsableLambda,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation { context: context.into(), message: message.into() }
    }

    /// True for errors caused by the content of the input (as opposed to I/O).
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}
