//! Error type shared by every module in the crate.

use alloc::string::String;
use core::fmt;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, CoreError>;

/// Errors raised by model construction, training, and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// An input tensor contained NaN or infinity.
    NonFiniteInput,
    /// A Gaussian variance was zero or negative.
    InvalidVariance,
    /// The computation tape was asked to differentiate something it cannot.
    InvalidTape(&'static str),
    /// Tensor shapes do not line up for the requested operation.
    ShapeMismatch(String),
    /// A noise schedule violated its invariants.
    InvalidSchedule(String),
    /// Forward conditional with zero variance (identical schedule times).
    DegenerateConditional,
    /// Training loss exceeded the divergence guard.
    TrainingDiverged,
    /// A flow produced a non-finite intermediate value.
    FlowOverflow,
    /// Flow training was requested before the autoencoders were trained.
    AutoencodersUntrained,
    /// A model must be trained before this operation.
    Untrained,
    /// Mixture enumeration would exceed the component budget.
    GridTooLarge,
    /// Catch-all for invalid arguments; the message names the parameter.
    InvalidArgument(String),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::NonFiniteInput => write!(f, "non-finite input"),
            CoreError::InvalidVariance => write!(f, "invalid variance"),
            CoreError::InvalidTape(what) => write!(f, "invalid tape: {what}"),
            CoreError::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            CoreError::InvalidSchedule(msg) => write!(f, "invalid schedule: {msg}"),
            CoreError::DegenerateConditional => write!(f, "degenerate conditional"),
            CoreError::TrainingDiverged => write!(f, "training diverged"),
            CoreError::FlowOverflow => write!(f, "flow overflow"),
            CoreError::AutoencodersUntrained => write!(f, "autoencoders untrained"),
            CoreError::Untrained => write!(f, "model untrained"),
            CoreError::GridTooLarge => write!(f, "grid too large"),
            CoreError::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
        }
    }
}
