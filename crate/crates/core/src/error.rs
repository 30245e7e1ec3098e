use alloc::string::String;
use core::fmt;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two operands do not agree in shape. The payload describes the mismatch.
    ShapeMismatch(String),
    /// An argument violates a documented precondition.
    InvalidArgument(String),
    /// A step index lies outside the schedule range.
    StepOutOfRange { t: usize, max: usize },
    /// A non-finite value was produced; `context` names the computation.
    NonFinite { context: &'static str, step: usize },
    /// An iterative solver stopped at `max_iters` above its tolerance.
    DidNotConverge { iters: usize, residual: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch(what) => write!(f, "shape mismatch: {what}"),
            Error::InvalidArgument(what) => write!(f, "invalid argument: {what}"),
            Error::StepOutOfRange { t, max } => {
                write!(f, "step index {t} out of range (schedule has {max} steps)")
            }
            Error::NonFinite { context, step } => {
                write!(f, "non-finite value in {context} at step {step}")
            }
            Error::DidNotConverge { iters, residual } => {
                write!(f, "no convergence after {iters} iterations (residual {residual:.3e})")
            }
        }
    }
}

impl core::error::Error for Error {}

/// Shorthand for `Error::ShapeMismatch` with formatted context.
macro_rules! shape_err {
    ($($arg:tt)*) => {
        $crate::Error::ShapeMismatch(alloc::format!($($arg)*))
    };
}

/// Shorthand for `Error::InvalidArgument` with formatted context.
macro_rules! invalid_arg {
    ($($arg:tt)*) => {
        $crate::Error::InvalidArgument(alloc::format!($($arg)*))
    };
}

pub(crate) use {invalid_arg, shape_err};
