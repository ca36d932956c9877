//! Error type shared by all modules.

use alloc::string::String;
use core::fmt;

use crate::gaussian::ParamClass;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A raw or activated Gaussian parameter is NaN or infinite.
    NonFiniteParam {
        /// Index of the offending Gaussian within its cloud (0 for a lone value).
        index: usize,
        class: ParamClass,
    },
    /// Covariance is not positive definite (|rho| >= 1 or sigma <= 0).
    DegenerateCovariance,
    /// A configuration value violates its documented range.
    InvalidConfig(String),
    /// Two buffers that must agree in shape do not, as (height, width).
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    /// The fit loss became NaN or infinite.
    NonFiniteLoss {
        step: usize,
        class: Option<ParamClass>,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonFiniteParam { index, class } => {
                write!(f, "non-finite parameter {} of gaussian {index}", class.name())
            }
            Error::DegenerateCovariance => {
                write!(f, "degenerate covariance (|rho| >= 1 or sigma <= 0)")
            }
            Error::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
            Error::DimensionMismatch { expected, got } => write!(
                f,
                "dimension mismatch: expected {}x{}, got {}x{}",
                expected.0, expected.1, got.0, got.1
            ),
            Error::NonFiniteLoss { step, class } => match class {
                Some(c) => write!(f, "non-finite loss at step {step} (parameter class {})", c.name()),
                None => write!(f, "non-finite loss at step {step}"),
            },
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
