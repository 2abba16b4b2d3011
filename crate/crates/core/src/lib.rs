//! Kriging-based global optimization driven by relative expected improvement
//! over generalized observations.
//!
//! A measurement is a [`GeneralizedPoint`]: a location paired with a linear
//! operator (value, partial derivative, Gaussian convolution, curvature
//! penalty, component selection or sums thereof).  The [`field`] module
//! conditions a squared-exponential prior on such measurements, the
//! [`acquisition`] module scores candidate measurement sets by REI, and the
//! [`optimizer`] module runs the outer EGO loop against an [`Evaluator`].

pub mod acquisition;
pub mod error;
pub mod field;
pub mod kernel;
mod linalg;
pub mod optimizer;
pub mod problems;
pub mod protocol;
pub mod search;

pub use error::{Error, Result};
pub use field::{FminContext, FminMethod, Measurement, PosteriorField};
pub use kernel::{CovMatrix, Domain, GeneralizedPoint, KernelSpec, OperatorTag, Prior};
pub use protocol::{Evaluator, EvaluatorRequest, EvaluatorResponse};
