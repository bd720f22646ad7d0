//! Zero-shot classification from noisy class documents.
//!
//! Image features are matched to bag-of-words class descriptions through a
//! factored bilinear model `x^T Wx^T Wz z`, trained with an l2,1 penalty on
//! the columns of `Wz` that down-weights uninformative words.
//!
//! - [`textpipe`]: tokenization, vocabulary and document matrices
//! - [`linsolve`]: eigendecomposition, SPD and Sylvester solvers
//! - [`nszsl`]: the noise-suppressed model, its solver and analysis tools
//! - [`eszsl`]: the single-matrix closed-form baseline
//! - [`cvharness`]: class-wise cross-validation and grid search
//! - [`synthgen`]: planted-signal synthetic data
//! - [`dataio`]: file formats

pub mod cvharness;
pub mod dataio;
pub mod error;
pub mod eszsl;
pub mod linsolve;
pub mod model;
pub mod nszsl;
pub mod synthgen;
pub mod textpipe;

pub use error::{Error, Result};
pub use linsolve::{Matrix, Vector};
pub use model::{Compatibility, Model};
