//! Mutual angular regularization (MAR) for latent variable models.
//!
//! The regularizer scores a set of component vectors by the mean of their
//! pairwise non-obtuse angles minus a multiple of the variance of those
//! angles: diverse component sets score high. Because the score is non-smooth,
//! optimization goes through a smooth lower bound built from the determinant
//! of the component Gram matrix.
//!
//! The crate provides:
//!
//! - [`linalg`]: angles, Gram matrices/determinants, sphere projection, and
//!   the orthogonal row decomposition the theory rests on;
//! - [`regularizer`]: the angular score, its smooth surrogate, the surrogate
//!   gradient, and projected ascent steps on the unit sphere;
//! - [`optimizer`]: alternating magnitude/direction optimization of an
//!   arbitrary loss plus the regularizer;
//! - [`dml`], [`rbm`], [`nn`]: regularized distance metric learning,
//!   replicated-softmax RBM, and one-hidden-layer network instantiations;
//! - [`bounds`]: evaluators for the generalization-bound formulas that link
//!   component diversity to estimation and approximation error;
//! - [`metrics`], [`synth`], [`io`], [`verify`]: evaluation metrics,
//!   synthetic long-tail data, file formats, and the property-check driver
//!   used by the command-line harness.

pub mod bounds;
pub mod dml;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod optimizer;
pub mod rbm;
pub mod regularizer;
pub mod synth;
pub mod verify;

pub use error::{MarError, Result};
pub use linalg::ComponentMatrix;
