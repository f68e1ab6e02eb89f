//! Data-driven batch state estimation with lifted bilinear (Koopman) models.
//!
//! The crate learns high-dimensional bilinear process and measurement models
//! from ground-truth data and solves dead reckoning, localization, mapping,
//! and SLAM as sparse (constrained) least-squares problems:
//!
//! * [`lifting`] — feature embeddings (random Fourier features stacked under
//!   the original variables), their manifold constraints, and constraint
//!   nullspace bases.
//! * [`model`] — regularized least-squares identification of the lifted
//!   system matrices, full and reduced variants, plus invariance-based data
//!   augmentation.
//! * [`problem`] — batch estimation problems: error functions, Jacobians,
//!   and assembly of the arrowhead Gauss-Newton system and the blockwise
//!   constraint system.
//! * [`solvers`] — sparse arrowhead Cholesky, RTS smoother, nullspace-method
//!   SQP with an L1-merit line search, and covariance extraction.
//! * [`estimators`] — user-facing facades for the UKL / CKL / RCKL engines
//!   and the model-based baselines (MB / MBI).
//! * [`sim`] — unicycle/bicycle simulators with scaled range measurements.
//! * [`eval`] — RMSE, normalized Mahalanobis distance, rigid SLAM alignment.
//! * [`io`] — on-disk formats for models, datasets, estimates, and metrics.
//!
//! Everything operates on `f64` with `nalgebra` dynamic matrices. All model
//! and problem types are immutable after construction and safe to share
//! across threads; Monte-Carlo trials parallelize with `rayon` when the
//! `parallel` feature (default) is enabled.

pub mod error;
pub mod estimators;
pub mod eval;
pub mod exec;
pub mod geom;
pub mod io;
pub mod lifting;
pub mod linalg;
pub mod model;
pub mod problem;
pub mod sim;
pub mod solvers;

pub use error::{Error, Result};
