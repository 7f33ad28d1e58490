//! Gaussian-process latent force models (GPLFM) for joint input-state
//! estimation of linear structural systems.
//!
//! The crate is organised bottom-up:
//!
//! - [`kernels`]: covariance functions as composable algebraic objects.
//! - [`realization`]: compilation of kernels into continuous-time
//!   companion-form state-space models and their exact discretization.
//! - [`structural`]: second-order structural models, modal reduction with
//!   residual attachment modes, state-space conversion and ZOH simulation.
//! - [`gplfm`]: the augmented structural + latent-force state-space model.
//! - [`inference`]: Kalman filter, RTS smoother, batch GP oracle, marginal
//!   likelihood and hyperparameter training, input/response reconstruction.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod gplfm;
pub mod inference;
pub mod kernels;
pub mod linalg;
pub mod realization;
pub mod structural;

pub use error::{Error, Result};
pub use gplfm::{AugmentedModel, LatentInitPolicy};
pub use inference::{EstimationResult, GaussianState, GaussianTrajectory};
pub use kernels::{Kernel, Smoothness};
pub use realization::{DiscreteSsm, RealizeOptions, SsmRealization};
pub use structural::{OutputDescriptor, OutputKind, ReducedModel, StateSpaceModel, StructuralModel};
