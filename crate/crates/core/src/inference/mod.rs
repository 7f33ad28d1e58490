//! Recursive and batch inference on latent-force models.

pub mod batch;
pub mod kalman;
pub mod training;

use nalgebra::{DMatrix, DVector};

use crate::gplfm::AugmentedModel;
use crate::structural::StateSpaceModel;
use crate::Result;

pub use batch::{batch_gp, batch_nll, BatchPosterior};
pub use kalman::{
    kalman_filter, kalman_filter_general, kalman_filter_with, regression_log_likelihood, rts_smooth, rts_smooth_general,
    ssm_regression, CovarianceForm, Dynamics, FilterOptions, SsmRegression,
};
pub use training::{nelder_mead, train_hyperparameters, train_regression, TrainingConfig, TrainingResult};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Sample index.
    pub step: usize,
}

#[derive(Debug, Clone, Default)]
pub struct GaussianTrajectory {
    pub filtered: Vec<GaussianState>,
    pub smoothed: Option<Vec<GaussianState>>,
    pub innovations: Vec<DVector<f64>>,
    pub innovation_covs: Vec<DMatrix<f64>>,
    pub log_likelihood: f64,
}

impl GaussianTrajectory {
    pub(crate) fn with_capacity(n: usize) -> Self {
        GaussianTrajectory {
            filtered: Vec::with_capacity(n),
            smoothed: None,
            innovations: Vec::with_capacity(n),
            innovation_covs: Vec::with_capacity(n),
            log_likelihood: 0.0,
        }
    }

    pub(crate) fn push(&mut self, state: GaussianState, innovation: DVector<f64>, cov: DMatrix<f64>) {
        self.filtered.push(state);
        self.innovations.push(innovation);
        self.innovation_covs.push(cov);
    }

    /// Smoothed states when available, filtered ones otherwise.
    pub fn best(&self) -> &[GaussianState] {
        self.smoothed.as_deref().unwrap_or(&self.filtered)
    }

    pub fn len(&self) -> usize {
        self.filtered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filtered.is_empty()
    }
}

/// Input and response reconstructions, one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub input_mean: DMatrix<f64>,
    pub input_var: DMatrix<f64>,
    pub response_mean: DMatrix<f64>,
    pub response_var: DMatrix<f64>,
}

fn project(states: &[GaussianState], rows: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = states.len();
    let p = rows.nrows();
    let mut mean = DMatrix::zeros(n, p);
    let mut var = DMatrix::zeros(n, p);
    for (k, s) in states.iter().enumerate() {
        let m = rows * &s.mean;
        let cp = rows * &s.cov;
        for i in 0..p {
            mean[(k, i)] = m[i];
            var[(k, i)] = cp.row(i).dot(&rows.row(i)).max(0.0);
        }
    }
    (mean, var)
}

/// `û_j = H_j ẑ_j` and `ŷᵉ = Cᵉ x̂` with their variances, from the smoothed
/// states when present. Without `virtual_outputs` the measured channels are
/// reconstructed.
pub fn estimate(
    am: &AugmentedModel,
    trajectory: &GaussianTrajectory,
    virtual_outputs: Option<&StateSpaceModel>,
) -> Result<EstimationResult> {
    let states = trajectory.best();
    let ni = am.layout.latent.len();
    let mut force_rows = DMatrix::zeros(ni, am.n_aug());
    for j in 0..ni {
        force_rows.row_mut(j).copy_from(&am.layout.force_row(j));
    }
    let (input_mean, input_var) = project(states, &force_rows);
    let ce = match virtual_outputs {
        Some(v) => am.virtual_outputs(v)?,
        None => am.c.clone(),
    };
    let (response_mean, response_var) = project(states, &ce);
    Ok(EstimationResult { input_mean, input_var, response_mean, response_var })
}
