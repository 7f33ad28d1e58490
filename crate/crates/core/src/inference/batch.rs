//! Closed-form GP regression with the full Gram matrix.

use nalgebra::DVector;

use crate::kernels::Kernel;
use crate::linalg;
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchPosterior {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

fn factor(kernel: &Kernel, times: &[f64], y: &[f64], noise_var: f64) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if times.len() != y.len() || times.is_empty() {
        return Err(Error::DimensionMismatch(format!("{} times, {} observations", times.len(), y.len())));
    }
    if !(noise_var >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise variance must be non-negative, got {noise_var}")));
    }
    let mut k = kernel.gram(times)?;
    for i in 0..times.len() {
        k[(i, i)] += noise_var;
    }
    linalg::cholesky_jittered(&k, 0.0)
}

/// Posterior mean and variance of `f` at `test_times` given
/// `y_i = f(t_i) + ε_i`, `ε_i ~ N(0, noise_var)`.
pub fn batch_gp(kernel: &Kernel, times: &[f64], y: &[f64], noise_var: f64, test_times: &[f64]) -> Result<BatchPosterior> {
    let chol = factor(kernel, times, y, noise_var)?;
    let ks = kernel.cross_gram(times, test_times)?;
    let alpha = chol.solve(&DVector::from_column_slice(y));
    let mean = (ks.transpose() * alpha).iter().copied().collect();
    let v = chol.solve(&ks);
    let var = test_times
        .iter()
        .enumerate()
        .map(|(j, &t)| Ok((kernel.eval(t, t)? - ks.column(j).dot(&v.column(j))).max(0.0)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(BatchPosterior { mean, var })
}

/// `n/2 log 2π + ½ log|K + σₙ²I| + ½ yᵀ(K + σₙ²I)⁻¹y`.
pub fn batch_nll(kernel: &Kernel, times: &[f64], y: &[f64], noise_var: f64) -> Result<f64> {
    let chol = factor(kernel, times, y, noise_var)?;
    let yv = DVector::from_column_slice(y);
    let quad = yv.dot(&chol.solve(&yv));
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(0.5 * (y.len() as f64 * LN_2PI + log_det + quad))
}
