//! Marginal-likelihood training of kernel hyperparameters.
//!
//! Positive hyperparameters are searched in log space with a Nelder-Mead
//! simplex, restarted from perturbed copies of the initial values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kalman::regression_log_likelihood;
use crate::kernels::{Kernel, ParamKind};
use crate::realization::{realize, RealizeOptions};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    /// Number of simplex searches; the first starts at the template values.
    pub starts: usize,
    pub max_evals: usize,
    /// Stop when the simplex's spread of objective values falls below this.
    pub f_tol: f64,
    /// Initial simplex edge in log space.
    pub initial_step: f64,
    /// Half-width of the uniform log-space perturbation of extra starts.
    pub start_spread: f64,
    pub freeze_period: bool,
    /// Hyperparameter paths kept at their template value, e.g. `right.sigma`.
    pub frozen: Vec<String>,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            starts: 4,
            max_evals: 400,
            f_tol: 1e-7,
            initial_step: 0.5,
            start_spread: 0.7,
            freeze_period: false,
            frozen: Vec::new(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainingResult {
    pub kernel: Kernel,
    pub nll: f64,
    /// Best objective after each simplex iteration of the winning start.
    pub trace: Vec<f64>,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub trace: Vec<f64>,
    pub evaluations: usize,
}

/// Derivative-free Nelder-Mead minimization; non-finite values count as +∞.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], step: f64, max_evals: usize, f_tol: f64) -> SimplexResult {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    if n == 0 {
        let v = eval(x0, &mut evals);
        return SimplexResult { x: vec![], f: v, trace: vec![v], evaluations: evals };
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0, &mut evals)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }
    let mut trace = Vec::new();
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        trace.push(simplex[0].1);
        let spread = simplex[n].1 - simplex[0].1;
        if spread.is_finite() && spread <= f_tol * (1.0 + simplex[0].1.abs()) {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|p| p.0[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&simplex[n].0).map(|(c, w)| c + t * (c - w)).collect() };
        let xr = along(1.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[n].1 {
            let x = along(0.5);
            let v = eval(&x, &mut evals);
            (x, v)
        } else {
            let x = along(-0.5);
            let v = eval(&x, &mut evals);
            (x, v)
        };
        if fc < simplex[n].1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for p in simplex.iter_mut().skip(1) {
            for (x, b) in p.0.iter_mut().zip(&best) {
                *x = b + 0.5 * (*x - b);
            }
            p.1 = eval(&p.0, &mut evals);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    trace.push(simplex[0].1);
    let (x, fbest) = simplex.swap_remove(0);
    SimplexResult { x, f: fbest, trace, evaluations: evals }
}

/// Minimizes `objective` over the free hyperparameters of `template`.
/// The objective returns the negative log marginal likelihood; errors are
/// treated as +∞.
pub fn train_hyperparameters<F>(template: &Kernel, mut objective: F, cfg: &TrainingConfig) -> Result<TrainingResult>
where
    F: FnMut(&Kernel) -> Result<f64>,
{
    template.validate()?;
    let params = template.hyperparameters();
    let free: Vec<usize> = params
        .iter()
        .enumerate()
        .filter(|(_, p)| !(cfg.freeze_period && p.kind == ParamKind::Period) && !cfg.frozen.iter().any(|f| f == &p.path))
        .map(|(i, _)| i)
        .collect();
    let base: Vec<f64> = params.iter().map(|p| p.value).collect();
    let build = |z: &[f64]| -> Result<Kernel> {
        let mut v = base.clone();
        for (&i, zi) in free.iter().zip(z) {
            v[i] = zi.exp();
        }
        template.with_hyperparameters(&v)
    };
    let z0: Vec<f64> = free.iter().map(|&i| base[i].ln()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<SimplexResult> = None;
    let mut evaluations = 0;
    for s in 0..cfg.starts.max(1) {
        let start: Vec<f64> = if s == 0 {
            z0.clone()
        } else {
            z0.iter().map(|z| z + cfg.start_spread * (2.0 * rng.random::<f64>() - 1.0)).collect()
        };
        let res = nelder_mead(
            |z| build(z).and_then(|k| objective(&k)).unwrap_or(f64::INFINITY),
            &start,
            cfg.initial_step,
            cfg.max_evals,
            cfg.f_tol,
        );
        evaluations += res.evaluations;
        if best.as_ref().is_none_or(|b| res.f < b.f) {
            best = Some(res);
        }
    }
    let best = best.expect("at least one start");
    if !best.f.is_finite() {
        return Err(Error::OptimizationFailed("every start produced a non-finite objective".into()));
    }
    Ok(TrainingResult { kernel: build(&best.x)?, nll: best.f, trace: best.trace, evaluations })
}

/// Trains a realizable kernel on a scalar regression problem through the
/// state-space likelihood.
pub fn train_regression(
    template: &Kernel,
    times: &[f64],
    y: &[f64],
    noise_var: f64,
    opts: &RealizeOptions,
    cfg: &TrainingConfig,
) -> Result<TrainingResult> {
    train_hyperparameters(
        template,
        |k| {
            let r = realize(k, opts)?;
            Ok(-regression_log_likelihood(&r, times, y, noise_var)?)
        },
        cfg,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_finds_rosenbrock_minimum() {
        let res = nelder_mead(|x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2), &[-1.2, 1.0], 0.5, 5000, 1e-14);
        assert!((res.x[0] - 1.0).abs() < 1e-4 && (res.x[1] - 1.0).abs() < 1e-4, "{:?}", res.x);
        assert!(res.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn simplex_treats_nan_as_infinite() {
        let res = nelder_mead(|x| if x[0] < 0.0 { f64::NAN } else { (x[0] - 2.0).powi(2) }, &[0.5], 0.5, 500, 1e-12);
        assert!((res.x[0] - 2.0).abs() < 1e-4);
    }

    #[test]
    fn constant_kernel_trains_to_data_scale() {
        let y = vec![1.5; 40];
        let t: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let cfg = TrainingConfig { starts: 2, f_tol: 1e-14, ..Default::default() };
        let res = train_regression(&Kernel::Constant { sigma: 0.2 }, &t, &y, 1e-2, &RealizeOptions::default(), &cfg).unwrap();
        let Kernel::Constant { sigma } = res.kernel else { panic!() };
        // maximizer of the rank-one likelihood: σ² = c² − σₙ²/n
        assert!((sigma * sigma - (2.25 - 1e-2 / 40.0)).abs() < 1e-3, "{sigma}");
        assert!(res.trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn frozen_parameters_keep_template_values() {
        let t: Vec<f64> = (0..30).map(|i| i as f64 * 0.05).collect();
        let y: Vec<f64> = t.iter().map(|x| (6.0 * x).sin()).collect();
        let k = Kernel::quasiperiodic(0.5, 0.8, 1.0, 1.5, 1.0).unwrap();
        let cfg = TrainingConfig {
            starts: 1,
            max_evals: 60,
            freeze_period: true,
            frozen: vec!["right.sigma".into()],
            ..Default::default()
        };
        let res = train_regression(&k, &t, &y, 1e-2, &RealizeOptions::default(), &cfg).unwrap();
        let hp = res.kernel.hyperparameters();
        let get = |p: &str| hp.iter().find(|h| h.path == p).unwrap().value;
        assert_eq!(get("left.t_period"), 1.0);
        assert_eq!(get("right.sigma"), 1.0);
    }

    #[test]
    fn all_infinite_objective_fails() {
        let cfg = TrainingConfig { starts: 2, max_evals: 20, ..Default::default() };
        let err = train_hyperparameters(&Kernel::Wiener { sigma: 1.0 }, |_| Ok(f64::NAN), &cfg);
        assert!(matches!(err, Err(Error::OptimizationFailed(_))));
    }
}
