//! Kalman filter and Rauch-Tung-Striebel smoother.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{GaussianState, GaussianTrajectory};
use crate::gplfm::AugmentedModel;
use crate::linalg::{self, symmetrize, symmetrize_in_place};
use crate::realization::{discretize, DiscreteSsm, SsmRealization};
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Transition model between consecutive samples.
#[derive(Debug, Clone, Copy)]
pub enum Dynamics<'a> {
    Uniform {
        ad: &'a DMatrix<f64>,
        qd: &'a DMatrix<f64>,
    },
    /// `steps[k]` maps sample `k` to sample `k + 1`.
    Varying(&'a [DiscreteSsm]),
}

impl<'a> Dynamics<'a> {
    fn at(&self, k: usize) -> (&'a DMatrix<f64>, &'a DMatrix<f64>) {
        match *self {
            Dynamics::Uniform { ad, qd } => (ad, qd),
            Dynamics::Varying(steps) => (&steps[k].ad, &steps[k].qd),
        }
    }
}

/// Representation of the state covariance inside the recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceForm {
    /// Full covariance with the Joseph-form update.
    #[default]
    Joseph,
    /// Covariance factor propagated by orthogonal (QR) array updates; keeps
    /// precision when prior and measurement variances differ by many decades.
    SquareRoot,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterOptions {
    /// Keep per-step states and innovations; off when only the likelihood is needed.
    pub store: bool,
    /// Once the filtered covariance changes by less than this (max-abs,
    /// relative) between steps, the gain is frozen and only means are
    /// propagated. Applies to uniform dynamics with fully observed samples.
    pub steady_state_tol: Option<f64>,
    pub form: CovarianceForm,
}

impl Default for FilterOptions {
    fn default() -> Self {
        FilterOptions { store: true, steady_state_tol: None, form: CovarianceForm::Joseph }
    }
}

fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct SteadyState {
    gain: DMatrix<f64>,
    cov: DMatrix<f64>,
    s: DMatrix<f64>,
    s_chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    log_det: f64,
}

/// Filters the observations `y` (one sample per row, `NaN` marks a missing
/// channel) starting from the prior `init` at the first sample.
pub fn kalman_filter_general(
    dynamics: Dynamics<'_>,
    c: &DMatrix<f64>,
    r: &DMatrix<f64>,
    y: &DMatrix<f64>,
    init: &GaussianState,
    opts: &FilterOptions,
) -> Result<GaussianTrajectory> {
    let n = init.mean.len();
    let no = c.nrows();
    if c.ncols() != n || y.ncols() != no || r.nrows() != no || r.ncols() != no || init.cov.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "state {n}, C {}x{}, R {}x{}, y {} channels",
            c.nrows(),
            c.ncols(),
            r.nrows(),
            r.ncols(),
            y.ncols()
        )));
    }
    if let Dynamics::Varying(steps) = dynamics {
        if steps.len() + 1 < y.nrows() {
            return Err(Error::DimensionMismatch("fewer transitions than samples".into()));
        }
    }
    if opts.form == CovarianceForm::SquareRoot {
        return sqrt_filter(dynamics, c, r, y, init, opts);
    }
    let steps = y.nrows();
    let mut traj = GaussianTrajectory::with_capacity(if opts.store { steps } else { 0 });
    let mut m = init.mean.clone();
    let mut p = init.cov.clone();
    symmetrize_in_place(&mut p);
    let mut ll = 0.0;
    let mut steady: Option<SteadyState> = None;
    let mut prev_pf: Option<DMatrix<f64>> = None;
    let eye = DMatrix::<f64>::identity(n, n);

    for k in 0..steps {
        if k > 0 {
            let (ad, qd) = dynamics.at(k - 1);
            m = ad * &m;
            if steady.is_none() {
                p = ad * &p * ad.transpose() + qd;
                symmetrize_in_place(&mut p);
            }
        }
        let row = y.row(k);
        let observed: Vec<usize> = (0..no).filter(|&i| !row[i].is_nan()).collect();

        if let Some(ss) = &steady {
            if observed.len() == no {
                let v = row.transpose() - c * &m;
                m += &ss.gain * &v;
                let sol = ss.s_chol.solve(&v);
                ll -= 0.5 * (v.dot(&sol) + ss.log_det + no as f64 * LN_2PI);
                if opts.store {
                    traj.push(GaussianState { mean: m.clone(), cov: ss.cov.clone(), step: k }, v, ss.s.clone());
                }
                continue;
            }
            // a missing sample breaks the steady state; resume the full recursion
            let (ad, qd) = dynamics.at(k - 1);
            p = ad * &ss.cov * ad.transpose() + qd;
            symmetrize_in_place(&mut p);
            steady = None;
            prev_pf = None;
        }

        if observed.is_empty() {
            if opts.store {
                traj.push(GaussianState { mean: m.clone(), cov: p.clone(), step: k }, DVector::zeros(0), DMatrix::zeros(0, 0));
            }
            continue;
        }
        let (cs, rs, ys) = if observed.len() == no {
            (c.clone(), r.clone(), row.transpose())
        } else {
            (
                c.select_rows(&observed),
                r.select_rows(&observed).select_columns(&observed),
                DVector::from_iterator(observed.len(), observed.iter().map(|&i| row[i])),
            )
        };
        let v = &ys - &cs * &m;
        let pct = &p * cs.transpose();
        let mut s = &cs * &pct + &rs;
        symmetrize_in_place(&mut s);
        let chol = linalg::cholesky_jittered(&s, 0.0).map_err(|e| Error::DivergedFilter {
            step: k,
            reason: format!("innovation covariance not positive definite ({e})"),
        })?;
        let gain = chol.solve(&pct.transpose()).transpose();
        m += &gain * &v;
        let ikc = &eye - &gain * &cs;
        p = &ikc * &p * ikc.transpose() + &gain * &rs * gain.transpose();
        symmetrize_in_place(&mut p);
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let sol = chol.solve(&v);
        let term = v.dot(&sol) + log_det + observed.len() as f64 * LN_2PI;
        if !term.is_finite() {
            return Err(Error::DivergedFilter { step: k, reason: "non-finite likelihood term".into() });
        }
        ll -= 0.5 * term;

        if let (Some(tol), Dynamics::Uniform { .. }, true) = (opts.steady_state_tol, dynamics, observed.len() == no) {
            if let Some(prev) = &prev_pf {
                let scale = max_abs(&p).max(f64::MIN_POSITIVE);
                if max_abs(&(&p - prev)) <= tol * scale {
                    steady =
                        Some(SteadyState { gain: gain.clone(), cov: p.clone(), s: s.clone(), s_chol: chol.clone(), log_det });
                }
            }
            prev_pf = Some(p.clone());
        }
        if opts.store {
            traj.push(GaussianState { mean: m.clone(), cov: p.clone(), step: k }, v, s);
        }
    }
    traj.log_likelihood = ll;
    Ok(traj)
}

/// Upper-triangular factor `R` of `a = QR`, so that `aᵀa = RᵀR`.
fn qr_r(a: DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    let r = a.qr().r();
    if r.nrows() == n {
        r
    } else {
        let mut out = DMatrix::zeros(n, n);
        out.rows_mut(0, r.nrows()).copy_from(&r);
        out
    }
}

/// Predicted factor `S⁻` with `S⁻S⁻ᵀ = Ad S Sᵀ Adᵀ + Qd`.
fn sqrt_predict(ad: &DMatrix<f64>, s: &DMatrix<f64>, lq: &DMatrix<f64>) -> DMatrix<f64> {
    let n = s.nrows();
    let mut pre = DMatrix::zeros(2 * n, n);
    pre.rows_mut(0, n).copy_from(&(ad * s).transpose());
    pre.rows_mut(n, n).copy_from(&lq.transpose());
    qr_r(pre).transpose()
}

fn sqrt_filter(
    dynamics: Dynamics<'_>,
    c: &DMatrix<f64>,
    r: &DMatrix<f64>,
    y: &DMatrix<f64>,
    init: &GaussianState,
    opts: &FilterOptions,
) -> Result<GaussianTrajectory> {
    let n = init.mean.len();
    let no = c.nrows();
    let steps = y.nrows();
    let mut traj = GaussianTrajectory::with_capacity(if opts.store { steps } else { 0 });
    let mut m = init.mean.clone();
    let mut s = linalg::psd_sqrt(&init.cov);
    let uniform_lq = match dynamics {
        Dynamics::Uniform { qd, .. } => Some(linalg::psd_sqrt(qd)),
        Dynamics::Varying(_) => None,
    };
    let mut ll = 0.0;
    let mut steady: Option<SteadyState> = None;
    let mut prev_pf: Option<DMatrix<f64>> = None;

    for k in 0..steps {
        if k > 0 {
            let (ad, qd) = dynamics.at(k - 1);
            m = ad * &m;
            if steady.is_none() {
                s = match &uniform_lq {
                    Some(lq) => sqrt_predict(ad, &s, lq),
                    None => sqrt_predict(ad, &s, &linalg::psd_sqrt(qd)),
                };
            }
        }
        let row = y.row(k);
        let observed: Vec<usize> = (0..no).filter(|&i| !row[i].is_nan()).collect();

        if let Some(ss) = &steady {
            if observed.len() == no {
                let v = row.transpose() - c * &m;
                m += &ss.gain * &v;
                let sol = ss.s_chol.solve(&v);
                ll -= 0.5 * (v.dot(&sol) + ss.log_det + no as f64 * LN_2PI);
                if opts.store {
                    traj.push(GaussianState { mean: m.clone(), cov: ss.cov.clone(), step: k }, v, ss.s.clone());
                }
                continue;
            }
            let (ad, qd) = dynamics.at(k - 1);
            s = sqrt_predict(ad, &linalg::psd_sqrt(&ss.cov), &linalg::psd_sqrt(qd));
            steady = None;
            prev_pf = None;
        }

        if observed.is_empty() {
            if opts.store {
                traj.push(
                    GaussianState { mean: m.clone(), cov: &s * s.transpose(), step: k },
                    DVector::zeros(0),
                    DMatrix::zeros(0, 0),
                );
            }
            continue;
        }
        let (cs, rs, ys) = if observed.len() == no {
            (c.clone(), r.clone(), row.transpose())
        } else {
            (
                c.select_rows(&observed),
                r.select_rows(&observed).select_columns(&observed),
                DVector::from_iterator(observed.len(), observed.iter().map(|&i| row[i])),
            )
        };
        let mo = observed.len();
        let lr = rs
            .clone()
            .cholesky()
            .ok_or_else(|| Error::DivergedFilter { step: k, reason: "measurement covariance not positive definite".into() })?;
        let mut pre = DMatrix::zeros(mo + n, mo + n);
        pre.view_mut((0, 0), (mo, mo)).copy_from(&lr.l().transpose());
        let st = s.transpose();
        pre.view_mut((mo, 0), (n, mo)).copy_from(&(&st * cs.transpose()));
        pre.view_mut((mo, mo), (n, n)).copy_from(&st);
        let post = qr_r(pre);
        let r11 = post.view((0, 0), (mo, mo)).into_owned();
        let r12 = post.view((0, mo), (mo, n)).into_owned();
        if r11.diagonal().iter().any(|d| *d == 0.0 || !d.is_finite()) {
            return Err(Error::DivergedFilter { step: k, reason: "singular innovation factor".into() });
        }
        let v = &ys - &cs * &m;
        // Kᵀ = R11⁻¹ R12
        let kt = r11.solve_upper_triangular(&r12).expect("nonzero diagonal");
        let gain = kt.transpose();
        m += &gain * &v;
        s = post.view((mo, mo), (n, n)).transpose();
        let w = r11.transpose().solve_lower_triangular(&v).expect("nonzero diagonal");
        let log_det = 2.0 * r11.diagonal().iter().map(|d| d.abs().ln()).sum::<f64>();
        let term = w.norm_squared() + log_det + mo as f64 * LN_2PI;
        if !term.is_finite() {
            return Err(Error::DivergedFilter { step: k, reason: "non-finite likelihood term".into() });
        }
        ll -= 0.5 * term;

        let need_cov = opts.store || opts.steady_state_tol.is_some();
        let p = if need_cov { symmetrize(&(&s * s.transpose())) } else { DMatrix::zeros(0, 0) };
        let innov = || symmetrize(&(r11.transpose() * &r11));
        if let (Some(tol), Dynamics::Uniform { .. }, true) = (opts.steady_state_tol, dynamics, mo == no) {
            if let Some(prev) = &prev_pf {
                let scale = max_abs(&p).max(f64::MIN_POSITIVE);
                if max_abs(&(&p - prev)) <= tol * scale {
                    let sm = innov();
                    let chol = linalg::cholesky_jittered(&sm, 0.0).map_err(|e| Error::DivergedFilter {
                        step: k,
                        reason: format!("innovation covariance not positive definite ({e})"),
                    })?;
                    steady = Some(SteadyState { gain: gain.clone(), cov: p.clone(), s: sm, s_chol: chol, log_det });
                }
            }
            prev_pf = Some(p.clone());
        }
        if opts.store {
            traj.push(GaussianState { mean: m.clone(), cov: p, step: k }, v, innov());
        }
    }
    traj.log_likelihood = ll;
    Ok(traj)
}

/// Filters the augmented model's observations.
pub fn kalman_filter(am: &AugmentedModel, y: &DMatrix<f64>, init: &GaussianState) -> Result<GaussianTrajectory> {
    kalman_filter_with(am, y, init, &FilterOptions::default())
}

pub fn kalman_filter_with(
    am: &AugmentedModel,
    y: &DMatrix<f64>,
    init: &GaussianState,
    opts: &FilterOptions,
) -> Result<GaussianTrajectory> {
    kalman_filter_general(Dynamics::Uniform { ad: &am.ad, qd: &am.qd }, &am.c, &am.r, y, init, opts)
}

/// Solves `X · P = B` for symmetric PSD `P`, falling back to a
/// pseudo-inverse when `P` is singular.
fn right_solve_psd(b: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(ch) = p.clone().cholesky() {
        return ch.solve(&b.transpose()).transpose();
    }
    let svd = p.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let pinv = svd.pseudo_inverse(1e-14 * smax.max(f64::MIN_POSITIVE)).expect("both factors computed");
    b * pinv
}

/// Backward RTS pass over a stored filtered trajectory.
pub fn rts_smooth_general(dynamics: Dynamics<'_>, filtered: &GaussianTrajectory) -> Result<Vec<GaussianState>> {
    let steps = filtered.filtered.len();
    if steps == 0 {
        return Err(Error::InvalidArgument("empty filtered trajectory".into()));
    }
    let mut out: Vec<GaussianState> = Vec::with_capacity(steps);
    out.push(filtered.filtered[steps - 1].clone());
    for k in (0..steps - 1).rev() {
        let (ad, qd) = dynamics.at(k);
        let f = &filtered.filtered[k];
        let mut p_pred = ad * &f.cov * ad.transpose() + qd;
        symmetrize_in_place(&mut p_pred);
        let m_pred = ad * &f.mean;
        let gain = right_solve_psd(&(&f.cov * ad.transpose()), &p_pred);
        let next = out.last().expect("non-empty");
        let mean = &f.mean + &gain * (&next.mean - &m_pred);
        let mut cov = &f.cov + &gain * (&next.cov - &p_pred) * gain.transpose();
        symmetrize_in_place(&mut cov);
        if !mean.iter().all(|v| v.is_finite()) {
            return Err(Error::IllConditioned(format!("smoother produced non-finite mean at step {k}")));
        }
        out.push(GaussianState { mean, cov, step: f.step });
    }
    out.reverse();
    Ok(out)
}

/// Smooths a trajectory filtered with [`kalman_filter`] and stores the
/// result in `smoothed`.
pub fn rts_smooth(am: &AugmentedModel, filtered: &GaussianTrajectory) -> Result<GaussianTrajectory> {
    let smoothed = rts_smooth_general(Dynamics::Uniform { ad: &am.ad, qd: &am.qd }, filtered)?;
    let mut out = filtered.clone();
    out.smoothed = Some(smoothed);
    Ok(out)
}

/// State-space GP regression `y_i = f(t_i) + ε_i` on sorted times.
#[derive(Debug, Clone)]
pub struct SsmRegression {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub log_likelihood: f64,
}

pub(crate) fn regression_transitions(r: &SsmRealization, times: &[f64]) -> Result<Vec<DiscreteSsm>> {
    let n = r.dim();
    times
        .windows(2)
        .map(|w| {
            let dt = w[1] - w[0];
            if dt < 0.0 || !dt.is_finite() {
                Err(Error::InvalidArgument("times must be sorted ascending".into()))
            } else if dt == 0.0 {
                Ok(DiscreteSsm { ad: DMatrix::identity(n, n), qd: DMatrix::zeros(n, n), dt })
            } else {
                discretize(r, dt)
            }
        })
        .collect()
}

/// Filters (and optionally smooths) a scalar regression problem through a
/// kernel realization.
fn uniform_step(times: &[f64]) -> Option<f64> {
    let dt = times.get(1)? - times[0];
    let tol = 1e-9 * dt.abs().max(f64::MIN_POSITIVE);
    (dt > 0.0 && times.windows(2).all(|w| ((w[1] - w[0]) - dt).abs() <= tol)).then_some(dt)
}

fn regression_filter(
    r: &SsmRealization,
    times: &[f64],
    y: &[f64],
    noise_var: f64,
    opts: &FilterOptions,
) -> Result<(GaussianTrajectory, Option<DiscreteSsm>, Vec<DiscreteSsm>)> {
    if times.len() != y.len() || times.is_empty() {
        return Err(Error::DimensionMismatch(format!("{} times, {} observations", times.len(), y.len())));
    }
    let init = GaussianState { mean: DVector::zeros(r.dim()), cov: r.p_inf.clone().unwrap_or_else(|| r.p_init.clone()), step: 0 };
    let yy = DMatrix::from_column_slice(y.len(), 1, y);
    let rr = DMatrix::from_element(1, 1, noise_var);
    match uniform_step(times) {
        Some(dt) => {
            let d = discretize(r, dt)?;
            let traj = kalman_filter_general(Dynamics::Uniform { ad: &d.ad, qd: &d.qd }, &r.h, &rr, &yy, &init, opts)?;
            Ok((traj, Some(d), Vec::new()))
        }
        None => {
            let trans = regression_transitions(r, times)?;
            let traj = kalman_filter_general(Dynamics::Varying(&trans), &r.h, &rr, &yy, &init, opts)?;
            Ok((traj, None, trans))
        }
    }
}

/// Posterior of a scalar GP regression computed through the state-space form.
pub fn ssm_regression(r: &SsmRealization, times: &[f64], y: &[f64], noise_var: f64, smooth: bool) -> Result<SsmRegression> {
    let (traj, uniform, trans) = regression_filter(r, times, y, noise_var, &FilterOptions::default())?;
    let states = match (smooth, &uniform) {
        (false, _) => traj.filtered.clone(),
        (true, Some(d)) => rts_smooth_general(Dynamics::Uniform { ad: &d.ad, qd: &d.qd }, &traj)?,
        (true, None) => rts_smooth_general(Dynamics::Varying(&trans), &traj)?,
    };
    let mean = states.iter().map(|s| (&r.h * &s.mean)[(0, 0)]).collect();
    let var = states.iter().map(|s| (&r.h * &s.cov * r.h.transpose())[(0, 0)].max(0.0)).collect();
    Ok(SsmRegression { mean, var, log_likelihood: traj.log_likelihood })
}

/// Log marginal likelihood of a scalar regression problem without storing
/// states; on a uniform grid the gain is frozen once it has converged.
pub fn regression_log_likelihood(r: &SsmRealization, times: &[f64], y: &[f64], noise_var: f64) -> Result<f64> {
    let opts = FilterOptions { store: false, steady_state_tol: Some(1e-10), form: CovarianceForm::SquareRoot };
    Ok(regression_filter(r, times, y, noise_var, &opts)?.0.log_likelihood)
}
