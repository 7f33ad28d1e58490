//! State-space realizations of covariance functions.
//!
//! A realizable [`Kernel`] is compiled into a linear time-invariant SDE
//! `dz = F z dt + L dβ`, `f = H z`, with white-noise spectral density `Qc`.
//! Matérn-family leaves use the rational-spectrum companion form, the
//! canonical periodic kernel a bank of undamped resonators, and a product of
//! the two a Kronecker composition. Sums stack realizations block-diagonally.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::kernels::{Kernel, Smoothness};
use crate::linalg::{self, PoleCluster};
use crate::{Error, Result};

/// Options for compiling a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RealizeOptions {
    /// Truncation order `J` of the periodic cosine expansion.
    pub truncation: usize,
    /// Matérn order used to stand in for the squared exponential.
    pub squared_exponential_order: u32,
    /// Reference time `t0` at which the linear kernel's initial covariance holds.
    pub linear_t0: f64,
}

impl Default for RealizeOptions {
    fn default() -> Self {
        RealizeOptions { truncation: 6, squared_exponential_order: 3, linear_t0: 0.0 }
    }
}

/// Continuous-time companion-form realization of a kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct SsmRealization {
    pub f: DMatrix<f64>,
    pub l: DMatrix<f64>,
    /// 1×m output row.
    pub h: DMatrix<f64>,
    pub qc: DMatrix<f64>,
    /// Prior covariance of the state at the first time instant.
    pub p_init: DMatrix<f64>,
    /// Stationary covariance, present only for stationary kernels.
    pub p_inf: Option<DMatrix<f64>>,
    /// `λ = √(2ν)/l` of the Matérn factor, for Matérn-family and quasiperiodic realizations.
    pub decay_rate: Option<f64>,
}

impl SsmRealization {
    pub fn dim(&self) -> usize {
        self.f.nrows()
    }

    /// `L Qc Lᵀ`, the state-space diffusion matrix.
    pub fn diffusion(&self) -> DMatrix<f64> {
        &self.l * &self.qc * self.l.transpose()
    }

    /// Poles of the realization grouped by multiplicity.
    pub fn poles(&self) -> Vec<PoleCluster> {
        linalg::pole_clusters(&self.f, 1e-2)
    }

    /// Diagnostic text dump of all matrices.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (name, m) in [("F", &self.f), ("L", &self.l), ("H", &self.h), ("Qc", &self.qc), ("P_init", &self.p_init)] {
            out.push_str(&format!("# {name} {}x{}\n", m.nrows(), m.ncols()));
            out.push_str(&linalg::dump_matrix(m));
        }
        if let Some(p) = &self.p_inf {
            out.push_str(&format!("# P_inf {}x{}\n", p.nrows(), p.ncols()));
            out.push_str(&linalg::dump_matrix(p));
        }
        out
    }
}

/// Exact discretization over a fixed step.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSsm {
    pub ad: DMatrix<f64>,
    pub qd: DMatrix<f64>,
    pub dt: f64,
}

/// Truncated cosine-series expansion of the canonical periodic kernel,
/// `k(τ) ≈ Σⱼ q̂²_{j,J} cos(j ω₀ τ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicExpansion {
    pub truncation: usize,
    /// `q̂²_{j,J}` for `j = 0..=J`, already scaled by `σ²`.
    pub coefficients: Vec<f64>,
}

impl PeriodicExpansion {
    pub fn new(sigma: f64, l: f64, truncation: usize) -> Result<Self> {
        if truncation < 1 {
            return Err(Error::InvalidTruncation(truncation));
        }
        let inv_l2 = 1.0 / (l * l);
        let base = 1.0 / (2.0 * l * l);
        let fact = |n: usize| (1..=n).map(|k| k as f64).product::<f64>();
        let coefficients = (0..=truncation)
            .map(|j| {
                let mut s = 0.0;
                for i in 0..=((truncation - j) / 2) {
                    s += base.powi((j + 2 * i) as i32) / (fact(j + i) * fact(i));
                }
                let factor = if j == 0 { 1.0 } else { 2.0 };
                factor * sigma * sigma * (-inv_l2).exp() * s
            })
            .collect();
        Ok(PeriodicExpansion { truncation, coefficients })
    }

    pub fn eval(&self, tau: f64, omega0: f64) -> f64 {
        self.coefficients.iter().enumerate().map(|(j, q)| q * (j as f64 * omega0 * tau).cos()).sum()
    }

    /// Variance captured by the truncated series.
    pub fn total(&self) -> f64 {
        self.coefficients.iter().sum()
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Companion-form realization of a Matérn kernel with decay rate `lambda`.
/// `qc` is fixed by matching the stationary output variance to `σ²`.
fn matern_realization(p: u32, sigma: f64, lambda: f64) -> Result<SsmRealization> {
    let m = (p + 1) as usize;
    let mut f = DMatrix::<f64>::zeros(m, m);
    for i in 0..m - 1 {
        f[(i, i + 1)] = 1.0;
    }
    // (s + λ)^m = s^m + a_{m−1} s^{m−1} + … + a₀ with a_k = C(m, k) λ^{m−k}
    for k in 0..m {
        f[(m - 1, k)] = -binomial(m as u32, k as u32) * lambda.powi((m - k) as i32);
    }
    let mut l = DMatrix::<f64>::zeros(m, 1);
    l[(m - 1, 0)] = 1.0;
    let mut h = DMatrix::<f64>::zeros(1, m);
    h[(0, 0)] = 1.0;
    let unit = linalg::lyapunov(&f, &(&l * l.transpose()))?;
    let qc_val = sigma * sigma / unit[(0, 0)];
    let p_inf = unit * qc_val;
    Ok(SsmRealization {
        f,
        l,
        h,
        qc: DMatrix::from_element(1, 1, qc_val),
        p_init: p_inf.clone(),
        p_inf: Some(p_inf),
        decay_rate: Some(lambda),
    })
}

fn periodic_realization(sigma: f64, l: f64, t_period: f64, truncation: usize) -> Result<SsmRealization> {
    let exp = PeriodicExpansion::new(sigma, l, truncation)?;
    let w0 = 2.0 * std::f64::consts::PI / t_period;
    let m = 2 * (truncation + 1);
    let mut f = DMatrix::<f64>::zeros(m, m);
    let mut h = DMatrix::<f64>::zeros(1, m);
    let mut p = DMatrix::<f64>::zeros(m, m);
    for (j, q) in exp.coefficients.iter().enumerate() {
        let o = 2 * j;
        let wj = w0 * j as f64;
        f[(o, o + 1)] = -wj;
        f[(o + 1, o)] = wj;
        h[(0, o)] = 1.0;
        p[(o, o)] = *q;
        p[(o + 1, o + 1)] = *q;
    }
    Ok(SsmRealization {
        f,
        l: DMatrix::identity(m, m),
        h,
        qc: DMatrix::zeros(m, m),
        p_init: p.clone(),
        p_inf: Some(p),
        decay_rate: None,
    })
}

/// Matérn-family leaves: Matérn, exponential and squared exponential.
fn matern_family(kernel: &Kernel, opts: &RealizeOptions) -> Option<Result<SsmRealization>> {
    match kernel {
        Kernel::Matern { smoothness, sigma, l } => {
            let lambda = (2.0 * smoothness.nu()).sqrt() / l;
            Some(matern_realization(smoothness.order(), *sigma, lambda))
        }
        // exp(−τ/(2l)) is an Ornstein-Uhlenbeck process with rate 1/(2l)
        Kernel::Exponential { sigma, l } => Some(matern_realization(0, *sigma, 0.5 / l)),
        Kernel::SquaredExponential { sigma, l } => {
            let s = Smoothness::from_order(opts.squared_exponential_order);
            let lambda = (2.0 * s.nu()).sqrt() / l;
            Some(matern_realization(s.order(), *sigma, lambda))
        }
        _ => None,
    }
}

fn kronecker_product(q: &SsmRealization, per: &SsmRealization) -> SsmRealization {
    let nq = q.dim();
    let np = per.dim();
    let iq = DMatrix::<f64>::identity(nq, nq);
    let ip = DMatrix::<f64>::identity(np, np);
    let p_per = per.p_inf.as_ref().expect("periodic realization is stationary");
    let p_q = q.p_inf.as_ref().expect("Matérn realization is stationary");
    let p_inf = p_q.kronecker(p_per);
    SsmRealization {
        f: q.f.kronecker(&ip) + iq.kronecker(&per.f),
        l: q.l.kronecker(&ip),
        h: q.h.kronecker(&per.h),
        qc: q.qc.kronecker(p_per),
        p_init: p_inf.clone(),
        p_inf: Some(p_inf),
        decay_rate: q.decay_rate,
    }
}

fn stack(a: SsmRealization, b: SsmRealization) -> SsmRealization {
    let mut h = DMatrix::zeros(1, a.dim() + b.dim());
    h.view_mut((0, 0), (1, a.dim())).copy_from(&a.h);
    h.view_mut((0, a.dim()), (1, b.dim())).copy_from(&b.h);
    let p_inf = match (&a.p_inf, &b.p_inf) {
        (Some(pa), Some(pb)) => Some(linalg::block_diag(&[pa, pb])),
        _ => None,
    };
    SsmRealization {
        f: linalg::block_diag(&[&a.f, &b.f]),
        l: linalg::block_diag(&[&a.l, &b.l]),
        h,
        qc: linalg::block_diag(&[&a.qc, &b.qc]),
        p_init: linalg::block_diag(&[&a.p_init, &b.p_init]),
        p_inf,
        decay_rate: None,
    }
}

/// Compiles a kernel into its continuous-time state-space realization.
pub fn realize(kernel: &Kernel, opts: &RealizeOptions) -> Result<SsmRealization> {
    kernel.validate()?;
    if let Some(r) = matern_family(kernel, opts) {
        return r;
    }
    match kernel {
        Kernel::Periodic { sigma, l, t_period } => periodic_realization(*sigma, *l, *t_period, opts.truncation),
        Kernel::Constant { sigma } => {
            let v = DMatrix::from_element(1, 1, sigma * sigma);
            Ok(SsmRealization {
                f: DMatrix::zeros(1, 1),
                l: DMatrix::from_element(1, 1, 1.0),
                h: DMatrix::from_element(1, 1, 1.0),
                qc: DMatrix::zeros(1, 1),
                p_init: v.clone(),
                p_inf: Some(v),
                decay_rate: None,
            })
        }
        Kernel::Linear { sigma } => {
            let t0 = opts.linear_t0;
            Ok(SsmRealization {
                f: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
                l: DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
                h: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
                qc: DMatrix::zeros(1, 1),
                p_init: DMatrix::from_row_slice(2, 2, &[t0 * t0, t0, t0, 1.0]) * (sigma * sigma),
                p_inf: None,
                decay_rate: None,
            })
        }
        Kernel::Wiener { sigma } => Ok(SsmRealization {
            f: DMatrix::zeros(1, 1),
            l: DMatrix::from_element(1, 1, 1.0),
            h: DMatrix::from_element(1, 1, 1.0),
            qc: DMatrix::from_element(1, 1, sigma * sigma),
            p_init: DMatrix::zeros(1, 1),
            p_inf: None,
            decay_rate: None,
        }),
        Kernel::Sum(a, b) => Ok(stack(realize(a, opts)?, realize(b, opts)?)),
        Kernel::Product(a, b) => {
            let (per, other) = match (a.as_ref(), b.as_ref()) {
                (p @ Kernel::Periodic { .. }, o) | (o, p @ Kernel::Periodic { .. }) => (p, o),
                _ => {
                    return Err(Error::UnrealizableKernel(format!(
                        "product {kernel} needs a periodic factor and a Matérn-family factor"
                    )))
                }
            };
            let q = matern_family(other, opts).ok_or_else(|| {
                Error::UnrealizableKernel(format!("product {kernel}: `{other}` is not a Matérn-family kernel"))
            })??;
            let per = realize(per, opts)?;
            Ok(kronecker_product(&q, &per))
        }
        _ => unreachable!("Matérn-family leaves handled above"),
    }
}

/// Exact discretization `Ad = exp(F dt)`, `Qd = ∫ exp(F s) L Qc Lᵀ exp(Fᵀ s) ds`.
pub fn discretize(r: &SsmRealization, dt: f64) -> Result<DiscreteSsm> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    let (ad, qd) = linalg::matrix_fraction(&r.f, &r.diffusion(), dt);
    Ok(DiscreteSsm { ad, qd, dt })
}

fn spectral_abscissa(f: &DMatrix<f64>) -> (f64, f64) {
    let eig = f.complex_eigenvalues();
    let scale = eig.iter().map(|e| e.norm()).fold(0.0, f64::max);
    let max_re = eig.iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max);
    (max_re, scale)
}

/// Stationary state covariance: the Lyapunov solution for Hurwitz `F`,
/// otherwise the stored initial covariance.
pub fn stationary_covariance(r: &SsmRealization) -> Result<DMatrix<f64>> {
    let (max_re, scale) = spectral_abscissa(&r.f);
    let tol = 1e-9 * scale.max(1e-300);
    if max_re > tol {
        return Err(Error::NonStationary(format!("F has an unstable eigenvalue (Re = {max_re:e})")));
    }
    if max_re < -tol {
        let w = r.diffusion();
        if r.dim() <= 16 {
            return linalg::lyapunov(&r.f, &w);
        }
        return Ok(lyapunov_doubling(&r.f, &w, -max_re));
    }
    Ok(r.p_init.clone())
}

/// `P = ∫₀^∞ e^{Fs} W e^{Fᵀs} ds` by repeated doubling of the step
/// (used for larger Hurwitz realizations).
fn lyapunov_doubling(f: &DMatrix<f64>, w: &DMatrix<f64>, slowest_rate: f64) -> DMatrix<f64> {
    let h = 0.1 / linalg_norm(f).max(1e-12);
    let (mut ad, mut qd) = linalg::matrix_fraction(f, w, h);
    let mut t = h;
    let horizon = 40.0 / slowest_rate;
    while t < horizon {
        qd = &ad * &qd * ad.transpose() + &qd;
        ad = &ad * &ad;
        t *= 2.0;
    }
    linalg::symmetrize(&qd)
}

fn linalg_norm(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|v| v.abs()).fold(0.0, f64::max) * a.nrows() as f64
}

/// `H exp(F τ) P∞ Hᵀ`, the covariance implied by a stationary realization.
pub fn covariance_reconstruction(r: &SsmRealization, tau: f64) -> Result<f64> {
    if r.p_inf.is_none() {
        return Err(Error::NonStationary("realization has no stationary covariance".into()));
    }
    let p = stationary_covariance(r)?;
    let phi = linalg::expm(&(&r.f * tau.abs()));
    Ok((&r.h * phi * p * r.h.transpose())[(0, 0)])
}

/// Draws one prior path `f(t)` at sorted `times` by exact simulation of the SDE.
pub fn sample<R: Rng + ?Sized>(r: &SsmRealization, times: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let n = r.dim();
    let noise = |rng: &mut R| DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
    let mut z = linalg::psd_sqrt(&r.p_init) * noise(rng);
    let mut out = Vec::with_capacity(times.len());
    for (k, t) in times.iter().enumerate() {
        if k > 0 {
            let dt = t - times[k - 1];
            if dt < 0.0 {
                return Err(Error::InvalidArgument("times must be sorted ascending".into()));
            }
            if dt > 0.0 {
                let d = discretize(r, dt)?;
                z = &d.ad * &z + linalg::psd_sqrt(&d.qd) * noise(rng);
            }
        }
        out.push((&r.h * &z)[(0, 0)]);
    }
    Ok(out)
}
