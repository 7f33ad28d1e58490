//! Covariance functions for one-dimensional, time-indexed Gaussian processes.
//!
//! A [`Kernel`] is a finite expression tree of leaf covariance functions
//! combined by sums and products. Leaves carry their own hyperparameters.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Half-integer Matérn smoothness `ν = p + 1/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Smoothness {
    p: u32,
}

impl Smoothness {
    pub const HALF: Smoothness = Smoothness { p: 0 };
    pub const THREE_HALVES: Smoothness = Smoothness { p: 1 };
    pub const FIVE_HALVES: Smoothness = Smoothness { p: 2 };

    pub fn from_order(p: u32) -> Self {
        Smoothness { p }
    }

    /// Accepts only half-integers `1/2, 3/2, 5/2, …`.
    pub fn from_nu(nu: f64) -> Result<Self> {
        let p = nu - 0.5;
        if !(p >= 0.0) || (p - p.round()).abs() > 1e-12 || p > 64.0 {
            return Err(Error::InvalidHyperparameter(format!("smoothness nu = {nu} is not a half-integer >= 1/2")));
        }
        Ok(Smoothness { p: p.round() as u32 })
    }

    /// Polynomial order `p = ν − 1/2`.
    pub fn order(self) -> u32 {
        self.p
    }

    pub fn nu(self) -> f64 {
        self.p as f64 + 0.5
    }
}

/// Covariance function expression tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelSpec", into = "KernelSpec")]
pub enum Kernel {
    /// `σ² exp(−τ²/(2l²))`
    SquaredExponential {
        sigma: f64,
        l: f64,
    },
    /// `σ² exp(−τ/(2l))`. Distinct from Matérn ν = 1/2, which decays as `exp(−τ/l)`.
    Exponential {
        sigma: f64,
        l: f64,
    },
    Matern {
        smoothness: Smoothness,
        sigma: f64,
        l: f64,
    },
    /// Canonical periodic kernel `σ² exp(−2 sin²(ω₀τ/2)/l²)`, `ω₀ = 2π/t_period`.
    Periodic {
        sigma: f64,
        l: f64,
        t_period: f64,
    },
    Constant {
        sigma: f64,
    },
    /// `σ² t t′`, defined for non-negative times.
    Linear {
        sigma: f64,
    },
    /// Brownian motion `σ² min(t, t′)`, defined for non-negative times.
    Wiener {
        sigma: f64,
    },
    Sum(Box<Kernel>, Box<Kernel>),
    Product(Box<Kernel>, Box<Kernel>),
}

/// Which kind of positive quantity a hyperparameter is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Magnitude,
    LengthScale,
    Period,
}

/// One named, positive hyperparameter of a kernel tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameter {
    /// Dotted location in the tree, e.g. `right.left.l`.
    pub path: String,
    pub kind: ParamKind,
    pub value: f64,
}

impl Kernel {
    pub fn matern(nu: f64, sigma: f64, l: f64) -> Result<Self> {
        let k = Kernel::Matern { smoothness: Smoothness::from_nu(nu)?, sigma, l };
        k.validate()?;
        Ok(k)
    }

    pub fn periodic(sigma: f64, l: f64, t_period: f64) -> Self {
        Kernel::Periodic { sigma, l, t_period }
    }

    pub fn sum(a: Kernel, b: Kernel) -> Self {
        Kernel::Sum(Box::new(a), Box::new(b))
    }

    pub fn product(a: Kernel, b: Kernel) -> Self {
        Kernel::Product(Box::new(a), Box::new(b))
    }

    /// Periodic kernel damped by a unit-magnitude Matérn envelope.
    pub fn quasiperiodic(sigma: f64, l: f64, t_period: f64, nu: f64, l_matern: f64) -> Result<Self> {
        Ok(Kernel::product(Kernel::periodic(sigma, l, t_period), Kernel::matern(nu, 1.0, l_matern)?))
    }

    /// Constant offset plus quasiperiodic dynamics.
    pub fn biased_quasiperiodic(sigma_constant: f64, sigma: f64, l: f64, t_period: f64, nu: f64, l_matern: f64) -> Result<Self> {
        Ok(Kernel::sum(Kernel::Constant { sigma: sigma_constant }, Kernel::quasiperiodic(sigma, l, t_period, nu, l_matern)?))
    }

    /// Checks positivity of all hyperparameters in the tree.
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidHyperparameter(format!("{name} must be positive and finite, got {v}")))
            }
        };
        match self {
            Kernel::SquaredExponential { sigma, l } | Kernel::Exponential { sigma, l } | Kernel::Matern { sigma, l, .. } => {
                positive("sigma", *sigma)?;
                positive("l", *l)
            }
            Kernel::Periodic { sigma, l, t_period } => {
                positive("sigma", *sigma)?;
                positive("l", *l)?;
                positive("t_period", *t_period)
            }
            Kernel::Constant { sigma } | Kernel::Linear { sigma } | Kernel::Wiener { sigma } => positive("sigma", *sigma),
            Kernel::Sum(a, b) | Kernel::Product(a, b) => {
                a.validate()?;
                b.validate()
            }
        }
    }

    pub fn is_stationary(&self) -> bool {
        match self {
            Kernel::Linear { .. } | Kernel::Wiener { .. } => false,
            Kernel::Sum(a, b) | Kernel::Product(a, b) => a.is_stationary() && b.is_stationary(),
            _ => true,
        }
    }

    /// Evaluates `k(t, t′)`.
    pub fn eval(&self, t: f64, t2: f64) -> Result<f64> {
        let tau = (t - t2).abs();
        Ok(match self {
            Kernel::SquaredExponential { sigma, l } => sigma * sigma * (-tau * tau / (2.0 * l * l)).exp(),
            Kernel::Exponential { sigma, l } => sigma * sigma * (-tau / (2.0 * l)).exp(),
            Kernel::Matern { smoothness, sigma, l } => matern_half_integer(smoothness.order(), *sigma, *l, tau),
            Kernel::Periodic { sigma, l, t_period } => {
                let w0 = 2.0 * std::f64::consts::PI / t_period;
                let s = (0.5 * w0 * tau).sin();
                sigma * sigma * (-2.0 * s * s / (l * l)).exp()
            }
            Kernel::Constant { sigma } => sigma * sigma,
            Kernel::Linear { sigma } => {
                check_non_negative("linear", t, t2)?;
                sigma * sigma * t * t2
            }
            Kernel::Wiener { sigma } => {
                check_non_negative("wiener", t, t2)?;
                sigma * sigma * t.min(t2)
            }
            Kernel::Sum(a, b) => a.eval(t, t2)? + b.eval(t, t2)?,
            Kernel::Product(a, b) => a.eval(t, t2)? * b.eval(t, t2)?,
        })
    }

    /// Gram matrix `K[i, j] = k(tᵢ, tⱼ)`.
    pub fn gram(&self, times: &[f64]) -> Result<DMatrix<f64>> {
        self.cross_gram(times, times)
    }

    /// Cross-covariance `K[i, j] = k(aᵢ, bⱼ)`.
    pub fn cross_gram(&self, a: &[f64], b: &[f64]) -> Result<DMatrix<f64>> {
        if a.iter().chain(b).any(|t| !t.is_finite()) {
            return Err(Error::Domain("times must be finite".into()));
        }
        let mut k = DMatrix::zeros(a.len(), b.len());
        for (i, ti) in a.iter().enumerate() {
            for (j, tj) in b.iter().enumerate() {
                k[(i, j)] = self.eval(*ti, *tj)?;
            }
        }
        Ok(k)
    }

    /// Largest magnitude hyperparameter squared found in the tree; used to
    /// scale Gram-matrix jitter.
    pub fn variance_scale(&self) -> f64 {
        match self {
            Kernel::SquaredExponential { sigma, .. }
            | Kernel::Exponential { sigma, .. }
            | Kernel::Matern { sigma, .. }
            | Kernel::Periodic { sigma, .. }
            | Kernel::Constant { sigma }
            | Kernel::Linear { sigma }
            | Kernel::Wiener { sigma } => sigma * sigma,
            Kernel::Sum(a, b) => a.variance_scale() + b.variance_scale(),
            Kernel::Product(a, b) => a.variance_scale() * b.variance_scale(),
        }
    }

    /// All positive hyperparameters in depth-first order.
    pub fn hyperparameters(&self) -> Vec<Hyperparameter> {
        let mut out = Vec::new();
        self.collect("", &mut out);
        out
    }

    fn collect(&self, prefix: &str, out: &mut Vec<Hyperparameter>) {
        let mut push = |name: &str, kind, value| out.push(Hyperparameter { path: format!("{prefix}{name}"), kind, value });
        match self {
            Kernel::SquaredExponential { sigma, l } | Kernel::Exponential { sigma, l } | Kernel::Matern { sigma, l, .. } => {
                push("sigma", ParamKind::Magnitude, *sigma);
                push("l", ParamKind::LengthScale, *l);
            }
            Kernel::Periodic { sigma, l, t_period } => {
                push("sigma", ParamKind::Magnitude, *sigma);
                push("l", ParamKind::LengthScale, *l);
                push("t_period", ParamKind::Period, *t_period);
            }
            Kernel::Constant { sigma } | Kernel::Linear { sigma } | Kernel::Wiener { sigma } => {
                push("sigma", ParamKind::Magnitude, *sigma);
            }
            Kernel::Sum(a, b) | Kernel::Product(a, b) => {
                a.collect(&format!("{prefix}left."), out);
                b.collect(&format!("{prefix}right."), out);
            }
        }
    }

    /// Rebuilds the tree with hyperparameters taken in the order of
    /// [`Kernel::hyperparameters`].
    pub fn with_hyperparameters(&self, values: &[f64]) -> Result<Kernel> {
        let mut it = values.iter().copied();
        let k = self.rebuild(&mut it)?;
        if it.next().is_some() {
            return Err(Error::DimensionMismatch("too many hyperparameter values".into()));
        }
        k.validate()?;
        Ok(k)
    }

    fn rebuild(&self, it: &mut impl Iterator<Item = f64>) -> Result<Kernel> {
        let mut next = || it.next().ok_or_else(|| Error::DimensionMismatch("too few hyperparameter values".into()));
        Ok(match self {
            Kernel::SquaredExponential { .. } => Kernel::SquaredExponential { sigma: next()?, l: next()? },
            Kernel::Exponential { .. } => Kernel::Exponential { sigma: next()?, l: next()? },
            Kernel::Matern { smoothness, .. } => Kernel::Matern { smoothness: *smoothness, sigma: next()?, l: next()? },
            Kernel::Periodic { .. } => Kernel::Periodic { sigma: next()?, l: next()?, t_period: next()? },
            Kernel::Constant { .. } => Kernel::Constant { sigma: next()? },
            Kernel::Linear { .. } => Kernel::Linear { sigma: next()? },
            Kernel::Wiener { .. } => Kernel::Wiener { sigma: next()? },
            Kernel::Sum(a, b) => {
                let a = a.rebuild(it)?;
                Kernel::sum(a, b.rebuild(it)?)
            }
            Kernel::Product(a, b) => {
                let a = a.rebuild(it)?;
                Kernel::product(a, b.rebuild(it)?)
            }
        })
    }

    /// Short human-readable label.
    pub fn label(&self) -> String {
        match self {
            Kernel::SquaredExponential { .. } => "squared_exponential".into(),
            Kernel::Exponential { .. } => "exponential".into(),
            Kernel::Matern { smoothness, .. } => format!("matern{}", smoothness.nu()),
            Kernel::Periodic { .. } => "periodic".into(),
            Kernel::Constant { .. } => "constant".into(),
            Kernel::Linear { .. } => "linear".into(),
            Kernel::Wiener { .. } => "wiener".into(),
            Kernel::Sum(a, b) => format!("({} + {})", a.label(), b.label()),
            Kernel::Product(a, b) => format!("({} * {})", a.label(), b.label()),
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

fn check_non_negative(name: &str, t: f64, t2: f64) -> Result<()> {
    if t < 0.0 || t2 < 0.0 {
        Err(Error::Domain(format!("{name} kernel needs non-negative times, got ({t}, {t2})")))
    } else {
        Ok(())
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Closed-form Matérn covariance for `ν = p + 1/2`:
/// an exponential decay at rate `√(2ν)/l` times a polynomial of order `p`.
pub fn matern_half_integer(p: u32, sigma: f64, l: f64, tau: f64) -> f64 {
    let nu = p as f64 + 0.5;
    let tau = tau.abs();
    let r = (2.0 * nu).sqrt() * tau / l;
    let x = 2.0 * r;
    let mut poly = 0.0;
    for i in 0..=p {
        let c = factorial(p + i) / (factorial(i) * factorial(p - i));
        poly += c * x.powi((p - i) as i32);
    }
    sigma * sigma * (-r).exp() * factorial(p) / factorial(2 * p) * poly
}

/// Structured-text form of a kernel tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_period: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<KernelSpec>,
}

impl TryFrom<KernelSpec> for Kernel {
    type Error = Error;

    fn try_from(spec: KernelSpec) -> Result<Kernel> {
        let need =
            |v: Option<f64>, name: &str| v.ok_or_else(|| Error::Parse(format!("kernel `{}` needs field `{name}`", spec.kind)));
        let kernel = match spec.kind.as_str() {
            "squared_exponential" => Kernel::SquaredExponential { sigma: need(spec.sigma, "sigma")?, l: need(spec.l, "l")? },
            "exponential" => Kernel::Exponential { sigma: need(spec.sigma, "sigma")?, l: need(spec.l, "l")? },
            "matern" => Kernel::Matern {
                smoothness: Smoothness::from_nu(need(spec.nu, "nu")?)?,
                sigma: need(spec.sigma, "sigma")?,
                l: need(spec.l, "l")?,
            },
            "periodic" => Kernel::Periodic {
                sigma: need(spec.sigma, "sigma")?,
                l: need(spec.l, "l")?,
                t_period: need(spec.t_period, "t_period")?,
            },
            "constant" => Kernel::Constant { sigma: need(spec.sigma, "sigma")? },
            "linear" => Kernel::Linear { sigma: need(spec.sigma, "sigma")? },
            "wiener" => Kernel::Wiener { sigma: need(spec.sigma, "sigma")? },
            "sum" | "product" => {
                if spec.children.len() < 2 {
                    return Err(Error::Parse(format!("`{}` needs at least two children", spec.kind)));
                }
                let mut kids = spec.children.into_iter().map(Kernel::try_from);
                let first = kids.next().unwrap()?;
                let is_sum = spec.kind == "sum";
                kids.try_fold(first, |acc, k| {
                    let k = k?;
                    Ok::<_, Error>(if is_sum { Kernel::sum(acc, k) } else { Kernel::product(acc, k) })
                })?
            }
            other => return Err(Error::Parse(format!("unknown kernel type `{other}`"))),
        };
        kernel.validate()?;
        Ok(kernel)
    }
}

impl From<Kernel> for KernelSpec {
    fn from(k: Kernel) -> KernelSpec {
        let leaf = |kind: &str, sigma: f64, l: Option<f64>, nu: Option<f64>, t_period: Option<f64>| KernelSpec {
            kind: kind.into(),
            sigma: Some(sigma),
            l,
            nu,
            t_period,
            children: Vec::new(),
        };
        let node = |kind: &str, a: Kernel, b: Kernel| KernelSpec {
            kind: kind.into(),
            sigma: None,
            l: None,
            nu: None,
            t_period: None,
            children: vec![a.into(), b.into()],
        };
        match k {
            Kernel::SquaredExponential { sigma, l } => leaf("squared_exponential", sigma, Some(l), None, None),
            Kernel::Exponential { sigma, l } => leaf("exponential", sigma, Some(l), None, None),
            Kernel::Matern { smoothness, sigma, l } => leaf("matern", sigma, Some(l), Some(smoothness.nu()), None),
            Kernel::Periodic { sigma, l, t_period } => leaf("periodic", sigma, Some(l), None, Some(t_period)),
            Kernel::Constant { sigma } => leaf("constant", sigma, None, None, None),
            Kernel::Linear { sigma } => leaf("linear", sigma, None, None, None),
            Kernel::Wiener { sigma } => leaf("wiener", sigma, None, None, None),
            Kernel::Sum(a, b) => node("sum", *a, *b),
            Kernel::Product(a, b) => node("product", *a, *b),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gamma_half_integer(nu: f64) -> f64 {
        // Γ(1/2) = √π, Γ(ν+1) = ν Γ(ν)
        let mut g = std::f64::consts::PI.sqrt();
        let mut x = 0.5;
        while x < nu - 1e-12 {
            g *= x;
            x += 1.0;
        }
        g
    }

    /// `K_ν(x) = ∫₀^∞ exp(−x cosh t) cosh(ν t) dt`, trapezoidal rule.
    fn bessel_k(nu: f64, x: f64) -> f64 {
        let h: f64 = 2e-3;
        let mut sum = 0.5 * (-x).exp();
        let mut t = h;
        loop {
            let v = (-x * t.cosh()).exp() * (nu * t).cosh();
            sum += v;
            if v < 1e-30 * sum {
                break;
            }
            t += h;
        }
        sum * h
    }

    fn matern_bessel(nu: f64, sigma: f64, l: f64, tau: f64) -> f64 {
        let r = (2.0 * nu).sqrt() * tau / l;
        sigma * sigma * 2f64.powf(1.0 - nu) / gamma_half_integer(nu) * r.powf(nu) * bessel_k(nu, r)
    }

    #[test]
    fn matern_at_zero_lag_is_variance() {
        let k = Kernel::matern(1.5, 0.5, 0.5).unwrap();
        assert_eq!(k.eval(0.3, 0.3).unwrap(), 0.25);
        assert_eq!(matern_half_integer(0, 1.3, 0.2, 0.0), 1.3 * 1.3);
    }

    #[test]
    fn matern_closed_form_matches_bessel_definition() {
        let (sigma, l) = (0.5, 0.5);
        for p in 0..=4u32 {
            let nu = p as f64 + 0.5;
            for i in 1..=50 {
                let tau = 10.0 * l * i as f64 / 50.0;
                let closed = matern_half_integer(p, sigma, l, tau);
                let oracle = matern_bessel(nu, sigma, l, tau);
                let rel = (closed - oracle).abs() / oracle.abs();
                assert!(rel < 1e-9, "p={p} tau={tau}: {closed} vs {oracle} rel {rel}");
            }
        }
    }

    #[test]
    fn matern_five_halves_reference_value() {
        // σ = l = 0.5, τ = 0.5 → r = √5, k = σ²(1 + r + r²/3) e^{-r}
        let r = 5f64.sqrt();
        let expected = 0.25 * (1.0 + r + r * r / 3.0) * (-r).exp();
        let v = matern_half_integer(2, 0.5, 0.5, 0.5);
        assert!((v - expected).abs() < 1e-15);
        assert!((v - matern_bessel(2.5, 0.5, 0.5, 0.5)).abs() < 1e-12);
    }

    #[test]
    fn matern_decays_at_long_range() {
        let l = 0.4;
        assert!(matern_half_integer(1, 1.0, l, 100.0 * l) < 1e-10);
    }

    #[test]
    fn exponential_leaf_uses_half_rate() {
        let k = Kernel::Exponential { sigma: 1.0, l: 0.5 };
        assert!((k.eval(0.0, 1.0).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        let m = Kernel::matern(0.5, 1.0, 0.5).unwrap();
        assert!((m.eval(0.0, 1.0).unwrap() - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn periodic_full_period_returns_variance() {
        let k = Kernel::periodic(0.7, 0.5, 1.3);
        let v = k.eval(0.2, 0.2 + 1.3).unwrap();
        assert!((v - 0.49).abs() < 1e-14);
    }

    #[test]
    fn wiener_and_linear() {
        let w = Kernel::Wiener { sigma: 2.0 };
        assert_eq!(w.eval(3.0, 5.0).unwrap(), 12.0);
        assert!(matches!(w.eval(-1.0, 2.0), Err(Error::Domain(_))));
        let lin = Kernel::Linear { sigma: 0.5 };
        assert_eq!(lin.eval(2.0, 3.0).unwrap(), 1.5);
        assert!(lin.gram(&[0.0, -0.1]).is_err());
    }

    #[test]
    fn gram_examples() {
        let c = Kernel::Constant { sigma: 0.5 };
        let g = c.gram(&[0.0, 1.0, 7.0]).unwrap();
        assert!(g.iter().all(|v| *v == 0.25));

        let k = Kernel::matern(1.5, 0.5, 0.5).unwrap();
        let g1 = k.gram(&[2.0]).unwrap();
        assert_eq!(g1.shape(), (1, 1));
        assert_eq!(g1[(0, 0)], 0.25);

        let times = [0.0, 0.5, 1.0];
        let g = k.gram(&times).unwrap();
        for i in 0..3 {
            assert_eq!(g[(i, i)], 0.25);
            for j in 0..3 {
                assert_eq!(g[(i, j)], g[(j, i)]);
                let r = 3f64.sqrt() * (times[i] - times[j]).abs() / 0.5;
                assert!((g[(i, j)] - 0.25 * (1.0 + r) * (-r).exp()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn sum_and_product_compose_exactly() {
        let a = Kernel::matern(2.5, 0.8, 0.3).unwrap();
        let b = Kernel::periodic(0.6, 0.9, 0.7);
        let s = Kernel::sum(a.clone(), b.clone());
        let p = Kernel::product(a.clone(), b.clone());
        for (t, u) in [(0.0, 0.1), (0.4, 1.7), (2.0, 0.3)] {
            let (ka, kb) = (a.eval(t, u).unwrap(), b.eval(t, u).unwrap());
            assert_eq!(s.eval(t, u).unwrap(), ka + kb);
            assert_eq!(p.eval(t, u).unwrap(), ka * kb);
        }
    }

    #[test]
    fn smoothness_rejects_non_half_integers() {
        assert!(Smoothness::from_nu(1.0).is_err());
        assert!(Smoothness::from_nu(0.0).is_err());
        assert_eq!(Smoothness::from_nu(3.5).unwrap().order(), 3);
    }

    #[test]
    fn hyperparameter_round_trip_and_validation() {
        let k = Kernel::biased_quasiperiodic(0.4, 0.3, 0.5, 0.3, 1.5, 1.3).unwrap();
        let hp = k.hyperparameters();
        let paths: Vec<&str> = hp.iter().map(|h| h.path.as_str()).collect();
        assert_eq!(
            paths,
            ["left.sigma", "right.left.sigma", "right.left.l", "right.left.t_period", "right.right.sigma", "right.right.l"]
        );
        let values: Vec<f64> = hp.iter().map(|h| h.value).collect();
        assert_eq!(k.with_hyperparameters(&values).unwrap(), k);
        let mut bad = values.clone();
        bad[2] = -1.0;
        assert!(k.with_hyperparameters(&bad).is_err());
        assert!(k.with_hyperparameters(&values[..3]).is_err());
    }

    #[test]
    fn structured_text_uses_canonical_field_names() {
        let k = Kernel::quasiperiodic(0.2, 0.3, 1.0, 1.5, 1.3).unwrap();
        let json = serde_json_like(&k);
        assert!(json.contains("\"type\":\"product\""));
        assert!(json.contains("\"t_period\":1.0"));
        assert!(json.contains("\"nu\":1.5"));
        let spec =
            KernelSpec { kind: "matern".into(), sigma: Some(1.0), l: Some(0.2), nu: Some(2.0), t_period: None, children: vec![] };
        assert!(Kernel::try_from(spec).is_err());
    }

    // Minimal serializer check without pulling a format crate into the core.
    fn serde_json_like(k: &Kernel) -> String {
        fn go(s: &KernelSpec) -> String {
            let mut parts = vec![format!("\"type\":\"{}\"", s.kind)];
            for (name, v) in [("sigma", s.sigma), ("l", s.l), ("nu", s.nu), ("t_period", s.t_period)] {
                if let Some(v) = v {
                    parts.push(format!("\"{name}\":{v:?}"));
                }
            }
            if !s.children.is_empty() {
                let kids: Vec<String> = s.children.iter().map(go).collect();
                parts.push(format!("\"children\":[{}]", kids.join(",")));
            }
            format!("{{{}}}", parts.join(","))
        }
        go(&KernelSpec::from(k.clone()))
    }

    fn arb_leaf() -> impl Strategy<Value = Kernel> {
        let pos = 0.1f64..3.0;
        prop_oneof![
            (pos.clone(), pos.clone()).prop_map(|(s, l)| Kernel::SquaredExponential { sigma: s, l }),
            (pos.clone(), pos.clone()).prop_map(|(s, l)| Kernel::Exponential { sigma: s, l }),
            (0u32..4, pos.clone(), pos.clone()).prop_map(|(p, s, l)| Kernel::Matern {
                smoothness: Smoothness::from_order(p),
                sigma: s,
                l
            }),
            (pos.clone(), pos.clone(), pos.clone()).prop_map(|(s, l, t)| Kernel::periodic(s, l, t)),
            pos.clone().prop_map(|s| Kernel::Constant { sigma: s }),
        ]
    }

    fn arb_kernel() -> impl Strategy<Value = Kernel> {
        arb_leaf().prop_recursive(2, 6, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Kernel::sum(a, b)),
                (inner.clone(), inner).prop_map(|(a, b)| Kernel::product(a, b)),
            ]
        })
    }

    proptest! {
        #[test]
        fn eval_is_symmetric(k in arb_kernel(), t in -5.0f64..5.0, u in -5.0f64..5.0) {
            prop_assert_eq!(k.eval(t, u).unwrap(), k.eval(u, t).unwrap());
        }

        #[test]
        fn stationary_kernels_are_shift_invariant(k in arb_kernel(), t in 0.0f64..3.0, u in 0.0f64..3.0, c in -2.0f64..2.0) {
            let a = k.eval(t, u).unwrap();
            let b = k.eval(t + c, u + c).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * k.variance_scale().max(1.0));
        }

        #[test]
        fn gram_is_positive_semidefinite(
            k in arb_kernel(),
            times in proptest::collection::vec(0.0f64..4.0, 1..20),
        ) {
            let g = k.gram(&times).unwrap();
            let jitter = 1e-10 * k.variance_scale();
            let shifted = &g + DMatrix::<f64>::identity(times.len(), times.len()) * jitter;
            let eig = shifted.symmetric_eigenvalues();
            let tol = 1e-12 * k.variance_scale() * times.len() as f64;
            prop_assert!(eig.iter().all(|e| *e >= -tol), "eigenvalues {:?}", eig);
        }

        #[test]
        fn non_stationary_gram_is_psd(sigma in 0.1f64..2.0, times in proptest::collection::vec(0.0f64..4.0, 1..20)) {
            for k in [Kernel::Wiener { sigma }, Kernel::Linear { sigma }] {
                let g = k.gram(&times).unwrap();
                let eig = g.symmetric_eigenvalues();
                let tol = 1e-12 * k.variance_scale() * 16.0 * times.len() as f64;
                prop_assert!(eig.iter().all(|e| *e >= -tol));
            }
        }
    }
}
