//! Error metrics between estimated and reference signals.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{BenchError, Result};

fn check(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(BenchError::LengthMismatch(a.len(), b.len()));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn rms(x: &[f64]) -> f64 {
    (dot(x, x) / x.len().max(1) as f64).sqrt()
}

/// `RMS(estimate − truth) / RMS(truth)`.
pub fn nrmse(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    check(estimate, truth)?;
    let den = dot(truth, truth);
    if den == 0.0 || truth.is_empty() {
        return Err(BenchError::ZeroReference);
    }
    let num: f64 = estimate.iter().zip(truth).map(|(e, t)| (e - t) * (e - t)).sum();
    Ok((num / den).sqrt())
}

/// Squared cosine between two vectors.
fn assurance(a: &[f64], b: &[f64]) -> Result<f64> {
    let (aa, bb) = (dot(a, a), dot(b, b));
    if aa == 0.0 || bb == 0.0 {
        return Err(BenchError::ZeroReference);
    }
    let ab = dot(a, b);
    Ok((ab * ab / (aa * bb)).clamp(0.0, 1.0))
}

/// Time response assurance criterion `(xᵀy)² / (xᵀx · yᵀy)`.
pub fn trac(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    check(estimate, truth)?;
    assurance(estimate, truth)
}

/// One-sided amplitude spectrum `|X(f_k)|` for `k = 0..=N/2`.
pub fn amplitude_spectrum(x: &[f64]) -> Vec<f64> {
    let mut buf: Vec<Complex64> = x.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf.truncate(x.len() / 2 + 1);
    buf.iter().map(|c| c.norm()).collect()
}

/// Frequency response assurance criterion on amplitude spectra restricted
/// to `band` (Hz); `None` uses the full one-sided band.
pub fn frac(estimate: &[f64], truth: &[f64], dt: f64, band: Option<(f64, f64)>) -> Result<f64> {
    check(estimate, truth)?;
    let (se, st) = (amplitude_spectrum(estimate), amplitude_spectrum(truth));
    let df = 1.0 / (truth.len() as f64 * dt);
    let keep = |k: usize| band.is_none_or(|(lo, hi)| (lo..=hi).contains(&(k as f64 * df)));
    let (a, b): (Vec<f64>, Vec<f64>) =
        se.iter().zip(&st).enumerate().filter(|(k, _)| keep(*k)).map(|(_, (x, y))| (*x, *y)).unzip();
    assurance(&a, &b)
}

/// Static error `|true − mean(before release)|` and post-release standard deviation.
pub fn static_errors(estimate: &[f64], true_static: f64, release: usize) -> Result<(f64, f64)> {
    if release == 0 || release + 1 >= estimate.len() {
        return Err(BenchError::WindowTooShort(format!("release index {release} of {}", estimate.len())));
    }
    let (pre, post) = estimate.split_at(release);
    let (mean_pre, _) = mean_std(pre);
    let (_, sd) = mean_std(post);
    Ok(((true_static - mean_pre).abs(), sd))
}

pub fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len().max(1) as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn signal() -> Vec<f64> {
        (0..512).map(|k| (k as f64 * 0.07).sin() + 0.3 * (k as f64 * 0.31).cos()).collect()
    }

    #[test]
    fn identities() {
        let x = signal();
        assert_eq!(nrmse(&x, &x).unwrap(), 0.0);
        assert_eq!(nrmse(&vec![0.0; x.len()], &x).unwrap(), 1.0);
        let twice: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        assert!((nrmse(&twice, &x).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(trac(&x, &x).unwrap(), 1.0);
        assert_eq!(frac(&x, &x, 1e-3, None).unwrap(), 1.0);
        let a = [1.0, 0.0, 2.0, 0.0];
        let b = [0.0, 3.0, 0.0, -1.0];
        assert_eq!(trac(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn errors_on_bad_input() {
        assert!(matches!(nrmse(&[1.0], &[0.0]), Err(BenchError::ZeroReference)));
        assert!(matches!(nrmse(&[1.0, 2.0], &[1.0]), Err(BenchError::LengthMismatch(2, 1))));
        assert!(matches!(static_errors(&[1.0, 2.0], 1.0, 5), Err(BenchError::WindowTooShort(_))));
    }

    #[test]
    fn small_noise_keeps_assurance_high() {
        let x = signal();
        let p = rms(&x);
        // 40 dB SNR
        let y: Vec<f64> =
            x.iter().enumerate().map(|(k, v)| v + 0.01 * p * ((k * 7919 % 1000) as f64 / 500.0 - 1.0) * 3f64.sqrt()).collect();
        assert!(trac(&y, &x).unwrap() > 0.99);
        assert!(frac(&y, &x, 1e-3, None).unwrap() > 0.99);
    }

    #[test]
    fn static_error_examples() {
        let perfect = vec![5.0; 100];
        assert_eq!(static_errors(&perfect, 5.0, 50).unwrap(), (0.0, 0.0));
        let biased: Vec<f64> = (0..100).map(|k| if k < 50 { 5.3 } else { 0.0 }).collect();
        let (se, sd) = static_errors(&biased, 5.0, 50).unwrap();
        assert!((se - 0.3).abs() < 1e-12);
        assert_eq!(sd, 0.0);
    }

    #[test]
    fn frac_band_selects_lines() {
        let n = 1000;
        let dt = 1e-3;
        let x: Vec<f64> = (0..n).map(|k| (2.0 * std::f64::consts::PI * 50.0 * k as f64 * dt).sin()).collect();
        let y: Vec<f64> = (0..n).map(|k| (2.0 * std::f64::consts::PI * 200.0 * k as f64 * dt).sin()).collect();
        let mixed: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        assert!((frac(&mixed, &x, dt, Some((0.0, 100.0))).unwrap() - 1.0).abs() < 1e-12);
        assert!(frac(&mixed, &x, dt, None).unwrap() < 0.6);
    }

    proptest! {
        #[test]
        fn bounds_and_scale_invariance(
            seed in 0u64..1000,
            scale in 0.01f64..100.0,
        ) {
            let truth: Vec<f64> = (0..64).map(|k| ((k as u64 * 31 + seed) % 17) as f64 - 8.0).collect();
            let est: Vec<f64> = (0..64).map(|k| ((k as u64 * 13 + seed * 7) % 11) as f64 - 5.0).collect();
            prop_assume!(truth.iter().any(|v| *v != 0.0) && est.iter().any(|v| *v != 0.0));
            let t = trac(&est, &truth).unwrap();
            let f = frac(&est, &truth, 0.01, None).unwrap();
            prop_assert!((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&f));
            let n0 = nrmse(&est, &truth).unwrap();
            let es: Vec<f64> = est.iter().map(|v| v * scale).collect();
            let ts: Vec<f64> = truth.iter().map(|v| v * scale).collect();
            prop_assert!((nrmse(&es, &ts).unwrap() - n0).abs() < 1e-12 * n0.max(1.0));
            prop_assert!(n0 >= 0.0);
        }
    }
}
