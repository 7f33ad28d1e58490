//! The 3-DOF benchmark system, load cases and their configuration.

use std::f64::consts::PI;

use gplfm_core::inference::{CovarianceForm, TrainingConfig};
use gplfm_core::structural::{OutputDescriptor, OutputKind, StructuralModel};
use gplfm_core::{Kernel, LatentInitPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

pub const MASSES: [f64; 3] = [100.0, 80.0, 80.0];
pub const SPRINGS: [f64; 3] = [2e5, 1.5e5, 1.5e5];
pub const RAYLEIGH: (f64, f64) = (2e-2, 3e-4);
/// Zero-based DOF carrying the load.
pub const LOAD_DOF: usize = 2;

/// Three masses in a fixed-base chain, loaded at the third mass.
pub fn build_3dof() -> StructuralModel {
    StructuralModel::chain(&MASSES, &SPRINGS, RAYLEIGH.0, RAYLEIGH.1, &[LOAD_DOF]).expect("valid 3-DOF parameters")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Load {
    Sine {
        amplitude: f64,
        frequency: f64,
    },
    /// Gaussian white noise with standard deviation `amplitude`.
    Random {
        amplitude: f64,
    },
    /// Equal-amplitude sines on the `1/duration` grid inside `band` with
    /// uniform random phases, scaled to RMS `amplitude`.
    Multisine {
        amplitude: f64,
        band: [f64; 2],
    },
    /// One `dt`-wide rectangle carrying `impulse` (N·s) at `time`.
    Impulse {
        impulse: f64,
        time: f64,
    },
    Step {
        amplitude: f64,
        time: f64,
    },
}

impl Load {
    pub fn name(&self) -> &'static str {
        match self {
            Load::Sine { .. } => "sine",
            Load::Random { .. } => "random",
            Load::Multisine { .. } => "multisine",
            Load::Impulse { .. } => "impulse",
            Load::Step { .. } => "step",
        }
    }

    /// Fundamental frequency of the excitation when it has one.
    pub fn frequency(&self) -> Option<f64> {
        match self {
            Load::Sine { frequency, .. } => Some(*frequency),
            _ => None,
        }
    }
}

/// Kernel with a report label and hyperparameters excluded from training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelChoice {
    pub label: String,
    pub kernel: Kernel,
    #[serde(default)]
    pub frozen: Vec<String>,
}

/// How the noise variance of the training regression is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingNoise {
    /// The filter's `R` entry for the training channel kind.
    FilterR,
    /// `(noise_fraction · RMS(measured training signal))²`.
    NoiseFraction,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSettings {
    pub enabled: bool,
    /// Length (s) of the leading segment used for training.
    pub window: f64,
    /// Keep every `decimate`-th sample of the window.
    pub decimate: usize,
    pub noise: TrainingNoise,
    pub optimizer: TrainingConfig,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        TrainingSettings {
            enabled: true,
            window: 4.0,
            decimate: 10,
            noise: TrainingNoise::NoiseFraction,
            optimizer: TrainingConfig::default(),
        }
    }
}

/// Filter noise levels and prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSettings {
    pub q_displ: f64,
    pub q_vel: f64,
    pub r_displ: f64,
    pub r_vel: f64,
    pub r_acc: f64,
    pub r_strain: f64,
    /// Variance of the initial structural state.
    pub p0: f64,
    pub latent_init: LatentInitPolicy,
    pub truncation: usize,
    pub steady_state_tol: Option<f64>,
    pub form: CovarianceForm,
}

impl Default for FilterSettings {
    fn default() -> Self {
        FilterSettings {
            q_displ: 1e-20,
            q_vel: 1e-10,
            r_displ: 1e-15,
            r_vel: 1e-12,
            r_acc: 1e-12,
            r_strain: 1e-15,
            p0: 0.0,
            latent_init: LatentInitPolicy::Stationary,
            truncation: 6,
            steady_state_tol: None,
            form: CovarianceForm::SquareRoot,
        }
    }
}

impl FilterSettings {
    pub fn r_for(&self, kind: OutputKind) -> f64 {
        match kind {
            OutputKind::Displacement => self.r_displ,
            OutputKind::Velocity => self.r_vel,
            OutputKind::Acceleration => self.r_acc,
            OutputKind::StrainProxy => self.r_strain,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub load: Load,
    pub proposed: KernelChoice,
    pub baseline: KernelChoice,
    pub observations: Vec<OutputDescriptor>,
    pub training_channel: OutputDescriptor,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Measurement noise standard deviation as a fraction of each channel's RMS.
    #[serde(default = "default_noise")]
    pub noise_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub training: TrainingSettings,
    #[serde(default)]
    pub filter: FilterSettings,
}

fn default_duration() -> f64 {
    10.0
}
fn default_dt() -> f64 {
    1e-3
}
fn default_noise() -> f64 {
    0.01
}

fn choice(label: &str, kernel: Kernel, frozen: &[&str]) -> KernelChoice {
    KernelChoice { label: label.into(), kernel, frozen: frozen.iter().map(|s| s.to_string()).collect() }
}

fn matern15(var: f64, l: f64) -> Kernel {
    Kernel::matern(1.5, var.sqrt(), l).expect("valid Matérn")
}

impl Scenario {
    fn base(name: &str, load: Load, proposed: KernelChoice, baseline: KernelChoice, channel: OutputDescriptor) -> Self {
        Scenario {
            name: name.into(),
            load,
            proposed,
            baseline,
            observations: vec![channel.clone()],
            training_channel: channel,
            duration: default_duration(),
            dt: default_dt(),
            noise_fraction: default_noise(),
            seed: 0,
            training: TrainingSettings::default(),
            filter: FilterSettings::default(),
        }
    }

    /// The five reference load cases with their initial hyperparameters.
    pub fn defaults() -> Vec<Scenario> {
        ["sine", "random", "multisine", "impulse", "step"].iter().map(|n| Scenario::preset(n).expect("known preset")).collect()
    }

    pub fn preset(name: &str) -> Result<Scenario> {
        let acc3 = OutputDescriptor::new(OutputKind::Acceleration, LOAD_DOF);
        let disp3 = OutputDescriptor::new(OutputKind::Displacement, LOAD_DOF);
        let qp_frozen = ["right.sigma"];
        Ok(match name {
            "sine" => Scenario::base(
                name,
                Load::Sine { amplitude: 1.0, frequency: 1.0 },
                choice("periodic", Kernel::periodic(0.1f64.sqrt(), 0.5, 1.0), &["t_period"]),
                choice("matern1.5", matern15(5.0, 0.01), &[]),
                acc3,
            ),
            "random" => Scenario::base(
                name,
                Load::Random { amplitude: 1.0 },
                choice("wiener", Kernel::Wiener { sigma: 1e-4f64.sqrt() }, &[]),
                choice("matern1.5", matern15(5.0, 0.01), &[]),
                acc3,
            ),
            "multisine" => Scenario::base(
                name,
                Load::Multisine { amplitude: 1.0, band: [0.0, 20.0] },
                choice("quasiperiodic", Kernel::quasiperiodic(2e-2f64.sqrt(), 0.3, 1.0, 1.5, 1.3)?, &qp_frozen),
                choice("matern1.5", matern15(5.0, 0.01), &[]),
                acc3,
            ),
            "impulse" => Scenario::base(
                name,
                Load::Impulse { impulse: 1.0, time: 1.0 },
                choice("quasiperiodic", Kernel::quasiperiodic(0.6f64.sqrt(), 0.25, 0.3, 1.5, 1.0)?, &qp_frozen),
                choice("matern0.5", Kernel::matern(0.5, 5f64.sqrt(), 0.01)?, &[]),
                acc3,
            ),
            "step" => Scenario::base(
                name,
                Load::Step { amplitude: 1.0, time: 0.0 },
                choice(
                    "biased-quasiperiodic",
                    Kernel::biased_quasiperiodic(0.2f64.sqrt(), 0.2f64.sqrt(), 0.3, 0.3, 1.5, 1.3)?,
                    &["right.right.sigma"],
                ),
                choice(
                    "biased-matern0.5",
                    Kernel::sum(Kernel::Constant { sigma: 0.2f64.sqrt() }, Kernel::matern(0.5, 0.2f64.sqrt(), 0.3)?),
                    &[],
                ),
                disp3,
            ),
            other => return Err(BenchError::Config(format!("unknown scenario preset `{other}`"))),
        })
    }

    pub fn n_samples(&self) -> Result<usize> {
        let n = self.duration / self.dt;
        if !(self.dt > 0.0 && self.duration > 0.0) || (n - n.round()).abs() > 1e-6 * n.max(1.0) {
            return Err(BenchError::Config(format!("duration {} is not an integral multiple of dt {}", self.duration, self.dt)));
        }
        Ok(n.round() as usize)
    }

    pub fn times(&self) -> Result<Vec<f64>> {
        Ok((0..self.n_samples()?).map(|k| k as f64 * self.dt).collect())
    }

    pub fn validate(&self) -> Result<()> {
        self.n_samples()?;
        if !(self.noise_fraction >= 0.0) {
            return Err(BenchError::Config("noise_fraction must be non-negative".into()));
        }
        if self.observations.is_empty() {
            return Err(BenchError::Config("at least one observation channel is required".into()));
        }
        if self.training.decimate == 0 || !(self.training.window > 0.0) {
            return Err(BenchError::Config("training window and decimation must be positive".into()));
        }
        if let Load::Multisine { band, .. } = self.load {
            let nyquist = 0.5 / self.dt;
            if band[1] >= nyquist {
                return Err(BenchError::BandExceedsNyquist { band: band[1], nyquist });
            }
            if !(band[0] >= 0.0 && band[1] > band[0]) {
                return Err(BenchError::Config(format!("invalid band {band:?}")));
            }
        }
        self.proposed.kernel.validate()?;
        self.baseline.kernel.validate()?;
        Ok(())
    }
}

/// Load time history sampled at `k·dt`; `seed` drives the random cases.
pub fn synthesize_load(sc: &Scenario, seed: u64) -> Result<Vec<f64>> {
    sc.validate()?;
    let n = sc.n_samples()?;
    let dt = sc.dt;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(match sc.load {
        Load::Sine { amplitude, frequency } => (0..n).map(|k| amplitude * (2.0 * PI * frequency * k as f64 * dt).sin()).collect(),
        Load::Random { amplitude } => (0..n).map(|_| amplitude * rng.sample::<f64, _>(StandardNormal)).collect(),
        Load::Multisine { amplitude, band } => {
            let df = 1.0 / sc.duration;
            let lines: Vec<f64> = (1..)
                .map(|j| j as f64 * df)
                .take_while(|f| *f <= band[1] + 1e-9 * df)
                .filter(|f| *f >= band[0] - 1e-9 * df)
                .collect();
            if lines.is_empty() {
                return Err(BenchError::Config(format!("band {band:?} holds no frequency line at resolution {df} Hz")));
            }
            let phases: Vec<f64> = lines.iter().map(|_| rng.random_range(0.0..2.0 * PI)).collect();
            let a = amplitude * (2.0 / lines.len() as f64).sqrt();
            (0..n)
                .map(|k| {
                    let t = k as f64 * dt;
                    lines.iter().zip(&phases).map(|(f, p)| a * (2.0 * PI * f * t + p).sin()).sum()
                })
                .collect()
        }
        Load::Impulse { impulse, time } => {
            let at = (time / dt).round() as usize;
            if at >= n {
                return Err(BenchError::Config(format!("impulse time {time} s outside the record")));
            }
            (0..n).map(|k| if k == at { impulse / dt } else { 0.0 }).collect()
        }
        Load::Step { amplitude, time } => {
            let at = (time / dt).round() as usize;
            (0..n).map(|k| if k >= at { amplitude } else { 0.0 }).collect()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::amplitude_spectrum;
    use gplfm_core::structural::normal_modes;

    #[test]
    fn reference_system() {
        let m = build_3dof();
        assert_eq!(m.m.diagonal().as_slice(), &MASSES);
        let (w, _) = normal_modes(&m).unwrap();
        let hz: Vec<f64> = w.iter().map(|w| w / (2.0 * PI)).collect();
        for (f, r) in hz.iter().zip([3.26, 8.52, 12.16]) {
            assert!((f - r).abs() < 0.01, "{hz:?}");
        }
    }

    #[test]
    fn sine_samples() {
        let mut sc = Scenario::preset("sine").unwrap();
        sc.duration = 1.0;
        let u = synthesize_load(&sc, 0).unwrap();
        assert_eq!(u.len(), 1000);
        let peak = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 1.0).abs() < 1e-12);
    }

    #[test]
    fn multisine_stays_in_band() {
        let sc = Scenario::preset("multisine").unwrap();
        let u = synthesize_load(&sc, 7).unwrap();
        let spec = amplitude_spectrum(&u);
        let df = 1.0 / sc.duration;
        let (mut inside, mut outside) = (0.0f64, 0.0f64);
        for (k, a) in spec.iter().enumerate() {
            let f = k as f64 * df;
            if f <= 20.0 + 1e-9 {
                inside = inside.max(a * a);
            } else {
                outside = outside.max(a * a);
            }
        }
        assert!(outside < 1e-10 * inside, "{outside:e} vs {inside:e}");
        let rms = (u.iter().map(|v| v * v).sum::<f64>() / u.len() as f64).sqrt();
        assert!((rms - 1.0).abs() < 1e-9);
        assert_ne!(u, synthesize_load(&sc, 8).unwrap());
        assert_eq!(u, synthesize_load(&sc, 7).unwrap());
    }

    #[test]
    fn band_above_nyquist_is_rejected() {
        let mut sc = Scenario::preset("multisine").unwrap();
        sc.load = Load::Multisine { amplitude: 1.0, band: [0.0, 600.0] };
        assert!(matches!(synthesize_load(&sc, 0), Err(BenchError::BandExceedsNyquist { .. })));
    }

    #[test]
    fn step_mean_after_step() {
        let mut sc = Scenario::preset("step").unwrap();
        sc.load = Load::Step { amplitude: 2.5, time: 3.0 };
        let u = synthesize_load(&sc, 0).unwrap();
        let post = &u[3000..];
        assert_eq!(post.iter().sum::<f64>() / post.len() as f64, 2.5);
        assert!(u[..3000].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn impulse_carries_its_area() {
        let sc = Scenario::preset("impulse").unwrap();
        let u = synthesize_load(&sc, 0).unwrap();
        assert!((u.iter().sum::<f64>() * sc.dt - 1.0).abs() < 1e-12);
        assert_eq!(u.iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn non_integral_duration_is_rejected() {
        let mut sc = Scenario::preset("sine").unwrap();
        sc.duration = 1.0005;
        assert!(matches!(sc.n_samples(), Err(BenchError::Config(_))));
    }

    #[test]
    fn presets_round_trip_through_toml() {
        for sc in Scenario::defaults() {
            let text = toml::to_string(&sc).unwrap();
            let back: Scenario = toml::from_str(&text).unwrap();
            assert_eq!(back, sc);
        }
    }
}
