//! Ground-truth simulation, training, estimation and scoring of one scenario.

use gplfm_core::gplfm::{assemble, initial_state};
use gplfm_core::inference::{estimate, kalman_filter_with, rts_smooth, train_regression, FilterOptions};
use gplfm_core::kernels::ParamKind;
use gplfm_core::realization::{realize, RealizeOptions};
use gplfm_core::structural::{
    add_measurement_noise, channel_rms, modal_reduce, to_statespace, OutputDescriptor, OutputKind, StateSpaceModel,
};
use gplfm_core::{EstimationResult, Kernel};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{BenchError, Result};
use crate::metrics::{frac, mean_std, nrmse, trac};
use crate::scenario::{build_3dof, synthesize_load, KernelChoice, Load, Scenario, TrainingNoise, LOAD_DOF};

/// Seeds for the random parts of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RunSeeds {
    pub load: u64,
    pub noise: u64,
    pub training: u64,
}

impl RunSeeds {
    /// Independent seeds for run `stream` under `master`.
    pub fn derive(master: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master);
        rng.set_stream(stream);
        RunSeeds { load: rng.random(), noise: rng.random(), training: rng.random() }
    }
}

/// Displacement, velocity and acceleration at every DOF.
pub fn virtual_channels(n_dof: usize) -> Vec<OutputDescriptor> {
    [OutputKind::Displacement, OutputKind::Velocity, OutputKind::Acceleration]
        .into_iter()
        .flat_map(|k| (0..n_dof).map(move |d| OutputDescriptor::new(k, d)))
        .collect()
}

/// Simulated record: noise-free channels and their noisy measurements.
#[derive(Debug, Clone)]
pub struct Truth {
    pub times: Vec<f64>,
    pub load: Vec<f64>,
    pub channels: Vec<OutputDescriptor>,
    pub responses: DMatrix<f64>,
    pub measured: DMatrix<f64>,
}

impl Truth {
    pub fn column(&self, ch: &OutputDescriptor) -> Result<usize> {
        self.channels
            .iter()
            .position(|c| c == ch)
            .ok_or_else(|| BenchError::Config(format!("channel {} was not simulated", ch.label())))
    }
}

fn noise_q(sc: &Scenario, n_modes: usize) -> Vec<f64> {
    let mut q = vec![sc.filter.q_displ; n_modes];
    q.extend(std::iter::repeat_n(sc.filter.q_vel, n_modes));
    q
}

fn statespace(sc: &Scenario, outputs: &[OutputDescriptor]) -> Result<StateSpaceModel> {
    let red = modal_reduce(&build_3dof(), 3, &[])?;
    let r: Vec<f64> = outputs.iter().map(|o| sc.filter.r_for(o.kind)).collect();
    Ok(to_statespace(&red, outputs, &noise_q(sc, red.n_r()), &r)?)
}

pub fn simulate_truth(sc: &Scenario, seeds: &RunSeeds) -> Result<Truth> {
    sc.validate()?;
    let mut channels = virtual_channels(3);
    for o in sc.observations.iter().chain(std::iter::once(&sc.training_channel)) {
        if !channels.contains(o) {
            channels.push(o.clone());
        }
    }
    let load = synthesize_load(sc, seeds.load)?;
    let ss = statespace(sc, &channels)?;
    let u = DMatrix::from_column_slice(load.len(), 1, &load);
    let sim = ss.simulate(&u, sc.dt, None)?;
    let std: Vec<f64> = channel_rms(&sim.outputs).iter().map(|r| sc.noise_fraction * r).collect();
    let measured = add_measurement_noise(&sim.outputs, &std, &mut ChaCha8Rng::seed_from_u64(seeds.noise))?;
    Ok(Truth { times: sc.times()?, load, channels, responses: sim.outputs, measured })
}

/// Hyperparameters after training, with the achieved objective.
#[derive(Debug, Clone, Serialize)]
pub struct TrainedKernel {
    pub label: String,
    pub kernel: Kernel,
    pub nll: Option<f64>,
    pub evaluations: usize,
}

fn with_excitation_period(kernel: &Kernel, load: &Load) -> Result<Kernel> {
    let Some(f) = load.frequency() else { return Ok(kernel.clone()) };
    let values: Vec<f64> =
        kernel.hyperparameters().iter().map(|h| if h.kind == ParamKind::Period { 1.0 / f } else { h.value }).collect();
    Ok(kernel.with_hyperparameters(&values)?)
}

/// Fits `choice` to the leading window of the measured training channel.
pub fn train(sc: &Scenario, choice: &KernelChoice, truth: &Truth, seed: u64) -> Result<TrainedKernel> {
    let template = with_excitation_period(&choice.kernel, &sc.load)?;
    if !sc.training.enabled {
        return Ok(TrainedKernel { label: choice.label.clone(), kernel: template, nll: None, evaluations: 0 });
    }
    let col = truth.column(&sc.training_channel)?;
    let n_win = ((sc.training.window / sc.dt).round() as usize).min(truth.times.len());
    let idx: Vec<usize> = (0..n_win).step_by(sc.training.decimate).collect();
    if idx.len() < 3 {
        return Err(BenchError::WindowTooShort(format!("{} training samples", idx.len())));
    }
    let t: Vec<f64> = idx.iter().map(|&k| truth.times[k]).collect();
    let y: Vec<f64> = idx.iter().map(|&k| truth.measured[(k, col)]).collect();
    let r = sc.filter.r_for(sc.training_channel.kind);
    let noise_var = match sc.training.noise {
        TrainingNoise::FilterR => r,
        TrainingNoise::NoiseFraction => {
            let rms = (y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64).sqrt();
            (sc.noise_fraction * rms).powi(2).max(r)
        }
        TrainingNoise::Fixed(v) => v,
    };
    let mut cfg = sc.training.optimizer.clone();
    cfg.frozen.extend(choice.frozen.iter().cloned());
    cfg.seed = seed;
    let opts = RealizeOptions { truncation: sc.filter.truncation, ..RealizeOptions::default() };
    let res = train_regression(&template, &t, &y, noise_var, &opts, &cfg)?;
    Ok(TrainedKernel { label: choice.label.clone(), kernel: res.kernel, nll: Some(res.nll), evaluations: res.evaluations })
}

/// Joint input-state estimate from the measured observation channels.
pub fn estimate_with(sc: &Scenario, kernel: &Kernel, truth: &Truth, smoother: bool) -> Result<EstimationResult> {
    let ss = statespace(sc, &sc.observations)?;
    let opts = RealizeOptions { truncation: sc.filter.truncation, ..RealizeOptions::default() };
    let am = assemble(&ss, &[realize(kernel, &opts)?], sc.dt)?;
    let cols: Vec<usize> = sc.observations.iter().map(|o| truth.column(o)).collect::<Result<_>>()?;
    let y = truth.measured.select_columns(&cols);
    let n_s = ss.n_states();
    let init = initial_state(&am, None, &(DMatrix::identity(n_s, n_s) * sc.filter.p0), sc.filter.latent_init)?;
    let fopts = FilterOptions { store: true, steady_state_tol: sc.filter.steady_state_tol, form: sc.filter.form };
    let mut traj = kalman_filter_with(&am, &y, &init, &fopts)?;
    if smoother {
        traj = rts_smooth(&am, &traj)?;
    }
    let virt = statespace(sc, &truth.channels[..9])?;
    Ok(estimate(&am, &traj, Some(&virt))?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelMetrics {
    pub label: String,
    pub nrmse: f64,
    pub trac: f64,
    pub frac: f64,
}

fn score(label: String, est: &[f64], truth: &[f64], dt: f64) -> Result<ChannelMetrics> {
    Ok(ChannelMetrics { label, nrmse: nrmse(est, truth)?, trac: trac(est, truth)?, frac: frac(est, truth, dt, None)? })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub channels: Vec<ChannelMetrics>,
    pub mean_response_nrmse: f64,
    pub force: ChannelMetrics,
    /// Static error and scatter (N) of the force estimate once the step is applied.
    pub se: Option<f64>,
    pub sd: Option<f64>,
}

pub fn force_label() -> String {
    format!("force{}", LOAD_DOF + 1)
}

/// Scores an estimate against the noise-free record.
pub fn metrics(sc: &Scenario, truth: &Truth, est: &EstimationResult) -> Result<MetricsReport> {
    let mut channels = Vec::with_capacity(9);
    for (j, ch) in truth.channels[..9].iter().enumerate() {
        let e: Vec<f64> = est.response_mean.column(j).iter().copied().collect();
        let t: Vec<f64> = truth.responses.column(j).iter().copied().collect();
        channels.push(score(ch.label(), &e, &t, sc.dt)?);
    }
    let mean_response_nrmse = channels.iter().map(|c| c.nrmse).sum::<f64>() / channels.len() as f64;
    let f: Vec<f64> = est.input_mean.column(0).iter().copied().collect();
    let force = score(force_label(), &f, &truth.load, sc.dt)?;
    let (se, sd) = match sc.load {
        Load::Step { amplitude, time } => {
            let at = ((time / sc.dt).round() as usize).min(f.len());
            if f.len() - at < 2 {
                return Err(BenchError::WindowTooShort("no samples after the step".into()));
            }
            let (m, s) = mean_std(&f[at..]);
            (Some((amplitude - m).abs()), Some(s))
        }
        _ => (None, None),
    };
    Ok(MetricsReport { channels, mean_response_nrmse, force, se, sd })
}

/// One scored estimator within a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed_index: usize,
    pub seeds: RunSeeds,
    pub estimator: String,
    pub kernel: TrainedKernel,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub truth: Truth,
    pub reports: Vec<RunReport>,
    pub estimates: Vec<EstimationResult>,
}

/// Estimator names in run order.
pub fn estimators(smoother: bool) -> Vec<&'static str> {
    if smoother {
        vec!["proposed", "baseline", "proposed+rts"]
    } else {
        vec!["proposed", "baseline"]
    }
}

/// Simulates, trains, estimates and scores both kernels of a scenario.
pub fn run_scenario(sc: &Scenario, seed_index: usize, seeds: RunSeeds, smoother: bool) -> Result<ScenarioRun> {
    let inner = || -> Result<ScenarioRun> {
        let truth = simulate_truth(sc, &seeds)?;
        let proposed = train(sc, &sc.proposed, &truth, seeds.training)?;
        let baseline = train(sc, &sc.baseline, &truth, seeds.training.wrapping_add(1))?;
        let mut reports = Vec::new();
        let mut estimates = Vec::new();
        for name in estimators(smoother) {
            let (kernel, smooth) = match name {
                "baseline" => (&baseline, false),
                "proposed+rts" => (&proposed, true),
                _ => (&proposed, false),
            };
            let est = estimate_with(sc, &kernel.kernel, &truth, smooth)?;
            let m = metrics(sc, &truth, &est)?;
            reports.push(RunReport {
                scenario: sc.name.clone(),
                seed_index,
                seeds,
                estimator: name.to_string(),
                kernel: kernel.clone(),
                metrics: m,
            });
            estimates.push(est);
        }
        Ok(ScenarioRun { truth, reports, estimates })
    };
    inner().map_err(|e| e.in_scenario(&sc.name))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_differ_between_streams() {
        let a = RunSeeds::derive(42, 0);
        assert_eq!(a, RunSeeds::derive(42, 0));
        assert_ne!(a, RunSeeds::derive(42, 1));
        assert_ne!(a, RunSeeds::derive(43, 0));
        assert_ne!(a.load, a.noise);
    }

    #[test]
    fn injected_truth_scores_perfectly() {
        let mut sc = Scenario::preset("sine").unwrap();
        sc.duration = 2.0;
        let truth = simulate_truth(&sc, &RunSeeds::derive(1, 0)).unwrap();
        let n = truth.times.len();
        let est = EstimationResult {
            input_mean: DMatrix::from_column_slice(n, 1, &truth.load),
            input_var: DMatrix::zeros(n, 1),
            response_mean: truth.responses.columns(0, 9).into_owned(),
            response_var: DMatrix::zeros(n, 9),
        };
        let m = metrics(&sc, &truth, &est).unwrap();
        assert_eq!(m.mean_response_nrmse, 0.0);
        for c in m.channels.iter().chain(std::iter::once(&m.force)) {
            assert_eq!((c.nrmse, c.trac, c.frac), (0.0, 1.0, 1.0), "{}", c.label);
        }
    }

    #[test]
    fn measurement_noise_level() {
        let sc = Scenario::preset("random").unwrap();
        let truth = simulate_truth(&sc, &RunSeeds::derive(3, 0)).unwrap();
        let rms = channel_rms(&truth.responses);
        let err = channel_rms(&(&truth.measured - &truth.responses));
        for (r, e) in rms.iter().zip(&err) {
            assert!((e / r - 0.01).abs() < 1e-3, "{e} vs {r}");
        }
    }

    #[test]
    fn sine_period_follows_excitation() {
        let mut sc = Scenario::preset("sine").unwrap();
        sc.load = Load::Sine { amplitude: 1.0, frequency: 2.0 };
        let k = with_excitation_period(&sc.proposed.kernel, &sc.load).unwrap();
        assert_eq!(k, Kernel::periodic(0.1f64.sqrt(), 0.5, 0.5));
    }
}
