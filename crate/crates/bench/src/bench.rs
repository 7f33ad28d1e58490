//! Scenario matrix execution and aggregation over seeds.

use serde::Serialize;

use crate::config::{run_seeds, BenchConfig};
use crate::error::Result;
use crate::runner::{run_scenario, RunReport, ScenarioRun};
use crate::scenario::Scenario;

/// Everything produced by one pass over the matrix.
#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub config: BenchConfig,
    pub scenarios: Vec<Scenario>,
    pub reports: Vec<RunReport>,
    /// First-seed runs kept for time-series output, when requested.
    pub series: Vec<ScenarioRun>,
}

/// Runs every scenario for `config.seeds` seeds. `progress` receives one
/// line per finished run.
pub fn run_bench(config: &BenchConfig, scenarios: Vec<Scenario>, mut progress: impl FnMut(&str)) -> Result<BenchOutcome> {
    let mut reports = Vec::new();
    let mut series = Vec::new();
    for sc in &scenarios {
        for i in 0..config.seeds {
            let run = run_scenario(sc, i, run_seeds(config.seed, sc, i), config.smoother)?;
            for r in &run.reports {
                progress(&format!("{} seed {} {}: force NRMSE {:.4}", sc.name, i, r.estimator, r.metrics.force.nrmse));
            }
            reports.extend(run.reports.iter().cloned());
            if i == 0 && config.series {
                series.push(run);
            }
        }
    }
    Ok(BenchOutcome { config: config.clone(), scenarios, reports, series })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub median: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
        Some(Stats { median, mean: v.iter().sum::<f64>() / n as f64, min: v[0], max: v[n - 1] })
    }
}

/// One estimator of one scenario, summarized over seeds.
#[derive(Debug, Clone, Serialize)]
pub struct EstimatorSummary {
    pub scenario: String,
    pub estimator: String,
    pub kernel: String,
    pub runs: usize,
    pub force_nrmse: Stats,
    pub force_trac: Stats,
    pub force_frac: Stats,
    pub mean_response_nrmse: Stats,
    pub se: Option<Stats>,
    pub sd: Option<Stats>,
}

/// Baseline over proposed error ratios per seed, summarized.
#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub scenario: String,
    pub force_nrmse_ratio: Stats,
    pub mean_response_nrmse_ratio: Stats,
}

fn of_runs<'a>(reports: &'a [RunReport], scenario: &'a str, estimator: &'a str) -> impl Iterator<Item = &'a RunReport> {
    reports.iter().filter(move |r| r.scenario == scenario && r.estimator == estimator)
}

pub fn summarize(reports: &[RunReport]) -> Vec<EstimatorSummary> {
    let mut keys: Vec<(&str, &str)> = Vec::new();
    for r in reports {
        if !keys.contains(&(r.scenario.as_str(), r.estimator.as_str())) {
            keys.push((&r.scenario, &r.estimator));
        }
    }
    keys.into_iter()
        .filter_map(|(sc, est)| {
            let runs: Vec<&RunReport> = of_runs(reports, sc, est).collect();
            let pick = |f: &dyn Fn(&RunReport) -> Option<f64>| Stats::of(&runs.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
            Some(EstimatorSummary {
                scenario: sc.to_string(),
                estimator: est.to_string(),
                kernel: runs[0].kernel.label.clone(),
                runs: runs.len(),
                force_nrmse: pick(&|r| Some(r.metrics.force.nrmse))?,
                force_trac: pick(&|r| Some(r.metrics.force.trac))?,
                force_frac: pick(&|r| Some(r.metrics.force.frac))?,
                mean_response_nrmse: pick(&|r| Some(r.metrics.mean_response_nrmse))?,
                se: pick(&|r| r.metrics.se),
                sd: pick(&|r| r.metrics.sd),
            })
        })
        .collect()
}

/// Per-seed `baseline / proposed` ratios of force and mean-response NRMSE.
pub fn compare(reports: &[RunReport]) -> Vec<Comparison> {
    let mut names: Vec<&str> = Vec::new();
    for r in reports {
        if !names.contains(&r.scenario.as_str()) {
            names.push(&r.scenario);
        }
    }
    names
        .into_iter()
        .filter_map(|sc| {
            let (mut force, mut resp) = (Vec::new(), Vec::new());
            for p in of_runs(reports, sc, "proposed") {
                if let Some(b) = of_runs(reports, sc, "baseline").find(|b| b.seed_index == p.seed_index) {
                    force.push(b.metrics.force.nrmse / p.metrics.force.nrmse);
                    resp.push(b.metrics.mean_response_nrmse / p.metrics.mean_response_nrmse);
                }
            }
            Some(Comparison {
                scenario: sc.to_string(),
                force_nrmse_ratio: Stats::of(&force)?,
                mean_response_nrmse_ratio: Stats::of(&resp)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_median() {
        let s = Stats::of(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!((s.median, s.mean, s.min, s.max), (2.0, 2.0, 1.0, 3.0));
        assert_eq!(Stats::of(&[4.0, 1.0, 2.0, 3.0]).unwrap().median, 2.5);
        assert!(Stats::of(&[]).is_none());
    }

    #[test]
    fn short_matrix_runs_and_aggregates() {
        let mut sc = Scenario::preset("sine").unwrap();
        sc.duration = 2.0;
        sc.training.enabled = false;
        let cfg = BenchConfig { seeds: 2, smoother: true, ..BenchConfig::default() };
        let mut lines = 0;
        let out = run_bench(&cfg, vec![sc], |_| lines += 1).unwrap();
        assert_eq!(out.reports.len(), 6);
        assert_eq!(lines, 6);
        assert_eq!(out.series.len(), 1);
        let sum = summarize(&out.reports);
        assert_eq!(sum.len(), 3);
        assert!(sum.iter().all(|s| s.runs == 2 && s.se.is_none()));
        let cmp = compare(&out.reports);
        assert_eq!(cmp.len(), 1);
        assert!(cmp[0].force_nrmse_ratio.min > 0.0);
    }
}
