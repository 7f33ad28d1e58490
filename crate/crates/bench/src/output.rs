//! CSV, JSON and plain-text artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::bench::{compare, summarize, BenchOutcome, Comparison, EstimatorSummary, Stats};
use crate::error::Result;
use crate::runner::{force_label, RunReport, ScenarioRun, Truth};
use gplfm_core::EstimationResult;

const SIG_DIGITS: usize = 12;

/// `printf("%.12g", x)`.
pub fn fmt_g(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0" } else { "0" }.into();
    }
    let sci = format!("{:.*e}", SIG_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent in scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= SIG_DIGITS as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        trim_zeros(&format!("{:.*}", (SIG_DIGITS as i32 - 1 - exp) as usize, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt_g(x: Option<f64>) -> String {
    x.map(fmt_g).unwrap_or_default()
}

fn file_stem(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '-' }).collect()
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_writer(fs::File::create(path)?))
}

fn csv_err(e: csv::Error) -> crate::BenchError {
    crate::BenchError::Io(std::io::Error::other(e))
}

/// Noise-free record and measurements: `t`, the force, every simulated
/// channel, then `<label>_meas` for each channel.
pub fn write_truth_csv(path: &Path, truth: &Truth) -> Result<()> {
    let labels: Vec<String> = truth.channels.iter().map(|c| c.label()).collect();
    let mut header = vec!["t".to_string(), force_label()];
    header.extend(labels.iter().cloned());
    header.extend(labels.iter().map(|l| format!("{l}_meas")));
    let mut w = writer(path)?;
    w.write_record(&header).map_err(csv_err)?;
    for k in 0..truth.times.len() {
        let mut row = vec![fmt_g(truth.times[k]), fmt_g(truth.load[k])];
        row.extend((0..labels.len()).map(|j| fmt_g(truth.responses[(k, j)])));
        row.extend((0..labels.len()).map(|j| fmt_g(truth.measured[(k, j)])));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Truth, estimate and estimate variance for the force and the nine
/// response channels: `t, force3, force3_est, force3_var, disp1, disp1_est, …`.
pub fn write_series_csv(path: &Path, truth: &Truth, est: &EstimationResult) -> Result<()> {
    let n_ch = est.response_mean.ncols();
    let mut header = vec!["t".to_string()];
    for label in std::iter::once(force_label()).chain(truth.channels[..n_ch].iter().map(|c| c.label())) {
        header.push(label.clone());
        header.push(format!("{label}_est"));
        header.push(format!("{label}_var"));
    }
    let mut w = writer(path)?;
    w.write_record(&header).map_err(csv_err)?;
    for k in 0..truth.times.len() {
        let mut row =
            vec![fmt_g(truth.times[k]), fmt_g(truth.load[k]), fmt_g(est.input_mean[(k, 0)]), fmt_g(est.input_var[(k, 0)])];
        for j in 0..n_ch {
            row.extend([truth.responses[(k, j)], est.response_mean[(k, j)], est.response_var[(k, j)]].map(fmt_g));
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn series_path(dir: &Path, scenario: &str, estimator: &str) -> PathBuf {
    dir.join(format!("series_{}_{}.csv", file_stem(scenario), file_stem(estimator)))
}

/// One series file per estimator of a run.
pub fn write_run_series(dir: &Path, run: &ScenarioRun) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for (r, est) in run.reports.iter().zip(&run.estimates) {
        let p = series_path(dir, &r.scenario, &r.estimator);
        write_series_csv(&p, &run.truth, est)?;
        out.push(p);
    }
    Ok(out)
}

/// One row per run with the headline metrics.
pub fn write_metrics_csv(path: &Path, reports: &[RunReport]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "scenario",
        "seed_index",
        "estimator",
        "kernel",
        "nll",
        "force_nrmse",
        "force_trac",
        "force_frac",
        "mean_response_nrmse",
        "se",
        "sd",
    ])
    .map_err(csv_err)?;
    for r in reports {
        let m = &r.metrics;
        w.write_record([
            r.scenario.clone(),
            r.seed_index.to_string(),
            r.estimator.clone(),
            r.kernel.label.clone(),
            opt_g(r.kernel.nll),
            fmt_g(m.force.nrmse),
            fmt_g(m.force.trac),
            fmt_g(m.force.frac),
            fmt_g(m.mean_response_nrmse),
            opt_g(m.se),
            opt_g(m.sd),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per run and channel, force included.
pub fn write_channel_metrics_csv(path: &Path, reports: &[RunReport]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["scenario", "seed_index", "estimator", "channel", "nrmse", "trac", "frac"]).map_err(csv_err)?;
    for r in reports {
        for c in std::iter::once(&r.metrics.force).chain(&r.metrics.channels) {
            w.write_record([
                r.scenario.clone(),
                r.seed_index.to_string(),
                r.estimator.clone(),
                c.label.clone(),
                fmt_g(c.nrmse),
                fmt_g(c.trac),
                fmt_g(c.frac),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub seed: u64,
    pub seeds: usize,
    pub smoother: bool,
    pub comparisons: Vec<Comparison>,
    pub estimators: Vec<EstimatorSummary>,
    pub runs: &'a [RunReport],
}

pub fn summary(outcome: &BenchOutcome) -> Summary<'_> {
    Summary {
        seed: outcome.config.seed,
        seeds: outcome.config.seeds,
        smoother: outcome.config.smoother,
        comparisons: compare(&outcome.reports),
        estimators: summarize(&outcome.reports),
        runs: &outcome.reports,
    }
}

const METRIC_NOTE: &str = "\
NRMSE = RMS(estimate - truth) / RMS(truth), against the noise-free record.
TRAC  = (x'y)^2 / ((x'x)(y'y)) on the time series.
FRAC  = the same squared cosine on one-sided FFT amplitude spectra over the full band.
SE/SD = |amplitude - mean| and standard deviation of the force estimate after the step.
";

fn stats_cell(s: &Stats) -> String {
    format!("{:.4} [{:.4}, {:.4}]", s.median, s.min, s.max)
}

/// Human-readable tables of the matrix.
pub fn render_report(outcome: &BenchOutcome) -> String {
    let s = summary(outcome);
    let mut out = String::new();
    let _ = writeln!(out, "Input-state estimation benchmark: master seed {}, {} seed(s) per scenario\n", s.seed, s.seeds);
    out.push_str(METRIC_NOTE);
    let _ = writeln!(out, "\nMedians over seeds, [min, max] for force NRMSE.\n");
    let _ = writeln!(
        out,
        "{:<10} {:<13} {:<21} {:<28} {:>9} {:>8} {:>8} {:>8} {:>8}",
        "scenario", "estimator", "kernel", "force NRMSE", "resp.", "TRAC", "FRAC", "SE", "SD"
    );
    for e in &s.estimators {
        let opt = |x: &Option<Stats>| x.map(|v| format!("{:.4}", v.median)).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{:<10} {:<13} {:<21} {:<28} {:>9.4} {:>8.4} {:>8.4} {:>8} {:>8}",
            e.scenario,
            e.estimator,
            e.kernel,
            stats_cell(&e.force_nrmse),
            e.mean_response_nrmse.median,
            e.force_trac.median,
            e.force_frac.median,
            opt(&e.se),
            opt(&e.sd)
        );
    }
    let _ = writeln!(out, "\nBaseline / proposed NRMSE ratios (median [min, max] over seeds):\n");
    let _ = writeln!(out, "{:<10} {:<28} {:<28}", "scenario", "force", "mean response");
    for c in &s.comparisons {
        let _ = writeln!(
            out,
            "{:<10} {:<28} {:<28}",
            c.scenario,
            stats_cell(&c.force_nrmse_ratio),
            stats_cell(&c.mean_response_nrmse_ratio)
        );
    }
    out
}

/// Writes `bench_metrics.csv`, `channel_metrics.csv`, `summary.json`,
/// `report.txt` and the first-seed series into `dir`.
pub fn write_bench(dir: &Path, outcome: &BenchOutcome) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = vec![dir.join("bench_metrics.csv"), dir.join("channel_metrics.csv")];
    write_metrics_csv(&written[0], &outcome.reports)?;
    write_channel_metrics_csv(&written[1], &outcome.reports)?;
    let json = serde_json::to_string_pretty(&summary(outcome)).map_err(|e| crate::BenchError::Io(e.into()))?;
    written.push(dir.join("summary.json"));
    fs::write(written.last().unwrap(), json + "\n")?;
    written.push(dir.join("report.txt"));
    fs::write(written.last().unwrap(), render_report(outcome))?;
    for run in &outcome.series {
        written.extend(write_run_series(dir, run)?);
    }
    Ok(written)
}

/// Column pairs `<x>` / `<x>_est` of a series CSV, with the sample step.
#[derive(Debug, Clone)]
pub struct SeriesTable {
    pub dt: f64,
    pub pairs: Vec<(String, Vec<f64>, Vec<f64>)>,
}

pub fn read_series_csv(path: &Path) -> Result<SeriesTable> {
    let bad = |m: String| crate::BenchError::Config(format!("{}: {m}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        for (j, field) in rec.iter().enumerate() {
            cols[j].push(field.trim().parse().map_err(|_| bad(format!("`{field}` is not a number")))?);
        }
    }
    let t = header.iter().position(|h| h == "t").ok_or_else(|| bad("no `t` column".into()))?;
    if cols[t].len() < 2 {
        return Err(bad("fewer than two rows".into()));
    }
    let dt = cols[t][1] - cols[t][0];
    let mut pairs = Vec::new();
    for (j, h) in header.iter().enumerate() {
        if let Some(e) = header.iter().position(|x| *x == format!("{h}_est")) {
            pairs.push((h.clone(), cols[e].clone(), cols[j].clone()));
        }
    }
    Ok(SeriesTable { dt, pairs })
}
