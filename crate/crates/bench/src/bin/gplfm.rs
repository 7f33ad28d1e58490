use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gplfm_bench::config::run_seeds;
use gplfm_bench::metrics::{frac, nrmse, trac};
use gplfm_bench::output::{read_series_csv, render_report, write_bench, write_run_series, write_truth_csv};
use gplfm_bench::runner::{run_scenario, simulate_truth, train};
use gplfm_bench::{run_bench, BenchConfig, BenchError, Result, Scenario};

/// Input-state estimation with Gaussian-process latent force models on a
/// three-mass benchmark.
#[derive(Parser)]
#[command(name = "gplfm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML scenario matrix; defaults to the five built-in load cases.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Seeds per scenario (overrides the config).
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Also run the proposed kernel through the RTS smoother.
    #[arg(long)]
    smoother: bool,
    /// Restrict to these scenarios (repeatable).
    #[arg(long = "scenario")]
    scenarios: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the noise-free and measured record of each scenario.
    Simulate(Common),
    /// Fit both kernels of each scenario and print the hyperparameters.
    Train(Common),
    /// Train, estimate and score the first seed of each scenario.
    Estimate(Common),
    /// Run the full scenario matrix and write CSV, JSON and report files.
    Bench(Common),
    /// Score every `<x>` / `<x>_est` column pair of a series CSV.
    Metrics { file: PathBuf },
}

impl Common {
    fn resolve(&self) -> Result<(BenchConfig, Vec<Scenario>)> {
        let mut cfg = match &self.config {
            Some(p) => BenchConfig::load(p)?,
            None => BenchConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.seeds {
            cfg.seeds = n;
        }
        cfg.smoother |= self.smoother;
        let scenarios = cfg.select(&self.scenarios)?;
        Ok((cfg, scenarios))
    }

    fn out_dir(&self) -> Result<&Path> {
        std::fs::create_dir_all(&self.out_dir)?;
        Ok(&self.out_dir)
    }
}

fn simulate(c: &Common) -> Result<()> {
    let (cfg, scenarios) = c.resolve()?;
    let dir = c.out_dir()?;
    for sc in &scenarios {
        let truth = simulate_truth(sc, &run_seeds(cfg.seed, sc, 0)).map_err(|e| e.in_scenario(&sc.name))?;
        let path = dir.join(format!("truth_{}.csv", sc.name));
        write_truth_csv(&path, &truth)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn train_cmd(c: &Common) -> Result<()> {
    let (cfg, scenarios) = c.resolve()?;
    let dir = c.out_dir()?;
    let mut all = Vec::new();
    for sc in &scenarios {
        let seeds = run_seeds(cfg.seed, sc, 0);
        let ctx = |e: BenchError| e.in_scenario(&sc.name);
        let truth = simulate_truth(sc, &seeds).map_err(ctx)?;
        for (choice, seed) in [(&sc.proposed, seeds.training), (&sc.baseline, seeds.training.wrapping_add(1))] {
            let k = train(sc, choice, &truth, seed).map_err(ctx)?;
            let params: Vec<String> = k.kernel.hyperparameters().iter().map(|h| format!("{}={:.6e}", h.path, h.value)).collect();
            let nll = k.nll.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
            println!("{:<10} {:<21} nll {:>12}  {}", sc.name, k.label, nll, params.join(" "));
            all.push(serde_json::json!({ "scenario": sc.name, "trained": k }));
        }
    }
    let text = serde_json::to_string_pretty(&all).map_err(|e| BenchError::Io(e.into()))?;
    std::fs::write(dir.join("trained.json"), text + "\n")?;
    Ok(())
}

fn estimate_cmd(c: &Common) -> Result<()> {
    let (cfg, scenarios) = c.resolve()?;
    let dir = c.out_dir()?;
    let mut reports = Vec::new();
    for sc in &scenarios {
        let run = run_scenario(sc, 0, run_seeds(cfg.seed, sc, 0), cfg.smoother)?;
        for p in write_run_series(dir, &run)? {
            println!("{}", p.display());
        }
        for r in &run.reports {
            println!(
                "{:<10} {:<13} force NRMSE {:.4}  TRAC {:.4}  FRAC {:.4}  mean response NRMSE {:.4}",
                r.scenario,
                r.estimator,
                r.metrics.force.nrmse,
                r.metrics.force.trac,
                r.metrics.force.frac,
                r.metrics.mean_response_nrmse
            );
        }
        reports.extend(run.reports);
    }
    let text = serde_json::to_string_pretty(&reports).map_err(|e| BenchError::Io(e.into()))?;
    std::fs::write(dir.join("estimate.json"), text + "\n")?;
    Ok(())
}

fn bench(c: &Common) -> Result<()> {
    let (cfg, scenarios) = c.resolve()?;
    let dir = c.out_dir()?;
    let outcome = run_bench(&cfg, scenarios, |line| eprintln!("{line}"))?;
    write_bench(dir, &outcome)?;
    print!("{}", render_report(&outcome));
    Ok(())
}

fn metrics_cmd(file: &Path) -> Result<()> {
    let table = read_series_csv(file)?;
    println!("{:<10} {:>12} {:>10} {:>10}", "channel", "NRMSE", "TRAC", "FRAC");
    for (label, est, truth) in &table.pairs {
        println!(
            "{:<10} {:>12.6} {:>10.6} {:>10.6}",
            label,
            nrmse(est, truth)?,
            trac(est, truth)?,
            frac(est, truth, table.dt, None)?
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Simulate(c) => simulate(c),
        Command::Train(c) => train_cmd(c),
        Command::Estimate(c) => estimate_cmd(c),
        Command::Bench(c) => bench(c),
        Command::Metrics { file } => metrics_cmd(file),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
