//! Benchmark matrix configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::runner::RunSeeds;
use crate::scenario::Scenario;

/// A scenario matrix: which load cases, how many seeds, which estimators.
///
/// ```toml
/// seed = 42
/// seeds = 5
/// smoother = true
/// presets = ["sine", "step"]
///
/// [[scenarios]]          # optional fully specified extra cases
/// name = "sine-2hz"
/// ...
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Master seed; every run derives its own seeds from it.
    pub seed: u64,
    /// Noise realizations per scenario.
    pub seeds: usize,
    /// Also run the proposed kernel through the RTS smoother.
    pub smoother: bool,
    /// Write time-series CSV for the first seed of every scenario.
    pub series: bool,
    pub presets: Vec<String>,
    pub scenarios: Vec<Scenario>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            seed: 42,
            seeds: 5,
            smoother: false,
            series: true,
            presets: Scenario::defaults().into_iter().map(|s| s.name).collect(),
            scenarios: Vec::new(),
        }
    }
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Presets followed by the custom scenarios, validated, with unique names.
    pub fn resolve(&self) -> Result<Vec<Scenario>> {
        if self.seeds == 0 {
            return Err(BenchError::Config("`seeds` must be at least 1".into()));
        }
        let mut out = Vec::new();
        for sc in self.presets.iter().map(|p| Scenario::preset(p)).chain(self.scenarios.iter().cloned().map(Ok)) {
            let sc = sc?;
            sc.validate().map_err(|e| e.in_scenario(&sc.name))?;
            if out.iter().any(|o: &Scenario| o.name == sc.name) {
                return Err(BenchError::Config(format!("duplicate scenario name `{}`", sc.name)));
            }
            out.push(sc);
        }
        Ok(out)
    }

    /// Restricts the matrix to the named scenarios, in the order given.
    pub fn select(&self, names: &[String]) -> Result<Vec<Scenario>> {
        let all = self.resolve()?;
        if names.is_empty() {
            return Ok(all);
        }
        names
            .iter()
            .map(|n| {
                all.iter().find(|s| &s.name == n).cloned().ok_or_else(|| BenchError::Config(format!("no scenario named `{n}`")))
            })
            .collect()
    }
}

/// Seeds of run `seed_index` of `sc`. The stream depends on the scenario
/// name, so adding or reordering scenarios leaves other runs unchanged;
/// `sc.seed` offsets the master seed.
pub fn run_seeds(master: u64, sc: &Scenario, seed_index: usize) -> RunSeeds {
    // FNV-1a
    let name_hash = sc.name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
    RunSeeds::derive(master.wrapping_add(sc.seed), name_hash.wrapping_add(seed_index as u64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_cover_the_five_cases() {
        let cfg = BenchConfig::default();
        let names: Vec<String> = cfg.resolve().unwrap().into_iter().map(|s| s.name).collect();
        assert_eq!(names, ["sine", "random", "multisine", "impulse", "step"]);
        assert_eq!(cfg, BenchConfig::from_toml("").unwrap());
    }

    #[test]
    fn custom_scenarios_round_trip() {
        let mut sc = Scenario::preset("sine").unwrap();
        sc.name = "sine-short".into();
        sc.duration = 2.0;
        let cfg = BenchConfig { presets: vec!["step".into()], scenarios: vec![sc], seeds: 2, ..BenchConfig::default() };
        let text = toml::to_string(&cfg).unwrap();
        let back = BenchConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        let sel = back.select(&["sine-short".into()]).unwrap();
        assert_eq!(sel[0].duration, 2.0);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(BenchConfig::from_toml("seeds = 0").unwrap().resolve(), Err(BenchError::Config(_))));
        assert!(matches!(
            BenchConfig::from_toml("presets = [\"sine\", \"sine\"]").unwrap().resolve(),
            Err(BenchError::Config(_))
        ));
        assert!(matches!(BenchConfig::from_toml("presets = [\"wind\"]").unwrap().resolve(), Err(BenchError::Config(_))));
        assert!(BenchConfig::from_toml("colour = 1").is_err());
        assert!(BenchConfig::default().select(&["nope".into()]).is_err());
    }

    #[test]
    fn seeds_are_per_scenario() {
        let sine = Scenario::preset("sine").unwrap();
        let step = Scenario::preset("step").unwrap();
        assert_eq!(run_seeds(42, &sine, 0), run_seeds(42, &sine, 0));
        assert_ne!(run_seeds(42, &sine, 0), run_seeds(42, &sine, 1));
        assert_ne!(run_seeds(42, &sine, 0), run_seeds(42, &step, 0));
        assert_ne!(run_seeds(42, &sine, 0), run_seeds(7, &sine, 0));
    }
}
