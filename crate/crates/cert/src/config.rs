//! Flat key-value run configuration with command-line overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use timebin_core::certify::Scheme;
use timebin_core::four_photon::DephasingSupport;
use timebin_core::sampling::{ExperimentConfig, ShotBudget};

use crate::error::CliError;

/// One value or a list; a list of bin counts yields one ensemble per entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(usize),
    Many(Vec<usize>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<usize> {
        match self {
            OneOrMany::One(n) => vec![*n],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scheme: String,
    pub n_bins: OneOrMany,
    pub purity: f64,
    pub random_phases: bool,
    pub phase_correction: bool,
    pub coupler_noise_halfwidth: f64,
    pub noise_per_shot: bool,
    pub budget_population: u64,
    pub budget_phase: u64,
    pub budget_walk: u64,
    pub trials: usize,
    pub seed: u64,
    pub exact_mode: bool,
    /// `full` or `paired`; only read by the four-photon schemes.
    pub four_photon_support: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let d = ExperimentConfig::default();
        RunConfig {
            scheme: d.scheme.name().to_string(),
            n_bins: OneOrMany::One(d.n_bins),
            purity: d.purity,
            random_phases: d.random_phases,
            phase_correction: d.phase_correction,
            coupler_noise_halfwidth: d.coupler_noise_halfwidth,
            noise_per_shot: d.noise_per_shot,
            budget_population: d.budget.n_population,
            budget_phase: d.budget.n_phase,
            budget_walk: d.budget.n_walk,
            trials: d.trials,
            seed: d.seed,
            exact_mode: d.exact_mode,
            four_photon_support: "full".to_string(),
        }
    }
}

/// Parses `key=value` with the value read as a TOML literal, falling back to a bare string.
pub fn parse_override(s: &str) -> Result<(String, toml::Value), CliError> {
    let (k, v) = s.split_once('=').ok_or_else(|| CliError::Config(format!("override `{s}` is not key=value")))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(CliError::Config(format!("override `{s}` has an empty key")));
    }
    let v = v.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {v}")) {
        Ok(mut t) => t.remove("v").expect("key just parsed"),
        Err(_) => toml::Value::String(v.to_string()),
    };
    Ok((k.to_string(), value))
}

impl RunConfig {
    pub fn from_table(table: toml::Table) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::Value::Table(table).try_into().map_err(|e| CliError::Config(format!("{e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Reads a TOML config, or the config snapshot embedded in a run manifest.
    pub fn load(path: Option<&Path>, overrides: &[(String, toml::Value)]) -> Result<Self, CliError> {
        let mut table = match path {
            None => toml::Table::new(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                if p.extension().is_some_and(|e| e == "json") {
                    let m: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                    let snap = m.get("config").cloned().unwrap_or(m);
                    let cfg: RunConfig = serde_json::from_value(snap).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                    toml::Table::try_from(cfg).map_err(|e| CliError::Config(e.to_string()))?
                } else {
                    text.parse::<toml::Table>().map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
                }
            }
        };
        for (k, v) in overrides {
            table.insert(k.clone(), v.clone());
        }
        Self::from_table(table)
    }

    pub fn scheme(&self) -> Result<Scheme, CliError> {
        Scheme::parse(&self.scheme).ok_or_else(|| CliError::Config(format!("unknown scheme `{}`", self.scheme)))
    }

    pub fn support(&self) -> Result<DephasingSupport, CliError> {
        match self.four_photon_support.as_str() {
            "full" => Ok(DephasingSupport::Full),
            "paired" => Ok(DephasingSupport::Paired),
            s => Err(CliError::Config(format!("four_photon_support must be `full` or `paired`, got `{s}`"))),
        }
    }

    pub fn is_four_photon(&self) -> bool {
        matches!(self.scheme(), Ok(Scheme::MultiPair | Scheme::PhaseEnhanced))
    }

    /// Rejects anything the simulator would refuse, before any file is written.
    pub fn check(&self) -> Result<(), CliError> {
        self.scheme()?;
        self.support()?;
        if self.n_bins.values().is_empty() {
            return Err(CliError::Config("n_bins list is empty".into()));
        }
        if self.is_four_photon() {
            if !self.exact_mode {
                return Err(CliError::Config(format!("{} runs in exact mode only", self.scheme)));
            }
            if self.n_bins.values().iter().any(|&n| n != 4) {
                return Err(CliError::Config("four-photon schemes are defined for 4 bins".into()));
            }
            if !(0.0..=1.0).contains(&self.purity) {
                return Err(CliError::Config(format!("purity {} outside [0, 1]", self.purity)));
            }
            return Ok(());
        }
        for cfg in self.experiments()? {
            cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn experiments(&self) -> Result<Vec<ExperimentConfig>, CliError> {
        let scheme = self.scheme()?;
        Ok(self
            .n_bins
            .values()
            .into_iter()
            .map(|n| ExperimentConfig {
                scheme,
                n_bins: n,
                purity: self.purity,
                random_phases: self.random_phases,
                phase_correction: self.phase_correction,
                coupler_noise_halfwidth: self.coupler_noise_halfwidth,
                noise_per_shot: self.noise_per_shot,
                budget: ShotBudget { n_population: self.budget_population, n_phase: self.budget_phase, n_walk: self.budget_walk },
                trials: self.trials,
                seed: self.seed,
                exact_mode: self.exact_mode,
            })
            .collect())
    }

    /// SHA-256 over the canonical JSON form of the resolved config.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Moves the population share of the total budget, keeping the phase:walk ratio.
    pub fn set_population_share(&mut self, share: f64) -> Result<(), CliError> {
        if !(0.0..=1.0).contains(&share) {
            return Err(CliError::Config(format!("population share {share} outside [0, 1]")));
        }
        let total = self.budget_population + self.budget_phase + self.budget_walk;
        let rest_old = self.budget_phase + self.budget_walk;
        let pop = (share * total as f64).round() as u64;
        let rest = total - pop;
        let phase = if rest_old == 0 { 0 } else { (rest as f64 * self.budget_phase as f64 / rest_old as f64).round() as u64 };
        self.budget_population = pop;
        self.budget_phase = phase;
        self.budget_walk = rest - phase;
        Ok(())
    }

    /// Applies one sweep point: `population_share` is derived, anything else is a plain key.
    pub fn with_axis(&self, key: &str, value: &toml::Value) -> Result<Self, CliError> {
        if key == "population_share" {
            let share = value
                .as_float()
                .or_else(|| value.as_integer().map(|i| i as f64))
                .ok_or_else(|| CliError::Config(format!("population_share value `{value}` is not a number")))?;
            let mut c = self.clone();
            c.set_population_share(share)?;
            c.check()?;
            return Ok(c);
        }
        let mut table = toml::Table::try_from(self).map_err(|e| CliError::Config(e.to_string()))?;
        table.insert(key.to_string(), value.clone());
        Self::from_table(table)
    }
}

/// `key=v1,v2,...` into the key and its values.
pub fn parse_axis(spec: &str) -> Result<(String, Vec<toml::Value>), CliError> {
    let (k, vs) = spec.split_once('=').ok_or_else(|| CliError::Config(format!("axis `{spec}` is not key=v1,v2,...")))?;
    let values = vs
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| parse_override(&format!("{k}={v}")).map(|(_, val)| val))
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(CliError::Config(format!("axis `{k}` has no values")));
    }
    Ok((k.trim().to_string(), values))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(s: &str) -> toml::Table {
        s.parse().unwrap()
    }

    #[test]
    fn defaults_and_lists() {
        let c = RunConfig::from_table(table("scheme = \"single\"\nn_bins = [2, 4, 8]\nexact_mode = true")).unwrap();
        assert_eq!(c.n_bins.values(), vec![2, 4, 8]);
        assert_eq!(c.experiments().unwrap().len(), 3);
        assert_eq!(c.trials, 101);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(RunConfig::from_table(table("nbins = 4")).is_err());
        assert!(RunConfig::from_table(table("scheme = \"single\"\nn_bins = 6")).is_err());
        assert!(RunConfig::from_table(table("scheme = \"bogus\"")).is_err());
        assert!(RunConfig::from_table(table("scheme = \"multi_pair\"\nn_bins = 4")).is_err());
        assert!(RunConfig::from_table(table("n_bins = []")).is_err());
    }

    #[test]
    fn overrides_parse_as_toml() {
        assert_eq!(parse_override("purity=0.9").unwrap().1, toml::Value::Float(0.9));
        assert_eq!(parse_override("scheme=single").unwrap().1, toml::Value::String("single".into()));
        assert_eq!(parse_override("n_bins=[2,4]").unwrap().1.as_array().unwrap().len(), 2);
        assert!(parse_override("purity").is_err());
    }

    #[test]
    fn population_share_keeps_total() {
        let mut c = RunConfig { budget_population: 2000, budget_phase: 0, budget_walk: 2000, ..Default::default() };
        c.set_population_share(0.1).unwrap();
        assert_eq!((c.budget_population, c.budget_phase, c.budget_walk), (400, 0, 3600));
        let mut c = RunConfig { budget_population: 2000, budget_phase: 2000, budget_walk: 4000, ..Default::default() };
        c.set_population_share(0.5).unwrap();
        assert_eq!((c.budget_population, c.budget_phase, c.budget_walk), (4000, 1333, 2667));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let b = RunConfig { seed: 1, ..Default::default() };
        assert_eq!(a.hash(), RunConfig::default().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn axis_spec() {
        let (k, v) = parse_axis("population_share=0.1,0.3, 0.5").unwrap();
        assert_eq!((k.as_str(), v.len()), ("population_share", 3));
        assert!(parse_axis("purity=").is_err());
        assert!(parse_axis("purity").is_err());
    }
}
