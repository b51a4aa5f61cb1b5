//! One TOML file drives every command. Unknown keys are rejected, defaults
//! match the per-module defaults exactly, and the loaded configuration is
//! echoed into every artifact together with its hash so any output can be
//! traced back to the settings that produced it.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use flowgrasp_core::dataset::OracleConfig;
use flowgrasp_core::energy::EnergyWeights;
use flowgrasp_core::flow::TrainConfig;
use flowgrasp_core::guidance::GuidanceConfig;
use flowgrasp_core::hand::HandSpec;
use flowgrasp_core::sampler::SamplerConfig;

use crate::UsageError;

/// Dataset and benchmark sizing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Objects attempted by the grasp oracle; objects yielding nothing are
    /// skipped, so the kept count is usually lower.
    pub n_objects: usize,
    pub grasps_per_object: usize,
    pub cloud_size: usize,
    /// Held-out scenes drawn for sample / eval / harness commands, from a
    /// stream disjoint from the training objects.
    pub bench_objects: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            n_objects: 400,
            grasps_per_object: 4,
            cloud_size: 512,
            bench_objects: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub out_dir: PathBuf,
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub loss_csv: Option<PathBuf>,
    pub samples: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            out_dir: PathBuf::from("artifacts"),
            dataset: None,
            checkpoint: None,
            loss_csv: None,
            samples: None,
        }
    }
}

impl PathsConfig {
    fn or_default(&self, explicit: &Option<PathBuf>, name: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.out_dir.join(name))
    }

    pub fn dataset(&self) -> PathBuf {
        self.or_default(&self.dataset, "dataset.jsonl")
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.or_default(&self.checkpoint, "checkpoint.json")
    }

    pub fn loss_csv(&self) -> PathBuf {
        self.or_default(&self.loss_csv, "loss.csv")
    }

    pub fn samples(&self) -> PathBuf {
        self.or_default(&self.samples, "samples.jsonl")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed; every component derives its own named stream from it.
    pub seed: u64,
    pub hand: HandSpec,
    /// Single source of truth for the physics term weights; the guidance
    /// section's nested copy is overwritten with this one after load.
    pub energy: EnergyWeights,
    pub train: TrainConfig,
    pub guidance: GuidanceConfig,
    /// `sampler.seed` is managed: commands derive per-scene seeds from the
    /// global seed, so a value set here is ignored.
    pub sampler: SamplerConfig,
    pub oracle: OracleConfig,
    pub data: DataConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut cfg = RunConfig {
            seed: 7,
            hand: HandSpec::default(),
            energy: EnergyWeights::default(),
            train: TrainConfig::default(),
            guidance: GuidanceConfig::default(),
            sampler: SamplerConfig::default(),
            oracle: OracleConfig::default(),
            data: DataConfig::default(),
            paths: PathsConfig::default(),
        };
        cfg.canonicalize();
        cfg
    }
}

impl RunConfig {
    /// Loads a config file, or the defaults when none is given. Bad syntax,
    /// unknown keys, and invalid values are all usage errors.
    pub fn load(path: Option<&Path>, seed_override: Option<u64>) -> anyhow::Result<Self> {
        let mut cfg: RunConfig = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text)
                    .map_err(|e| UsageError(format!("config {}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(seed) = seed_override {
            cfg.seed = seed;
        }
        cfg.canonicalize();
        cfg.validate()?;
        Ok(cfg)
    }

    fn canonicalize(&mut self) {
        self.guidance.energy = self.energy.clone();
        self.sampler.seed = self.seed;
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let usage = |e: flowgrasp_core::Error| UsageError(e.to_string());
        self.hand.validate().map_err(usage)?;
        self.energy.validate().map_err(usage)?;
        self.train.validate().map_err(usage)?;
        self.guidance.validate().map_err(usage)?;
        self.sampler.validate().map_err(usage)?;
        self.oracle.validate().map_err(usage)?;
        if self.data.n_objects == 0 || self.data.grasps_per_object == 0 {
            return Err(UsageError("data counts must be positive".into()).into());
        }
        if self.data.bench_objects == 0 {
            return Err(UsageError("bench_objects must be positive".into()).into());
        }
        Ok(())
    }

    /// Canonical serialization used for hashing and the artifact echo.
    pub fn canonical_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn sha256(&self) -> anyhow::Result<String> {
        Ok(sha256_hex(self.canonical_toml()?.as_bytes()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        use std::fmt::Write;
        let _ = write!(out, "{b:02x}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.canonical_toml().unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.sha256().unwrap(), back.sha256().unwrap());
    }

    #[test]
    fn defaults_match_module_defaults() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.train, TrainConfig::default());
        assert_eq!(cfg.oracle, OracleConfig::default());
        assert_eq!(cfg.energy, EnergyWeights::default());
        assert_eq!(cfg.guidance.energy, EnergyWeights::default());
        assert_eq!(cfg.sampler.nfe, SamplerConfig::default().nfe);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            "unknown_top = 1",
            "[train]\nlearning_rte = 0.1",
            "[paths]\nout = \"x\"",
        ] {
            assert!(toml::from_str::<RunConfig>(text).is_err(), "accepted: {text}");
        }
    }

    #[test]
    fn energy_section_overrides_guidance_copy() {
        let text = "[energy]\nerf = 0.9\n";
        let mut cfg: RunConfig = toml::from_str(text).unwrap();
        cfg.canonicalize();
        assert_eq!(cfg.guidance.energy.erf, 0.9);
    }

    #[test]
    fn hash_is_stable_and_value_sensitive() {
        let a = RunConfig::default().sha256().unwrap();
        let b = RunConfig::default().sha256().unwrap();
        assert_eq!(a, b);
        let mut other = RunConfig::default();
        other.seed = 8;
        assert_ne!(a, other.sha256().unwrap());
    }
}
