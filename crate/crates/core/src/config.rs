//! Run configuration as a namespaced TOML document.
//!
//! ```toml
//! preset = "dag22"
//!
//! [schedule]
//! sigma_min = 0.001
//! sigma_max = 1.0
//!
//! [network]
//! sample_rate = 22050
//! stride_factors = [2, 2, 3, 3, 5]
//! # ...
//!
//! [training]
//! batch_size = 8
//! # ...
//!
//! [sampler]
//! steps = 100
//! # ...
//! ```
//!
//! The `[schedule]` table is shared by training and sampling.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::DagConfig;
use crate::sampler::SamplerConfig;
use crate::schedule::NoiseSchedule;
use crate::training::TrainConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    /// Folder-per-label dataset root; the data root environment variable wins.
    pub root: Option<PathBuf>,
    pub val_fraction: f64,
    pub split_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub preset: String,
    pub schedule: NoiseSchedule,
    pub network: DagConfig,
    pub training: TrainConfig,
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub data: DataConfig,
}

impl RunConfig {
    /// Defaults for a named network preset with a `vocab_size`-label vocabulary.
    pub fn preset(name: &str, vocab_size: usize) -> Result<Self> {
        let network = DagConfig::by_preset(name, vocab_size)?;
        let stride = network.stride_product();
        let training = TrainConfig {
            crop_length: crate::data::pad_to_admissible(network.sample_rate as usize, stride),
            ..TrainConfig::default()
        };
        Ok(Self {
            preset: name.to_string(),
            schedule: NoiseSchedule::default(),
            network,
            training,
            sampler: SamplerConfig::default(),
            data: DataConfig {
                val_fraction: 0.1,
                ..DataConfig::default()
            },
        }
        .synced())
    }

    fn synced(mut self) -> Self {
        self.training.schedule = self.schedule;
        self.sampler.schedule = self.schedule;
        self
    }

    pub fn set_schedule(&mut self, schedule: NoiseSchedule) {
        self.schedule = schedule;
        self.training.schedule = schedule;
        self.sampler.schedule = schedule;
    }

    pub fn validate(&self) -> Result<()> {
        NoiseSchedule::new(self.schedule.sigma_min(), self.schedule.sigma_max())
            .map_err(|e| Error::config(format!("[schedule] {e}")))?;
        self.network.validate()?;
        self.training.validate()?;
        self.sampler.validate()?;
        if !self
            .training
            .crop_length
            .is_multiple_of(self.network.stride_product())
        {
            return Err(Error::config(format!(
                "training.crop_length {} is not a multiple of the stride product {}",
                self.training.crop_length,
                self.network.stride_product()
            )));
        }
        if !(0.0..1.0).contains(&self.data.val_fraction) {
            return Err(Error::config("data.val_fraction must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        let cfg = cfg.synced();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }
}
