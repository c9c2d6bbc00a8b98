//! Versioned JSON checkpoints: model config, weights, normalization
//! statistics, and seed lineage. Floats serialize in shortest round-trip
//! form, so load-then-eval reproduces results bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Parameters};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedLineage {
    /// Seed that drew the initial weights.
    pub init: u64,
    /// Seed that drove batch shuffling.
    pub train: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: ModelConfig,
    pub params: Parameters,
    /// Training-split statistics per dataset name; reused when evaluating a
    /// dataset of the same name.
    pub norm_stats: BTreeMap<String, NormStats>,
    pub seeds: SeedLineage,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
        if ckpt.format_version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "checkpoint format {} unsupported (expected {CHECKPOINT_VERSION})",
                ckpt.format_version
            )));
        }
        ckpt.config.validate()?;
        Ok(ckpt)
    }

    /// Statistics to normalize `dataset_name` with: the stored training
    /// stats when the name matches, otherwise none (caller computes fresh).
    pub fn stats_for(&self, dataset_name: &str) -> Option<&NormStats> {
        self.norm_stats.get(dataset_name)
    }
}
