//! JSON configuration files. Every file carries `schema_version`; unknown
//! keys are rejected.

use std::collections::BTreeSet;
use std::path::PathBuf;

use dcpo_core::policy::{ConfidenceVocab, InitSpec, PolicyParams, DEFAULT_VOCAB_SIZE};
use dcpo_core::taskenv::{generate_suite_with, DifficultyLevel, PhiMode, SuiteOptions, TaskSuite};
use dcpo_core::trainer::{Algorithm, ConfidenceSource, TrainerConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Overrides the seed of `train` configs and the base seed of experiments.
pub const SEED_ENV: &str = "DCPO_LAB_SEED";

/// ChaCha stream for initial logits; training uses stream 0 and evaluation
/// streams `1 + step`.
pub const INIT_STREAM: u64 = u64::MAX;

fn default_vocab_size() -> usize {
    DEFAULT_VOCAB_SIZE
}

fn check_schema(version: u32) -> Result<()> {
    if version != SCHEMA_VERSION {
        return Err(HarnessError::config(format!(
            "unsupported schema_version {version}, expected {SCHEMA_VERSION}"
        )));
    }
    Ok(())
}

/// Reads the seed override, if set.
pub fn seed_override() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| HarnessError::config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(HarnessError::config(format!("{SEED_ENV}: {e}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub num_tasks: usize,
    pub n_trajectories: usize,
    pub difficulty: Vec<DifficultyLevel>,
    #[serde(default)]
    pub phi_mode: PhiMode,
    #[serde(default)]
    pub allow_degenerate: bool,
    /// Fixed suite seed. When absent every run seed draws its own suite.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl SuiteConfig {
    pub fn build(&self, run_seed: u64) -> Result<TaskSuite> {
        let options = SuiteOptions {
            phi_mode: self.phi_mode,
            allow_degenerate: self.allow_degenerate,
        };
        Ok(generate_suite_with(
            self.seed.unwrap_or(run_seed),
            self.num_tasks,
            self.n_trajectories,
            &self.difficulty,
            options,
        )?)
    }
}

pub fn initial_policy(suite: &TaskSuite, init: &InitSpec, vocab_size: usize, seed: u64) -> Result<PolicyParams> {
    let vocab = ConfidenceVocab::evenly_spaced(vocab_size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM);
    Ok(PolicyParams::init(suite, vocab, init, &mut rng)?)
}

/// Input of `dcpo-lab train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFile {
    pub schema_version: u32,
    pub suite: SuiteConfig,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default = "default_vocab_size")]
    pub vocab_size: usize,
    #[serde(default)]
    pub trainer: TrainerConfig,
}

impl TrainFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(text).map_err(dcpo_core::LabError::from)?;
        check_schema(file.schema_version)?;
        file.trainer.validate()?;
        Ok(file)
    }
}

/// One algorithm arm of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub lambda: Option<f64>,
}

impl Variant {
    pub fn of(algorithm: Algorithm) -> Self {
        Self {
            name: algorithm.name().to_string(),
            algorithm,
            lambda: None,
        }
    }
}

fn default_sources() -> Vec<ConfidenceSource> {
    vec![ConfidenceSource::Verbal]
}

/// Variants crossed with seeds `base_seed .. base_seed + repeats`. Seed `k`
/// fixes the suite, the initial policy and the training streams, and every
/// variant sees the same seed list, so runs pair index by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub schema_version: u32,
    pub name: String,
    pub suite: SuiteConfig,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default = "default_vocab_size")]
    pub vocab_size: usize,
    /// Shared settings; each variant overrides algorithm, lambda and seed.
    #[serde(default)]
    pub trainer: TrainerConfig,
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub base_seed: u64,
    pub repeats: usize,
    /// One log CSV per source and run.
    #[serde(default = "default_sources")]
    pub sources: Vec<ConfidenceSource>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(dcpo_core::LabError::from)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        check_schema(self.schema_version)?;
        if self.repeats == 0 {
            return Err(HarnessError::config("repeats must be at least 1"));
        }
        if self.variants.is_empty() {
            return Err(HarnessError::config("at least one variant is required"));
        }
        let mut names = BTreeSet::new();
        for v in &self.variants {
            let ok = !v.name.is_empty()
                && v.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
            if !ok {
                return Err(HarnessError::config(format!("variant name {:?} must be [A-Za-z0-9_-]+", v.name)));
            }
            if !names.insert(v.name.as_str()) {
                return Err(HarnessError::config(format!("duplicate variant {:?}", v.name)));
            }
            self.variant_config(v, self.base_seed).validate()?;
        }
        if self.sources.is_empty() {
            return Err(HarnessError::config("at least one confidence source is required"));
        }
        if self.sources.len() == 2 && self.sources[0] == self.sources[1] {
            return Err(HarnessError::config("duplicate confidence source"));
        }
        self.base_seed
            .checked_add(self.repeats as u64)
            .ok_or_else(|| HarnessError::config("seed range overflows"))?;
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.repeats as u64).map(|k| self.base_seed + k).collect()
    }

    pub fn variant_config(&self, variant: &Variant, seed: u64) -> TrainerConfig {
        TrainerConfig {
            algorithm: variant.algorithm,
            lambda: variant.lambda.unwrap_or(self.trainer.lambda),
            seed,
            ..self.trainer.clone()
        }
    }
}
