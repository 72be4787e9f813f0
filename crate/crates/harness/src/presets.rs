//! Shipped experiment presets.

use dcpo_core::policy::{InitSpec, DEFAULT_VOCAB_SIZE};
use dcpo_core::taskenv::{DifficultyLevel, PhiMode};
use dcpo_core::trainer::{Algorithm, ConfidenceSource, TrainerConfig};

use crate::config::{ExperimentSpec, SuiteConfig, Variant, SCHEMA_VERSION};
use crate::error::{HarnessError, Result};

/// Runs the certificate suite instead of a training grid.
pub const THEORY_PRESET: &str = "theory-cert";

pub const PRESETS: [&str; 5] = ["fig3-analog", "fig4-analog", "fig5-analog", "fig6-analog", THEORY_PRESET];

const BOTH: [ConfidenceSource; 2] = [ConfidenceSource::Verbal, ConfidenceSource::Sequence];

fn suite(num_tasks: usize, n: usize, fractions: &[f64]) -> SuiteConfig {
    SuiteConfig {
        num_tasks,
        n_trajectories: n,
        difficulty: fractions
            .iter()
            .map(|&f| DifficultyLevel::new(f, 1.0 / fractions.len() as f64))
            .collect(),
        phi_mode: PhiMode::Correlated,
        allow_degenerate: false,
        seed: None,
    }
}

/// Hard tasks (one or two correct trajectories out of fifty), a reasoning
/// head that is already sharp and mostly wrong, and a confidence head
/// centred on 0.9.
fn overconfident() -> (SuiteConfig, InitSpec) {
    (
        suite(16, 50, &[0.02, 0.04]),
        InitSpec {
            reasoning_scale: 4.0,
            conf_center: Some(0.9),
            conf_width: 0.3,
        },
    )
}

fn spec(name: &str, suite: SuiteConfig, init: InitSpec, trainer: TrainerConfig, variants: &[Algorithm], sources: &[ConfidenceSource]) -> ExperimentSpec {
    ExperimentSpec {
        schema_version: SCHEMA_VERSION,
        name: name.to_string(),
        suite,
        init,
        vocab_size: DEFAULT_VOCAB_SIZE,
        trainer,
        variants: variants.iter().map(|&a| Variant::of(a)).collect(),
        base_seed: 0,
        repeats: 10,
        sources: sources.to_vec(),
        output_dir: None,
    }
}

pub fn preset(name: &str) -> Result<ExperimentSpec> {
    match name {
        // reliability of the untrained, over-confident policy
        "fig3-analog" => {
            let (s, init) = overconfident();
            let trainer = TrainerConfig {
                steps: 0,
                eval_samples: 1024,
                ..Default::default()
            };
            Ok(spec(name, s, init, trainer, &[Algorithm::Grpo], &BOTH))
        }
        // confidence and PCE drift: one correct trajectory in ten, uniform head
        "fig4-analog" => {
            let init = InitSpec {
                reasoning_scale: 0.0,
                conf_center: Some(0.9),
                conf_width: 0.1,
            };
            let trainer = TrainerConfig {
                learning_rate: 0.5,
                steps: 30,
                log_every: 1,
                lambda: 0.5,
                eval_samples: 256,
                ..Default::default()
            };
            Ok(spec(name, suite(16, 10, &[0.1]), init, trainer, &[Algorithm::Grpo, Algorithm::Dcpo], &BOTH))
        }
        // accuracy-calibration tradeoff
        "fig5-analog" => {
            let (s, init) = overconfident();
            let trainer = TrainerConfig {
                learning_rate: 2.0,
                steps: 100,
                log_every: 10,
                lambda: 0.5,
                eval_samples: 256,
                ..Default::default()
            };
            Ok(spec(name, s, init, trainer, &[Algorithm::Grpo, Algorithm::Coupled, Algorithm::Dcpo], &BOTH))
        }
        // gradient-norm traces on a mixed-difficulty suite
        "fig6-analog" => {
            let init = InitSpec {
                reasoning_scale: 0.5,
                conf_center: Some(0.9),
                conf_width: 0.2,
            };
            let trainer = TrainerConfig {
                learning_rate: 0.5,
                steps: 200,
                log_every: 5,
                eval_samples: 64,
                ..Default::default()
            };
            Ok(spec(
                name,
                suite(16, 10, &[0.1, 0.3, 0.5]),
                init,
                trainer,
                &[Algorithm::Grpo, Algorithm::Coupled, Algorithm::Dcpo],
                &[ConfidenceSource::Verbal],
            ))
        }
        THEORY_PRESET => Err(HarnessError::usage(format!("{THEORY_PRESET} runs the certificate suite, not a training grid"))),
        other => Err(HarnessError::usage(format!("unknown preset {other:?}; available: {}", PRESETS.join(", ")))),
    }
}
