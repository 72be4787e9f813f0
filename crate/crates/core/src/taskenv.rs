//! Synthetic verifiable tasks over enumerable trajectory spaces.
//!
//! Each task has `n` candidate trajectories, a verifier-defined correct subset,
//! and a per-trajectory confidence feature `phi`. Outputs are rendered in the
//! block-wise `answer <conf> Confidence: x.xx` format and parsed back.

use std::collections::BTreeSet;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{LabError, Result};

/// Delimiter separating the reasoning block from the confidence block.
pub const CONF_DELIMITER: &str = "<conf>";
const CONF_LABEL: &str = "Confidence:";

/// One prompt with its full trajectory space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub task_id: usize,
    #[serde(rename = "n")]
    pub num_trajectories: usize,
    /// Sorted indices of the correct trajectories.
    pub correct_set: Vec<usize>,
    pub phi: Vec<f64>,
    #[serde(rename = "answers")]
    pub answer_strings: Vec<String>,
}

impl TaskInstance {
    /// Builds a task and checks its invariants. `allow_degenerate` permits a
    /// task with no incorrect trajectory.
    pub fn new(
        task_id: usize,
        correct: impl IntoIterator<Item = usize>,
        phi: Vec<f64>,
        answer_strings: Vec<String>,
        allow_degenerate: bool,
    ) -> Result<Self> {
        let n = phi.len();
        let correct_set: Vec<usize> = correct.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let task = Self {
            task_id,
            num_trajectories: n,
            correct_set,
            phi,
            answer_strings,
        };
        task.validate(allow_degenerate)?;
        Ok(task)
    }

    /// Convenience constructor with numeric answer strings.
    pub fn with_phi(task_id: usize, correct: impl IntoIterator<Item = usize>, phi: Vec<f64>) -> Result<Self> {
        let answers = (0..phi.len()).map(|i| i.to_string()).collect();
        Self::new(task_id, correct, phi, answers, true)
    }

    pub fn validate(&self, allow_degenerate: bool) -> Result<()> {
        let n = self.num_trajectories;
        if n < 2 {
            return Err(LabError::Config(format!("task {}: need at least 2 trajectories, got {n}", self.task_id)));
        }
        if self.phi.len() != n || self.answer_strings.len() != n {
            return Err(LabError::Config(format!("task {}: phi/answers length mismatch", self.task_id)));
        }
        if self.correct_set.is_empty() {
            return Err(LabError::Config(format!("task {}: empty correct set", self.task_id)));
        }
        if self.correct_set.windows(2).any(|w| w[0] >= w[1]) {
            return Err(LabError::Config(format!("task {}: correct set must be sorted and unique", self.task_id)));
        }
        if self.correct_set.iter().any(|&y| y >= n) {
            return Err(LabError::Config(format!("task {}: correct index out of range", self.task_id)));
        }
        if !allow_degenerate && self.correct_set.len() == n {
            return Err(LabError::Config(format!("task {}: every trajectory is correct", self.task_id)));
        }
        if self.phi.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(LabError::Config(format!("task {}: phi outside [0,1]", self.task_id)));
        }
        let distinct: BTreeSet<&String> = self.answer_strings.iter().collect();
        if distinct.len() != n {
            return Err(LabError::Config(format!("task {}: answer strings not distinct", self.task_id)));
        }
        Ok(())
    }

    /// Verifier outcome: 1 iff `trajectory` is in the correct set.
    pub fn correctness(&self, trajectory: usize) -> Result<u8> {
        if trajectory >= self.num_trajectories {
            return Err(LabError::Usage(format!(
                "trajectory {trajectory} out of range for task {} (n = {})",
                self.task_id, self.num_trajectories
            )));
        }
        Ok(self.is_correct(trajectory) as u8)
    }

    /// Unchecked membership test; panics only through slice bounds in debug use.
    pub fn is_correct(&self, trajectory: usize) -> bool {
        self.correct_set.binary_search(&trajectory).is_ok()
    }

    /// Reward vector `R(y)` over the whole trajectory space.
    pub fn reward_vector(&self) -> Vec<f64> {
        (0..self.num_trajectories).map(|y| if self.is_correct(y) { 1.0 } else { 0.0 }).collect()
    }

    pub fn fraction_correct(&self) -> f64 {
        self.correct_set.len() as f64 / self.num_trajectories as f64
    }
}

/// One entry of a difficulty mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifficultyLevel {
    pub fraction_correct: f64,
    pub weight: f64,
}

impl DifficultyLevel {
    pub fn new(fraction_correct: f64, weight: f64) -> Self {
        Self { fraction_correct, weight }
    }
}

/// How the confidence feature is drawn for generated tasks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiMode {
    /// `phi = 1` on correct trajectories, uniform on `[0, 0.5)` otherwise.
    #[default]
    Correlated,
    /// `phi` uniform on `[0, 1)` regardless of correctness.
    Independent,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub phi_mode: PhiMode,
    pub allow_degenerate: bool,
}

/// An ordered collection of tasks plus the parameters that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSuite {
    pub seed: u64,
    pub tasks: Vec<TaskInstance>,
    #[serde(default)]
    pub difficulty_spec: Vec<DifficultyLevel>,
}

impl TaskSuite {
    /// Wraps hand-built tasks, renumbering nothing. Task ids must equal positions.
    pub fn from_tasks(seed: u64, tasks: Vec<TaskInstance>) -> Result<Self> {
        let suite = Self {
            seed,
            tasks,
            difficulty_spec: Vec::new(),
        };
        suite.check_ids()?;
        Ok(suite)
    }

    fn check_ids(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(LabError::Config("suite has no tasks".into()));
        }
        for (i, t) in self.tasks.iter().enumerate() {
            if t.task_id != i {
                return Err(LabError::Config(format!("task at position {i} has id {}", t.task_id)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let suite: TaskSuite = serde_json::from_str(text)?;
        suite.check_ids()?;
        for t in &suite.tasks {
            t.validate(true)?;
        }
        Ok(suite)
    }
}

fn validate_difficulty(n: usize, spec: &[DifficultyLevel], allow_degenerate: bool) -> Result<Vec<usize>> {
    if spec.is_empty() {
        return Err(LabError::Config("difficulty spec is empty".into()));
    }
    let total: f64 = spec.iter().map(|d| d.weight).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(LabError::Config(format!("difficulty weights sum to {total}, expected 1")));
    }
    spec.iter()
        .map(|d| {
            if !(d.fraction_correct > 0.0 && d.fraction_correct <= 1.0) {
                return Err(LabError::Config(format!("difficulty fraction {} outside (0,1]", d.fraction_correct)));
            }
            if !(d.weight >= 0.0) {
                return Err(LabError::Config(format!("negative difficulty weight {}", d.weight)));
            }
            let size = (d.fraction_correct * n as f64).round() as usize;
            if size == 0 || size > n {
                return Err(LabError::Config(format!(
                    "fraction {} rounds to {size} correct of {n}",
                    d.fraction_correct
                )));
            }
            if size == n && !allow_degenerate {
                return Err(LabError::Config(format!(
                    "fraction {} makes every trajectory correct; degenerate tasks not requested",
                    d.fraction_correct
                )));
            }
            Ok(size)
        })
        .collect()
}

/// Generates a suite with default options (correlated phi, no degenerate tasks).
pub fn generate_suite(seed: u64, num_tasks: usize, n_trajectories: usize, difficulty_spec: &[DifficultyLevel]) -> Result<TaskSuite> {
    generate_suite_with(seed, num_tasks, n_trajectories, difficulty_spec, SuiteOptions::default())
}

pub fn generate_suite_with(
    seed: u64,
    num_tasks: usize,
    n_trajectories: usize,
    difficulty_spec: &[DifficultyLevel],
    options: SuiteOptions,
) -> Result<TaskSuite> {
    if num_tasks == 0 {
        return Err(LabError::Config("num_tasks must be at least 1".into()));
    }
    if n_trajectories < 2 {
        return Err(LabError::Config("n_trajectories must be at least 2".into()));
    }
    let sizes = validate_difficulty(n_trajectories, difficulty_spec, options.allow_degenerate)?;
    let weights = WeightedIndex::new(difficulty_spec.iter().map(|d| d.weight))
        .map_err(|e| LabError::Config(format!("difficulty weights: {e}")))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let answer_pool = (n_trajectories * 10).max(100);
    let mut tasks = Vec::with_capacity(num_tasks);
    for task_id in 0..num_tasks {
        let size = sizes[weights.sample(&mut rng)];
        let correct: BTreeSet<usize> = rand::seq::index::sample(&mut rng, n_trajectories, size).into_iter().collect();
        let phi = (0..n_trajectories)
            .map(|y| match options.phi_mode {
                PhiMode::Correlated if correct.contains(&y) => 1.0,
                PhiMode::Correlated => rng.gen_range(0.0..0.5),
                PhiMode::Independent => rng.gen_range(0.0..1.0),
            })
            .collect();
        let answers = rand::seq::index::sample(&mut rng, answer_pool, n_trajectories)
            .into_iter()
            .map(|a| a.to_string())
            .collect();
        tasks.push(TaskInstance::new(task_id, correct, phi, answers, options.allow_degenerate)?);
    }
    Ok(TaskSuite {
        seed,
        tasks,
        difficulty_spec: difficulty_spec.to_vec(),
    })
}

/// Text of one sampled response.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedOutput {
    pub text: String,
    pub is_well_formed: bool,
}

pub fn render_output(answer: &str, confidence_value: f64, corrupt: bool) -> RenderedOutput {
    debug_assert!((0.0..=1.0).contains(&confidence_value));
    if corrupt {
        RenderedOutput {
            text: format!("{answer} {CONF_LABEL} {confidence_value:.2}"),
            is_well_formed: false,
        }
    } else {
        RenderedOutput {
            text: format!("{answer} {CONF_DELIMITER} {CONF_LABEL} {confidence_value:.2}"),
            is_well_formed: true,
        }
    }
}

/// Renders trajectory `trajectory` of `task`.
pub fn render_task_output(task: &TaskInstance, trajectory: usize, confidence_value: f64, corrupt: bool) -> Result<RenderedOutput> {
    let answer = task.answer_strings.get(trajectory).ok_or_else(|| {
        LabError::Usage(format!("trajectory {trajectory} out of range for task {}", task.task_id))
    })?;
    Ok(render_output(answer, confidence_value, corrupt))
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormatError {
    #[error("missing `<conf>` delimiter")]
    MissingDelimiter,
    #[error("missing `Confidence:` label after delimiter")]
    MissingLabel,
    #[error("unparseable confidence `{0}`")]
    BadNumber(String),
    #[error("confidence {0} outside [0,1]")]
    OutOfRange(f64),
}

/// Extracts the verbalized confidence from a rendered response.
pub fn parse_confidence(text: &str) -> std::result::Result<f64, FormatError> {
    let (_, tail) = text.split_once(CONF_DELIMITER).ok_or(FormatError::MissingDelimiter)?;
    let tail = tail.trim();
    let number = tail.strip_prefix(CONF_LABEL).ok_or(FormatError::MissingLabel)?.trim();
    let value: f64 = number.parse().map_err(|_| FormatError::BadNumber(number.to_string()))?;
    if !value.is_finite() {
        return Err(FormatError::BadNumber(number.to_string()));
    }
    if !(0.0..=1.0).contains(&value) {
        return Err(FormatError::OutOfRange(value));
    }
    Ok(value)
}
