//! Tabular softmax policy with a reasoning head over trajectories and a
//! confidence head over a discrete confidence vocabulary.
//!
//! The reasoning head holds one logit row per task; the confidence head holds
//! one logit row per (task, trajectory) pair, so the verbalized confidence is
//! generated after, and conditioned on, the sampled trajectory.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::taskenv::{parse_confidence, render_output, TaskInstance, TaskSuite};

pub const DEFAULT_VOCAB_SIZE: usize = 21;

/// Ordered confidence values the confidence head can emit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfidenceVocab {
    values: Vec<f64>,
}

impl ConfidenceVocab {
    /// `size` evenly spaced values from 0 to 1 inclusive.
    pub fn evenly_spaced(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(LabError::Config(format!("confidence vocabulary needs at least 2 values, got {size}")));
        }
        let last = (size - 1) as f64;
        Self::from_values((0..size).map(|k| k as f64 / last).collect())
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(LabError::Config("confidence vocabulary needs at least 2 values".into()));
        }
        if values[0] != 0.0 || *values.last().unwrap() != 1.0 {
            return Err(LabError::Config("confidence vocabulary must span [0,1] exactly".into()));
        }
        if values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(LabError::Config("confidence vocabulary must be strictly increasing".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the value closest to `c` (ties go to the lower bin).
    pub fn nearest_bin(&self, c: f64) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if (v - c).abs() < (self.values[best] - c).abs() {
                best = i;
            }
        }
        best
    }

    /// Largest half-gap between neighbouring values.
    pub fn half_step(&self) -> f64 {
        self.values.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max) / 2.0
    }
}

impl Default for ConfidenceVocab {
    fn default() -> Self {
        Self::evenly_spaced(DEFAULT_VOCAB_SIZE).expect("default vocabulary is valid")
    }
}

/// Logits of one task: the reasoning row and one confidence row per trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskLogits {
    pub task_id: usize,
    pub reasoning_logits: Vec<f64>,
    pub confidence_logits: Vec<Vec<f64>>,
}

/// Complete policy parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub vocab: ConfidenceVocab,
    pub tasks: Vec<TaskLogits>,
}

/// How initial logits are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    /// Standard deviation of Gaussian reasoning logits; 0 gives a uniform head.
    pub reasoning_scale: f64,
    /// If set, the confidence head starts as a discretized bump around this value.
    pub conf_center: Option<f64>,
    /// Width of the bump in confidence units.
    pub conf_width: f64,
}

impl Default for InitSpec {
    fn default() -> Self {
        Self {
            reasoning_scale: 0.0,
            conf_center: None,
            conf_width: 0.1,
        }
    }
}

impl PolicyParams {
    /// All-zero logits: uniform reasoning and confidence heads.
    pub fn uniform(suite: &TaskSuite, vocab: ConfidenceVocab) -> Self {
        let v = vocab.len();
        let tasks = suite
            .tasks
            .iter()
            .map(|t| TaskLogits {
                task_id: t.task_id,
                reasoning_logits: vec![0.0; t.num_trajectories],
                confidence_logits: vec![vec![0.0; v]; t.num_trajectories],
            })
            .collect();
        Self { vocab, tasks }
    }

    pub fn init<R: Rng + ?Sized>(suite: &TaskSuite, vocab: ConfidenceVocab, spec: &InitSpec, rng: &mut R) -> Result<Self> {
        if !(spec.reasoning_scale >= 0.0) || !spec.reasoning_scale.is_finite() {
            return Err(LabError::Config(format!("reasoning_scale {} must be finite and >= 0", spec.reasoning_scale)));
        }
        let mut params = Self::uniform(suite, vocab);
        if spec.reasoning_scale > 0.0 {
            let normal = Normal::new(0.0, spec.reasoning_scale).map_err(|e| LabError::Config(e.to_string()))?;
            for t in &mut params.tasks {
                for z in &mut t.reasoning_logits {
                    *z = normal.sample(rng);
                }
            }
        }
        if let Some(center) = spec.conf_center {
            if !(0.0..=1.0).contains(&center) || !(spec.conf_width > 0.0) {
                return Err(LabError::Config("conf_center must lie in [0,1] and conf_width be positive".into()));
            }
            let row: Vec<f64> = params
                .vocab
                .values()
                .iter()
                .map(|v| -(v - center).powi(2) / (2.0 * spec.conf_width * spec.conf_width))
                .collect();
            for t in &mut params.tasks {
                for r in &mut t.confidence_logits {
                    r.clone_from(&row);
                }
            }
        }
        Ok(params)
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn task(&self, task: usize) -> Result<&TaskLogits> {
        self.tasks
            .get(task)
            .ok_or_else(|| LabError::Usage(format!("task index {task} out of range ({} tasks)", self.tasks.len())))
    }

    fn conf_row(&self, task: usize, trajectory: usize) -> Result<&[f64]> {
        let t = self.task(task)?;
        t.confidence_logits
            .get(trajectory)
            .map(Vec::as_slice)
            .ok_or_else(|| LabError::Usage(format!("trajectory {trajectory} out of range for task {task}")))
    }

    /// Checks that the parameter shapes line up with `suite`.
    pub fn check_matches(&self, suite: &TaskSuite) -> Result<()> {
        if self.tasks.len() != suite.tasks.len() {
            return Err(LabError::Usage(format!(
                "policy has {} tasks, suite has {}",
                self.tasks.len(),
                suite.tasks.len()
            )));
        }
        for (p, t) in self.tasks.iter().zip(&suite.tasks) {
            if p.task_id != t.task_id
                || p.reasoning_logits.len() != t.num_trajectories
                || p.confidence_logits.len() != t.num_trajectories
                || p.confidence_logits.iter().any(|r| r.len() != self.vocab.len())
            {
                return Err(LabError::Usage(format!("policy shape mismatch on task {}", t.task_id)));
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.tasks.iter().all(|t| {
            t.reasoning_logits.iter().all(|z| z.is_finite())
                && t.confidence_logits.iter().flatten().all(|z| z.is_finite())
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let params: PolicyParams = serde_json::from_str(text)?;
        ConfidenceVocab::from_values(params.vocab.values.clone())?;
        Ok(params)
    }

    pub fn reasoning_dist(&self, task: usize) -> Result<Vec<f64>> {
        softmax(&self.task(task)?.reasoning_logits)
    }

    pub fn confidence_dist(&self, task: usize, trajectory: usize) -> Result<Vec<f64>> {
        softmax(self.conf_row(task, trajectory)?)
    }

    /// Sequence-probability ("logits") confidence of a trajectory. In the flat
    /// policy the reasoning block is a single token, so this is `pi(y | q)`.
    pub fn sequence_confidence(&self, task: usize, trajectory: usize) -> Result<f64> {
        let p = self.reasoning_dist(task)?;
        p.get(trajectory)
            .copied()
            .ok_or_else(|| LabError::Usage(format!("trajectory {trajectory} out of range for task {task}")))
    }

    /// Score function `d log pi(y) / d logits = e_y - p` on the reasoning head.
    pub fn score(&self, task: usize, trajectory: usize) -> Result<Vec<f64>> {
        let p = self.reasoning_dist(task)?;
        if trajectory >= p.len() {
            return Err(LabError::Usage(format!("trajectory {trajectory} out of range for task {task}")));
        }
        Ok(score_from_probs(&p, trajectory))
    }

    /// Fisher information `diag(p) - p p^T` of the reasoning head.
    pub fn fisher_matrix(&self, task: usize) -> Result<DMatrix<f64>> {
        let p = self.reasoning_dist(task)?;
        Ok(fisher_from_probs(&p))
    }

    /// Shannon entropy (nats) of the reasoning head.
    pub fn entropy(&self, task: usize) -> Result<f64> {
        Ok(entropy_of(&self.reasoning_dist(task)?))
    }

    /// Expected verbalized confidence `sum_y pi(y) sum_v pi(v|y) v`.
    pub fn expected_verbal_confidence(&self, task: usize) -> Result<f64> {
        let p = self.reasoning_dist(task)?;
        let mut total = 0.0;
        for (y, py) in p.iter().enumerate() {
            total += py * self.mean_confidence_given(task, y)?;
        }
        Ok(total)
    }

    /// Mean confidence value emitted after trajectory `y`.
    pub fn mean_confidence_given(&self, task: usize, trajectory: usize) -> Result<f64> {
        let q = self.confidence_dist(task, trajectory)?;
        Ok(q.iter().zip(self.vocab.values()).map(|(a, b)| a * b).sum())
    }
}

/// Numerically stable softmax; rejects non-finite logits.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(LabError::Usage("softmax of empty logits".into()));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(LabError::Numeric("non-finite logit".into()));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

pub fn log_softmax_at(logits: &[f64], index: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits[index] - lse
}

pub fn score_from_probs(p: &[f64], index: usize) -> Vec<f64> {
    p.iter()
        .enumerate()
        .map(|(i, pi)| if i == index { 1.0 - pi } else { -pi })
        .collect()
}

pub fn fisher_from_probs(p: &[f64]) -> DMatrix<f64> {
    let n = p.len();
    DMatrix::from_fn(n, n, |i, j| if i == j { p[i] - p[i] * p[i] } else { -p[i] * p[j] })
}

pub fn entropy_of(p: &[f64]) -> f64 {
    let h = -p.iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>();
    h.max(0.0)
}

/// Inverse-CDF draw from `probs` using one uniform `u` in `[0,1)`.
pub fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left the cumulative sum just below 1; take the last positive entry
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// One sampled (trajectory, confidence token) response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutSample {
    pub trajectory: usize,
    pub conf_bin: usize,
    pub conf_value: f64,
    pub well_formed: bool,
    pub logprob_reasoning: f64,
    pub logprob_conf: f64,
}

/// `G` i.i.d. responses for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRollout {
    pub task_id: usize,
    pub samples: Vec<RolloutSample>,
}

impl GroupRollout {
    pub fn group_size(&self) -> usize {
        self.samples.len()
    }
}

/// Draws a rollout group. Every sample consumes exactly three uniforms
/// (trajectory, confidence bin, corruption flag), so two policies that share
/// a reasoning head and an RNG state draw identical trajectories.
pub fn sample_rollout<R: Rng + ?Sized>(
    params: &PolicyParams,
    task: &TaskInstance,
    group_size: usize,
    corrupt_prob: f64,
    rng: &mut R,
) -> Result<GroupRollout> {
    if group_size < 2 {
        return Err(LabError::Usage(format!("group size must be at least 2, got {group_size}")));
    }
    if !(0.0..1.0).contains(&corrupt_prob) {
        return Err(LabError::Usage(format!("corrupt_prob {corrupt_prob} outside [0,1)")));
    }
    let idx = task.task_id;
    let logits = params.task(idx)?;
    if logits.reasoning_logits.len() != task.num_trajectories {
        return Err(LabError::Usage(format!("policy shape mismatch on task {idx}")));
    }
    let p = softmax(&logits.reasoning_logits)?;
    let q_rows: Vec<Vec<f64>> = logits
        .confidence_logits
        .iter()
        .map(|r| softmax(r))
        .collect::<Result<_>>()?;
    let values = params.vocab.values();
    let samples = (0..group_size)
        .map(|_| {
            let u_traj: f64 = rng.gen();
            let u_conf: f64 = rng.gen();
            let u_corrupt: f64 = rng.gen();
            let trajectory = sample_index(&p, u_traj);
            let conf_bin = sample_index(&q_rows[trajectory], u_conf);
            let conf_value = values[conf_bin];
            let rendered = render_output(&task.answer_strings[trajectory], conf_value, u_corrupt < corrupt_prob);
            let well_formed = parse_confidence(&rendered.text).is_ok();
            RolloutSample {
                trajectory,
                conf_bin,
                conf_value,
                well_formed,
                logprob_reasoning: log_softmax_at(&logits.reasoning_logits, trajectory),
                logprob_conf: log_softmax_at(&logits.confidence_logits[trajectory], conf_bin),
            }
        })
        .collect();
    Ok(GroupRollout { task_id: idx, samples })
}
