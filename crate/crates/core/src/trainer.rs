//! Policy-gradient training with a clipped per-token surrogate.
//!
//! Every response has two tokens: the reasoning token (trajectory) and the
//! confidence token. GRPO drives only the reasoning token, DCPO drives each
//! token with its own advantage, and the coupled baseline drives both tokens
//! with one Brier-augmented advantage.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::advantage::{decoupled_advantages, group_normalize, AdvantagePair};
use crate::calibration::{self, CalibrationRecord, DEFAULT_BINS};
use crate::error::{LabError, Result};
use crate::policy::{log_softmax_at, sample_index, sample_rollout, softmax, GroupRollout, PolicyParams};
use crate::rewards::{check_lambda, coupled_rewards, RewardBundle};
use crate::taskenv::TaskSuite;

/// Tokens per response in the flat policy.
pub const TOKENS_PER_RESPONSE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Grpo,
    Dcpo,
    Coupled,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Grpo => "grpo",
            Algorithm::Dcpo => "dcpo",
            Algorithm::Coupled => "coupled",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grpo" => Ok(Algorithm::Grpo),
            "dcpo" => Ok(Algorithm::Dcpo),
            "coupled" => Ok(Algorithm::Coupled),
            other => Err(LabError::Config(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Which confidence a calibration record uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceSource {
    /// The emitted confidence token.
    Verbal,
    /// Sequence probability of the sampled trajectory.
    Sequence,
}

impl ConfidenceSource {
    pub fn name(self) -> &'static str {
        match self {
            ConfidenceSource::Verbal => "verbal",
            ConfidenceSource::Sequence => "sequence",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub algorithm: Algorithm,
    pub lambda: f64,
    pub group_size: usize,
    pub learning_rate: f64,
    pub steps: usize,
    pub clip_low: f64,
    pub clip_high: f64,
    pub corrupt_prob: f64,
    pub seed: u64,
    pub log_every: usize,
    /// Keep the reasoning head fixed (confidence-only training).
    pub freeze_reasoning: bool,
    /// Gradient steps taken on each sampled batch. Values above 1 reuse stale
    /// rollouts, which exercises the ratio clipping.
    pub rollout_reuse: usize,
    /// Evaluation responses drawn per task at each logged step.
    pub eval_samples: usize,
    pub num_bins: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Dcpo,
            lambda: 0.5,
            group_size: 8,
            learning_rate: 0.5,
            steps: 200,
            clip_low: 0.20,
            clip_high: 0.28,
            corrupt_prob: 0.0,
            seed: 0,
            log_every: 10,
            freeze_reasoning: false,
            rollout_reuse: 1,
            eval_samples: 64,
            num_bins: DEFAULT_BINS,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        let bad = |msg: String| Err(LabError::Config(msg));
        if self.group_size < 2 {
            return bad(format!("group_size {} must be at least 2", self.group_size));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        for (name, v) in [("clip_low", self.clip_low), ("clip_high", self.clip_high)] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} {v} outside (0,1)"));
            }
        }
        if !(0.0..1.0).contains(&self.corrupt_prob) {
            return bad(format!("corrupt_prob {} outside [0,1)", self.corrupt_prob));
        }
        if self.log_every == 0 || self.rollout_reuse == 0 || self.eval_samples == 0 || self.num_bins == 0 {
            return bad("log_every, rollout_reuse, eval_samples and num_bins must be positive".into());
        }
        Ok(())
    }

    pub fn clip(&self) -> ClipRange {
        ClipRange {
            low: self.clip_low,
            high: self.clip_high,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipRange {
    pub low: f64,
    pub high: f64,
}

impl ClipRange {
    pub fn contains(&self, ratio: f64) -> bool {
        ratio >= 1.0 - self.low && ratio <= 1.0 + self.high
    }

    pub fn clamp(&self, ratio: f64) -> f64 {
        ratio.clamp(1.0 - self.low, 1.0 + self.high)
    }
}

/// Gradient of one task's logits.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBlock {
    pub reasoning: Vec<f64>,
    pub confidence: Vec<Vec<f64>>,
}

impl GradBlock {
    pub fn zeros(n: usize, v: usize) -> Self {
        Self {
            reasoning: vec![0.0; n],
            confidence: vec![vec![0.0; v]; n],
        }
    }

    fn entries(&self) -> impl Iterator<Item = f64> + '_ {
        self.reasoning.iter().chain(self.confidence.iter().flatten()).copied()
    }
}

/// Gradient over every parameter block, shaped like [`PolicyParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGradient {
    pub tasks: Vec<GradBlock>,
}

impl PolicyGradient {
    pub fn zeros_like(params: &PolicyParams) -> Self {
        let v = params.vocab.len();
        Self {
            tasks: params
                .tasks
                .iter()
                .map(|t| GradBlock::zeros(t.reasoning_logits.len(), v))
                .collect(),
        }
    }

    pub fn scale(&mut self, k: f64) {
        for b in &mut self.tasks {
            b.reasoning.iter_mut().for_each(|x| *x *= k);
            b.confidence.iter_mut().flatten().for_each(|x| *x *= k);
        }
    }
}

/// Euclidean norm over all blocks.
pub fn gradient_norm(gradient: &PolicyGradient) -> f64 {
    gradient
        .tasks
        .iter()
        .flat_map(GradBlock::entries)
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
}

/// Result of differentiating the surrogate for one rollout group.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateOutput {
    pub task: usize,
    pub gradient: GradBlock,
    /// Ratios of the tokens that contributed a gradient term.
    pub ratios_used: Vec<f64>,
    /// Tokens whose ratio fell outside the clip range (zero gradient).
    pub clipped_tokens: usize,
}

fn check_rollout(params: &PolicyParams, rollout: &GroupRollout, adv: &AdvantagePair) -> Result<()> {
    let t = params.task(rollout.task_id)?;
    let g = rollout.samples.len();
    if adv.a_reasoning.len() != g || adv.a_conf.len() != g {
        return Err(LabError::Usage("advantage length differs from rollout size".into()));
    }
    let n = t.reasoning_logits.len();
    let v = params.vocab.len();
    for s in &rollout.samples {
        if s.trajectory >= n || s.conf_bin >= v {
            return Err(LabError::Usage(format!("rollout sample out of range for task {}", rollout.task_id)));
        }
    }
    Ok(())
}

/// Per-token advantages `(reasoning, confidence)` for sample `i`; the
/// confidence entry is `None` when that token carries no objective.
fn token_advantages(adv: &AdvantagePair, i: usize, algorithm: Algorithm) -> (f64, Option<f64>) {
    match algorithm {
        Algorithm::Grpo => (adv.a_reasoning[i], None),
        Algorithm::Dcpo => (adv.a_reasoning[i], Some(adv.a_conf[i])),
        Algorithm::Coupled => (adv.a_reasoning[i], Some(adv.a_reasoning[i])),
    }
}

/// Value of the clipped surrogate
/// `1/G * sum_i 1/|o_i| * (clip(rho_r) A_r + clip(rho_c) A_c)`.
pub fn surrogate_objective(
    old_params: &PolicyParams,
    new_params: &PolicyParams,
    rollout: &GroupRollout,
    adv: &AdvantagePair,
    algorithm: Algorithm,
    clip: ClipRange,
) -> Result<f64> {
    check_rollout(old_params, rollout, adv)?;
    check_rollout(new_params, rollout, adv)?;
    let old = old_params.task(rollout.task_id)?;
    let new = new_params.task(rollout.task_id)?;
    let g = rollout.samples.len() as f64;
    let mut total = 0.0;
    for (i, s) in rollout.samples.iter().enumerate() {
        let (a_r, a_c) = token_advantages(adv, i, algorithm);
        let rho_r = (log_softmax_at(&new.reasoning_logits, s.trajectory) - log_softmax_at(&old.reasoning_logits, s.trajectory)).exp();
        let mut term = clip.clamp(rho_r) * a_r;
        if let Some(a_c) = a_c {
            let rho_c = (log_softmax_at(&new.confidence_logits[s.trajectory], s.conf_bin)
                - log_softmax_at(&old.confidence_logits[s.trajectory], s.conf_bin))
            .exp();
            term += clip.clamp(rho_c) * a_c;
        }
        total += term / TOKENS_PER_RESPONSE;
    }
    Ok(total / g)
}

/// Gradient of [`surrogate_objective`] with respect to `new_params`.
///
/// A token whose ratio sits outside the clip range contributes nothing;
/// inside it contributes `rho * A * d log pi_new`.
pub fn surrogate_gradient(
    old_params: &PolicyParams,
    new_params: &PolicyParams,
    rollout: &GroupRollout,
    adv: &AdvantagePair,
    algorithm: Algorithm,
    clip: ClipRange,
) -> Result<SurrogateOutput> {
    check_rollout(old_params, rollout, adv)?;
    check_rollout(new_params, rollout, adv)?;
    let task = rollout.task_id;
    let old = old_params.task(task)?;
    let new = new_params.task(task)?;
    let n = new.reasoning_logits.len();
    let v = new_params.vocab.len();
    if old.reasoning_logits.len() != n {
        return Err(LabError::Usage("old and new parameters differ in shape".into()));
    }
    let p_new = softmax(&new.reasoning_logits)?;
    let scale = 1.0 / (rollout.samples.len() as f64 * TOKENS_PER_RESPONSE);

    let mut grad = GradBlock::zeros(n, v);
    let mut ratios_used = Vec::new();
    let mut clipped_tokens = 0;
    let mut q_cache: Vec<Option<Vec<f64>>> = vec![None; n];

    for (i, s) in rollout.samples.iter().enumerate() {
        let (a_r, a_c) = token_advantages(adv, i, algorithm);

        let rho_r = (log_softmax_at(&new.reasoning_logits, s.trajectory) - log_softmax_at(&old.reasoning_logits, s.trajectory)).exp();
        if clip.contains(rho_r) {
            ratios_used.push(rho_r);
            let w = scale * rho_r * a_r;
            if w != 0.0 {
                for (k, gk) in grad.reasoning.iter_mut().enumerate() {
                    let indicator = if k == s.trajectory { 1.0 } else { 0.0 };
                    *gk += w * (indicator - p_new[k]);
                }
            }
        } else {
            clipped_tokens += 1;
        }

        let Some(a_c) = a_c else { continue };
        let row = &new.confidence_logits[s.trajectory];
        let rho_c = (log_softmax_at(row, s.conf_bin) - log_softmax_at(&old.confidence_logits[s.trajectory], s.conf_bin)).exp();
        if clip.contains(rho_c) {
            ratios_used.push(rho_c);
            let w = scale * rho_c * a_c;
            if w != 0.0 {
                if q_cache[s.trajectory].is_none() {
                    q_cache[s.trajectory] = Some(softmax(row)?);
                }
                let q = q_cache[s.trajectory].as_ref().unwrap();
                for (k, gk) in grad.confidence[s.trajectory].iter_mut().enumerate() {
                    let indicator = if k == s.conf_bin { 1.0 } else { 0.0 };
                    *gk += w * (indicator - q[k]);
                }
            }
        } else {
            clipped_tokens += 1;
        }
    }
    Ok(SurrogateOutput {
        task,
        gradient: grad,
        ratios_used,
        clipped_tokens,
    })
}

/// Rewards and advantages of one group for the given algorithm.
pub fn group_advantages(
    algorithm: Algorithm,
    lambda: f64,
    task: &crate::taskenv::TaskInstance,
    rollout: &GroupRollout,
) -> Result<AdvantagePair> {
    match algorithm {
        Algorithm::Grpo => {
            let bundle = RewardBundle::from_rollout(task, rollout, lambda)?;
            let r = group_normalize(&bundle.r_reasoning)?;
            Ok(AdvantagePair {
                a_conf: vec![0.0; r.advantages.len()],
                a_reasoning: r.advantages,
                degenerate_reasoning: r.degenerate,
                degenerate_conf: true,
            })
        }
        Algorithm::Dcpo => decoupled_advantages(&RewardBundle::from_rollout(task, rollout, lambda)?),
        Algorithm::Coupled => Ok(AdvantagePair::shared(group_normalize(&coupled_rewards(task, rollout)?)?)),
    }
}

/// Calibration statistics for one confidence source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfMetrics {
    pub conf_mean: f64,
    pub conf_var: f64,
    pub ece: f64,
    pub pce: f64,
    pub auroc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub acc: f64,
    pub entropy: f64,
    pub grad_norm: f64,
    pub verbal: ConfMetrics,
    pub sequence: ConfMetrics,
}

/// One CSV row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatRow {
    pub step: usize,
    pub acc: f64,
    pub conf_mean: f64,
    pub conf_var: f64,
    pub ece: f64,
    pub pce: f64,
    pub auroc: Option<f64>,
    pub entropy: f64,
    pub grad_norm: f64,
}

impl LogRow {
    pub fn metrics(&self, source: ConfidenceSource) -> &ConfMetrics {
        match source {
            ConfidenceSource::Verbal => &self.verbal,
            ConfidenceSource::Sequence => &self.sequence,
        }
    }

    pub fn flat(&self, source: ConfidenceSource) -> FlatRow {
        let m = self.metrics(source);
        FlatRow {
            step: self.step,
            acc: self.acc,
            conf_mean: m.conf_mean,
            conf_var: m.conf_var,
            ece: m.ece,
            pce: m.pce,
            auroc: m.auroc,
            entropy: self.entropy,
            grad_norm: self.grad_norm,
        }
    }
}

pub const CSV_HEADER: &str = "step,acc,conf_mean,conf_var,ece,pce,auroc,entropy,grad_norm";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn to_csv(&self, source: ConfidenceSource) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let f = r.flat(source);
            let auroc = f.auroc.map(|a| a.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                f.step, f.acc, f.conf_mean, f.conf_var, f.ece, f.pce, auroc, f.entropy, f.grad_norm
            );
        }
        out
    }

    pub fn last(&self) -> Option<&LogRow> {
        self.rows.last()
    }
}

/// Parses a log written by [`TrainLog::to_csv`].
pub fn parse_log_csv(text: &str) -> Result<Vec<FlatRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(LabError::Usage("training log CSV has an unexpected header".into()));
    }
    let num = |s: &str| -> Result<f64> { s.parse::<f64>().map_err(|_| LabError::Usage(format!("bad number `{s}` in log"))) };
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(LabError::Usage(format!("log row has {} fields", f.len())));
            }
            Ok(FlatRow {
                step: f[0].parse().map_err(|_| LabError::Usage(format!("bad step `{}`", f[0])))?,
                acc: num(f[1])?,
                conf_mean: num(f[2])?,
                conf_var: num(f[3])?,
                ece: num(f[4])?,
                pce: num(f[5])?,
                auroc: if f[6].is_empty() { None } else { Some(num(f[6])?) },
                entropy: num(f[7])?,
                grad_norm: num(f[8])?,
            })
        })
        .collect()
}

/// Evaluation records of the current policy under both confidence sources.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecords {
    pub verbal: Vec<CalibrationRecord>,
    pub sequence: Vec<CalibrationRecord>,
}

/// Draws `samples` responses per task without corruption.
pub fn sample_eval_records(params: &PolicyParams, suite: &TaskSuite, samples: usize, rng: &mut ChaCha8Rng) -> Result<EvalRecords> {
    use rand::Rng;
    let mut verbal = Vec::with_capacity(samples * suite.len());
    let mut sequence = Vec::with_capacity(samples * suite.len());
    let values = params.vocab.values();
    for task in &suite.tasks {
        let t = params.task(task.task_id)?;
        let p = softmax(&t.reasoning_logits)?;
        let q: Vec<Vec<f64>> = t.confidence_logits.iter().map(|r| softmax(r)).collect::<Result<_>>()?;
        for _ in 0..samples {
            let y = sample_index(&p, rng.gen());
            let v = sample_index(&q[y], rng.gen());
            let correct = task.is_correct(y);
            verbal.push(CalibrationRecord {
                confidence: values[v],
                correct,
            });
            sequence.push(CalibrationRecord {
                confidence: p[y].clamp(0.0, 1.0),
                correct,
            });
        }
    }
    Ok(EvalRecords { verbal, sequence })
}

fn conf_metrics(records: &[CalibrationRecord], mean: f64, second_moment: f64, bins: usize) -> Result<ConfMetrics> {
    let b = calibration::bin_records(records, bins)?;
    Ok(ConfMetrics {
        conf_mean: mean,
        conf_var: (second_moment - mean * mean).max(0.0),
        ece: calibration::ece(&b),
        pce: calibration::pce(&b),
        auroc: calibration::auroc(records),
    })
}

/// Metrics of `params` on `suite`. Accuracy, entropy and confidence moments
/// are exact expectations (tasks weighted equally); ECE, PCE and AUROC come
/// from sampled records.
pub fn evaluate(params: &PolicyParams, suite: &TaskSuite, config: &TrainerConfig, step: usize, grad_norm: f64) -> Result<LogRow> {
    let records = eval_records(params, suite, config, step)?;
    let t = suite.len() as f64;
    let (mut acc, mut ent) = (0.0, 0.0);
    let (mut vm, mut vm2, mut sm, mut sm2) = (0.0, 0.0, 0.0, 0.0);
    for task in &suite.tasks {
        let p = params.reasoning_dist(task.task_id)?;
        acc += task.correct_set.iter().map(|&y| p[y]).sum::<f64>();
        ent += crate::policy::entropy_of(&p);
        for (y, py) in p.iter().enumerate() {
            let q = params.confidence_dist(task.task_id, y)?;
            let (m1, m2) = q
                .iter()
                .zip(params.vocab.values())
                .fold((0.0, 0.0), |(a, b), (qv, v)| (a + qv * v, b + qv * v * v));
            vm += py * m1;
            vm2 += py * m2;
            sm += py * py;
            sm2 += py * py * py;
        }
    }
    Ok(LogRow {
        step,
        acc: acc / t,
        entropy: ent / t,
        grad_norm,
        verbal: conf_metrics(&records.verbal, vm / t, vm2 / t, config.num_bins)?,
        sequence: conf_metrics(&records.sequence, sm / t, sm2 / t, config.num_bins)?,
    })
}

/// The records [`evaluate`] draws at `step`.
pub fn eval_records(params: &PolicyParams, suite: &TaskSuite, config: &TrainerConfig, step: usize) -> Result<EvalRecords> {
    sample_eval_records(params, suite, config.eval_samples, &mut eval_rng(config.seed, step))
}

/// Evaluation uses its own ChaCha stream so logging never perturbs training.
fn eval_rng(seed: u64, step: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + step as u64);
    rng
}

/// Per-step diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub grad_norm: f64,
    pub clipped_tokens: usize,
    pub gradient: PolicyGradient,
}

struct Batch {
    old_params: PolicyParams,
    groups: Vec<(GroupRollout, AdvantagePair)>,
}

/// Stepwise trainer; [`train`] drives it to completion.
pub struct Trainer<'a> {
    config: TrainerConfig,
    suite: &'a TaskSuite,
    params: PolicyParams,
    rng: ChaCha8Rng,
    step: usize,
    batch: Option<Batch>,
}

impl<'a> Trainer<'a> {
    pub fn new(config: TrainerConfig, suite: &'a TaskSuite, initial: PolicyParams) -> Result<Self> {
        config.validate()?;
        initial.check_matches(suite)?;
        if !initial.all_finite() {
            return Err(LabError::Numeric("initial parameters are not finite".into()));
        }
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            config,
            suite,
            params: initial,
            rng,
            step: 0,
            batch: None,
        })
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn into_params(self) -> PolicyParams {
        self.params
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.config
    }

    /// Completed update count.
    pub fn steps_done(&self) -> usize {
        self.step
    }

    fn resample(&mut self) -> Result<()> {
        let mut groups = Vec::with_capacity(self.suite.len());
        for task in &self.suite.tasks {
            let rollout = sample_rollout(&self.params, task, self.config.group_size, self.config.corrupt_prob, &mut self.rng)?;
            let adv = group_advantages(self.config.algorithm, self.config.lambda, task, &rollout)?;
            groups.push((rollout, adv));
        }
        self.batch = Some(Batch {
            old_params: self.params.clone(),
            groups,
        });
        Ok(())
    }

    /// Computes the accumulated surrogate gradient for the current batch.
    pub fn gradient(&mut self) -> Result<(PolicyGradient, usize)> {
        if self.step.is_multiple_of(self.config.rollout_reuse) || self.batch.is_none() {
            self.resample()?;
        }
        let batch = self.batch.as_ref().expect("batch sampled above");
        let mut grad = PolicyGradient::zeros_like(&self.params);
        let mut clipped = 0;
        for (rollout, adv) in &batch.groups {
            let out = surrogate_gradient(&batch.old_params, &self.params, rollout, adv, self.config.algorithm, self.config.clip())?;
            clipped += out.clipped_tokens;
            let block = &mut grad.tasks[out.task];
            for (a, b) in block.reasoning.iter_mut().zip(&out.gradient.reasoning) {
                *a += b;
            }
            for (ra, rb) in block.confidence.iter_mut().zip(&out.gradient.confidence) {
                for (a, b) in ra.iter_mut().zip(rb) {
                    *a += b;
                }
            }
        }
        if self.config.freeze_reasoning {
            for b in &mut grad.tasks {
                b.reasoning.iter_mut().for_each(|x| *x = 0.0);
            }
        }
        Ok((grad, clipped))
    }

    /// One gradient-ascent update.
    pub fn step(&mut self) -> Result<StepReport> {
        let (gradient, clipped_tokens) = self.gradient()?;
        let lr = self.config.learning_rate;
        for (t, b) in self.params.tasks.iter_mut().zip(&gradient.tasks) {
            for (z, g) in t.reasoning_logits.iter_mut().zip(&b.reasoning) {
                *z += lr * g;
            }
            for (row, grow) in t.confidence_logits.iter_mut().zip(&b.confidence) {
                for (z, g) in row.iter_mut().zip(grow) {
                    *z += lr * g;
                }
            }
        }
        self.step += 1;
        if !self.params.all_finite() {
            return Err(LabError::Divergence {
                step: self.step,
                detail: "non-finite logits after update".into(),
            });
        }
        Ok(StepReport {
            step: self.step,
            grad_norm: gradient_norm(&gradient),
            clipped_tokens,
            gradient,
        })
    }

    pub fn evaluate(&self, grad_norm: f64) -> Result<LogRow> {
        evaluate(&self.params, self.suite, &self.config, self.step, grad_norm)
    }
}

/// Runs `config.steps` updates, logging at step 0, every `log_every` steps
/// and at the final step.
pub fn train(config: &TrainerConfig, suite: &TaskSuite, initial: PolicyParams) -> Result<(PolicyParams, TrainLog)> {
    let mut trainer = Trainer::new(config.clone(), suite, initial)?;
    let mut log = TrainLog::default();
    if config.steps == 0 {
        return Ok((trainer.into_params(), log));
    }
    log.rows.push(trainer.evaluate(0.0)?);
    for s in 1..=config.steps {
        let report = trainer.step()?;
        if s % config.log_every == 0 || s == config.steps {
            log.rows.push(trainer.evaluate(report.grad_norm)?);
        }
    }
    Ok((trainer.into_params(), log))
}
