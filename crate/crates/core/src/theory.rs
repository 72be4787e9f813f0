//! Exact enumeration of expected objectives and their gradients on the
//! reasoning logits, the Fisher-metric geometry between accuracy and
//! calibration, and the statistical facts behind group-level targets.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::policy::{entropy_of, PolicyParams};
use crate::taskenv::{TaskInstance, TaskSuite};
use crate::trainer::{Algorithm, Trainer, TrainerConfig};

/// Relative singular-value cutoff of the Fisher pseudoinverse.
pub const PINV_RELATIVE_CUTOFF: f64 = 1e-10;

/// Calibration loss `l(c, t)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalLossSpec {
    #[default]
    Squared,
    Absolute,
}

impl CalLossSpec {
    pub fn evaluate(self, c: f64, t: f64) -> f64 {
        match self {
            CalLossSpec::Squared => (c - t).powi(2),
            CalLossSpec::Absolute => (c - t).abs(),
        }
    }

    /// Derivative in `c`; the absolute loss picks 0 at the kink.
    pub fn derivative_in_c(self, c: f64, t: f64) -> f64 {
        match self {
            CalLossSpec::Squared => 2.0 * (c - t),
            CalLossSpec::Absolute => {
                if c > t {
                    1.0
                } else if c < t {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

fn probs(params: &PolicyParams, task: &TaskInstance) -> Result<Vec<f64>> {
    let p = params.reasoning_dist(task.task_id)?;
    if p.len() != task.num_trajectories {
        return Err(LabError::Usage(format!(
            "task {} has {} trajectories but the policy has {}",
            task.task_id,
            task.num_trajectories,
            p.len()
        )));
    }
    Ok(p)
}

fn expectation(p: &[f64], f: &[f64]) -> f64 {
    p.iter().zip(f).map(|(a, b)| a * b).sum()
}

/// `sum_{y in Y+} pi(y|x)`.
pub fn exact_accuracy(params: &PolicyParams, task: &TaskInstance) -> Result<f64> {
    let p = probs(params, task)?;
    Ok(task.correct_set.iter().map(|&y| p[y]).sum())
}

/// `sum_y pi(y|x) phi(y)`.
pub fn exact_confidence_feature(params: &PolicyParams, task: &TaskInstance) -> Result<f64> {
    Ok(expectation(&probs(params, task)?, &task.phi))
}

/// `E[R phi] - E[R] E[phi]` under the policy.
pub fn covariance_r_phi(params: &PolicyParams, task: &TaskInstance) -> Result<f64> {
    let p = probs(params, task)?;
    let r = task.reward_vector();
    let rphi: Vec<f64> = r.iter().zip(&task.phi).map(|(a, b)| a * b).collect();
    Ok(expectation(&p, &rphi) - expectation(&p, &r) * expectation(&p, &task.phi))
}

/// `sum_y pi(y) (f(y) - E f) (e_y - pi)`, built one score vector at a time.
fn centered_score_sum(p: &[f64], f: &[f64]) -> Vec<f64> {
    let mean = expectation(p, f);
    let mut out = vec![0.0; p.len()];
    for (y, (&py, &fy)) in p.iter().zip(f).enumerate() {
        let w = py * (fy - mean);
        for (k, o) in out.iter_mut().enumerate() {
            let indicator = if k == y { 1.0 } else { 0.0 };
            *o += w * (indicator - p[k]);
        }
    }
    out
}

/// Gradients on the reasoning logits of the expected accuracy and of the
/// calibration objective `-l(E[phi], E[R])`, the target held fixed.
pub fn exact_gradients(params: &PolicyParams, task: &TaskInstance, loss: CalLossSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    let p = probs(params, task)?;
    let r = task.reward_vector();
    let grad_acc = centered_score_sum(&p, &r);
    let dl = loss.derivative_in_c(expectation(&p, &task.phi), expectation(&p, &r));
    let grad_cal = centered_score_sum(&p, &task.phi).into_iter().map(|g| -dl * g).collect();
    Ok((grad_acc, grad_cal))
}

/// `a^T F^+ b` with singular values below `1e-10 * sigma_max` dropped.
pub fn fisher_inner_product(a: &[f64], b: &[f64], fisher: &DMatrix<f64>) -> Result<f64> {
    let n = a.len();
    if b.len() != n || fisher.nrows() != n || fisher.ncols() != n {
        return Err(LabError::Usage("vector and metric shapes disagree".into()));
    }
    let scale = fisher.amax().max(1.0);
    for i in 0..n {
        for j in 0..i {
            if (fisher[(i, j)] - fisher[(j, i)]).abs() > 1e-12 * scale {
                return Err(LabError::Usage("Fisher matrix is not symmetric".into()));
            }
        }
    }
    if n == 0 {
        return Ok(0.0);
    }
    // for a symmetric matrix the singular values are |eigenvalues|
    let eig = fisher.clone().symmetric_eigen();
    let sigma_max = eig.eigenvalues.amax();
    if sigma_max == 0.0 {
        return Ok(0.0);
    }
    let cutoff = PINV_RELATIVE_CUTOFF * sigma_max;
    let mut pinv = DMatrix::<f64>::zeros(n, n);
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() > cutoff {
            let v = eig.eigenvectors.column(k);
            pinv += (v * v.transpose()) / lambda;
        }
    }
    let a = DVector::from_column_slice(a);
    let b = DVector::from_column_slice(b);
    Ok(a.dot(&(pinv * b)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConflictReport {
    /// False when the over-confidence or positive-covariance hypothesis fails.
    pub applicable: bool,
    pub expected_accuracy: f64,
    pub expected_confidence: f64,
    pub covariance_r_phi: f64,
    pub dl_dc: f64,
    pub inner_product: f64,
    pub identity_residual: f64,
}

impl ConflictReport {
    /// Identity residual relative to `max(1, |inner_product|)`.
    pub fn relative_residual(&self) -> f64 {
        self.identity_residual / self.inner_product.abs().max(1.0)
    }
}

pub fn check_gradient_conflict(params: &PolicyParams, task: &TaskInstance, loss: CalLossSpec) -> Result<ConflictReport> {
    let acc = exact_accuracy(params, task)?;
    let conf = exact_confidence_feature(params, task)?;
    let cov = covariance_r_phi(params, task)?;
    let dl_dc = loss.derivative_in_c(conf, acc);
    let (ga, gc) = exact_gradients(params, task, loss)?;
    let inner = fisher_inner_product(&ga, &gc, &params.fisher_matrix(task.task_id)?)?;
    Ok(ConflictReport {
        applicable: conf > acc && cov > 0.0,
        expected_accuracy: acc,
        expected_confidence: conf,
        covariance_r_phi: cov,
        dl_dc,
        inner_product: inner,
        identity_residual: (inner + dl_dc * cov).abs(),
    })
}

/// Single-task suite and policy with the given logits.
pub fn single_task_fixture(logits: Vec<f64>, correct: &[usize], phi: Vec<f64>) -> Result<(TaskSuite, PolicyParams)> {
    let task = TaskInstance::with_phi(0, correct.iter().copied(), phi)?;
    let suite = TaskSuite::from_tasks(0, vec![task])?;
    let mut params = PolicyParams::uniform(&suite, crate::policy::ConfidenceVocab::default());
    if logits.len() != params.tasks[0].reasoning_logits.len() {
        return Err(LabError::Usage("logit count differs from trajectory count".into()));
    }
    params.tasks[0].reasoning_logits = logits;
    Ok((suite, params))
}

/// Two-trajectory fixture `p = (0.8, 0.2)`, `R = (0, 1)`, `phi = (0.5, 1)`.
pub fn worked_conflict_fixture() -> Result<(TaskSuite, PolicyParams)> {
    single_task_fixture(vec![4f64.ln(), 0.0], &[1], vec![0.5, 1.0])
}

/// Random over-confident fixture: `phi` is shifted upward on every
/// trajectory and higher on correct ones, so both hypotheses hold.
pub fn random_conflict_fixture<R: Rng + ?Sized>(rng: &mut R) -> Result<(TaskSuite, PolicyParams)> {
    loop {
        let n = rng.gen_range(2..=12);
        let k = rng.gen_range(1..n);
        let correct: Vec<usize> = rand::seq::index::sample(rng, n, k).into_vec();
        let logits: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let base: f64 = rng.gen_range(0.3..0.7);
        let lift = rng.gen_range(0.1..(1.0 - base));
        let phi: Vec<f64> = (0..n)
            .map(|y| {
                let noise = rng.gen_range(0.0..0.05);
                if correct.contains(&y) {
                    (base + lift - noise).min(1.0)
                } else {
                    base + noise
                }
            })
            .collect();
        let (suite, params) = single_task_fixture(logits, &correct, phi)?;
        let t = &suite.tasks[0];
        let acc = exact_accuracy(&params, t)?;
        if exact_confidence_feature(&params, t)? > acc + 1e-6 && covariance_r_phi(&params, t)? > 1e-6 {
            return Ok((suite, params));
        }
    }
}

/// Mean and (population) variance of the group accuracy over `trials`
/// groups of `g` Bernoulli(p) draws.
pub fn group_estimator_stats<R: Rng + ?Sized>(p: f64, g: usize, trials: usize, rng: &mut R) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&p) || g == 0 || trials == 0 {
        return Err(LabError::Usage("need p in [0,1], G >= 1 and trials >= 1".into()));
    }
    let draws: Vec<f64> = (0..trials)
        .map(|_| (0..g).filter(|_| rng.gen::<f64>() < p).count() as f64 / g as f64)
        .collect();
    Ok(mean_var(&draws))
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubgradientVariance {
    /// False at the kink `c = p`, where no variance claim is made.
    pub applicable: bool,
    pub var_instance: f64,
    pub var_group: f64,
    /// `4 p (1 - p)`.
    pub analytic_instance: f64,
}

/// Variance of the subgradient of `|c - R|` in `c` with `R ~ Bernoulli(p)`
/// against the deterministic subgradient of `|c - p|`.
pub fn subgradient_variance_comparison<R: Rng + ?Sized>(c: f64, p: f64, trials: usize, rng: &mut R) -> Result<SubgradientVariance> {
    if !(c > 0.0 && c < 1.0) || !(0.0..=1.0).contains(&p) || trials == 0 {
        return Err(LabError::Usage("need c in (0,1), p in [0,1] and trials >= 1".into()));
    }
    let loss = CalLossSpec::Absolute;
    let analytic_instance = 4.0 * p * (1.0 - p);
    if c == p {
        return Ok(SubgradientVariance {
            applicable: false,
            var_instance: f64::NAN,
            var_group: 0.0,
            analytic_instance,
        });
    }
    let inst: Vec<f64> = (0..trials)
        .map(|_| {
            let r = if rng.gen::<f64>() < p { 1.0 } else { 0.0 };
            loss.derivative_in_c(c, r)
        })
        .collect();
    let group: Vec<f64> = (0..trials).map(|_| loss.derivative_in_c(c, p)).collect();
    Ok(SubgradientVariance {
        applicable: true,
        var_instance: mean_var(&inst).1,
        var_group: mean_var(&group).1,
        analytic_instance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    pub task_id: usize,
    pub max_prob: f64,
    pub argmax_in_correct_set: bool,
    pub entropy: f64,
    /// `max_y pi(y|x)` at step 0 and every `log_every` steps.
    pub max_prob_history: Vec<f64>,
}

impl CollapseReport {
    pub fn collapsed(&self, threshold: f64, max_entropy: f64) -> bool {
        self.max_prob >= threshold && self.argmax_in_correct_set && self.entropy <= max_entropy
    }

    /// Whether `max_prob` never decreases over the last `fraction` of the history.
    pub fn tail_non_decreasing(&self, fraction: f64) -> bool {
        let h = &self.max_prob_history;
        let k = ((h.len() as f64 * fraction).ceil() as usize).clamp(1, h.len().max(1));
        h[h.len().saturating_sub(k)..].windows(2).all(|w| w[1] >= w[0])
    }
}

fn argmax(p: &[f64]) -> usize {
    p.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Trains with GRPO and reports how concentrated each task's policy ends up.
pub fn mode_collapse_check(suite: &TaskSuite, config: &TrainerConfig, initial: PolicyParams) -> Result<Vec<CollapseReport>> {
    if config.algorithm != Algorithm::Grpo {
        return Err(LabError::Usage("mode collapse check requires the grpo algorithm".into()));
    }
    let mut trainer = Trainer::new(config.clone(), suite, initial)?;
    let max_probs = |params: &PolicyParams| -> Result<Vec<f64>> {
        suite
            .tasks
            .iter()
            .map(|t| Ok(params.reasoning_dist(t.task_id)?.into_iter().fold(0.0, f64::max)))
            .collect()
    };
    let mut history = vec![max_probs(trainer.params())?];
    for s in 1..=config.steps {
        trainer.step()?;
        if s % config.log_every == 0 || s == config.steps {
            history.push(max_probs(trainer.params())?);
        }
    }
    let params = trainer.params();
    suite
        .tasks
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let p = params.reasoning_dist(t.task_id)?;
            let top = argmax(&p);
            Ok(CollapseReport {
                task_id: t.task_id,
                max_prob: p[top],
                argmax_in_correct_set: t.is_correct(top),
                entropy: entropy_of(&p),
                max_prob_history: history.iter().map(|h| h[i]).collect(),
            })
        })
        .collect()
}

/// Per-task `|E[c|q] - E[R]|` with the confidence expectation taken over
/// both heads.
pub fn optimal_confidence_check(params: &PolicyParams, suite: &TaskSuite) -> Result<Vec<f64>> {
    params.check_matches(suite)?;
    suite
        .tasks
        .iter()
        .map(|t| Ok((params.expected_verbal_confidence(t.task_id)? - exact_accuracy(params, t)?).abs()))
        .collect()
}
