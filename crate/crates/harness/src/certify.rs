//! The exact-theory certificate suite behind `dcpo-lab theory`.

use std::collections::BTreeMap;

use dcpo_core::policy::{sample_rollout, ConfidenceVocab, InitSpec, PolicyParams};
use dcpo_core::taskenv::{generate_suite, DifficultyLevel, TaskInstance, TaskSuite};
use dcpo_core::theory::{
    check_gradient_conflict, exact_accuracy, exact_confidence_feature, exact_gradients, group_estimator_stats,
    mode_collapse_check, optimal_confidence_check, random_conflict_fixture, subgradient_variance_comparison,
    worked_conflict_fixture, CalLossSpec,
};
use dcpo_core::trainer::{group_advantages, surrogate_gradient, surrogate_objective, train, Algorithm, TrainerConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::initial_policy;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub pass: bool,
    pub observed: f64,
    pub expected: f64,
    pub tolerance: f64,
}

impl CheckResult {
    /// `|observed - expected| <= tolerance`.
    pub fn within(observed: f64, expected: f64, tolerance: f64) -> Self {
        Self {
            pass: (observed - expected).abs() <= tolerance,
            observed,
            expected,
            tolerance,
        }
    }

    /// `observed >= expected`.
    pub fn at_least(observed: f64, expected: f64) -> Self {
        Self {
            pass: observed >= expected,
            observed,
            expected,
            tolerance: 0.0,
        }
    }

    fn and(mut self, extra: bool) -> Self {
        self.pass &= extra;
        self
    }
}

pub type CertificateReport = BTreeMap<String, CheckResult>;

pub fn all_pass(report: &CertificateReport) -> bool {
    report.values().all(|c| c.pass)
}

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-6;
pub const IDENTITY_TOLERANCE: f64 = 1e-8;
pub const WORKED_INNER_PRODUCT: f64 = -0.064;
pub const GROUP_SIZE: usize = 8;
pub const STAT_TRIALS: usize = 100_000;

fn central(params: &PolicyParams, f: impl Fn(&PolicyParams) -> f64, set: impl Fn(&mut PolicyParams, f64)) -> f64 {
    let mut plus = params.clone();
    set(&mut plus, FD_STEP);
    let mut minus = params.clone();
    set(&mut minus, -FD_STEP);
    (f(&plus) - f(&minus)) / (2.0 * FD_STEP)
}

/// Largest deviation between the exact accuracy and calibration gradients
/// and central differences over `fixtures` random fixtures.
pub fn exact_gradient_fd_error(fixtures: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..fixtures {
        let (suite, params) = random_conflict_fixture(&mut rng)?;
        let task = &suite.tasks[0];
        let (g_acc, g_cal) = exact_gradients(&params, task, CalLossSpec::Squared)?;
        let target = exact_accuracy(&params, task)?;
        for k in 0..task.num_trajectories {
            let bump = |p: &mut PolicyParams, h: f64| p.tasks[0].reasoning_logits[k] += h;
            let fd_acc = central(&params, |p| exact_accuracy(p, task).unwrap(), bump);
            let fd_cal = central(
                &params,
                |p| -CalLossSpec::Squared.evaluate(exact_confidence_feature(p, task).unwrap(), target),
                bump,
            );
            worst = worst.max((fd_acc - g_acc[k]).abs()).max((fd_cal - g_cal[k]).abs());
        }
    }
    Ok(worst)
}

/// Largest deviation between the on-policy surrogate gradient and central
/// differences of the surrogate, cycling through the three algorithms.
pub fn surrogate_gradient_fd_error(fixtures: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clip = TrainerConfig::default().clip();
    let mut worst: f64 = 0.0;
    for case in 0..fixtures {
        let n = rng.gen_range(2..=12);
        let suite = generate_suite(rng.gen(), 1, n, &[DifficultyLevel::new(0.5, 1.0)])?;
        let init = InitSpec {
            reasoning_scale: 1.0,
            conf_center: Some(rng.gen_range(0.1..0.9)),
            conf_width: 0.3,
        };
        let params = PolicyParams::init(&suite, ConfidenceVocab::evenly_spaced(rng.gen_range(3..=11))?, &init, &mut rng)?;
        let task = &suite.tasks[0];
        let rollout = sample_rollout(&params, task, GROUP_SIZE, 0.2, &mut rng)?;
        let alg = [Algorithm::Grpo, Algorithm::Dcpo, Algorithm::Coupled][case % 3];
        let adv = group_advantages(alg, 0.5, task, &rollout)?;
        let grad = surrogate_gradient(&params, &params, &rollout, &adv, alg, clip)?.gradient;
        let obj = |p: &PolicyParams| surrogate_objective(&params, p, &rollout, &adv, alg, clip).unwrap();
        for k in 0..n {
            let fd = central(&params, obj, |p, h| p.tasks[0].reasoning_logits[k] += h);
            worst = worst.max((fd - grad.reasoning[k]).abs());
            for b in 0..params.vocab.len() {
                let fd = central(&params, obj, |p, h| p.tasks[0].confidence_logits[k][b] += h);
                worst = worst.max((fd - grad.confidence[k][b]).abs());
            }
        }
    }
    Ok(worst)
}

/// Settings of the mode-collapse certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapseSetup {
    pub n_trajectories: usize,
    pub fraction_correct: f64,
    pub reasoning_scale: f64,
    pub trainer: TrainerConfig,
    pub threshold: f64,
    pub max_entropy: f64,
}

impl Default for CollapseSetup {
    fn default() -> Self {
        Self {
            n_trajectories: 20,
            // three correct trajectories out of twenty
            fraction_correct: 0.15,
            reasoning_scale: 0.5,
            trainer: TrainerConfig {
                algorithm: Algorithm::Grpo,
                learning_rate: 0.5,
                steps: 2000,
                log_every: 50,
                ..Default::default()
            },
            threshold: 0.99,
            max_entropy: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseOutcome {
    pub seed: u64,
    pub collapsed: bool,
    pub max_prob: f64,
    pub entropy: f64,
    pub tail_non_decreasing: bool,
}

pub fn collapse_runs(setup: &CollapseSetup, seeds: &[u64]) -> Result<Vec<CollapseOutcome>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let suite = generate_suite(seed, 1, setup.n_trajectories, &[DifficultyLevel::new(setup.fraction_correct, 1.0)])?;
            let init = InitSpec {
                reasoning_scale: setup.reasoning_scale,
                ..Default::default()
            };
            let params = initial_policy(&suite, &init, dcpo_core::policy::DEFAULT_VOCAB_SIZE, seed)?;
            let config = TrainerConfig { seed, ..setup.trainer.clone() };
            let rep = mode_collapse_check(&suite, &config, params)?.remove(0);
            Ok(CollapseOutcome {
                seed,
                collapsed: rep.collapsed(setup.threshold, setup.max_entropy),
                max_prob: rep.max_prob,
                entropy: rep.entropy,
                tail_non_decreasing: rep.tail_non_decreasing(0.5),
            })
        })
        .collect()
}

/// Ten tasks over ten trajectories with `k` correct ones, `E[R]` from 0.1 to
/// 0.9 under the uniform head (the last task repeats 0.5).
pub fn optimal_confidence_suite() -> Result<TaskSuite> {
    let sizes = [1, 2, 3, 4, 5, 6, 7, 8, 9, 5];
    let tasks = sizes
        .iter()
        .enumerate()
        .map(|(id, &k)| {
            let phi = (0..10).map(|y| if y < k { 1.0 } else { 0.25 }).collect();
            TaskInstance::with_phi(id, 0..k, phi)
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(TaskSuite::from_tasks(0, tasks)?)
}

/// Group-level target, frozen reasoning head.
pub fn optimal_confidence_config() -> TrainerConfig {
    TrainerConfig {
        algorithm: Algorithm::Dcpo,
        lambda: 1.0,
        freeze_reasoning: true,
        learning_rate: 0.5,
        steps: 3000,
        log_every: 3000,
        eval_samples: 16,
        ..Default::default()
    }
}

pub fn optimal_confidence_gaps() -> Result<Vec<f64>> {
    let suite = optimal_confidence_suite()?;
    let init = PolicyParams::uniform(&suite, ConfidenceVocab::default());
    let (params, _) = train(&optimal_confidence_config(), &suite, init)?;
    Ok(optimal_confidence_check(&params, &suite)?)
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Runs every certificate.
pub fn run_certificates() -> Result<CertificateReport> {
    let mut report = CertificateReport::new();

    let (suite, params) = worked_conflict_fixture()?;
    let rep = check_gradient_conflict(&params, &suite.tasks[0], CalLossSpec::Squared)?;
    report.insert(
        "conflict_worked_fixture".into(),
        CheckResult::within(rep.inner_product, WORKED_INNER_PRODUCT, 1e-10).and(rep.applicable),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst, mut all_negative) = (0.0f64, true);
    for _ in 0..100 {
        let (suite, params) = random_conflict_fixture(&mut rng)?;
        let rep = check_gradient_conflict(&params, &suite.tasks[0], CalLossSpec::Squared)?;
        all_negative &= rep.applicable && rep.inner_product < 0.0;
        worst = worst.max(rep.relative_residual());
    }
    report.insert(
        "conflict_identity_random_fixtures".into(),
        CheckResult::within(worst, 0.0, IDENTITY_TOLERANCE).and(all_negative),
    );

    report.insert(
        "exact_gradient_finite_difference".into(),
        CheckResult::within(exact_gradient_fd_error(50, 2)?, 0.0, FD_TOLERANCE),
    );
    report.insert(
        "surrogate_gradient_finite_difference".into(),
        CheckResult::within(surrogate_gradient_fd_error(50, 3)?, 0.0, FD_TOLERANCE),
    );

    for (i, p) in [0.1, 0.5, 0.9].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(10 + i as u64);
        let (mean, var) = group_estimator_stats(p, GROUP_SIZE, STAT_TRIALS, &mut rng)?;
        let var_expected = p * (1.0 - p) / GROUP_SIZE as f64;
        let bound = 3.0 * (p * (1.0 - p) / (GROUP_SIZE * STAT_TRIALS) as f64).sqrt();
        report.insert(format!("group_estimator_mean_p{p}"), CheckResult::within(mean, p, bound));
        report.insert(format!("group_estimator_var_p{p}"), CheckResult::within(var, var_expected, 0.05 * var_expected));
    }

    for (i, p) in [0.3, 0.5, 0.7].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(20 + i as u64);
        let sv = subgradient_variance_comparison(0.8, p, STAT_TRIALS, &mut rng)?;
        let analytic = 4.0 * p * (1.0 - p);
        report.insert(
            format!("subgradient_variance_instance_p{p}"),
            CheckResult::within(sv.var_instance, analytic, 0.02 * analytic).and(sv.applicable),
        );
        report.insert(format!("subgradient_variance_group_p{p}"), CheckResult::within(sv.var_group, 0.0, 0.0));
    }

    let seeds: Vec<u64> = (0..20).collect();
    let runs = collapse_runs(&CollapseSetup::default(), &seeds)?;
    let frac = runs.iter().filter(|r| r.collapsed).count() as f64 / runs.len() as f64;
    report.insert("mode_collapse_fraction".into(), CheckResult::at_least(frac, 0.9));

    let gaps = optimal_confidence_gaps()?;
    report.insert("optimal_confidence_max_gap".into(), CheckResult::within(max_of(&gaps), 0.0, 0.05));

    Ok(report)
}
