//! Reward signals for reasoning and confidence tokens.

use crate::error::{LabError, Result};
use crate::policy::GroupRollout;
use crate::taskenv::TaskInstance;

/// Reward given to a confidence block that does not follow the output format.
pub const FORMAT_PENALTY: f64 = -1.0;

/// Mean correctness of a rollout group.
pub fn group_accuracy(rewards: &[f64]) -> Result<f64> {
    if rewards.is_empty() {
        return Err(LabError::Usage("group accuracy of an empty group".into()));
    }
    Ok(rewards.iter().sum::<f64>() / rewards.len() as f64)
}

/// Interpolates group-level and instance-level accuracy: `lambda * group + (1 - lambda) * instance`.
pub fn hybrid_target(group_acc: f64, instance_r: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(lambda * group_acc + (1.0 - lambda) * instance_r)
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(LabError::Config(format!("lambda {lambda} outside [0,1]")));
    }
    Ok(())
}

/// `-|c - target|` for well-formed output, the format penalty otherwise.
pub fn confidence_reward(conf_value: f64, r_ig: f64, well_formed: bool) -> f64 {
    if well_formed {
        -(conf_value - r_ig).abs()
    } else {
        FORMAT_PENALTY
    }
}

/// Brier-augmented correctness reward of the coupled baseline: `r - (c - r)^2`.
pub fn coupled_reward(instance_r: f64, conf_value: f64) -> f64 {
    instance_r - (conf_value - instance_r).powi(2)
}

/// Every reward stream of one rollout group.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardBundle {
    pub r_reasoning: Vec<f64>,
    pub group_accuracy: f64,
    pub r_conf: Vec<f64>,
    pub lambda: f64,
}

impl RewardBundle {
    pub fn new(r_reasoning: Vec<f64>, conf_values: &[f64], well_formed: &[bool], lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        if r_reasoning.len() != conf_values.len() || r_reasoning.len() != well_formed.len() {
            return Err(LabError::Usage("reward stream lengths differ".into()));
        }
        let group_accuracy = group_accuracy(&r_reasoning)?;
        let r_conf = r_reasoning
            .iter()
            .zip(conf_values)
            .zip(well_formed)
            .map(|((&r, &c), &ok)| {
                let target = lambda * group_accuracy + (1.0 - lambda) * r;
                confidence_reward(c, target, ok)
            })
            .collect();
        Ok(Self {
            r_reasoning,
            group_accuracy,
            r_conf,
            lambda,
        })
    }

    /// Scores a sampled group against its task's verifier.
    pub fn from_rollout(task: &TaskInstance, rollout: &GroupRollout, lambda: f64) -> Result<Self> {
        let r = rollout
            .samples
            .iter()
            .map(|s| task.correctness(s.trajectory).map(f64::from))
            .collect::<Result<Vec<_>>>()?;
        let c: Vec<f64> = rollout.samples.iter().map(|s| s.conf_value).collect();
        let ok: Vec<bool> = rollout.samples.iter().map(|s| s.well_formed).collect();
        Self::new(r, &c, &ok, lambda)
    }

    pub fn len(&self) -> usize {
        self.r_reasoning.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_reasoning.is_empty()
    }
}

/// Coupled-baseline rewards of a group. Malformed confidence blocks receive
/// the format penalty in place of the Brier-augmented reward.
pub fn coupled_rewards(task: &TaskInstance, rollout: &GroupRollout) -> Result<Vec<f64>> {
    rollout
        .samples
        .iter()
        .map(|s| {
            let r = f64::from(task.correctness(s.trajectory)?);
            Ok(if s.well_formed {
                coupled_reward(r, s.conf_value)
            } else {
                r + FORMAT_PENALTY
            })
        })
        .collect()
}
