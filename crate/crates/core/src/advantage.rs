//! Group-relative advantage normalization and the decoupled
//! reasoning/confidence advantage pair.

use crate::error::{LabError, Result};
use crate::rewards::RewardBundle;

/// Groups whose population standard deviation falls below this are treated
/// as carrying no signal.
pub const DEGENERATE_STD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub advantages: Vec<f64>,
    pub degenerate: bool,
}

/// `A_i = (r_i - mean) / std` with the population (1/G) standard deviation.
/// Zero-variance groups map to all-zero advantages.
pub fn group_normalize(rewards: &[f64]) -> Result<Normalized> {
    let g = rewards.len();
    if g < 2 {
        return Err(LabError::Usage(format!("group normalization needs G >= 2, got {g}")));
    }
    let n = g as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < DEGENERATE_STD {
        return Ok(Normalized {
            advantages: vec![0.0; g],
            degenerate: true,
        });
    }
    Ok(Normalized {
        advantages: rewards.iter().map(|r| (r - mean) / std).collect(),
        degenerate: false,
    })
}

/// Advantages for the two token blocks of each response.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantagePair {
    pub a_reasoning: Vec<f64>,
    pub a_conf: Vec<f64>,
    pub degenerate_reasoning: bool,
    pub degenerate_conf: bool,
}

impl AdvantagePair {
    /// Both blocks share one advantage vector (no masking).
    pub fn shared(norm: Normalized) -> Self {
        Self {
            a_conf: norm.advantages.clone(),
            a_reasoning: norm.advantages,
            degenerate_reasoning: norm.degenerate,
            degenerate_conf: norm.degenerate,
        }
    }

    pub fn zeros(g: usize) -> Self {
        Self {
            a_reasoning: vec![0.0; g],
            a_conf: vec![0.0; g],
            degenerate_reasoning: true,
            degenerate_conf: true,
        }
    }
}

/// Normalizes the reasoning and confidence reward streams independently.
pub fn decoupled_advantages(bundle: &RewardBundle) -> Result<AdvantagePair> {
    if bundle.r_reasoning.len() != bundle.r_conf.len() {
        return Err(LabError::Usage("reward streams differ in length".into()));
    }
    let r = group_normalize(&bundle.r_reasoning)?;
    let c = group_normalize(&bundle.r_conf)?;
    Ok(AdvantagePair {
        a_reasoning: r.advantages,
        a_conf: c.advantages,
        degenerate_reasoning: r.degenerate,
        degenerate_conf: c.degenerate,
    })
}
