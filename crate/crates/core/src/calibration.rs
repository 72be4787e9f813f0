//! Calibration metrics over (confidence, correctness) records: equal-width
//! reliability bins, ECE, positive calibration error, AUROC and Brier score.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub confidence: f64,
    pub correct: bool,
}

impl CalibrationRecord {
    pub fn new(confidence: f64, correct: bool) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(LabError::Usage(format!("confidence {confidence} outside [0,1]")));
        }
        Ok(Self { confidence, correct })
    }

    fn label(&self) -> f64 {
        if self.correct {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Mean confidence of the bin; 0 when empty.
    pub mean_confidence: f64,
    /// Fraction correct in the bin; 0 when empty.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBins {
    pub bins: Vec<Bin>,
    pub total: usize,
}

/// Bin `m` covers `[m/M, (m+1)/M)`; the last bin also holds 1.0.
pub fn bin_index(confidence: f64, num_bins: usize) -> usize {
    let m = num_bins as f64;
    let mut idx = ((confidence * m).floor().max(0.0) as usize).min(num_bins - 1);
    // settle floating-point disagreements between c*M and the edge m/M
    while idx > 0 && confidence < idx as f64 / m {
        idx -= 1;
    }
    while idx + 1 < num_bins && confidence >= (idx + 1) as f64 / m {
        idx += 1;
    }
    idx
}

pub fn bin_records(records: &[CalibrationRecord], num_bins: usize) -> Result<ReliabilityBins> {
    if num_bins == 0 {
        return Err(LabError::Usage("number of bins must be at least 1".into()));
    }
    if records.is_empty() {
        return Err(LabError::Usage("cannot bin an empty record set".into()));
    }
    let mut sum_conf = vec![0.0; num_bins];
    let mut sum_correct = vec![0.0; num_bins];
    let mut counts = vec![0usize; num_bins];
    for r in records {
        let i = bin_index(r.confidence, num_bins);
        counts[i] += 1;
        sum_conf[i] += r.confidence;
        sum_correct[i] += r.label();
    }
    let m = num_bins as f64;
    let bins = (0..num_bins)
        .map(|i| {
            let (mean_confidence, accuracy) = if counts[i] == 0 {
                (0.0, 0.0)
            } else {
                (sum_conf[i] / counts[i] as f64, sum_correct[i] / counts[i] as f64)
            };
            Bin {
                lo: i as f64 / m,
                hi: (i + 1) as f64 / m,
                count: counts[i],
                mean_confidence,
                accuracy,
            }
        })
        .collect();
    Ok(ReliabilityBins {
        bins,
        total: records.len(),
    })
}

fn weighted_gap(bins: &ReliabilityBins, over_only: bool) -> f64 {
    let n = bins.total as f64;
    bins.bins
        .iter()
        .filter(|b| b.count > 0)
        .filter(|b| !over_only || b.mean_confidence > b.accuracy)
        .map(|b| b.count as f64 / n * (b.accuracy - b.mean_confidence).abs())
        .sum::<f64>()
        + 0.0 // the empty sum is -0.0
}

/// Expected calibration error.
pub fn ece(bins: &ReliabilityBins) -> f64 {
    weighted_gap(bins, false)
}

/// ECE restricted to over-confident bins.
pub fn pce(bins: &ReliabilityBins) -> f64 {
    weighted_gap(bins, true)
}

/// Probability that a random correct record outranks a random incorrect one,
/// ties counted one half. `None` when only one class is present.
pub fn auroc(records: &[CalibrationRecord]) -> Option<f64> {
    let n_pos = records.iter().filter(|r| r.correct).count();
    let n_neg = records.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[a].confidence.total_cmp(&records[b].confidence));
    // average 1-based ranks over tie runs
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && records[order[j]].confidence == records[order[i]].confidence {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        let pos_in_run = order[i..j].iter().filter(|&&k| records[k].correct).count();
        pos_rank_sum += avg_rank * pos_in_run as f64;
        i = j;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    let u = pos_rank_sum - p * (p + 1.0) / 2.0;
    Some(u / (p * q))
}

/// Mean squared error between confidence and correctness.
pub fn brier(records: &[CalibrationRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(LabError::Usage("brier score of an empty record set".into()));
    }
    Ok(records.iter().map(|r| (r.confidence - r.label()).powi(2)).sum::<f64>() / records.len() as f64)
}

/// All scalar metrics for one record set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub n: usize,
    pub ece: f64,
    pub pce: f64,
    pub auroc: Option<f64>,
    pub brier: f64,
}

pub fn summarize(records: &[CalibrationRecord], num_bins: usize) -> Result<MetricSummary> {
    let bins = bin_records(records, num_bins)?;
    Ok(MetricSummary {
        n: records.len(),
        ece: ece(&bins),
        pce: pce(&bins),
        auroc: auroc(records),
        brier: brier(records)?,
    })
}
