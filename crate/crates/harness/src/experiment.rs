//! Variant x seed experiment grid, per-run artifacts and the cross-variant
//! summary.
//!
//! Output layout under the output directory:
//!
//! ```text
//! spec.json
//! logs/<variant>_seed<k>_<source>.csv
//! metrics/<variant>_seed<k>.json
//! reliability/<variant>_seed<k>_<source>.csv
//! summary.json
//! ```
//!
//! The summary is computed from the log CSVs as written, so it can always be
//! recomputed from them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dcpo_core::calibration::{bin_records, summarize, MetricSummary};
use dcpo_core::policy::PolicyParams;
use dcpo_core::taskenv::TaskSuite;
use dcpo_core::trainer::{eval_records, evaluate, parse_log_csv, train, Algorithm, ConfidenceSource, FlatRow, TrainLog, TrainerConfig};
use dcpo_core::LabError;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{initial_policy, ExperimentSpec, Variant, SCHEMA_VERSION};
use crate::error::{io_err, HarnessError, Result};
use crate::records::reliability_csv;

/// Like [`train`], but a zero-step run still logs the initial policy.
pub fn run_training(config: &TrainerConfig, suite: &TaskSuite, initial: PolicyParams) -> Result<(PolicyParams, TrainLog)> {
    if config.steps == 0 {
        config.validate()?;
        let row = evaluate(&initial, suite, config, 0, 0.0)?;
        return Ok((initial, TrainLog { rows: vec![row] }));
    }
    Ok(train(config, suite, initial)?)
}

/// Metrics of the final policy on the records behind the last log row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub step: usize,
    pub acc: f64,
    pub entropy: f64,
    pub verbal: MetricSummary,
    pub sequence: MetricSummary,
}

pub fn final_metrics(params: &PolicyParams, suite: &TaskSuite, config: &TrainerConfig, log: &TrainLog) -> Result<(FinalMetrics, dcpo_core::trainer::EvalRecords)> {
    let last = log.last().ok_or_else(|| HarnessError::usage("empty training log"))?;
    let records = eval_records(params, suite, config, last.step)?;
    let m = FinalMetrics {
        step: last.step,
        acc: last.acc,
        entropy: last.entropy,
        verbal: summarize(&records.verbal, config.num_bins)?,
        sequence: summarize(&records.sequence, config.num_bins)?,
    };
    Ok((m, records))
}

pub(crate) fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, contents).map_err(io_err(path))
}

pub(crate) fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(LabError::from)?;
    s.push('\n');
    Ok(s)
}

pub fn run_stem(variant: &str, seed: u64) -> String {
    format!("{variant}_seed{seed}")
}

pub fn log_path(out: &Path, variant: &str, seed: u64, source: ConfidenceSource) -> PathBuf {
    out.join("logs").join(format!("{}_{}.csv", run_stem(variant, seed), source.name()))
}

/// Runs one cell and writes its artifacts. Returns the logged rows per source
/// as parsed back from the written CSVs.
fn run_cell(spec: &ExperimentSpec, variant: &Variant, seed: u64, out: &Path) -> Result<Vec<Vec<FlatRow>>> {
    let suite = spec.suite.build(seed)?;
    let init = initial_policy(&suite, &spec.init, spec.vocab_size, seed)?;
    let config = spec.variant_config(variant, seed);
    let (params, log) = run_training(&config, &suite, init)?;
    let (metrics, records) = final_metrics(&params, &suite, &config, &log)?;
    let stem = run_stem(&variant.name, seed);
    write(&out.join("metrics").join(format!("{stem}.json")), &to_json(&metrics)?)?;
    let mut rows = Vec::with_capacity(spec.sources.len());
    for &source in &spec.sources {
        let csv = log.to_csv(source);
        write(&log_path(out, &variant.name, seed, source), &csv)?;
        rows.push(parse_log_csv(&csv)?);
        let recs = match source {
            ConfidenceSource::Verbal => &records.verbal,
            ConfidenceSource::Sequence => &records.sequence,
        };
        let bins = bin_records(recs, config.num_bins)?;
        write(
            &out.join("reliability").join(format!("{stem}_{}.csv", source.name())),
            &reliability_csv(&bins)?,
        )?;
    }
    Ok(rows)
}

/// Mean, sample standard deviation and the per-seed values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub per_seed: Vec<f64>,
}

impl Stat {
    pub fn of(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = if values.is_empty() { f64::NAN } else { values.iter().sum::<f64>() / n };
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std, per_seed: values }
    }
}

/// [`Stat`] over the seeds where the value is defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptStat {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub per_seed: Vec<Option<f64>>,
}

impl OptStat {
    pub fn of(values: Vec<Option<f64>>) -> Self {
        let defined: Vec<f64> = values.iter().flatten().copied().collect();
        let s = Stat::of(defined);
        let some = !s.per_seed.is_empty();
        Self {
            mean: some.then_some(s.mean),
            std: some.then_some(s.std),
            per_seed: values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Endpoint {
    pub step: usize,
    pub acc: Stat,
    pub conf_mean: Stat,
    pub ece: Stat,
    pub pce: Stat,
    pub auroc: OptStat,
    pub entropy: Stat,
}

impl Endpoint {
    fn of(rows: &[&FlatRow]) -> Self {
        let col = |f: fn(&FlatRow) -> f64| Stat::of(rows.iter().map(|r| f(r)).collect());
        Self {
            step: rows.first().map_or(0, |r| r.step),
            acc: col(|r| r.acc),
            conf_mean: col(|r| r.conf_mean),
            ece: col(|r| r.ece),
            pce: col(|r| r.pce),
            auroc: OptStat::of(rows.iter().map(|r| r.auroc).collect()),
            entropy: col(|r| r.entropy),
        }
    }
}

/// Seed-averaged trajectories over the logged steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub step: Vec<usize>,
    pub acc: Vec<f64>,
    pub conf_mean: Vec<f64>,
    pub ece: Vec<f64>,
    pub pce: Vec<f64>,
    pub grad_norm: Vec<f64>,
}

impl Series {
    fn of(runs: &[&[FlatRow]]) -> Self {
        let len = runs.iter().map(|r| r.len()).min().unwrap_or(0);
        let n = runs.len() as f64;
        let avg = |i: usize, f: fn(&FlatRow) -> f64| runs.iter().map(|r| f(&r[i])).sum::<f64>() / n;
        Self {
            step: (0..len).map(|i| runs[0][i].step).collect(),
            acc: (0..len).map(|i| avg(i, |r| r.acc)).collect(),
            conf_mean: (0..len).map(|i| avg(i, |r| r.conf_mean)).collect(),
            ece: (0..len).map(|i| avg(i, |r| r.ece)).collect(),
            pce: (0..len).map(|i| avg(i, |r| r.pce)).collect(),
            grad_norm: (0..len).map(|i| avg(i, |r| r.grad_norm)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSummary {
    pub initial: Endpoint,
    #[serde(rename = "final")]
    pub last: Endpoint,
    pub series: Series,
}

impl SourceSummary {
    /// Aggregates one source over the per-seed log rows.
    pub fn from_runs(runs: &[&[FlatRow]]) -> Result<Self> {
        if runs.is_empty() || runs.iter().any(|r| r.is_empty()) {
            return Err(HarnessError::usage("cannot summarize empty logs"));
        }
        Ok(Self {
            initial: Endpoint::of(&runs.iter().map(|r| &r[0]).collect::<Vec<_>>()),
            last: Endpoint::of(&runs.iter().map(|r| r.last().unwrap()).collect::<Vec<_>>()),
            series: Series::of(runs),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub name: String,
    pub algorithm: Algorithm,
    pub lambda: f64,
    /// Seeds that completed, in order.
    pub seeds: Vec<u64>,
    pub failures: Vec<CellFailure>,
    /// Keyed by source name; absent when every seed failed.
    pub sources: BTreeMap<String, SourceSummary>,
}

impl VariantSummary {
    pub fn source(&self, source: ConfidenceSource) -> Result<&SourceSummary> {
        self.sources
            .get(source.name())
            .ok_or_else(|| HarnessError::usage(format!("variant {} has no {} summary", self.name, source.name())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub name: String,
    pub seeds: Vec<u64>,
    pub variants: Vec<VariantSummary>,
    /// One table per source; empty without a complete, paired grpo baseline.
    pub comparisons: Vec<TradeoffTable>,
}

impl Summary {
    pub fn variant(&self, name: &str) -> Result<&VariantSummary> {
        self.variants
            .iter()
            .find(|v| v.name == name)
            .ok_or_else(|| HarnessError::usage(format!("no variant named {name}")))
    }

    pub fn comparison(&self, source: ConfidenceSource) -> Option<&TradeoffTable> {
        self.comparisons.iter().find(|t| t.source == source)
    }
}

/// Runs every cell, writes all artifacts under `out` and returns the summary.
/// Divergent runs are listed under their variant's `failures`.
pub fn run_experiment(spec: &ExperimentSpec, out: &Path) -> Result<Summary> {
    spec.validate()?;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    write(&out.join("spec.json"), &to_json(spec)?)?;

    let seeds = spec.seeds();
    let cells: Vec<(usize, u64)> = (0..spec.variants.len())
        .flat_map(|v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    let results: Vec<Result<Vec<Vec<FlatRow>>>> = cells
        .par_iter()
        .map(|&(v, s)| run_cell(spec, &spec.variants[v], s, out))
        .collect();

    // per variant: completed seeds, failures, rows[seed][source]
    type Collected = (Vec<u64>, Vec<CellFailure>, Vec<Vec<Vec<FlatRow>>>);
    let mut per_variant: Vec<Collected> = spec.variants.iter().map(|_| Default::default()).collect();
    for (&(v, seed), result) in cells.iter().zip(results) {
        let entry = &mut per_variant[v];
        match result {
            Ok(rows) => {
                entry.0.push(seed);
                entry.2.push(rows);
            }
            Err(e @ HarnessError::Lab(LabError::Divergence { .. } | LabError::Numeric(_))) => {
                entry.1.push(CellFailure { seed, error: e.to_string() })
            }
            Err(e) => return Err(e),
        }
    }

    let mut variants = Vec::with_capacity(spec.variants.len());
    for (variant, (ok_seeds, failures, runs)) in spec.variants.iter().zip(per_variant) {
        let mut sources = BTreeMap::new();
        if !runs.is_empty() {
            for (k, &source) in spec.sources.iter().enumerate() {
                let by_seed: Vec<&[FlatRow]> = runs.iter().map(|r| r[k].as_slice()).collect();
                sources.insert(source.name().to_string(), SourceSummary::from_runs(&by_seed)?);
            }
        }
        variants.push(VariantSummary {
            name: variant.name.clone(),
            algorithm: variant.algorithm,
            lambda: variant.lambda.unwrap_or(spec.trainer.lambda),
            seeds: ok_seeds,
            failures,
            sources,
        });
    }

    let comparisons = if variants.len() >= 2 {
        spec.sources
            .iter()
            .filter_map(|&s| compare_variants(&variants, s).ok())
            .collect()
    } else {
        Vec::new()
    };
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        name: spec.name.clone(),
        seeds,
        variants,
        comparisons,
    };
    write(&out.join("summary.json"), &to_json(&summary)?)?;
    Ok(summary)
}

/// Paired differences `variant - baseline` over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub mean: f64,
    pub per_seed: Vec<f64>,
}

impl Delta {
    fn of(a: &Stat, base: &Stat) -> Self {
        let per_seed: Vec<f64> = a.per_seed.iter().zip(&base.per_seed).map(|(x, y)| x - y).collect();
        Self {
            mean: per_seed.iter().sum::<f64>() / per_seed.len() as f64,
            per_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub variant: String,
    pub acc: Delta,
    pub ece: Delta,
    pub pce: Delta,
    pub conf_mean: Delta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffTable {
    pub source: ConfidenceSource,
    pub baseline: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<TradeoffRow>,
}

impl TradeoffTable {
    pub fn row(&self, variant: &str) -> Option<&TradeoffRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }
}

/// Final-step deltas of every variant against the first grpo variant.
pub fn compare_variants(summaries: &[VariantSummary], source: ConfidenceSource) -> Result<TradeoffTable> {
    if summaries.len() < 2 {
        return Err(HarnessError::usage("comparison needs at least two variants"));
    }
    let base = summaries
        .iter()
        .find(|v| v.algorithm == Algorithm::Grpo)
        .ok_or_else(|| HarnessError::usage("comparison needs a grpo baseline"))?;
    let b = base.source(source)?;
    let mut rows = Vec::with_capacity(summaries.len());
    for v in summaries {
        if v.seeds != base.seeds {
            return Err(HarnessError::usage(format!(
                "variant {} is not paired with {}: seeds {:?} vs {:?}",
                v.name, base.name, v.seeds, base.seeds
            )));
        }
        let s = v.source(source)?;
        rows.push(TradeoffRow {
            variant: v.name.clone(),
            acc: Delta::of(&s.last.acc, &b.last.acc),
            ece: Delta::of(&s.last.ece, &b.last.ece),
            pce: Delta::of(&s.last.pce, &b.last.pce),
            conf_mean: Delta::of(&s.last.conf_mean, &b.last.conf_mean),
        });
    }
    Ok(TradeoffTable {
        source,
        baseline: base.name.clone(),
        seeds: base.seeds.clone(),
        rows,
    })
}
