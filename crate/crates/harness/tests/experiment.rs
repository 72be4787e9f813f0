use std::path::Path;

use dcpo_core::policy::InitSpec;
use dcpo_core::taskenv::{DifficultyLevel, PhiMode};
use dcpo_core::trainer::{Algorithm, ConfidenceSource, TrainerConfig};
use dcpo_lab::config::{ExperimentSpec, SuiteConfig, Variant, SCHEMA_VERSION};
use dcpo_lab::experiment::{compare_variants, log_path, run_experiment, Summary};

fn small_spec(variants: &[Algorithm], repeats: usize) -> ExperimentSpec {
    ExperimentSpec {
        schema_version: SCHEMA_VERSION,
        name: "small".into(),
        suite: SuiteConfig {
            num_tasks: 3,
            n_trajectories: 6,
            difficulty: vec![DifficultyLevel::new(0.34, 0.5), DifficultyLevel::new(0.5, 0.5)],
            phi_mode: PhiMode::Correlated,
            allow_degenerate: false,
            seed: None,
        },
        init: InitSpec {
            reasoning_scale: 0.5,
            conf_center: Some(0.8),
            conf_width: 0.2,
        },
        vocab_size: 11,
        trainer: TrainerConfig {
            steps: 15,
            log_every: 4,
            eval_samples: 32,
            ..Default::default()
        },
        variants: variants.iter().map(|&a| Variant::of(a)).collect(),
        base_seed: 5,
        repeats,
        sources: vec![ConfidenceSource::Verbal, ConfidenceSource::Sequence],
        output_dir: None,
    }
}

fn files(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    for sub in ["logs", "metrics", "reliability"] {
        for e in std::fs::read_dir(dir.join(sub)).unwrap() {
            out.push(format!("{sub}/{}", e.unwrap().file_name().to_string_lossy()));
        }
    }
    out.sort();
    out
}

#[test]
fn single_cell_writes_one_log_and_one_summary() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small_spec(&[Algorithm::Grpo], 1);
    spec.sources = vec![ConfidenceSource::Verbal];
    let summary = run_experiment(&spec, dir.path()).unwrap();
    assert_eq!(files(dir.path()), ["logs/grpo_seed5_verbal.csv", "metrics/grpo_seed5.json", "reliability/grpo_seed5_verbal.csv"]);
    assert!(dir.path().join("summary.json").is_file());
    assert_eq!(summary.variants.len(), 1);
    assert!(summary.comparisons.is_empty());
}

#[test]
fn identical_specs_give_identical_outputs() {
    let spec = small_spec(&[Algorithm::Grpo, Algorithm::Dcpo], 2);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_experiment(&spec, a.path()).unwrap();
    run_experiment(&spec, b.path()).unwrap();
    let names = files(a.path());
    assert_eq!(names, files(b.path()));
    for n in names.iter().map(String::as_str).chain(["summary.json", "spec.json"]) {
        assert_eq!(std::fs::read(a.path().join(n)).unwrap(), std::fs::read(b.path().join(n)).unwrap(), "{n}");
    }
}

/// Rebuilds the final means from the CSV files with a plain reader.
#[test]
fn summary_matches_recomputation_from_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(&[Algorithm::Grpo, Algorithm::Coupled, Algorithm::Dcpo], 3);
    let summary = run_experiment(&spec, dir.path()).unwrap();
    let on_disk: Summary = serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(on_disk, summary);
    for v in &summary.variants {
        for source in [ConfidenceSource::Verbal, ConfidenceSource::Sequence] {
            let s = v.source(source).unwrap();
            let mut finals = Vec::new();
            let mut firsts = Vec::new();
            for &seed in &summary.seeds {
                let mut rdr = csv::Reader::from_path(log_path(dir.path(), &v.name, seed, source)).unwrap();
                assert_eq!(
                    rdr.headers().unwrap().iter().collect::<Vec<_>>(),
                    ["step", "acc", "conf_mean", "conf_var", "ece", "pce", "auroc", "entropy", "grad_norm"]
                );
                let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
                let num = |r: &csv::StringRecord, i: usize| r[i].parse::<f64>().unwrap();
                firsts.push(num(&rows[0], 2));
                let last = rows.last().unwrap();
                assert_eq!(&last[0], "15");
                finals.push((num(last, 1), num(last, 4), num(last, 5)));
            }
            let mean = |f: fn(&(f64, f64, f64)) -> f64| finals.iter().map(f).sum::<f64>() / finals.len() as f64;
            assert_eq!(s.last.acc.mean, mean(|t| t.0));
            assert_eq!(s.last.ece.mean, mean(|t| t.1));
            assert_eq!(s.last.pce.mean, mean(|t| t.2));
            assert_eq!(s.last.acc.per_seed, finals.iter().map(|t| t.0).collect::<Vec<_>>());
            assert_eq!(s.initial.conf_mean.per_seed, firsts);
            assert_eq!(s.series.step, vec![0, 4, 8, 12, 15]);
        }
    }
}

#[test]
fn comparison_against_self_is_zero_and_requires_pairing() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(&[Algorithm::Grpo, Algorithm::Dcpo], 2);
    let summary = run_experiment(&spec, dir.path()).unwrap();
    let table = summary.comparison(ConfidenceSource::Verbal).unwrap();
    let g = table.row("grpo").unwrap();
    assert!(g.acc.per_seed.iter().chain(&g.pce.per_seed).chain(&g.ece.per_seed).all(|&d| d == 0.0));
    // identical reasoning streams: dcpo's accuracy is exactly grpo's
    assert!(table.row("dcpo").unwrap().acc.per_seed.iter().all(|&d| d == 0.0));

    let twin = vec![summary.variants[0].clone(), summary.variants[0].clone()];
    let t = compare_variants(&twin, ConfidenceSource::Sequence).unwrap();
    assert!(t.rows.iter().all(|r| r.pce.mean == 0.0 && r.acc.mean == 0.0));

    let mut unpaired = summary.variants.clone();
    unpaired[1].seeds.reverse();
    assert!(compare_variants(&unpaired, ConfidenceSource::Verbal).is_err());
    assert!(compare_variants(&summary.variants[..1], ConfidenceSource::Verbal).is_err());
    let mut no_base = summary.variants.clone();
    no_base[0].algorithm = Algorithm::Coupled;
    assert!(compare_variants(&no_base, ConfidenceSource::Verbal).is_err());
}

#[test]
fn divergent_cells_are_recorded_and_summary_survives() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small_spec(&[Algorithm::Grpo], 2);
    // Gaussian draws at this scale overflow to infinity
    spec.init.reasoning_scale = 1e308;
    spec.suite.num_tasks = 8;
    spec.suite.n_trajectories = 20;
    let summary = run_experiment(&spec, dir.path()).unwrap();
    let v = &summary.variants[0];
    assert_eq!(v.failures.len(), 2);
    assert!(v.seeds.is_empty() && v.sources.is_empty());
    assert!(dir.path().join("summary.json").is_file());
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let err = run_experiment(&small_spec(&[Algorithm::Grpo], 1), &blocker.join("out")).unwrap_err();
    assert!(matches!(err, dcpo_lab::HarnessError::Io { .. }), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn zero_step_runs_log_the_initial_policy() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small_spec(&[Algorithm::Grpo], 1);
    spec.trainer.steps = 0;
    let summary = run_experiment(&spec, dir.path()).unwrap();
    let s = summary.variants[0].source(ConfidenceSource::Verbal).unwrap();
    assert_eq!(s.series.step, vec![0]);
    assert_eq!(s.initial, s.last);
}
