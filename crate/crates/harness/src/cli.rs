//! `dcpo-lab` subcommands.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use dcpo_core::calibration::{bin_records, summarize};
use dcpo_core::trainer::ConfidenceSource;

use crate::certify::{all_pass, run_certificates};
use crate::config::{initial_policy, seed_override, ExperimentSpec, TrainFile};
use crate::error::{io_err, HarnessError, Result};
use crate::experiment::{final_metrics, run_experiment, run_training, to_json, write};
use crate::presets::{preset, THEORY_PRESET};
use crate::records::{read_records_file, reliability_csv};

#[derive(Debug, Parser)]
#[command(name = "dcpo-lab", version, about = "Tabular RLVR calibration laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one policy from a JSON config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the theory certificate suite.
    Theory {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Calibration metrics of a `confidence,correct` CSV.
    Metrics {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 10)]
        bins: usize,
    },
    /// Reliability bins of a `confidence,correct` CSV.
    Reliability {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 10)]
        bins: usize,
    },
    /// Run a preset or a spec file.
    Experiment {
        #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
        preset: Option<String>,
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

fn emit(stdout: &mut dyn Write, text: &str) -> Result<()> {
    stdout.write_all(text.as_bytes()).map_err(io_err("<stdout>"))
}

fn cmd_train(config: &Path, out: &Path, stdout: &mut dyn Write) -> Result<()> {
    let mut file = TrainFile::from_json(&read(config)?)?;
    if let Some(seed) = seed_override()? {
        file.trainer.seed = seed;
    }
    let seed = file.trainer.seed;
    let suite = file.suite.build(seed)?;
    let init = initial_policy(&suite, &file.init, file.vocab_size, seed)?;
    let (params, log) = run_training(&file.trainer, &suite, init)?;
    let (metrics, records) = final_metrics(&params, &suite, &file.trainer, &log)?;
    write(&out.join("config.json"), &to_json(&file)?)?;
    write(&out.join("suite.json"), &(suite.to_json()? + "\n"))?;
    write(&out.join("policy.json"), &(params.to_json()? + "\n"))?;
    write(&out.join("metrics.json"), &to_json(&metrics)?)?;
    for source in [ConfidenceSource::Verbal, ConfidenceSource::Sequence] {
        write(&out.join(format!("log_{}.csv", source.name())), &log.to_csv(source))?;
        let recs = match source {
            ConfidenceSource::Verbal => &records.verbal,
            ConfidenceSource::Sequence => &records.sequence,
        };
        write(
            &out.join(format!("reliability_{}.csv", source.name())),
            &reliability_csv(&bin_records(recs, file.trainer.num_bins)?)?,
        )?;
    }
    emit(stdout, &to_json(&metrics)?)
}

fn cmd_theory(out: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    let report = run_certificates()?;
    let text = to_json(&report)?;
    if let Some(dir) = out {
        write(&dir.join("theory_report.json"), &text)?;
    }
    emit(stdout, &text)?;
    if !all_pass(&report) {
        let failed: Vec<&str> = report.iter().filter(|(_, c)| !c.pass).map(|(k, _)| k.as_str()).collect();
        return Err(HarnessError::CheckFailed(failed.join(", ")));
    }
    Ok(())
}

fn cmd_experiment(preset_name: Option<&str>, spec_path: Option<&Path>, out: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    if preset_name == Some(THEORY_PRESET) {
        return cmd_theory(out, stdout);
    }
    let mut spec = match (preset_name, spec_path) {
        (Some(name), _) => preset(name)?,
        (None, Some(path)) => ExperimentSpec::from_json(&read(path)?)?,
        (None, None) => return Err(HarnessError::usage("--preset or --spec is required")),
    };
    if let Some(seed) = seed_override()? {
        spec.base_seed = seed;
    }
    let out = out
        .map(Path::to_path_buf)
        .or_else(|| spec.output_dir.clone())
        .ok_or_else(|| HarnessError::usage("--out is required when the spec has no output_dir"))?;
    let summary = run_experiment(&spec, &out)?;
    let mut lines = String::new();
    for v in &summary.variants {
        for (src, s) in &v.sources {
            lines += &format!(
                "{} [{}] acc {:.4} +- {:.4}  ece {:.4}  pce {:.4}  failures {}\n",
                v.name,
                src,
                s.last.acc.mean,
                s.last.acc.std,
                s.last.ece.mean,
                s.last.pce.mean,
                v.failures.len()
            );
        }
    }
    lines += &format!("wrote {}\n", out.join("summary.json").display());
    emit(stdout, &lines)
}

pub fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Train { config, out } => cmd_train(&config, &out, stdout),
        Command::Theory { out } => cmd_theory(out.as_deref(), stdout),
        Command::Metrics { input, bins } => {
            let summary = summarize(&read_records_file(&input)?, bins)?;
            emit(stdout, &to_json(&summary)?)
        }
        Command::Reliability { input, bins } => {
            let bins = bin_records(&read_records_file(&input)?, bins)?;
            emit(stdout, &reliability_csv(&bins)?)
        }
        Command::Experiment { preset, spec, out } => cmd_experiment(preset.as_deref(), spec.as_deref(), out.as_deref(), stdout),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = write!(stderr, "{}", e.render());
            if code == 0 {
                let _ = write!(stdout, "{}", e.render());
            }
            return code;
        }
    };
    match execute(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "dcpo-lab: {e}");
            e.exit_code()
        }
    }
}
