//! The `dost` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 invalid data or rules, 3 runtime failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Deserialize;

use crate::data::{self, NoiseMode};
use crate::dost;
use crate::error::Error;
use crate::json;
use crate::metrics;
use crate::model::{Checkpoint, CorrectionMode, TrainConfig};
use crate::rules::{parse_rules, LabelVocabulary, RuleSet};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "dost",
    version,
    about = "Rule-obedient multi-label training with label self-correction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a rule-consistent synthetic dataset.
    Synth {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        dims: usize,
        #[arg(long)]
        patterns: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated label vocabulary; defaults to the labels the rules mention.
        #[arg(long, value_delimiter = ',')]
        labels: Option<Vec<String>>,
    },
    /// Inject label noise into a dataset.
    Noise {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rho: f64,
        #[arg(long, value_parser = parse_noise_mode)]
        mode: NoiseMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Rule file; required for `--mode violating`.
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// Report rule violations in a dataset's labels.
    Audit {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Train a classifier.
    Train(TrainArgs),
    /// Evaluate a trained model.
    Eval {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long = "out-report")]
        out_report: Option<PathBuf>,
    },
}

#[derive(Debug, clap::Args)]
struct TrainArgs {
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// JSON experiment configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_correction_mode)]
    mode: Option<CorrectionMode>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long = "out-model")]
    out_model: Option<PathBuf>,
    #[arg(long = "out-history")]
    out_history: Option<PathBuf>,
    #[arg(long = "out-report")]
    out_report: Option<PathBuf>,
}

fn parse_noise_mode(s: &str) -> Result<NoiseMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_correction_mode(s: &str) -> Result<CorrectionMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Experiment file: training hyperparameters, file paths and the evaluation threshold.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lambda: Option<f64>,
    pub warmup_epochs: Option<usize>,
    pub tau: Option<f64>,
    pub hidden_units: Option<usize>,
    pub seed: Option<u64>,
    pub correction_mode: Option<CorrectionMode>,
    pub rules: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub out_model: Option<PathBuf>,
    pub out_history: Option<PathBuf>,
    pub out_report: Option<PathBuf>,
    pub threshold: Option<f64>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Lib(Error::InvalidConfig(_)) => EXIT_USAGE,
            CliError::Lib(Error::Io { .. }) => EXIT_RUNTIME,
            CliError::Lib(e) if e.is_validation() => EXIT_INVALID,
            CliError::Lib(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Lib(e) => e.fmt(f),
        }
    }
}

/// Runs the CLI on `argv` (including the program name) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn read_rules(path: &Path, vocab: Option<&LabelVocabulary>) -> Result<RuleSet, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    parse_rules(&text, vocab).map_err(|e| {
        CliError::Lib(match e {
            Error::Syntax {
                line,
                column,
                message,
            } => Error::Syntax {
                line,
                column,
                message: format!("{message} (in {})", path.display()),
            },
            other => other,
        })
    })
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth {
            rules,
            out,
            n,
            dims,
            patterns,
            seed,
            labels,
        } => {
            let vocab = labels.map(LabelVocabulary::new).transpose()?;
            let rs = read_rules(&rules, vocab.as_ref())?;
            let ds = data::synthesize(seed, n, dims, &rs, patterns)?;
            data::save_dataset(&ds, &out)?;
        }
        Command::Noise {
            input,
            out,
            rho,
            mode,
            seed,
            rules,
        } => {
            let ds = data::load_dataset(&input)?;
            let rs = match (&rules, mode) {
                (Some(path), _) => read_rules(path, Some(&ds.labels))?,
                (None, NoiseMode::Uniform) => RuleSet::empty(ds.labels.clone()),
                (None, NoiseMode::Violating) => {
                    return Err(CliError::Usage("--mode violating requires --rules".into()))
                }
            };
            let noisy = data::inject_noise(&ds, rho, seed, mode, &rs)?;
            data::save_dataset(&noisy, &out)?;
        }
        Command::Audit { rules, data, json } => {
            let ds = data::load_dataset(&data)?;
            let rs = read_rules(&rules, Some(&ds.labels))?;
            let report = data::audit(&ds, &rs)?;
            if json {
                println!("{}", json::to_string(&report)?);
            } else {
                print!("{}", report.to_text());
            }
        }
        Command::Train(args) => train(args)?,
        Command::Eval {
            rules,
            data,
            model,
            threshold,
            out_report,
        } => {
            let ds = data::load_dataset(&data)?;
            let rs = read_rules(&rules, Some(&ds.labels))?;
            let checkpoint: Checkpoint = json::read_file(&model)?;
            let params = checkpoint.params()?;
            let report = dost::evaluate(&params, &ds, &rs, threshold)?;
            emit(&report, out_report.as_deref())?;
        }
    }
    Ok(())
}

fn emit<T: serde::Serialize>(value: &T, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => json::write_file(p, value)?,
        None => println!("{}", json::to_string(value)?),
    }
    Ok(())
}

fn train(args: TrainArgs) -> Result<(), CliError> {
    let file: ExperimentConfig = match &args.config {
        Some(path) => json::read_file(path)?,
        None => ExperimentConfig::default(),
    };
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        learning_rate: args.lr.or(file.learning_rate).unwrap_or(d.learning_rate),
        epochs: args.epochs.or(file.epochs).unwrap_or(d.epochs),
        batch_size: args.batch.or(file.batch_size).unwrap_or(d.batch_size),
        lambda: args.lambda.or(file.lambda).unwrap_or(d.lambda),
        warmup_epochs: args
            .warmup
            .or(file.warmup_epochs)
            .unwrap_or(d.warmup_epochs),
        tau: args.tau.or(file.tau).unwrap_or(d.tau),
        hidden_units: args.hidden.or(file.hidden_units).unwrap_or(d.hidden_units),
        seed: args.seed.or(file.seed).unwrap_or(d.seed),
        correction_mode: args
            .mode
            .or(file.correction_mode)
            .unwrap_or(d.correction_mode),
    };
    cfg.validate()?;
    let threshold = args.threshold.or(file.threshold).unwrap_or(0.5);
    let rules = args
        .rules
        .or(file.rules)
        .ok_or_else(|| CliError::Usage("train needs --rules (or `rules` in the config)".into()))?;
    let data_path = args
        .data
        .or(file.data)
        .ok_or_else(|| CliError::Usage("train needs --data (or `data` in the config)".into()))?;
    let out_model = args.out_model.or(file.out_model);
    let out_history = args.out_history.or(file.out_history);
    let out_report = args.out_report.or(file.out_report);

    let ds = data::load_dataset(&data_path)?;
    let rs = read_rules(&rules, Some(&ds.labels))?;
    let outcome = dost::train(&ds, &rs, &cfg)?;
    let mut report = dost::evaluate(&outcome.params, &ds, &rs, threshold)?;
    if ds.flips.is_some() {
        report.correction = Some(metrics::correction_report(&outcome.state, &ds)?);
    }
    if let Some(path) = &out_model {
        json::write_file(path, &Checkpoint::new(&outcome.params, &cfg))?;
    }
    if let Some(path) = &out_history {
        outcome.history.write_jsonl(path)?;
    }
    emit(&report, out_report.as_deref())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_flag_is_usage_error() {
        assert_eq!(run(["dost", "audit", "--bogus"]), EXIT_USAGE);
        assert_eq!(run(["dost"]), EXIT_USAGE);
        assert_eq!(run(["dost", "--help"]), EXIT_OK);
    }

    #[test]
    fn missing_input_is_runtime_failure() {
        let code = run([
            "dost",
            "audit",
            "--rules",
            "/nonexistent/rules.txt",
            "--data",
            "/nonexistent/data.jsonl",
        ]);
        assert_eq!(code, EXIT_RUNTIME);
    }

    #[test]
    fn experiment_config_rejects_unknown_keys() {
        let bad: Result<ExperimentConfig, _> = serde_json::from_str(r#"{"epochs": 3, "lamda": 1}"#);
        assert!(bad.is_err());
        let ok: ExperimentConfig =
            serde_json::from_str(r#"{"epochs": 3, "correction_mode": "mask_only"}"#).unwrap();
        assert_eq!(ok.correction_mode, Some(CorrectionMode::MaskOnly));
    }
}
