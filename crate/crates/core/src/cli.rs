//! Command-line interface.
//!
//! Exit codes: 0 on success, 1 for runtime or fit failures, 2 for usage errors.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bench::{parse_methods, run_bench, BenchConfig};
use crate::calibrators::{Calibrator, CalibratorKind};
use crate::dataset::LogitDataset;
use crate::error::Error;
use crate::format::format_real;
use crate::metrics::{reliability_table, DEFAULT_BINS};
use crate::report::{summarize, summarize_ood};
use crate::synthetic::{generate, ShiftKind, ShiftScenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "energy-calib",
    version,
    about = "Post-hoc calibration of classifier logits"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic logit dataset
    #[command(name = "gen-synthetic", alias = "gen")]
    Gen(GenArgs),
    /// Fit a calibrator and write its parameter file
    Fit(FitArgs),
    /// Apply a fitted calibrator to a dataset
    Apply(ApplyArgs),
    /// Compute calibration and OOD metrics
    Eval(EvalArgs),
    /// Run the synthetic severity benchmark
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 5000)]
    pub n: usize,
    #[arg(long, default_value_t = 4.0)]
    pub margin: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 3.0)]
    pub overconfidence: f64,
    #[arg(long, default_value_t = 0)]
    pub severity: u32,
    #[arg(long, default_value = "id", value_parser = parse_kind)]
    pub kind: ShiftKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, value_parser = parse_method)]
    pub method: CalibratorKind,
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long)]
    pub ood: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ApplyArgs {
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub ood: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BINS as u64, value_parser = clap::value_parser!(u64).range(1..))]
    pub bins: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub reliability: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 5000)]
    pub n: usize,
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,
    #[arg(long, default_value = "none,ts,energy")]
    pub methods: String,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_kind(s: &str) -> Result<ShiftKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_method(s: &str) -> Result<CalibratorKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// An error carrying the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl ToString) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.to_string(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self {
            code: EXIT_FAILURE,
            message: e.to_string(),
        }
    }
}

type CliResult = Result<(), CliError>;

fn write_file(path: &Path, contents: &str) -> CliResult {
    fs::write(path, contents).map_err(|e| Error::io(path, e).into())
}

pub fn cmd_gen(args: &GenArgs) -> CliResult {
    let scenario = ShiftScenario {
        k: args.k,
        n: args.n,
        margin: args.margin,
        noise: args.noise,
        overconfidence: args.overconfidence,
        severity: args.severity,
        kind: args.kind,
        seed: args.seed,
    };
    scenario.validate().map_err(CliError::usage)?;
    generate(&scenario)?.save_csv(&args.out)?;
    Ok(())
}

pub fn cmd_fit(args: &FitArgs) -> CliResult {
    if args.method == CalibratorKind::Energy && args.ood.is_none() {
        return Err(CliError::usage("--method energy requires --ood"));
    }
    let val = LogitDataset::load_csv(&args.val)?;
    let ood = args.ood.as_ref().map(LogitDataset::load_csv).transpose()?;
    Calibrator::fit(args.method, &val, ood.as_ref())?.save(&args.out)?;
    Ok(())
}

pub fn cmd_apply(args: &ApplyArgs) -> CliResult {
    let calibrator = Calibrator::load(&args.params)?;
    let data = LogitDataset::load_csv(&args.data)?;
    let preds = calibrator.apply(&data)?;
    let mut out = String::from("row,pred_label,confidence");
    for j in 0..data.k() {
        let _ = write!(out, ",p{j}");
    }
    out.push('\n');
    for (i, p) in preds.iter().enumerate() {
        let _ = write!(
            out,
            "{i},{},{}",
            p.predicted_label,
            format_real(p.confidence)
        );
        for &v in &p.probabilities {
            out.push(',');
            out.push_str(&format_real(v));
        }
        out.push('\n');
    }
    write_file(&args.out, &out)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn cmd_eval(args: &EvalArgs) -> CliResult {
    let calibrator = Calibrator::load(&args.params)?;
    let data = LogitDataset::load_csv(&args.data)?;
    let preds = calibrator.apply(&data)?;
    let summary = summarize(&preds, &data, args.bins as usize)?;
    let kind = calibrator.kind();

    let mut out = String::from(
        "dataset,calibrator,n,accuracy,mean_confidence,ece,mce,sce,auroc,aupr_in,aupr_out\n",
    );
    let _ = writeln!(
        out,
        "id,{kind},{},{},{},{},{},{},,,",
        summary.n, summary.accuracy, summary.mean_confidence, summary.ece, summary.mce, summary.sce
    );
    if let Some(path) = &args.ood {
        let ood = LogitDataset::load_csv(path)?;
        let ood_preds = calibrator.apply(&ood)?;
        let s = summarize_ood(&preds, &ood_preds)?;
        let _ = writeln!(
            out,
            "ood,{kind},{},,{},,,,{},{},{}",
            s.n_out, s.mean_out_confidence, s.auroc, s.aupr_in, s.aupr_out
        );
    }
    write_file(&args.out, &out)?;

    if let Some(path) = &args.reliability {
        let mut rel = String::from("bin,lower,upper,count,confidence,accuracy\n");
        for row in reliability_table(&summary.bins) {
            let _ = writeln!(
                rel,
                "{},{},{},{},{},{}",
                row.bin,
                row.lower,
                row.upper,
                row.count,
                opt(row.confidence),
                opt(row.accuracy)
            );
        }
        write_file(path, &rel)?;
    }
    Ok(())
}

pub fn cmd_bench(args: &BenchArgs) -> CliResult {
    let methods = parse_methods(&args.methods).map_err(CliError::usage)?;
    let cfg = BenchConfig::new(args.k, args.n, args.seeds, methods);
    cfg.scenario.validate().map_err(CliError::usage)?;
    if args.seeds == 0 {
        return Err(CliError::usage("--seeds must be at least 1"));
    }
    let report = run_bench(&cfg)?;
    write_file(&args.out, &report.to_csv_string())
}

pub fn execute(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Apply(a) => cmd_apply(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
