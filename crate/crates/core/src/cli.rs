//! Command-line driver.
//!
//! Every subcommand accepts `--config FILE`, a TOML table whose keys are
//! the long flag names (`test-size = 800`). Values given on the command
//! line take precedence over the file. Input matrices are read as CSV when
//! the path ends in `.csv` and as the binary format otherwise.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 I/O error. Errors
//! are reported on stderr as a single JSON object.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{NpssError, Result};
use crate::evaluate::{compute_metrics, node_intersection, run_experiment, ExperimentConfig, TrialMetrics};
use crate::fgss::{scan, ScanConfig, ScanReport, SCHEMA_VERSION};
use crate::matrix_io::{load_labels, load_matrix, ActivationMatrix, MatrixFormat};
use crate::pvalues::{empirical_pvalues, load_pvalues, save_pvalues, Tail};
use crate::scoring::{ScoreConfig, Statistic};
use crate::strategies::{run_strategy, Method, StrategyReport, StrategySpec};

#[derive(Debug, Parser)]
#[command(
    name = "npss",
    version,
    about = "Subset scanning for anomalous patterns in activation matrices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute empirical p-values of a test matrix against a reference matrix.
    Pvalues(Flags),
    /// Scan a p-value matrix for its most anomalous row x column subset.
    Scan(Flags),
    /// Run a detection strategy on a test matrix.
    Run(Flags),
    /// Score a strategy result against ground-truth labels.
    Evaluate(Flags),
    /// Repeated-trial experiment with sampled test sets.
    Experiment(Flags),
}

/// Union of all flags; each subcommand checks the ones it needs.
#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct Flags {
    /// TOML file with default values for any flag.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    clean: Option<PathBuf>,
    #[arg(long)]
    anomalous: Option<PathBuf>,
    #[arg(long)]
    pvalues: Option<PathBuf>,
    #[arg(long)]
    result: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// left, right or two
    #[arg(long)]
    tail: Option<String>,
    /// hc or bj [default: hc]
    #[arg(long)]
    statistic: Option<String>,
    /// scanL, scanR, scanLR or scan2
    #[arg(long)]
    method: Option<String>,
    /// Top-k iterations for scan2 [default: 3]
    #[arg(long)]
    k: Option<usize>,
    /// Random restarts per scan [default: 20]
    #[arg(long)]
    restarts: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Safety cap on row/column alternations [default: 100]
    #[arg(long)]
    max_alternations: Option<usize>,
    /// [default: 10]
    #[arg(long)]
    trials: Option<usize>,
    /// [default: 800]
    #[arg(long)]
    test_size: Option<usize>,
    /// [default: 0.1]
    #[arg(long)]
    anom_frac: Option<f64>,
    /// Fail when scan2 exhausts the test set before k iterations.
    #[arg(long)]
    #[serde(default)]
    strict: bool,
    /// Disable the one-sided gate of the scan statistic.
    #[arg(long)]
    #[serde(default)]
    no_gate: bool,
}

impl Flags {
    fn merged(self) -> Result<Self> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = fs::read_to_string(&path).map_err(|e| NpssError::io(&path, e))?;
        let file: Flags =
            toml::from_str(&text).map_err(|e| NpssError::InvalidArgument(format!("config {}: {e}", path.display())))?;
        Ok(Flags {
            config: self.config,
            reference: self.reference.or(file.reference),
            test: self.test.or(file.test),
            clean: self.clean.or(file.clean),
            anomalous: self.anomalous.or(file.anomalous),
            pvalues: self.pvalues.or(file.pvalues),
            result: self.result.or(file.result),
            labels: self.labels.or(file.labels),
            out: self.out.or(file.out),
            tail: self.tail.or(file.tail),
            statistic: self.statistic.or(file.statistic),
            method: self.method.or(file.method),
            k: self.k.or(file.k),
            restarts: self.restarts.or(file.restarts),
            seed: self.seed.or(file.seed),
            max_alternations: self.max_alternations.or(file.max_alternations),
            trials: self.trials.or(file.trials),
            test_size: self.test_size.or(file.test_size),
            anom_frac: self.anom_frac.or(file.anom_frac),
            strict: self.strict || file.strict,
            no_gate: self.no_gate || file.no_gate,
        })
    }

    fn scan_config(&self) -> Result<ScanConfig> {
        let statistic: Statistic = self.statistic.as_deref().unwrap_or("hc").parse()?;
        let defaults = ScanConfig::default();
        let cfg = ScanConfig {
            restarts: self.restarts.unwrap_or(defaults.restarts),
            max_alternations: self.max_alternations.unwrap_or(defaults.max_alternations),
            seed: self.seed.unwrap_or(0),
            score_cfg: ScoreConfig {
                statistic,
                one_sided_gate: !self.no_gate,
                ..ScoreConfig::default()
            },
            ..defaults
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn strategy(&self) -> Result<StrategySpec> {
        let method: Method = required(&self.method, "method")?.parse()?;
        Ok(StrategySpec {
            method,
            k: self.k.unwrap_or(3),
            strict: self.strict,
        })
    }
}

#[derive(Debug)]
struct Usage(String);

fn required<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| NpssError::InvalidArgument(format!("missing required flag --{flag}")))
}

fn read_matrix(path: &Path) -> Result<ActivationMatrix> {
    load_matrix(path, MatrixFormat::from_path(path))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| NpssError::io(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub result: String,
    pub labels: String,
    pub strategy: Method,
    pub metrics: TrialMetrics,
}

fn cmd_pvalues(f: &Flags) -> Result<()> {
    let reference = read_matrix(required(&f.reference, "reference")?)?;
    let test = read_matrix(required(&f.test, "test")?)?;
    let tail: Tail = required(&f.tail, "tail")?.parse()?;
    let out = required(&f.out, "out")?;
    let pv = empirical_pvalues(&reference, &test, tail, f.seed.unwrap_or(0))?;
    save_pvalues(&pv, out)
}

fn cmd_scan(f: &Flags) -> Result<()> {
    let pv = load_pvalues(required(&f.pvalues, "pvalues")?)?;
    let out = required(&f.out, "out")?;
    let cfg = f.scan_config()?;
    let result = scan(&pv, &cfg)?;
    write_json(&ScanReport::new(&result, &pv, &cfg), out)
}

fn cmd_run(f: &Flags) -> Result<()> {
    let reference = read_matrix(required(&f.reference, "reference")?)?;
    let test = read_matrix(required(&f.test, "test")?)?;
    let out = required(&f.out, "out")?;
    let spec = f.strategy()?;
    let cfg = f.scan_config()?;
    let result = run_strategy(&reference, &test, &spec, &cfg)?;
    write_json(&StrategyReport::new(&result, &test, &cfg), out)
}

fn cmd_evaluate(f: &Flags) -> Result<()> {
    let result_path = required(&f.result, "result")?;
    let labels_path = required(&f.labels, "labels")?;
    let out = required(&f.out, "out")?;
    let text = fs::read_to_string(result_path).map_err(|e| NpssError::io(result_path, e))?;
    let report: StrategyReport = serde_json::from_str(&text)?;
    let labels = load_labels(labels_path)?;
    let flagged = report
        .flagged_row_ids
        .iter()
        .map(|id| {
            labels
                .position(id)
                .ok_or_else(|| NpssError::LabelMismatch(format!("flagged row {id:?} has no label")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut metrics = compute_metrics(&flagged, &labels, labels.len())?;
    if report.nodes > 0 {
        metrics.node_size = report
            .node_sets
            .iter()
            .map(|s| s.len() as f64 / report.nodes as f64)
            .collect();
    }
    if report.strategy == Method::ScanLR && report.node_sets.len() == 2 {
        metrics.inode = Some(node_intersection(&report.node_sets[0], &report.node_sets[1]));
    }
    write_json(
        &EvaluationReport {
            schema_version: SCHEMA_VERSION,
            result: result_path.display().to_string(),
            labels: labels_path.display().to_string(),
            strategy: report.strategy,
            metrics,
        },
        out,
    )
}

/// The CSV mirror of an experiment report sits next to the JSON file.
pub fn csv_path(json_path: &Path) -> PathBuf {
    json_path.with_extension("csv")
}

fn cmd_experiment(f: &Flags) -> Result<()> {
    let reference = read_matrix(required(&f.reference, "reference")?)?;
    let clean = read_matrix(required(&f.clean, "clean")?)?;
    let anomalous = read_matrix(required(&f.anomalous, "anomalous")?)?;
    let out = required(&f.out, "out")?;
    let cfg = ExperimentConfig {
        strategy: f.strategy()?,
        trials: f.trials.unwrap_or(10),
        test_size: f.test_size.unwrap_or(800),
        anom_frac: f.anom_frac.unwrap_or(0.1),
        scan: f.scan_config()?,
    };
    let report = run_experiment(&reference, &clean, &anomalous, &cfg)?;
    write_json(&report, out)?;
    let csv = csv_path(out);
    fs::write(&csv, report.to_csv()).map_err(|e| NpssError::io(&csv, e))
}

fn dispatch(command: Command) -> std::result::Result<(), Failure> {
    let (flags, run): (Flags, fn(&Flags) -> Result<()>) = match command {
        Command::Pvalues(f) => (f, cmd_pvalues),
        Command::Scan(f) => (f, cmd_scan),
        Command::Run(f) => (f, cmd_run),
        Command::Evaluate(f) => (f, cmd_evaluate),
        Command::Experiment(f) => (f, cmd_experiment),
    };
    let flags = flags.merged().map_err(Failure::Npss)?;
    match run(&flags) {
        Err(NpssError::InvalidArgument(msg)) if msg.starts_with("missing required flag") => {
            Err(Failure::Usage(Usage(msg)))
        }
        other => other.map_err(Failure::Npss),
    }
}

enum Failure {
    Usage(Usage),
    Npss(NpssError),
}

fn error_json(kind: &str, message: &str, code: i32) -> String {
    serde_json::json!({ "error": kind, "message": message, "exit_code": code }).to_string()
}

fn thread_pool() -> Option<rayon::ThreadPool> {
    let n: usize = std::env::var("NPSS_THREADS").ok()?.trim().parse().ok()?;
    if n == 0 {
        return None;
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()
}

/// Runs the CLI on `args` (including the program name), writing
/// diagnostics to `stdout` / `stderr`, and returns the exit code.
pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let _ = write!(stderr, "{e}");
            let _ = writeln!(stderr, "{}", error_json("UsageError", &e.kind().to_string(), 1));
            return 1;
        }
    };
    let outcome = match thread_pool() {
        Some(pool) => pool.install(|| dispatch(cli.command)),
        None => dispatch(cli.command),
    };
    match outcome {
        Ok(()) => 0,
        Err(Failure::Usage(Usage(msg))) => {
            let _ = writeln!(stderr, "error: {msg}\n\n{}", Cli::command().render_usage());
            let _ = writeln!(stderr, "{}", error_json("UsageError", &msg, 1));
            1
        }
        Err(Failure::Npss(e)) => {
            let code = if e.is_io() { 2 } else { 1 };
            let _ = writeln!(stderr, "{}", error_json(e.kind(), &e.to_string(), code));
            code
        }
    }
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut std::io::stdout(), &mut std::io::stderr())
}
