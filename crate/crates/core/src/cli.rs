//! Command-line front end.
//!
//! Data goes to standard output (or `--out`), diagnostics to standard error.
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::analytic::{
    alpha_threshold, exact_curve, exact_curve_with, landscape_shape, optimal_k, threshold_t, EvenCalls,
};
use crate::error::{Error, Result};
use crate::io::{curve_json, format_number, write_curve, Format};
use crate::population::{BiLevelSpec, FilterModel};
use crate::scaling_law::{fit_dataset, predict, FitOptions, ItemData, ScalingModel};
use crate::simulator::{resample_record_curves, resample_curve_from_trace, simulate_curve, SeedSpec, Strategy, SyntheticPopulation};
use crate::special::Probability;
use crate::trace::ResponseTrace;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

const DEFAULT_K_MAX: u32 = 100;
const DEFAULT_TRAIN_KS: [u32; 5] = [1, 2, 3, 4, 5];
/// Samples used to classify a synthetic level as easy or hard.
const SYNTHETIC_CLASSIFY_SAMPLES: usize = 201;

#[derive(Parser, Debug)]
#[command(name = "votelaw", version, about = "Accuracy of majority-vote inference as a function of the number of calls")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Exact bi-level accuracy curve
    Exact {
        #[command(flatten)]
        spec: SpecFlags,
        #[command(flatten)]
        grid: GridFlags,
        #[command(flatten)]
        out: OutFlags,
    },
    /// Landscape shape and the alpha threshold
    Shape {
        #[command(flatten)]
        spec: SpecFlags,
        #[command(flatten)]
        out: OutFlags,
    },
    /// Best number of calls, closed form and scanned curve
    OptimalK {
        #[command(flatten)]
        spec: SpecFlags,
        #[arg(long = "k-max")]
        k_max: Option<u32>,
        #[command(flatten)]
        out: OutFlags,
    },
    /// Monte Carlo curve on a bi-level population
    Simulate {
        #[command(flatten)]
        spec: SpecFlags,
        #[command(flatten)]
        grid: GridFlags,
        #[command(flatten)]
        sim: SimFlags,
        #[arg(long = "keep-correct")]
        keep_correct: Option<f64>,
        #[arg(long = "keep-incorrect")]
        keep_incorrect: Option<f64>,
        #[command(flatten)]
        out: OutFlags,
    },
    /// Bootstrap curve from a response trace
    Resample {
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        grid: GridFlags,
        #[command(flatten)]
        sim: SimFlags,
        #[command(flatten)]
        out: OutFlags,
    },
    /// Fit the scaling model to a trace or to exact bi-level curves
    Fit {
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        spec: SpecFlags,
        #[arg(long = "train-ks")]
        train_ks: Option<String>,
        #[command(flatten)]
        sim: SimFlags,
        #[command(flatten)]
        out: OutFlags,
    },
    /// Curve predicted by a fitted model
    Predict {
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        grid: GridFlags,
        #[command(flatten)]
        out: OutFlags,
    },
}

#[derive(Args, Debug)]
struct SpecFlags {
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    p1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    p2: Option<f64>,
}

#[derive(Args, Debug)]
struct GridFlags {
    #[arg(long = "k-max")]
    k_max: Option<u32>,
    /// Comma-separated, increasing call counts
    #[arg(long)]
    ks: Option<String>,
}

#[derive(Args, Debug)]
struct SimFlags {
    #[arg(long, default_value_t = 1000)]
    runs: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = StrategyArg::Vote)]
    strategy: StrategyArg,
}

#[derive(Args, Debug)]
struct OutFlags {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum StrategyArg {
    Vote,
    FilterVote,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum FormatArg {
    Csv,
    Json,
}

/// A usage problem, reported on one line with exit code 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Output {
    pub path: Option<PathBuf>,
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FitSource {
    Trace(PathBuf),
    BiLevel(BiLevelSpec),
}

/// A validated invocation.
#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Exact { spec: BiLevelSpec, ks: Vec<u32>, output: Output },
    Shape { spec: BiLevelSpec, output: Output },
    OptimalK { spec: BiLevelSpec, k_max: u32, output: Output },
    Simulate {
        spec: BiLevelSpec,
        strategy: Strategy,
        filter: Option<FilterModel>,
        ks: Vec<u32>,
        runs: u32,
        seed: SeedSpec,
        output: Output,
    },
    Resample { trace: PathBuf, strategy: Strategy, ks: Vec<u32>, runs: u32, seed: SeedSpec, output: Output },
    Fit { source: FitSource, strategy: Strategy, train_ks: Vec<u32>, runs: u32, seed: SeedSpec, output: Output },
    Predict { model: PathBuf, ks: Vec<u32>, output: Output },
}

/// What `parse_args` produced: a command to run, or text clap wants shown
/// (help, version).
#[derive(Debug)]
pub enum Parsed {
    Run(Command),
    Info(String),
}

fn usage(msg: impl Into<String>) -> UsageError {
    UsageError(msg.into())
}

fn required<T>(value: Option<T>, flag: &str) -> std::result::Result<T, UsageError> {
    value.ok_or_else(|| usage(format!("missing required flag {flag}")))
}

fn probability_flag(value: f64, flag: &str) -> std::result::Result<f64, UsageError> {
    Probability::new(value)
        .map(Probability::value)
        .map_err(|_| usage(format!("{flag}: value {value} is outside [0, 1]")))
}

fn spec_from(flags: &SpecFlags) -> std::result::Result<BiLevelSpec, UsageError> {
    let alpha = probability_flag(required(flags.alpha, "--alpha")?, "--alpha")?;
    // a level with zero weight needs no accuracy
    let (p1, p2) = match (flags.p1, flags.p2) {
        (Some(p1), None) if alpha == 1.0 => (p1, p1),
        (None, Some(p2)) if alpha == 0.0 => (p2, p2),
        (p1, p2) => (required(p1, "--p1")?, required(p2, "--p2")?),
    };
    let p1 = probability_flag(p1, "--p1")?;
    let p2 = probability_flag(p2, "--p2")?;
    BiLevelSpec::new(alpha, p1, p2).map_err(|e| usage(e.to_string()))
}

fn k_list(text: &str, flag: &str) -> std::result::Result<Vec<u32>, UsageError> {
    let ks = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<u32>()
                .map_err(|_| usage(format!("{flag}: {s:?} is not a positive integer")))
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    crate::analytic::validate_ks(&ks).map_err(|e| usage(format!("{flag}: {e}")))?;
    Ok(ks)
}

fn k_max_flag(value: Option<u32>) -> std::result::Result<u32, UsageError> {
    match value {
        Some(0) => Err(usage("--k-max: must be at least 1")),
        Some(k) => Ok(k),
        None => Ok(DEFAULT_K_MAX),
    }
}

fn grid_from(flags: &GridFlags) -> std::result::Result<Vec<u32>, UsageError> {
    match &flags.ks {
        Some(text) => k_list(text, "--ks"),
        None => Ok((1..=k_max_flag(flags.k_max)?).collect()),
    }
}

fn output_from(flags: OutFlags) -> Output {
    let format = match flags.format {
        FormatArg::Csv => Format::Csv,
        FormatArg::Json => Format::Json,
    };
    Output { path: flags.out, format }
}

fn sim_from(flags: &SimFlags) -> std::result::Result<(Strategy, u32, SeedSpec), UsageError> {
    if flags.runs == 0 {
        return Err(usage("--runs: must be at least 1"));
    }
    let strategy = match flags.strategy {
        StrategyArg::Vote => Strategy::Vote,
        StrategyArg::FilterVote => Strategy::FilterVote,
    };
    Ok((strategy, flags.runs, SeedSpec::new(flags.seed)))
}

/// Parses and validates `argv` (including the program name).
pub fn parse_args<I, T>(argv: I) -> std::result::Result<Parsed, UsageError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Ok(Parsed::Info(e.render().to_string())),
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    Err(usage("missing subcommand (see --help)"))
                }
                _ => {
                    let text = e.render().to_string();
                    let first = text.lines().next().unwrap_or("invalid arguments");
                    Err(usage(first.trim_start_matches("error: ").to_string()))
                }
            };
        }
    };
    let cmd = match cli.command {
        Sub::Exact { spec, grid, out } => {
            Command::Exact { spec: spec_from(&spec)?, ks: grid_from(&grid)?, output: output_from(out) }
        }
        Sub::Shape { spec, out } => Command::Shape { spec: spec_from(&spec)?, output: output_from(out) },
        Sub::OptimalK { spec, k_max, out } => {
            Command::OptimalK { spec: spec_from(&spec)?, k_max: k_max_flag(k_max)?, output: output_from(out) }
        }
        Sub::Simulate { spec, grid, sim, keep_correct, keep_incorrect, out } => {
            let (strategy, runs, seed) = sim_from(&sim)?;
            let filter = match strategy {
                Strategy::FilterVote => {
                    let kc = probability_flag(required(keep_correct, "--keep-correct")?, "--keep-correct")?;
                    let ki = probability_flag(required(keep_incorrect, "--keep-incorrect")?, "--keep-incorrect")?;
                    Some(FilterModel::new(kc, ki).map_err(|e| usage(e.to_string()))?)
                }
                Strategy::Vote => None,
            };
            Command::Simulate {
                spec: spec_from(&spec)?,
                strategy,
                filter,
                ks: grid_from(&grid)?,
                runs,
                seed,
                output: output_from(out),
            }
        }
        Sub::Resample { trace, grid, sim, out } => {
            let (strategy, runs, seed) = sim_from(&sim)?;
            Command::Resample {
                trace: required(trace, "--trace")?,
                strategy,
                ks: grid_from(&grid)?,
                runs,
                seed,
                output: output_from(out),
            }
        }
        Sub::Fit { trace, spec, train_ks, sim, out } => {
            let (strategy, runs, seed) = sim_from(&sim)?;
            let source = match trace {
                Some(path) => FitSource::Trace(path),
                None => FitSource::BiLevel(spec_from(&spec).map_err(|e| usage(format!("{e} (or pass --trace)")))?),
            };
            let train_ks = match train_ks {
                Some(text) => k_list(&text, "--train-ks")?,
                None => DEFAULT_TRAIN_KS.to_vec(),
            };
            if train_ks.len() < 3 {
                return Err(usage("--train-ks: need at least 3 call counts"));
            }
            Command::Fit { source, strategy, train_ks, runs, seed, output: output_from(out) }
        }
        Sub::Predict { model, grid, out } => {
            Command::Predict { model: required(model, "--model")?, ks: grid_from(&grid)?, output: output_from(out) }
        }
    };
    Ok(Parsed::Run(cmd))
}

fn level_item(id: &str, p: f64, weight: f64, train_ks: &[u32]) -> Result<ItemData> {
    let correct = (p * SYNTHETIC_CLASSIFY_SAMPLES as f64).round() as usize;
    let samples = (0..SYNTHETIC_CLASSIFY_SAMPLES)
        .map(|i| if i < correct { "correct" } else { "wrong" }.to_string())
        .collect();
    let prob = Probability::new(p)?;
    let train = train_ks
        .iter()
        .map(|&k| Ok((k, crate::analytic::vote_accuracy(prob, k)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ItemData { id: id.to_string(), samples, true_answer: "correct".into(), train, weight: Some(weight) })
}

/// Training items for the two levels of a bi-level population, each fitted
/// to its exact curve.
pub fn bilevel_items(spec: &BiLevelSpec, train_ks: &[u32]) -> Result<Vec<ItemData>> {
    let mut items = Vec::new();
    if spec.alpha() > 0.0 {
        items.push(level_item("easy", spec.p1(), spec.alpha(), train_ks)?);
    }
    if spec.alpha() < 1.0 {
        items.push(level_item("hard", spec.p2(), 1.0 - spec.alpha(), train_ks)?);
    }
    Ok(items)
}

/// Training items for every trace record: classification samples are the
/// record's answers (kept answers under Filter-Vote, when any are kept)
/// and training accuracies come from the bootstrap.
pub fn trace_items(
    trace: &ResponseTrace,
    strategy: Strategy,
    train_ks: &[u32],
    runs: u32,
    seed: SeedSpec,
) -> Result<Vec<ItemData>> {
    let curves = resample_record_curves(trace, strategy, train_ks, runs, seed)?;
    Ok(trace
        .records()
        .iter()
        .zip(curves)
        .map(|(r, curve)| {
            let kept: Vec<String> = match (&r.keep, strategy) {
                (Some(flags), Strategy::FilterVote) => {
                    r.answers.iter().zip(flags).filter(|(_, &f)| f == 1).map(|(a, _)| a.clone()).collect()
                }
                _ => Vec::new(),
            };
            let samples = if kept.is_empty() { r.answers.clone() } else { kept };
            ItemData {
                id: r.id.clone(),
                samples,
                true_answer: r.true_answer.clone(),
                train: curve.points().iter().map(|p| (p.k, p.accuracy)).collect(),
                weight: r.weight,
            }
        })
        .collect())
}

fn file_error(path: &Path, e: Error) -> Error {
    match e {
        Error::Io(io) => Error::Input(format!("{}: {io}", path.display())),
        other => Error::Input(format!("{}: {other}", path.display())),
    }
}

fn emit(output: &Output, stdout: &mut dyn Write, bytes: &[u8]) -> Result<()> {
    match &output.path {
        Some(path) => std::fs::write(path, bytes).map_err(|e| file_error(path, e.into()))?,
        None => stdout.write_all(bytes)?,
    }
    Ok(())
}

fn load_trace(path: &Path) -> Result<ResponseTrace> {
    ResponseTrace::load(path).map_err(|e| file_error(path, e))
}

fn shape_report(spec: &BiLevelSpec, format: Format) -> Result<Vec<u8>> {
    let shape = landscape_shape(spec);
    let p1 = Probability::new(spec.p1())?;
    let p2 = Probability::new(spec.p2())?;
    let (t, threshold) = match (threshold_t(p1, p2), alpha_threshold(p1, p2)) {
        (Ok(t), Ok(th)) => (Some(t), Some(th)),
        _ => (None, None),
    };
    let mut buf = Vec::new();
    match format {
        Format::Csv => {
            let show = |v: Option<f64>| v.map(format_number).unwrap_or_default();
            writeln!(buf, "shape,t,threshold")?;
            writeln!(buf, "{shape},{},{}", show(t), show(threshold))?;
        }
        Format::Json => {
            let num = |v: Option<f64>| v.map(|x| format_number(x).parse::<f64>().unwrap_or(x));
            serde_json::to_writer(
                &mut buf,
                &json!({"shape": shape.to_string(), "t": num(t), "threshold": num(threshold)}),
            )?;
            writeln!(buf)?;
        }
    }
    Ok(buf)
}

fn optimal_report(spec: &BiLevelSpec, k_max: u32, format: Format) -> Result<Vec<u8>> {
    let best = optimal_k(spec, k_max)?;
    let ks: Vec<u32> = (1..=k_max).collect();
    let curve = exact_curve_with(spec, &ks, EvenCalls::BetaContinuation)?;
    let mut buf = Vec::new();
    match format {
        Format::Csv => {
            writeln!(buf, "optimal_k,continuous_k")?;
            writeln!(buf, "{},{}", best.k, best.continuous.map(format_number).unwrap_or_default())?;
            writeln!(buf)?;
            write_curve(&curve, Format::Csv, &mut buf)?;
        }
        Format::Json => {
            let continuous = best.continuous.map(|x| format_number(x).parse::<f64>().unwrap_or(x));
            serde_json::to_writer(
                &mut buf,
                &json!({"optimal_k": best.k, "continuous_k": continuous, "curve": curve_json(&curve)}),
            )?;
            writeln!(buf)?;
        }
    }
    Ok(buf)
}

fn curve_bytes(curve: &crate::analytic::PerformanceCurve, format: Format) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_curve(curve, format, &mut buf)?;
    Ok(buf)
}

fn load_model(path: &Path) -> Result<ScalingModel> {
    std::fs::read_to_string(path)
        .map_err(Error::from)
        .and_then(|text| ScalingModel::from_json(&text))
        .map_err(|e| file_error(path, e))
}

/// Runs a validated command, writing data to `stdout` or the `--out` file.
pub fn execute(cmd: &Command, stdout: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Exact { spec, ks, output } => emit(output, stdout, &curve_bytes(&exact_curve(spec, ks)?, output.format)?),
        Command::Shape { spec, output } => emit(output, stdout, &shape_report(spec, output.format)?),
        Command::OptimalK { spec, k_max, output } => {
            emit(output, stdout, &optimal_report(spec, *k_max, output.format)?)
        }
        Command::Simulate { spec, strategy, filter, ks, runs, seed, output } => {
            let pop = SyntheticPopulation::from_bilevel(spec, *filter);
            let curve = simulate_curve(&pop, *strategy, ks, *runs, *seed)?;
            emit(output, stdout, &curve_bytes(&curve, output.format)?)
        }
        Command::Resample { trace, strategy, ks, runs, seed, output } => {
            let trace = load_trace(trace)?;
            let curve = resample_curve_from_trace(&trace, *strategy, ks, *runs, *seed)?;
            emit(output, stdout, &curve_bytes(&curve, output.format)?)
        }
        Command::Fit { source, strategy, train_ks, runs, seed, output } => {
            let items = match source {
                FitSource::Trace(path) => trace_items(&load_trace(path)?, *strategy, train_ks, *runs, *seed)?,
                FitSource::BiLevel(spec) => bilevel_items(spec, train_ks)?,
            };
            let model = fit_dataset(&items, &FitOptions::default())?;
            let mut text = model.to_json()?;
            text.push('\n');
            emit(output, stdout, text.as_bytes())
        }
        Command::Predict { model, ks, output } => {
            let curve = predict(&load_model(model)?, ks)?;
            emit(output, stdout, &curve_bytes(&curve, output.format)?)
        }
    }
}

/// Parses `argv`, executes, and reports. Returns the process exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match parse_args(argv) {
        Ok(Parsed::Info(text)) => {
            let _ = stdout.write_all(text.as_bytes());
            EXIT_OK
        }
        Ok(Parsed::Run(cmd)) => match execute(&cmd, stdout) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                let _ = writeln!(stderr, "error: {}", one_line(&e));
                EXIT_FAILURE
            }
        },
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_USAGE
        }
    }
}

fn one_line(e: &Error) -> String {
    e.to_string().replace('\n', " ")
}
