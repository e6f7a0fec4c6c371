//! Command-line front end.
//!
//! Every subcommand writes CSV (or an image) deterministically: the same
//! arguments give byte-identical output. Exit codes are 0 when all bounds
//! hold, 1 on a violation, 2 on a usage or configuration error and 3 when a
//! transfinite run cannot be decided.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::{ContextKind, ContextValue, ErrorKind};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bounds::{verify_theorem, CheckpointPolicy, Setup, Theorem};
use crate::chain::{MarkovChain, VertexId};
use crate::lattice::LatticePoint;
use crate::potential;
use crate::ppm::{render_ppm, PixelBox};
use crate::rational::format_ratio;
use crate::rotor::{trajectory_csv, OrderingPolicy, RotorConfiguration, RotorMechanism, WalkState};
use crate::stack::{build_stack_mechanism, verify_stack_theorem};
use crate::transfinite::{transfinite_run, EscapePolicy, LatticeRotors, LineRotors, TransfiniteError};
use crate::z2::run_z2_experiment;

pub const EXIT_OK: u8 = 0;
pub const EXIT_VIOLATION: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_UNDECIDED: u8 = 3;

#[derive(Debug, Clone, Parser, PartialEq, Eq)]
#[command(name = "rotorwalk", version, about = "Rotor walks and stack walks on Markov chains, checked exactly")]
pub struct RunConfig {
    /// Seed for every random choice (shuffled orderings, random rotors).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, PartialEq, Eq)]
pub enum Command {
    /// Solve for an exact potential and print it per vertex.
    Solve(SolveArgs),
    /// Print the trajectory of a rotor walk.
    Run(RunArgs),
    /// Check a discrepancy bound at every step.
    Verify(VerifyArgs),
    /// The rotor walk on the square lattice from the initial sector configuration.
    Z2(Z2Args),
    /// Returns and escapes of a transfinite rotor walk.
    Transfinite(TransfiniteArgs),
    /// Export stack sequences, or check the stack-walk bound.
    Stack(StackArgs),
    /// Render the initial lattice rotor configuration as a PPM image.
    Render(RenderArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Ordering {
    ById,
    ReverseId,
    Shuffled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum R0Policy {
    /// Every rotor on the first entry of its list.
    Zero,
    /// Every rotor on the last entry, so the first exit follows the first entry.
    Last,
    /// Uniform random residues from the seed.
    Random,
}

#[derive(Debug, Clone, Args, PartialEq, Eq)]
pub struct ChainArgs {
    /// JSON chain description.
    #[arg(long)]
    pub chain: PathBuf,
    #[arg(long, value_enum, default_value_t = Ordering::ById)]
    pub ordering: Ordering,
    #[arg(long, value_enum, default_value_t = R0Policy::Zero)]
    pub r0: R0Policy,
}

#[derive(Debug, Clone, Args, PartialEq, Eq)]
pub struct OutArgs {
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PotentialChoice {
    HittingProb,
    HittingTime,
    Stationary,
    ExpectedVisits,
}

#[derive(Debug, Clone, Args, PartialEq, Eq)]
pub struct SolveArgs {
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long, value_enum)]
    pub kind: PotentialChoice,
    /// Target vertex label.
    #[arg(long)]
    pub b: Option<String>,
    /// Second target label, for hitting probabilities.
    #[arg(long)]
    pub c: Option<String>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, PartialEq, Eq)]
pub struct RunArgs {
    #[command(flatten)]
    pub chain: ChainArgs,
    /// Start vertex label; defaults to the first vertex.
    #[arg(long)]
    pub start: Option<String>,
    #[arg(long, default_value_t = 100)]
    pub steps: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Vertices default to `b` = first, `c` = last and `a` = second vertex of the file.
#[derive(Debug, Clone, Args, PartialEq, Eq)]
pub struct VerifyArgs {
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=4))]
    pub theorem: u32,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long)]
    pub a: Option<String>,
    #[arg(long)]
    pub b: Option<String>,
    #[arg(long)]
    pub c: Option<String>,
    #[arg(long, default_value_t = 10_000)]
    pub horizon: u64,
    /// Record every step up to this time, then geometrically spaced rows.
    #[arg(long, default_value_t = 10_000)]
    pub dense_until: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, PartialEq, Eq)]
pub struct Z2Args {
    #[arg(long, default_value = "0,0")]
    pub a: LatticePoint,
    #[arg(long, default_value = "1,1")]
    pub b: LatticePoint,
    #[arg(long, default_value = "0,0")]
    pub c: LatticePoint,
    /// Stop once `b` and `c` have been hit this many times in total.
    #[arg(long, default_value_t = 500)]
    pub hits: u64,
    /// Write the final rotor configuration as a PPM image.
    #[arg(long)]
    pub render: Option<PathBuf>,
    /// Image box `(−k, k]²`; defaults to the smallest box around every turned rotor.
    #[arg(long)]
    pub radius: Option<i64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SystemChoice {
    /// `ℤ` with rotors cycling through `left` copies of `v − 1`, then `right` copies of `v + 1`.
    Line,
    /// `ℤ²` with every rotor pointing East.
    Lattice,
}

#[derive(Debug, Clone, Args, PartialEq, Eq)]
pub struct TransfiniteArgs {
    #[arg(long, value_enum, default_value_t = SystemChoice::Line)]
    pub system: SystemChoice,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub left: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub right: u64,
    /// Number of returns and escapes to record.
    #[arg(long, default_value_t = 100)]
    pub runs: u64,
    /// Distance at which a run without an escape certificate is declared undecided.
    #[arg(long, default_value_t = 1 << 20)]
    pub d_max: u64,
    #[arg(long, default_value_t = 1 << 34)]
    pub budget: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, PartialEq, Eq)]
pub struct StackArgs {
    /// JSON chain description.
    #[arg(long)]
    pub chain: PathBuf,
    /// Check the hitting bound over this many steps instead of exporting.
    #[arg(long)]
    pub horizon: Option<u64>,
    #[arg(long)]
    pub a: Option<String>,
    #[arg(long)]
    pub b: Option<String>,
    #[arg(long)]
    pub c: Option<String>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, PartialEq, Eq)]
pub struct RenderArgs {
    /// Image box `(−k, k]²`.
    #[arg(long, default_value_t = 20)]
    pub radius: i64,
    #[arg(long)]
    pub out: PathBuf,
}

/// A rejected command line, naming the flag at fault when there is one.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{message}")]
pub struct UsageError {
    pub flag: Option<String>,
    pub message: String,
    /// Help or version output requested; print it and exit successfully.
    pub informational: bool,
}

impl UsageError {
    fn flag(flag: &str, message: impl Into<String>) -> Self {
        UsageError {
            flag: Some(flag.to_string()),
            message: format!("{flag}: {}", message.into()),
            informational: false,
        }
    }
}

/// Parse and validate `argv` (including the program name).
pub fn parse_config<I, T>(argv: I) -> Result<RunConfig, UsageError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cfg = RunConfig::try_parse_from(argv).map_err(|e| {
        let informational = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
        let flag = match e.get(ContextKind::InvalidArg) {
            Some(ContextValue::String(s)) => Some(s.clone()),
            Some(ContextValue::Strings(v)) => v.first().cloned(),
            _ => None,
        }
        .map(|s| s.split_whitespace().next().unwrap_or_default().to_string());
        UsageError {
            flag,
            message: e.render().to_string(),
            informational,
        }
    })?;
    let paths: Vec<&Path> = match &cfg.command {
        Command::Solve(a) => vec![&a.chain.chain],
        Command::Run(a) => vec![&a.chain.chain],
        Command::Verify(a) => vec![&a.chain.chain],
        Command::Stack(a) => vec![&a.chain],
        _ => vec![],
    };
    for p in paths {
        if !p.is_file() {
            return Err(UsageError::flag("--chain", format!("no such file {}", p.display())));
        }
    }
    if let Command::Z2(a) = &cfg.command {
        if a.b == a.c {
            return Err(UsageError::flag("--c", "b and c must differ"));
        }
        if a.radius.is_some_and(|k| k < 1) {
            return Err(UsageError::flag("--radius", "must be at least 1"));
        }
    }
    if let Command::Render(a) = &cfg.command {
        if a.radius < 1 {
            return Err(UsageError::flag("--radius", "must be at least 1"));
        }
    }
    Ok(cfg)
}

/// Why a command did not finish with every bound holding.
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Usage(#[from] UsageError),
    #[error("{0}")]
    Config(String),
    #[error("bound violated at {row}")]
    Violation { row: String },
    #[error("{0}")]
    Undecided(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Io(_) => EXIT_USAGE,
            CliError::Violation { .. } => EXIT_VIOLATION,
            CliError::Undecided(_) => EXIT_UNDECIDED,
        }
    }
}

fn config<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

fn load_chain(path: &Path) -> Result<MarkovChain, CliError> {
    let text = std::fs::read_to_string(path)?;
    MarkovChain::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn vertex(chain: &MarkovChain, flag: &str, label: &Option<String>, default: usize) -> Result<VertexId, CliError> {
    match label {
        Some(l) => chain.id(l).map_err(|e| UsageError::flag(flag, e.to_string()).into()),
        None if default < chain.len() => Ok(VertexId(default)),
        None => Err(UsageError::flag(flag, "the chain is too small for the default choice").into()),
    }
}

fn mechanism(chain: &MarkovChain, args: &ChainArgs, seed: u64) -> Result<(RotorMechanism, RotorConfiguration), CliError> {
    let policy = match args.ordering {
        Ordering::ById => OrderingPolicy::ById,
        Ordering::ReverseId => OrderingPolicy::ReverseId,
        Ordering::Shuffled => OrderingPolicy::Shuffled(seed),
    };
    let mech = RotorMechanism::derive(chain, &policy).map_err(config)?;
    let r0 = match args.r0 {
        R0Policy::Zero => RotorConfiguration::uniform(&mech, 0),
        R0Policy::Last => {
            RotorConfiguration::from_residues(&mech, chain.vertices().map(|u| mech.degree(u) - 1).collect())
        }
        R0Policy::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
            RotorConfiguration::random(&mech, &mut rng)
        }
    };
    Ok((mech, r0))
}

fn emit(out: &OutArgs, text: &[u8], stdout: &mut dyn Write) -> Result<(), CliError> {
    match &out.out {
        Some(path) => std::fs::write(path, text)?,
        None => stdout.write_all(text)?,
    }
    Ok(())
}

/// Run a parsed command, writing results to `stdout` or the requested files.
pub fn execute(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let seed = cfg.seed;
    match &cfg.command {
        Command::Solve(args) => {
            let chain = load_chain(&args.chain.chain)?;
            let b = vertex(&chain, "--b", &args.b, 0)?;
            let f = match args.kind {
                PotentialChoice::HittingProb => {
                    let c = vertex(&chain, "--c", &args.c, chain.len().saturating_sub(1))?;
                    potential::solve_hitting_prob(&chain, b, c)
                }
                PotentialChoice::HittingTime => potential::solve_hitting_time(&chain, b),
                PotentialChoice::Stationary => potential::solve_stationary(&chain),
                PotentialChoice::ExpectedVisits => potential::expected_visits(&chain, b),
            }
            .map_err(config)?;
            let mut text = String::from("vertex,value\n");
            for v in chain.vertices() {
                writeln!(text, "{},{}", chain.label(v), format_ratio(f.get(v))).unwrap();
            }
            emit(&args.out, text.as_bytes(), stdout)
        }
        Command::Run(args) => {
            let chain = load_chain(&args.chain.chain)?;
            let start = vertex(&chain, "--start", &args.start, 0)?;
            let (mech, r0) = mechanism(&chain, &args.chain, seed)?;
            let text = trajectory_csv(&chain, &mech, WalkState::new(start, r0), args.steps);
            emit(&args.out, text.as_bytes(), stdout)
        }
        Command::Verify(args) => {
            let theorem = Theorem::from_id(args.theorem).expect("range checked by the parser");
            let chain = load_chain(&args.chain.chain)?;
            let b = vertex(&chain, "--b", &args.b, 0)?;
            let c = match theorem {
                Theorem::HittingProbability | Theorem::Occupation => {
                    Some(vertex(&chain, "--c", &args.c, chain.len().saturating_sub(1))?)
                }
                _ => None,
            };
            let a = vertex(&chain, "--a", &args.a, 1)?;
            let setup = Setup { a, b, c };
            let prepared = theorem.prepare(&chain, &setup).map_err(config)?;
            let (mech, r0) = mechanism(&prepared, &args.chain, seed)?;
            let policy = CheckpointPolicy {
                dense_until: args.dense_until,
                ..CheckpointPolicy::default()
            };
            let report = verify_theorem(theorem, &prepared, &mech, &r0, a, &setup, args.horizon, policy)
                .map_err(config)?;
            let csv = report.to_csv();
            emit(&args.out, csv.as_bytes(), stdout)?;
            violation_row(&csv, report.passed())
        }
        Command::Z2(args) => {
            let exp = run_z2_experiment(args.a, args.b, args.c, args.hits).map_err(config)?;
            emit(&args.out, exp.to_csv().as_bytes(), stdout)?;
            if let Some(path) = &args.render {
                let area = match args.radius {
                    Some(k) => PixelBox::centred(k),
                    None => {
                        let pts: Vec<LatticePoint> =
                            exp.walk.touched().into_iter().chain([args.a, args.b, args.c]).collect();
                        let min = LatticePoint::new(
                            pts.iter().map(|p| p.x).min().unwrap(),
                            pts.iter().map(|p| p.y).min().unwrap(),
                        );
                        let max = LatticePoint::new(
                            pts.iter().map(|p| p.x).max().unwrap(),
                            pts.iter().map(|p| p.y).max().unwrap(),
                        );
                        PixelBox::new(min, max)
                    }
                }
                .map_err(config)?;
                std::fs::write(path, render_ppm(&area, |p| exp.walk.rotor(p)))?;
            }
            Ok(())
        }
        Command::Transfinite(args) => {
            let policy = EscapePolicy {
                d_max: args.d_max,
                step_budget: args.budget,
                ..EscapePolicy::default()
            };
            let result = match args.system {
                SystemChoice::Line => {
                    let sys = LineRotors::drifted_all_right(args.left as usize, args.right as usize);
                    transfinite_run(&sys, 0, args.runs, &policy)
                }
                SystemChoice::Lattice => transfinite_run(&LatticeRotors::all_east(), LatticePoint::ORIGIN, args.runs, &policy),
            };
            match result {
                Ok(state) => emit(&args.out, state.to_csv().as_bytes(), stdout),
                Err(e @ (TransfiniteError::Undecided { .. } | TransfiniteError::Budget { .. })) => {
                    let partial = match &e {
                        TransfiniteError::Undecided { partial, .. } | TransfiniteError::Budget { partial, .. } => partial,
                        _ => unreachable!(),
                    };
                    emit(&args.out, partial.to_csv().as_bytes(), stdout)?;
                    Err(CliError::Undecided(e.to_string()))
                }
                Err(e) => Err(config(e)),
            }
        }
        Command::Stack(args) => {
            let chain = load_chain(&args.chain)?;
            match args.horizon {
                None => {
                    let mech = build_stack_mechanism(&chain).map_err(config)?;
                    let mut text = String::new();
                    for u in chain.vertices() {
                        writeln!(text, "{}: {}", chain.label(u), mech.sequence(u).export()).unwrap();
                    }
                    emit(&args.out, text.as_bytes(), stdout)
                }
                Some(horizon) => {
                    let b = vertex(&chain, "--b", &args.b, 0)?;
                    let c = vertex(&chain, "--c", &args.c, chain.len().saturating_sub(1))?;
                    let a = vertex(&chain, "--a", &args.a, 1)?;
                    let prepared = chain.redirect_to(&[b, c], a).map_err(config)?;
                    let mech = build_stack_mechanism(&prepared).map_err(config)?;
                    let report = verify_stack_theorem(&prepared, &mech, a, b, c, horizon).map_err(config)?;
                    let csv = report.bound.to_csv();
                    emit(&args.out, csv.as_bytes(), stdout)?;
                    if report.identity_failures > 0 {
                        return Err(CliError::Violation {
                            row: format!("stack identity failed at {} steps", report.identity_failures),
                        });
                    }
                    violation_row(&csv, report.passed())
                }
            }
        }
        Command::Render(args) => {
            let area = PixelBox::centred(args.radius).map_err(config)?;
            std::fs::write(&args.out, render_ppm(&area, crate::lattice::z2_initial_rotor))?;
            Ok(())
        }
    }
}

/// The first CSV row with `ok = false`, as an error.
fn violation_row(csv: &str, passed: bool) -> Result<(), CliError> {
    if passed {
        return Ok(());
    }
    let row = csv
        .lines()
        .skip(1)
        .find(|l| l.split(',').nth(5) == Some("false"))
        .unwrap_or("refined bound violated")
        .to_string();
    Err(CliError::Violation { row })
}

/// Parse, run and report; returns the process exit code.
pub fn main_with_args<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cfg = match parse_config(argv) {
        Ok(cfg) => cfg,
        Err(e) if e.informational => {
            let _ = write!(stdout, "{}", e.message);
            return EXIT_OK;
        }
        Err(e) => {
            let _ = writeln!(stderr, "{}", e.message.trim_end());
            return EXIT_USAGE;
        }
    };
    match execute(&cfg, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "rotorwalk: {e}");
            e.exit_code()
        }
    }
}
