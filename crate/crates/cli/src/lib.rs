//! Command-line driver: runs scenarios, reports equilibria and runs the
//! verification suites.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | converged, or every check passed |
//! | 1 | I/O or usage error |
//! | 2 | a run diverged |
//! | 3 | the scenario failed validation |
//! | 4 | a verification check failed |
//! | 5 | a run hit the iteration limit |

pub mod report;
pub mod suites;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use gifteq_core::dynamics::{cycle_operators, trajectory_from_operators};
use gifteq_core::scenario::{load_scenario, Scenario, ScenarioError};
use gifteq_core::solver::find_equilibrium_ops;
use gifteq_core::{DynamicsError, Status};
use thiserror::Error;

use report::{
    overall_status, to_toml, ConditionSummary, ConditionsReport, IntervalReport, PairAnalysis,
    PairConditions, RunReport, SweepPair, SweepReport, SweepRun, VerifyReport,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_IO: u8 = 1;
pub const EXIT_DIVERGED: u8 = 2;
pub const EXIT_INVALID: u8 = 3;
pub const EXIT_VIOLATION: u8 = 4;
pub const EXIT_MAX_ITER: u8 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Scenario(ScenarioError::Io { .. }) | CliError::Io { .. } | CliError::Usage(_) => {
                EXIT_IO
            }
            CliError::Scenario(_) | CliError::Dynamics(_) => EXIT_INVALID,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "gifteq", version, about = "Account-balance equilibria of cyclical gift schedules")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Find the equilibrium of each pair and optionally write trajectories
    Run(RunArgs),
    /// Run the property checks on a scenario or a built-in suite
    Verify(VerifyArgs),
    /// Print the convergence conditions on the invariant interval
    Conditions {
        file: PathBuf,
    },
    /// Solve from a grid of starting balances and report the spread
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub file: PathBuf,
    /// Ordered pair to analyse, e.g. `P,Q`
    #[arg(long)]
    pub pair: Option<String>,
    /// Trajectory length in steps
    #[arg(long)]
    pub steps: Option<usize>,
    /// Starting balance
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<f64>,
    /// Directory for trajectory CSV files and the report
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(conflicts_with = "suite", required_unless_present = "suite")]
    pub file: Option<PathBuf>,
    /// Built-in suite: paper-graphs, random or negative-controls
    #[arg(long)]
    pub suite: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub file: PathBuf,
    /// Starting balances as `a:b:n`, n evenly spaced points from a to b
    #[arg(long, allow_hyphen_values = true)]
    pub starts: String,
    #[arg(long)]
    pub pair: Option<String>,
}

/// Text for stdout plus the process exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub text: String,
    pub code: u8,
}

pub fn execute(cli: &Cli) -> Result<Output, CliError> {
    match &cli.command {
        Command::Run(args) => run(args),
        Command::Verify(args) => verify(args),
        Command::Conditions { file } => conditions(file),
        Command::Sweep(args) => sweep(args),
    }
}

fn status_code(s: Status) -> u8 {
    match s {
        Status::Converged => EXIT_OK,
        Status::Diverged => EXIT_DIVERGED,
        Status::MaxIterations => EXIT_MAX_ITER,
    }
}

fn parse_pair(text: &str) -> Result<(String, String), CliError> {
    match text.split_once(',') {
        Some((a, b)) if !a.trim().is_empty() && !b.trim().is_empty() => {
            Ok((a.trim().to_string(), b.trim().to_string()))
        }
        _ => Err(CliError::Usage(format!("--pair expects P,Q, got {text:?}"))),
    }
}

/// Parses `a:b:n`.
pub fn parse_starts(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("--starts expects a:b:n, got {text:?}"));
    let parts: Vec<&str> = text.split(':').collect();
    let [a, b, n] = parts[..] else {
        return Err(bad());
    };
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    if !a.is_finite() || !b.is_finite() || n == 0 {
        return Err(bad());
    }
    Ok(match n {
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    })
}

fn selected_pairs(s: &Scenario, pair: &Option<String>) -> Result<Vec<gifteq_core::Pair>, CliError> {
    let sel = pair.as_deref().map(parse_pair).transpose()?;
    Ok(s.pairs(sel.as_ref().map(|(a, b)| (a.as_str(), b.as_str())))?)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn file_stem(s: &Scenario) -> String {
    let name = if s.name.is_empty() { "scenario" } else { &s.name };
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn run(args: &RunArgs) -> Result<Output, CliError> {
    let s = load_scenario(&args.file)?;
    let config = s.run.solver_config();
    let x0 = args.x0.unwrap_or(s.run.x0);
    let steps = args.steps.unwrap_or(s.run.steps);
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }
    let mut pairs = vec![];
    for pair in selected_pairs(&s, &args.pair)? {
        let ops = cycle_operators(&s.schedule, &pair, &s.curves)?;
        let a = PairAnalysis::new(pair, ops, x0, &config);
        let mut rep = a.report();
        if let Some(dir) = &args.out {
            let path = dir.join(format!("{}_{}_{}.csv", file_stem(&s), a.pair.p, a.pair.q));
            let t = trajectory_from_operators(&a.ops, x0, steps);
            report::write_trajectory(&path, &t)?;
            rep.trajectory = Some(path.display().to_string());
        }
        pairs.push(rep);
    }
    let status = overall_status(pairs.iter().map(|p| &p.status));
    let text = to_toml(&RunReport {
        scenario: s.name.clone(),
        status,
        pairs,
    });
    if let Some(dir) = &args.out {
        write_file(&dir.join(format!("{}_report.toml", file_stem(&s))), &text)?;
    }
    Ok(Output {
        text,
        code: status_code(status),
    })
}

fn verify(args: &VerifyArgs) -> Result<Output, CliError> {
    let report = match (&args.suite, &args.file) {
        (Some(name), _) => suites::run_suite(name, args.seed.unwrap_or(0))?,
        (None, Some(file)) => {
            let s = load_scenario(file)?;
            let seed = args.seed.unwrap_or(s.run.seed);
            let (records, equilibria, _) = suites::verify_scenario(&s, seed)?;
            VerifyReport::new(&s.name, seed, records, equilibria)
        }
        (None, None) => return Err(CliError::Usage("verify needs a file or --suite".into())),
    };
    Ok(Output {
        code: if report.passed { EXIT_OK } else { EXIT_VIOLATION },
        text: to_toml(&report),
    })
}

fn conditions(file: &Path) -> Result<Output, CliError> {
    let s = load_scenario(file)?;
    let config = s.run.solver_config();
    let mut pairs = vec![];
    for pair in s.pairs(None)? {
        let ops = cycle_operators(&s.schedule, &pair, &s.curves)?;
        let a = PairAnalysis::new(pair, ops, s.run.x0, &config);
        let inv = a.invariant;
        pairs.push(PairConditions {
            p: a.pair.p.to_string(),
            q: a.pair.q.to_string(),
            k: a.ops.len(),
            invariant_interval: IntervalReport {
                lower: inv.lower,
                upper: inv.upper,
                upper_unconstrained: inv.upper_unconstrained,
                lower_unconstrained: inv.lower_unconstrained,
            },
            conditions: ConditionSummary::from(&a.conditions),
        });
    }
    Ok(Output {
        text: to_toml(&ConditionsReport {
            scenario: s.name.clone(),
            pairs,
        }),
        code: EXIT_OK,
    })
}

fn sweep(args: &SweepArgs) -> Result<Output, CliError> {
    let s = load_scenario(&args.file)?;
    let starts = parse_starts(&args.starts)?;
    let config = s.run.solver_config();
    let mut pairs = vec![];
    for pair in selected_pairs(&s, &args.pair)? {
        let ops = cycle_operators(&s.schedule, &pair, &s.curves)?;
        let runs: Vec<SweepRun> = starts
            .iter()
            .map(|&x0| {
                let r = find_equilibrium_ops(&ops, x0, &config);
                SweepRun {
                    x0,
                    status: r.status,
                    iterations: r.iterations,
                    u: r.u,
                }
            })
            .collect();
        let converged: Vec<&SweepRun> = runs.iter().filter(|r| r.status == Status::Converged).collect();
        let spread = converged.first().map_or(0.0, |first| {
            converged
                .iter()
                .flat_map(|r| r.u.iter().zip(&first.u).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max)
        });
        pairs.push(SweepPair {
            p: pair.p.to_string(),
            q: pair.q.to_string(),
            k: ops.len(),
            converged: converged.len(),
            spread,
            runs,
        });
    }
    let status = overall_status(pairs.iter().flat_map(|p| p.runs.iter().map(|r| &r.status)));
    Ok(Output {
        text: to_toml(&SweepReport {
            scenario: s.name.clone(),
            status,
            pairs,
        }),
        code: status_code(status),
    })
}
