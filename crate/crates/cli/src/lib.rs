//! Command-line front end for constraint-qualification analysis.

pub mod analysis;
pub mod corpus;
pub mod problem;
pub mod report;
pub mod settings;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use analysis::{combine_exit_codes, run_problem, Command, EXIT_NEGATIVE, EXIT_OK, EXIT_USAGE};
use problem::Problem;
use report::{to_machine, to_text, Format};
use settings::{parse_schedule, Flags};

/// Usage and input errors; all of them exit with 64.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{origin}:{line}:{column}: {message}")]
    Parse {
        origin: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{origin}: invalid `{field}`: {message}")]
    Invalid {
        origin: String,
        field: String,
        message: String,
    },
}

#[derive(Debug, Parser)]
#[command(
    name = "cq-analyzer",
    version,
    about = "Checks constraint qualifications at a point"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Relative singular-value cut for numerical rank.
    #[arg(long, global = true)]
    pub tol_rank: Option<f64>,
    /// Threshold below which an inequality counts as active.
    #[arg(long, global = true)]
    pub tol_active: Option<f64>,
    /// Seed for neighbourhood sampling.
    #[arg(long, global = true, env = "CQ_ANALYZER_SEED")]
    pub seed: Option<u64>,
    /// Sampling radii, `start:end:xFACTOR` or a comma list.
    #[arg(long, global = true)]
    pub radii: Option<String>,
    /// Samples drawn per radius.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Step lengths used when probing tangent directions.
    #[arg(long, global = true)]
    pub t_schedule: Option<String>,
    /// Largest acceptable |r(t)|/t at the smallest step.
    #[arg(long, global = true)]
    pub ratio_tol: Option<f64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Run every applicable analysis.
    Analyze { file: PathBuf },
    /// Relaxed constant rank check on the active gradients.
    Rcrcq { file: PathBuf },
    /// Compare the linearized cone with the tangent cone.
    Abadie { file: PathBuf },
    /// Lagrange multipliers and the linearized primal value.
    Multipliers { file: PathBuf },
    /// Functional dependence of the function family near the point.
    Dependence { file: PathBuf },
    /// Bundled example problems.
    Corpus {
        #[command(subcommand)]
        action: CorpusAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum CorpusAction {
    List,
    /// Analyze bundled problems and compare with their golden outcomes.
    Run {
        #[arg(default_value = "all")]
        name: String,
    },
}

impl GlobalArgs {
    pub fn flags(&self) -> Result<Flags, CliError> {
        let schedule = |s: &Option<String>, what: &str| {
            s.as_deref()
                .map(|v| parse_schedule(v).map_err(|e| CliError::Usage(format!("--{what}: {e}"))))
                .transpose()
        };
        Ok(Flags {
            tol_rank: self.tol_rank,
            tol_active: self.tol_active,
            seed: self.seed,
            radii: schedule(&self.radii, "radii")?,
            samples: self.samples,
            t_schedule: schedule(&self.t_schedule, "t-schedule")?,
            ratio_tol: self.ratio_tol,
        })
    }
}

/// What the process prints and returns.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub exit_code: i32,
    pub stdout: String,
    pub stderr: String,
}

#[derive(Serialize)]
struct CorpusDocument {
    report_version: u32,
    tool: &'static str,
    tool_version: &'static str,
    command: &'static str,
    all_golden_matched: bool,
    cases: Vec<corpus::CaseOutcome>,
    exit_code: i32,
}

fn render(format: Format, report: &analysis::RunReport) -> String {
    match format {
        Format::Text => to_text(report),
        Format::Machine => to_machine(report),
    }
}

fn run_corpus(action: &CorpusAction, flags: &Flags, format: Format) -> Result<Outcome, CliError> {
    match action {
        CorpusAction::List => {
            let mut out = String::new();
            for (name, _) in corpus::CASES {
                let p = corpus::load(name)?;
                let description = p.file.description.unwrap_or_default();
                out.push_str(&format!("{name:<24} {description}\n"));
            }
            Ok(Outcome {
                exit_code: EXIT_OK,
                stdout: out,
                stderr: String::new(),
            })
        }
        CorpusAction::Run { name } => {
            let names: Vec<&str> = if name == "all" {
                corpus::names().collect()
            } else {
                vec![name.as_str()]
            };
            let cases = names
                .iter()
                .map(|n| corpus::run_case(n, flags))
                .collect::<Result<Vec<_>, _>>()?;
            let matched = cases.iter().all(|c| c.golden_matched);
            let exit_code = if matched { EXIT_OK } else { EXIT_NEGATIVE };
            let stdout = match format {
                Format::Machine => to_machine(&CorpusDocument {
                    report_version: 1,
                    tool: "cq-analyzer",
                    tool_version: env!("CARGO_PKG_VERSION"),
                    command: "corpus run",
                    all_golden_matched: matched,
                    cases,
                    exit_code,
                }),
                Format::Text => {
                    let mut s = String::new();
                    for c in &cases {
                        let status = if c.golden_matched { "ok" } else { "MISMATCH" };
                        s.push_str(&format!(
                            "{:<24} exit {}  {status}\n",
                            c.name, c.report.exit_code
                        ));
                        for line in &c.report.summary {
                            s.push_str(&format!("    {line}\n"));
                        }
                        for m in &c.mismatches {
                            s.push_str(&format!("    mismatch: {m}\n"));
                        }
                    }
                    let ok = cases.iter().filter(|c| c.golden_matched).count();
                    s.push_str(&format!("{ok}/{} golden outcomes matched\n", cases.len()));
                    s
                }
            };
            Ok(Outcome {
                exit_code,
                stdout,
                stderr: String::new(),
            })
        }
    }
}

fn dispatch(cli: &Cli) -> Result<Outcome, CliError> {
    let flags = cli.global.flags()?;
    let format = cli.global.format;
    let (command, file) = match &cli.command {
        CliCommand::Analyze { file } => (Command::Analyze, file),
        CliCommand::Rcrcq { file } => (Command::Rcrcq, file),
        CliCommand::Abadie { file } => (Command::Abadie, file),
        CliCommand::Multipliers { file } => (Command::Multipliers, file),
        CliCommand::Dependence { file } => (Command::Dependence, file),
        CliCommand::Corpus { action } => return run_corpus(action, &flags, format),
    };
    let problem = Problem::load(file)?;
    let report = run_problem(&problem, command, &flags)?;
    let stderr = report
        .errors
        .iter()
        .map(|e| format!("error in {}: {}\n", e.section, e.message))
        .collect();
    Ok(Outcome {
        exit_code: combine_exit_codes([report.exit_code]),
        stdout: render(format, &report),
        stderr,
    })
}

/// Parses arguments and runs; never panics on bad input.
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let exit_code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let (stdout, stderr) = if e.use_stderr() {
                (String::new(), text)
            } else {
                (text, String::new())
            };
            return Outcome {
                exit_code,
                stdout,
                stderr,
            };
        }
    };
    match dispatch(&cli) {
        Ok(o) => o,
        Err(e) => Outcome {
            exit_code: EXIT_USAGE,
            stdout: String::new(),
            stderr: format!("cq-analyzer: {e}\n"),
        },
    }
}
