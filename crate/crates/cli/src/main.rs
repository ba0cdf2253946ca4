use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use polyharmonic::report::reports_to_csv;
use polyharmonic::suite::{builtin_listing, run_suite, CheckOutcome, FlowSpec, SuiteSpec};
use polyharmonic::Error;

/// Conservation-law checks for polyharmonic maps.
#[derive(Parser)]
#[command(name = "polyharm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(clap::Args)]
struct Common {
    /// Suite or flow description (JSON).
    #[arg(long, value_name = "FILE")]
    spec: PathBuf,
    /// Directory for output files; standard output when absent.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Overrides the seed in the spec.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate every check of a suite.
    Verify(Common),
    /// Evaluate a suite whose checks each carry at least three resolutions.
    Convergence(Common),
    /// Run the projected gradient flow and write the trajectory.
    Flow(Common),
    /// Evaluate the immersion checks of a suite.
    Hypersurface(Common),
    /// Print the registered maps, charts, immersions and backends.
    ListBuiltins,
}

enum Failure {
    Usage(String),
    Checks,
    Instability(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Instability(msg) => Failure::Instability(msg),
            other => Failure::Usage(other.to_string()),
        }
    }
}

fn read_spec(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, file: &str, body: &str) -> Result<(), Failure> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)
                .map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))?;
            let path = dir.join(file);
            fs::write(&path, body).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
        }
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn suite_output(
    outcomes: &[CheckOutcome],
    format: Format,
) -> Result<(String, &'static str), Failure> {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(outcomes)
                .map_err(|e| Failure::Usage(e.to_string()))?;
            s.push('\n');
            Ok((s, "report.json"))
        }
        Format::Csv => {
            let all: Vec<_> = outcomes
                .iter()
                .flat_map(|o| o.reports.iter().cloned())
                .collect();
            Ok((reports_to_csv(&all), "report.csv"))
        }
    }
}

fn run_suite_command(c: &Common, convergence: bool, immersions_only: bool) -> Result<(), Failure> {
    let mut suite = SuiteSpec::from_json(&read_spec(&c.spec)?)?;
    if let Some(seed) = c.seed {
        suite.seed = seed;
    }
    if immersions_only && suite.checks.iter().any(|ch| !ch.is_immersion()) {
        return Err(Failure::Usage(
            "every hypersurface check needs an immersion".into(),
        ));
    }
    let outcomes = run_suite(&suite, convergence)?;
    let default = if convergence {
        Format::Csv
    } else {
        Format::Json
    };
    let (body, file) = suite_output(&outcomes, c.format.unwrap_or(default))?;
    emit(c.out.as_deref(), file, &body)?;
    for o in &outcomes {
        for r in o.reports.iter().filter(|r| !r.passed()) {
            eprintln!("FAIL {}/{}", o.check, r.identity);
        }
    }
    if outcomes.iter().all(|o| o.passed()) {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn run_flow_command(c: &Common) -> Result<(), Failure> {
    let mut spec = FlowSpec::from_json(&read_spec(&c.spec)?)?;
    if let Some(seed) = c.seed {
        spec.seed = seed;
    }
    let traj = spec.run()?;
    let (body, file) = match c.format.unwrap_or(Format::Csv) {
        Format::Csv => (traj.to_csv(), "trajectory.csv"),
        Format::Json => {
            let v = serde_json::json!({
                "converged": traj.converged,
                "steps": traj.steps(),
                "records": traj.records,
            });
            (format!("{v:#}\n"), "trajectory.json")
        }
    };
    emit(c.out.as_deref(), file, &body)?;
    if traj.converged {
        Ok(())
    } else {
        eprintln!(
            "flow stopped after {} steps with tension {:.3e}",
            traj.steps(),
            traj.final_tension()
        );
        Err(Failure::Checks)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Verify(c) => run_suite_command(c, false, false),
        Command::Convergence(c) => run_suite_command(c, true, false),
        Command::Hypersurface(c) => run_suite_command(c, false, true),
        Command::Flow(c) => run_flow_command(c),
        Command::ListBuiltins => {
            println!("{:#}", builtin_listing());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Instability(msg)) => {
            eprintln!("instability: {msg}");
            ExitCode::from(3)
        }
    }
}
