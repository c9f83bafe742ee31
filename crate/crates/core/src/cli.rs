//! Command-line front end: argument parsing, file IO and exit codes.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};

use crate::problem::{run_problem_json, Command, Overrides, ProblemError, EXIT_INPUT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CliCommand {
    Validate,
    CheckPositivity,
    Decompose,
    Represent,
    Bounds,
    Lift,
    Factorize,
    All,
}

impl From<CliCommand> for Command {
    fn from(c: CliCommand) -> Self {
        match c {
            CliCommand::Validate => Command::Validate,
            CliCommand::CheckPositivity => Command::CheckPositivity,
            CliCommand::Decompose => Command::Decompose,
            CliCommand::Represent => Command::Represent,
            CliCommand::Bounds => Command::Bounds,
            CliCommand::Lift => Command::Lift,
            CliCommand::Factorize => Command::Factorize,
            CliCommand::All => Command::All,
        }
    }
}

/// Positivity, dilation and lifting checks for kernels with values in an ordered *-space.
///
/// Exit codes: 0 pass, 1 property violated, 2 undetermined, 3 input error.
#[derive(Debug, Parser)]
#[command(name = "wpsd", version)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: CliCommand,
    /// Problem file (JSON).
    pub problem: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for the randomised searches.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Restarts for the randomised searches.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Report tolerance for pass/fail of defects.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Omit the timestamp and timings so reports are byte-reproducible.
    #[arg(long)]
    pub no_timestamp: bool,
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let res = std::fs::write(&tmp, contents).and_then(|()| std::fs::rename(&tmp, path));
    if res.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    res
}

/// Runs the CLI and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("wpsd: {e}");
            EXIT_INPUT
        }
    }
}

fn execute(cli: &Cli) -> Result<i32, ProblemError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| ProblemError::Io { path, source }
    };
    if let Some(t) = cli.tol {
        if !(t.is_finite() && t >= 0.0) {
            return Err(ProblemError::Schema(format!("--tol must be a finite non-negative number, got {t}")));
        }
    }
    let text = std::fs::read_to_string(&cli.problem).map_err(io(&cli.problem))?;
    let overrides =
        Overrides { seed: cli.seed, restarts: cli.restarts, report_tol: cli.tol, timestamp: !cli.no_timestamp };
    let report = run_problem_json(&text, cli.command.into(), &overrides)?;
    let json = report.to_json();
    match &cli.out {
        Some(path) => write_atomic(path, &json).map_err(io(path))?,
        None => std::io::stdout().write_all(json.as_bytes()).map_err(io(Path::new("<stdout>")))?,
    }
    Ok(report.exit_code)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flags() {
        let cli = Cli::try_parse_from([
            "wpsd",
            "check-positivity",
            "p.json",
            "--seed",
            "7",
            "--restarts",
            "9",
            "--tol",
            "1e-6",
            "--no-timestamp",
        ])
        .unwrap();
        assert_eq!(cli.command, CliCommand::CheckPositivity);
        assert_eq!((cli.seed, cli.restarts, cli.tol), (Some(7), Some(9), Some(1e-6)));
        assert!(cli.no_timestamp);
        assert!(Cli::try_parse_from(["wpsd", "frobnicate", "p.json"]).is_err());
    }

    #[test]
    fn missing_file_is_input_error() {
        let cli = Cli::try_parse_from(["wpsd", "validate", "/nonexistent/problem.json"]).unwrap();
        assert_eq!(run(&cli), EXIT_INPUT);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        write_atomic(&p, "a").unwrap();
        write_atomic(&p, "b").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "b");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
