//! Command-line surface: `validate`, `run` and `analyze`.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::Error;
use crate::matrix::{run_matrix, ExperimentConfig, RemoteOverrides};
use crate::stats::{analyze, ReportOptions};

#[derive(Debug, Parser)]
#[command(name = "scopemem", version, about = "Memory-augmented multi-trajectory search experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check every cell of a config for admissibility.
    Validate { config: PathBuf },
    /// Run every cell and write verdict files plus a manifest.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Chat completions URL for every remote role.
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        model: Option<String>,
        /// Environment variable holding the bearer token.
        #[arg(long)]
        api_key_env: Option<String>,
    },
    /// Report accuracies, McNemar tests, BH flags and efficiency for a run directory.
    Analyze {
        dir: PathBuf,
        /// Baseline cell id; repeat for several groups.
        #[arg(long)]
        baseline: Vec<String>,
        #[arg(long, default_value_t = 0.05)]
        q: f64,
        /// Also write the machine-readable report here.
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        allow_unpaired: bool,
    },
}

/// Exit code for an error: 2 for configuration problems, 1 otherwise.
pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Config(_) | Error::Parse { .. } | Error::Inadmissible { .. } => 2,
        Error::Model(crate::error::ModelError::Script(_)) => 2,
        _ => 1,
    }
}

/// Executes a parsed command, writing human output to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<i32, Error> {
    match cli.command {
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let benchmarks = cfg.load_benchmarks()?;
            let mut all_ok = true;
            for cell in cfg.cells(&benchmarks)? {
                match cell.check() {
                    Ok(()) => {
                        let _ = writeln!(out, "OK      {}", cell.id);
                    }
                    Err(r) => {
                        all_ok = false;
                        let _ = writeln!(out, "REJECT  {}: {r} [{}]", cell.id, r.placeholder());
                    }
                }
            }
            Ok(if all_ok { 0 } else { 2 })
        }
        Command::Run {
            config,
            out: dir,
            seed,
            jobs,
            endpoint,
            model,
            api_key_env,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            cfg.apply_overrides(
                seed,
                &RemoteOverrides {
                    endpoint,
                    model,
                    api_key_env,
                },
            );
            let manifest = run_matrix(&cfg, &dir, jobs)?;
            for c in &manifest.cells {
                let status = match &c.error {
                    None => "ok".to_string(),
                    Some(e) => format!("FAILED: {e}"),
                };
                let _ = writeln!(out, "{:<28} {:>3} tasks  {status}", c.id, c.tasks);
            }
            let _ = writeln!(out, "manifest: {}", dir.join("manifest.json").display());
            Ok(if manifest.failed().next().is_some() { 1 } else { 0 })
        }
        Command::Analyze {
            dir,
            baseline,
            q,
            json,
            allow_unpaired,
        } => {
            let report = analyze(
                &dir,
                &ReportOptions {
                    baselines: baseline,
                    q,
                    allow_unpaired,
                    ..ReportOptions::default()
                },
            )?;
            let _ = out.write_all(report.to_text().as_bytes());
            if let Some(path) = json {
                std::fs::write(&path, report.to_json()).map_err(|e| Error::io(&path, e))?;
            }
            Ok(0)
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = write!(err, "{e}");
            return code;
        }
    };
    match execute(cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
