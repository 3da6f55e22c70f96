//! Command-line driver: parses a JSON [`RunConfig`], runs the requested
//! pipeline and writes artifacts plus a checksummed manifest.
//!
//! Exit codes: 0 pass, 1 fail, 2 configuration or runtime error, 3 inconclusive.

pub mod commands;
pub mod config;
pub mod manifest;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub use config::RunConfig;
pub use manifest::{OutputDir, RunManifest};

/// Exit code for configuration, domain and I/O errors.
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "lpmbrw", version, about = "Monte Carlo lab for last-progeny-modified branching random walks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the master seed of the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "LPMBRW_THREADS")]
    pub threads: Option<usize>,
    /// Output directory; defaults to the config's `output_dir`, then `lpmbrw-out`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Print θ₀, the speed, the regime and the limit constants.
    Analyze,
    /// Simulate trees and write snapshot CSVs with JSON sidecars.
    Simulate,
    /// Run the selected verification suites; the exit code is the verdict.
    Verify,
    /// Check the many-to-one identity.
    Many2one,
    /// Check the manifest of `--out` and print its report.
    Report,
}

fn load(cli: &Cli) -> anyhow::Result<RunConfig> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| anyhow::anyhow!("--config is required for this command"))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: Option<&RunConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output_dir.as_ref()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("lpmbrw-out"))
}

fn dispatch(cli: &Cli) -> anyhow::Result<i32> {
    if cli.command == Command::Report {
        let (md, code) = commands::cmd_report(&out_dir(cli, None))?;
        print!("{md}");
        return Ok(code);
    }
    let cfg = load(cli)?;
    let out = out_dir(cli, Some(&cfg));
    let out: &Path = &out;
    match cli.command {
        Command::Analyze => {
            let (a, code) = commands::cmd_analyze(&cfg, out)?;
            print!("{}", a.text());
            Ok(code)
        }
        Command::Simulate => commands::cmd_simulate(&cfg, out),
        Command::Verify | Command::Many2one => {
            let (report, code) = if cli.command == Command::Verify {
                commands::cmd_verify(&cfg, out)?
            } else {
                commands::cmd_many2one(&cfg, out)?
            };
            for (name, v) in report.verdicts() {
                println!("{name}: {v}");
            }
            println!("overall: {}", report.overall);
            Ok(code)
        }
        Command::Report => unreachable!(),
    }
}

/// Runs a parsed command line inside a pool of the requested size.
pub fn run(cli: &Cli) -> i32 {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        pool = pool.num_threads(t);
    }
    let result = pool
        .build()
        .map_err(anyhow::Error::from)
        .and_then(|p| p.install(|| dispatch(cli)));
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}

/// Parses `args` (program name first) and runs them.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let _ = e.print();
            e.exit_code()
        }
    }
}
