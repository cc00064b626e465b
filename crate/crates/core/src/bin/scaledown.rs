//! Batch front end: prepare -> train -> sweep -> report, plus an embedded
//! self-verification command. Exit codes: 0 success, 1 usage/config error,
//! 2 job failure, 3 verification failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use scaledown_core::cli;
use scaledown_core::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "scaledown",
    about = "Codec-in-the-loop workbench for learned video downsampling",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the worker pool size.
    #[arg(long)]
    jobs: Option<usize>,
    /// Print the fully resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Extract training patches and write the dataset manifest.
    Prepare(Common),
    /// Train one checkpoint per grid cell (resumable).
    Train(Common),
    /// Run the rate-distortion sweep grid to a CSV.
    Sweep(Common),
    /// Build hulls, BD-BR tables and curve files from sweep results.
    Report(Common),
    /// Run the embedded property suites (hermetic, toy backend only).
    Verify(Common),
}

const EXIT_CONFIG: u8 = 1;
const EXIT_JOB: u8 = 2;
const EXIT_VERIFY: u8 = 3;

fn resolve_config(common: &Common, required: bool) -> Result<RunConfig, u8> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path).map_err(|e| {
            eprintln!("error: {e}");
            EXIT_CONFIG
        })?,
        None if required => {
            eprintln!("error: --config is required for this command");
            return Err(EXIT_CONFIG);
        }
        None => RunConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = common.jobs {
        cfg.jobs = jobs;
    }
    if common.print_config {
        print!("{}", cfg.to_toml());
        return Err(0);
    }
    Ok(cfg)
}

fn config_error(e: scaledown_core::Error) -> u8 {
    eprintln!("error: {e}");
    match e {
        scaledown_core::Error::Config(_) | scaledown_core::Error::Io { .. } => EXIT_CONFIG,
        _ => EXIT_JOB,
    }
}

fn run() -> u8 {
    let cli = Cli::parse();
    match cli.command {
        Command::Prepare(common) => {
            let cfg = match resolve_config(&common, true) {
                Ok(c) => c,
                Err(code) => return code,
            };
            match cli::cmd_prepare(&cfg) {
                Ok(manifest) => {
                    println!(
                        "prepared {} training and {} holdout patches of {}px from {} source(s)",
                        manifest.train_count,
                        manifest.holdout_count,
                        manifest.patch_size,
                        manifest.sources.len()
                    );
                    println!("manifest: {}", cli::manifest_path(&cfg).display());
                    0
                }
                Err(e) => config_error(e),
            }
        }
        Command::Train(common) => {
            let cfg = match resolve_config(&common, true) {
                Ok(c) => c,
                Err(code) => return code,
            };
            match cli::cmd_train(&cfg) {
                Ok(summary) => {
                    for s in &summary.skipped {
                        println!("skipped {s} (checkpoint exists)");
                    }
                    for s in &summary.trained {
                        println!("trained {s}");
                    }
                    for (s, e) in &summary.failed {
                        eprintln!("FAILED {s}: {e}");
                    }
                    if summary.failed.is_empty() {
                        0
                    } else {
                        EXIT_JOB
                    }
                }
                Err(e) => config_error(e),
            }
        }
        Command::Sweep(common) => {
            let cfg = match resolve_config(&common, true) {
                Ok(c) => c,
                Err(code) => return code,
            };
            match cli::cmd_sweep(&cfg) {
                Ok(summary) => {
                    println!(
                        "wrote {} rate-distortion points to {}",
                        summary.rows,
                        summary.csv_path.display()
                    );
                    for (label, e) in &summary.failures {
                        eprintln!("point failed: {label}: {e}");
                    }
                    if summary.rows == 0 && !summary.failures.is_empty() {
                        EXIT_JOB
                    } else {
                        0
                    }
                }
                Err(e) => config_error(e),
            }
        }
        Command::Report(common) => {
            let cfg = match resolve_config(&common, true) {
                Ok(c) => c,
                Err(code) => return code,
            };
            match cli::cmd_report(&cfg) {
                Ok(summary) => {
                    print!("{}", summary.table_text);
                    println!(
                        "wrote {} and {} curve file(s)",
                        summary.bd_csv_path.display(),
                        summary.curves
                    );
                    0
                }
                Err(e) => config_error(e),
            }
        }
        Command::Verify(common) => {
            // config is optional here; the suites are hermetic
            if let Err(code) = resolve_config(&common, false) {
                return code;
            }
            match cli::cmd_verify() {
                Ok(results) => {
                    let mut failed = false;
                    for r in &results {
                        println!(
                            "[{}] {} ({:.2}s) {}",
                            if r.passed { "PASS" } else { "FAIL" },
                            r.name,
                            r.seconds,
                            r.detail
                        );
                        failed |= !r.passed;
                    }
                    if failed {
                        EXIT_VERIFY
                    } else {
                        println!("all suites passed");
                        0
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_VERIFY
                }
            }
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(run())
}
