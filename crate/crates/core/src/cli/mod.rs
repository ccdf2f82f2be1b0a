//! Command-line interface.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::CliError;

#[derive(Debug, Parser)]
#[command(name = "posbench", version, about = "Benchmark POS cloud APIs and report latency, throughput, errors and cost")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute a campaign and write raw results.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; raw results go to <out>/raw.
        #[arg(long)]
        out: Option<PathBuf>,
        /// 10 s ramp, 30 s steady state, one repetition per level.
        #[arg(long)]
        desk_scale: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build tables, figures and a summary from raw results.
    Report {
        #[arg(long, default_value = "posbench-out/raw")]
        raw: PathBuf,
        #[arg(long, default_value = "posbench-out/report")]
        out: PathBuf,
        #[arg(long)]
        pricing: Option<PathBuf>,
    },
    /// Run an emulated POS target over HTTP.
    Serve {
        /// Builtin profile name or profile JSON file.
        #[arg(long, default_value = "paper-gcp")]
        profile: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
    /// Price a usage file or raw results; CSV on stdout.
    Estimate {
        #[arg(long)]
        usage: Option<PathBuf>,
        #[arg(long)]
        raw: Option<PathBuf>,
        #[arg(long)]
        pricing: Option<PathBuf>,
    },
}

/// Runs a parsed command line. Output files are written; human text goes to
/// stdout.
pub async fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            out,
            desk_scale,
            seed,
        } => {
            let resolved = config::parse_config(&config)?;
            let outcome = commands::cmd_run(
                resolved,
                commands::RunOverrides {
                    desk_scale,
                    seed,
                    out_dir: out,
                },
            )
            .await?;
            println!("{} runs written to {}", outcome.manifest.runs.len(), outcome.raw_dir.display());
        }
        Command::Report { raw, out, pricing } => {
            let outcome = commands::cmd_report(&raw, &out, pricing.as_deref())?;
            print!("{}", outcome.summary);
            println!("report written to {} ({} warnings)", out.display(), outcome.warnings.len());
        }
        Command::Serve { profile, port } => {
            let token = std::env::var(config::DEFAULT_TOKEN_ENV).ok().filter(|t| !t.is_empty());
            let shutdown = async {
                let _ = tokio::signal::ctrl_c().await;
            };
            commands::cmd_serve(&profile, port, token, shutdown, |addr| {
                println!("serving profile {profile} on http://{addr}");
            })
            .await?;
        }
        Command::Estimate { usage, raw, pricing } => {
            commands::cmd_estimate(usage.as_deref(), raw.as_deref(), pricing.as_deref(), std::io::stdout().lock())?;
        }
    }
    Ok(())
}
