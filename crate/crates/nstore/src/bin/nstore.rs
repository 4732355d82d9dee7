use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use nstore::config::{Config, Role};
use nstore::node::Node;
use nstore_core::domain::EntityId;
use nstore_core::persist::bdf::{self, BdfOptions};

#[derive(Parser)]
#[command(name = "nstore", version, about = "BCI recording store node")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a node until SIGINT or SIGTERM.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides node.role.
        #[arg(long)]
        role: Option<Role>,
        /// Overrides node.data_dir.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Write a finalized stream as a BDF file.
    ExportBdf {
        #[arg(long)]
        stream: EntityId,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "nstore-data")]
        data_dir: PathBuf,
        /// Leave a short last record short instead of padding it.
        #[arg(long)]
        no_pad: bool,
    },
    /// Audit a data directory offline. Exits 1 when a problem is found.
    Check {
        #[arg(long)]
        data_dir: PathBuf,
    },
    /// Print every configuration key with its default.
    Defaults,
}

fn init_logging(level: &str) {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .with_target(false)
        .try_init();
}

fn wait_for_signal() -> anyhow::Result<()> {
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
    rt.block_on(async {
        let mut term = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate())?;
        tokio::select! {
            r = tokio::signal::ctrl_c() => r,
            _ = term.recv() => Ok(()),
        }
    })?;
    Ok(())
}

fn serve(config: Option<PathBuf>, role: Option<Role>, data_dir: Option<PathBuf>) -> anyhow::Result<ExitCode> {
    let mut cfg = match Config::load(config.as_deref(), std::env::vars()) {
        Ok(c) => c,
        Err(e) => {
            init_logging("info");
            tracing::error!(code = e.code(), "{e}");
            return Ok(ExitCode::from(2));
        }
    };
    if let Some(r) = role {
        cfg.node.role = r;
    }
    if let Some(d) = data_dir {
        cfg.node.data_dir = d;
    }
    init_logging(&cfg.node.log);
    let node = match Node::start(&cfg) {
        Ok(n) => n,
        Err(e) => {
            tracing::error!(code = e.code(), "{e}");
            return Ok(ExitCode::FAILURE);
        }
    };
    wait_for_signal()?;
    tracing::info!("shutting down");
    node.shutdown();
    Ok(ExitCode::SUCCESS)
}

fn main() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Serve { config, role, data_dir } => serve(config, role, data_dir),
        Cmd::ExportBdf {
            stream,
            out,
            data_dir,
            no_pad,
        } => {
            init_logging("warn");
            let opts = BdfOptions {
                pad_last_record: !no_pad,
            };
            let summary = bdf::export_stream(&data_dir, stream, &out, &opts)
                .with_context(|| format!("exporting stream {stream}"))?;
            println!("{}", serde_json::to_string(&summary)?);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Check { data_dir } => {
            init_logging("warn");
            let report = nstore::check::check(&data_dir);
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(if report.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Cmd::Defaults => {
            print!("{}", Config::defaults_toml());
            Ok(ExitCode::SUCCESS)
        }
    }
}
