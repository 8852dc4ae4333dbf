use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context as _;
use chatlearn_core::metrics::EventLog;
use chatlearn_core::persist::EVENTS_FILE;
use chatlearn_core::{ChatLearn, MetricsReport, SystemClock};
use chatlearn_service::config::ServiceConfig;
use chatlearn_service::{replay, server, Dispatcher, TranscriptScript};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "chatlearn", version, about = "Learning-oriented bilingual chat service")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the websocket service.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Replay a scripted transcript headlessly and write its artifacts.
    Replay {
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the metrics report of a session directory.
    Report {
        #[arg(long)]
        session: PathBuf,
        /// Emit JSON instead of the table.
        #[arg(long)]
        json: bool,
    },
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();

    match Cli::parse().command {
        Command::Serve { config } => serve(config),
        Command::Replay { script, out } => {
            let (script, mock) = TranscriptScript::load(&script)?;
            let output = replay(&script, mock)?;
            output.write(&out).with_context(|| format!("writing {}", out.display()))?;
            print!("{}", output.report.to_table());
            Ok(())
        }
        Command::Report { session, json } => {
            let path = session.join(EVENTS_FILE);
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let log = EventLog::from_jsonl(&text)?;
            let report = MetricsReport::from_events(log.events());
            if json {
                print!("{}", report.to_json());
            } else {
                print!("{}", report.to_table());
            }
            Ok(())
        }
    }
}

fn serve(path: PathBuf) -> anyhow::Result<()> {
    let config = ServiceConfig::load(&path)?;
    let gateway = config.provider.gateway()?;
    let engine = ChatLearn::open(Arc::new(gateway), Arc::new(SystemClock), &config.server.data_dir)
        .with_context(|| format!("opening {}", config.server.data_dir.display()))?;
    let dispatcher = Arc::new(Dispatcher::new(Arc::new(engine), config.session.clone()));
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&config.server.bind)
            .await
            .with_context(|| format!("binding {}", config.server.bind))?;
        tokio::select! {
            r = server::serve(listener, dispatcher) => r.context("server failed"),
            _ = tokio::signal::ctrl_c() => {
                tracing::info!("shutting down");
                Ok(())
            }
        }
    })
}
