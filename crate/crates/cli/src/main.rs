use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use airhmi_bench::{run_bench, Scenario};
use airhmi_core::stabilizer::ScreenGeometry;
use airhmi_core::synth::{self, TrajectoryScript};
use airhmi_net::{serve, spawn_client, ClientOptions, ServerConfig};
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "airhmi", version, about = "Touchless cursor: server, client, synthesizer and bench")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the recognition server until Ctrl-C.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Connect a virtual cursor to a running server.
    Client {
        /// e.g. ws://127.0.0.1:8765/cursor
        #[arg(long)]
        server: String,
        #[arg(long, default_value_t = 1920)]
        width: u32,
        #[arg(long, default_value_t = 1080)]
        height: u32,
        /// Write applied commands as JSONL.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Render a trajectory script into a frame recording.
    Synth {
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth labels as JSONL.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a bench scenario (bundled name or path) and print the report.
    Bench {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
}

#[tokio::main]
async fn main() -> Result<()> {
    init_logging();
    match Cli::parse().cmd {
        Cmd::Serve { config } => {
            let cfg = ServerConfig::load(&config)?;
            let server = serve(cfg).await?;
            eprintln!("listening on {}", server.local_addr());
            tokio::signal::ctrl_c().await?;
            let last = server.shutdown().await?;
            println!("{}", last.to_json_line());
        }
        Cmd::Client { server, width, height, log } => {
            let screen = ScreenGeometry::new(width, height)?;
            let mut opts = ClientOptions::new(server, screen);
            opts.log_path = log;
            opts.keep_log = false;
            let client = spawn_client(opts);
            tokio::signal::ctrl_c().await?;
            let report = client.shutdown().await?;
            println!("{}", serde_json::to_string(&report.status)?);
        }
        Cmd::Synth { script, out, labels, seed } => {
            let text = std::fs::read_to_string(&script).with_context(|| format!("reading {}", script.display()))?;
            let script = TrajectoryScript::from_json(&text)?;
            let stream = synth::generate(&script, seed)?;
            synth::record(&stream.frames, &out)?;
            if let Some(path) = labels {
                let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                synth::write_labels(&stream.labels, BufWriter::new(f))?;
            }
            eprintln!("{} frames, {} labels", stream.frames.len(), stream.labels.len());
        }
        Cmd::Bench { scenario, out } => {
            let sc = Scenario::load(&scenario)?;
            let report = run_bench(&sc).await?;
            let json = serde_json::to_string_pretty(&report)?;
            match out {
                Some(path) => std::fs::write(&path, &json).with_context(|| format!("writing {}", path.display()))?,
                None => println!("{json}"),
            }
            for c in &report.criteria {
                eprintln!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if !report.pass {
                bail!("scenario {} failed", report.scenario);
            }
        }
    }
    Ok(())
}
