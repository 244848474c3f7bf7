mod config;

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread;

use anyhow::{Context, Result};
use binlabel_api::{CreateSessionRequest, DatasetSource, LabelMap};
use binlabel_client::{Client, RemoteBackend};
use binlabel_core::metrics::emit_report;
use binlabel_core::oracle_sim::{drive, make_synthetic, LocalBackend, SimulationOutcome};
use binlabel_core::Dataset;
use binlabel_service::ServiceConfig;
use clap::{Parser, Subcommand};
use serde::Serialize;
use tokio::sync::oneshot;

use config::{resolve_data_path, ConfigArgs};

const DATA_DIR_ENV: &str = "BINLABEL_DATA_DIR";
const SERVER_ENV: &str = "BINLABEL_SERVER";

#[derive(Debug, Parser)]
#[command(name = "binlabel", version, about = "Real-time data labelling with one-vs-all binary heads")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the HTTP/JSON labelling service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Base directory for relative dataset paths.
        #[arg(long, env = DATA_DIR_ENV)]
        data_dir: Option<PathBuf>,
    },
    /// Run a full session against ground-truth labels and write the report CSVs.
    Simulate {
        /// Fully labelled JSONL dataset.
        #[arg(long)]
        data: PathBuf,
        /// Report path. The series go next to it as `<stem>.iterations.csv`
        /// and `<stem>.training.csv`.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        session: ConfigArgs,
        /// Service to run against. Without it an embedded service is started.
        #[arg(long, env = SERVER_ENV)]
        server: Option<String>,
        /// Drive the engine directly instead of over HTTP.
        #[arg(long, conflicts_with = "server")]
        in_process: bool,
        #[arg(long, env = DATA_DIR_ENV)]
        data_dir: Option<PathBuf>,
    },
    /// Write a labelled Gaussian-cluster dataset as JSONL.
    MakeSynthetic {
        #[arg(long)]
        classes: usize,
        #[arg(long)]
        per_class: usize,
        #[arg(long)]
        dim: usize,
        /// Minimum distance between cluster centres, in within-cluster standard deviations.
        #[arg(long, default_value_t = 8.0)]
        separation: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Talk to a running service.
    Session {
        #[arg(long, env = SERVER_ENV, default_value = "http://127.0.0.1:8080")]
        server: String,
        #[command(subcommand)]
        action: SessionAction,
    },
}

#[derive(Debug, Subcommand)]
enum SessionAction {
    /// Open a session; prints the id and the bootstrap request.
    Create {
        /// Dataset path as seen by the server.
        #[arg(long)]
        data: String,
        /// Send the file contents instead of the path.
        #[arg(long)]
        upload: bool,
        #[command(flatten)]
        session: ConfigArgs,
        #[arg(long)]
        async_training: bool,
    },
    List,
    Status { id: String },
    /// Submit labels from a JSON object of id -> class (`-` reads stdin).
    Label { id: String, file: PathBuf },
    Batch { id: String },
    Metrics { id: String },
    Report { id: String },
    AddClass { id: String, label: String },
    /// Show a sample's thumbnail URL and user label.
    Sample { id: String, sample_id: String },
    Snapshot {
        id: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Delete { id: String },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let default_level = if matches!(cli.command, Command::Serve { .. }) { "info" } else { "warn" };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default_level)),
        )
        .with_writer(io::stderr)
        .init();

    match cli.command {
        Command::Serve { port, host, data_dir } => serve(&host, port, data_dir),
        Command::Simulate {
            data,
            out,
            session,
            server,
            in_process,
            data_dir,
        } => simulate(&resolve_data_path(&data, data_dir.as_deref()), &out, &session, server, in_process),
        Command::MakeSynthetic {
            classes,
            per_class,
            dim,
            separation,
            seed,
            out,
        } => {
            let ds = make_synthetic(classes, per_class, dim, separation, seed)?;
            ds.save(&out).with_context(|| format!("writing {}", out.display()))?;
            println!("{}: {} samples, {} classes, dim {}", out.display(), ds.len(), ds.classes().len(), ds.dim());
            Ok(())
        }
        Command::Session { server, action } => session(&Client::new(server)?, action),
    }
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn serve(host: &str, port: u16, data_dir: Option<PathBuf>) -> Result<()> {
    let config = ServiceConfig {
        data_dir,
        ..ServiceConfig::default()
    };
    runtime()?.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .with_context(|| format!("binding {host}:{port}"))?;
        binlabel_service::serve(listener, config, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok(())
    })
}

/// A service on an ephemeral local port, stopped on drop.
struct EmbeddedService {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<thread::JoinHandle<Result<()>>>,
}

impl EmbeddedService {
    fn start() -> Result<Self> {
        let rt = runtime()?;
        let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))?;
        let addr = listener.local_addr()?;
        let (stop, stopped) = oneshot::channel::<()>();
        let thread = thread::spawn(move || {
            rt.block_on(binlabel_service::serve(listener, ServiceConfig::default(), async {
                let _ = stopped.await;
            }))?;
            Ok(())
        });
        Ok(Self {
            addr,
            stop: Some(stop),
            thread: Some(thread),
        })
    }
}

impl Drop for EmbeddedService {
    fn drop(&mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}

fn simulate(data: &Path, out: &Path, args: &ConfigArgs, server: Option<String>, in_process: bool) -> Result<()> {
    let config = args.resolve()?;
    let dataset = Arc::new(Dataset::load(data).with_context(|| format!("loading {}", data.display()))?);
    let outcome: SimulationOutcome = if in_process {
        drive(&mut LocalBackend::new(dataset.clone(), config), &dataset)?
    } else {
        let embedded = match server {
            Some(_) => None,
            None => Some(EmbeddedService::start()?),
        };
        let base = server.unwrap_or_else(|| format!("http://{}", embedded.as_ref().unwrap().addr));
        let jsonl = fs::read_to_string(data)?;
        let request = CreateSessionRequest {
            dataset: DatasetSource::inline(dataset.name(), jsonl),
            config,
            async_training: false,
        };
        let mut backend = RemoteBackend::new(Client::new(base)?, request);
        let outcome = drive(&mut backend, &dataset)?;
        if let Some(id) = backend.session_id() {
            // Best effort; the embedded service goes away anyway.
            let _ = backend.client().delete_session(id);
        }
        outcome
    };
    let files = emit_report(&outcome.report, out)?;
    let report = &outcome.report;
    println!(
        "{}: {} samples, {} classes, model contribution {:.2}%, training {:.2} min, total {:.2} min",
        report.dataset_name,
        report.sample_count,
        report.class_count,
        report.model_contribution_percent,
        report.training_minutes,
        report.total_minutes
    );
    for path in [&files.report, &files.iterations, &files.training] {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn read_labels(file: &Path) -> Result<LabelMap> {
    let text = if file == Path::new("-") {
        let mut text = String::new();
        io::stdin().read_to_string(&mut text)?;
        text
    } else {
        fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?
    };
    let labels: BTreeMap<String, String> = serde_json::from_str(&text).context("labels must be a JSON object of id -> class")?;
    Ok(labels)
}

fn session(client: &Client, action: SessionAction) -> Result<()> {
    match action {
        SessionAction::Create {
            data,
            upload,
            session,
            async_training,
        } => {
            let dataset = if upload {
                let path = Path::new(&data);
                let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("upload").to_string();
                DatasetSource::inline(name, fs::read_to_string(path).with_context(|| format!("reading {data}"))?)
            } else {
                DatasetSource::path(data)
            };
            let request = CreateSessionRequest {
                dataset,
                config: session.resolve()?,
                async_training,
            };
            print_json(&client.create_session(&request)?)
        }
        SessionAction::List => print_json(&client.list_sessions()?),
        SessionAction::Status { id } => print_json(&client.status(&id)?),
        SessionAction::Label { id, file } => print_json(&client.submit_labels(&id, &read_labels(&file)?)?),
        SessionAction::Batch { id } => print_json(&client.next_batch(&id)?),
        SessionAction::Metrics { id } => print_json(&client.metrics(&id)?),
        SessionAction::Report { id } => print_json(&client.final_report(&id)?),
        SessionAction::AddClass { id, label } => print_json(&client.add_class(&id, &label)?),
        SessionAction::Sample { id, sample_id } => print_json(&client.sample(&id, &sample_id)?),
        SessionAction::Snapshot { id, out } => {
            let snapshot = client.snapshot(&id)?;
            match out {
                Some(path) => {
                    fs::write(&path, serde_json::to_vec_pretty(&snapshot)?)?;
                    println!("wrote {}", path.display());
                    Ok(())
                }
                None => print_json(&snapshot),
            }
        }
        SessionAction::Delete { id } => {
            client.delete_session(&id)?;
            Ok(())
        }
    }
}
