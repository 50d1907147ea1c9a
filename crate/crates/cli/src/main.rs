//! Operator front end. Every command except `serve` and `synth-data` is a
//! thin client of the HTTP service; by default one is spawned inside this
//! process, so the tool works standalone while staying honest about the
//! service boundary.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use twinguard_client::{Client, ClientError};
use twinguard_core::config::AppConfig;
use twinguard_core::detector::MetricsSnapshot;
use twinguard_core::synth::{mini_d1_csv, mini_d2_csv};

#[derive(Parser)]
#[command(name = "twinguard", version, about = "DDoS detection on digital router twins")]
struct Cli {
    /// TOML config file; built-in defaults plus TWINGUARD_* env overrides
    /// apply either way.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; every stage derives its own stream from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Cap on rows loaded from each source CSV.
    #[arg(long, global = true)]
    row_cap: Option<usize>,

    /// Score verdicts against replay ground truth instead of pseudo-labels.
    #[arg(long, global = true)]
    ground_truth_metrics: bool,

    /// Directory all artifacts land in, with stable file names.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Base URL of a running service; spawns one in-process when absent.
    #[arg(long, global = true)]
    server: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rebalance the two source CSVs and merge them into one training set.
    Prepare,
    /// Replay an attack schedule against a router twin and detect it live.
    Run,
    /// Race the feature-selection candidates across seeds.
    AutofsBench {
        /// Number of independent selection runs.
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Rebuild plot-ready CSVs from a finished run directory.
    Report {
        /// Defaults to the configured output directory.
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
    /// Run the HTTP service in the foreground.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7700")]
        addr: String,
    },
    /// Write synthetic source CSVs shaped like the two telemetry exports.
    SynthData {
        #[arg(long, default_value_t = 4000)]
        d1_ddos: usize,
        #[arg(long, default_value_t = 300)]
        d1_benign: usize,
        #[arg(long, default_value_t = 1200)]
        d2_ddos: usize,
        #[arg(long, default_value_t = 400)]
        d2_benign: usize,
    },
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> CliError {
        CliError { code: 2, message: message.into() }
    }

    fn runtime(message: impl Into<String>) -> CliError {
        CliError { code: 4, message: message.into() }
    }
}

impl From<twinguard_core::config::ConfigError> for CliError {
    fn from(e: twinguard_core::config::ConfigError) -> CliError {
        CliError::config(e.to_string())
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> CliError {
        CliError { code: e.exit_code() as u8, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();

    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let mut cfg = AppConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(cap) = cli.row_cap {
        cfg.prepare.row_cap = Some(cap);
    }
    if cli.ground_truth_metrics {
        cfg.run.ground_truth_metrics = true;
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }

    match cli.command {
        Command::Serve { addr } => serve_foreground(&addr),
        Command::SynthData { d1_ddos, d1_benign, d2_ddos, d2_benign } => {
            write_synth(&cfg, d1_ddos, d1_benign, d2_ddos, d2_benign)
        }
        Command::Prepare => {
            let client = connect(cli.server.as_deref())?;
            let outcome = client.prepare(&cfg)?;
            println!("prepared dataset: {}", outcome.dataset.display());
            println!(
                "rows: {} ({} ddos / {} benign), imbalance ratio {:.3}",
                outcome.stats.merged.rows,
                outcome.stats.merged.ddos,
                outcome.stats.merged.not_ddos,
                outcome.stats.imbalance_ratio,
            );
            Ok(())
        }
        Command::Run => {
            let client = connect(cli.server.as_deref())?;
            let report = client.run(&cfg)?;
            println!(
                "run complete: {} verdicts over {} ticks on twin {}",
                report.verdict_count, report.ticks, report.router
            );
            println!(
                "model version {} -> {}, {} alarm(s), {} retrain trigger(s)",
                report.initial_model_version,
                report.final_model_version,
                report.alarms.len(),
                report.triggers.len(),
            );
            if let Some(m) = &report.final_metrics {
                println!(
                    "final metrics: accuracy {:.4}, precision {:.4}, recall {:.4}, f-measure {:.4}",
                    m.accuracy, m.precision, m.recall, m.f_measure
                );
            }
            for point in report.metrics_series.iter().rev().take(1) {
                if let MetricsSnapshot::Insufficient { have, need } = point.snapshot {
                    println!("last evaluation window was short: {have}/{need} verdicts");
                }
            }
            println!("artifacts under {}", cfg.out.display());
            Ok(())
        }
        Command::AutofsBench { seeds } => {
            if let Some(s) = seeds {
                cfg.bench.seeds = s;
            }
            let client = connect(cli.server.as_deref())?;
            let outcome = client.bench(&cfg)?;
            print!("{}", winner_summary(&outcome.csv));
            println!("comparison table: {}", outcome.path.display());
            Ok(())
        }
        Command::Report { run_dir } => {
            let dir = run_dir.unwrap_or_else(|| cfg.out.clone());
            let client = connect(cli.server.as_deref())?;
            let plot = client.report(&dir)?;
            println!("detection rate:    {}", plot.detection_rate.display());
            println!("method comparison: {}", plot.method_comparison.display());
            Ok(())
        }
    }
}

/// Starts an in-process service unless the user pointed at a remote one.
fn connect(server: Option<&str>) -> Result<Client, CliError> {
    let base = match server {
        Some(url) => url.to_string(),
        None => {
            let addr = twinguard_service::spawn_in_process()
                .map_err(|e| CliError::runtime(format!("starting embedded service: {e}")))?;
            format!("http://{addr}")
        }
    };
    let client = Client::new(&base);
    client.health()?;
    Ok(client)
}

fn serve_foreground(addr: &str) -> Result<(), CliError> {
    let addr: std::net::SocketAddr = addr
        .parse()
        .map_err(|e| CliError::config(format!("bad listen address `{addr}`: {e}")))?;
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        println!("listening on http://{}", listener.local_addr()?);
        let state = std::sync::Arc::new(twinguard_service::ServiceState::new());
        twinguard_service::serve(listener, state).await
    })?;
    Ok(())
}

fn write_synth(
    cfg: &AppConfig,
    d1_ddos: usize,
    d1_benign: usize,
    d2_ddos: usize,
    d2_benign: usize,
) -> Result<(), CliError> {
    for (path, body) in [
        (&cfg.prepare.d1, mini_d1_csv(d1_ddos, d1_benign, cfg.seed)),
        (&cfg.prepare.d2, mini_d2_csv(d2_ddos, d2_benign, cfg.seed.wrapping_add(1))),
    ] {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        std::fs::write(path, body)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// Winner counts per method from the bench table.
fn winner_summary(csv: &str) -> String {
    let mut counts: Vec<(String, usize)> = Vec::new();
    for line in csv.lines().skip(1) {
        let mut fields = line.split(',');
        let method = fields.nth(1).unwrap_or_default();
        let winner = fields.last().unwrap_or_default() == "true";
        if winner {
            match counts.iter_mut().find(|(m, _)| m == method) {
                Some((_, n)) => *n += 1,
                None => counts.push((method.to_string(), 1)),
            }
        }
    }
    counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut out = String::new();
    for (method, n) in counts {
        out.push_str(&format!("{method}: won {n} seed(s)\n"));
    }
    out
}
