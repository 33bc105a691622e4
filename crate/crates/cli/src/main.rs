use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Result;
use carenet_cli::{commands, serve, AppState, Ctx, Format};
use carenet_core::clock::DEFAULT_DELTA_SECS;
use carenet_core::pipeline::{DataDir, DatasetManifest};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "carenet", version, about = "Router-side behavioral indicator pipeline")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Data directory holding partitions, features, scores and the registry.
    #[arg(long, global = true, env = "CARENET_DATA_DIR", default_value = "carenet-data")]
    data: PathBuf,
    /// Parameter file to use instead of the data directory's active config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Local timezone of a dataset, fixed at first ingest.
    #[arg(long, global = true, env = "CARENET_TZ", default_value = "UTC")]
    tz: String,
    #[arg(long, global = true, value_enum, default_value = "json")]
    format: Format,
    /// Log filter level: error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    log: tracing::Level,
}

#[derive(Subcommand)]
enum Command {
    /// Parse captures into window partitions and per-day summaries.
    Ingest {
        #[arg(required = true)]
        captures: Vec<PathBuf>,
        #[arg(long)]
        dataset: String,
        /// Window length in seconds, fixed at first ingest.
        #[arg(long, default_value_t = DEFAULT_DELTA_SECS)]
        delta: u32,
    },
    /// Compute daily feature vectors from stored summaries.
    Features {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        from: Option<NaiveDate>,
        #[arg(long)]
        to: Option<NaiveDate>,
    },
    /// Score stored features into criterion likelihoods and gate states.
    Score {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        from: Option<NaiveDate>,
        #[arg(long)]
        to: Option<NaiveDate>,
    },
    /// Show gate presence and the episode flag on one day.
    Gate {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        as_of: NaiveDate,
        #[arg(long)]
        user: Option<String>,
    },
    /// Generate a synthetic capture with its expected-feature ledger.
    Simulate {
        /// Scenario file, or the name of a bundled scenario.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Ingest (when captures are given), then features and scoring.
    Run {
        captures: Vec<PathBuf>,
        #[arg(long)]
        dataset: String,
        #[arg(long, default_value_t = DEFAULT_DELTA_SECS)]
        delta: u32,
        #[arg(long)]
        from: Option<NaiveDate>,
        #[arg(long)]
        to: Option<NaiveDate>,
    },
    /// Serve the JSON API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Dataset served when a request does not name one.
        #[arg(long)]
        dataset: Option<String>,
        /// Require `Authorization: Bearer <token>` on every request.
        #[arg(long, env = "CARENET_TOKEN")]
        token: Option<String>,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_max_level(cli.common.log)
        .with_writer(std::io::stderr)
        .init();

    let data = DataDir::new(&cli.common.data);
    let manifest = |dataset: &str, delta: u32| DatasetManifest {
        dataset: dataset.to_string(),
        timezone: cli.common.tz.clone(),
        delta_secs: delta,
    };

    if let Command::Serve { addr, dataset, token } = &cli.command {
        let state = Arc::new(AppState::open(data, dataset.clone(), token.clone())?);
        let rt = tokio::runtime::Runtime::new()?;
        return rt.block_on(serve(addr, state));
    }

    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    let mut ctx = Ctx {
        data,
        config: cli.common.config.clone(),
        format: cli.common.format,
        out: &mut lock,
    };
    match &cli.command {
        Command::Ingest { captures, dataset, delta } => {
            commands::ingest(&mut ctx, &manifest(dataset, *delta), captures)
        }
        Command::Features { dataset, from, to } => commands::features(&mut ctx, dataset, *from, *to),
        Command::Score { dataset, from, to } => commands::score(&mut ctx, dataset, *from, *to),
        Command::Gate { dataset, as_of, user } => {
            commands::gate(&mut ctx, dataset, *as_of, user.as_deref())
        }
        Command::Simulate { scenario, out, seed } => commands::simulate(&mut ctx, scenario, out, *seed),
        Command::Run { captures, dataset, delta, from, to } => {
            commands::run(&mut ctx, &manifest(dataset, *delta), captures, *from, *to)
        }
        Command::Serve { .. } => unreachable!("handled above"),
    }
}
