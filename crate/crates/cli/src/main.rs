use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use picbreeder::agents::{generate_traits, Prompts};
use picbreeder::archive::{ArchiveView, EntryId};
use picbreeder::metrics::{weight_sweep, Metric, MetricContext, NounList};
use picbreeder::orchestrator::{
    build_agents, export_lineage, grid, ingest_lineage, load_traits, ExperimentConfig, GridKind,
    IngestedArchive, RunControl, Runner, SessionHub, LINEAGE_FILE,
};
use picbreeder::providers::{
    Captioner, ChatCaptioner, Embedder, FixedCaptioner, HttpChat, HttpConfig, HttpEmbedder, RetryPolicy,
    TestEmbedder, MODEL_ENV,
};
use picbreeder::{Archive, Genome, SharedArchive};
use picbreeder_cli::server;

#[derive(Parser)]
#[command(name = "picbreeder", version, about = "Collaborative CPPN image evolution with synthetic and human agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment into an archive directory (resumes if interrupted).
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        sessions: Option<u64>,
        #[arg(long, default_value = "archive")]
        out: PathBuf,
        /// Also serve the HTTP API on this port so humans can join the run.
        #[arg(long)]
        port: Option<u16>,
    },
    /// Compute a metric series over an archive or an ingested lineage.
    Metrics {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        metric: String,
        #[arg(long, default_value_t = 100)]
        k: usize,
        #[arg(long, default_value_t = 50)]
        step: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        providers: ProviderArgs,
    },
    /// Serve the JSON API for human sessions.
    Serve {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Experiment config supplying session settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a personality trait pool with a chat model.
    Traits {
        #[arg(long, default_value_t = 1000)]
        total: usize,
        #[arg(long, default_value_t = 50)]
        batch: usize,
        /// Previous batches shown to the model.
        #[arg(long, default_value_t = 10)]
        history: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = MODEL_ENV)]
        model: String,
        #[arg(long)]
        api_base: Option<String>,
    },
    /// Validate a lineage directory and copy it in normalized form.
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write an archive in the lineage format.
    Export {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tile archive images into a grid.
    Grids {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_enum)]
        kind: GridArg,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 64)]
        tile: u32,
        #[arg(long, default_value = "grid.png")]
        out: PathBuf,
        #[command(flatten)]
        providers: ProviderArgs,
    },
    /// Sweep every connection weight of a genome and rank the connections.
    Sweep {
        /// Genome in canonical text form.
        #[arg(long, conflicts_with_all = ["archive", "entry"])]
        genome: Option<PathBuf>,
        #[arg(long, requires = "entry")]
        archive: Option<PathBuf>,
        #[arg(long)]
        entry: Option<u64>,
        #[arg(long, default_value_t = 21)]
        steps: usize,
        #[arg(long, default_value_t = 64)]
        size: u32,
        #[arg(long, default_value = "sweep.json")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Source {
    /// Archive directory written by `run`.
    #[arg(long, conflicts_with = "lineage")]
    archive: Option<PathBuf>,
    /// Normalized lineage directory written by `ingest`.
    #[arg(long)]
    lineage: Option<PathBuf>,
}

#[derive(Args)]
struct ProviderArgs {
    /// `test` uses the built-in luma embedder; `http` the configured endpoint.
    #[arg(long, default_value = "test")]
    embedder: String,
    #[arg(long, default_value = "embedding")]
    embed_model: String,
    #[arg(long, env = MODEL_ENV, default_value = "")]
    caption_model: String,
    #[arg(long)]
    api_base: Option<String>,
    #[arg(long)]
    nouns: Option<PathBuf>,
    /// JSON file caching embeddings across invocations.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GridArg {
    PublicationOrder,
    FpsRepresentatives,
    TopRecall,
}

enum View {
    Live(Archive),
    Ingested(IngestedArchive),
}

impl View {
    fn open(source: &Source) -> Result<View> {
        match (&source.archive, &source.lineage) {
            (Some(dir), None) => Ok(View::Live(Archive::open(dir).with_context(|| format!("opening {}", dir.display()))?)),
            (None, Some(dir)) => Ok(View::Ingested(IngestedArchive::open(dir)?)),
            _ => bail!("give exactly one of --archive and --lineage"),
        }
    }

    fn as_view(&self) -> &dyn ArchiveView {
        match self {
            View::Live(a) => a,
            View::Ingested(a) => a,
        }
    }
}

fn metric_context(p: &ProviderArgs, k: usize) -> Result<MetricContext> {
    let embedder: Arc<dyn Embedder> = match p.embedder.as_str() {
        "test" => Arc::new(TestEmbedder),
        "http" => Arc::new(HttpEmbedder::new(HttpConfig::from_env(p.api_base.as_deref())?, &p.embed_model)),
        other => bail!("unknown embedder {other:?} (expected test or http)"),
    };
    let nouns = match &p.nouns {
        Some(path) => NounList::load(path)?,
        None => NounList::builtin(),
    };
    let captioner: Arc<dyn Captioner> = if p.embedder == "http" && !p.caption_model.is_empty() {
        let chat = Arc::new(HttpChat::new(HttpConfig::from_env(p.api_base.as_deref())?));
        Arc::new(ChatCaptioner::new(chat, &p.caption_model))
    } else {
        Arc::new(FixedCaptioner::default())
    };
    let mut ctx = MetricContext::new(embedder, nouns).with_k(k).with_captioner(captioner);
    if let Some(path) = &p.cache {
        ctx.embeddings = picbreeder::metrics::EmbeddingCache::open(path)?;
    }
    Ok(ctx)
}

async fn serve(hub: Arc<SessionHub>, port: u16) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    log::info!("serving on {}", listener.local_addr()?);
    axum::serve(listener, server::router(hub)).await?;
    Ok(())
}

fn run(config: PathBuf, seed: Option<u64>, sessions: Option<u64>, out: &Path, port: Option<u16>) -> Result<()> {
    let mut config = ExperimentConfig::load(&config)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(n) = sessions {
        config.sessions = n;
    }
    let agents = build_agents(&config, None)?;
    let traits = load_traits(&config)?;
    let mut runner = Runner::open(config.clone(), agents, traits, out)?;
    let rt = tokio::runtime::Runtime::new()?;
    if let Some(port) = port {
        let hub = Arc::new(SessionHub::new(runner.archive().clone(), config.session_config(), config.seed)?);
        rt.spawn(async move {
            if let Err(e) = serve(hub, port).await {
                log::error!("HTTP service stopped: {e}");
            }
        });
    }
    let summary = runner.run(&RunControl::default())?;
    println!(
        "{} sessions ({} resumed), {} rating rounds, {} fallbacks, archive {}",
        summary.sessions_completed,
        summary.resumed_at,
        summary.rating_rounds,
        summary.degradations.len(),
        summary.archive_hash
    );
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run {
            config,
            seed,
            sessions,
            out,
            port,
        } => run(config, seed, sessions, &out, port)?,
        Command::Metrics {
            source,
            metric,
            k,
            step,
            out,
            providers,
        } => {
            let view = View::open(&source)?;
            let ctx = metric_context(&providers, k)?;
            let series = ctx.series(view.as_view(), Metric::parse(&metric)?, step)?;
            series.write_csv(std::fs::File::create(&out)?)?;
            ctx.embeddings.save()?;
            if let Some(v) = series.last() {
                println!("{} = {v:.6} at n = {}", series.metric, view.as_view().len());
            }
        }
        Command::Serve {
            archive,
            port,
            config,
            seed,
        } => {
            let session_config = match config {
                Some(path) => ExperimentConfig::load(&path)?.session_config(),
                None => ExperimentConfig::default().session_config(),
            };
            let shared = SharedArchive::new(Archive::open(&archive)?);
            let hub = Arc::new(SessionHub::new(shared, session_config, seed)?);
            tokio::runtime::Runtime::new()?.block_on(serve(hub, port))?;
        }
        Command::Traits {
            total,
            batch,
            history,
            out,
            model,
            api_base,
        } => {
            let chat = HttpChat::new(HttpConfig::from_env(api_base.as_deref())?);
            let pool = generate_traits(&chat, &model, &Prompts::default(), total, batch, history, RetryPolicy::default());
            std::fs::write(&out, pool.to_lines())?;
            println!("{} traits written to {}", pool.traits.len(), out.display());
            if let Some(f) = &pool.failure {
                bail!("generation stopped early: {f}");
            }
        }
        Command::Ingest { input, out } => {
            let file = if input.is_dir() { input.join(LINEAGE_FILE) } else { input };
            let arch = ingest_lineage(&file, &out)?;
            let missing = arch.records().iter().filter(|r| r.genome.is_none()).count();
            println!("{} records ingested into {}", arch.len(), out.display());
            if missing > 0 {
                println!("{missing} records have no genome; weight sweeps are unavailable for them");
            }
        }
        Command::Export { archive, out } => {
            export_lineage(&Archive::open(&archive)?, &out)?;
        }
        Command::Grids {
            source,
            kind,
            n,
            tile,
            out,
            providers,
        } => {
            let view = View::open(&source)?;
            let ctx = metric_context(&providers, n)?;
            let kind = match kind {
                GridArg::PublicationOrder => GridKind::PublicationOrder,
                GridArg::FpsRepresentatives => GridKind::Representatives,
                GridArg::TopRecall => GridKind::TopRecall,
            };
            let g = grid(view.as_view(), kind, n, &ctx, tile)?;
            g.image.save(&out).with_context(|| format!("writing {}", out.display()))?;
            println!("{} tiles written to {}", g.positions.len(), out.display());
        }
        Command::Sweep {
            genome,
            archive,
            entry,
            steps,
            size,
            out,
        } => {
            let genome = match (genome, archive, entry) {
                (Some(path), _, _) => Genome::from_canonical_text(&std::fs::read_to_string(path)?)?,
                (None, Some(dir), Some(id)) => Archive::open(dir)?
                    .get(EntryId(id))
                    .with_context(|| format!("no entry {id}"))?
                    .genome
                    .clone(),
                _ => bail!("give --genome, or --archive with --entry"),
            };
            let result = weight_sweep(&genome, steps, size, size, false)?;
            std::fs::write(&out, result.to_json())?;
            println!("{} connections swept, written to {}", result.connections.len(), out.display());
        }
    }
    Ok(())
}
