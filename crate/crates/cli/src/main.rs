use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use narrative_core::corpus::IngestMode;
use narrative_core::embedding::ProviderKind;
use narrative_core::pipeline::{run_stage, ConfigOverrides, PipelineConfig, Stage};
use narrative_core::LagUnit;

/// Economic fluctuation narrative indices from survey explanations.
#[derive(Debug, Parser)]
#[command(name = "narrative", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract cause/effect pairs from the corpus into pairs.csv.
    Extract,
    /// Link pairs across topics into chains.csv.
    Chain,
    /// Compute monthly index series into indices.csv.
    Index,
    /// Correlate every series with the six DI variants.
    Correlate,
    /// Render heatmaps and top-k comparison tables.
    Report,
    /// Run every stage in order.
    All,
}

/// Each flag overrides the config-file key of the same name.
#[derive(Debug, Args)]
struct Flags {
    /// TOML config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Similarity threshold in (0, 1]
    #[arg(long, global = true)]
    threshold: Option<f64>,
    #[arg(long = "lag-unit", global = true)]
    lag_unit: Option<LagUnit>,
    #[arg(long, global = true)]
    provider: Option<ProviderKind>,
    /// External provider: http(s) base URL or `exec:<command>`.
    /// Falls back to NARRATIVE_EMBED_ENDPOINT.
    #[arg(long, global = true)]
    endpoint: Option<String>,
    /// Survey corpus CSV
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    /// Topic vocabulary (one per line); built-in 13 topics if omitted
    #[arg(long, global = true)]
    topics: Option<PathBuf>,
    /// Clue table TSV, or builtin:en / builtin:ja
    #[arg(long, global = true)]
    clues: Option<String>,
    /// Diffusion index CSV
    #[arg(long, global = true)]
    di: Option<PathBuf>,
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Maximum front-to-rear distance in months
    #[arg(long, global = true)]
    window: Option<u32>,
    #[arg(long, global = true)]
    a: Option<f64>,
    #[arg(long, global = true)]
    b: Option<f64>,
    #[arg(long, global = true)]
    dim: Option<usize>,
    #[arg(long = "batch-size", global = true)]
    batch_size: Option<usize>,
    /// strict or lenient handling of unknown topics
    #[arg(long, global = true, value_parser = parse_ingest)]
    ingest: Option<IngestMode>,
}

fn parse_ingest(s: &str) -> Result<IngestMode, String> {
    match s {
        "strict" => Ok(IngestMode::Strict),
        "lenient" => Ok(IngestMode::Lenient),
        other => Err(format!("unknown ingest mode `{other}`")),
    }
}

impl Flags {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            corpus: self.corpus.clone(),
            topics: self.topics.clone(),
            clues: self.clues.clone(),
            di: self.di.clone(),
            out: self.out.clone(),
            threshold: self.threshold,
            window: self.window,
            a: self.a,
            b: self.b,
            lag_unit: self.lag_unit,
            provider: self.provider,
            endpoint: self.endpoint.clone(),
            dim: self.dim,
            batch_size: self.batch_size,
            k: self.k,
            ingest: self.ingest,
            workers: self.workers,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let stage = match cli.command {
        Command::Extract => Stage::Extract,
        Command::Chain => Stage::Chain,
        Command::Index => Stage::Index,
        Command::Correlate => Stage::Correlate,
        Command::Report => Stage::Report,
        Command::All => Stage::All,
    };

    let result = (|| {
        let base = match &cli.flags.config {
            Some(path) => ConfigOverrides::load(path)?,
            None => ConfigOverrides::default(),
        };
        let config = PipelineConfig::resolve(base.overlay(cli.flags.overrides()))?;
        run_stage(stage, &config)
    })();

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
