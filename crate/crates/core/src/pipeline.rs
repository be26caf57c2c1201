//! Stage orchestration: extract → chain → index → correlate → report.
//!
//! Each stage reads the previous stage's CSV from the output directory, so
//! any stage can be rerun on its own. Every invocation also updates
//! `manifest.json` with a config snapshot, input digests, row counts and
//! timings.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytics::{self, AnalyticsError, CorrelationMatrix, DiKind};
use crate::chain::{self, ChainParams, PairVectors};
use crate::corpus::{self, IngestMode, TopicVocabulary};
use crate::embedding::{self, EmbeddingError, ProviderConfig, ProviderKind};
use crate::extraction::{self, ClueTable};
use crate::index::{self, DecayParams, LagUnit, LAG_UNIT_NOTE};
use crate::month::MonthRange;
use crate::report::{self, ReportError};

pub const PAIRS_FILE: &str = "pairs.csv";
pub const CHAINS_FILE: &str = "chains.csv";
pub const INDICES_FILE: &str = "indices.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const ENDPOINT_ENV: &str = "NARRATIVE_EMBED_ENDPOINT";

pub fn correlation_file_name(kind: DiKind) -> String {
    format!("correlation_{}.csv", kind.name())
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("embedding provider error: {0}")]
    Provider(#[from] EmbeddingError),
    #[error("output error: {0}")]
    Output(String),
}

impl PipelineError {
    /// Process exit status for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Input(_) => 3,
            Self::Provider(_) => 4,
            Self::Output(_) => 5,
        }
    }
}

fn input<E: std::fmt::Display>(e: E) -> PipelineError {
    PipelineError::Input(e.to_string())
}

fn output<E: std::fmt::Display>(e: E) -> PipelineError {
    PipelineError::Output(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Extract,
    Chain,
    Index,
    Correlate,
    Report,
    All,
}

impl Stage {
    pub const SEQUENCE: [Stage; 5] = [
        Self::Extract,
        Self::Chain,
        Self::Index,
        Self::Correlate,
        Self::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Extract => "extract",
            Self::Chain => "chain",
            Self::Index => "index",
            Self::Correlate => "correlate",
            Self::Report => "report",
            Self::All => "all",
        }
    }
}

/// Every configurable key, all optional. Used both for the TOML config file
/// and for command-line overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub corpus: Option<PathBuf>,
    pub topics: Option<PathBuf>,
    pub clues: Option<String>,
    pub di: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub window: Option<u32>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub lag_unit: Option<LagUnit>,
    pub provider: Option<ProviderKind>,
    pub endpoint: Option<String>,
    pub dim: Option<usize>,
    pub batch_size: Option<usize>,
    pub k: Option<usize>,
    pub ingest: Option<IngestMode>,
    pub workers: Option<usize>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($field:ident),* $(,)?) => {
        ConfigOverrides { $($field: $top.$field.or($base.$field)),* }
    };
}

impl ConfigOverrides {
    /// Parse a config file. Relative paths are resolved against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut cfg: Self =
            toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base_dir.join(&*path);
                }
            }
        };
        rebase(&mut cfg.corpus);
        rebase(&mut cfg.topics);
        rebase(&mut cfg.di);
        rebase(&mut cfg.out);
        if let Some(c) = &cfg.clues {
            if !c.starts_with("builtin:") && Path::new(c).is_relative() {
                cfg.clues = Some(base_dir.join(c).to_string_lossy().into_owned());
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Values in `top` win over values in `self`.
    pub fn overlay(self, top: ConfigOverrides) -> ConfigOverrides {
        let base = self;
        overlay!(base, top; corpus, topics, clues, di, out, threshold, window, a, b, lag_unit,
            provider, endpoint, dim, batch_size, k, ingest, workers)
    }
}

/// Where the clue table comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ClueSource {
    English,
    Japanese,
    File(PathBuf),
}

impl ClueSource {
    pub fn parse(s: &str) -> Self {
        match s {
            "builtin:en" => Self::English,
            "builtin:ja" => Self::Japanese,
            path => Self::File(PathBuf::from(path)),
        }
    }

    pub fn load(&self) -> Result<ClueTable, PipelineError> {
        match self {
            Self::English => Ok(ClueTable::english()),
            Self::Japanese => Ok(ClueTable::japanese()),
            Self::File(p) => ClueTable::load(p).map_err(input),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub corpus: Option<PathBuf>,
    /// `None` selects the built-in thirteen-topic vocabulary.
    pub topics: Option<PathBuf>,
    pub clues: ClueSource,
    pub di: Option<PathBuf>,
    pub out: PathBuf,
    pub embedding: ProviderConfig,
    pub chain: ChainParamsSnapshot,
    pub decay: DecayParams,
    pub k: usize,
    pub ingest: IngestMode,
    pub workers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainParamsSnapshot {
    pub threshold: f64,
    pub window: Option<u32>,
}

impl From<ChainParamsSnapshot> for ChainParams {
    fn from(s: ChainParamsSnapshot) -> Self {
        ChainParams {
            threshold: s.threshold,
            window_months: s.window,
        }
    }
}

impl PipelineConfig {
    pub fn resolve(raw: ConfigOverrides) -> Result<Self, PipelineError> {
        let config_err = |m: String| PipelineError::Config(m);
        let non_empty = |p: Option<PathBuf>, key: &str| match p {
            Some(p) if p.as_os_str().is_empty() => {
                Err(config_err(format!("`{key}` must not be empty")))
            }
            other => Ok(other),
        };
        let threshold = raw.threshold.unwrap_or(chain::DEFAULT_THRESHOLD);
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(config_err(format!(
                "threshold {threshold} is outside (0, 1]"
            )));
        }
        let workers = raw.workers.unwrap_or(1);
        if workers == 0 {
            return Err(config_err("workers must be at least 1".into()));
        }
        let k = raw.k.unwrap_or(report::DEFAULT_TOP_K);
        if k == 0 {
            return Err(config_err("k must be at least 1".into()));
        }
        let decay = DecayParams {
            a: raw.a.unwrap_or(index::DEFAULT_A),
            b: raw.b.unwrap_or(index::DEFAULT_B),
            lag_unit: raw.lag_unit.unwrap_or_default(),
        };
        decay.validate().map_err(|e| config_err(e.to_string()))?;
        let kind = raw.provider.unwrap_or_default();
        let endpoint = match kind {
            ProviderKind::External => raw.endpoint.or_else(|| std::env::var(ENDPOINT_ENV).ok()),
            ProviderKind::Builtin => raw.endpoint,
        };
        let embedding = ProviderConfig {
            kind,
            endpoint,
            dim: raw.dim.unwrap_or(embedding::DEFAULT_DIM),
            batch_size: raw.batch_size.unwrap_or(embedding::DEFAULT_BATCH_SIZE),
        };
        embedding
            .validate()
            .map_err(|e| config_err(e.to_string()))?;
        let clues = raw.clues.unwrap_or_else(|| "builtin:en".to_string());
        if clues.is_empty() {
            return Err(config_err("`clues` must not be empty".into()));
        }
        let out = non_empty(raw.out, "out")?.unwrap_or_else(|| PathBuf::from("out"));
        Ok(Self {
            corpus: non_empty(raw.corpus, "corpus")?,
            topics: non_empty(raw.topics, "topics")?,
            clues: ClueSource::parse(&clues),
            di: non_empty(raw.di, "di")?,
            out,
            embedding,
            chain: ChainParamsSnapshot {
                threshold,
                window: raw.window,
            },
            decay,
            k,
            ingest: raw.ingest.unwrap_or_default(),
            workers,
        })
    }

    fn vocabulary(&self) -> Result<TopicVocabulary, PipelineError> {
        match &self.topics {
            Some(p) => TopicVocabulary::load(p).map_err(input),
            None => Ok(TopicVocabulary::default_thirteen()),
        }
    }

    fn corpus_path(&self) -> Result<&Path, PipelineError> {
        self.corpus
            .as_deref()
            .ok_or_else(|| PipelineError::Config("no corpus path configured".into()))
    }

    fn di_path(&self) -> Result<&Path, PipelineError> {
        self.di
            .as_deref()
            .ok_or_else(|| PipelineError::Config("no DI path configured".into()))
    }

    fn out_file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: String,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<OutputRecord>,
    pub elapsed_ms: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub counts: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: serde_json::Value,
    pub decay_note: String,
    pub stages: BTreeMap<Stage, StageRecord>,
}

fn sha256_hex(path: &Path) -> Result<String, PipelineError> {
    let bytes =
        fs::read(path).map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

fn digest(path: &Path) -> Result<InputDigest, PipelineError> {
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(path)?,
    })
}

fn require(path: &Path, produced_by: Stage) -> Result<(), PipelineError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(PipelineError::Input(format!(
            "{} not found; run the `{}` stage first",
            path.display(),
            produced_by.name()
        )))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, PipelineError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| PipelineError::Output(format!("{}: {e}", path.display())))
}

struct StageRun<'a> {
    config: &'a PipelineConfig,
    record: StageRecord,
}

impl<'a> StageRun<'a> {
    fn new(config: &'a PipelineConfig, stage: Stage) -> Self {
        Self {
            config,
            record: StageRecord {
                stage,
                inputs: Vec::new(),
                outputs: Vec::new(),
                elapsed_ms: 0.0,
                counts: BTreeMap::new(),
                warnings: Vec::new(),
            },
        }
    }

    fn input(&mut self, path: &Path) -> Result<(), PipelineError> {
        self.record.inputs.push(digest(path)?);
        Ok(())
    }

    fn output(&mut self, name: &str, rows: usize) {
        self.record.outputs.push(OutputRecord {
            path: name.to_string(),
            rows,
        });
    }

    fn warn(&mut self, message: String) {
        log::warn!("{message}");
        self.record.warnings.push(message);
    }

    fn extract(&mut self) -> Result<(), PipelineError> {
        let cfg = self.config;
        let vocabulary = cfg.vocabulary()?;
        let clues = cfg.clues.load()?;
        let corpus_path = cfg.corpus_path()?;
        self.input(corpus_path)?;
        if let Some(t) = &cfg.topics {
            self.input(t)?;
        }
        if let ClueSource::File(p) = &cfg.clues {
            self.input(p)?;
        }
        let loaded = corpus::load_corpus(corpus_path, &vocabulary, cfg.ingest).map_err(input)?;
        if loaded.skipped > 0 {
            self.warn(format!(
                "skipped {} rows with unknown topics",
                loaded.skipped
            ));
        }
        let pairs = extraction::extract_all(&loaded.records, &clues);
        self.record
            .counts
            .insert("records".into(), loaded.records.len());
        self.record
            .counts
            .insert("skipped_rows".into(), loaded.skipped);
        self.record.counts.insert("pairs".into(), pairs.len());
        extraction::write_pairs(&pairs, create(&cfg.out_file(PAIRS_FILE))?).map_err(output)?;
        self.output(PAIRS_FILE, pairs.len());
        log::info!(
            "extracted {} causal pairs from {} records",
            pairs.len(),
            loaded.records.len()
        );
        Ok(())
    }

    fn chain(&mut self) -> Result<(), PipelineError> {
        let cfg = self.config;
        let pairs_path = cfg.out_file(PAIRS_FILE);
        require(&pairs_path, Stage::Extract)?;
        self.input(&pairs_path)?;
        let pairs = extraction::read_pairs(&pairs_path).map_err(input)?;
        let provider = embedding::provider_from_config(&cfg.embedding)?;
        let texts: Vec<String> = pairs
            .iter()
            .flat_map(|p| [p.cause.clone(), p.effect.clone()])
            .collect();
        let vectors = embedding::embed_batch(&texts, provider.as_ref())?;
        let mut by_pair = HashMap::with_capacity(pairs.len());
        let mut it = vectors.into_iter();
        for p in &pairs {
            let (cause, effect) = (
                it.next().expect("two per pair"),
                it.next().expect("two per pair"),
            );
            by_pair.insert(p.id, PairVectors { cause, effect });
        }
        let chains = chain::build_chains(&pairs, &by_pair, &cfg.chain.into()).map_err(input)?;
        for (tp, n) in chain::chain_counts(&chains) {
            self.record.counts.insert(tp.label(), n);
        }
        chain::write_chains(&chains, create(&cfg.out_file(CHAINS_FILE))?).map_err(output)?;
        self.output(CHAINS_FILE, chains.len());
        log::info!("built {} chains from {} pairs", chains.len(), pairs.len());
        Ok(())
    }

    fn index(&mut self) -> Result<(), PipelineError> {
        let cfg = self.config;
        let chains_path = cfg.out_file(CHAINS_FILE);
        require(&chains_path, Stage::Chain)?;
        self.input(&chains_path)?;
        let corpus_path = cfg.corpus_path()?;
        self.input(corpus_path)?;
        let vocabulary = cfg.vocabulary()?;
        let chains = chain::read_chains(&chains_path).map_err(input)?;
        let loaded = corpus::load_corpus(corpus_path, &vocabulary, cfg.ingest).map_err(input)?;
        let range = MonthRange::covering(loaded.records.iter().map(|r| r.date))
            .ok_or_else(|| PipelineError::Input("corpus has no records".into()))?;
        log::info!("{LAG_UNIT_NOTE}");
        let series =
            index::build_all_series(&chains, &vocabulary, &cfg.decay, range).map_err(input)?;
        index::write_indices(&series, create(&cfg.out_file(INDICES_FILE))?).map_err(output)?;
        self.record.counts.insert("series".into(), series.len());
        self.record.counts.insert("months".into(), range.len());
        self.output(INDICES_FILE, range.len());
        Ok(())
    }

    fn correlate(&mut self) -> Result<(), PipelineError> {
        let cfg = self.config;
        let indices_path = cfg.out_file(INDICES_FILE);
        require(&indices_path, Stage::Index)?;
        self.input(&indices_path)?;
        let di_path = cfg.di_path()?;
        self.input(di_path)?;
        let vocabulary = cfg.vocabulary()?;
        let series = index::read_indices(&indices_path).map_err(input)?;
        let di =
            analytics::six_series(&analytics::load_di(di_path).map_err(input)?).map_err(input)?;
        for m in analytics::correlate_all(&series, &vocabulary, &di) {
            let name = correlation_file_name(m.di_kind);
            m.write_csv(create(&cfg.out_file(&name))?).map_err(output)?;
            let defined = m.defined_cells().len();
            self.record
                .counts
                .insert(format!("defined_cells_{}", m.di_kind.name()), defined);
            self.output(&name, m.topics.len());
        }
        Ok(())
    }

    fn report(&mut self) -> Result<(), PipelineError> {
        let cfg = self.config;
        let indices_path = cfg.out_file(INDICES_FILE);
        require(&indices_path, Stage::Index)?;
        let di_path = cfg.di_path()?;
        let series = index::read_indices(&indices_path).map_err(input)?;
        let di =
            analytics::six_series(&analytics::load_di(di_path).map_err(input)?).map_err(input)?;
        self.input(&indices_path)?;
        self.input(di_path)?;
        for di_series in &di {
            let name = correlation_file_name(di_series.kind);
            let path = cfg.out_file(&name);
            require(&path, Stage::Correlate)?;
            self.input(&path)?;
            let matrix = CorrelationMatrix::read_csv(&path, di_series.kind).map_err(input)?;
            let svg_name = report::heatmap_file_name(&matrix);
            report::render_heatmap(&matrix, &cfg.out_file(&svg_name)).map_err(output)?;
            self.output(&svg_name, matrix.topics.len());

            match report::top_k_series(&matrix, &series, di_series, cfg.k) {
                Ok(table) => {
                    let csv_name = report::top_k_file_name(&matrix);
                    table
                        .write_csv(create(&cfg.out_file(&csv_name))?)
                        .map_err(output)?;
                    self.output(&csv_name, table.months.len());
                }
                Err(
                    e @ (ReportError::Analytics(AnalyticsError::InsufficientCells { .. })
                    | ReportError::Analytics(AnalyticsError::ZeroVariance)),
                ) => {
                    self.warn(format!(
                        "no top-{} table for {}: {e}",
                        cfg.k, di_series.kind
                    ));
                }
                Err(e) => return Err(output(e)),
            }
        }
        Ok(())
    }

    fn run(mut self) -> Result<StageRecord, PipelineError> {
        let start = Instant::now();
        match self.record.stage {
            Stage::Extract => self.extract()?,
            Stage::Chain => self.chain()?,
            Stage::Index => self.index()?,
            Stage::Correlate => self.correlate()?,
            Stage::Report => self.report()?,
            Stage::All => unreachable!("`all` is expanded by run_stage"),
        }
        self.record.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
        Ok(self.record)
    }
}

fn write_manifest(config: &PipelineConfig, records: Vec<StageRecord>) -> Result<(), PipelineError> {
    let path = config.out_file(MANIFEST_FILE);
    let mut stages = fs::read_to_string(&path)
        .ok()
        .and_then(|t| serde_json::from_str::<Manifest>(&t).ok())
        .map(|m| m.stages)
        .unwrap_or_default();
    for r in records {
        stages.insert(r.stage, r);
    }
    let manifest = Manifest {
        tool: "narrative".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: serde_json::to_value(config).expect("config serializes"),
        decay_note: LAG_UNIT_NOTE.into(),
        stages,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n")
        .map_err(|e| PipelineError::Output(format!("{}: {e}", path.display())))
}

/// Run one stage (or all of them) and update the manifest.
pub fn run_stage(stage: Stage, config: &PipelineConfig) -> Result<(), PipelineError> {
    fs::create_dir_all(&config.out)
        .map_err(|e| PipelineError::Output(format!("{}: {e}", config.out.display())))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let stages: &[Stage] = match stage {
        Stage::All => &Stage::SEQUENCE,
        ref one => std::slice::from_ref(one),
    };
    let mut records = Vec::new();
    let result = pool.install(|| {
        for &s in stages {
            log::info!("stage {}", s.name());
            records.push(StageRun::new(config, s).run()?);
        }
        Ok(())
    });
    if !records.is_empty() {
        write_manifest(config, records)?;
    }
    result
}
