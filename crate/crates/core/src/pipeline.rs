//! Disk-backed pipeline stages behind the `nextsum` executable.
//!
//! Each stage reads its declared inputs, writes its declared artifacts, and
//! is fully determined by those files plus the [`PipelineConfig`], so
//! re-running a stage with unchanged inputs reproduces its outputs byte for
//! byte. A stage whose input artifact is missing fails with the name of the
//! stage that produces it.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::align::{align, ExtractiveGold};
use crate::annotate::{
    load_embeddings, train_importance, EmbeddingTable, ImportanceModel, ImportanceTrainOptions,
};
use crate::content_model::{select_num_topics, ContentTrainOptions, TopicCandidateScore};
use crate::corpus::{
    build_vocabulary, load_corpus, split_dataset, Article, CorpusFormat, Pair,
};
use crate::error::{Error, Result};
use crate::eval::{
    length_report, next_sentence_eval, rouge_n, LengthReport, NextSentenceEval,
};
use crate::features::{FeatureExtractor, FeatureManifest, Normalizer};
use crate::generator::{
    chmm_baseline, chmm_t_baseline, generate, generate_with_limit, lead_baseline,
    topic_importance, transition_baseline, GeneratedSummary, TopicImportance,
};
use crate::predictor::{
    build_dev_groups, build_training_set, train, TrainConfig, TrainMetrics, TrainingSetOptions,
    WindowCoverage,
};
use crate::{ContentHmm64, Mlp64};

/// Format version stamped into every JSON artifact this module writes.
pub const ARTIFACT_VERSION: u32 = 1;

/// File and directory locations for one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelinePaths {
    /// Input corpus, JSON lines of `{id, domain, article, abstract}`.
    pub corpus: PathBuf,
    /// Word-embedding text file. Absent means the deterministic hashed
    /// fallback vectors at `features.embed_dim` dimensions.
    #[serde(default)]
    pub embeddings: Option<PathBuf>,
    /// Directory for intermediate artifacts: splits, oracles, trained models.
    pub models: PathBuf,
    /// Directory for summaries, evaluations, and the final report.
    pub outputs: PathBuf,
}

/// Train/dev/test partition ratios and the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
    pub seed: u64,
}

/// Content-model training parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContentModelConfig {
    /// Topic counts tried; the dev log-likelihood picks the winner.
    pub topic_candidates: Vec<usize>,
    /// Emission smoothing mass.
    pub delta: f64,
    pub max_iters: usize,
    /// Words at or below this training count collapse to the unknown token.
    pub unk_cutoff: u64,
    pub seed: u64,
}

impl ContentModelConfig {
    fn base_options(&self) -> ContentTrainOptions {
        ContentTrainOptions {
            num_topics: 1,
            seed: self.seed,
            max_iters: self.max_iters,
            delta: self.delta,
            unk_cutoff: self.unk_cutoff,
        }
    }
}

/// Feature-layout knobs resolved at `train` time into a [`FeatureManifest`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    /// Dimension of the fallback embeddings; an embeddings file overrides
    /// this with its own dimension.
    pub embed_dim: usize,
    /// How many corpus top words get indicator features.
    pub top_words: usize,
}

/// The summarizers the `generate` stage can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SystemKind {
    /// Greedy next-sentence prediction; the model decides the length.
    #[serde(rename = "nextsum")]
    NextSum,
    /// Same model under a hard word cap with exact truncation.
    #[serde(rename = "nextsum-l")]
    NextSumL,
    /// Leading sentences up to the word cap.
    #[serde(rename = "lead")]
    Lead,
    /// Samples sentences of important topics from the content model.
    #[serde(rename = "chmm")]
    Chmm,
    /// Most probable next topic under the content model's transitions.
    #[serde(rename = "transition")]
    Transition,
    /// Transition scores weighted by topic importance.
    #[serde(rename = "chmm-t")]
    ChmmT,
}

impl SystemKind {
    pub const ALL: [SystemKind; 6] = [
        SystemKind::NextSum,
        SystemKind::NextSumL,
        SystemKind::Lead,
        SystemKind::Chmm,
        SystemKind::Transition,
        SystemKind::ChmmT,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            SystemKind::NextSum => "nextsum",
            SystemKind::NextSumL => "nextsum-l",
            SystemKind::Lead => "lead",
            SystemKind::Chmm => "chmm",
            SystemKind::Transition => "transition",
            SystemKind::ChmmT => "chmm-t",
        }
    }

    pub fn parse(s: &str) -> Result<SystemKind> {
        SystemKind::ALL
            .into_iter()
            .find(|k| k.slug() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown system `{s}`; expected one of nextsum, nextsum-l, lead, chmm, \
                     transition, chmm-t"
                ))
            })
    }

    /// Whether this system loads the trained next-sentence model.
    pub fn needs_model(self) -> bool {
        matches!(self, SystemKind::NextSum | SystemKind::NextSumL)
    }

    /// Whether this system requires a word budget.
    pub fn needs_length(self) -> bool {
        !matches!(self, SystemKind::NextSum)
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

/// What `generate` should produce.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    pub system: SystemKind,
    /// Word budget for the fixed-length systems. `nextsum` ignores it; every
    /// other system fails without one.
    #[serde(default)]
    pub length: Option<usize>,
    /// Drives the sentence sampling of `chmm`.
    pub seed: u64,
}

/// Everything one pipeline run needs, parsed from a JSON file. Every seed is
/// spelled out here; nothing falls back to the clock. Unknown keys are
/// rejected so typos fail loudly instead of silently using a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PipelinePaths,
    pub split: SplitConfig,
    pub content_model: ContentModelConfig,
    pub importance: ImportanceTrainOptions,
    pub features: FeatureConfig,
    pub predictor: TrainConfig,
    /// Candidate window size: how many upcoming sentences compete with EOS.
    pub window: usize,
    pub generation: GenerationConfig,
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<PipelineConfig> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::invalid(format!("cannot read config file {}: {e}", path.display()))
        })?;
        let cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| Error::invalid(format!("bad config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.split;
        let sum = s.train + s.dev + s.test;
        if !(sum - 1.0).abs().le(&1e-9) || s.train < 0.0 || s.dev < 0.0 || s.test < 0.0 {
            return Err(Error::invalid(format!(
                "split ratios must be non-negative and sum to 1, got ({}, {}, {})",
                s.train, s.dev, s.test
            )));
        }
        if self.content_model.topic_candidates.is_empty() {
            return Err(Error::invalid("content_model.topic_candidates is empty"));
        }
        if self.content_model.topic_candidates.iter().any(|&k| k == 0) {
            return Err(Error::invalid("topic candidates must be at least 1"));
        }
        if !(self.content_model.delta > 0.0) {
            return Err(Error::invalid("content_model.delta must be positive"));
        }
        if self.content_model.max_iters == 0 {
            return Err(Error::invalid("content_model.max_iters must be at least 1"));
        }
        if self.features.embed_dim == 0 {
            return Err(Error::invalid("features.embed_dim must be at least 1"));
        }
        if self.window == 0 {
            return Err(Error::invalid("window must be at least 1"));
        }
        if self.generation.length == Some(0) {
            return Err(Error::invalid("generation.length must be at least 1"));
        }
        Ok(())
    }

    pub fn split_path(&self, split: SplitName) -> PathBuf {
        self.paths.models.join(format!("split.{split}.jsonl"))
    }

    pub fn oracle_path(&self, split: SplitName) -> PathBuf {
        self.paths.models.join(format!("oracle.{split}.jsonl"))
    }

    pub fn content_model_path(&self) -> PathBuf {
        self.paths.models.join("content_model.json")
    }

    pub fn importance_path(&self) -> PathBuf {
        self.paths.models.join("importance.json")
    }

    pub fn model_path(&self) -> PathBuf {
        self.paths.models.join("model.json")
    }

    pub fn summaries_path(&self, system: SystemKind) -> PathBuf {
        self.paths
            .outputs
            .join(format!("summaries.{}.jsonl", system.slug()))
    }

    pub fn eval_path(&self, system: SystemKind) -> PathBuf {
        self.paths
            .outputs
            .join(format!("eval.{}.json", system.slug()))
    }

    pub fn lengths_path(&self, system: SystemKind) -> PathBuf {
        self.paths
            .outputs
            .join(format!("lengths.{}.csv", system.slug()))
    }

    pub fn report_path(&self) -> PathBuf {
        self.paths.outputs.join("report.txt")
    }
}

/// One of the three dataset partitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Dev, SplitName::Test];
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitName::Train => "train",
            SplitName::Dev => "dev",
            SplitName::Test => "test",
        })
    }
}

/// Trained content model with its selection trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContentModelArtifact {
    pub version: u32,
    pub config: ContentModelConfig,
    /// Dev log-likelihood per tried topic count.
    pub scores: Vec<TopicCandidateScore>,
    pub model: ContentHmm64,
}

/// Trained word-importance scorer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImportanceArtifact {
    pub version: u32,
    pub config: ImportanceTrainOptions,
    pub embed_dim: usize,
    pub embeddings_from_file: bool,
    pub model: ImportanceModel,
}

/// Trained next-sentence predictor with everything needed to run it again:
/// the feature layout, the input normalizer, and the training configuration
/// it was produced under.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub version: u32,
    pub window: usize,
    pub train_config: TrainConfig,
    pub manifest: FeatureManifest,
    pub normalizer: Normalizer,
    pub net: Mlp64,
    pub metrics: TrainMetrics,
    pub coverage: WindowCoverage,
}

/// Macro-averaged overlap scores across the evaluated pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeMean {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

/// Evaluation of one system's summaries against the reference abstracts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalArtifact {
    pub version: u32,
    pub system: SystemKind,
    pub summaries: usize,
    pub rouge_1: RougeMean,
    pub rouge_2: RougeMean,
    pub lengths: LengthReport,
    /// Present only for the model-backed systems.
    pub next_sentence: Option<NextSentenceEval>,
}

/// Pair counts written by `ingest`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestReport {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

/// Per-split gold counts written by `build-oracle`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleReport {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

#[derive(Serialize, Deserialize)]
struct RawLine {
    id: String,
    #[serde(default)]
    domain: String,
    article: String,
    #[serde(rename = "abstract")]
    abstract_text: String,
}

fn require_artifact(path: &Path, stage: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::MissingArtifact {
            path: path.display().to_string(),
            stage: stage.into(),
        })
    }
}

fn write_json_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn read_json_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path)?;
    let mut items = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: format!("{}: {e}", path.display()),
        })?;
        items.push(item);
    }
    Ok(items)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path)?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

fn check_version(found: u32, what: &str) -> Result<()> {
    if found == ARTIFACT_VERSION {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{what} has artifact version {found}, this build reads version {ARTIFACT_VERSION}"
        )))
    }
}

fn load_split(cfg: &PipelineConfig, split: SplitName) -> Result<Vec<Pair>> {
    let path = cfg.split_path(split);
    require_artifact(&path, "ingest")?;
    load_corpus(&path, CorpusFormat::JsonLines)
}

fn load_oracle(cfg: &PipelineConfig, split: SplitName) -> Result<Vec<ExtractiveGold>> {
    let path = cfg.oracle_path(split);
    require_artifact(&path, "build-oracle")?;
    read_json_lines(&path)
}

fn load_content_model(cfg: &PipelineConfig) -> Result<ContentModelArtifact> {
    let path = cfg.content_model_path();
    require_artifact(&path, "train-cm")?;
    let artifact: ContentModelArtifact = read_json(&path)?;
    check_version(artifact.version, "content model")?;
    Ok(artifact)
}

fn load_importance(cfg: &PipelineConfig) -> Result<ImportanceArtifact> {
    let path = cfg.importance_path();
    require_artifact(&path, "train-importance")?;
    let artifact: ImportanceArtifact = read_json(&path)?;
    check_version(artifact.version, "importance model")?;
    Ok(artifact)
}

/// Reads `model.json`; fails with the producing stage's name when absent.
pub fn load_model(cfg: &PipelineConfig) -> Result<ModelArtifact> {
    let path = cfg.model_path();
    require_artifact(&path, "train")?;
    let artifact: ModelArtifact = read_json(&path)?;
    check_version(artifact.version, "predictor model")?;
    Ok(artifact)
}

fn embedding_table(cfg: &PipelineConfig) -> Result<EmbeddingTable> {
    match &cfg.paths.embeddings {
        Some(path) => load_embeddings(path),
        None => Ok(EmbeddingTable::fallback_only(cfg.features.embed_dim)),
    }
}

fn join_gold<'a>(
    pairs: &'a [Pair],
    golds: &'a [ExtractiveGold],
) -> Result<Vec<(&'a Article, &'a ExtractiveGold)>> {
    let by_id: BTreeMap<&str, &ExtractiveGold> =
        golds.iter().map(|g| (g.id.as_str(), g)).collect();
    pairs
        .iter()
        .map(|p| {
            by_id
                .get(p.article.id.as_str())
                .map(|g| (&p.article, *g))
                .ok_or_else(|| {
                    Error::invalid(format!(
                        "no gold extract for article `{}`; re-run build-oracle",
                        p.article.id
                    ))
                })
        })
        .collect()
}

/// Splits the corpus into train/dev/test files under the models directory.
/// Records are copied verbatim (modulo JSON re-serialization), so
/// tokenization downstream sees exactly the original text.
pub fn stage_ingest(cfg: &PipelineConfig) -> Result<IngestReport> {
    let pairs = load_corpus(&cfg.paths.corpus, CorpusFormat::JsonLines)?;
    let raw = read_raw_records(&cfg.paths.corpus)?;
    let ratios = (cfg.split.train, cfg.split.dev, cfg.split.test);
    let split = split_dataset(pairs, ratios, cfg.split.seed)?;
    fs::create_dir_all(&cfg.paths.models)?;
    let report = IngestReport {
        train: split.train.len(),
        dev: split.dev.len(),
        test: split.test.len(),
    };
    for (name, part) in [
        (SplitName::Train, &split.train),
        (SplitName::Dev, &split.dev),
        (SplitName::Test, &split.test),
    ] {
        let lines: Vec<&RawLine> = part
            .iter()
            .map(|p| raw.get(p.article.id.as_str()).expect("id came from this file"))
            .collect();
        write_json_lines(&cfg.split_path(name), &lines)?;
    }
    Ok(report)
}

fn read_raw_records(path: &Path) -> Result<BTreeMap<String, RawLine>> {
    let file = File::open(path).map_err(|e| {
        Error::invalid(format!("cannot open corpus file {}: {e}", path.display()))
    })?;
    let mut records = BTreeMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: format!("malformed record: {e}"),
        })?;
        records.insert(raw.id.clone(), raw);
    }
    Ok(records)
}

/// Aligns each split's abstracts to their articles and writes the gold
/// extract sequences.
pub fn stage_build_oracle(cfg: &PipelineConfig) -> Result<OracleReport> {
    let mut counts = [0usize; 3];
    for (slot, name) in SplitName::ALL.into_iter().enumerate() {
        let pairs = load_split(cfg, name)?;
        let golds: Vec<ExtractiveGold> = pairs
            .iter()
            .map(|p| align(&p.abstract_summary, &p.article))
            .collect::<Result<_>>()?;
        counts[slot] = golds.len();
        write_json_lines(&cfg.oracle_path(name), &golds)?;
    }
    Ok(OracleReport {
        train: counts[0],
        dev: counts[1],
        test: counts[2],
    })
}

/// Trains one content model per candidate topic count on the train split and
/// keeps the best by dev log-likelihood.
pub fn stage_train_cm(cfg: &PipelineConfig) -> Result<ContentModelArtifact> {
    let train_articles: Vec<Article> = load_split(cfg, SplitName::Train)?
        .into_iter()
        .map(|p| p.article)
        .collect();
    let dev_articles: Vec<Article> = load_split(cfg, SplitName::Dev)?
        .into_iter()
        .map(|p| p.article)
        .collect();
    let (model, scores) = select_num_topics::<f64>(
        &train_articles,
        &dev_articles,
        &cfg.content_model.topic_candidates,
        &cfg.content_model.base_options(),
    )?;
    let artifact = ContentModelArtifact {
        version: ARTIFACT_VERSION,
        config: cfg.content_model.clone(),
        scores,
        model,
    };
    write_json(&cfg.content_model_path(), &artifact)?;
    Ok(artifact)
}

/// Trains the word-importance scorer on the train split's gold extracts.
pub fn stage_train_importance(cfg: &PipelineConfig) -> Result<ImportanceArtifact> {
    let pairs = load_split(cfg, SplitName::Train)?;
    let golds = load_oracle(cfg, SplitName::Train)?;
    let table = embedding_table(cfg)?;
    let joined = join_gold(&pairs, &golds)?;
    let model = train_importance(&joined, &table, &cfg.importance)?;
    let artifact = ImportanceArtifact {
        version: ARTIFACT_VERSION,
        config: cfg.importance.clone(),
        embed_dim: table.dim(),
        embeddings_from_file: table.from_file(),
        model,
    };
    write_json(&cfg.importance_path(), &artifact)?;
    Ok(artifact)
}

fn quintile_thresholds(mut values: Vec<f64>) -> Result<[f64; 4]> {
    if values.is_empty() {
        return Err(Error::invalid("cannot take quantiles of an empty sample"));
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("counts are finite"));
    let n = values.len();
    let pick = |p: f64| {
        let rank = (p * n as f64).ceil() as usize;
        values[rank.clamp(1, n) - 1]
    };
    Ok([pick(0.2), pick(0.4), pick(0.6), pick(0.8)])
}

fn build_manifest(
    cfg: &PipelineConfig,
    train_articles: &[Article],
    num_topics: usize,
    table: &EmbeddingTable,
) -> Result<FeatureManifest> {
    let vocab = build_vocabulary(train_articles)?;
    let top_words: Vec<String> = vocab
        .top_words()
        .iter()
        .take(cfg.features.top_words)
        .cloned()
        .collect();
    let word_counts: Vec<f64> = train_articles
        .iter()
        .map(|a| a.word_count() as f64)
        .collect();
    let sentence_counts: Vec<f64> = train_articles
        .iter()
        .map(|a| a.num_sentences() as f64)
        .collect();
    Ok(FeatureManifest::build(
        num_topics,
        table.dim(),
        table.from_file(),
        top_words,
        quintile_thresholds(word_counts)?,
        quintile_thresholds(sentence_counts)?,
    ))
}

/// Trains the next-sentence predictor: builds the feature manifest from
/// train-split statistics, assembles the training set and dev groups, runs
/// the optimizer, and writes the full model bundle.
pub fn stage_train(cfg: &PipelineConfig) -> Result<ModelArtifact> {
    let train_pairs = load_split(cfg, SplitName::Train)?;
    let dev_pairs = load_split(cfg, SplitName::Dev)?;
    let train_golds = load_oracle(cfg, SplitName::Train)?;
    let dev_golds = load_oracle(cfg, SplitName::Dev)?;
    let cm = load_content_model(cfg)?;
    let imp = load_importance(cfg)?;
    let table = embedding_table(cfg)?;

    let train_articles: Vec<Article> =
        train_pairs.iter().map(|p| p.article.clone()).collect();
    let manifest = build_manifest(cfg, &train_articles, cm.model.num_topics(), &table)?;
    let extractor = FeatureExtractor::new(&manifest, &cm.model, &table, &imp.model)?;

    let opts = TrainingSetOptions {
        window: cfg.window,
        seed: cfg.predictor.seed,
        all_negatives: false,
    };
    let train_joined = join_gold(&train_pairs, &train_golds)?;
    let dev_joined = join_gold(&dev_pairs, &dev_golds)?;
    let (examples, coverage) = build_training_set(&extractor, &train_joined, &opts)?;
    let (dev_groups, _) = build_dev_groups(&extractor, &dev_joined, &opts)?;
    let trained = train(&examples, &dev_groups, &cfg.predictor)?;

    let artifact = ModelArtifact {
        version: ARTIFACT_VERSION,
        window: cfg.window,
        train_config: cfg.predictor.clone(),
        manifest,
        normalizer: trained.normalizer,
        net: trained.net,
        metrics: trained.metrics,
        coverage,
    };
    write_json(&cfg.model_path(), &artifact)?;
    Ok(artifact)
}

struct ModelAssets {
    bundle: ModelArtifact,
    cm: ContentModelArtifact,
    imp: ImportanceArtifact,
    table: EmbeddingTable,
}

fn load_model_assets(cfg: &PipelineConfig) -> Result<ModelAssets> {
    let bundle = load_model(cfg)?;
    let cm = load_content_model(cfg)?;
    let imp = load_importance(cfg)?;
    let table = match &cfg.paths.embeddings {
        Some(path) => load_embeddings(path)?,
        None => EmbeddingTable::fallback_only(bundle.manifest.embed_dim),
    };
    Ok(ModelAssets {
        bundle,
        cm,
        imp,
        table,
    })
}

fn require_length(cfg: &PipelineConfig, system: SystemKind) -> Result<usize> {
    cfg.generation.length.ok_or_else(|| {
        Error::invalid(format!(
            "system `{}` needs a word budget: set generation.length or pass --length",
            system.slug()
        ))
    })
}

fn train_topic_importance(
    cfg: &PipelineConfig,
    hmm: &ContentHmm64,
) -> Result<TopicImportance> {
    let pairs = load_split(cfg, SplitName::Train)?;
    let golds = load_oracle(cfg, SplitName::Train)?;
    let joined = join_gold(&pairs, &golds)?;
    topic_importance(hmm, &joined)
}

fn per_article_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Runs one summarizer over the test split and writes its summaries.
pub fn stage_generate(cfg: &PipelineConfig, system: SystemKind) -> Result<Vec<GeneratedSummary>> {
    let test_pairs = load_split(cfg, SplitName::Test)?;
    let summaries: Vec<GeneratedSummary> = match system {
        SystemKind::NextSum | SystemKind::NextSumL => {
            let assets = load_model_assets(cfg)?;
            let extractor = FeatureExtractor::new(
                &assets.bundle.manifest,
                &assets.cm.model,
                &assets.table,
                &assets.imp.model,
            )?;
            let net = &assets.bundle.net;
            let norm = &assets.bundle.normalizer;
            let window = assets.bundle.window;
            if system == SystemKind::NextSumL {
                let k = require_length(cfg, system)?;
                test_pairs
                    .iter()
                    .map(|p| generate_with_limit(net, norm, &extractor, &p.article, window, k))
                    .collect::<Result<_>>()?
            } else {
                test_pairs
                    .iter()
                    .map(|p| generate(net, norm, &extractor, &p.article, window))
                    .collect::<Result<_>>()?
            }
        }
        SystemKind::Lead => {
            let k = require_length(cfg, system)?;
            test_pairs
                .iter()
                .map(|p| lead_baseline(&p.article, k))
                .collect::<Result<_>>()?
        }
        SystemKind::Chmm => {
            let cm = load_content_model(cfg)?;
            let ti = train_topic_importance(cfg, &cm.model)?;
            let k = require_length(cfg, system)?;
            test_pairs
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let seed = per_article_seed(cfg.generation.seed, i);
                    chmm_baseline(&cm.model, &ti, &p.article, k, seed)
                })
                .collect::<Result<_>>()?
        }
        SystemKind::Transition => {
            let cm = load_content_model(cfg)?;
            let k = require_length(cfg, system)?;
            test_pairs
                .iter()
                .map(|p| transition_baseline(&cm.model, &p.article, k, cfg.window))
                .collect::<Result<_>>()?
        }
        SystemKind::ChmmT => {
            let cm = load_content_model(cfg)?;
            let ti = train_topic_importance(cfg, &cm.model)?;
            let k = require_length(cfg, system)?;
            test_pairs
                .iter()
                .map(|p| chmm_t_baseline(&cm.model, &ti, &p.article, k, cfg.window))
                .collect::<Result<_>>()?
        }
    };
    fs::create_dir_all(&cfg.paths.outputs)?;
    write_json_lines(&cfg.summaries_path(system), &summaries)?;
    Ok(summaries)
}

fn render_abstract(pair: &Pair) -> String {
    let parts: Vec<String> = pair
        .abstract_summary
        .sentences
        .iter()
        .map(|s| s.render())
        .collect();
    parts.join(" ")
}

fn eval_next_sentence(cfg: &PipelineConfig) -> Result<NextSentenceEval> {
    let assets = load_model_assets(cfg)?;
    if assets.bundle.train_config != cfg.predictor {
        return Err(Error::ManifestMismatch(
            "model.json was trained under a different predictor config; retrain or fix the \
             config"
                .into(),
        ));
    }
    if assets.bundle.window != cfg.window {
        return Err(Error::ManifestMismatch(format!(
            "model.json was trained with window {}, config says {}",
            assets.bundle.window, cfg.window
        )));
    }
    let extractor = FeatureExtractor::new(
        &assets.bundle.manifest,
        &assets.cm.model,
        &assets.table,
        &assets.imp.model,
    )?;
    let pairs = load_split(cfg, SplitName::Test)?;
    let golds = load_oracle(cfg, SplitName::Test)?;
    let joined = join_gold(&pairs, &golds)?;
    let opts = TrainingSetOptions {
        window: assets.bundle.window,
        seed: cfg.predictor.seed,
        all_negatives: false,
    };
    next_sentence_eval(
        &assets.bundle.net,
        &assets.bundle.normalizer,
        &extractor,
        &joined,
        &opts,
    )
}

/// Scores one system's generated summaries against the reference abstracts
/// and writes the evaluation plus a length histogram CSV.
pub fn stage_evaluate(cfg: &PipelineConfig, system: SystemKind) -> Result<EvalArtifact> {
    let spath = cfg.summaries_path(system);
    require_artifact(&spath, "generate")?;
    let summaries: Vec<GeneratedSummary> = read_json_lines(&spath)?;
    if summaries.is_empty() {
        return Err(Error::invalid(format!(
            "{} holds no summaries",
            spath.display()
        )));
    }
    let test_pairs = load_split(cfg, SplitName::Test)?;
    let references: BTreeMap<&str, String> = test_pairs
        .iter()
        .map(|p| (p.article.id.as_str(), render_abstract(p)))
        .collect();

    let mut sums = [[0.0f64; 3]; 2];
    for s in &summaries {
        let reference = references.get(s.id.as_str()).ok_or_else(|| {
            Error::invalid(format!("summary `{}` matches no test article", s.id))
        })?;
        for (slot, n) in [(0usize, 1usize), (1, 2)] {
            let score = rouge_n(&s.text, reference, n, true, 0.5)?;
            sums[slot][0] += score.precision;
            sums[slot][1] += score.recall;
            sums[slot][2] += score.f_score;
        }
    }
    let count = summaries.len() as f64;
    let mean = |slot: usize| RougeMean {
        precision: sums[slot][0] / count,
        recall: sums[slot][1] / count,
        f_score: sums[slot][2] / count,
    };

    let abstracts: Vec<_> = test_pairs
        .iter()
        .map(|p| p.abstract_summary.clone())
        .collect();
    let lengths = length_report(&summaries, &abstracts)?;

    let next_sentence = if system.needs_model() {
        Some(eval_next_sentence(cfg)?)
    } else {
        None
    };

    let artifact = EvalArtifact {
        version: ARTIFACT_VERSION,
        system,
        summaries: summaries.len(),
        rouge_1: mean(0),
        rouge_2: mean(1),
        lengths,
        next_sentence,
    };
    fs::create_dir_all(&cfg.paths.outputs)?;
    write_json(&cfg.eval_path(system), &artifact)?;
    write_lengths_csv(&cfg.lengths_path(system), &artifact.lengths)?;
    Ok(artifact)
}

fn write_lengths_csv(path: &Path, lengths: &LengthReport) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(b"words,count\n")?;
    for (bin, n) in &lengths.histogram {
        writeln!(out, "{bin},{n}")?;
    }
    out.flush()?;
    Ok(())
}

/// Aggregates every evaluation present in the outputs directory into one
/// plain-text report and writes it to `report.txt`.
pub fn stage_report(cfg: &PipelineConfig) -> Result<String> {
    let mut evals = Vec::new();
    for system in SystemKind::ALL {
        let path = cfg.eval_path(system);
        if path.is_file() {
            let artifact: EvalArtifact = read_json(&path)?;
            check_version(artifact.version, "evaluation")?;
            evals.push(artifact);
        }
    }
    if evals.is_empty() {
        return Err(Error::MissingArtifact {
            path: cfg.eval_path(cfg.generation.system).display().to_string(),
            stage: "evaluate".into(),
        });
    }
    let model = if cfg.model_path().is_file() {
        Some(load_model(cfg)?)
    } else {
        None
    };
    let text = render_report(&evals, model.as_ref());
    fs::create_dir_all(&cfg.paths.outputs)?;
    fs::write(cfg.report_path(), &text)?;
    Ok(text)
}

fn render_report(evals: &[EvalArtifact], model: Option<&ModelArtifact>) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();

    let with_ns: Vec<&EvalArtifact> =
        evals.iter().filter(|e| e.next_sentence.is_some()).collect();
    if !with_ns.is_empty() {
        out.push_str("== next-sentence prediction (test split) ==\n");
        out.push_str(
            "system       timesteps  skipped  duplicates  1-of-K   bin-balanced  bin-natural\n",
        );
        for e in &with_ns {
            let ns = e.next_sentence.as_ref().expect("filtered above");
            let _ = writeln!(
                out,
                "{:<12} {:>9}  {:>7}  {:>10}  {:.4}   {:.4}        {:.4}",
                e.system.slug(),
                ns.timesteps,
                ns.skipped,
                ns.duplicates,
                ns.one_of_k_accuracy,
                ns.binary_accuracy_balanced,
                ns.binary_accuracy_natural,
            );
        }
        out.push('\n');
    }

    out.push_str("== rouge vs reference abstracts (test split, stemmed, alpha=0.5) ==\n");
    out.push_str("system       count  r1-p     r1-r     r1-f     r2-p     r2-r     r2-f\n");
    for e in evals {
        let _ = writeln!(
            out,
            "{:<12} {:>5}  {:.4}   {:.4}   {:.4}   {:.4}   {:.4}   {:.4}",
            e.system.slug(),
            e.summaries,
            e.rouge_1.precision,
            e.rouge_1.recall,
            e.rouge_1.f_score,
            e.rouge_2.precision,
            e.rouge_2.recall,
            e.rouge_2.f_score,
        );
    }
    out.push('\n');

    out.push_str("== summary lengths (words) ==\n");
    out.push_str("system       min   max   avg     ref-min  ref-max  ref-avg  tau\n");
    for e in evals {
        let l = &e.lengths;
        let tau = match l.tau_vs_abstracts {
            Some(t) => format!("{t:.4}"),
            None => "n/a".into(),
        };
        let _ = writeln!(
            out,
            "{:<12} {:>4}  {:>4}  {:>6.1}  {:>7}  {:>7}  {:>7.1}  {}",
            e.system.slug(),
            l.generated_min,
            l.generated_max,
            l.generated_avg,
            l.abstract_min,
            l.abstract_max,
            l.abstract_avg,
            tau,
        );
    }

    if let Some(m) = model {
        let _ = write!(
            out,
            "\ntraining window K={}: {:.3} of gold timesteps reachable (skipped {}, duplicates \
             {}); best dev accuracy {:.4} at epoch {}\n",
            m.window,
            m.coverage.coverage(),
            m.coverage.skipped_timesteps,
            m.coverage.duplicate_timesteps,
            m.metrics.best_dev_accuracy,
            m.metrics.best_epoch,
        );
    }
    out
}
