//! End-to-end runs driven by a TOML [`RunConfig`].
//!
//! A run writes everything under `out_dir`:
//!
//! ```text
//! data/{train,test}.tsv            the examples actually used
//! embeddings/{cased,uncased}_{train,test}.gapemb
//! features/{train,test}.csv
//! checkpoints/frozen/fold{k}/      one model per fold, with training_log.csv
//! checkpoints/finetuned/model{k}/  one classifier per ensemble member
//! predictions/{finetuned,frozen,blend}.csv
//! reports/summary.{txt,tsv,md}     per-gender scores when the test set is labelled
//! manifest.json                    config hash, seed and artifact list
//! ```
//!
//! `INCOMPLETE` exists until prediction has finished. It names the stage
//! that was running (and is left behind when that stage fails), or reads
//! `pending: predict` after a successful training half.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::info;

use crate::embedding_bank::{
    build_bundles, load_bundles, load_desk_encoder, persist_bundles, Encoder, EmbeddingMatrixFile, EncoderProfile,
    ENCODER_CACHE_ENV,
};
use crate::ensemble::{blend_sets, save_predictions, BlendWeights, Predictions};
use crate::features::parse::RuleBasedParser;
use crate::features::{featurize_dataset, read_feature_csv, write_feature_csv, ExternalSources, FeatureRegistry, FeatureVector};
use crate::gap_data::{apply_corrections, load_gap_tsv, save_gap_tsv, CorrectionSummary, CorrectionsLedger, GapExample, Label};
use crate::metrics::{render_report, score_dataset, EvalReport, PredictionMatrix, ReportFormat};
use crate::models::finetune::predict_average;
use crate::models::{
    train_finetuned, train_frozen, FinetuneConfig, FinetunedClassifier, FrozenEnsemble, FrozenInputs, FrozenSpec, HeadSpec,
    TrainConfig,
};
use crate::synth;

pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Data,
    Embed,
    Featurize,
    TrainFrozen,
    TrainFinetuned,
    Predict,
    Blend,
    Score,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Data => "data",
            Stage::Embed => "embed",
            Stage::Featurize => "featurize",
            Stage::TrainFrozen => "train-frozen",
            Stage::TrainFinetuned => "train-finetuned",
            Stage::Predict => "predict",
            Stage::Blend => "blend",
            Stage::Score => "score",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
}

impl PipelineError {
    pub fn stage(&self) -> Stage {
        match self {
            PipelineError::Config(_) => Stage::Config,
            PipelineError::Stage { stage, .. } => *stage,
        }
    }
}

fn at<E: std::error::Error + Send + Sync + 'static>(stage: Stage) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::Stage {
        stage,
        source: Box::new(e),
    }
}

fn io_at(stage: Stage, path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |e| PipelineError::Stage {
        stage,
        source: format!("{}: {e}", path.display()).into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthData {
    pub n: usize,
    /// Share of the generated rows held out as the test set.
    pub test_fraction: f64,
}

/// Either generated data or GAP files. `dev`, when given, is added to the
/// training rows.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    /// Whether the test file carries gold columns.
    #[serde(default = "yes")]
    pub test_has_gold: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corrections: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthData>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub cased: String,
    pub uncased: String,
    /// Encoder whose weights the fine-tuned path starts from.
    pub finetune: String,
    /// Layer selection for the frozen encoders; the profile default if unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<Vec<i32>>,
    /// Falls back to the environment variable when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            cased: "desk-tiny".into(),
            uncased: "desk-tiny-uncased".into(),
            finetune: "desk-tiny".into(),
            layers: None,
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// External coreference predictions by source name.
    pub external: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrozenConfig {
    pub train: TrainConfig,
    /// Head layouts; derived from the encoder profile when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heads: Option<Vec<HeadSpec>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Drives every stochastic step; the per-path training seeds are derived
    /// from it.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    #[serde(default)]
    pub encoders: EncoderConfig,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub frozen: FrozenConfig,
    #[serde(default)]
    pub finetune: FinetuneConfig,
    #[serde(default)]
    pub blend: BlendWeights,
}

impl RunConfig {
    /// The desk-scale run: 500 generated snippets split 400/100 and the
    /// built-in tiny encoders.
    pub fn desk(out_dir: impl Into<PathBuf>, seed: u64) -> Self {
        Self {
            seed,
            out_dir: out_dir.into(),
            data: DataConfig {
                synth: Some(SynthData {
                    n: 500,
                    test_fraction: 0.2,
                }),
                test_has_gold: true,
                ..DataConfig::default()
            },
            encoders: EncoderConfig::default(),
            features: FeatureConfig::default(),
            frozen: FrozenConfig {
                train: TrainConfig {
                    epochs: 40,
                    patience: 6,
                    ..TrainConfig::default()
                },
                heads: None,
            },
            finetune: FinetuneConfig {
                train: TrainConfig {
                    epochs: 20,
                    patience: 4,
                    learning_rate: 1e-3,
                    ..TrainConfig::default()
                },
                n_models: 2,
                ..FinetuneConfig::default()
            },
            blend: BlendWeights::default(),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self, PipelineError> {
        toml::from_str(s).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String, PipelineError> {
        toml::to_string(self).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    /// Joins every relative path onto `base`.
    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        for p in [
            &mut self.data.train,
            &mut self.data.dev,
            &mut self.data.test,
            &mut self.data.corrections,
            &mut self.encoders.cache_dir,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        self.features.external.values_mut().for_each(fix);
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> Result<String, PipelineError> {
        Ok(hex::encode(Sha256::digest(self.to_toml_string()?.as_bytes())))
    }

    /// Training settings for each path with seeds taken from `self.seed`.
    pub fn seeded_train_configs(&self) -> (TrainConfig, FinetuneConfig) {
        let frozen = TrainConfig {
            seed: self.seed,
            ..self.frozen.train.clone()
        };
        let mut ft = self.finetune.clone();
        ft.train.seed = self.seed.wrapping_add(1_000);
        (frozen, ft)
    }

    /// Structural checks plus existence of every referenced path.
    pub fn check(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        let d = &self.data;
        match (&d.synth, &d.train, &d.test) {
            (Some(s), None, None) => {
                if d.dev.is_some() || d.corrections.is_some() {
                    return bad("data.dev and data.corrections need file-based data".into());
                }
                if !(s.test_fraction > 0.0 && s.test_fraction < 1.0) || s.n < 10 {
                    return bad("data.synth needs n >= 10 and test_fraction in (0, 1)".into());
                }
            }
            (None, Some(_), Some(_)) => {}
            _ => return bad("data needs either [data.synth] or both data.train and data.test".into()),
        }
        if d.corrections.is_some() && !d.test_has_gold {
            return bad("corrections need a labelled test set".into());
        }
        let mut paths: Vec<(&str, &PathBuf)> = Vec::new();
        for (k, p) in [("data.train", &d.train), ("data.dev", &d.dev), ("data.test", &d.test), ("data.corrections", &d.corrections)] {
            if let Some(p) = p {
                paths.push((k, p));
            }
        }
        for (name, p) in &self.features.external {
            if !crate::features::EXTERNAL_SOURCES.contains(&name.as_str()) {
                return bad(format!("unknown external source {name}"));
            }
            paths.push(("features.external", p));
        }
        for (key, p) in paths {
            if !p.exists() {
                return bad(format!("{key}: {} does not exist", p.display()));
            }
        }
        if let Some(layers) = &self.encoders.layers {
            if layers.is_empty() {
                return bad("encoders.layers must not be empty".into());
            }
        }
        self.frozen.train.validate().map_err(|e| PipelineError::Config(format!("frozen: {e}")))?;
        self.finetune.validate().map_err(|e| PipelineError::Config(format!("finetune: {e}")))?;
        Ok(())
    }

    fn cache_dir(&self) -> Option<PathBuf> {
        self.encoders
            .cache_dir
            .clone()
            .or_else(|| std::env::var_os(ENCODER_CACHE_ENV).map(PathBuf::from))
    }
}

/// File locations inside a run directory.
#[derive(Debug, Clone)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn data(&self, split: &str) -> PathBuf {
        self.root.join("data").join(format!("{split}.tsv"))
    }

    pub fn embeddings(&self, encoder: &str, split: &str) -> PathBuf {
        self.root.join("embeddings").join(format!("{encoder}_{split}.gapemb"))
    }

    pub fn features(&self, split: &str) -> PathBuf {
        self.root.join("features").join(format!("{split}.csv"))
    }

    pub fn frozen_dir(&self) -> PathBuf {
        self.root.join("checkpoints").join("frozen")
    }

    pub fn finetuned_dir(&self, k: usize) -> PathBuf {
        self.root.join("checkpoints").join("finetuned").join(format!("model{k}"))
    }

    pub fn predictions(&self, name: &str) -> PathBuf {
        self.root.join("predictions").join(format!("{name}.csv"))
    }

    pub fn report(&self, name: &str, format: ReportFormat) -> PathBuf {
        let ext = match format {
            ReportFormat::Txt => "txt",
            ReportFormat::Tsv => "tsv",
            ReportFormat::Md => "md",
        };
        self.root.join("reports").join(format!("{name}.{ext}"))
    }

    pub fn marker(&self) -> PathBuf {
        self.root.join(INCOMPLETE_MARKER)
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join(MANIFEST)
    }

    fn mark(&self, stage: Stage) -> Result<(), PipelineError> {
        let path = self.marker();
        fs::write(&path, format!("stage: {stage}\n")).map_err(io_at(stage, &path))
    }
}

fn ensure_parent(stage: Stage, path: &Path) -> Result<(), PipelineError> {
    match path.parent() {
        Some(dir) => fs::create_dir_all(dir).map_err(io_at(stage, dir)),
        None => Ok(()),
    }
}

fn labels_of(examples: &[GapExample]) -> Result<Vec<Label>, PipelineError> {
    examples
        .iter()
        .map(|e| {
            e.gold.ok_or_else(|| PipelineError::Stage {
                stage: Stage::Data,
                source: format!("training example {} has no gold label", e.id).into(),
            })
        })
        .collect()
}

/// Loads or generates the training and test examples.
pub fn load_splits(cfg: &RunConfig) -> Result<(Vec<GapExample>, Vec<GapExample>), PipelineError> {
    let stage = Stage::Data;
    let d = &cfg.data;
    if let Some(s) = &d.synth {
        let all = synth::generate(s.n, cfg.seed);
        let n_test = ((s.n as f64) * s.test_fraction).round() as usize;
        let n_train = s.n - n_test.clamp(1, s.n - 1);
        return Ok((all[..n_train].to_vec(), all[n_train..].to_vec()));
    }
    let (Some(train_path), Some(test_path)) = (&d.train, &d.test) else {
        return Err(PipelineError::Config("no data source".into()));
    };
    let mut train = load_gap_tsv(train_path, true).map_err(at(stage))?;
    if let Some(dev) = &d.dev {
        train.extend(load_gap_tsv(dev, true).map_err(at(stage))?);
    }
    let test = load_gap_tsv(test_path, d.test_has_gold).map_err(at(stage))?;
    Ok((train, test))
}

fn embed(
    examples: &[GapExample],
    name: &str,
    layers: Option<&[i32]>,
    cache: Option<&Path>,
    with_derived: bool,
) -> Result<EmbeddingMatrixFile, PipelineError> {
    let stage = Stage::Embed;
    let enc = load_desk_encoder(name, layers, cache).map_err(at(stage))?;
    let profile = enc.profile().clone();
    let rows = build_bundles(examples, &enc, with_derived).map_err(at(stage))?;
    EmbeddingMatrixFile::new(profile, with_derived, rows).map_err(at(stage))
}

fn external_sources(cfg: &RunConfig) -> Result<ExternalSources, PipelineError> {
    let mut sources = ExternalSources::default();
    for (name, path) in &cfg.features.external {
        sources.load_source(name, path).map_err(at(Stage::Featurize))?;
    }
    Ok(sources)
}

fn write_features(path: &Path, rows: &[FeatureVector]) -> Result<(), PipelineError> {
    let stage = Stage::Featurize;
    ensure_parent(stage, path)?;
    let file = fs::File::create(path).map_err(io_at(stage, path))?;
    write_feature_csv(std::io::BufWriter::new(file), &FeatureRegistry::v1(), rows).map_err(at(stage))
}

fn read_features(path: &Path) -> Result<Vec<FeatureVector>, PipelineError> {
    let stage = Stage::Predict;
    let file = fs::File::open(path).map_err(io_at(stage, path))?;
    read_feature_csv(std::io::BufReader::new(file), &FeatureRegistry::v1()).map_err(at(stage))
}

fn frozen_inputs(
    stage: Stage,
    examples: &[GapExample],
    cased: &EmbeddingMatrixFile,
    uncased: &EmbeddingMatrixFile,
    features: &[FeatureVector],
) -> Result<FrozenInputs, PipelineError> {
    let ids: Vec<String> = examples.iter().map(|e| e.id.clone()).collect();
    FrozenInputs::build(&ids, &cased.rows, &uncased.rows, features).map_err(at(stage))
}

/// What the training half of a run produced.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub train_examples: usize,
    pub test_examples: usize,
    pub frozen_models: usize,
    pub finetuned_models: usize,
    pub profiles: Vec<EncoderProfile>,
}

/// Data, embedding, featurisation and both training stages. Artifacts are
/// written under `cfg.out_dir`.
pub fn train_stages(cfg: &RunConfig) -> Result<TrainOutcome, PipelineError> {
    cfg.check()?;
    let layout = RunLayout::new(&cfg.out_dir);
    fs::create_dir_all(&layout.root).map_err(io_at(Stage::Data, &layout.root))?;

    layout.mark(Stage::Data)?;
    let (train, test) = load_splits(cfg)?;
    let y = labels_of(&train)?;
    for (split, rows) in [("train", &train), ("test", &test)] {
        let path = layout.data(split);
        ensure_parent(Stage::Data, &path)?;
        save_gap_tsv(&path, rows).map_err(at(Stage::Data))?;
    }
    info!(train = train.len(), test = test.len(), "data ready");

    layout.mark(Stage::Embed)?;
    let cache = cfg.cache_dir();
    let layers = cfg.encoders.layers.as_deref();
    let mut jobs = Vec::new();
    for (key, name, derived) in [("cased", &cfg.encoders.cased, false), ("uncased", &cfg.encoders.uncased, true)] {
        for (split, rows) in [("train", &train), ("test", &test)] {
            jobs.push((key, split, name, rows, derived));
        }
    }
    // Banks are independent; collect keeps their order fixed.
    let built = jobs
        .par_iter()
        .map(|&(key, split, name, rows, derived)| Ok(((key, split), embed(rows, name, layers, cache.as_deref(), derived)?)))
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let mut banks = BTreeMap::new();
    for (key, bank) in built {
        let path = layout.embeddings(key.0, key.1);
        ensure_parent(Stage::Embed, &path)?;
        persist_bundles(&path, &bank).map_err(at(Stage::Embed))?;
        banks.insert(key, bank);
    }
    info!(span_dim = banks[&("cased", "train")].profile.span_dim(), "embeddings written");

    layout.mark(Stage::Featurize)?;
    let sources = external_sources(cfg)?;
    let parser = RuleBasedParser;
    let train_feats = featurize_dataset(&train, &parser, &sources).map_err(at(Stage::Featurize))?;
    let test_feats = featurize_dataset(&test, &parser, &sources).map_err(at(Stage::Featurize))?;
    write_features(&layout.features("train"), &train_feats)?;
    write_features(&layout.features("test"), &test_feats)?;

    layout.mark(Stage::TrainFrozen)?;
    let (frozen_cfg, ft_cfg) = cfg.seeded_train_configs();
    let (cased, uncased) = (&banks[&("cased", "train")], &banks[&("uncased", "train")]);
    let inputs = frozen_inputs(Stage::TrainFrozen, &train, cased, uncased, &train_feats)?;
    let mut spec = FrozenSpec::default_for(inputs.span_dim(), inputs.feature_dim());
    if let Some(heads) = &cfg.frozen.heads {
        spec.heads = heads.clone();
    }
    spec.encoders = vec![cased.profile.clone(), uncased.profile.clone()];
    let frozen = train_frozen(&inputs, &y, &spec, &frozen_cfg).map_err(at(Stage::TrainFrozen))?;
    frozen.save(&layout.frozen_dir()).map_err(at(Stage::TrainFrozen))?;
    info!(models = frozen.models.len(), "frozen path trained");

    layout.mark(Stage::TrainFinetuned)?;
    let stage = Stage::TrainFinetuned;
    let encoder = load_desk_encoder(&cfg.encoders.finetune, None, cache.as_deref()).map_err(at(stage))?;
    let members = train_finetuned(&train, &encoder, &ft_cfg).map_err(at(stage))?;
    for (k, (model, log)) in members.iter().enumerate() {
        let dir = layout.finetuned_dir(k);
        model.save(&dir).map_err(at(stage))?;
        let log_path = dir.join("training_log.csv");
        fs::write(&log_path, log.to_csv()).map_err(io_at(stage, &log_path))?;
    }
    info!(models = members.len(), "fine-tuned path trained");

    let outcome = TrainOutcome {
        train_examples: train.len(),
        test_examples: test.len(),
        frozen_models: frozen.models.len(),
        finetuned_models: members.len(),
        profiles: spec.encoders,
    };
    write_manifest(cfg, &layout, &outcome)?;
    fs::write(layout.marker(), "pending: predict\n").map_err(io_at(Stage::TrainFinetuned, &layout.marker()))?;
    Ok(outcome)
}

#[derive(Debug, Clone, Serialize)]
struct Manifest<'a> {
    config_hash: String,
    seed: u64,
    registry_version: &'static str,
    feature_count: usize,
    encoders: &'a [EncoderProfile],
    train_examples: usize,
    test_examples: usize,
    frozen_models: usize,
    finetuned_models: usize,
    blend: BlendWeights,
}

fn write_manifest(cfg: &RunConfig, layout: &RunLayout, trained: &TrainOutcome) -> Result<(), PipelineError> {
    let registry = FeatureRegistry::v1();
    let manifest = Manifest {
        config_hash: cfg.hash()?,
        seed: cfg.seed,
        registry_version: registry.version,
        feature_count: registry.len(),
        encoders: &trained.profiles,
        train_examples: trained.train_examples,
        test_examples: trained.test_examples,
        frozen_models: trained.frozen_models,
        finetuned_models: trained.finetuned_models,
        blend: cfg.blend,
    };
    let path = layout.manifest();
    let json = serde_json::to_string_pretty(&manifest).map_err(at(Stage::TrainFinetuned))?;
    fs::write(&path, json + "\n").map_err(io_at(Stage::TrainFinetuned, &path))
}

/// Scores of one prediction set, before and after label corrections.
#[derive(Debug, Clone)]
pub struct PredictOutcome {
    pub predictions: BTreeMap<String, Predictions>,
    pub reports: Vec<EvalReport>,
    pub corrected: Option<(Vec<EvalReport>, CorrectionSummary)>,
}

fn load_finetuned(layout: &RunLayout) -> Result<Vec<FinetunedClassifier>, PipelineError> {
    let mut out = Vec::new();
    while layout.finetuned_dir(out.len()).is_dir() {
        out.push(FinetunedClassifier::load(&layout.finetuned_dir(out.len())).map_err(at(Stage::Predict))?);
    }
    if out.is_empty() {
        return Err(PipelineError::Stage {
            stage: Stage::Predict,
            source: "no fine-tuned checkpoints".into(),
        });
    }
    Ok(out)
}

fn tagged(examples: &[GapExample], triples: Vec<crate::ensemble::PredictionTriple>) -> Predictions {
    examples.iter().map(|e| e.id.clone()).zip(triples).collect()
}

fn score_all(examples: &[GapExample], preds: &BTreeMap<String, Predictions>) -> Result<Vec<EvalReport>, PipelineError> {
    ["finetuned", "frozen", "blend"]
        .iter()
        .map(|name| {
            let m: PredictionMatrix = preds[*name].iter().cloned().collect();
            score_dataset(name, examples, &m).map_err(at(Stage::Score))
        })
        .collect()
}

fn write_reports(layout: &RunLayout, name: &str, reports: &[EvalReport]) -> Result<(), PipelineError> {
    for fmt in [ReportFormat::Txt, ReportFormat::Tsv, ReportFormat::Md] {
        let path = layout.report(name, fmt);
        ensure_parent(Stage::Score, &path)?;
        fs::write(&path, render_report(reports, fmt)).map_err(io_at(Stage::Score, &path))?;
    }
    Ok(())
}

/// Prediction, blending and scoring from the artifacts of [`train_stages`].
pub fn predict_stages(cfg: &RunConfig) -> Result<PredictOutcome, PipelineError> {
    cfg.check()?;
    let layout = RunLayout::new(&cfg.out_dir);
    let stage = Stage::Predict;
    layout.mark(stage)?;
    let test = load_gap_tsv(&layout.data("test"), cfg.data.test_has_gold).map_err(at(stage))?;
    let cased = load_bundles(&layout.embeddings("cased", "test")).map_err(at(stage))?;
    let uncased = load_bundles(&layout.embeddings("uncased", "test")).map_err(at(stage))?;
    let feats = read_features(&layout.features("test"))?;
    let inputs = frozen_inputs(stage, &test, &cased, &uncased, &feats)?;

    let frozen = FrozenEnsemble::load(&layout.frozen_dir()).map_err(at(stage))?;
    let frozen_preds = tagged(&test, frozen.predict(&inputs).map_err(at(stage))?);
    let members = load_finetuned(&layout)?;
    let ft_preds = tagged(&test, predict_average(&members, &test).map_err(at(stage))?);

    layout.mark(Stage::Blend)?;
    let blended = blend_sets(&ft_preds, &frozen_preds, cfg.blend).map_err(at(Stage::Blend))?;
    let mut predictions = BTreeMap::new();
    predictions.insert("finetuned".to_string(), ft_preds);
    predictions.insert("frozen".to_string(), frozen_preds);
    predictions.insert("blend".to_string(), blended);
    for (name, preds) in &predictions {
        let path = layout.predictions(name);
        ensure_parent(Stage::Blend, &path)?;
        save_predictions(&path, preds).map_err(at(Stage::Blend))?;
    }

    let mut outcome = PredictOutcome {
        predictions,
        reports: Vec::new(),
        corrected: None,
    };
    if cfg.data.test_has_gold {
        layout.mark(Stage::Score)?;
        outcome.reports = score_all(&test, &outcome.predictions)?;
        write_reports(&layout, "summary", &outcome.reports)?;
        if let Some(path) = &cfg.data.corrections {
            let ledger = CorrectionsLedger::load(path).map_err(at(Stage::Score))?;
            let (fixed, summary) = apply_corrections(&test, &ledger).map_err(at(Stage::Score))?;
            let reports = score_all(&fixed, &outcome.predictions)?;
            write_reports(&layout, "corrected", &reports)?;
            outcome.corrected = Some((reports, summary));
        }
    }
    let marker = layout.marker();
    fs::remove_file(&marker).map_err(io_at(Stage::Score, &marker))?;
    Ok(outcome)
}

/// Both halves of a run.
pub fn run(cfg: &RunConfig) -> Result<(TrainOutcome, PredictOutcome), PipelineError> {
    let trained = train_stages(cfg)?;
    let predicted = predict_stages(cfg)?;
    Ok((trained, predicted))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(dir: &Path) -> RunConfig {
        let mut cfg = RunConfig::desk(dir, 5);
        cfg.data.synth = Some(SynthData {
            n: 40,
            test_fraction: 0.25,
        });
        cfg.frozen.train.epochs = 2;
        cfg.frozen.train.folds = 2;
        cfg.finetune.train.epochs = 1;
        cfg.finetune.train.folds = 2;
        cfg.finetune.n_models = 1;
        cfg
    }

    #[test]
    fn config_round_trips_through_toml() {
        let mut cfg = RunConfig::desk("runs/desk", 42);
        cfg.encoders.layers = Some(vec![-1, -2]);
        cfg.features.external.insert("corenlp".into(), "ext/corenlp.csv".into());
        let text = cfg.to_toml_string().unwrap();
        let back = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
        cfg.seed = 43;
        assert_ne!(back.hash().unwrap(), cfg.hash().unwrap());
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = RunConfig::from_toml_str(
            "seed = 1\nout_dir = \"out\"\n[data]\ntrain = \"a.tsv\"\ntest = \"b.tsv\"\n[blend]\nw_finetuned = 0.5\nw_frozen = 0.5\n",
        )
        .unwrap();
        assert_eq!(cfg.encoders, EncoderConfig::default());
        assert!(cfg.data.test_has_gold);
        assert_eq!(cfg.blend.finetuned(), 0.5);
        assert!(RunConfig::from_toml_str("seed = 1\nout_dir = \"o\"\n[data]\nbogus = 1\n").is_err());
    }

    #[test]
    fn check_rejects_missing_paths_and_mixed_sources() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::desk(dir.path(), 1);
        cfg.check().unwrap();
        cfg.data.train = Some(dir.path().join("train.tsv"));
        assert!(cfg.check().is_err());
        cfg.data.synth = None;
        cfg.data.test = Some(dir.path().join("test.tsv"));
        let err = cfg.check().unwrap_err().to_string();
        assert!(err.contains("does not exist"), "{err}");
    }

    #[test]
    fn rebase_only_touches_relative_paths() {
        let mut cfg = RunConfig::desk("out", 1);
        cfg.data.corrections = Some("/abs/ledger.tsv".into());
        cfg.rebase(Path::new("/base"));
        assert_eq!(cfg.out_dir, PathBuf::from("/base/out"));
        assert_eq!(cfg.data.corrections, Some(PathBuf::from("/abs/ledger.tsv")));
    }

    #[test]
    fn small_run_writes_every_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(&dir.path().join("run"));
        let (trained, predicted) = run(&cfg).unwrap();
        assert_eq!((trained.train_examples, trained.test_examples), (30, 10));
        let layout = RunLayout::new(&cfg.out_dir);
        assert!(!layout.marker().exists());
        assert!(layout.manifest().exists());
        for name in ["finetuned", "frozen", "blend"] {
            assert!(layout.predictions(name).exists());
            assert_eq!(predicted.predictions[name].len(), 10);
        }
        assert_eq!(predicted.reports.len(), 3);
        assert!(layout.report("summary", ReportFormat::Md).exists());
        assert!(layout.frozen_dir().join("fold1").join("training_log.csv").exists());
    }

    #[test]
    fn failing_stage_is_named_and_marker_kept() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(&dir.path().join("run"));
        cfg.encoders.cased = "no-such-encoder".into();
        cfg.encoders.cache_dir = Some(dir.path().to_path_buf());
        let err = run(&cfg).unwrap_err();
        assert_eq!(err.stage(), Stage::Embed);
        assert!(err.to_string().starts_with("stage embed failed"));
        let marker = fs::read_to_string(RunLayout::new(&cfg.out_dir).marker()).unwrap();
        assert_eq!(marker.trim(), "stage: embed");
    }
}
