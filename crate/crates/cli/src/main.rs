//! `gapres`: command-line front end for the pronoun-resolution pipeline.
//!
//! Exit codes: 0 on success, 1 when data or predictions fail validation or
//! scoring, 2 on I/O and configuration problems.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand};
use gapres_core::embedding_bank::{build_bundles, load_encoder, parse_layer_list, persist_bundles, EmbeddingMatrixFile, ENCODER_CACHE_ENV};
use gapres_core::ensemble::{blend_sets, load_predictions, save_predictions, BlendWeights, EnsembleError};
use gapres_core::features::parse::RuleBasedParser;
use gapres_core::features::{featurize_dataset, write_feature_csv, ExternalSources, FeatureRegistry, EXTERNAL_SIMPLEX_TOL};
use gapres_core::gap_data::{apply_corrections, read_gap_tsv, save_gap_tsv, validate, CorrectionsLedger, GapError};
use gapres_core::metrics::{render_report, score_dataset, EvalReport, MetricError, PredictionMatrix, ReportFormat};
use gapres_core::pipeline::{self, PipelineError, RunConfig, Stage};
use gapres_core::synth;

#[derive(Parser)]
#[command(name = "gapres", version, about = "Gender-balanced pronoun resolution on GAP-style data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a GAP TSV file and list every violation.
    Validate {
        dataset: PathBuf,
        /// The file has no A-coref/B-coref columns.
        #[arg(long)]
        unlabeled: bool,
    },
    /// Write a synthetic labelled dataset.
    Synth {
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build span embeddings for a dataset.
    Embed {
        dataset: PathBuf,
        /// `cased`, `uncased`, or an encoder name.
        #[arg(long, default_value = "cased")]
        encoder: String,
        /// Comma-separated layer indices, e.g. `-4,-5,-6`.
        #[arg(long, allow_hyphen_values = true)]
        layers: Option<String>,
        /// Also store the derived product vectors (default for `uncased`).
        #[arg(long)]
        derived: bool,
        #[arg(long)]
        unlabeled: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the hand-crafted feature matrix.
    Featurize {
        dataset: PathBuf,
        /// External predictions as `source=path`; repeatable.
        #[arg(long, value_name = "SOURCE=PATH")]
        external: Vec<String>,
        #[arg(long)]
        unlabeled: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Embed, featurize and train both paths.
    Train(RunArgs),
    /// Predict, blend and score from a trained run directory.
    Predict(RunArgs),
    /// Convex combination of two prediction files.
    Blend {
        finetuned: PathBuf,
        frozen: PathBuf,
        /// `w_finetuned,w_frozen`.
        #[arg(long, default_value = "0.65,0.35")]
        blend_weights: BlendWeights,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-gender scores of a prediction file.
    Score {
        gold: PathBuf,
        predictions: PathBuf,
        /// Label corrections (`id<TAB>label`); prints scores before and after.
        #[arg(long)]
        corrections: Option<PathBuf>,
        #[arg(long, default_value = "txt")]
        format: ReportFormat,
    },
    /// The whole experiment, from data to reports.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration; the desk-scale preset when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Layer selection for the frozen encoders.
    #[arg(long, allow_hyphen_values = true)]
    layers: Option<String>,
    /// Cased encoder, also used as the fine-tuning starting point.
    #[arg(long)]
    encoder: Option<String>,
    #[arg(long)]
    blend_weights: Option<BlendWeights>,
    #[arg(long)]
    corrections: Option<PathBuf>,
    #[arg(long, default_value = "txt")]
    format: ReportFormat,
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn invalid(e: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 1, error: e.into() }
}

fn io(e: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: e.into() }
}

impl From<GapError> for Failure {
    fn from(e: GapError) -> Self {
        match e {
            GapError::Io { .. } => io(e),
            _ => invalid(e),
        }
    }
}

impl From<EnsembleError> for Failure {
    fn from(e: EnsembleError) -> Self {
        match e {
            EnsembleError::Io { .. } => io(e),
            _ => invalid(e),
        }
    }
}

impl From<MetricError> for Failure {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::Gap(g) => g.into(),
            _ => invalid(e),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e.stage() {
            Stage::Score => invalid(e),
            _ => io(e),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn parse_layers(s: Option<&str>) -> Result<Option<Vec<i32>>, Failure> {
    s.map(|s| parse_layer_list(s).map_err(io)).transpose()
}

fn write_parent(path: &Path) -> Result<(), Failure> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| io(anyhow!("{}: {e}", dir.display()))),
        _ => Ok(()),
    }
}

fn cmd_validate(dataset: &Path, unlabeled: bool) -> CmdResult {
    let rows = read_gap_tsv(dataset, !unlabeled)?;
    let violations = validate(&rows);
    for v in &violations {
        println!("{v}");
    }
    println!("{} examples, {} violations", rows.len(), violations.len());
    if violations.is_empty() {
        Ok(())
    } else {
        Err(invalid(anyhow!("{} violation(s) in {}", violations.len(), dataset.display())))
    }
}

fn cmd_synth(n: usize, seed: u64, out: &Path) -> CmdResult {
    if n == 0 {
        return Err(io(anyhow!("--n must be at least 1")));
    }
    write_parent(out)?;
    save_gap_tsv(out, &synth::generate(n, seed))?;
    println!("wrote {n} examples to {}", out.display());
    Ok(())
}

fn cmd_embed(dataset: &Path, encoder: &str, layers: Option<&str>, derived: bool, unlabeled: bool, out: &Path) -> CmdResult {
    let rows = read_gap_tsv(dataset, !unlabeled)?;
    let violations = validate(&rows);
    if let Some(v) = violations.first() {
        return Err(invalid(anyhow!("{} violation(s); first: {v}", violations.len())));
    }
    let defaults = pipeline::EncoderConfig::default();
    let name = match encoder {
        "cased" => defaults.cased.as_str(),
        "uncased" => defaults.uncased.as_str(),
        other => other,
    };
    let derived = derived || encoder == "uncased";
    let cache = std::env::var_os(ENCODER_CACHE_ENV).map(PathBuf::from);
    let layers = parse_layers(layers)?;
    let enc = load_encoder(name, layers.as_deref(), cache.as_deref()).map_err(io)?;
    let bundles = build_bundles(&rows, enc.as_ref(), derived).map_err(invalid)?;
    let file = EmbeddingMatrixFile::new(enc.profile().clone(), derived, bundles).map_err(invalid)?;
    write_parent(out)?;
    persist_bundles(out, &file).map_err(io)?;
    println!("wrote {} bundles ({} values each) to {}", file.rows.len(), file.row_dim(), out.display());
    Ok(())
}

fn cmd_featurize(dataset: &Path, external: &[String], unlabeled: bool, out: &Path) -> CmdResult {
    let rows = read_gap_tsv(dataset, !unlabeled)?;
    let mut sources = ExternalSources::default();
    for spec in external {
        let (name, path) = spec
            .split_once('=')
            .ok_or_else(|| io(anyhow!("--external expects SOURCE=PATH, got {spec:?}")))?;
        sources.load_source(name, Path::new(path)).map_err(io)?;
    }
    let feats = featurize_dataset(&rows, &RuleBasedParser, &sources).map_err(invalid)?;
    write_parent(out)?;
    let file = fs::File::create(out).map_err(|e| io(anyhow!("{}: {e}", out.display())))?;
    let registry = FeatureRegistry::v1();
    write_feature_csv(std::io::BufWriter::new(file), &registry, &feats).map_err(io)?;
    println!("wrote {} rows × {} features to {}", feats.len(), registry.len(), out.display());
    Ok(())
}

fn cmd_blend(finetuned: &Path, frozen: &Path, weights: BlendWeights, out: &Path) -> CmdResult {
    let ft = load_predictions(finetuned, EXTERNAL_SIMPLEX_TOL)?;
    let fr = load_predictions(frozen, EXTERNAL_SIMPLEX_TOL)?;
    let blended = blend_sets(&ft, &fr, weights)?;
    write_parent(out)?;
    save_predictions(out, &blended)?;
    println!("wrote {} blended rows to {}", blended.len(), out.display());
    Ok(())
}

fn print_reports(title: impl Display, reports: &[EvalReport], format: ReportFormat) {
    println!("{title}");
    print!("{}", render_report(reports, format));
}

fn cmd_score(gold: &Path, predictions: &Path, corrections: Option<&Path>, format: ReportFormat) -> CmdResult {
    let examples = read_gap_tsv(gold, true)?;
    let violations = validate(&examples);
    if let Some(v) = violations.first() {
        return Err(invalid(anyhow!("gold file has {} violation(s); first: {v}", violations.len())));
    }
    let preds: PredictionMatrix = load_predictions(predictions, EXTERNAL_SIMPLEX_TOL)?.into_iter().collect();
    let name = predictions
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "predictions".into());
    let report = score_dataset(&name, &examples, &preds)?;
    match corrections {
        None => print!("{}", render_report(&[report], format)),
        Some(path) => {
            let ledger = CorrectionsLedger::load(path)?;
            let (fixed, summary) = apply_corrections(&examples, &ledger)?;
            let after = score_dataset(&name, &fixed, &preds)?;
            print_reports("original labels", &[report], format);
            println!();
            print_reports("corrected labels", &[after], format);
            println!();
            println!(
                "corrected labels changed: {} ({} feminine, {} masculine)",
                summary.changed, summary.changed_feminine, summary.changed_masculine
            );
        }
    }
    Ok(())
}

fn run_config(args: &RunArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::desk("runs/desk", 42),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    if let Some(layers) = parse_layers(args.layers.as_deref())? {
        cfg.encoders.layers = Some(layers);
    }
    if let Some(name) = &args.encoder {
        cfg.encoders.cased = name.clone();
        cfg.encoders.finetune = name.clone();
    }
    if let Some(w) = args.blend_weights {
        cfg.blend = w;
    }
    if let Some(c) = &args.corrections {
        cfg.data.corrections = Some(c.clone());
    }
    cfg.check()?;
    Ok(cfg)
}

fn report_outcome(outcome: &pipeline::PredictOutcome, format: ReportFormat) {
    if outcome.reports.is_empty() {
        println!("test set is unlabelled; predictions written without scores");
        return;
    }
    print_reports("held-out scores", &outcome.reports, format);
    if let Some((reports, summary)) = &outcome.corrected {
        println!();
        print_reports(
            format!("after corrections ({} labels changed)", summary.changed),
            reports,
            format,
        );
    }
}

fn cmd_train(args: &RunArgs) -> CmdResult {
    let cfg = run_config(args)?;
    let t = pipeline::train_stages(&cfg)?;
    println!(
        "trained {} frozen and {} fine-tuned models on {} examples under {}",
        t.frozen_models,
        t.finetuned_models,
        t.train_examples,
        cfg.out_dir.display()
    );
    Ok(())
}

fn cmd_predict(args: &RunArgs) -> CmdResult {
    let cfg = run_config(args)?;
    let outcome = pipeline::predict_stages(&cfg)?;
    report_outcome(&outcome, args.format);
    Ok(())
}

fn cmd_run(args: &RunArgs) -> CmdResult {
    let cfg = run_config(args)?;
    let (_, outcome) = pipeline::run(&cfg)?;
    report_outcome(&outcome, args.format);
    println!("artifacts in {}", cfg.out_dir.display());
    Ok(())
}

fn dispatch(cmd: Command) -> CmdResult {
    match cmd {
        Command::Validate { dataset, unlabeled } => cmd_validate(&dataset, unlabeled),
        Command::Synth { n, seed, out } => cmd_synth(n, seed, &out),
        Command::Embed {
            dataset,
            encoder,
            layers,
            derived,
            unlabeled,
            out,
        } => cmd_embed(&dataset, &encoder, layers.as_deref(), derived, unlabeled, &out),
        Command::Featurize {
            dataset,
            external,
            unlabeled,
            out,
        } => cmd_featurize(&dataset, &external, unlabeled, &out),
        Command::Train(args) => cmd_train(&args),
        Command::Predict(args) => cmd_predict(&args),
        Command::Blend {
            finetuned,
            frozen,
            blend_weights,
            out,
        } => cmd_blend(&finetuned, &frozen, blend_weights, &out),
        Command::Score {
            gold,
            predictions,
            corrections,
            format,
        } => cmd_score(&gold, &predictions, corrections.as_deref(), format),
        Command::Run(args) => cmd_run(&args),
    }
}

fn main() -> ExitCode {
    let level = if std::env::var_os("GAPRES_VERBOSE").is_some() {
        tracing::Level::INFO
    } else {
        tracing::Level::WARN
    };
    tracing_subscriber::fmt().with_writer(std::io::stderr).with_max_level(level).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}
