//! The `psylm` subcommands: argument definitions and execution.
//!
//! Every subcommand that writes a file also writes a run manifest beside
//! its primary output, recording flags, seeds, and SHA-256 checksums of
//! all files read and written. Reports going to stdout get no manifest.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::collections::BTreeMap;

use psylm_core::corpus::{build_vocab, tokenize, Modality, TokenizeOptions};
use psylm_core::meta::{self, StepwiseOutcome};
use psylm_core::ngram::{self, KnVariant};
use psylm_core::ppp::{self, PppOptions, RegressionKind};
use psylm_core::regression::GamOptions;
use psylm_core::sgtest::{self, item_key};
use psylm_core::surprisal::{align, spillover_features, TableMeta};
use psylm_core::synth::{self, GeneratorSpec};
use psylm_core::{NGramModel, RtDataset};

use crate::manifest::RunManifest;
use crate::{arpa, plot, read_file, suite, tsv, write_file, CliError};

#[derive(Debug, Parser)]
#[command(
    name = "psylm",
    version,
    about = "Train and evaluate language models as psycholinguistic subjects",
    propagate_version = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a Kneser-Ney n-gram model and export it as ARPA
    TrainNgram(TrainNgramArgs),
    /// Perplexity of text under a model, or of an existing surprisal table
    Perplexity(PerplexityArgs),
    /// Per-word surprisal table for stimulus text or a test suite
    Surprisal(SurprisalArgs),
    /// Cross-validated ΔLogLik of surprisal over a baseline regression
    EvalPpp(EvalPppArgs),
    /// Score a syntactic-generalization suite from a surprisal table
    SgScore(SgScoreArgs),
    /// Across-model analyses: perplexity vs ΔLogLik and SG
    Meta(MetaArgs),
    /// Generate synthetic reading times with known ground truth
    Simulate(SimulateArgs),
    /// Render a partial-effect curve as SVG
    PlotCurve(PlotCurveArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KnVariantArg {
    Modified,
    Unmodified,
}

impl From<KnVariantArg> for KnVariant {
    fn from(v: KnVariantArg) -> KnVariant {
        match v {
            KnVariantArg::Modified => KnVariant::Modified,
            KnVariantArg::Unmodified => KnVariant::Unmodified,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModalityArg {
    /// Eye-tracking (first-pass gaze durations)
    Eye,
    /// Self-paced reading
    Spr,
}

impl From<ModalityArg> for Modality {
    fn from(v: ModalityArg) -> Modality {
        match v {
            ModalityArg::Eye => Modality::EyeTracking,
            ModalityArg::Spr => Modality::SelfPaced,
        }
    }
}

impl ModalityArg {
    fn as_str(self) -> &'static str {
        match self {
            ModalityArg::Eye => "eye",
            ModalityArg::Spr => "spr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegressionArg {
    Linear,
    Gam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaseArg {
    /// Natural log (nats per token)
    Nats,
    /// Log base 2 (bits per token)
    Bits,
}

#[derive(Debug, Args)]
pub struct TrainNgramArgs {
    /// Training text, one sentence per line
    pub corpus: PathBuf,
    /// Output ARPA file
    #[arg(short, long)]
    pub output: PathBuf,
    /// Model order
    #[arg(long, default_value_t = 5)]
    pub order: usize,
    /// Kneser-Ney discounting variant
    #[arg(long, value_enum, default_value_t = KnVariantArg::Modified)]
    pub kn_variant: KnVariantArg,
    /// Replace words seen fewer than this many times with <unk>
    #[arg(long, default_value_t = 1)]
    pub min_count: u32,
    /// Lowercase all tokens
    #[arg(long)]
    pub lowercase: bool,
    /// Strip outer ASCII punctuation from tokens
    #[arg(long)]
    pub strip_punctuation: bool,
}

#[derive(Debug, Args)]
pub struct PerplexityArgs {
    /// ARPA model (required with --text)
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Score this text, one sentence per line
    #[arg(long)]
    pub text: Option<PathBuf>,
    /// Compute from an existing surprisal table instead of scoring text
    #[arg(long)]
    pub surprisal: Option<PathBuf>,
    /// Lowercase tokens before lookup (match the training flags)
    #[arg(long)]
    pub lowercase: bool,
    /// Strip outer punctuation before lookup (match the training flags)
    #[arg(long)]
    pub strip_punctuation: bool,
    /// Output JSON (stdout when omitted)
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SurprisalArgs {
    /// ARPA model
    #[arg(long)]
    pub model: PathBuf,
    /// Stimulus text, one item per line (items become s0001, s0002, ...)
    #[arg(long)]
    pub text: Option<PathBuf>,
    /// Score the concatenated regions of a test-suite document instead
    #[arg(long)]
    pub suite: Option<PathBuf>,
    /// Output surprisal TSV
    #[arg(short, long)]
    pub output: PathBuf,
    /// Model label recorded in the table (default: model file stem)
    #[arg(long)]
    pub model_id: Option<String>,
    /// Vocabulary-group label (default: the model's vocabulary id)
    #[arg(long)]
    pub vocab_group: Option<String>,
    /// Architecture label recorded in the table
    #[arg(long, default_value = "ngram")]
    pub architecture: String,
    /// Lowercase stimulus tokens (match the training flags)
    #[arg(long)]
    pub lowercase: bool,
    /// Strip outer punctuation from stimulus tokens
    #[arg(long)]
    pub strip_punctuation: bool,
}

#[derive(Debug, Args)]
pub struct EvalPppArgs {
    /// Reading-time TSV
    #[arg(long)]
    pub rt: PathBuf,
    /// Surprisal TSV
    #[arg(long)]
    pub surprisal: PathBuf,
    /// Frequency-norm TSV
    #[arg(long)]
    pub freq: PathBuf,
    /// Reading-time modality
    #[arg(long, value_enum)]
    pub modality: ModalityArg,
    /// Spillover window (default: 1 for eye, 3 for spr)
    #[arg(long)]
    pub spillover: Option<usize>,
    /// Regression family
    #[arg(long, value_enum, default_value_t = RegressionArg::Linear)]
    pub regression: RegressionArg,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Keep all rows of an item in the same fold
    #[arg(long)]
    pub by_item: bool,
    /// Log base for reported ΔLogLik
    #[arg(long, value_enum, default_value_t = BaseArg::Nats)]
    pub base: BaseArg,
    /// Corpus label in the report (default: the RT file stem)
    #[arg(long)]
    pub corpus: Option<String>,
    /// Basis size for surprisal smooths (GAM)
    #[arg(long, default_value_t = 20)]
    pub k_smooth: usize,
    /// Marginal basis size for the frequency:length tensor (GAM)
    #[arg(long, default_value_t = 5)]
    pub k_tensor: usize,
    /// Output JSON (stdout when omitted)
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Also write the s(surp_0) partial-effect curve CSV (GAM only)
    #[arg(long)]
    pub curve_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SgScoreArgs {
    /// Test-suite JSON
    #[arg(long)]
    pub suite: PathBuf,
    /// Surprisal TSV keyed test/item/condition
    #[arg(long)]
    pub surprisal: PathBuf,
    /// Output JSON (stdout when omitted)
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Also write per-test accuracies as TSV
    #[arg(long)]
    pub tsv_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetaArgs {
    /// Model-record TSV
    #[arg(long)]
    pub records: PathBuf,
    /// Output JSON (stdout when omitted)
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Also write residualized (sg, dll) pairs as TSV
    #[arg(long)]
    pub pairs_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Surprisal TSV driving the generator
    #[arg(long)]
    pub surprisal: PathBuf,
    /// Frequency norms for the length/frequency covariates
    #[arg(long)]
    pub freq: PathBuf,
    /// Output reading-time TSV
    #[arg(short, long)]
    pub output: PathBuf,
    /// Baseline reading time (ms)
    #[arg(long, default_value_t = 200.0, allow_negative_numbers = true)]
    pub alpha: f64,
    /// Surprisal coefficients for lags 0..=k (ms per bit), comma-separated
    #[arg(long, value_delimiter = ',', default_value = "5,2", allow_negative_numbers = true)]
    pub betas: Vec<f64>,
    /// Word-length coefficient (ms per character)
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub gamma: f64,
    /// Log-frequency coefficient (ms per bit)
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub delta: f64,
    /// Noise standard deviation (ms)
    #[arg(long, default_value_t = 25.0, allow_negative_numbers = true)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ModalityArg::Spr)]
    pub modality: ModalityArg,
}

#[derive(Debug, Args)]
pub struct PlotCurveArgs {
    /// Partial-effect curve CSV (x,estimate,lower,upper)
    #[arg(long)]
    pub curve: PathBuf,
    /// Surprisal TSV for the marginal density strip
    #[arg(long)]
    pub surprisal: PathBuf,
    /// Output SVG
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, default_value = "surprisal (bits)")]
    pub x_label: String,
    #[arg(long, default_value = "effect on reading time (ms)")]
    pub y_label: String,
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::TrainNgram(args) => train_ngram(args),
        Command::Perplexity(args) => perplexity(args),
        Command::Surprisal(args) => surprisal(args),
        Command::EvalPpp(args) => eval_ppp(args),
        Command::SgScore(args) => sg_score(args),
        Command::Meta(args) => meta_cmd(args),
        Command::Simulate(args) => simulate(args),
        Command::PlotCurve(args) => plot_curve(args),
    }
}

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn emit_json<T: Serialize>(value: &T, output: Option<&Path>) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(value).expect("report serializes");
    match output {
        Some(path) => write_file(path, &format!("{json}\n")),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn tokenize_opts(lowercase: bool, strip_punctuation: bool) -> TokenizeOptions {
    TokenizeOptions {
        lowercase,
        strip_punctuation,
    }
}

fn train_ngram(args: TrainNgramArgs) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("train-ngram");
    manifest
        .flag("order", args.order)
        .flag("kn-variant", format!("{:?}", args.kn_variant).to_lowercase())
        .flag("min-count", args.min_count)
        .flag("lowercase", args.lowercase)
        .flag("strip-punctuation", args.strip_punctuation);
    manifest.input(&args.corpus)?;

    let text = read_file(&args.corpus)?;
    let corpus = tokenize(&text, tokenize_opts(args.lowercase, args.strip_punctuation))
        .map_err(data_err)?;
    let vocab = build_vocab(&corpus, args.min_count);
    let corpus = corpus.remap(&vocab);
    let model =
        NGramModel::train_kn(&corpus, args.order, args.kn_variant.into()).map_err(data_err)?;
    if model.degenerate_counts() {
        eprintln!(
            "warning: count-of-counts statistics were degenerate; \
             fell back to absolute discounting (0.5) where needed"
        );
    }
    eprintln!(
        "trained order-{} model: {} sentences, {} tokens, vocabulary {}",
        args.order,
        corpus.sentences().len(),
        corpus.token_count(),
        vocab.len()
    );
    arpa::write_arpa(&args.output, &model)?;
    manifest.output(&args.output)?;
    manifest.write_beside(&args.output)?;
    Ok(())
}

#[derive(Serialize)]
struct PerplexityReport {
    ppl: f64,
    token_count: usize,
    mean_surprisal_bits: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    oov_tokens: Option<usize>,
}

fn perplexity(args: PerplexityArgs) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("perplexity");
    let report = match (&args.text, &args.surprisal) {
        (Some(_), Some(_)) => {
            return Err(CliError::Usage(
                "--text and --surprisal are mutually exclusive".into(),
            ))
        }
        (None, None) => {
            return Err(CliError::Usage(
                "one of --text or --surprisal is required".into(),
            ))
        }
        (Some(text_path), None) => {
            let Some(model_path) = &args.model else {
                return Err(CliError::Usage("--text requires --model".into()));
            };
            manifest.input(model_path)?;
            manifest.input(text_path)?;
            manifest
                .flag("lowercase", args.lowercase)
                .flag("strip-punctuation", args.strip_punctuation);
            let model = arpa::read_arpa(model_path)?;
            let text = read_file(text_path)?;
            let corpus =
                tokenize(&text, tokenize_opts(args.lowercase, args.strip_punctuation))
                    .map_err(data_err)?;
            let corpus = corpus.remap(model.vocab());
            let result =
                ngram::perplexity(&model.corpus_surprisals(&corpus)).map_err(data_err)?;
            PerplexityReport {
                ppl: result.ppl,
                token_count: result.token_count,
                mean_surprisal_bits: result.mean_surprisal_bits,
                oov_tokens: Some(corpus.unk_token_count()),
            }
        }
        (None, Some(surp_path)) => {
            manifest.input(surp_path)?;
            let table = tsv::read_surprisal(surp_path)?;
            let result = ngram::perplexity(&table.bits()).map_err(data_err)?;
            PerplexityReport {
                ppl: result.ppl,
                token_count: result.token_count,
                mean_surprisal_bits: result.mean_surprisal_bits,
                oov_tokens: None,
            }
        }
    };
    emit_json(&report, args.output.as_deref())?;
    if let Some(out) = &args.output {
        manifest.output(out)?;
        manifest.write_beside(out)?;
    }
    Ok(())
}

fn surprisal(args: SurprisalArgs) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("surprisal");
    manifest.input(&args.model)?;
    let model = arpa::read_arpa(&args.model)?;

    let model_id = args.model_id.clone().unwrap_or_else(|| stem(&args.model));
    let vocab_group = args
        .vocab_group
        .clone()
        .unwrap_or_else(|| model.vocab_id().to_owned());
    let meta = TableMeta::new(&model_id, &vocab_group).with_architecture(&args.architecture);
    manifest
        .flag("model-id", &model_id)
        .flag("vocab-group", &vocab_group)
        .flag("architecture", &args.architecture);

    let items: Vec<(String, Vec<String>)> = match (&args.text, &args.suite) {
        (Some(_), Some(_)) => {
            return Err(CliError::Usage(
                "--text and --suite are mutually exclusive".into(),
            ))
        }
        (None, None) => {
            return Err(CliError::Usage("one of --text or --suite is required".into()))
        }
        (Some(text_path), None) => {
            manifest.input(text_path)?;
            manifest
                .flag("lowercase", args.lowercase)
                .flag("strip-punctuation", args.strip_punctuation);
            let text = read_file(text_path)?;
            let corpus =
                tokenize(&text, tokenize_opts(args.lowercase, args.strip_punctuation))
                    .map_err(data_err)?;
            corpus
                .sentences()
                .iter()
                .enumerate()
                .map(|(i, sent)| {
                    (
                        format!("s{:04}", i + 1),
                        sent.iter()
                            .map(|&id| corpus.vocab().word(id).to_owned())
                            .collect(),
                    )
                })
                .collect()
        }
        (None, Some(suite_path)) => {
            manifest.input(suite_path)?;
            let sg = suite::read_suite(suite_path)?;
            let mut items = Vec::new();
            for test in sg.tests() {
                for item in &test.items {
                    for cond in &item.conditions {
                        items.push((
                            item_key(&test.name, item.item_number, &cond.name),
                            cond.tokens().map(str::to_owned).collect(),
                        ));
                    }
                }
            }
            items
        }
    };
    let table = model.surprisal_table(&items, meta);
    if table.is_empty() {
        return Err(CliError::Data("no tokens to score".into()));
    }
    tsv::write_surprisal(&args.output, &table)?;
    manifest.output(&args.output)?;
    manifest.write_beside(&args.output)?;
    Ok(())
}

#[derive(Serialize)]
struct PppReport {
    model_id: String,
    vocab_group: String,
    architecture: String,
    corpus: String,
    regression_kind: &'static str,
    base: &'static str,
    mean_dll: f64,
    se: f64,
    fold_means: Vec<f64>,
    n_tokens: usize,
    folds: usize,
    seed: u64,
}

fn eval_ppp(args: EvalPppArgs) -> Result<(), CliError> {
    if args.curve_out.is_some() && args.regression == RegressionArg::Linear {
        return Err(CliError::Usage(
            "--curve-out requires --regression gam".into(),
        ));
    }
    let kind = match args.regression {
        RegressionArg::Linear => RegressionKind::Linear,
        RegressionArg::Gam => RegressionKind::Gam,
    };
    let spill = args
        .spillover
        .unwrap_or_else(|| Modality::from(args.modality).default_spillover());

    let mut manifest = RunManifest::new("eval-ppp");
    manifest.seed(args.seed);
    manifest
        .flag("modality", args.modality.as_str())
        .flag("spillover", spill)
        .flag("regression", kind.as_str())
        .flag("folds", args.folds)
        .flag("by-item", args.by_item)
        .flag("base", format!("{:?}", args.base).to_lowercase());
    if kind == RegressionKind::Gam {
        manifest
            .flag("k-smooth", args.k_smooth)
            .flag("k-tensor", args.k_tensor);
    }
    manifest.input(&args.rt)?;
    manifest.input(&args.surprisal)?;
    manifest.input(&args.freq)?;

    let records = tsv::read_rt(&args.rt)?;
    let rt = RtDataset::from_records(records, args.modality.into()).map_err(data_err)?;
    if rt.dropped_rows() > 0 {
        eprintln!("note: dropped {} rows with non-positive RT", rt.dropped_rows());
    }
    let table = tsv::read_surprisal(&args.surprisal)?;
    let freq = tsv::read_freq(&args.freq)?;

    let aligned = align(&table, &rt).map_err(data_err)?;
    if !aligned.mismatches.is_empty() {
        eprintln!(
            "note: {} of {} joined rows disagree on word form after normalization",
            aligned.mismatches.len(),
            aligned.rows.len()
        );
    }
    let rows = spillover_features(&aligned.rows, spill, &freq);
    if rows.excluded > 0 {
        eprintln!(
            "note: excluded {} rows with incomplete spillover windows",
            rows.excluded
        );
    }

    let opts = PppOptions {
        folds: args.folds,
        seed: args.seed,
        by_item: args.by_item,
        k_smooth: args.k_smooth,
        k_tensor: args.k_tensor,
        gam: GamOptions::default(),
    };
    let result = ppp::delta_loglik(&rows.rows, kind, &opts).map_err(data_err)?;

    // ΔLogLik is accumulated in nats; rescale for base-2 reporting
    let scale = match args.base {
        BaseArg::Nats => 1.0,
        BaseArg::Bits => 1.0 / std::f64::consts::LN_2,
    };
    let report = PppReport {
        model_id: table.model_id().to_owned(),
        vocab_group: table.vocab_group().to_owned(),
        architecture: table.meta().architecture.clone(),
        corpus: args.corpus.clone().unwrap_or_else(|| stem(&args.rt)),
        regression_kind: kind.as_str(),
        base: match args.base {
            BaseArg::Nats => "nats",
            BaseArg::Bits => "bits",
        },
        mean_dll: result.mean_dll * scale,
        se: result.se * scale,
        fold_means: result.fold_means.iter().map(|m| m * scale).collect(),
        n_tokens: result.n_tokens,
        folds: result.folds,
        seed: result.seed,
    };
    emit_json(&report, args.output.as_deref())?;

    if let Some(curve_path) = &args.curve_out {
        let fit = ppp::fit_full_gam(&rows.rows, &opts).map_err(data_err)?;
        let (lo, hi) = fit
            .knot_range("s(surp_0)")
            .ok_or_else(|| CliError::Data("fit has no s(surp_0) term".into()))?;
        let grid: Vec<f64> = (0..100)
            .map(|i| lo + (hi - lo) * i as f64 / 99.0)
            .collect();
        let effect = fit
            .partial_effect("s(surp_0)", &grid, 200, args.seed)
            .map_err(data_err)?;
        tsv::write_curve(curve_path, &effect)?;
    }

    let mut outputs: Vec<&Path> = Vec::new();
    outputs.extend(args.output.as_deref());
    outputs.extend(args.curve_out.as_deref());
    for out in &outputs {
        manifest.output(out)?;
    }
    if let Some(primary) = outputs.first() {
        manifest.write_beside(primary)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SgReport {
    model_id: String,
    vocab_group: String,
    n_tests: usize,
    n_items: usize,
    sg_score: f64,
    by_test_accuracy: BTreeMap<String, f64>,
}

fn sg_score(args: SgScoreArgs) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("sg-score");
    manifest.input(&args.suite)?;
    manifest.input(&args.surprisal)?;

    let sg = suite::read_suite(&args.suite)?;
    let table = tsv::read_surprisal(&args.surprisal)?;
    let result = sgtest::score(&sg, &table).map_err(data_err)?;
    let report = SgReport {
        model_id: table.model_id().to_owned(),
        vocab_group: table.vocab_group().to_owned(),
        n_tests: sg.n_tests(),
        n_items: sg.n_items(),
        sg_score: result.sg_score,
        by_test_accuracy: result.by_test_accuracy.clone(),
    };
    emit_json(&report, args.output.as_deref())?;
    if let Some(tsv_path) = &args.tsv_out {
        tsv::write_sg_tsv(tsv_path, &result)?;
    }

    let mut outputs: Vec<&Path> = Vec::new();
    outputs.extend(args.output.as_deref());
    outputs.extend(args.tsv_out.as_deref());
    for out in &outputs {
        manifest.output(out)?;
    }
    if let Some(primary) = outputs.first() {
        manifest.write_beside(primary)?;
    }
    Ok(())
}

#[derive(Serialize)]
#[serde(untagged)]
enum PplDllEntry {
    Fitted {
        vocab_group: String,
        slope: f64,
        std_error: f64,
        t_value: f64,
        p_value: f64,
        df: f64,
        n_records: usize,
    },
    Skipped {
        vocab_group: String,
        skipped: String,
    },
}

#[derive(Serialize)]
#[serde(untagged)]
enum StepwiseReport {
    Tested { f_stat: f64, p_value: f64, df2: f64 },
    Untestable { untestable: String },
}

#[derive(Serialize)]
struct MetaReport {
    note: &'static str,
    n_records: usize,
    ppl_dll: Vec<PplDllEntry>,
    stepwise: StepwiseReport,
    warnings: Vec<String>,
}

fn meta_cmd(args: MetaArgs) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("meta");
    manifest.input(&args.records)?;

    let records = tsv::read_records(&args.records)?;
    for rec in &records {
        rec.validate().map_err(data_err)?;
    }

    let mut groups: Vec<&str> = records.iter().map(|r| r.vocab_group.as_str()).collect();
    groups.sort_unstable();
    groups.dedup();

    let mut ppl_dll = Vec::with_capacity(groups.len());
    for group in groups {
        match meta::regress_ppl_dll(&records, group) {
            Ok(fit) => ppl_dll.push(PplDllEntry::Fitted {
                vocab_group: fit.vocab_group,
                slope: fit.slope,
                std_error: fit.std_error,
                t_value: fit.t_value,
                p_value: fit.p_value,
                df: fit.df,
                n_records: fit.n_records,
            }),
            Err(meta::MetaError::DegenerateGroup { group, reason }) => {
                ppl_dll.push(PplDllEntry::Skipped {
                    vocab_group: group,
                    skipped: reason,
                })
            }
            Err(e) => return Err(data_err(e)),
        }
    }

    let stepwise = match meta::stepwise_sg(&records) {
        Ok(StepwiseOutcome::Tested { f_stat, p_value, df2, .. }) => {
            StepwiseReport::Tested { f_stat, p_value, df2 }
        }
        Ok(StepwiseOutcome::Untestable { reason }) => StepwiseReport::Untestable {
            untestable: reason,
        },
        Err(meta::MetaError::TooFewRecords { got, needed }) => StepwiseReport::Untestable {
            untestable: format!("{got} records, need at least {needed}"),
        },
        Err(e) => return Err(data_err(e)),
    };

    let (pairs, warnings) = meta::residual_pairs(&records).map_err(data_err)?;
    let report = MetaReport {
        note: meta::APPROXIMATION_NOTE,
        n_records: records.len(),
        ppl_dll,
        stepwise,
        warnings,
    };
    emit_json(&report, args.output.as_deref())?;
    if let Some(pairs_path) = &args.pairs_out {
        tsv::write_pairs(pairs_path, &pairs)?;
    }

    let mut outputs: Vec<&Path> = Vec::new();
    outputs.extend(args.output.as_deref());
    outputs.extend(args.pairs_out.as_deref());
    for out in &outputs {
        manifest.output(out)?;
    }
    if let Some(primary) = outputs.first() {
        manifest.write_beside(primary)?;
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("simulate");
    manifest.seed(args.seed);
    manifest
        .flag("alpha", args.alpha)
        .flag(
            "betas",
            args.betas
                .iter()
                .map(|b| crate::fmt_f64(*b))
                .collect::<Vec<_>>()
                .join(","),
        )
        .flag("gamma", args.gamma)
        .flag("delta", args.delta)
        .flag("sigma", args.sigma)
        .flag("modality", args.modality.as_str());
    manifest.input(&args.surprisal)?;
    manifest.input(&args.freq)?;

    let table = tsv::read_surprisal(&args.surprisal)?;
    let freq = tsv::read_freq(&args.freq)?;
    let spec = GeneratorSpec {
        alpha: args.alpha,
        betas: args.betas.clone(),
        gamma: args.gamma,
        delta: args.delta,
        sigma: args.sigma,
        seed: args.seed,
    };
    let generated =
        synth::gen_rt(&table, &freq, args.modality.into(), &spec).map_err(data_err)?;
    if generated.clamped > 0 {
        eprintln!(
            "warning: floored {} non-positive reading times",
            generated.clamped
        );
    }
    tsv::write_rt(&args.output, &generated.dataset)?;
    manifest.output(&args.output)?;
    manifest.write_beside(&args.output)?;
    Ok(())
}

fn plot_curve(args: PlotCurveArgs) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("plot-curve");
    manifest.input(&args.curve)?;
    manifest.input(&args.surprisal)?;
    manifest
        .flag("x-label", &args.x_label)
        .flag("y-label", &args.y_label);

    let points = tsv::read_curve(&args.curve)?;
    let table = tsv::read_surprisal(&args.surprisal)?;
    let svg = plot::render_svg(&points, &table.bits(), &args.x_label, &args.y_label)?;
    write_file(&args.output, &svg)?;
    manifest.output(&args.output)?;
    manifest.write_beside(&args.output)?;
    Ok(())
}
