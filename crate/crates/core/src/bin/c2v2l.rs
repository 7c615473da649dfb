use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rand::SeedableRng;
use rayon::prelude::*;

use c2v2l::analysis::{neighbors, LabelEmbeddings, DEFAULT_NEIGHBORS};
use c2v2l::checkpoint::{Checkpoint, NeuralModel};
use c2v2l::data::{
    fragment_corpus, load_tagged, load_tweets, split_by_id_digit, write_tagged, write_tweets, LoadOptions, TaggedTweet,
    TextRecord, FRAGMENTS_PER_LANGUAGE, FRAGMENT_LEN,
};
use c2v2l::eval::{score_single_label, score_tweetlid, score_words, GoldLabel, ScoreReport};
use c2v2l::model::{decode_labels, Decode, ModelConfig, ModelParams, Prediction};
use c2v2l::ngram::{select_order, NgramClassifier};
use c2v2l::nn::Rng;
use c2v2l::text::{build_vocab, normalize, normalize_lossy, CharVocab, NormalizedText};
use c2v2l::train::{
    self, encode_text, evaluate_sentences, evaluate_words, random_search, sentence_examples, sentence_labels,
    word_examples, word_labels, write_trial_log, Example, Head, HyperParams, MixedCorpus, SearchSpace, StepInfo,
    TrainConfig, DEFAULT_BATCH_SIZE, DEFAULT_FINE_TUNE_STEPS, DEFAULT_LEARNING_RATE,
};
use c2v2l::Error;

/// Language identification for short, noisy text.
///
/// Every subcommand also accepts `--config FILE`: `key=value` lines naming
/// long flags (`steps=2000`, `lenient=true`). Flags given on the command line
/// override the file.
#[derive(Parser)]
#[command(name = "c2v2l", version, args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize a tweet file, optionally splitting it by id, or cut raw text into fragments.
    Preprocess(PreprocessArgs),
    /// Build the character vocabulary from training files.
    BuildVocab(BuildVocabArgs),
    /// Train the Witten-Bell n-gram classifier.
    TrainNgram(TrainNgramArgs),
    /// Train the neural classifier or tagger.
    TrainNeural(TrainNeuralArgs),
    /// Continue training a checkpoint on in-domain data with fresh optimizer state.
    FineTune(FineTuneArgs),
    /// Random hyperparameter search for the neural model.
    Tune(TuneArgs),
    /// Label tweets (or tag words) with a trained model.
    Predict(PredictArgs),
    /// Score predictions against gold labels.
    Evaluate(EvaluateArgs),
    /// Nearest words to a query under the word encoder.
    Neighbors(NeighborsArgs),
    /// Write the output-layer rows as label embeddings plus their cosine matrix.
    ExportLangEmbeddings(ExportArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long)]
    input: PathBuf,
    /// Output file (`-` for stdout). Ignored with --split-dir.
    #[arg(long, default_value = "-")]
    output: String,
    /// Write train.tsv, dev.tsv and test.tsv here, split by the last digit of the id.
    #[arg(long)]
    split_dir: Option<PathBuf>,
    /// Treat the input as raw running text in this language and emit fragments.
    #[arg(long)]
    fragment_lang: Option<String>,
    #[arg(long, default_value_t = FRAGMENT_LEN)]
    max_len: usize,
    #[arg(long, default_value_t = FRAGMENTS_PER_LANGUAGE)]
    cap: usize,
    #[arg(long)]
    lenient: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FileFormat {
    /// `id \t label \t text`
    Tweets,
    /// `token \t tag`, blank line between tweets
    Tagged,
}

#[derive(Args)]
struct BuildVocabArgs {
    #[arg(long, required = true)]
    input: Vec<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value_t = FileFormat::Tweets)]
    format: FileFormat,
    #[arg(long)]
    lenient: bool,
}

#[derive(Args)]
struct TrainNgramArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Model order. Without it the order is chosen from --orders by 5-fold cross-validation.
    #[arg(long)]
    order: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6")]
    orders: Vec<usize>,
    /// Dev file for tuning the `und` rejection threshold and interpolation weights.
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Out-of-domain tweet-format file to interpolate with (needs --dev).
    #[arg(long)]
    out_of_domain: Option<PathBuf>,
    #[arg(long)]
    lenient: bool,
}

#[derive(Args, Clone)]
struct OptimArgs {
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    batch_size: usize,
    #[arg(long, default_value_t = DEFAULT_LEARNING_RATE)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0.25)]
    dropout: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Evaluate on --dev every N steps (0 = only at the end).
    #[arg(long, default_value_t = 1000)]
    eval_every: u64,
}

#[derive(Args)]
struct TrainNeuralArgs {
    /// Training file, optionally weighted as `PATH:WEIGHT`; repeat to mix corpora.
    #[arg(long, required = true)]
    train: Vec<String>,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = HeadArg::Sentence)]
    head: HeadArg,
    #[arg(long, default_value_t = 80_000)]
    steps: u64,
    #[arg(long, default_value_t = 50)]
    conv1: usize,
    #[arg(long, default_value_t = 93)]
    conv2: usize,
    #[arg(long, default_value_t = 23)]
    lstm: usize,
    #[arg(long)]
    no_peepholes: bool,
    #[command(flatten)]
    optim: OptimArgs,
    #[arg(long)]
    lenient: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum HeadArg {
    Sentence,
    Word,
}

impl From<HeadArg> for Head {
    fn from(h: HeadArg) -> Head {
        match h {
            HeadArg::Sentence => Head::Sentence,
            HeadArg::Word => Head::Word,
        }
    }
}

#[derive(Args)]
struct FineTuneArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_FINE_TUNE_STEPS)]
    steps: u64,
    #[command(flatten)]
    optim: OptimArgs,
    #[arg(long)]
    lenient: bool,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Directory for trials.jsonl, one checkpoint per trial and best.ckpt.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 15)]
    trials: usize,
    #[arg(long, default_value_t = 80_000)]
    steps: u64,
    #[arg(long, value_enum, default_value_t = HeadArg::Sentence)]
    head: HeadArg,
    #[arg(long, default_value = "30:100")]
    conv1_range: String,
    #[arg(long, default_value = "50:150")]
    conv2_range: String,
    #[arg(long, default_value = "15:60")]
    lstm_range: String,
    #[arg(long, default_value = "0.1:0.4")]
    dropout_range: String,
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    batch_size: usize,
    #[arg(long, default_value_t = DEFAULT_LEARNING_RATE)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    lenient: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DecodeMode {
    Argmax,
    Threshold,
}

#[derive(Args)]
struct PredictArgs {
    /// An n-gram classifier or a neural checkpoint (detected from the file).
    #[arg(long)]
    model: PathBuf,
    /// Vocabulary of a neural checkpoint.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Tweets as `id \t text` or `id \t label \t text`; with --words, a tagged file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "-")]
    output: String,
    #[arg(long, value_enum, default_value_t = DecodeMode::Argmax)]
    mode: DecodeMode,
    #[arg(long, default_value_t = 0.3)]
    threshold: f64,
    /// Tag every word of a tagged file (word-head checkpoints).
    #[arg(long)]
    words: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EvalFormat {
    /// Tweet labels with `und`, ambiguous and code-switched categories.
    Tweetlid,
    /// One language per tweet.
    Single,
    /// Word tags from tagged files.
    Words,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long, value_enum, default_value_t = EvalFormat::Tweetlid)]
    format: EvalFormat,
    /// Print `key=value` lines instead of the table.
    #[arg(long)]
    kv: bool,
}

#[derive(Args)]
struct NeighborsArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    query: String,
    /// Candidate words, one per line.
    #[arg(long, required_unless_present = "corpus")]
    words: Option<PathBuf>,
    /// Tweet file whose distinct normalized tokens are the candidates.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(short, long, default_value_t = DEFAULT_NEIGHBORS)]
    k: usize,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long, default_value = "-")]
    output: String,
}

/// Usage problems exit with 2, data problems with 1.
enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Data(e.into())
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let args = match expand_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

/// Replaces `--config FILE` with the file's flags, placed right after the
/// subcommand so that command-line flags come later and win.
fn expand_config(mut args: Vec<String>) -> Result<Vec<String>, String> {
    let mut path = None;
    let mut i = 1;
    while i < args.len() {
        if args[i] == "--config" {
            if i + 1 >= args.len() {
                return Err("--config needs a file".into());
            }
            path = Some(args.remove(i + 1));
            args.remove(i);
        } else if let Some(p) = args[i].strip_prefix("--config=") {
            path = Some(p.to_string());
            args.remove(i);
        } else {
            i += 1;
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).map_err(|e| format!("cannot read config {path}: {e}"))?;
    let mut injected = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("{path}:{}: expected key=value", n + 1))?;
        let key = key.trim().replace('_', "-");
        match value.trim() {
            "true" => injected.push(format!("--{key}")),
            "false" => {}
            v => {
                injected.push(format!("--{key}"));
                injected.push(v.to_string());
            }
        }
    }
    let at = if args.len() > 1 && !args[1].starts_with('-') { 2 } else { 1 };
    args.splice(at..at, injected);
    Ok(args)
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Preprocess(a) => preprocess(a),
        Command::BuildVocab(a) => build_vocab_cmd(a),
        Command::TrainNgram(a) => train_ngram(a),
        Command::TrainNeural(a) => train_neural(a),
        Command::FineTune(a) => fine_tune(a),
        Command::Tune(a) => tune(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Neighbors(a) => neighbors_cmd(a),
        Command::ExportLangEmbeddings(a) => export(a),
    }
}

fn opts(lenient: bool) -> LoadOptions {
    LoadOptions {
        lenient,
        inventory: None,
    }
}

fn tweets(path: &Path, lenient: bool) -> CliResult<Vec<TextRecord>> {
    let loaded = load_tweets(path, &opts(lenient)).map_err(|e| in_file(path, e))?;
    Ok(loaded.records)
}

fn tagged(path: &Path, lenient: bool) -> CliResult<Vec<TaggedTweet>> {
    let loaded = load_tagged(path, &opts(lenient)).map_err(|e| in_file(path, e))?;
    Ok(loaded.records)
}

fn in_file(path: &Path, e: Error) -> Failure {
    Failure::Data(Error::invalid(format!("{}: {e}", path.display())))
}

fn open_output(target: &str) -> CliResult<Box<dyn Write>> {
    Ok(if target == "-" {
        Box::new(BufWriter::new(io::stdout().lock()))
    } else {
        Box::new(BufWriter::new(File::create(target)?))
    })
}

fn read_vocab(path: &Path) -> CliResult<CharVocab> {
    CharVocab::read(BufReader::new(File::open(path)?)).map_err(|e| in_file(path, e))
}

fn preprocess(a: PreprocessArgs) -> CliResult {
    if let Some(lang) = &a.fragment_lang {
        if a.max_len == 0 {
            return Err(usage("--max-len must be positive"));
        }
        let text = fs::read_to_string(&a.input)?;
        let label = GoldLabel::parse(lang).map_err(|e| usage(e.to_string()))?;
        let records: Vec<TextRecord> = fragment_corpus(&text, a.max_len, a.cap)
            .into_iter()
            .filter_map(|f| normalize(&f).ok())
            .enumerate()
            .map(|(i, t)| TextRecord {
                id: format!("{lang}-{i}"),
                label: label.clone(),
                text: t.joined(),
            })
            .collect();
        info!("{} fragments", records.len());
        write_tweets(open_output(&a.output)?, &records)?;
        return Ok(());
    }
    let records = tweets(&a.input, a.lenient)?;
    let mut normalized = Vec::with_capacity(records.len());
    for r in records {
        match normalize(&r.text) {
            Ok(t) => normalized.push(TextRecord { text: t.joined(), ..r }),
            Err(Error::EmptyText) => warn!("dropping tweet {}: empty after normalization", r.id),
            Err(e) => return Err(e.into()),
        }
    }
    match &a.split_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let split = split_by_id_digit(normalized);
            for (name, part) in [("train", &split.train), ("dev", &split.dev), ("test", &split.test)] {
                write_tweets(BufWriter::new(File::create(dir.join(format!("{name}.tsv")))?), part)?;
                info!("{name}: {} tweets", part.len());
            }
        }
        None => write_tweets(open_output(&a.output)?, &normalized)?,
    }
    Ok(())
}

fn build_vocab_cmd(a: BuildVocabArgs) -> CliResult {
    let mut texts: Vec<NormalizedText> = Vec::new();
    for path in &a.input {
        match a.format {
            FileFormat::Tweets => texts.extend(tweets(path, a.lenient)?.iter().map(|r| normalize_lossy(&r.text))),
            FileFormat::Tagged => texts.extend(tagged(path, a.lenient)?.into_iter().map(|t| NormalizedText::from_tokens(t.tokens))),
        }
    }
    let vocab = build_vocab(&texts)?;
    vocab.write(BufWriter::new(File::create(&a.output)?))?;
    info!("vocabulary: {} symbols, embedding size {}", vocab.len(), vocab.dim());
    Ok(())
}

fn train_ngram(a: TrainNgramArgs) -> CliResult {
    if a.out_of_domain.is_some() && a.dev.is_none() {
        return Err(usage("--out-of-domain needs --dev to fit interpolation weights"));
    }
    let records = tweets(&a.train, a.lenient)?;
    let order = match a.order {
        Some(0) => return Err(usage("--order must be at least 1")),
        Some(n) => n,
        None => {
            let texts: Vec<NormalizedText> = records.iter().map(|r| normalize_lossy(&r.text)).collect();
            let n = select_order(&texts, &a.orders)?;
            info!("selected order {n}");
            n
        }
    };
    let mut clf = NgramClassifier::train(&records, order)?;
    if let Some(dev_path) = &a.dev {
        let dev = tweets(dev_path, a.lenient)?;
        if let Some(ood) = &a.out_of_domain {
            clf.interpolate(&tweets(ood, a.lenient)?, &dev, order)?;
        }
        clf.tune_rejection(&dev)?;
        if let Some(rej) = &clf.rejection {
            info!("rejection threshold {}", rej.threshold);
        }
    }
    clf.write(BufWriter::new(File::create(&a.output)?))?;
    Ok(())
}

/// `PATH` or `PATH:WEIGHT`.
fn parse_weighted(spec: &str) -> CliResult<(PathBuf, f64)> {
    if let Some((path, w)) = spec.rsplit_once(':') {
        if let Ok(weight) = w.parse::<f64>() {
            return Ok((PathBuf::from(path), weight));
        }
    }
    Ok((PathBuf::from(spec), 1.0))
}

/// Encoded examples and the label set for a head.
struct Prepared {
    labels: Vec<String>,
    sources: Vec<(Vec<Example>, f64)>,
}

fn prepare(head: Head, sources: &[(PathBuf, f64)], vocab: &CharVocab, lenient: bool, fixed_labels: Option<&[String]>) -> CliResult<Prepared> {
    match head {
        Head::Sentence => {
            let loaded: Vec<(Vec<TextRecord>, f64)> = sources
                .iter()
                .map(|(p, w)| Ok((tweets(p, lenient)?, *w)))
                .collect::<CliResult<_>>()?;
            let labels = match fixed_labels {
                Some(l) => l.to_vec(),
                None => sentence_labels(&loaded.iter().flat_map(|(r, _)| r.clone()).collect::<Vec<_>>()),
            };
            let sources = loaded
                .iter()
                .map(|(r, w)| Ok((sentence_examples(r, vocab, &labels)?, *w)))
                .collect::<CliResult<_>>()?;
            Ok(Prepared { labels, sources })
        }
        Head::Word => {
            let loaded: Vec<(Vec<TaggedTweet>, f64)> = sources
                .iter()
                .map(|(p, w)| Ok((tagged(p, lenient)?, *w)))
                .collect::<CliResult<_>>()?;
            let labels = match fixed_labels {
                Some(l) => l.to_vec(),
                None => word_labels(&loaded.iter().flat_map(|(t, _)| t.clone()).collect::<Vec<_>>()),
            };
            let sources = loaded
                .iter()
                .map(|(t, w)| Ok((word_examples(t, vocab, &labels)?, *w)))
                .collect::<CliResult<_>>()?;
            Ok(Prepared { labels, sources })
        }
    }
}

/// Dev data for periodic evaluation and leakage checks.
enum DevSet {
    Sentences(Vec<(Vec<Vec<u32>>, GoldLabel)>),
    Words(Vec<Example>),
}

struct Dev {
    set: DevSet,
    ids: HashSet<String>,
}

fn load_dev(head: Head, path: &Path, vocab: &CharVocab, labels: &[String], lenient: bool) -> CliResult<Dev> {
    match head {
        Head::Sentence => {
            let records = tweets(path, lenient)?;
            let ids = records.iter().map(|r| r.id.clone()).collect();
            let mut set = Vec::new();
            for r in &records {
                match encode_text(vocab, &r.text) {
                    Ok(w) => set.push((w, r.label.clone())),
                    Err(Error::EmptyText) => warn!("dev tweet {} is empty after normalization", r.id),
                    Err(e) => return Err(e.into()),
                }
            }
            Ok(Dev {
                set: DevSet::Sentences(set),
                ids,
            })
        }
        Head::Word => {
            let t = tagged(path, lenient)?;
            let ids = t.iter().map(train::tagged_id).collect();
            Ok(Dev {
                set: DevSet::Words(word_examples(&t, vocab, labels)?),
                ids,
            })
        }
    }
}

/// Macro-F1 for the sentence head, word accuracy for the word head.
fn dev_metric(dev: &Dev, params: &ModelParams, labels: &[String]) -> CliResult<f64> {
    Ok(match &dev.set {
        DevSet::Sentences(s) => evaluate_sentences(params, labels, s, Decode::Argmax)?.macro_f1,
        DevSet::Words(w) => evaluate_words(params, labels, w)?.accuracy(),
    })
}

fn run_training(
    params: ModelParams,
    corpus: &MixedCorpus,
    config: &TrainConfig,
    dev: Option<&Dev>,
    labels: &[String],
    eval_every: u64,
) -> CliResult<ModelParams> {
    let held_out = dev.map(|d| d.ids.clone()).unwrap_or_default();
    let started = Instant::now();
    let mut dev_error = None;
    let outcome = train::train_with(params, corpus, config, &held_out, |info: &StepInfo, p: &ModelParams| {
        if info.step.is_multiple_of(100) {
            info!("step {} loss {:.6} ({:.1}s)", info.step, info.loss, started.elapsed().as_secs_f64());
        }
        if let Some(dev) = dev {
            if eval_every > 0 && info.step.is_multiple_of(eval_every) && dev_error.is_none() {
                match dev_metric(dev, p, labels) {
                    Ok(m) => info!("step {} dev {m:.4}", info.step),
                    Err(Failure::Data(e)) => dev_error = Some(e),
                    Err(Failure::Usage(m)) => dev_error = Some(Error::invalid(m)),
                }
            }
        }
    })?;
    if let Some(e) = dev_error {
        return Err(e.into());
    }
    if let Some(dev) = dev {
        info!("final dev {:.4}", dev_metric(dev, &outcome.params, labels)?);
    }
    Ok(outcome.params)
}

fn train_config(optim: &OptimArgs, steps: u64, head: Head) -> CliResult<TrainConfig> {
    let config = TrainConfig {
        batch_size: optim.batch_size,
        learning_rate: optim.learning_rate,
        steps,
        dropout: optim.dropout,
        seed: optim.seed,
        head,
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    Ok(config)
}

fn with_training_meta(ckpt: Checkpoint, config: &TrainConfig, prefix: &str) -> Checkpoint {
    ckpt.with_meta("head", config.head)
        .with_meta(&format!("{prefix}steps"), config.steps)
        .with_meta(&format!("{prefix}seed"), config.seed)
        .with_meta(&format!("{prefix}batch_size"), config.batch_size)
        .with_meta(&format!("{prefix}learning_rate"), config.learning_rate)
        .with_meta(&format!("{prefix}dropout"), config.dropout)
}

fn train_neural(a: TrainNeuralArgs) -> CliResult {
    let head = Head::from(a.head);
    let config = train_config(&a.optim, a.steps, head)?;
    let vocab = read_vocab(&a.vocab)?;
    let sources = a.train.iter().map(|s| parse_weighted(s)).collect::<CliResult<Vec<_>>>()?;
    let prepared = prepare(head, &sources, &vocab, a.lenient, None)?;
    let mut corpus = MixedCorpus::new();
    for (examples, w) in prepared.sources {
        corpus.add(examples, w).map_err(|e| usage(e.to_string()))?;
    }
    let model_config = ModelConfig {
        vocab_size: vocab.len(),
        char_dim: vocab.dim(),
        conv1_filters: a.conv1,
        conv2_filters: a.conv2,
        lstm_hidden: a.lstm,
        num_labels: prepared.labels.len(),
        peepholes: !a.no_peepholes,
    };
    model_config.validate().map_err(|e| usage(e.to_string()))?;
    let params = ModelParams::init(model_config, &mut Rng::seed_from_u64(a.optim.seed))?;
    info!(
        "{} examples, {} labels, {} parameters",
        corpus.len(),
        prepared.labels.len(),
        params.param_count()
    );
    let dev = a
        .dev
        .as_deref()
        .map(|p| load_dev(head, p, &vocab, &prepared.labels, a.lenient))
        .transpose()?;
    let params = run_training(params, &corpus, &config, dev.as_ref(), &prepared.labels, a.optim.eval_every)?;
    let ckpt = with_training_meta(Checkpoint::new(&vocab, prepared.labels, params)?, &config, "");
    ckpt.save(&a.output)?;
    Ok(())
}

fn fine_tune(a: FineTuneArgs) -> CliResult {
    let vocab = read_vocab(&a.vocab)?;
    let base = Checkpoint::load(&a.checkpoint, &vocab)?;
    let head: Head = match base.metadata.get("head") {
        Some(h) => h.parse()?,
        None => Head::Sentence,
    };
    let config = train_config(&a.optim, a.steps, head)?;
    let prepared = prepare(head, &[(a.train.clone(), 1.0)], &vocab, a.lenient, Some(&base.labels))?;
    let corpus = MixedCorpus::single(prepared.sources.into_iter().next().expect("one source").0)?;
    let dev = a
        .dev
        .as_deref()
        .map(|p| load_dev(head, p, &vocab, &base.labels, a.lenient))
        .transpose()?;
    let params = run_training(base.params.clone(), &corpus, &config, dev.as_ref(), &base.labels, a.optim.eval_every)?;
    let mut ckpt = Checkpoint { params, ..base };
    ckpt = with_training_meta(ckpt, &config, "fine_tune_");
    ckpt.save(&a.output)?;
    Ok(())
}

fn parse_range<T: std::str::FromStr>(s: &str, flag: &str) -> CliResult<(T, T)> {
    let bad = || usage(format!("--{flag} expects LOW:HIGH, got `{s}`"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    Ok((lo.parse().map_err(|_| bad())?, hi.parse().map_err(|_| bad())?))
}

fn tune(a: TuneArgs) -> CliResult {
    let head = Head::from(a.head);
    let space = SearchSpace {
        conv1_filters: parse_range(&a.conv1_range, "conv1-range")?,
        conv2_filters: parse_range(&a.conv2_range, "conv2-range")?,
        lstm_hidden: parse_range(&a.lstm_range, "lstm-range")?,
        dropout: parse_range(&a.dropout_range, "dropout-range")?,
    };
    space.validate().map_err(|e| usage(e.to_string()))?;
    if a.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    let vocab = read_vocab(&a.vocab)?;
    let prepared = prepare(head, &[(a.train.clone(), 1.0)], &vocab, a.lenient, None)?;
    let corpus = MixedCorpus::single(prepared.sources.into_iter().next().expect("one source").0)?;
    let labels = prepared.labels;
    let dev = load_dev(head, &a.dev, &vocab, &labels, a.lenient)?;
    fs::create_dir_all(&a.out_dir)?;
    let run_trial = |index: usize, hyper: &HyperParams, seed: u64| -> c2v2l::Result<(f64, Option<String>)> {
        let config = TrainConfig {
            batch_size: a.batch_size,
            learning_rate: a.learning_rate,
            steps: a.steps,
            dropout: hyper.dropout,
            seed,
            head,
        };
        config.validate()?;
        let params = ModelParams::init(hyper.model_config(&vocab, labels.len()), &mut Rng::seed_from_u64(seed))?;
        let outcome = train::train(params, &corpus, &config, &dev.ids)?;
        let metric = match dev_metric(&dev, &outcome.params, &labels) {
            Ok(m) => m,
            Err(Failure::Data(e)) => return Err(e),
            Err(Failure::Usage(m)) => return Err(Error::invalid(m)),
        };
        let path = a.out_dir.join(format!("trial-{index}.ckpt"));
        with_training_meta(Checkpoint::new(&vocab, labels.clone(), outcome.params)?, &config, "").save(&path)?;
        Ok((metric, Some(path.display().to_string())))
    };
    let result = random_search(&space, a.trials, a.seed, run_trial)?;
    write_trial_log(BufWriter::new(File::create(a.out_dir.join("trials.jsonl"))?), &result.trials)?;
    let best = result.best_trial();
    info!("best trial {}: {:?} dev {:.4}", best.index, best.hyper, best.metric);
    if let Some(path) = &best.checkpoint {
        fs::copy(path, a.out_dir.join("best.ckpt"))?;
    }
    Ok(())
}

/// A loaded predictor of either family.
enum Predictor {
    Ngram(NgramClassifier),
    Neural(Box<NeuralModel>),
}

fn load_predictor(model: &Path, vocab: Option<&Path>) -> CliResult<Predictor> {
    let mut first = String::new();
    BufReader::new(File::open(model)?).read_line(&mut first)?;
    if first.trim_end() == c2v2l::checkpoint::MAGIC {
        let vocab = vocab.ok_or_else(|| usage("a neural checkpoint needs --vocab"))?;
        return Ok(Predictor::Neural(Box::new(NeuralModel::load(vocab, model)?)));
    }
    let clf = NgramClassifier::read(BufReader::new(File::open(model)?)).map_err(|e| in_file(model, e))?;
    Ok(Predictor::Ngram(clf))
}

/// `id \t text` or `id \t label \t text`.
fn read_unlabeled(path: &Path) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.splitn(3, '\t').collect();
        match fields.as_slice() {
            [id, text] | [id, _, text] if !id.is_empty() => out.push((id.to_string(), text.to_string())),
            _ => {
                return Err(Failure::Data(Error::invalid(format!(
                    "{}:{}: expected `id \\t text` or `id \\t label \\t text`",
                    path.display(),
                    n + 1
                ))))
            }
        }
    }
    Ok(out)
}

fn format_probs(labels: &[String], probs: &[f64]) -> String {
    labels
        .iter()
        .zip(probs)
        .map(|(l, p)| format!("{l}={p:.6}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn predict(a: PredictArgs) -> CliResult {
    if a.mode == DecodeMode::Threshold && !(0.0..=1.0).contains(&a.threshold) {
        return Err(usage("--threshold must lie in [0, 1]"));
    }
    let predictor = load_predictor(&a.model, a.vocab.as_deref())?;
    let decode = match a.mode {
        DecodeMode::Argmax => Decode::Argmax,
        DecodeMode::Threshold => Decode::Threshold(a.threshold),
    };
    let started = Instant::now();
    let mut out = open_output(&a.output)?;
    let count;
    if a.words {
        let Predictor::Neural(model) = &predictor else {
            return Err(usage("--words needs a neural checkpoint"));
        };
        let tweets = load_tagged(&a.input, &opts(false)).map_err(|e| in_file(&a.input, e))?.records;
        let tagged = tweets
            .par_iter()
            .map(|t| {
                let pred = model.predict_tokens(&t.tokens)?;
                Ok(TaggedTweet {
                    tokens: t.tokens.clone(),
                    tags: pred.word_argmax().into_iter().map(|i| model.labels()[i].clone()).collect(),
                })
            })
            .collect::<c2v2l::Result<Vec<_>>>()?;
        count = tagged.len();
        write_tagged(&mut out, &tagged)?;
    } else {
        let inputs = read_unlabeled(&a.input)?;
        let lines = inputs
            .par_iter()
            .map(|(id, text)| predict_line(&predictor, id, text, decode))
            .collect::<c2v2l::Result<Vec<_>>>()?;
        count = lines.len();
        for l in lines {
            writeln!(out, "{l}")?;
        }
    }
    out.flush()?;
    let secs = started.elapsed().as_secs_f64();
    info!("{count} predictions, {:.1} per second", count as f64 / secs.max(1e-9));
    Ok(())
}

fn predict_line(predictor: &Predictor, id: &str, text: &str, decode: Decode) -> c2v2l::Result<String> {
    match predictor {
        Predictor::Ngram(clf) => {
            let t = normalize_lossy(text);
            let label = clf.predict(&t)?;
            let (langs, probs): (Vec<String>, Vec<f64>) = clf.posterior(&t).into_iter().unzip();
            Ok(format!("{id}\t{label}\t{}", format_probs(&langs, &probs)))
        }
        Predictor::Neural(model) => {
            let pred = match model.predict_text(text) {
                Ok(p) => p,
                Err(Error::EmptyText) => {
                    warn!("tweet {id} is empty after normalization; predicting und");
                    return Ok(format!("{id}\tund\t"));
                }
                Err(e) => return Err(e),
            };
            Ok(format_neural(id, &pred, model.labels(), decode))
        }
    }
}

fn format_neural(id: &str, pred: &Prediction, labels: &[String], decode: Decode) -> String {
    let set = decode_labels(pred, labels, decode);
    let joined: Vec<&str> = set.iter().map(String::as_str).collect();
    format!("{id}\t{}\t{}", joined.join("+"), format_probs(labels, &pred.sentence))
}

/// Predicted label sets keyed by id.
fn read_predictions(path: &Path) -> CliResult<HashMap<String, BTreeSet<String>>> {
    let mut out = HashMap::new();
    for (n, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        match (fields.next(), fields.next()) {
            (Some(id), Some(labels)) if !id.is_empty() && !labels.is_empty() => {
                // `/` is accepted too, so a gold file can be scored against itself.
                out.insert(id.to_string(), labels.split(['+', '/']).map(str::to_string).collect());
            }
            _ => {
                return Err(Failure::Data(Error::invalid(format!(
                    "{}:{}: expected `id \\t label[+label]`",
                    path.display(),
                    n + 1
                ))))
            }
        }
    }
    Ok(out)
}

fn evaluate(a: EvaluateArgs) -> CliResult {
    let report: ScoreReport = match a.format {
        EvalFormat::Words => {
            let gold = tagged(&a.gold, false)?;
            let pred = tagged(&a.pred, false)?;
            if gold.len() != pred.len() || gold.iter().zip(&pred).any(|(g, p)| g.tokens.len() != p.tokens.len()) {
                return Err(Failure::Data(Error::invalid("gold and predicted tag files are not aligned")));
            }
            let g: Vec<&String> = gold.iter().flat_map(|t| &t.tags).collect();
            let p: Vec<&String> = pred.iter().flat_map(|t| &t.tags).collect();
            score_words(&g, &p)?
        }
        EvalFormat::Tweetlid | EvalFormat::Single => {
            let gold = tweets(&a.gold, false)?;
            let preds = read_predictions(&a.pred)?;
            let mut sets = Vec::with_capacity(gold.len());
            for r in &gold {
                let set = preds
                    .get(&r.id)
                    .ok_or_else(|| Failure::Data(Error::invalid(format!("no prediction for tweet {}", r.id))))?;
                sets.push(set.clone());
            }
            if a.format == EvalFormat::Tweetlid {
                let labels: Vec<GoldLabel> = gold.iter().map(|r| r.label.clone()).collect();
                score_tweetlid(&labels, &sets)?
            } else {
                let g: Vec<String> = gold.iter().map(|r| r.label.to_string()).collect();
                let p: Vec<String> = sets
                    .iter()
                    .map(|s| s.iter().cloned().collect::<Vec<_>>().join("+"))
                    .collect();
                score_single_label(&g, &p)?
            }
        }
    };
    let mut out = io::stdout().lock();
    if a.kv {
        out.write_all(report.to_key_values().as_bytes())?;
    } else {
        out.write_all(report.to_table().as_bytes())?;
    }
    Ok(())
}

fn neighbors_cmd(a: NeighborsArgs) -> CliResult {
    let model = NeuralModel::load(&a.vocab, &a.model)?;
    let mut candidates: Vec<String> = Vec::new();
    if let Some(path) = &a.words {
        for line in BufReader::new(File::open(path)?).lines() {
            let line = line?;
            let w = line.trim();
            if !w.is_empty() {
                candidates.push(w.to_string());
            }
        }
    }
    if let Some(path) = &a.corpus {
        for r in tweets(path, false)? {
            candidates.extend(normalize_lossy(&r.text).tokens().iter().cloned());
        }
    }
    let mut seen = HashSet::new();
    candidates.retain(|w| seen.insert(w.clone()));
    let found = neighbors(&model, &a.query, &candidates, a.k)?;
    let mut out = io::stdout().lock();
    for (w, sim) in found {
        writeln!(out, "{w}\t{sim:.6}")?;
    }
    Ok(())
}

fn export(a: ExportArgs) -> CliResult {
    let model = NeuralModel::load(&a.vocab, &a.model)?;
    let mut out = open_output(&a.output)?;
    LabelEmbeddings::from_model(&model).write(&mut out)?;
    out.flush()?;
    Ok(())
}
