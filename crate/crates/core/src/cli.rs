//! The `protoverb` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

use crate::encode::{write_atomic, EmbeddingStore, EncoderKind, EncoderSpec, ToyEncoder};
use crate::episodes::{load_dataset, synth_generate, DatasetSchema, Split, SynthConfig};
use crate::error::Error;
use crate::experiment::{self, RunSettings};
use crate::model::{LabelSpace, LossWeights, VerbalizerModel};
use crate::optim::{Checkpoint, OptimConfig, RunMeta};
use crate::report::{self, HeadKind, RunRecord, RunReport};
use crate::templating::{load_templates, read_corpus_sentences, sample_keyword_sentences};

pub const LOG_ENV: &str = "PROTOVERB_LOG";
const SEED_PLACEHOLDER: &str = "{seed}";

#[derive(Debug, Parser)]
#[command(name = "protoverb", version, about = "Prototypical prompt verbalizer toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic topic dataset, corpus, label files and templates.
    Synth(SynthArgs),
    /// Template-fill a dataset and encode its [MASK] embeddings.
    Encode(EncodeArgs),
    /// Build zero-shot prototypes from label-word sentences of a corpus.
    Pretrain(PretrainArgs),
    /// Train the head on a k-shot episode.
    Train(TrainArgs),
    /// Score a checkpoint on labeled test embeddings.
    Eval(EvalArgs),
    /// Rerun one episode under each loss combination.
    Ablate(AblateArgs),
    /// Count trainable head parameters.
    Params(ParamsArgs),
    /// Write transformed embeddings and prototypes for plotting.
    Dump(DumpArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EncoderChoice {
    Toy,
    Precomputed,
}

#[derive(Debug, Args)]
struct SeedArgs {
    /// Comma-separated run seeds; each seed is an independent run.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seed: Vec<u64>,
}

#[derive(Debug, Args)]
struct LossArgs {
    #[arg(long, default_value_t = 1.0)]
    lambda1: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda2: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda3: f64,
}

impl LossArgs {
    fn weights(&self) -> Result<LossWeights, CliError> {
        LossWeights::new(self.lambda1, self.lambda2, self.lambda3).map_err(CliError::usage)
    }
}

#[derive(Debug, Args)]
struct OptimArgs {
    /// Defaults to 1e-2 for toy-encoder embeddings and 3e-5 otherwise.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long = "batch-size", default_value_t = 8)]
    batch_size: usize,
    #[arg(long = "weight-decay", default_value_t = 0.01)]
    weight_decay: f64,
    /// Transformed feature dimension D.
    #[arg(long = "dim-d", default_value_t = 256)]
    dim_d: usize,
}

impl OptimArgs {
    fn config(&self, seed: u64, source: &str) -> Result<OptimConfig, CliError> {
        let default_lr = if source.starts_with("toy") {
            OptimConfig::TOY_LR
        } else {
            OptimConfig::PLM_LR
        };
        let cfg = OptimConfig {
            lr: self.lr.unwrap_or(default_lr),
            weight_decay: self.weight_decay,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
            ..OptimConfig::default()
        };
        cfg.validate().map_err(CliError::usage)?;
        if self.dim_d == 0 {
            return Err(CliError::Usage("--dim-d must be positive".into()));
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct EncoderArgs {
    #[arg(long, value_enum, default_value = "toy")]
    encoder: EncoderChoice,
    /// Toy encoder output dimension M.
    #[arg(long = "dim-m", default_value_t = 1024)]
    dim_m: usize,
    /// Hash seed of the toy encoder; keep it fixed across a pipeline.
    #[arg(long = "encoder-seed", default_value_t = 0)]
    encoder_seed: u64,
    #[arg(long = "max-tokens", default_value_t = 512)]
    max_tokens: usize,
}

impl EncoderArgs {
    fn toy(&self) -> Result<ToyEncoder, CliError> {
        ToyEncoder::new(EncoderSpec {
            kind: EncoderKind::Toy,
            dim: self.dim_m,
            seed: self.encoder_seed,
            max_tokens: self.max_tokens,
        })
        .map_err(CliError::usage)
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long = "n-train", default_value_t = 500)]
    n_train: usize,
    #[arg(long = "n-test", default_value_t = 1000)]
    n_test: usize,
    #[arg(long = "n-corpus", default_value_t = 1500)]
    n_corpus: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[command(flatten)]
    seeds: SeedArgs,
}

#[derive(Debug, Args)]
struct EncodeArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Column layout, e.g. `label=0,text=1+2,base=1`.
    #[arg(long, default_value = "label=0,text=1,base=0")]
    schema: String,
    /// Label names, one per line.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long = "template-file")]
    template_file: PathBuf,
    #[arg(long = "template-index", default_value_t = 0)]
    template_index: usize,
    #[command(flatten)]
    encoder: EncoderArgs,
    /// Embedding file (toy) or prompt file plus `.labels` sidecar (precomputed).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PretrainArgs {
    /// One document per line.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    labels: PathBuf,
    /// One line per label with comma-separated label words; defaults to the names.
    #[arg(long = "label-words")]
    label_words: Option<PathBuf>,
    /// Sentences sampled per label.
    #[arg(long, default_value_t = 30)]
    q: usize,
    /// Precomputed embeddings of pretraining prompts, labeled by class.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[command(flatten)]
    seeds: SeedArgs,
    #[command(flatten)]
    encoder: EncoderArgs,
    #[command(flatten)]
    loss: LossArgs,
    #[command(flatten)]
    optim: OptimArgs,
    /// Checkpoint path; may contain `{seed}`.
    #[arg(long)]
    out: String,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Labeled training-pool embeddings.
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    k: usize,
    /// Pretrained checkpoint to start from.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    seeds: SeedArgs,
    #[command(flatten)]
    loss: LossArgs,
    #[command(flatten)]
    optim: OptimArgs,
    /// Checkpoint path; may contain `{seed}`.
    #[arg(long)]
    out: String,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Checkpoint path; may contain `{seed}` to fan out over `--seed`.
    #[arg(long)]
    checkpoint: String,
    /// Labeled test embeddings.
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    #[arg(long = "template-index", default_value_t = 0)]
    template_index: usize,
    /// Record wall-clock time in the report (makes it non-reproducible).
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AblateArgs {
    /// Labeled training-pool embeddings.
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long = "test-embeddings")]
    test_embeddings: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long = "template-index", default_value_t = 0)]
    template_index: usize,
    #[command(flatten)]
    seeds: SeedArgs,
    #[command(flatten)]
    optim: OptimArgs,
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ParamsArgs {
    #[arg(long = "dim-m", default_value_t = 1024)]
    dim_m: usize,
    #[arg(long = "dim-d", default_value_t = 256)]
    dim_d: usize,
    #[arg(long, conflicts_with = "labels")]
    classes: Option<usize>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value = "ppv")]
    head: String,
}

#[derive(Debug, Args)]
struct DumpArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Run(Error),
}

impl CliError {
    fn usage(e: Error) -> Self {
        CliError::Usage(e.to_string())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Run(e) if e.is_numerical() => 3,
            CliError::Run(_) => 2,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Run(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Entry point of the binary.
pub fn main() -> ExitCode {
    run(std::env::args_os())
}

/// Parses `args` (program name first), runs the command and maps errors to exit codes.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("protoverb: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(command: Command) -> CliResult {
    match command {
        Command::Synth(a) => cmd_synth(a),
        Command::Encode(a) => cmd_encode(a),
        Command::Pretrain(a) => cmd_pretrain(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Params(a) => cmd_params(a),
        Command::Dump(a) => cmd_dump(a),
    }
}

fn read_lines(path: &Path) -> CliResult<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

fn write_text(path: &Path, body: &str) -> CliResult {
    write_atomic(path, |w| {
        use std::io::Write;
        w.write_all(body.as_bytes())
    })?;
    Ok(())
}

fn load_labels(names: &Path, words: Option<&Path>) -> CliResult<LabelSpace> {
    let names = read_lines(names)?;
    let space = match words {
        None => LabelSpace::from_names(names),
        Some(path) => {
            let words = read_lines(path)?
                .iter()
                .map(|line| {
                    line.split(',')
                        .map(str::trim)
                        .filter(|w| !w.is_empty())
                        .map(str::to_string)
                        .collect()
                })
                .collect();
            LabelSpace::new(names, words)
        }
    };
    Ok(space?)
}

fn single_seed(seeds: &SeedArgs) -> CliResult<u64> {
    match seeds.seed.as_slice() {
        [s] => Ok(*s),
        _ => Err(CliError::Usage("this command takes a single --seed".into())),
    }
}

/// Output paths per seed; several seeds need a `{seed}` placeholder.
fn paths_for_seeds(pattern: &str, seeds: &[u64]) -> CliResult<Vec<PathBuf>> {
    if seeds.is_empty() {
        return Err(CliError::Usage("at least one --seed is required".into()));
    }
    if seeds.len() > 1 && !pattern.contains(SEED_PLACEHOLDER) {
        return Err(CliError::Usage(format!(
            "{} seeds given but path {pattern:?} has no {SEED_PLACEHOLDER} placeholder",
            seeds.len()
        )));
    }
    Ok(seeds
        .iter()
        .map(|s| PathBuf::from(pattern.replace(SEED_PLACEHOLDER, &s.to_string())))
        .collect())
}

fn cmd_synth(a: SynthArgs) -> CliResult {
    let seed = single_seed(&a.seeds)?;
    let cfg = SynthConfig {
        num_classes: a.classes,
        n_train: a.n_train,
        n_test: a.n_test,
        n_corpus_docs: a.n_corpus,
        noise: a.noise,
        seed,
        ..SynthConfig::default()
    };
    let data = synth_generate(&cfg).map_err(CliError::usage)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    data.train.write_csv(a.out.join("train.csv"))?;
    data.test.write_csv(a.out.join("test.csv"))?;
    write_text(&a.out.join("corpus.txt"), &lines(&data.corpus))?;
    write_text(&a.out.join("labels.txt"), &lines(data.labels.names()))?;
    let words: Vec<String> = (0..data.labels.len())
        .map(|k| data.labels.words(k).join(","))
        .collect();
    write_text(&a.out.join("label_words.txt"), &lines(&words))?;
    let templates: Vec<&str> = data.templates.iter().map(|t| t.pattern()).collect();
    write_text(&a.out.join("templates.txt"), &lines(&templates))?;
    println!(
        "wrote {} train, {} test, {} corpus documents to {}",
        data.train.len(),
        data.test.len(),
        data.corpus.len(),
        a.out.display()
    );
    Ok(())
}

fn lines<S: AsRef<str>>(items: &[S]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(item.as_ref());
        out.push('\n');
    }
    out
}

/// Prompt files hold one prompt per line.
fn one_line(text: &str) -> String {
    text.replace(['\r', '\n'], " ")
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".labels");
    PathBuf::from(s)
}

fn cmd_encode(a: EncodeArgs) -> CliResult {
    let schema: DatasetSchema = a.schema.parse().map_err(CliError::usage)?;
    let labels = load_labels(&a.labels, None)?;
    let templates = load_templates(&a.template_file)?;
    let template = templates.get(a.template_index).ok_or_else(|| {
        CliError::Usage(format!(
            "--template-index {} but {} has {} templates",
            a.template_index,
            a.template_file.display(),
            templates.len()
        ))
    })?;
    let dataset = load_dataset(&a.dataset, &schema, labels.len(), Split::Train)?;
    match a.encoder.encoder {
        EncoderChoice::Toy => {
            let encoder = a.encoder.toy()?;
            let store = experiment::encode_dataset(&encoder, template, &dataset)?;
            store.save(&a.out)?;
            println!(
                "encoded {} records (M={}) to {}",
                store.len(),
                store.dim(),
                a.out.display()
            );
        }
        EncoderChoice::Precomputed => {
            let prompts = dataset
                .records
                .iter()
                .map(|r| template.fill(&r.text).map(|p| one_line(&p)))
                .collect::<Result<Vec<_>, _>>()?;
            let gold: Vec<String> = dataset.labels().iter().map(usize::to_string).collect();
            write_text(&a.out, &lines(&prompts))?;
            write_text(&sidecar(&a.out), &lines(&gold))?;
            println!(
                "wrote {} prompts to {} for an external encoder",
                prompts.len(),
                a.out.display()
            );
        }
    }
    Ok(())
}

fn cmd_pretrain(a: PretrainArgs) -> CliResult {
    let labels = load_labels(&a.labels, a.label_words.as_deref())?;
    let weights = a.loss.weights()?;
    let outs = paths_for_seeds(&a.out, &a.seeds.seed)?;

    let precomputed = match (a.encoder.encoder, &a.embeddings) {
        (EncoderChoice::Precomputed, Some(path)) => Some(EmbeddingStore::load(path)?),
        (EncoderChoice::Toy, Some(_)) => {
            return Err(CliError::Usage("--embeddings needs --encoder precomputed".into()))
        }
        _ => None,
    };
    let needs_corpus = precomputed.is_none();
    let sentences = match (&a.corpus, needs_corpus) {
        (Some(path), true) => read_corpus_sentences(path)?,
        (None, true) => return Err(CliError::Usage("--corpus is required".into())),
        (_, false) => Vec::new(),
    };

    for (&seed, out) in a.seeds.seed.iter().zip(&outs) {
        let (per_class, source) = match &precomputed {
            Some(store) => (
                experiment::group_by_label(store, labels.len())?,
                store.source().to_string(),
            ),
            None => {
                let samples = sample_keyword_sentences(&sentences, &labels, a.q, seed)?;
                info!(
                    "seed {seed}: sampled {:?} sentences per label",
                    samples.iter().map(Vec::len).collect::<Vec<_>>()
                );
                if a.encoder.encoder == EncoderChoice::Precomputed {
                    let mut prompts = Vec::new();
                    let mut gold = Vec::new();
                    for (k, class) in samples.iter().enumerate() {
                        for s in class {
                            prompts.push(one_line(&s.prompt()?));
                            gold.push(k.to_string());
                        }
                    }
                    write_text(out, &lines(&prompts))?;
                    write_text(&sidecar(out), &lines(&gold))?;
                    println!("wrote {} pretraining prompts to {}", prompts.len(), out.display());
                    continue;
                }
                let encoder = a.encoder.toy()?;
                (
                    experiment::encode_keyword_sentences(&encoder, &samples)?,
                    encoder.spec().source(),
                )
            }
        };
        let settings = RunSettings {
            k: 0,
            template_index: 0,
            feature_dim: a.optim.dim_d,
            weights,
            optim: a.optim.config(seed, &source)?,
        };
        let outcome = experiment::pretrain_head(&per_class, &labels, &settings)?;
        let meta = RunMeta {
            phase: "pretrain".into(),
            seed,
            k: 0,
            lambda: weights.as_array(),
            optim: settings.optim.clone(),
            pretrained: true,
            source,
        };
        Checkpoint::new(&outcome.model, &labels, meta)?.save(out)?;
        println!(
            "pretrained {} prototypes from {} sentences ({} steps) -> {}",
            labels.len(),
            per_class.iter().map(Vec::len).sum::<usize>(),
            outcome.steps(),
            out.display()
        );
    }
    Ok(())
}

fn class_count(labels: Option<&Path>, checkpoint: Option<&Checkpoint>) -> CliResult<LabelSpace> {
    match (labels, checkpoint) {
        (Some(path), ckpt) => {
            let space = load_labels(path, None)?;
            if let Some(c) = ckpt {
                if c.labels != space.names() {
                    return Err(CliError::Usage(format!(
                        "--labels {} disagree with the checkpoint's labels",
                        path.display()
                    )));
                }
            }
            Ok(space)
        }
        (None, Some(c)) => Ok(c.label_space()?),
        (None, None) => Err(CliError::Usage("--labels or --checkpoint is required".into())),
    }
}

fn cmd_train(a: TrainArgs) -> CliResult {
    if a.k == 0 {
        return Err(CliError::Usage(
            "--k 0 is zero-shot: run `pretrain` and `eval` instead of `train`".into(),
        ));
    }
    let weights = a.loss.weights()?;
    let outs = paths_for_seeds(&a.out, &a.seeds.seed)?;
    let init = a.checkpoint.as_deref().map(Checkpoint::load).transpose()?;
    let labels = class_count(a.labels.as_deref(), init.as_ref())?;
    labels.require_trainable()?;
    let pool = EmbeddingStore::load(&a.embeddings)?;
    let init_model = init.as_ref().map(Checkpoint::model).transpose()?;

    for (&seed, out) in a.seeds.seed.iter().zip(&outs) {
        let settings = RunSettings {
            k: a.k,
            template_index: 0,
            feature_dim: init_model
                .as_ref()
                .map_or(a.optim.dim_d, VerbalizerModel::feature_dim),
            weights,
            optim: a.optim.config(seed, pool.source())?,
        };
        let shots = experiment::k_shot_embeddings(&pool, labels.len(), a.k, seed)?;
        let outcome = experiment::train_head(&shots, labels.len(), init_model.as_ref(), &settings)?;
        let meta = RunMeta {
            phase: "train".into(),
            seed,
            k: a.k,
            lambda: weights.as_array(),
            optim: settings.optim.clone(),
            pretrained: init_model.is_some(),
            source: pool.source().to_string(),
        };
        Checkpoint::new(&outcome.model, &labels, meta)?.save(out)?;
        let means = outcome.epoch_means();
        println!(
            "trained on {} shots ({} steps, final epoch loss {:.6}) -> {}",
            shots.len(),
            outcome.steps(),
            means.last().copied().unwrap_or(f64::NAN),
            out.display()
        );
    }
    Ok(())
}

fn finish_report(mut report: RunReport, started: Instant, timing: bool, out: Option<&Path>) -> CliResult {
    if timing {
        report.timing.wall_clock_ms = Some(started.elapsed().as_secs_f64() * 1e3);
    }
    emit_json(&report.to_json(), out)
}

fn emit_json(body: &str, out: Option<&Path>) -> CliResult {
    match out {
        Some(path) => {
            report::save_json(path, body)?;
            println!("wrote report {}", path.display());
        }
        None => print!("{body}"),
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> CliResult {
    let started = Instant::now();
    let test = EmbeddingStore::load(&a.embeddings)?;
    let targets: Vec<(Option<u64>, PathBuf)> = if a.seed.is_empty() {
        if a.checkpoint.contains(SEED_PLACEHOLDER) {
            return Err(CliError::Usage(format!(
                "checkpoint path has {SEED_PLACEHOLDER} but no --seed was given"
            )));
        }
        vec![(None, PathBuf::from(&a.checkpoint))]
    } else {
        let paths = paths_for_seeds(&a.checkpoint, &a.seed)?;
        a.seed.iter().map(|&s| Some(s)).zip(paths).collect()
    };

    let mut runs = Vec::with_capacity(targets.len());
    for (seed, path) in targets {
        let ckpt = Checkpoint::load(&path)?;
        if let Some(s) = seed {
            if s != ckpt.config.seed {
                return Err(CliError::Usage(format!(
                    "--seed {s} but {} was produced with seed {}",
                    path.display(),
                    ckpt.config.seed
                )));
            }
        }
        let eval = experiment::evaluate(&ckpt.model()?, &test)?;
        runs.push(RunRecord {
            seed: ckpt.config.seed,
            template: a.template_index,
            k: ckpt.config.k,
            lambda: ckpt.config.lambda,
            micro_f1: eval.micro_f1,
        });
    }
    let config = json!({
        "command": "eval",
        "checkpoint": a.checkpoint,
        "embeddings": a.embeddings.display().to_string(),
        "source": test.source(),
        "test_items": test.len(),
    });
    finish_report(RunReport::new(config, runs)?, started, a.timing, a.out.as_deref())
}

fn cmd_ablate(a: AblateArgs) -> CliResult {
    let started = Instant::now();
    let init = a.checkpoint.as_deref().map(Checkpoint::load).transpose()?;
    let labels = class_count(a.labels.as_deref(), init.as_ref())?;
    labels.require_trainable()?;
    if a.k == 0 {
        return Err(CliError::Usage(
            "ablation trains the head; --k must be at least 1".into(),
        ));
    }
    let pool = EmbeddingStore::load(&a.embeddings)?;
    let test = EmbeddingStore::load(&a.test_embeddings)?;
    let init_model = init.as_ref().map(Checkpoint::model).transpose()?;
    let base = RunSettings {
        k: a.k,
        template_index: a.template_index,
        feature_dim: init_model
            .as_ref()
            .map_or(a.optim.dim_d, VerbalizerModel::feature_dim),
        weights: LossWeights::default(),
        optim: a.optim.config(0, pool.source())?,
    };
    let combos: Vec<(String, LossWeights)> = LossWeights::ablation_set()
        .into_iter()
        .map(|(n, w)| (n.to_string(), w))
        .collect();
    let mut reports = report::ablation_sweep(
        &pool,
        &test,
        labels.len(),
        init_model.as_ref(),
        &base,
        &a.seeds.seed,
        &combos,
    )?;
    if a.timing {
        let ms = started.elapsed().as_secs_f64() * 1e3;
        reports.iter_mut().for_each(|r| r.timing.wall_clock_ms = Some(ms));
    }
    let value = json!({ "reports": reports });
    emit_json(&report::to_canonical_json(&value), a.out.as_deref())
}

fn cmd_params(a: ParamsArgs) -> CliResult {
    let head: HeadKind = a.head.parse().map_err(CliError::usage)?;
    let k = match (a.classes, &a.labels) {
        (Some(k), None) => k,
        (None, Some(path)) => load_labels(path, None)?.len(),
        _ => return Err(CliError::Usage("give --classes or --labels".into())),
    };
    let n = report::count_params(a.dim_m, a.dim_d, k, head).map_err(CliError::usage)?;
    println!("{n} ({} x 10^4)", n as f64 / 1e4);
    Ok(())
}

fn cmd_dump(a: DumpArgs) -> CliResult {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let store = EmbeddingStore::load(&a.embeddings)?;
    let model = ckpt.model()?;
    let dump = report::dump_embeddings(&model, &store)?;
    dump.save(&a.out)?;
    println!(
        "dumped {} embeddings and {} prototypes (D={}) to {}",
        store.len(),
        model.num_classes(),
        model.feature_dim(),
        a.out.display()
    );
    Ok(())
}
