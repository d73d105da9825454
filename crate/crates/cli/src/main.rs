//! `gnet`: corpus statistics, splitting, training and evaluation of
//! character-level noun gender classifiers.
//!
//! Exit status is 0 on success, 1 for usage errors and 2 for data or model
//! errors. Set `GNET_THREADS` to cap the number of worker threads.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gnet::dataset::{
    filter_suffix_test_set, load_dataset, majority_baseline, split_dataset, suffix_statistics,
    synthesize_dataset, write_dataset, DatasetSplit, LabeledWord, SuffixRule,
    TABLE_SUFFIXES,
};
use gnet::encoding::{build_vocabulary, Vocabulary};
use gnet::evaluation::{evaluate, export_hidden_states, sample_predictions, HiddenExport};
use gnet::models::io::{load_model, save_model};
use gnet::training::{gradient_check, train_with, GradCheckScope, TrainConfig, TrainHistory};
use gnet::{Error, Model, ModelDims, ModelKind};

#[derive(Parser, Debug)]
#[command(name = "gnet", version, about = "Predict Swedish noun gender from spelling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print suffix counts and utrum fractions for a dataset.
    Stats(StatsArgs),
    /// Shuffle a dataset and write train/validation/test partitions (60/20/20).
    Split(SplitArgs),
    /// Generate a labeled dataset from suffix rules.
    Synth(SynthArgs),
    /// Train a model, writing it, its training history and best-so-far checkpoints.
    Train(TrainArgs),
    /// Evaluate a saved model on labeled words.
    Evaluate(EvaluateArgs),
    /// Print the predicted gender of individual words.
    Predict(PredictArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Write per-word recurrent hidden states as TSV.
    ExportHidden(ExportArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum KindArg {
    Dense,
    Gru,
    Lstm,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Dense => ModelKind::Dense,
            KindArg::Gru => ModelKind::Gru,
            KindArg::Lstm => ModelKind::Lstm,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Part {
    All,
    Train,
    Validation,
    Test,
}

/// Labeled words, either a whole file or one part of its seeded split.
#[derive(Args, Debug)]
struct DataArgs {
    /// Dataset file (surface<TAB>label per line).
    #[arg(long)]
    data: PathBuf,
    /// Which part to use; partitions are re-derived from --seed.
    #[arg(long, value_enum, default_value = "all")]
    split: Part,
    /// Seed of the split.
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

impl DataArgs {
    fn load(&self) -> anyhow::Result<Vec<LabeledWord>> {
        let words = read_words(&self.data)?;
        if self.split == Part::All {
            return Ok(words);
        }
        let split = split_dataset(&words, self.seed)?;
        Ok(match self.split {
            Part::Train => split.train,
            Part::Validation => split.validation,
            Part::Test => split.test,
            Part::All => unreachable!(),
        })
    }
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[arg(long)]
    data: PathBuf,
    /// Suffixes to report (comma-separated or repeated); defaults to a fixed list of common ones.
    #[arg(long, value_delimiter = ',')]
    suffix: Vec<String>,
}

#[derive(Args, Debug)]
struct SplitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Directory receiving train.tsv, validation.tsv and test.tsv.
    #[arg(long)]
    out_dir: PathBuf,
}

fn parse_rule(s: &str) -> Result<SuffixRule, String> {
    let (suffix, p) = s.rsplit_once(':').ok_or("expected SUFFIX:PROBABILITY")?;
    let p: f64 = p.parse().map_err(|_| format!("bad probability {p:?}"))?;
    if suffix.is_empty() || !(0.0..=1.0).contains(&p) {
        return Err("suffix must be non-empty and probability within [0, 1]".into());
    }
    Ok(SuffixRule::new(suffix, p))
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Rule SUFFIX:P, giving the utrum probability of words ending in SUFFIX (repeatable).
    #[arg(long = "rule", value_parser = parse_rule, default_values = ["het:1.0", "eri:0.0", "a:0.7"])]
    rules: Vec<SuffixRule>,
    #[arg(long, default_value_t = 5000)]
    n: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, value_enum, default_value = "lstm")]
    model: KindArg,
    /// Dataset to split 60/20/20 with --seed.
    #[arg(long, required_unless_present = "split_dir", conflicts_with = "split_dir")]
    data: Option<PathBuf>,
    /// Directory holding train.tsv, validation.tsv and test.tsv (as written by `split`).
    #[arg(long)]
    split_dir: Option<PathBuf>,
    /// Output model file; the history goes to <OUT>.history.tsv.
    #[arg(long)]
    out: PathBuf,
    /// Seed for the split, initialization and batch order.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 0.001)]
    learning_rate: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Epochs without a new validation-loss minimum before stopping.
    #[arg(long, default_value_t = 50)]
    patience: usize,
    #[arg(long, default_value_t = 2000)]
    max_epochs: usize,
    #[arg(long, default_value_t = 60)]
    d_emb: usize,
    /// Hidden units [default: 128 for dense, 64 for gru/lstm].
    #[arg(long)]
    hidden: Option<usize>,
    /// Padded word length [default: longest word in the data].
    #[arg(long)]
    max_len: Option<usize>,
    /// Suppress per-epoch progress on stderr.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Remove words ending in any of these suffixes first; without a value uses ing,tion,het,ist,eri.
    #[arg(long, value_delimiter = ',', num_args = 0..=1, default_missing_value = "ing,tion,het,ist,eri")]
    drop_suffixes: Option<Vec<String>>,
    /// Probability at or above which a word is predicted utrum.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Also write the report as JSON to this file.
    #[arg(long)]
    report_json: Option<PathBuf>,
    /// Print up to this many correctly and incorrectly predicted words.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Word to classify (repeatable).
    #[arg(long = "word", required = true)]
    words: Vec<String>,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// Model kind to check [default: all three].
    #[arg(long, value_enum)]
    model: Option<KindArg>,
    /// Draw words and vocabulary from this dataset at the reference dimensions
    /// instead of random words over a 10-letter alphabet.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    examples: usize,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    /// Largest acceptable relative error.
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
    /// Export only the state after the last position.
    #[arg(long)]
    final_state: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::from(2)
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("GNET_THREADS") else { return Ok(()) };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("GNET_THREADS must be a positive integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Stats(a) => stats(a),
        Command::Split(a) => split(a),
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Predict(a) => predict(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::ExportHidden(a) => export(a),
    }
}

fn stats(a: StatsArgs) -> anyhow::Result<()> {
    let words = read_words(&a.data)?;
    let suffixes: Vec<String> = if a.suffix.is_empty() {
        println!("words {}", words.len());
        println!("baseline {:.4}", majority_baseline(&words)?);
        TABLE_SUFFIXES.iter().map(|s| s.to_string()).collect()
    } else {
        a.suffix
    };
    for suffix in &suffixes {
        match suffix_statistics(&words, suffix) {
            Ok(s) => println!("{} {} {:.4}", s.suffix, s.occurrences, s.fraction_utrum),
            Err(Error::UndefinedFraction(_)) => println!("{suffix} 0 -"),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

fn read_words(path: &Path) -> anyhow::Result<Vec<LabeledWord>> {
    load_dataset(path).map_err(|e| match e {
        Error::Io(_) => anyhow::Error::new(e).context(format!("reading {}", path.display())),
        e => e.into(),
    })
}

fn read_model(path: &Path) -> anyhow::Result<Model> {
    load_model(path).with_context(|| format!("loading model {}", path.display()))
}

const PART_FILES: [&str; 3] = ["train.tsv", "validation.tsv", "test.tsv"];

fn split(a: SplitArgs) -> anyhow::Result<()> {
    let words = read_words(&a.data)?;
    let split = split_dataset(&words, a.seed)?;
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    for (name, part) in PART_FILES.iter().zip([&split.train, &split.validation, &split.test]) {
        write_dataset(&a.out_dir.join(name), part)?;
        println!("{name} {}", part.len());
    }
    Ok(())
}

fn synth(a: SynthArgs) -> anyhow::Result<()> {
    let words = synthesize_dataset(a.seed, a.n, &a.rules)?;
    write_dataset(&a.out, &words)?;
    println!("wrote {} words to {}", words.len(), a.out.display());
    Ok(())
}

fn load_split(a: &TrainArgs) -> anyhow::Result<DatasetSplit> {
    if let Some(dir) = &a.split_dir {
        let [train, validation, test] = PART_FILES.map(|f| read_words(&dir.join(f)));
        return Ok(DatasetSplit { train: train?, validation: validation?, test: test?, seed: a.seed });
    }
    let data = a.data.as_deref().expect("clap requires --data or --split-dir");
    Ok(split_dataset(&read_words(data)?, a.seed)?)
}

fn history_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".history.tsv");
    PathBuf::from(name)
}

fn train(a: TrainArgs) -> anyhow::Result<()> {
    let kind = ModelKind::from(a.model);
    let split = load_split(&a)?;
    let surfaces: Vec<&str> = split.all().map(|w| w.surface.as_str()).collect();
    let vocab = build_vocabulary(&surfaces)?;
    let longest = surfaces.iter().map(|s| s.chars().count()).max().unwrap_or(0);
    let mut dims = ModelDims::reference(kind, a.max_len.unwrap_or(longest));
    dims.d_emb = a.d_emb;
    if let Some(h) = a.hidden {
        dims.hidden = h;
    }
    let cfg = TrainConfig {
        learning_rate: a.learning_rate,
        batch_size: a.batch_size,
        patience: a.patience,
        max_epochs: a.max_epochs,
        seed: a.seed,
        ..TrainConfig::default()
    };
    cfg.validate()?;
    let model = Model::new(kind, vocab, dims, a.seed);
    if !a.quiet {
        eprintln!(
            "{kind}: {} parameters, vocabulary {}, max_len {}, {} / {} / {} words",
            model.count_parameters(),
            model.vocab().size(),
            dims.max_len,
            split.train.len(),
            split.validation.len(),
            split.test.len()
        );
    }
    let history_file = history_path(&a.out);
    let mut so_far = TrainHistory::default();
    let result = train_with(model, &split, &cfg, |rec, best| {
        so_far.epochs.push(*rec);
        if let Some(m) = best {
            so_far.best_epoch = rec.epoch;
            save_model(m, &a.out)?;
        }
        if !a.quiet {
            eprintln!(
                "epoch {:>4}  train {:.4}  val {:.4}  acc {:.4}{}",
                rec.epoch,
                rec.train_loss,
                rec.val_loss,
                rec.val_accuracy,
                if best.is_some() { "  *" } else { "" }
            );
        }
        so_far.write(&history_file)
    });
    let (best, history) = match result {
        Ok(r) => r,
        Err(Error::Diverged { epoch, history }) => {
            history.write(&history_file)?;
            bail!("training diverged at epoch {epoch}; history written to {}", history_file.display());
        }
        Err(e) => return Err(e.into()),
    };
    save_model(&best, &a.out)?;
    history.write(&history_file)?;
    let rec = history.best().expect("at least one epoch");
    println!(
        "best epoch {} of {}: val loss {:.4}, val accuracy {:.4}; model {}, history {}",
        rec.epoch,
        history.epochs.len(),
        rec.val_loss,
        rec.val_accuracy,
        a.out.display(),
        history_file.display()
    );
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> anyhow::Result<()> {
    let model = read_model(&a.model)?;
    let mut words = a.data.load()?;
    if let Some(suffixes) = &a.drop_suffixes {
        words = filter_suffix_test_set(&words, suffixes);
    }
    let report = evaluate(&model, &words, a.threshold)?;
    println!("{report}");
    if let Some(path) = &a.report_json {
        report.write_json(path)?;
    }
    if let Some(n) = a.samples {
        print!("{}", sample_predictions(&model, &words, a.data.seed, n)?.render());
    }
    Ok(())
}

fn predict(a: PredictArgs) -> anyhow::Result<()> {
    let model = read_model(&a.model)?;
    for word in &a.words {
        let p = model.predict(word)?;
        let class = if p >= a.threshold { "utrum" } else { "neutrum" };
        println!("{word}\t{p:.4}\t{class}");
    }
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> anyhow::Result<()> {
    use gnet::rng::SplitMix64;
    if a.examples == 0 {
        bail!("--examples must be at least 1");
    }
    let kinds: Vec<ModelKind> = match a.model {
        Some(k) => vec![k.into()],
        None => ModelKind::ALL.to_vec(),
    };
    let mut rng = SplitMix64::new(a.seed);
    let (vocab, samples, small): (Vocabulary, Vec<(String, f64)>, bool) = match &a.data {
        Some(path) => {
            let words = read_words(path)?;
            let surfaces: Vec<&str> = words.iter().map(|w| w.surface.as_str()).collect();
            let picked = (0..a.examples)
                .map(|_| {
                    let w = &words[rng.below_usize(words.len())];
                    (w.surface.clone(), f64::from(w.gender.label()))
                })
                .collect();
            (build_vocabulary(&surfaces)?, picked, false)
        }
        None => {
            let vocab = Vocabulary::from_chars("abcdefghij".chars())?;
            let picked = (0..a.examples)
                .map(|_| {
                    let len = 1 + rng.below_usize(10);
                    let w: String = (0..len).map(|_| vocab.chars()[rng.below_usize(10)]).collect();
                    (w, rng.below(2) as f64)
                })
                .collect();
            (vocab, picked, true)
        }
    };
    let max_len = samples.iter().map(|(w, _)| w.chars().count()).max().unwrap_or(1).max(if small { 10 } else { 1 });
    let mut failed = false;
    for kind in kinds {
        let dims = if small { ModelDims { max_len, d_emb: 8, hidden: 8 } } else { ModelDims::reference(kind, max_len) };
        let model = Model::new(kind, vocab.clone(), dims, a.seed);
        let scope = GradCheckScope::auto(model.count_parameters(), a.seed);
        let mut worst = 0.0f64;
        let mut checked = 0;
        for (word, label) in &samples {
            let r = gradient_check(&model, &model.encode(word)?, *label, a.step, scope)?;
            worst = worst.max(r.max_relative_error);
            checked += r.checked;
        }
        let ok = worst < a.tolerance;
        failed |= !ok;
        println!("{kind} max_relative_error {worst:.3e} scalars {checked} {}", if ok { "ok" } else { "FAIL" });
    }
    if failed {
        bail!("gradient check exceeded tolerance {:e}", a.tolerance);
    }
    Ok(())
}

fn export(a: ExportArgs) -> anyhow::Result<()> {
    let model = read_model(&a.model)?;
    let words = a.data.load()?;
    let mode = if a.final_state { HiddenExport::FinalState } else { HiddenExport::Sequence };
    let rows = export_hidden_states(&model, &words, &a.out, mode)?;
    println!("wrote {rows} rows to {}", a.out.display());
    Ok(())
}
