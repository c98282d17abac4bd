//! `twostage`: train, evaluate and run the two-stage span identifier.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure during training.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use twostage::corpus::{read_jsonl, to_line_scored, write_jsonl, Sentence};
use twostage::synth::split_corpus;
use twostage::{generate_synthetic, Checkpoint, Error, HyperParams, KvFile, SynthConfig, Trainer};

#[derive(Parser)]
#[command(name = "twostage", version, about = "Two-stage span identifier for nested named entity recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write the best checkpoint plus a training log.
    Train(TrainArgs),
    /// Score a checkpoint against a gold corpus.
    Eval(EvalArgs),
    /// Write predicted entities with scores for every sentence.
    Predict(PredictArgs),
    /// Generate a synthetic nested-entity corpus split into train/dev/test.
    Synth(SynthArgs),
}

#[derive(Args)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: Option<u64>,
    /// Training corpus (JSONL).
    #[arg(long)]
    train: PathBuf,
    /// Development corpus for model selection (JSONL).
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Suppress per-epoch progress on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Checkpoint written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Gold corpus (JSONL).
    #[arg(long)]
    data: PathBuf,
    /// Print the JSON report instead of the text tables.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: PathBuf,
    /// Corpus to label; any entities it carries are ignored.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: Option<u64>,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Infeasible(_) => 1,
            Error::NonFinite { .. } => 3,
            _ => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

fn in_file(path: &Path) -> impl FnOnce(Error) -> Failure + '_ {
    move |e| {
        let f = Failure::from(e);
        Failure { message: format!("{}: {}", path.display(), f.message), ..f }
    }
}

fn io_failure(path: &Path) -> impl FnOnce(io::Error) -> Failure + '_ {
    move |e| Failure { code: 2, message: format!("{}: {e}", path.display()) }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let r = match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Predict(a) => predict(a),
        Command::Synth(a) => synth(a),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// The config file with `--set` overrides applied, restricted to `known` keys.
fn load_config(common: &Common, known: &[&str]) -> Result<KvFile, Failure> {
    let mut kv = match &common.config {
        Some(p) => KvFile::load(p).map_err(in_file(p))?,
        None => KvFile::default(),
    };
    for s in &common.set {
        kv.set_override(s)?;
    }
    kv.reject_unknown(known)?;
    Ok(kv)
}

fn out_dir(common: &Common) -> Result<PathBuf, Failure> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(io_failure(&dir))?;
    Ok(dir)
}

fn read_corpus(path: &Path) -> Result<Vec<Sentence>, Failure> {
    read_jsonl(path).map_err(in_file(path))
}

fn train(a: TrainArgs) -> Outcome {
    let kv = load_config(&a.common, HyperParams::KEYS)?;
    let mut hp = HyperParams::from_kv(&kv)?;
    if let Some(s) = a.seed {
        hp.seed = s;
    }
    hp.validate()?;
    let train = read_corpus(&a.train)?;
    let dev = match &a.dev {
        Some(p) => read_corpus(p)?,
        None => Vec::new(),
    };
    let dir = out_dir(&a.common)?;
    let mut trainer = Trainer::new(hp, &train, &dev)?;

    let log_path = dir.join("train_log.jsonl");
    let mut log = BufWriter::new(File::create(&log_path).map_err(io_failure(&log_path))?);
    let mut log_err = None;
    let quiet = a.quiet;
    let result = trainer.fit(&mut |e| {
        if let Err(err) = writeln!(log, "{}", e.to_json()) {
            log_err.get_or_insert(err);
        }
        if !quiet {
            let dev = e.dev_f1.map_or(String::new(), |f| format!("  dev F1 {:.4}{}", f, if e.best { " *" } else { "" }));
            eprintln!(
                "epoch {:>3}  loss {:.4} (filter {:.4}, regressor {:.4}, classifier {:.4})  lr {:.2e}{dev}",
                e.epoch, e.total, e.loss.filter, e.loss.regressor, e.loss.classifier, e.lr
            );
        }
    });
    log.flush().map_err(io_failure(&log_path))?;
    if let Some(err) = log_err {
        return Err(io_failure(&log_path)(err));
    }
    result?;

    let ck = Checkpoint::new(trainer.hp.clone(), trainer.vocab.clone(), trainer.best_model().clone());
    let model_path = dir.join("model.json");
    ck.save(&model_path)?;
    let cfg_path = dir.join("config.txt");
    fs::write(&cfg_path, trainer.hp.to_kv_string()).map_err(io_failure(&cfg_path))?;
    if let Some(epoch) = trainer.state.best_epoch {
        eprintln!("best dev epoch {epoch}");
    }
    eprintln!("wrote {}", model_path.display());
    Ok(())
}

/// Loads a checkpoint and applies decoding overrides from the config.
fn load_model(common: &Common, path: &Path) -> Result<Checkpoint, Failure> {
    let kv = load_config(common, HyperParams::KEYS)?;
    let mut ck = Checkpoint::load(path).map_err(in_file(path))?;
    ck.hyperparams.apply(&kv)?;
    ck.hyperparams.validate()?;
    Ok(ck)
}

fn eval(a: EvalArgs) -> Outcome {
    let ck = load_model(&a.common, &a.model)?;
    let corpus = read_corpus(&a.data)?;
    let report = ck.evaluate(&corpus).map_err(in_file(&a.data))?;
    let json = report.to_json();
    if a.json {
        println!("{json}");
    } else {
        print!("{}", report.to_text());
    }
    if let Some(dir) = &a.common.out {
        fs::create_dir_all(dir).map_err(io_failure(dir))?;
        for (name, body) in
            [("report.json", json), ("report.txt", report.to_text()), ("offsets.csv", report.histogram_csv())]
        {
            let p = dir.join(name);
            fs::write(&p, body).map_err(io_failure(&p))?;
        }
    }
    Ok(())
}

fn predict(a: PredictArgs) -> Outcome {
    let ck = load_model(&a.common, &a.model)?;
    let corpus = read_corpus(&a.data)?;
    let preds = ck.predict(&corpus)?;
    let mut body = String::new();
    for p in &preds {
        body.push_str(&to_line_scored(&p.sentence, &p.scores));
        body.push('\n');
    }
    match &a.common.out {
        Some(_) => {
            let p = out_dir(&a.common)?.join("predictions.jsonl");
            fs::write(&p, body).map_err(io_failure(&p))?;
            eprintln!("wrote {} predictions to {}", preds.len(), p.display());
        }
        None => io::stdout().write_all(body.as_bytes()).map_err(io_failure(Path::new("<stdout>")))?,
    }
    Ok(())
}

fn synth(a: SynthArgs) -> Outcome {
    let kv = load_config(&a.common, SynthConfig::KEYS)?;
    let cfg = SynthConfig::from_kv(&kv)?;
    let corpus = generate_synthetic(&cfg, a.seed.unwrap_or(0))?;
    let dir = out_dir(&a.common)?;
    for (name, part) in ["train", "dev", "test"].iter().zip(split_corpus(&corpus, cfg.split)) {
        let p = dir.join(format!("{name}.jsonl"));
        write_jsonl(&p, &part)?;
        eprintln!("wrote {} sentences to {}", part.len(), p.display());
    }
    Ok(())
}
