mod config;

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use boxtm::eval::{self, Reference};
use boxtm::train::{fit_from, Trainer, DEFAULT_TOP_N};
use boxtm::{Checkpoint, Corpus, Split, Taxonomy};
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "boxtm", version, about = "Hierarchical topic taxonomies with box embeddings")]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Shared {
    /// TOML file with [corpus], [boxalg], [cluster] and [train] tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the corpus split seed and the training seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; each command has its own default.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize a one-document-per-line file and write corpus artifacts.
    Preprocess {
        input: PathBuf,
    },
    /// Train a taxonomy on a preprocessed corpus.
    Train {
        /// Directory written by `preprocess`.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        /// Number of taxonomy levels.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        leaf_topics: Option<usize>,
        /// Continue from a checkpoint instead of starting fresh.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Also write the checkpoint every this many epochs (0 = only at the end).
        #[arg(long, default_value_t = 0)]
        checkpoint_every: usize,
        #[arg(long, default_value_t = DEFAULT_TOP_N)]
        top_n: usize,
    },
    /// Score a checkpoint's taxonomy against a corpus.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Write a checkpoint's taxonomy as JSON or indented text.
    Export {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long, default_value_t = DEFAULT_TOP_N)]
        top_n: usize,
    },
    /// Generate documents from the model's generative story.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 5)]
        n_docs: usize,
        #[arg(long, default_value_t = 50)]
        length: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.shared.config.as_deref())?.with_seed(cli.shared.seed);
    let out = cli.shared.out_dir;
    match cli.command {
        Command::Preprocess { input } => {
            cfg.validate()?;
            preprocess(&input, &cfg, &out.unwrap_or_else(|| "corpus".into()))
        }
        Command::Train {
            corpus,
            epochs,
            k,
            leaf_topics,
            resume,
            checkpoint_every,
            top_n,
        } => {
            let mut cfg = cfg;
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(k) = k {
                cfg.train.depth = k;
            }
            if let Some(t) = leaf_topics {
                cfg.train.leaf_topics = t;
            }
            cfg.validate()?;
            let opts = TrainOptions {
                resume,
                epochs,
                seed: cli.shared.seed,
                checkpoint_every,
                top_n,
            };
            train(&corpus, &cfg, &opts, &out.unwrap_or_else(|| "run".into()))
        }
        Command::Eval { checkpoint, corpus } => {
            evaluate(&checkpoint, &corpus, &out.unwrap_or_else(|| "eval".into()))
        }
        Command::Export {
            checkpoint,
            format,
            top_n,
        } => export(&checkpoint, format, top_n, out.as_deref()),
        Command::Sample {
            checkpoint,
            n_docs,
            length,
        } => sample(&checkpoint, n_docs, length, cli.shared.seed, out.as_deref()),
    }
}

fn preprocess(input: &Path, cfg: &RunConfig, out: &Path) -> Result<()> {
    let text = fs::read_to_string(input).with_context(|| format!("cannot read {}", input.display()))?;
    let lines: Vec<&str> = text.lines().collect();
    let corpus = Corpus::from_texts(&lines, &cfg.corpus)?;
    corpus.save(out)?;
    fs::write(out.join("corpus_config.json"), serde_json::to_string_pretty(&cfg.corpus)?)?;
    let [train, valid, test] = corpus.split_sizes();
    println!(
        "vocabulary {} | documents {} (train {train}, valid {valid}, test {test}) | dropped {} | written to {}",
        corpus.vocab.len(),
        corpus.n_docs(),
        lines.len() - corpus.n_docs(),
        out.display()
    );
    Ok(())
}

struct TrainOptions {
    resume: Option<PathBuf>,
    epochs: Option<usize>,
    seed: Option<u64>,
    checkpoint_every: usize,
    top_n: usize,
}

fn load_corpus(dir: &Path) -> Result<Corpus> {
    Corpus::load(dir).with_context(|| format!("cannot load corpus artifacts from {}", dir.display()))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("cannot load checkpoint {}", path.display()))
}

fn train(corpus_dir: &Path, cfg: &RunConfig, opts: &TrainOptions, out: &Path) -> Result<()> {
    let corpus = load_corpus(corpus_dir)?;
    let mut trainer = match &opts.resume {
        Some(path) => {
            let mut t = Trainer::from_checkpoint(&corpus, load_checkpoint(path)?)?;
            if let Some(e) = opts.epochs {
                t.config.epochs = e;
            }
            if opts.seed.is_some_and(|s| s != t.config.seed) {
                log::warn!("--seed ignored on resume; the checkpoint's seed {} is kept", t.config.seed);
            }
            log::info!("resuming at epoch {} of {}", t.epoch, t.config.epochs);
            t
        }
        None => Trainer::new(&corpus, cfg.train_config())?,
    };

    fs::create_dir_all(out)?;
    let ck_path = out.join("checkpoint.json");
    let log_path = out.join("train_log.jsonl");
    let log_file = if opts.resume.is_some() {
        OpenOptions::new().create(true).append(true).open(&log_path)?
    } else {
        File::create(&log_path)?
    };
    let mut log = BufWriter::new(log_file);
    let vocab = corpus.vocab.words();

    let result = fit_from(&corpus, &mut trainer, |t, stats| {
        writeln!(log, "{}", serde_json::to_string(stats)?)?;
        log.flush()?;
        if opts.checkpoint_every > 0 && t.epoch % opts.checkpoint_every == 0 {
            t.checkpoint(vocab).save(&ck_path)?;
        }
        Ok(())
    });
    // trainer holds the last good state whether or not fit_from succeeded
    trainer.checkpoint(vocab).save(&ck_path)?;
    let fitted = result.with_context(|| {
        format!(
            "training stopped after {} completed epochs; last good checkpoint saved to {}",
            trainer.epoch,
            ck_path.display()
        )
    })?;

    let taxonomy = trainer.taxonomy(vocab, opts.top_n)?;
    fs::write(out.join("taxonomy.json"), serde_json::to_string_pretty(&taxonomy)?)?;
    if let (Some(e), Some(v)) = (fitted.best_epoch, fitted.best_val_elbo) {
        log::info!("best validation ELBO {v:.4} at epoch {e}");
    }
    println!(
        "trained {} epochs | level sizes {:?} | written to {}",
        trainer.epoch,
        trainer.state.level_sizes(),
        out.display()
    );
    Ok(())
}

fn evaluate(checkpoint: &Path, corpus_dir: &Path, out: &Path) -> Result<()> {
    let ck = load_checkpoint(checkpoint)?;
    let corpus = load_corpus(corpus_dir)?;
    ck.check_vocab(&corpus.vocab.hash())?;
    let top_n = eval::TOP_NS.iter().copied().max().unwrap_or(DEFAULT_TOP_N);
    let taxonomy = Taxonomy::from_state(&ck.state, &ck.vocab, top_n, serde_json::to_value(&ck.config)?)?;
    let reference = Reference::from_corpus(&corpus);
    let report = eval::report(&taxonomy, &corpus.vocab, &reference)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("report.json"), report.to_json()?)?;
    let text = report.to_text();
    fs::write(out.join("report.txt"), &text)?;
    print!("{text}");
    if let Some(elbo) = Trainer::from_checkpoint(&corpus, ck)?.evaluate_elbo(&corpus, Split::Test)? {
        println!("test ELBO per document: {elbo:.4}");
    }
    Ok(())
}

fn emit(out_dir: Option<&Path>, file: &str, content: &str) -> Result<()> {
    match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(file), content)?;
        }
        None => print!("{content}"),
    }
    Ok(())
}

fn export(checkpoint: &Path, format: Format, top_n: usize, out: Option<&Path>) -> Result<()> {
    if top_n == 0 {
        bail!("--top-n must be positive");
    }
    let ck = load_checkpoint(checkpoint)?;
    let taxonomy = Taxonomy::from_state(&ck.state, &ck.vocab, top_n, serde_json::to_value(&ck.config)?)?;
    match format {
        Format::Json => emit(out, "taxonomy.json", &(serde_json::to_string_pretty(&taxonomy)? + "\n")),
        Format::Text => emit(out, "taxonomy.txt", &taxonomy.to_text()),
    }
}

fn sample(checkpoint: &Path, n_docs: usize, length: usize, seed: Option<u64>, out: Option<&Path>) -> Result<()> {
    let ck = load_checkpoint(checkpoint)?;
    let seed = seed.unwrap_or(ck.config.seed);
    let mut text = String::new();
    for i in 0..n_docs {
        let doc = ck.state.sample_document(length, seed.wrapping_add(i as u64))?;
        let words: Vec<&str> = doc.words.iter().map(|&w| ck.vocab[w].as_str()).collect();
        text.push_str(&words.join(" "));
        text.push('\n');
    }
    emit(out, "samples.txt", &text)
}
