//! `precedent`: command-line entry point.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use precedent_core::corpus::{filter_articles, load_corpus, split_stats, write_corpus, CorpusFormat, LabelMatrix};
use precedent_core::encoder::{EncoderKind, VectorTable};
use precedent_core::eval::{
    per_case_scores, permutation_test, predict, published_scores, read_predictions, render_report, score,
    write_predictions, ReportRow, Resampling,
};
use precedent_core::experiment::{run_experiment, ExperimentManifest};
use precedent_core::extract::{read_violations, write_outcome_corpus, PatternSet};
use precedent_core::kv::KeyValues;
use precedent_core::model::{read_checkpoint, write_checkpoint};
use precedent_core::synth::{generate_corpus, GenConfig, GEN_KEYS};
use precedent_core::train::{grid_search, Dataset, TrainConfig, TrainData, TRAIN_KEYS};
use precedent_core::{Architecture, ArticleId, Error, ErrorKind, OutcomeLabel, Result, Split};

#[derive(Parser)]
#[command(name = "precedent", version, about = "Claim-aware outcome prediction for court judgments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a labelled corpus from raw judgments by extracting claimed articles.
    Extract {
        /// Directory holding train/validation/test.jsonl of raw documents.
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Pattern file; defaults to the built-in set.
        #[arg(long)]
        patterns: Option<PathBuf>,
        /// JSONL of {"case_id", "violated"} overriding the documents' violations.
        #[arg(long)]
        violations: Option<PathBuf>,
    },
    /// Print per-split outcome counts and per-article label histograms.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Generate a synthetic corpus.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one architecture over the configured grid and save the best checkpoint.
    Train {
        #[arg(long)]
        arch: Architecture,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch JSONL training log.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        vectors: Option<PathBuf>,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a checkpoint on the test split.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        vectors: Option<PathBuf>,
        /// Also write the predictions as JSONL.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Restrict scoring to these articles, e.g. 8,13.
        #[arg(long, value_delimiter = ',')]
        subset: Vec<u32>,
        /// Append the published-score All check to the text output.
        #[arg(long)]
        fixture: bool,
    },
    /// Paired permutation test between two prediction files.
    Significance {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Corpus whose test split holds the gold labels.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "neg")]
        class: OutcomeLabel,
        #[arg(long, default_value_t = 10_000)]
        resamples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a full experiment from a manifest.
    Run {
        #[arg(long)]
        manifest: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Usage => 1,
                ErrorKind::Data => 2,
                ErrorKind::Numeric => 3,
            })
        }
    }
}

fn read_kv(path: &Path, known: &[&str]) -> Result<KeyValues> {
    let kv = KeyValues::read(path)?;
    kv.reject_unknown(known)?;
    Ok(kv)
}

fn load_vectors(path: Option<&PathBuf>) -> Result<Option<Arc<VectorTable>>> {
    path.map(|p| VectorTable::read_jsonl(p).map(Arc::new)).transpose()
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Extract {
            raw,
            out,
            patterns,
            violations,
        } => {
            let patterns = match patterns {
                Some(p) => PatternSet::from_file(&p)?,
                None => PatternSet::default_v1(),
            };
            let violations = violations.map(|p| read_violations(&p)).transpose()?;
            let report = write_outcome_corpus(&raw, &patterns, violations.as_ref(), &out)?;
            println!(
                "pattern set {}: {} documents, {} cases written, {} skipped, violation coverage {:.1}%",
                report.pattern_set,
                report.documents,
                report.emitted,
                report.skipped.len(),
                100.0 * report.violation_coverage()
            );
            Ok(())
        }
        Command::Stats { corpus } => {
            let splits = load_corpus(&corpus, CorpusFormat::JsonlDir)?;
            let index = filter_articles(&splits)?;
            print!("{}", split_stats(&splits, &index)?.render());
            Ok(())
        }
        Command::Synth { config, out, seed } => {
            let kv = read_kv(&config, GEN_KEYS)?;
            let mut cfg = GenConfig::from_kv(&kv)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let splits = generate_corpus(&cfg)?;
            write_corpus(&out, &splits)?;
            println!(
                "wrote {} / {} / {} cases to {}",
                splits.train.len(),
                splits.validation.len(),
                splits.test.len(),
                out.display()
            );
            Ok(())
        }
        Command::Train {
            arch,
            corpus,
            config,
            out,
            log,
            vectors,
            seed,
        } => {
            let mut cfg = match config {
                Some(p) => TrainConfig::from_kv(&read_kv(&p, TRAIN_KEYS)?)?,
                None => TrainConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let splits = load_corpus(&corpus, CorpusFormat::JsonlDir)?;
            let articles = filter_articles(&splits)?;
            let train = Dataset::new(&splits.train, &articles, &cfg.encoder)?;
            let validation = Dataset::new(&splits.validation, &articles, &cfg.encoder)?;
            let vectors = load_vectors(vectors.as_ref())?;
            let data = TrainData {
                articles: &articles,
                train: &train,
                validation: &validation,
                vectors: vectors.as_ref(),
            };
            let grid = grid_search(arch, &cfg, data)?;
            write_checkpoint(&grid.best.model, &out)?;
            if let Some(p) = log {
                let mut buf = Vec::new();
                grid.best.write_log(&mut buf).expect("in-memory write");
                std::fs::write(&p, buf).map_err(|e| Error::io(&p, e))?;
            }
            println!(
                "{arch}: selected {} at epoch {} with validation loss {:.6}",
                grid.best.hyper, grid.best.best_epoch, grid.best.best_validation_loss
            );
            Ok(())
        }
        Command::Eval {
            ckpt,
            corpus,
            out,
            vectors,
            predictions,
            subset,
            fixture,
        } => {
            let mut model = read_checkpoint(&ckpt)?;
            if let Some(t) = load_vectors(vectors.as_ref())? {
                model.attach_vectors(t)?;
            } else if model.encoder_config().kind == EncoderKind::Precomputed {
                return Err(Error::Config("checkpoint uses precomputed vectors; pass --vectors".into()));
            }
            let splits = load_corpus(&corpus, CorpusFormat::JsonlDir)?;
            let test = Dataset::new(splits.get(Split::Test), model.articles(), model.encoder_config())?;
            let mut preds = predict(&model, &test)?;
            if let Some(p) = &predictions {
                write_predictions(p, &preds)?;
            }
            let mut gold = test.labels.clone();
            if !subset.is_empty() {
                let keep: Vec<ArticleId> = subset.iter().map(|&a| ArticleId(a)).collect();
                preds = preds.restrict(&keep);
                gold = gold.restrict(&keep);
            }
            let s = score(&preds, &gold)?;
            let row = ReportRow {
                model: model.architecture().to_string(),
                encoder: model.encoder_config().kind.name().into(),
                corpus: corpus.file_name().map_or("corpus".into(), |n| n.to_string_lossy().into_owned()),
                seed: None,
                pos: Some(s.pos),
                neg: Some(s.neg),
                null: s.null,
                all: s.all,
            };
            let fixture_rows = fixture.then(published_scores);
            let rendered = render_report(&[row], fixture_rows.as_deref());
            std::fs::write(&out, &rendered.csv).map_err(|e| Error::io(&out, e))?;
            print!("{}", rendered.text);
            Ok(())
        }
        Command::Significance {
            a,
            b,
            corpus,
            class,
            resamples,
            seed,
        } => {
            let pa = read_predictions(&a)?;
            let pb = read_predictions(&b)?;
            let splits = load_corpus(&corpus, CorpusFormat::JsonlDir)?;
            let gold = LabelMatrix::build(splits.get(Split::Test), &pa.index)?;
            let sa = per_case_scores(&pa, &gold, class)?;
            let sb = per_case_scores(&pb, &gold, class)?;
            let p = permutation_test(&sa, &sb, Resampling::Auto { resamples, seed })?;
            println!("class {class}: {} paired cases, p = {p}", sa.len());
            Ok(())
        }
        Command::Run { manifest } => {
            let m = ExperimentManifest::read(&manifest)?;
            let bundle = run_experiment(&m)?;
            print!("{}", render_report(&bundle.rows, None).text);
            println!("bundle written to {}", bundle.out.display());
            Ok(())
        }
    }
}
