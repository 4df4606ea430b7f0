//! End-to-end experiment runs driven by a `key = value` manifest.
//!
//! ```text
//! corpus = data/outcome          # or: synth = synth.conf
//! architectures = simple, claim-outcome
//! seeds = 0, 1
//! out = runs/first
//! grid = desk
//! ```
//!
//! Relative paths are resolved against the manifest's directory. A run
//! writes `checkpoints/`, `predictions/`, `report.csv`, `report.txt`,
//! `significance.csv` and `run_log.jsonl` into `out`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::corpus::{filter_articles, load_corpus, write_corpus, ArticleId, CorpusFormat, OutcomeLabel, SplitSet};
use crate::encoder::{EncoderKind, VectorTable};
use crate::error::{Error, Result};
use crate::eval::{
    per_case_scores, permutation_test, predict, random_baseline, render_report, render_significance_csv, score,
    write_predictions, PredictionSet, RandomBaseline, ReportRow, Resampling, SignificanceRow,
};
use crate::kv::KeyValues;
use crate::model::{write_checkpoint, Architecture};
use crate::par;
use crate::synth::{generate_corpus, GenConfig};
use crate::train::{grid_search, Dataset, GridResult, HyperParams, TrainConfig, TrainData, TRAIN_KEYS};

const MANIFEST_KEYS: &[&str] = &[
    "corpus",
    "synth",
    "corpus_name",
    "architectures",
    "seeds",
    "out",
    "vectors",
    "random_instantiations",
    "resamples",
    "subset_articles",
];

#[derive(Debug, Clone, PartialEq)]
pub enum CorpusSource {
    Dir(PathBuf),
    Synth(GenConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentManifest {
    pub corpus: CorpusSource,
    pub corpus_name: String,
    pub architectures: Vec<Architecture>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub train: TrainConfig,
    pub vectors: Option<PathBuf>,
    pub random_instantiations: usize,
    pub resamples: usize,
    /// Articles for an extra restricted report, e.g. 8 and 13.
    pub subset_articles: Vec<u32>,
}

impl ExperimentManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let kv = KeyValues::read(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_kv(&kv, base)
    }

    pub fn from_kv(kv: &KeyValues, base: &Path) -> Result<Self> {
        let known: Vec<&str> = MANIFEST_KEYS.iter().chain(TRAIN_KEYS).copied().filter(|k| *k != "seed").collect();
        kv.reject_unknown(&known)?;
        let resolve = |p: &str| {
            let p = Path::new(p);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        let corpus = match (kv.get("corpus"), kv.get("synth")) {
            (Some(dir), None) => CorpusSource::Dir(resolve(dir)),
            (None, Some(file)) => {
                let path = resolve(file);
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                CorpusSource::Synth(GenConfig::parse(&text)?)
            }
            _ => return Err(Error::Config("manifest needs exactly one of corpus or synth".into())),
        };
        let default_name = match &corpus {
            CorpusSource::Dir(d) => d.file_name().map_or("corpus".into(), |n| n.to_string_lossy().into_owned()),
            CorpusSource::Synth(_) => "synth".to_string(),
        };
        let architectures = kv
            .list::<Architecture>("architectures")?
            .ok_or_else(|| Error::Config("manifest needs architectures".into()))?;
        let seeds = kv.list::<u64>("seeds")?.ok_or_else(|| Error::Config("manifest needs explicit seeds".into()))?;
        if architectures.is_empty() || seeds.is_empty() {
            return Err(Error::Config("architectures and seeds must be non-empty".into()));
        }
        let out = resolve(kv.get("out").ok_or_else(|| Error::Config("manifest needs out".into()))?);
        Ok(Self {
            corpus,
            corpus_name: kv.get("corpus_name").map_or(default_name, str::to_string),
            architectures,
            seeds,
            out,
            train: TrainConfig::from_kv(kv)?,
            vectors: kv.get("vectors").map(resolve),
            random_instantiations: kv.parsed("random_instantiations")?.unwrap_or(100),
            resamples: kv.parsed("resamples")?.unwrap_or(10_000),
            subset_articles: kv.list("subset_articles")?.unwrap_or_default(),
        })
    }

    /// Fails on missing inputs before any work starts.
    pub fn check_paths(&self) -> Result<()> {
        let missing = |p: &Path| Error::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"));
        if let CorpusSource::Dir(d) = &self.corpus {
            if !d.is_dir() {
                return Err(missing(d));
            }
        }
        if let Some(v) = &self.vectors {
            if !v.is_file() {
                return Err(missing(v));
            }
        }
        if self.train.encoder.kind == EncoderKind::Precomputed && self.vectors.is_none() {
            return Err(Error::Config("precomputed encoder needs vectors".into()));
        }
        Ok(())
    }
}

/// What a run produced, besides the files in the bundle.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub out: PathBuf,
    pub rows: Vec<ReportRow>,
    pub significance: Vec<SignificanceRow>,
    pub random: RandomBaseline,
}

#[derive(Serialize)]
struct JobConfig<'a> {
    architecture: Architecture,
    seed: u64,
    corpus: &'a str,
    train: &'a TrainConfig,
}

/// Hex SHA-256 of the canonical JSON of a job's configuration.
pub fn config_hash(arch: Architecture, seed: u64, corpus: &str, train: &TrainConfig) -> String {
    let cfg = TrainConfig { seed, ..train.clone() };
    let json = serde_json::to_vec(&JobConfig {
        architecture: arch,
        seed,
        corpus,
        train: &cfg,
    })
    .expect("config serializes");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

struct JobResult {
    arch: Architecture,
    seed: u64,
    hash: String,
    hyper: HyperParams,
    best_epoch: usize,
    grid: Vec<GridResult>,
    log: Vec<u8>,
    preds: PredictionSet,
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn run_experiment(manifest: &ExperimentManifest) -> Result<Bundle> {
    manifest.check_paths()?;
    manifest.train.validate()?;
    let out = &manifest.out;
    for sub in ["checkpoints", "predictions"] {
        let d = out.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }

    let splits: SplitSet = match &manifest.corpus {
        CorpusSource::Dir(d) => load_corpus(d, CorpusFormat::JsonlDir).map_err(|e| e.in_stage("load corpus"))?,
        CorpusSource::Synth(g) => {
            let s = generate_corpus(g).map_err(|e| e.in_stage("synth"))?;
            write_corpus(&out.join("corpus"), &s)?;
            s
        }
    };
    splits.validate().map_err(|e| e.in_stage("load corpus"))?;
    let articles = filter_articles(&splits).map_err(|e| e.in_stage("filter articles"))?;
    let enc = manifest.train.encoder;
    let train = Dataset::new(&splits.train, &articles, &enc)?;
    let validation = Dataset::new(&splits.validation, &articles, &enc)?;
    let test = Dataset::new(&splits.test, &articles, &enc)?;
    let vectors = match &manifest.vectors {
        Some(p) => Some(Arc::new(VectorTable::read_jsonl(p)?)),
        None => None,
    };

    let jobs: Vec<(Architecture, u64)> = manifest
        .architectures
        .iter()
        .flat_map(|&a| manifest.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let data = TrainData {
        articles: &articles,
        train: &train,
        validation: &validation,
        vectors: vectors.as_ref(),
    };
    let results = par::map(&jobs, |&(arch, seed)| -> Result<JobResult> {
        let cfg = TrainConfig {
            seed,
            ..manifest.train.clone()
        };
        let stage = format!("grid_search {arch} seed {seed}");
        let grid = grid_search(arch, &cfg, data).map_err(|e| e.in_stage(&stage))?;
        let name = format!("{arch}-seed{seed}");
        write_checkpoint(&grid.best.model, &out.join("checkpoints").join(format!("{name}.ckpt")))?;
        let preds = predict(&grid.best.model, &test).map_err(|e| e.in_stage(format!("eval {arch} seed {seed}")))?;
        write_predictions(&out.join("predictions").join(format!("{name}.jsonl")), &preds)?;
        let mut log = Vec::new();
        grid.best.write_log(&mut log).expect("in-memory write");
        Ok(JobResult {
            arch,
            seed,
            hash: config_hash(arch, seed, &manifest.corpus_name, &cfg),
            hyper: grid.best.hyper,
            best_epoch: grid.best.best_epoch,
            grid: grid.results,
            log,
            preds,
        })
    });
    let results: Vec<JobResult> = results.into_iter().collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut run_log = Vec::new();
    let mut subset_rows = Vec::new();
    let keep: Vec<ArticleId> = manifest.subset_articles.iter().map(|&a| ArticleId(a)).collect();
    let subset_gold = (!keep.is_empty()).then(|| test.labels.restrict(&keep));
    for r in &results {
        let s = score(&r.preds, &test.labels).map_err(|e| e.in_stage(format!("eval {} seed {}", r.arch, r.seed)))?;
        let row = |s: crate::eval::ClassScores| ReportRow {
            model: r.arch.to_string(),
            encoder: enc.kind.name().into(),
            corpus: manifest.corpus_name.clone(),
            seed: Some(r.seed),
            pos: Some(s.pos),
            neg: Some(s.neg),
            null: s.null,
            all: s.all,
        };
        rows.push(row(s));
        if let Some(g) = &subset_gold {
            subset_rows.push(row(score(&r.preds.restrict(&keep), g)?));
        }
        let rec = serde_json::json!({
            "event": "job",
            "architecture": r.arch,
            "seed": r.seed,
            "config_hash": r.hash,
            "selected": r.hyper,
            "selected_epoch": r.best_epoch,
            "grid": r.grid,
            "scores": s,
        });
        run_log.extend(serde_json::to_vec(&rec).expect("record serializes"));
        run_log.push(b'\n');
        for line in String::from_utf8_lossy(&r.log).lines() {
            let mut v: serde_json::Value = serde_json::from_str(line).expect("own log is JSON");
            v["event"] = "epoch".into();
            v["architecture"] = serde_json::to_value(r.arch).expect("serializes");
            v["seed"] = r.seed.into();
            run_log.extend(serde_json::to_vec(&v).expect("record serializes"));
            run_log.push(b'\n');
        }
    }

    let base_seed = manifest.seeds[0];
    let random = random_baseline(&test.labels, manifest.random_instantiations, base_seed)?;
    rows.push(ReportRow {
        model: "random".into(),
        encoder: "—".into(),
        corpus: manifest.corpus_name.clone(),
        seed: Some(base_seed),
        pos: Some(random.mean[0]),
        neg: Some(random.mean[1]),
        null: Some(random.mean[2]),
        all: crate::eval::all_score(Some(random.mean[0]), Some(random.mean[1]), Some(random.mean[2])),
    });
    let rec = serde_json::json!({ "event": "random_baseline", "baseline": random });
    run_log.extend(serde_json::to_vec(&rec).expect("record serializes"));
    run_log.push(b'\n');

    let mut significance = Vec::new();
    for (i, a) in results.iter().enumerate() {
        for b in &results[i + 1..] {
            if a.seed != b.seed {
                continue;
            }
            for class in OutcomeLabel::ALL {
                if !a.preds.supports(class) || !b.preds.supports(class) {
                    continue;
                }
                let sa = per_case_scores(&a.preds, &test.labels, class)?;
                let sb = per_case_scores(&b.preds, &test.labels, class)?;
                let mode = Resampling::Auto {
                    resamples: manifest.resamples,
                    seed: par::mix_seed(a.seed, class.index() as u64),
                };
                significance.push(SignificanceRow {
                    a: format!("{}@{}", a.arch, a.seed),
                    b: format!("{}@{}", b.arch, b.seed),
                    class: class.as_str().into(),
                    pairs: sa.len(),
                    p_value: permutation_test(&sa, &sb, mode)?,
                });
            }
        }
    }

    let rendered = render_report(&rows, None);
    write(&out.join("report.csv"), &rendered.csv)?;
    let mut text = rendered.text;
    text.push_str(&format!(
        "random baseline sd over {} draws: Pos {:.2}  Neg {:.2}  Null {:.2}\n",
        random.instantiations, random.sd[0], random.sd[1], random.sd[2]
    ));
    write(&out.join("report.txt"), text)?;
    if !subset_rows.is_empty() {
        write(&out.join("report_subset.csv"), render_report(&subset_rows, None).csv)?;
    }
    write(&out.join("significance.csv"), render_significance_csv(&significance))?;
    write(&out.join("run_log.jsonl"), run_log)?;
    Ok(Bundle {
        out: out.clone(),
        rows,
        significance,
        random,
    })
}
