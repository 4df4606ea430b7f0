//! Micro-F1 scoring, the random baseline, paired permutation tests and
//! report tables.

mod random;
mod report;
mod significance;

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use random::{random_baseline, RandomBaseline};
pub use report::{
    published_scores, read_report_csv, render_report, render_significance_csv, verify_fixture, FixtureCheck, Rendered,
    ReportRow, SignificanceRow, ALL_TOLERANCE, PUBLISHED_SCORES_CSV,
};
pub use significance::{per_case_scores, permutation_test, Resampling, EXHAUSTIVE_MAX};

use crate::corpus::{ArticleId, ArticleIndex, LabelMatrix, OutcomeLabel};
use crate::error::{Error, Result};
use crate::model::{decide, decide_baseline, Model, ModelOutput};
use crate::par;
use crate::train::Dataset;

/// Decision threshold of the baseline sigmoids.
pub const BASELINE_THRESHOLD: f64 = 0.5;

/// Row-major decisions, one entry per (case, article).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decisions {
    ThreeWay(Vec<OutcomeLabel>),
    /// Independent `(pos, neg)` flags; both may be set.
    Baseline(Vec<(bool, bool)>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionSet {
    pub index: ArticleIndex,
    pub case_ids: Vec<String>,
    pub decisions: Decisions,
}

impl PredictionSet {
    pub fn three_way(index: ArticleIndex, case_ids: Vec<String>, rows: Vec<Vec<OutcomeLabel>>) -> Result<Self> {
        check_rows(&index, &case_ids, &rows)?;
        Ok(Self {
            index,
            case_ids,
            decisions: Decisions::ThreeWay(rows.concat()),
        })
    }

    pub fn baseline(index: ArticleIndex, case_ids: Vec<String>, rows: Vec<Vec<(bool, bool)>>) -> Result<Self> {
        check_rows(&index, &case_ids, &rows)?;
        Ok(Self {
            index,
            case_ids,
            decisions: Decisions::Baseline(rows.concat()),
        })
    }

    pub fn n_cases(&self) -> usize {
        self.case_ids.len()
    }

    pub fn is_three_way(&self) -> bool {
        matches!(self.decisions, Decisions::ThreeWay(_))
    }

    /// Whether the prediction at `(case, article)` asserts `class`. `None`
    /// when the predictions cannot express the class (NULL for baselines).
    pub fn asserts(&self, cell: usize, class: OutcomeLabel) -> Option<bool> {
        match &self.decisions {
            Decisions::ThreeWay(d) => Some(d[cell] == class),
            Decisions::Baseline(d) => match class {
                OutcomeLabel::Pos => Some(d[cell].0),
                OutcomeLabel::Neg => Some(d[cell].1),
                OutcomeLabel::Null => None,
            },
        }
    }

    pub fn supports(&self, class: OutcomeLabel) -> bool {
        self.is_three_way() || class != OutcomeLabel::Null
    }

    /// Errors unless case ids and article columns coincide with `gold`.
    pub fn check_aligned(&self, gold: &LabelMatrix) -> Result<()> {
        if self.index != *gold.index() {
            return Err(Error::Misaligned("article columns differ".into()));
        }
        if self.case_ids != gold.case_ids() {
            return Err(Error::Misaligned(format!(
                "{} predicted cases vs {} gold cases, or different order",
                self.case_ids.len(),
                gold.n_cases()
            )));
        }
        Ok(())
    }

    /// Keeps only the listed article columns.
    pub fn restrict(&self, keep: &[ArticleId]) -> PredictionSet {
        let cols: Vec<usize> = keep.iter().filter_map(|a| self.index.position(*a)).collect();
        let index = ArticleIndex::new(cols.iter().map(|&c| self.index.articles()[c]));
        let k = self.index.len();
        let mut order: Vec<usize> = Vec::new();
        for n in 0..self.n_cases() {
            for &c in &cols {
                order.push(n * k + c);
            }
        }
        let decisions = match &self.decisions {
            Decisions::ThreeWay(d) => Decisions::ThreeWay(order.iter().map(|&i| d[i]).collect()),
            Decisions::Baseline(d) => Decisions::Baseline(order.iter().map(|&i| d[i]).collect()),
        };
        PredictionSet {
            index,
            case_ids: self.case_ids.clone(),
            decisions,
        }
    }
}

fn check_rows<T>(index: &ArticleIndex, case_ids: &[String], rows: &[Vec<T>]) -> Result<()> {
    if rows.len() != case_ids.len() {
        return Err(Error::Misaligned(format!("{} rows for {} cases", rows.len(), case_ids.len())));
    }
    if let Some((n, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != index.len()) {
        return Err(Error::Misaligned(format!(
            "case {}: {} predictions for {} articles",
            case_ids[n],
            r.len(),
            index.len()
        )));
    }
    Ok(())
}

/// Decisions of `model` on every case of `data`.
pub fn predict(model: &Model, data: &Dataset) -> Result<PredictionSet> {
    let outputs = par::map(&data.inputs, |input| model.output(input));
    let outputs: Vec<ModelOutput> = outputs.into_iter().collect::<Result<_>>()?;
    let index = model.articles().clone();
    let case_ids = data.inputs.iter().map(|i| i.case_id.clone()).collect();
    if model.architecture().is_three_way() {
        let rows = outputs
            .iter()
            .map(|o| decide(&o.distribution().expect("three-way output")))
            .collect();
        PredictionSet::three_way(index, case_ids, rows)
    } else {
        let rows = outputs
            .iter()
            .map(|o| match o {
                ModelOutput::Baseline(s) => decide_baseline(s, BASELINE_THRESHOLD),
                _ => unreachable!("baseline architecture"),
            })
            .collect();
        PredictionSet::baseline(index, case_ids, rows)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PredictionRecord {
    case_id: String,
    article: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pred: Option<OutcomeLabel>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pos: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    neg: Option<bool>,
}

/// JSONL, one record per (case, article) in row-major order.
pub fn write_predictions(path: &Path, preds: &PredictionSet) -> Result<()> {
    let mut out = Vec::new();
    let k = preds.index.len();
    for (n, case_id) in preds.case_ids.iter().enumerate() {
        for (c, article) in preds.index.articles().iter().enumerate() {
            let cell = n * k + c;
            let rec = match &preds.decisions {
                Decisions::ThreeWay(d) => PredictionRecord {
                    case_id: case_id.clone(),
                    article: article.0,
                    pred: Some(d[cell]),
                    pos: None,
                    neg: None,
                },
                Decisions::Baseline(d) => PredictionRecord {
                    case_id: case_id.clone(),
                    article: article.0,
                    pred: None,
                    pos: Some(d[cell].0),
                    neg: Some(d[cell].1),
                },
            };
            out.extend(serde_json::to_vec(&rec).expect("record serializes"));
            out.push(b'\n');
        }
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| Error::io(path, e))
}

/// Reads predictions written by [`write_predictions`]. Cases keep their
/// order of first appearance; every case must cover the same articles.
pub fn read_predictions(path: &Path) -> Result<PredictionSet> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let schema = |line: usize, message: String| Error::Schema {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut case_ids: Vec<String> = Vec::new();
    let mut cells: Vec<Vec<(u32, PredictionRecord)>> = Vec::new();
    let mut positions = std::collections::HashMap::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictionRecord = serde_json::from_str(&line).map_err(|e| schema(n + 1, e.to_string()))?;
        let three = rec.pred.is_some();
        let two = rec.pos.is_some() && rec.neg.is_some();
        if three == two {
            return Err(schema(n + 1, "expected either \"pred\" or both \"pos\" and \"neg\"".into()));
        }
        let slot = *positions.entry(rec.case_id.clone()).or_insert_with(|| {
            case_ids.push(rec.case_id.clone());
            cells.push(Vec::new());
            cells.len() - 1
        });
        cells[slot].push((rec.article, rec));
    }
    if case_ids.is_empty() {
        return Err(Error::EmptyCorpus(path.to_path_buf()));
    }
    for row in &mut cells {
        row.sort_by_key(|(a, _)| *a);
    }
    let articles: Vec<u32> = cells[0].iter().map(|(a, _)| *a).collect();
    let index = ArticleIndex::new(articles.iter().map(|&a| ArticleId(a)));
    if index.len() != articles.len() {
        return Err(schema(0, format!("case {} repeats an article", case_ids[0])));
    }
    for (n, row) in cells.iter().enumerate() {
        if row.iter().map(|(a, _)| *a).ne(articles.iter().copied()) {
            return Err(Error::Misaligned(format!("case {} covers different articles", case_ids[n])));
        }
    }
    let three_way = cells[0][0].1.pred.is_some();
    if cells.iter().flatten().any(|(_, r)| r.pred.is_some() != three_way) {
        return Err(schema(0, "mixed three-way and baseline records".into()));
    }
    if three_way {
        let rows = cells.iter().map(|r| r.iter().map(|(_, p)| p.pred.unwrap()).collect()).collect();
        PredictionSet::three_way(index, case_ids, rows)
    } else {
        let rows = cells
            .iter()
            .map(|r| r.iter().map(|(_, p)| (p.pos.unwrap(), p.neg.unwrap())).collect())
            .collect();
        PredictionSet::baseline(index, case_ids, rows)
    }
}

/// Pooled counts for one class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    /// F1 in percent; 0 when precision and recall are both 0 or undefined.
    pub fn f1(&self) -> f64 {
        f1_from_counts(self.tp, self.fp, self.fn_)
    }
}

/// `100 · 2TP / (2TP + FP + FN)`, which equals `2PR / (P + R)` whenever
/// that is defined, and 0 otherwise.
pub fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if tp == 0 || denom == 0 {
        0.0
    } else {
        100.0 * (2 * tp) as f64 / denom as f64
    }
}

pub fn confusion(preds: &PredictionSet, gold: &LabelMatrix, class: OutcomeLabel) -> Result<Confusion> {
    preds.check_aligned(gold)?;
    if !preds.supports(class) {
        return Err(Error::Config(format!("baseline predictions have no {class} class")));
    }
    let mut c = Confusion::default();
    for (cell, g) in gold.labels().iter().enumerate() {
        let p = preds.asserts(cell, class).expect("class supported");
        match (p, *g == class) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Micro-averaged F1 for one class, in percent.
pub fn micro_f1(preds: &PredictionSet, gold: &LabelMatrix, class: OutcomeLabel) -> Result<f64> {
    Ok(confusion(preds, gold, class)?.f1())
}

/// Unweighted mean of the three class scores, undefined if any is missing.
pub fn all_score(pos: Option<f64>, neg: Option<f64>, null: Option<f64>) -> Option<f64> {
    Some((pos? + neg? + null?) / 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub pos: f64,
    pub neg: f64,
    pub null: Option<f64>,
    pub all: Option<f64>,
}

pub fn score(preds: &PredictionSet, gold: &LabelMatrix) -> Result<ClassScores> {
    let pos = micro_f1(preds, gold, OutcomeLabel::Pos)?;
    let neg = micro_f1(preds, gold, OutcomeLabel::Neg)?;
    let null = if preds.supports(OutcomeLabel::Null) {
        Some(micro_f1(preds, gold, OutcomeLabel::Null)?)
    } else {
        None
    };
    Ok(ClassScores {
        pos,
        neg,
        null,
        all: all_score(Some(pos), Some(neg), null),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use OutcomeLabel::*;

    fn gold(rows: Vec<Vec<OutcomeLabel>>) -> LabelMatrix {
        let k = rows[0].len();
        let ids = (0..rows.len()).map(|i| format!("c{i}")).collect();
        LabelMatrix::from_rows(ArticleIndex::new((0..k as u32).map(ArticleId)), ids, rows).unwrap()
    }

    #[test]
    fn perfect_is_100() {
        let g = gold(vec![vec![Pos, Neg], vec![Null, Pos]]);
        let p = PredictionSet::three_way(g.index().clone(), g.case_ids().to_vec(), vec![vec![Pos, Neg], vec![Null, Pos]]).unwrap();
        let s = score(&p, &g).unwrap();
        assert_eq!((s.pos, s.neg, s.null, s.all), (100.0, 100.0, Some(100.0), Some(100.0)));
    }

    #[test]
    fn two_thirds() {
        assert!((f1_from_counts(2, 1, 1) - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(f1_from_counts(0, 3, 2), 0.0);
        assert_eq!(f1_from_counts(0, 0, 0), 0.0);
    }

    #[test]
    fn all_score_examples() {
        let a = all_score(Some(74.80), Some(24.01), Some(95.53)).unwrap();
        assert!((a - 64.78).abs() < 0.005);
        let b = all_score(Some(76.96), Some(21.93), Some(95.71)).unwrap();
        assert!((b - 64.87).abs() < 0.005);
        assert_eq!(all_score(Some(0.0), Some(0.0), Some(0.0)), Some(0.0));
        assert_eq!(all_score(Some(1.0), Some(2.0), None), None);
    }

    #[test]
    fn doubled_baseline_prediction_counts_for_both_classes() {
        let g = gold(vec![vec![Pos], vec![Null]]);
        let p = PredictionSet::baseline(g.index().clone(), g.case_ids().to_vec(), vec![vec![(true, true)], vec![(false, true)]]).unwrap();
        let pos = confusion(&p, &g, Pos).unwrap();
        let neg = confusion(&p, &g, Neg).unwrap();
        assert_eq!((pos.tp, pos.fp), (1, 0));
        assert_eq!((neg.tp, neg.fp), (0, 2));
        assert!(micro_f1(&p, &g, Null).is_err());
        assert_eq!(score(&p, &g).unwrap().all, None);
    }

    #[test]
    fn misaligned_is_rejected() {
        let g = gold(vec![vec![Pos, Neg]]);
        let p = PredictionSet::three_way(g.index().clone(), vec!["other".into()], vec![vec![Pos, Neg]]).unwrap();
        assert!(matches!(micro_f1(&p, &g, Pos), Err(Error::Misaligned(_))));
    }

    #[test]
    fn prediction_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let idx = ArticleIndex::new([ArticleId(3), ArticleId(8)]);
        let ids = vec!["b".to_string(), "a".to_string()];
        let three = PredictionSet::three_way(idx.clone(), ids.clone(), vec![vec![Pos, Null], vec![Neg, Pos]]).unwrap();
        let base = PredictionSet::baseline(idx, ids, vec![vec![(true, false), (true, true)], vec![(false, false), (false, true)]]).unwrap();
        for (name, p) in [("t.jsonl", three), ("b.jsonl", base)] {
            let path = dir.path().join(name);
            write_predictions(&path, &p).unwrap();
            assert_eq!(read_predictions(&path).unwrap(), p);
        }
    }

    #[test]
    fn restrict_keeps_columns() {
        let idx = ArticleIndex::new([ArticleId(3), ArticleId(8), ArticleId(13)]);
        let p = PredictionSet::three_way(idx, vec!["a".into()], vec![vec![Pos, Neg, Null]]).unwrap();
        let r = p.restrict(&[ArticleId(8), ArticleId(13)]);
        assert_eq!(r.decisions, Decisions::ThreeWay(vec![Neg, Null]));
    }
}
