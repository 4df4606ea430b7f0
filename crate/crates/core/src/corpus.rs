//! Cases, the claim/outcome label algebra, and JSONL corpus I/O.
//!
//! A case carries the set of articles the applicant claimed and the subset
//! the court found violated. Per article the outcome is positive when
//! violated, negative when claimed but not violated, and null when never
//! claimed, so the claim indicator is exactly "outcome is not null".

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// First and last article of the Convention that define rights and freedoms.
pub const CORE_ARTICLES: std::ops::RangeInclusive<u32> = 2..=18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArticleId(pub u32);

impl ArticleId {
    pub fn is_core(self) -> bool {
        CORE_ARTICLES.contains(&self.0)
    }
}

impl fmt::Display for ArticleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub type ArticleSet = BTreeSet<ArticleId>;

pub fn article_set(ids: impl IntoIterator<Item = u32>) -> ArticleSet {
    ids.into_iter().map(ArticleId).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeLabel {
    Pos,
    Neg,
    Null,
}

impl OutcomeLabel {
    /// Decision order; ties in an argmax resolve to the earliest entry.
    pub const ALL: [OutcomeLabel; 3] = [OutcomeLabel::Pos, OutcomeLabel::Neg, OutcomeLabel::Null];

    pub fn index(self) -> usize {
        match self {
            OutcomeLabel::Pos => 0,
            OutcomeLabel::Neg => 1,
            OutcomeLabel::Null => 2,
        }
    }

    pub fn is_claimed(self) -> bool {
        self != OutcomeLabel::Null
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeLabel::Pos => "pos",
            OutcomeLabel::Neg => "neg",
            OutcomeLabel::Null => "null",
        }
    }
}

impl fmt::Display for OutcomeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for OutcomeLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pos" | "positive" => Ok(OutcomeLabel::Pos),
            "neg" | "negative" => Ok(OutcomeLabel::Neg),
            "null" => Ok(OutcomeLabel::Null),
            other => Err(Error::Config(format!("unknown outcome class {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Case {
    pub case_id: String,
    pub facts: String,
    pub claims: ArticleSet,
    pub violated: ArticleSet,
}

impl Case {
    /// Builds a case, rejecting violations that were never claimed.
    pub fn new(
        case_id: impl Into<String>,
        facts: impl Into<String>,
        claims: ArticleSet,
        violated: ArticleSet,
    ) -> Result<Self> {
        let case_id = case_id.into();
        check_subset(&case_id, &claims, &violated)?;
        Ok(Self {
            case_id,
            facts: facts.into(),
            claims,
            violated,
        })
    }

    pub fn negatives(&self) -> ArticleSet {
        self.claims.difference(&self.violated).copied().collect()
    }
}

fn check_subset(case_id: &str, claims: &ArticleSet, violated: &ArticleSet) -> Result<()> {
    let missing: Vec<u32> = violated.difference(claims).map(|a| a.0).collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::ViolatedNotClaimed {
            case_id: case_id.to_string(),
            missing,
        })
    }
}

/// The K article columns used for labelling, ascending and duplicate free.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleIndex {
    articles: Vec<ArticleId>,
}

impl ArticleIndex {
    pub fn new(articles: impl IntoIterator<Item = ArticleId>) -> Self {
        let set: BTreeSet<ArticleId> = articles.into_iter().collect();
        Self {
            articles: set.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    pub fn articles(&self) -> &[ArticleId] {
        &self.articles
    }

    pub fn position(&self, article: ArticleId) -> Option<usize> {
        self.articles.binary_search(&article).ok()
    }
}

/// Labels one case over the index columns.
///
/// Articles outside the index are ignored; callers drop non-core ids before
/// labelling.
pub fn derive_labels(
    claims: &ArticleSet,
    violated: &ArticleSet,
    index: &ArticleIndex,
) -> Result<Vec<OutcomeLabel>> {
    check_subset("<unnamed>", claims, violated)?;
    Ok(label_row(claims, violated, index))
}

fn label_row(claims: &ArticleSet, violated: &ArticleSet, index: &ArticleIndex) -> Vec<OutcomeLabel> {
    index
        .articles()
        .iter()
        .map(|a| {
            if violated.contains(a) {
                OutcomeLabel::Pos
            } else if claims.contains(a) {
                OutcomeLabel::Neg
            } else {
                OutcomeLabel::Null
            }
        })
        .collect()
}

/// Cases x articles grid of outcome labels. The claim grid is not stored
/// separately: an article is claimed exactly when its label is not null.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatrix {
    index: ArticleIndex,
    case_ids: Vec<String>,
    labels: Vec<OutcomeLabel>,
}

impl LabelMatrix {
    pub fn build(cases: &[Case], index: &ArticleIndex) -> Result<Self> {
        let mut labels = Vec::with_capacity(cases.len() * index.len());
        for case in cases {
            check_subset(&case.case_id, &case.claims, &case.violated)?;
            labels.extend(label_row(&case.claims, &case.violated, index));
        }
        Ok(Self {
            index: index.clone(),
            case_ids: cases.iter().map(|c| c.case_id.clone()).collect(),
            labels,
        })
    }

    pub fn from_rows(index: ArticleIndex, case_ids: Vec<String>, rows: Vec<Vec<OutcomeLabel>>) -> Result<Self> {
        if rows.len() != case_ids.len() || rows.iter().any(|r| r.len() != index.len()) {
            return Err(Error::Shape(format!(
                "{} ids, {} rows, expected width {}",
                case_ids.len(),
                rows.len(),
                index.len()
            )));
        }
        Ok(Self {
            index,
            case_ids,
            labels: rows.into_iter().flatten().collect(),
        })
    }

    pub fn index(&self) -> &ArticleIndex {
        &self.index
    }

    pub fn case_ids(&self) -> &[String] {
        &self.case_ids
    }

    pub fn n_cases(&self) -> usize {
        self.case_ids.len()
    }

    pub fn n_articles(&self) -> usize {
        self.index.len()
    }

    pub fn row(&self, case: usize) -> &[OutcomeLabel] {
        let k = self.index.len();
        &self.labels[case * k..(case + 1) * k]
    }

    pub fn label(&self, case: usize, article: usize) -> OutcomeLabel {
        self.row(case)[article]
    }

    pub fn claimed(&self, case: usize, article: usize) -> bool {
        self.label(case, article).is_claimed()
    }

    pub fn labels(&self) -> &[OutcomeLabel] {
        &self.labels
    }

    /// Keeps only the given article columns (used for per-article subset reports).
    pub fn restrict(&self, keep: &[ArticleId]) -> LabelMatrix {
        let cols: Vec<usize> = keep.iter().filter_map(|a| self.index.position(*a)).collect();
        let index = ArticleIndex::new(cols.iter().map(|&c| self.index.articles()[c]));
        let rows = (0..self.n_cases())
            .map(|i| cols.iter().map(|&c| self.label(i, c)).collect())
            .collect();
        LabelMatrix::from_rows(index, self.case_ids.clone(), rows).expect("consistent shape")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn file_name(self) -> &'static str {
        match self {
            Split::Train => "train.jsonl",
            Split::Validation => "validation.jsonl",
            Split::Test => "test.jsonl",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitSet {
    pub train: Vec<Case>,
    pub validation: Vec<Case>,
    pub test: Vec<Case>,
}

impl SplitSet {
    pub fn get(&self, split: Split) -> &[Case] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    pub fn get_mut(&mut self, split: Split) -> &mut Vec<Case> {
        match split {
            Split::Train => &mut self.train,
            Split::Validation => &mut self.validation,
            Split::Test => &mut self.test,
        }
    }

    /// Checks that case ids are unique across all splits and every case obeys violated ⊆ claims.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for split in Split::ALL {
            for case in self.get(split) {
                check_subset(&case.case_id, &case.claims, &case.violated)?;
                if !seen.insert(case.case_id.as_str()) {
                    return Err(Error::DuplicateCase(case.case_id.clone()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorpusFormat {
    /// A directory holding `train.jsonl`, `validation.jsonl` and `test.jsonl`.
    #[default]
    JsonlDir,
}

/// Counts of input tokens that were dropped while loading.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub dropped_non_core: usize,
    pub rejected_tokens: usize,
}

#[derive(Serialize)]
struct CaseRecordOut<'a> {
    case_id: &'a str,
    facts: &'a str,
    claims: Vec<u32>,
    violated: Vec<u32>,
}

#[derive(Deserialize)]
struct CaseRecordIn {
    case_id: String,
    facts: String,
    claims: Vec<serde_json::Value>,
    violated: Vec<serde_json::Value>,
}

pub fn load_corpus(dir: &Path, format: CorpusFormat) -> Result<SplitSet> {
    load_corpus_with_report(dir, format).map(|(s, _)| s)
}

pub fn load_corpus_with_report(dir: &Path, format: CorpusFormat) -> Result<(SplitSet, LoadReport)> {
    let CorpusFormat::JsonlDir = format;
    let mut splits = SplitSet::default();
    let mut report = LoadReport::default();
    for split in Split::ALL {
        let path = dir.join(split.file_name());
        let cases = read_split(&path, &mut report)?;
        if cases.is_empty() {
            return Err(Error::EmptyCorpus(path));
        }
        *splits.get_mut(split) = cases;
    }
    splits.validate()?;
    if report.dropped_non_core > 0 {
        log::warn!(
            "{}: dropped {} non-core article ids",
            dir.display(),
            report.dropped_non_core
        );
    }
    Ok((splits, report))
}

fn read_split(path: &Path, report: &mut LoadReport) -> Result<Vec<Case>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut cases = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let schema = |message: String| Error::Schema {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let rec: CaseRecordIn = serde_json::from_str(&line).map_err(|e| schema(e.to_string()))?;
        let claims = parse_articles(&rec.claims, report).map_err(&schema)?;
        let violated = parse_articles(&rec.violated, report).map_err(&schema)?;
        cases.push(Case::new(rec.case_id, rec.facts, claims, violated)?);
    }
    Ok(cases)
}

fn parse_articles(values: &[serde_json::Value], report: &mut LoadReport) -> Result<ArticleSet, String> {
    let mut out = ArticleSet::new();
    for v in values {
        let number = match v {
            serde_json::Value::Number(n) => match n.as_u64().and_then(|x| u32::try_from(x).ok()) {
                Some(x) => Some(x),
                None => return Err(format!("invalid article number {n}")),
            },
            serde_json::Value::String(s) => s.trim().parse::<u32>().ok(),
            other => return Err(format!("invalid article token {other}")),
        };
        match number {
            None => {
                log::warn!("ignoring non-integer article token {v}");
                report.rejected_tokens += 1;
            }
            Some(x) if !ArticleId(x).is_core() => report.dropped_non_core += 1,
            Some(x) => {
                out.insert(ArticleId(x));
            }
        }
    }
    Ok(out)
}

pub fn case_to_json(case: &Case) -> String {
    serde_json::to_string(&CaseRecordOut {
        case_id: &case.case_id,
        facts: &case.facts,
        claims: case.claims.iter().map(|a| a.0).collect(),
        violated: case.violated.iter().map(|a| a.0).collect(),
    })
    .expect("case record serializes")
}

pub fn write_split(path: &Path, cases: &[Case]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for case in cases {
        writeln!(w, "{}", case_to_json(case)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_corpus(dir: &Path, splits: &SplitSet) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for split in Split::ALL {
        write_split(&dir.join(split.file_name()), splits.get(split))?;
    }
    Ok(())
}

pub fn corpus_paths(dir: &Path) -> Vec<PathBuf> {
    Split::ALL.iter().map(|s| dir.join(s.file_name())).collect()
}

/// Core articles claimed somewhere in both the validation and the test split.
pub fn filter_articles(splits: &SplitSet) -> Result<ArticleIndex> {
    let present = |cases: &[Case]| -> ArticleSet {
        cases
            .iter()
            .flat_map(|c| c.claims.iter().copied())
            .filter(|a| a.is_core())
            .collect()
    };
    let val = present(&splits.validation);
    let test = present(&splits.test);
    let index = ArticleIndex::new(val.intersection(&test).copied());
    if index.is_empty() {
        return Err(Error::NoArticles);
    }
    Ok(index)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ArticleHistogram {
    pub article: ArticleId,
    pub pos: usize,
    pub neg: usize,
    pub null: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitStats {
    pub split: Split,
    pub cases: usize,
    pub with_positive: usize,
    pub with_negative: usize,
    pub with_claim: usize,
    pub without_claim: usize,
    pub per_article: Vec<ArticleHistogram>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub articles: Vec<ArticleId>,
    pub splits: Vec<SplitStats>,
}

pub fn split_stats(splits: &SplitSet, index: &ArticleIndex) -> Result<CorpusStats> {
    let mut out = Vec::new();
    for split in Split::ALL {
        let labels = LabelMatrix::build(splits.get(split), index)?;
        let mut s = SplitStats {
            split,
            cases: labels.n_cases(),
            with_positive: 0,
            with_negative: 0,
            with_claim: 0,
            without_claim: 0,
            per_article: index
                .articles()
                .iter()
                .map(|&article| ArticleHistogram {
                    article,
                    pos: 0,
                    neg: 0,
                    null: 0,
                })
                .collect(),
        };
        for i in 0..labels.n_cases() {
            let row = labels.row(i);
            let has = |l: OutcomeLabel| row.contains(&l);
            s.with_positive += has(OutcomeLabel::Pos) as usize;
            s.with_negative += has(OutcomeLabel::Neg) as usize;
            if row.iter().any(|l| l.is_claimed()) {
                s.with_claim += 1;
            } else {
                s.without_claim += 1;
            }
            for (h, l) in s.per_article.iter_mut().zip(row) {
                match l {
                    OutcomeLabel::Pos => h.pos += 1,
                    OutcomeLabel::Neg => h.neg += 1,
                    OutcomeLabel::Null => h.null += 1,
                }
            }
        }
        out.push(s);
    }
    Ok(CorpusStats {
        articles: index.articles().to_vec(),
        splits: out,
    })
}

impl CorpusStats {
    pub fn get(&self, split: Split) -> &SplitStats {
        self.splits.iter().find(|s| s.split == split).expect("all splits present")
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("K = {} articles: {:?}\n\n", self.articles.len(), self.articles.iter().map(|a| a.0).collect::<Vec<_>>()));
        out.push_str(&format!("{:<16}{:>10}{:>12}{:>10}\n", "outcome", "train", "validation", "test"));
        let row = |name: &str, f: &dyn Fn(&SplitStats) -> usize| {
            let v: Vec<usize> = Split::ALL.iter().map(|s| f(self.get(*s))).collect();
            format!("{:<16}{:>10}{:>12}{:>10}\n", name, v[0], v[1], v[2])
        };
        out.push_str(&row("positive", &|s| s.with_positive));
        out.push_str(&row("negative", &|s| s.with_negative));
        out.push_str(&row("claims", &|s| s.with_claim));
        out.push_str(&row("no claims", &|s| s.without_claim));
        out.push_str(&row("cases", &|s| s.cases));
        out.push_str("\nper-article labels (train): article pos neg null\n");
        for h in &self.get(Split::Train).per_article {
            out.push_str(&format!("{:>7}{:>7}{:>7}{:>8}\n", h.article.0, h.pos, h.neg, h.null));
        }
        out
    }
}
