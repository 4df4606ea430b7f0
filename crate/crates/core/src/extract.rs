//! Regex extraction of the claimed article set from full judgment text, and
//! the corpus builder that pairs extracted claims with recorded violations.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{write_split, ArticleId, ArticleSet, Case, Split, SplitSet};
use crate::error::{Error, Result};
use crate::par;

/// Article numbers kept by extraction; core filtering happens at load time.
pub const EXTRACTABLE: std::ops::RangeInclusive<u32> = 1..=59;

// One or more article numbers, each optionally followed by paragraph
// references ("§ 1", "§§ 1 and 3", "§ 3 (c)"), joined by commas/and/or.
const PARAGRAPH: &str = r"(?:\s*§+\s*\d+(?:\s*\([a-z]\))?)*";

fn list_pattern() -> String {
    let item = format!(r"\d+{PARAGRAPH}");
    format!(r"({item}(?:(?:\s*,\s*(?:and\s+|or\s+)?|\s+(?:and|or)\s+)(?:Articles?\s+)?{item})*)")
}

#[derive(Debug, Clone)]
pub struct PatternSet {
    name: String,
    patterns: Vec<Regex>,
}

impl PatternSet {
    pub fn new(name: impl Into<String>, patterns: &[&str]) -> Result<Self> {
        let compiled = patterns.iter().map(|p| compile(p)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            name: name.into(),
            patterns: compiled,
        })
    }

    /// Default phrasings: "violation of Article(s)", "complained under",
    /// "relying on", "invoked", "breach of"; case-insensitive.
    pub fn default_v1() -> Self {
        let list = list_pattern();
        let sources = [
            format!(r"(?i)violations?\s+of\s+Articles?\s+{list}"),
            format!(r"(?i)breach(?:es)?\s+of\s+Articles?\s+{list}"),
            format!(r"(?i)complain(?:ed|s|ing)?\s+under\s+Articles?\s+{list}"),
            format!(r"(?i)rel(?:ying|ied|ies)\s+on\s+Articles?\s+{list}"),
            format!(r"(?i)invok(?:ed|ing|es)\s+Articles?\s+{list}"),
        ];
        let refs: Vec<&str> = sources.iter().map(String::as_str).collect();
        Self::new("default-v1", &refs).expect("built-in patterns compile")
    }

    /// Reads one pattern per line; blank lines and `#` comments are skipped.
    /// A `# name: <tag>` comment sets the version tag, otherwise the file stem is used.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let fallback = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "patterns".into());
        Self::parse(&text, &fallback)
    }

    pub fn parse(text: &str, fallback_name: &str) -> Result<Self> {
        let mut name = fallback_name.to_string();
        let mut patterns = Vec::new();
        for line in text.lines() {
            let trimmed = line.trim();
            if let Some(comment) = trimmed.strip_prefix('#') {
                if let Some(tag) = comment.trim().strip_prefix("name:") {
                    name = tag.trim().to_string();
                }
                continue;
            }
            if !trimmed.is_empty() {
                patterns.push(trimmed);
            }
        }
        Self::new(name, &patterns)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }
}

fn compile(pattern: &str) -> Result<Regex> {
    let re = Regex::new(pattern).map_err(|e| Error::Pattern {
        pattern: pattern.to_string(),
        message: e.to_string(),
    })?;
    if re.captures_len() != 2 {
        return Err(Error::Pattern {
            pattern: pattern.to_string(),
            message: format!("expected exactly one capture group, found {}", re.captures_len() - 1),
        });
    }
    Ok(re)
}

fn paragraph_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // "§§" introduces a paragraph list; a single "§" binds one paragraph only.
    RE.get_or_init(|| {
        Regex::new(r"§§\s*\d+(?:\s*\([a-z]\))?(?:\s*(?:,|and|or)\s*\d+(?:\s*\([a-z]\))?)*|§\s*\d+(?:\s*\([a-z]\))?").unwrap()
    })
}

fn digits_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\d+").unwrap())
}

/// Article numbers inside one captured span, ignoring paragraph references.
fn numbers_in_span(span: &str) -> impl Iterator<Item = u32> + '_ {
    let stripped = paragraph_re().replace_all(span, " ");
    digits_re()
        .find_iter(&stripped)
        .filter_map(|m| m.as_str().parse::<u32>().ok())
        .collect::<Vec<_>>()
        .into_iter()
}

pub fn extract_claims(raw_text: &str, patterns: &PatternSet) -> ArticleSet {
    let mut out = ArticleSet::new();
    for re in &patterns.patterns {
        for caps in re.captures_iter(raw_text) {
            if let Some(span) = caps.get(1) {
                out.extend(
                    numbers_in_span(span.as_str())
                        .filter(|n| EXTRACTABLE.contains(n))
                        .map(ArticleId),
                );
            }
        }
    }
    out
}

/// One raw judgment as read from `<raw>/<split>.jsonl`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawDocument {
    pub case_id: String,
    #[serde(default)]
    pub facts: Option<String>,
    pub text: String,
    #[serde(default)]
    pub violated: Vec<u32>,
}

impl RawDocument {
    /// The facts section: the explicit field when present, otherwise the text
    /// between a "THE FACTS" heading and the following "THE LAW" heading.
    pub fn facts_section(&self) -> Option<String> {
        if let Some(f) = self.facts.as_deref().map(str::trim).filter(|f| !f.is_empty()) {
            return Some(f.to_string());
        }
        static RE: OnceLock<Regex> = OnceLock::new();
        let re = RE.get_or_init(|| Regex::new(r"(?s)(?:^|\n)\s*THE FACTS\s*\n(.*?)(?:\n\s*THE LAW\s*(?:\n|$)|$)").unwrap());
        re.captures(&self.text)
            .and_then(|c| c.get(1))
            .map(|m| m.as_str().trim().to_string())
            .filter(|s| !s.is_empty())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ExtractionReport {
    pub pattern_set: String,
    pub documents: usize,
    pub emitted: usize,
    pub skipped: Vec<String>,
    /// Violated articles that the patterns did not find and that were added to the claims.
    pub augmented_articles: usize,
    /// Violated articles that the patterns did find.
    pub recovered_articles: usize,
}

impl ExtractionReport {
    /// Share of recorded violations the patterns found on their own.
    pub fn violation_coverage(&self) -> f64 {
        let total = self.augmented_articles + self.recovered_articles;
        if total == 0 {
            1.0
        } else {
            self.recovered_articles as f64 / total as f64
        }
    }
}

/// Violations per case id, read from a JSONL file of `{"case_id", "violated"}`
/// records. Entries here override the `violated` field of raw documents.
pub fn read_violations(path: &Path) -> Result<BTreeMap<String, ArticleSet>> {
    #[derive(Deserialize)]
    struct Rec {
        case_id: String,
        violated: Vec<u32>,
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Rec = serde_json::from_str(&line).map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        out.insert(rec.case_id, rec.violated.into_iter().map(ArticleId).collect());
    }
    Ok(out)
}

fn read_raw_split(path: &Path) -> Result<Vec<RawDocument>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        docs.push(serde_json::from_str(&line).map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?);
    }
    Ok(docs)
}

enum Built {
    Case(Case, usize, usize),
    Skipped(String),
}

fn build_case(doc: &RawDocument, patterns: &PatternSet, overrides: Option<&BTreeMap<String, ArticleSet>>) -> Built {
    let Some(facts) = doc.facts_section() else {
        return Built::Skipped(doc.case_id.clone());
    };
    let violated: ArticleSet = match overrides.and_then(|m| m.get(&doc.case_id)) {
        Some(v) => v.clone(),
        None => doc.violated.iter().copied().map(ArticleId).collect(),
    };
    let extracted = extract_claims(&doc.text, patterns);
    let recovered = violated.intersection(&extracted).count();
    let augmented = violated.len() - recovered;
    let claims: ArticleSet = extracted.union(&violated).copied().collect();
    let case = Case::new(doc.case_id.clone(), facts, claims, violated).expect("claims include violations");
    Built::Case(case, recovered, augmented)
}

/// Builds a labelled corpus from `<raw_dir>/{train,validation,test}.jsonl`.
///
/// Claims are the extracted articles plus every recorded violation; facts
/// come only from the facts section. Documents without facts are skipped.
/// Output cases are sorted by case id within each split.
pub fn build_outcome_corpus(
    raw_dir: &Path,
    patterns: &PatternSet,
    violations: Option<&BTreeMap<String, ArticleSet>>,
) -> Result<(SplitSet, ExtractionReport)> {
    let mut splits = SplitSet::default();
    let mut report = ExtractionReport {
        pattern_set: patterns.name().to_string(),
        ..Default::default()
    };
    for split in Split::ALL {
        let path = raw_dir.join(split.file_name());
        if !path.exists() {
            continue;
        }
        let docs = read_raw_split(&path)?;
        report.documents += docs.len();
        let built = par::map(&docs, |d| build_case(d, patterns, violations));
        let mut cases = Vec::new();
        for b in built {
            match b {
                Built::Case(c, rec, aug) => {
                    report.recovered_articles += rec;
                    report.augmented_articles += aug;
                    cases.push(c);
                }
                Built::Skipped(id) => {
                    log::warn!("{id}: no facts section, skipped");
                    report.skipped.push(id);
                }
            }
        }
        cases.sort_by(|a, b| a.case_id.cmp(&b.case_id));
        report.emitted += cases.len();
        *splits.get_mut(split) = cases;
    }
    splits.validate()?;
    Ok((splits, report))
}

/// Builds and writes the corpus; splits with no raw file are written empty.
pub fn write_outcome_corpus(
    raw_dir: &Path,
    patterns: &PatternSet,
    violations: Option<&BTreeMap<String, ArticleSet>>,
    out_dir: &Path,
) -> Result<ExtractionReport> {
    let (splits, report) = build_outcome_corpus(raw_dir, patterns, violations)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for split in Split::ALL {
        write_split(&out_dir.join(split.file_name()), splits.get(split))?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::article_set;

    fn claims(text: &str) -> Vec<u32> {
        extract_claims(text, &PatternSet::default_v1()).iter().map(|a| a.0).collect()
    }

    #[test]
    fn single_article_with_paragraph() {
        assert_eq!(claims("alleged a violation of Article 6 § 1 of the Convention"), vec![6]);
    }

    #[test]
    fn lists_and_phrasings() {
        assert_eq!(claims("The applicants complained under Articles 2, 6, 8 and 14."), vec![2, 6, 8, 14]);
        assert_eq!(claims("Relying on Article 5 §§ 1 and 4, he argued"), vec![5]);
        assert_eq!(claims("she INVOKED Article 13 and Article 3"), vec![3, 13]);
        assert_eq!(claims("a breach of Article 10 § 2 or 11"), vec![10, 11]);
        assert_eq!(claims("violation of Article 5 § 3 (c) and 6"), vec![5, 6]);
    }

    #[test]
    fn no_match_is_empty() {
        assert!(claims("The court sat in Strasbourg in 2004.").is_empty());
        assert!(claims("").is_empty());
    }

    #[test]
    fn out_of_range_numbers_dropped() {
        assert_eq!(claims("violation of Article 61 and 3"), vec![3]);
    }

    #[test]
    fn pattern_file_parsing() {
        let p = PatternSet::parse("# name: custom-2\n\n# comment\n(?i)art\\.\\s*(\\d+)\n", "fallback").unwrap();
        assert_eq!(p.name(), "custom-2");
        assert_eq!(p.len(), 1);
        assert_eq!(extract_claims("see Art. 9", &p), article_set([9]));
    }

    #[test]
    fn bad_patterns_rejected() {
        assert!(PatternSet::new("x", &["(unclosed"]).is_err());
        assert!(PatternSet::new("x", &[r"Article \d+"]).is_err());
        assert!(PatternSet::new("x", &[r"(a)(b)"]).is_err());
    }

    #[test]
    fn facts_section_from_headings() {
        let doc = RawDocument {
            case_id: "x".into(),
            facts: None,
            text: "PROCEDURE\nstuff\nTHE FACTS\nThe applicant was born.\nTHE LAW\nviolation of Article 3".into(),
            violated: vec![],
        };
        assert_eq!(doc.facts_section().as_deref(), Some("The applicant was born."));
        let none = RawDocument { text: "no headings".into(), ..doc };
        assert!(none.facts_section().is_none());
    }

    #[test]
    fn missed_violation_is_added_to_claims() {
        let doc = RawDocument {
            case_id: "x".into(),
            facts: Some("facts".into()),
            text: "complained under Article 6".into(),
            violated: vec![3],
        };
        match build_case(&doc, &PatternSet::default_v1(), None) {
            Built::Case(c, rec, aug) => {
                assert_eq!(c.claims, article_set([3, 6]));
                assert_eq!(c.negatives(), article_set([6]));
                assert_eq!((rec, aug), (0, 1));
            }
            Built::Skipped(_) => panic!("skipped"),
        }
    }
}
