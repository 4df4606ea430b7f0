//! Score tables in the Pos / Neg / Null / All layout.
//!
//! CSV cells hold full-precision numbers so that a table parses back to the
//! exact values; the text rendering rounds to two decimals. Missing cells
//! are written as `—`.

use serde::{Deserialize, Deserializer, Serialize};

use super::all_score;
use crate::error::{Error, Result};

/// Published All cells are checked against their recomputation to this.
pub const ALL_TOLERANCE: f64 = 0.005;

pub const PUBLISHED_SCORES_CSV: &str = include_str!("../../fixtures/published_scores.csv");

const MISSING: &str = "—";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub encoder: String,
    pub corpus: String,
    #[serde(default, deserialize_with = "cell")]
    pub seed: Option<u64>,
    #[serde(deserialize_with = "cell")]
    pub pos: Option<f64>,
    #[serde(deserialize_with = "cell")]
    pub neg: Option<f64>,
    #[serde(deserialize_with = "cell")]
    pub null: Option<f64>,
    #[serde(deserialize_with = "cell")]
    pub all: Option<f64>,
}

fn cell<'de, D, T>(d: D) -> std::result::Result<Option<T>, D::Error>
where
    D: Deserializer<'de>,
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    let s = String::deserialize(d)?;
    let s = s.trim();
    if s.is_empty() || s == MISSING || s == "-" {
        Ok(None)
    } else {
        s.parse().map(Some).map_err(serde::de::Error::custom)
    }
}

impl ReportRow {
    pub fn recomputed_all(&self) -> Option<f64> {
        all_score(self.pos, self.neg, self.null)
    }
}

fn full(v: Option<f64>) -> String {
    v.map_or_else(|| MISSING.to_string(), |x| x.to_string())
}

fn short(v: Option<f64>) -> String {
    v.map_or_else(|| MISSING.to_string(), |x| format!("{x:.2}"))
}

/// All cell check of one fixture row.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureCheck {
    pub row: ReportRow,
    pub recomputed: f64,
    pub published: f64,
    pub ok: bool,
}

/// Recomputes every published All cell that has all three class cells.
pub fn verify_fixture(rows: &[ReportRow]) -> Vec<FixtureCheck> {
    rows.iter()
        .filter_map(|r| {
            let recomputed = r.recomputed_all()?;
            let published = r.all?;
            Some(FixtureCheck {
                row: r.clone(),
                recomputed,
                published,
                ok: (recomputed - published).abs() <= ALL_TOLERANCE,
            })
        })
        .collect()
}

pub fn read_report_csv(text: &str) -> Result<Vec<ReportRow>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::Schema {
                path: "<report>".into(),
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}

/// The bundled table of published scores.
pub fn published_scores() -> Vec<ReportRow> {
    read_report_csv(PUBLISHED_SCORES_CSV).expect("bundled fixture parses")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub csv: String,
    pub text: String,
    pub checks: Vec<FixtureCheck>,
}

/// Renders `rows` and, when given, verifies the fixture's All column.
pub fn render_report(rows: &[ReportRow], fixture: Option<&[ReportRow]>) -> Rendered {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "encoder", "corpus", "seed", "pos", "neg", "null", "all"])
        .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.encoder.clone(),
            r.corpus.clone(),
            r.seed.map_or_else(String::new, |s| s.to_string()),
            full(r.pos),
            full(r.neg),
            full(r.null),
            full(r.all),
        ])
        .expect("in-memory write");
    }
    let csv = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8");

    let mut text = String::new();
    if !rows.is_empty() {
        text.push_str(&format!(
            "{:<16} {:<12} {:<12} {:>6} {:>7} {:>7} {:>7} {:>7}\n",
            "model", "encoder", "corpus", "seed", "Pos", "Neg", "Null", "All"
        ));
        for r in rows {
            text.push_str(&format!(
                "{:<16} {:<12} {:<12} {:>6} {:>7} {:>7} {:>7} {:>7}\n",
                r.model,
                r.encoder,
                r.corpus,
                r.seed.map_or_else(String::new, |s| s.to_string()),
                short(r.pos),
                short(r.neg),
                short(r.null),
                short(r.all)
            ));
        }
    }
    let checks = fixture.map(verify_fixture).unwrap_or_default();
    for c in &checks {
        text.push_str(&format!(
            "{} {} {} {}: All {:.2} recomputed {:.4}{}\n",
            if c.ok { "ok  " } else { "FAIL" },
            c.row.model,
            c.row.encoder,
            c.row.corpus,
            c.published,
            c.recomputed,
            if c.ok { "" } else { " (discrepancy above 0.005)" }
        ));
    }
    Rendered { csv, text, checks }
}

/// One cell of the significance matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceRow {
    pub a: String,
    pub b: String,
    pub class: String,
    pub pairs: usize,
    pub p_value: f64,
}

pub fn render_significance_csv(rows: &[SignificanceRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["a", "b", "class", "pairs", "p_value"]).expect("in-memory write");
    for r in rows {
        w.write_record([r.a.clone(), r.b.clone(), r.class.clone(), r.pairs.to_string(), r.p_value.to_string()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_all_cells_reproduce() {
        let rows = published_scores();
        assert_eq!(rows.len(), 24);
        let checks = verify_fixture(&rows);
        assert_eq!(checks.len(), 12);
        assert!(checks.iter().all(|c| c.ok), "{checks:#?}");
    }

    #[test]
    fn empty_report_is_empty_table() {
        let r = render_report(&[], None);
        assert_eq!(r.text, "");
        assert_eq!(read_report_csv(&r.csv).unwrap(), vec![]);
    }

    #[test]
    fn csv_round_trips_exact_values() {
        let rows = vec![
            ReportRow {
                model: "joint".into(),
                encoder: "hashed-bow".into(),
                corpus: "synth".into(),
                seed: Some(3),
                pos: Some(1.0 / 3.0),
                neg: Some(0.1 + 0.2),
                null: Some(99.999999999),
                all: all_score(Some(1.0 / 3.0), Some(0.1 + 0.2), Some(99.999999999)),
            },
            ReportRow {
                model: "simple".into(),
                encoder: "hashed-bow".into(),
                corpus: "synth".into(),
                seed: None,
                pos: Some(50.0),
                neg: Some(0.0),
                null: None,
                all: None,
            },
        ];
        let r = render_report(&rows, None);
        assert_eq!(read_report_csv(&r.csv).unwrap(), rows);
        assert!(r.text.contains("—"));
    }

    #[test]
    fn discrepancy_is_flagged() {
        let mut rows = published_scores();
        rows[0].all = Some(65.0);
        let r = render_report(&[], Some(&rows));
        assert_eq!(r.checks.iter().filter(|c| !c.ok).count(), 1);
        assert!(r.text.contains("FAIL"));
    }
}
