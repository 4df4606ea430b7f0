//! Fact encoders: a trainable hashed bag-of-words with mean pooling, and a
//! frozen table of vectors computed elsewhere (e.g. by a language model).

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_VOCAB_BUCKETS: usize = 1 << 15;
pub const DEFAULT_WIDTH: usize = 64;
pub const DEFAULT_MAX_TOKENS: usize = 512;
pub const LONG_MAX_TOKENS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    HashedBow,
    Precomputed,
}

impl EncoderKind {
    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::HashedBow => "hashed-bow",
            EncoderKind::Precomputed => "precomputed",
        }
    }
}

impl std::str::FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hashed_bow" | "hashed-bow" | "bow" => Ok(EncoderKind::HashedBow),
            "precomputed" => Ok(EncoderKind::Precomputed),
            _ => Err(Error::Config(format!("unknown encoder kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub vocab_buckets: usize,
    pub width: usize,
    pub max_tokens: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            kind: EncoderKind::HashedBow,
            vocab_buckets: DEFAULT_VOCAB_BUCKETS,
            width: DEFAULT_WIDTH,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.max_tokens == 0 {
            return Err(Error::Config("encoder width and max_tokens must be at least 1".into()));
        }
        if self.kind == EncoderKind::HashedBow && self.vocab_buckets == 0 {
            return Err(Error::Config("vocab_buckets must be at least 1".into()));
        }
        Ok(())
    }

    /// Trainable parameters held by one encoder of this configuration.
    pub fn n_params(&self) -> usize {
        match self.kind {
            EncoderKind::HashedBow => self.vocab_buckets * self.width,
            EncoderKind::Precomputed => 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Lowercases, splits on non-alphanumerics, hashes every token into
/// `[0, vocab_buckets)` and keeps the first `max_tokens`.
pub fn tokenize(text: &str, max_tokens: usize, vocab_buckets: usize) -> TokenSequence {
    let ids = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .take(max_tokens)
        .map(|t| (fnv1a(t.to_lowercase().as_bytes()) % vocab_buckets as u64) as u32)
        .collect();
    TokenSequence { ids }
}

/// Model input for one case: the hashed tokens and the id used for vector lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactInput {
    pub case_id: String,
    pub tokens: TokenSequence,
}

impl FactInput {
    pub fn new(case_id: impl Into<String>, facts: &str, config: &EncoderConfig) -> Self {
        Self {
            case_id: case_id.into(),
            tokens: tokenize(facts, config.max_tokens, config.vocab_buckets.max(1)),
        }
    }
}

/// Case id to fact vector, all of one width.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VectorTable {
    width: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl VectorTable {
    pub fn new(width: usize) -> Self {
        Self {
            width,
            vectors: HashMap::new(),
        }
    }

    pub fn insert(&mut self, case_id: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.width {
            return Err(Error::Shape(format!("vector of width {} in a table of width {}", vector.len(), self.width)));
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::Shape("non-finite entry in fact vector".into()));
        }
        self.vectors.insert(case_id.into(), vector);
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, case_id: &str) -> Option<&[f64]> {
        self.vectors.get(case_id).map(Vec::as_slice)
    }

    /// Reads `{"case_id": str, "vector": [f64]}` lines; the first line fixes the width.
    pub fn read_jsonl(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Rec {
            case_id: String,
            vector: Vec<f64>,
        }
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut table: Option<VectorTable> = None;
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
            let rec: Rec = serde_json::from_str(&line).map_err(|e| schema(e.to_string()))?;
            let t = table.get_or_insert_with(|| VectorTable::new(rec.vector.len()));
            t.insert(rec.case_id, rec.vector).map_err(|e| schema(e.to_string()))?;
        }
        table.ok_or_else(|| Error::EmptyCorpus(path.to_path_buf()))
    }
}

/// Borrowed view of one encoder's parameters.
#[derive(Debug, Clone, Copy)]
pub enum EncoderParams<'a> {
    HashedBow { embedding: &'a [f64], width: usize },
    Precomputed { table: &'a VectorTable },
}

impl EncoderParams<'_> {
    pub fn width(&self) -> usize {
        match self {
            EncoderParams::HashedBow { width, .. } => *width,
            EncoderParams::Precomputed { table } => table.width(),
        }
    }
}

/// Mean of the embedding rows of the tokens (zero for no tokens), or the
/// table vector of the case.
pub fn encode(input: &FactInput, params: &EncoderParams<'_>) -> Result<Vec<f64>> {
    match params {
        EncoderParams::HashedBow { embedding, width } => Ok(mean_pool(&input.tokens, embedding, *width)),
        EncoderParams::Precomputed { table } => table
            .get(&input.case_id)
            .map(<[f64]>::to_vec)
            .ok_or_else(|| Error::MissingEmbedding(input.case_id.clone())),
    }
}

pub fn mean_pool(tokens: &TokenSequence, embedding: &[f64], width: usize) -> Vec<f64> {
    let mut out = vec![0.0; width];
    if tokens.is_empty() {
        return out;
    }
    for &t in &tokens.ids {
        let row = &embedding[t as usize * width..(t as usize + 1) * width];
        for (o, r) in out.iter_mut().zip(row) {
            *o += r;
        }
    }
    let scale = 1.0 / tokens.len() as f64;
    out.iter_mut().for_each(|o| *o *= scale);
    out
}

/// Adds the gradient of `mean_pool` into the embedding gradient, given the
/// gradient `d_out` with respect to the pooled vector.
pub fn mean_pool_backward(tokens: &TokenSequence, d_out: &[f64], grad_embedding: &mut [f64]) {
    if tokens.is_empty() {
        return;
    }
    let width = d_out.len();
    let scale = 1.0 / tokens.len() as f64;
    for &t in &tokens.ids {
        let row = &mut grad_embedding[t as usize * width..(t as usize + 1) * width];
        for (g, d) in row.iter_mut().zip(d_out) {
            *g += d * scale;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncates_to_budget() {
        let text = (0..600).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        assert_eq!(tokenize(&text, 512, 1 << 15).len(), 512);
        assert_eq!(tokenize(&text, 4096, 1 << 15).len(), 600);
    }

    #[test]
    fn empty_text_has_no_tokens() {
        assert!(tokenize("", 512, 100).is_empty());
        assert!(tokenize(" ,.;", 512, 100).is_empty());
    }

    #[test]
    fn hashing_is_deterministic_and_case_folded() {
        let a = tokenize("The Court, unanimously", 10, 97);
        assert_eq!(a, tokenize("The Court, unanimously", 10, 97));
        assert_eq!(a, tokenize("the COURT unanimously", 10, 97));
        assert!(a.ids.iter().all(|&i| i < 97));
    }

    #[test]
    fn zero_embedding_gives_zero_vector() {
        let tokens = TokenSequence { ids: vec![0, 1, 1] };
        assert_eq!(mean_pool(&tokens, &[0.0; 6], 3), vec![0.0; 3]);
        assert_eq!(mean_pool(&TokenSequence::default(), &[1.0; 6], 3), vec![0.0; 3]);
    }

    #[test]
    fn single_token_is_its_row() {
        let emb = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(mean_pool(&TokenSequence { ids: vec![1] }, &emb, 3), vec![4.0, 5.0, 6.0]);
    }

    #[test]
    fn three_tokens_hand_mean() {
        // rows: r0 = (0.5, -1), r1 = (2, 0.25), r2 = (-3, 4)
        let emb = [0.5, -1.0, 2.0, 0.25, -3.0, 4.0];
        let out = mean_pool(&TokenSequence { ids: vec![0, 2, 2] }, &emb, 2);
        // ((0.5 - 3 - 3) / 3, (-1 + 4 + 4) / 3)
        assert!((out[0] - (-5.5 / 3.0)).abs() < 1e-15);
        assert!((out[1] - (7.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn precomputed_lookup_and_miss() {
        let mut table = VectorTable::new(2);
        table.insert("a", vec![1.0, 2.0]).unwrap();
        assert!(table.insert("b", vec![1.0]).is_err());
        let p = EncoderParams::Precomputed { table: &table };
        let hit = FactInput { case_id: "a".into(), tokens: TokenSequence::default() };
        assert_eq!(encode(&hit, &p).unwrap(), vec![1.0, 2.0]);
        let miss = FactInput { case_id: "z".into(), tokens: TokenSequence::default() };
        assert!(matches!(encode(&miss, &p), Err(Error::MissingEmbedding(_))));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let tokens = TokenSequence { ids: vec![0, 2, 2, 1] };
        let mut emb: Vec<f64> = (0..9).map(|i| (i as f64 * 0.37).sin()).collect();
        let weights = [0.3, -1.1, 0.7];
        let loss = |e: &[f64]| -> f64 {
            mean_pool(&tokens, e, 3).iter().zip(&weights).map(|(x, w)| (x * w).tanh()).sum()
        };
        let x = mean_pool(&tokens, &emb, 3);
        let d_out: Vec<f64> = x.iter().zip(&weights).map(|(x, w)| w * (1.0 - (x * w).tanh().powi(2))).collect();
        let mut grad = vec![0.0; 9];
        mean_pool_backward(&tokens, &d_out, &mut grad);
        let h = 1e-6;
        for i in 0..9 {
            let orig = emb[i];
            emb[i] = orig + h;
            let up = loss(&emb);
            emb[i] = orig - h;
            let down = loss(&emb);
            emb[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let denom = fd.abs().max(grad[i].abs()).max(1e-8);
            assert!((fd - grad[i]).abs() / denom < 1e-4, "coord {i}: {fd} vs {}", grad[i]);
        }
    }
}
