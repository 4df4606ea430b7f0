//! Synthetic corpora with a facts → claims → outcomes structure.
//!
//! Tokens are `w0 … w{vocab-1}`. Each article owns a pool of frequent claim
//! tokens, a pool of frequent violation tokens and a pool of rare
//! distinguishing tokens; the remaining tokens are filler.
//!
//! For every case and article independently:
//! 1. the article is claimed with probability `claim_rate`;
//! 2. a claimed article emits about `claim_strength` claim tokens;
//! 3. its outcome is POS with probability `violation_rate`, emitting about
//!    `outcome_strength` violation tokens, and NEG otherwise;
//! 4. a NEG outcome is a distinguished one with probability
//!    `distinguish_rate`: it emits the same violation tokens as a POS
//!    outcome plus a single rare token. Other NEG outcomes emit no
//!    violation tokens.
//!
//! A distinguished NEG therefore differs from POS by one low-frequency
//! token, while claims and violations are carried by frequent ones.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{article_set, ArticleId, ArticleSet, Case, Split, SplitSet, CORE_ARTICLES};
use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    /// Number of articles; they are numbered from 2 upwards.
    pub k: usize,
    pub vocab: usize,
    pub claim_rate: f64,
    pub claim_strength: f64,
    pub violation_rate: f64,
    pub outcome_strength: f64,
    pub distinguish_rate: f64,
    pub claim_pool: usize,
    pub violation_pool: usize,
    pub rare_pool: usize,
    pub filler_tokens: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            k: 8,
            vocab: 1000,
            claim_rate: 0.3,
            claim_strength: 3.0,
            violation_rate: 0.65,
            outcome_strength: 3.0,
            distinguish_rate: 0.5,
            claim_pool: 5,
            violation_pool: 5,
            rare_pool: 15,
            filler_tokens: 10,
            train: 2000,
            validation: 250,
            test: 250,
            seed: 0,
        }
    }
}

pub const GEN_KEYS: &[&str] = &[
    "k",
    "vocab",
    "claim_rate",
    "claim_strength",
    "violation_rate",
    "outcome_strength",
    "distinguish_rate",
    "claim_pool",
    "violation_pool",
    "rare_pool",
    "filler_tokens",
    "train",
    "validation",
    "test",
    "seed",
];

impl GenConfig {
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let mut c = GenConfig::default();
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = kv.parsed(stringify!($f))? {
                    c.$f = v;
                }
            )*};
        }
        set!(
            k,
            vocab,
            claim_rate,
            claim_strength,
            violation_rate,
            outcome_strength,
            distinguish_rate,
            claim_pool,
            violation_pool,
            rare_pool,
            filler_tokens,
            train,
            validation,
            test,
            seed
        );
        c.validate()?;
        Ok(c)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        kv.reject_unknown(GEN_KEYS)?;
        Self::from_kv(&kv)
    }

    fn reserved(&self) -> usize {
        self.k * (self.claim_pool + self.violation_pool + self.rare_pool)
    }

    pub fn validate(&self) -> Result<()> {
        let max_k = CORE_ARTICLES.count();
        if self.k == 0 || self.k > max_k {
            return Err(Error::Config(format!("k must lie in 1..={max_k}")));
        }
        for (name, r) in [
            ("claim_rate", self.claim_rate),
            ("violation_rate", self.violation_rate),
            ("distinguish_rate", self.distinguish_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        for (name, s) in [("claim_strength", self.claim_strength), ("outcome_strength", self.outcome_strength)] {
            if !s.is_finite() || s < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and non-negative")));
            }
        }
        if self.train == 0 || self.validation == 0 || self.test == 0 {
            return Err(Error::Config("split sizes must be at least 1".into()));
        }
        if self.claim_pool == 0 || self.violation_pool == 0 || self.rare_pool == 0 {
            return Err(Error::Config("token pools must be non-empty".into()));
        }
        if self.vocab <= self.reserved() {
            return Err(Error::Config(format!(
                "vocab {} leaves no filler after {} signal tokens",
                self.vocab,
                self.reserved()
            )));
        }
        Ok(())
    }

    pub fn articles(&self) -> Vec<ArticleId> {
        (0..self.k as u32).map(|i| ArticleId(CORE_ARTICLES.start() + i)).collect()
    }

    /// Token ids owned by article `a` (0-based): claim, violation, rare.
    pub fn pools(&self, a: usize) -> [std::ops::Range<usize>; 3] {
        let per = self.claim_pool + self.violation_pool + self.rare_pool;
        let base = a * per;
        let v = base + self.claim_pool;
        let r = v + self.violation_pool;
        [base..v, v..r, r..r + self.rare_pool]
    }

    pub fn filler(&self) -> std::ops::Range<usize> {
        self.reserved()..self.vocab
    }
}

/// Rounds `strength` stochastically: `⌊s⌋` plus one with probability `s − ⌊s⌋`.
fn token_count(strength: f64, rng: &mut impl Rng) -> usize {
    let base = strength.floor();
    base as usize + usize::from(rng.gen::<f64>() < strength - base)
}

fn pick(pool: &std::ops::Range<usize>, n: usize, rng: &mut impl Rng, out: &mut Vec<usize>) {
    out.extend((0..n).map(|_| rng.gen_range(pool.clone())));
}

/// Generative record of one case, kept for oracle checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthCase {
    pub case: Case,
    /// NEG articles that carry violation tokens and a rare token.
    pub distinguished: ArticleSet,
}

fn generate_case(cfg: &GenConfig, case_id: String, seed: u64) -> SynthCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let articles = cfg.articles();
    let mut tokens = Vec::new();
    let mut claims = Vec::new();
    let mut violated = Vec::new();
    let mut distinguished = Vec::new();
    for (a, article) in articles.iter().enumerate() {
        if rng.gen::<f64>() >= cfg.claim_rate {
            continue;
        }
        let [claim, violation, rare] = cfg.pools(a);
        claims.push(article.0);
        let n = token_count(cfg.claim_strength, &mut rng);
        pick(&claim, n, &mut rng, &mut tokens);
        if rng.gen::<f64>() < cfg.violation_rate {
            let n = token_count(cfg.outcome_strength, &mut rng);
            pick(&violation, n, &mut rng, &mut tokens);
            violated.push(article.0);
        } else if rng.gen::<f64>() < cfg.distinguish_rate {
            let n = token_count(cfg.outcome_strength, &mut rng);
            pick(&violation, n, &mut rng, &mut tokens);
            pick(&rare, 1, &mut rng, &mut tokens);
            distinguished.push(article.0);
        }
    }
    pick(&cfg.filler(), cfg.filler_tokens, &mut rng, &mut tokens);
    tokens.shuffle(&mut rng);
    let facts = tokens.iter().map(|t| format!("w{t}")).collect::<Vec<_>>().join(" ");
    let case = Case::new(case_id, facts, article_set(claims), article_set(violated))
        .expect("violations are drawn from claims");
    SynthCase {
        case,
        distinguished: article_set(distinguished),
    }
}

/// Cases of one split together with their generative records.
pub fn generate_split(cfg: &GenConfig, split: Split) -> Vec<SynthCase> {
    let (n, stream) = match split {
        Split::Train => (cfg.train, 1u64),
        Split::Validation => (cfg.validation, 2),
        Split::Test => (cfg.test, 3),
    };
    let split_seed = par::mix_seed(cfg.seed, stream);
    par::map_range(n, |i| {
        generate_case(cfg, format!("synth-{}-{:05}", split.name(), i + 1), par::mix_seed(split_seed, i as u64))
    })
}

pub fn generate_corpus(cfg: &GenConfig) -> Result<SplitSet> {
    cfg.validate()?;
    let take = |s| generate_split(cfg, s).into_iter().map(|c| c.case).collect();
    Ok(SplitSet {
        train: take(Split::Train),
        validation: take(Split::Validation),
        test: take(Split::Test),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GenConfig {
        GenConfig {
            train: 50,
            validation: 10,
            test: 10,
            ..GenConfig::default()
        }
    }

    #[test]
    fn reproducible_from_seed() {
        let a = generate_corpus(&small()).unwrap();
        let b = par::sequential(|| generate_corpus(&small()).unwrap());
        assert_eq!(a.train, b.train);
        let c = generate_corpus(&GenConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn zero_claim_rate_is_all_null() {
        let s = generate_corpus(&GenConfig { claim_rate: 0.0, ..small() }).unwrap();
        assert!(s.train.iter().all(|c| c.claims.is_empty() && c.violated.is_empty()));
    }

    #[test]
    fn pools_are_disjoint_from_filler() {
        let c = GenConfig::default();
        let last = c.pools(c.k - 1);
        assert_eq!(last[2].end, c.filler().start);
        assert_eq!(c.articles().first(), Some(&ArticleId(2)));
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(GenConfig { vocab: 100, ..small() }.validate().is_err());
        assert!(GenConfig { k: 18, ..small() }.validate().is_err());
        assert!(GenConfig { distinguish_rate: 1.5, ..small() }.validate().is_err());
        assert!(GenConfig::parse("k = 3\nvocab = 500\ntrain = 4").is_ok());
        assert!(GenConfig::parse("kk = 3").is_err());
    }
}
