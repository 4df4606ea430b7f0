//! Small builders shared by the integration test targets.
#![allow(dead_code)]

use std::path::PathBuf;

use precedent_core::corpus::filter_articles;
use precedent_core::encoder::{EncoderConfig, EncoderKind};
use precedent_core::synth::{generate_corpus, GenConfig};
use precedent_core::train::Dataset;
use precedent_core::{ArticleIndex, ArticleId, SplitSet};

pub fn fixture(path: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(path)
}

pub fn index(k: usize) -> ArticleIndex {
    ArticleIndex::new((0..k as u32).map(|i| ArticleId(i + 2)))
}

pub fn bow(vocab_buckets: usize, width: usize) -> EncoderConfig {
    EncoderConfig {
        kind: EncoderKind::HashedBow,
        vocab_buckets,
        width,
        max_tokens: 64,
    }
}

/// A few dozen synthetic cases with `k` articles.
pub fn tiny_corpus(k: usize, train: usize, seed: u64) -> SplitSet {
    generate_corpus(&GenConfig {
        k,
        vocab: 200,
        claim_rate: 0.5,
        train,
        validation: train / 2,
        test: train / 2,
        seed,
        ..GenConfig::default()
    })
    .unwrap()
}

pub struct Tiny {
    pub splits: SplitSet,
    pub index: ArticleIndex,
    pub encoder: EncoderConfig,
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

pub fn tiny(k: usize, train: usize, seed: u64) -> Tiny {
    let splits = tiny_corpus(k, train, seed);
    let index = filter_articles(&splits).unwrap();
    let encoder = bow(64, 6);
    Tiny {
        train: Dataset::new(&splits.train, &index, &encoder).unwrap(),
        validation: Dataset::new(&splits.validation, &index, &encoder).unwrap(),
        test: Dataset::new(&splits.test, &index, &encoder).unwrap(),
        splits,
        index,
        encoder,
    }
}
