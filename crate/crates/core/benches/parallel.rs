//! Parallel versus sequential execution of the data-parallel hot paths.
//! The sequential arm runs the same code inside `par::sequential`.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use precedent_core::corpus::filter_articles;
use precedent_core::encoder::{EncoderConfig, EncoderKind};
use precedent_core::eval::{permutation_test, predict, random_baseline, Resampling};
use precedent_core::synth::{generate_corpus, GenConfig};
use precedent_core::train::{grid_search, Dataset, GridSpec, TrainConfig, TrainData};
use precedent_core::{par, Architecture, ArticleIndex, Model};

struct Setup {
    index: ArticleIndex,
    encoder: EncoderConfig,
    train: Dataset,
    validation: Dataset,
    test: Dataset,
}

fn setup() -> Setup {
    let splits = generate_corpus(&GenConfig {
        train: 400,
        validation: 100,
        test: 400,
        seed: 7,
        ..GenConfig::default()
    })
    .expect("synthetic corpus");
    let index = filter_articles(&splits).expect("shared articles");
    let encoder = EncoderConfig {
        kind: EncoderKind::HashedBow,
        vocab_buckets: 2048,
        width: 32,
        max_tokens: 256,
    };
    let ds = |cases| Dataset::new(cases, &index, &encoder).expect("dataset");
    Setup {
        train: ds(&splits.train),
        validation: ds(&splits.validation),
        test: ds(&splits.test),
        index,
        encoder,
    }
}

fn both(c: &mut Criterion, name: &str, mut f: impl FnMut()) {
    let mut group = c.benchmark_group(name);
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("mode", "parallel"), |b| b.iter(&mut f));
    group.bench_function(BenchmarkId::new("mode", "sequential"), |b| b.iter(|| par::sequential(&mut f)));
    group.finish();
}

fn benches(c: &mut Criterion) {
    let s = setup();
    let model = Model::new(Architecture::ClaimOutcome, s.index.clone(), s.encoder, 32, 0).expect("model");

    both(c, "predict", || {
        predict(&model, &s.test).expect("predict");
    });
    both(c, "random_baseline", || {
        random_baseline(&s.test.labels, 200, 0).expect("baseline");
    });

    let a: Vec<f64> = (0..400).map(|i| (i % 3) as f64).collect();
    let b: Vec<f64> = (0..400).map(|i| (i % 5 == 0) as u8 as f64).collect();
    both(c, "permutation_test", || {
        permutation_test(&a, &b, Resampling::Sampled { resamples: 10_000, seed: 0 }).expect("test");
    });

    let cfg = TrainConfig {
        grid: GridSpec {
            learning_rates: vec![0.001, 0.01],
            dropouts: vec![0.0, 0.2],
            hidden: vec![16],
        },
        max_epochs: 2,
        batch_size: 32,
        seed: 0,
        encoder: s.encoder,
    };
    let data = TrainData {
        articles: &s.index,
        train: &s.train,
        validation: &s.validation,
        vectors: None,
    };
    both(c, "grid_search", || {
        grid_search(Architecture::Joint, &cfg, data).expect("grid");
    });
}

criterion_group!(parallel, benches);
criterion_main!(parallel);
