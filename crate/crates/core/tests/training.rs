//! Training loop, model selection and gradient checks on tiny corpora.

mod common;

use precedent_core::corpus::filter_articles;
use precedent_core::encoder::FactInput;
use precedent_core::synth::{generate_corpus, GenConfig};
use precedent_core::train::{
    batch_gradient, full_loss, gradient_check, grid_search, numeric_gradient, train, Dataset, GridSpec, HyperParams,
    TrainConfig, TrainData,
};
use precedent_core::{par, Architecture, Error, Model};

fn hyper(learning_rate: f64, hidden: usize) -> HyperParams {
    HyperParams {
        learning_rate,
        dropout: 0.0,
        hidden,
    }
}

fn config(t: &common::Tiny, grid: GridSpec, max_epochs: usize) -> TrainConfig {
    TrainConfig {
        grid,
        max_epochs,
        batch_size: 8,
        seed: 11,
        encoder: t.encoder,
    }
}

fn data(t: &common::Tiny) -> TrainData<'_> {
    TrainData {
        articles: &t.index,
        train: &t.train,
        validation: &t.validation,
        vectors: None,
    }
}

#[test]
fn zero_learning_rate_keeps_initialisation() {
    let t = common::tiny(3, 40, 1);
    for arch in Architecture::ALL {
        let h = hyper(0.0, 6);
        let cfg = config(&t, GridSpec::single(h), 3);
        let out = train(arch, h, &cfg, data(&t)).unwrap();
        let init = Model::new(arch, t.index.clone(), t.encoder, 6, cfg.seed).unwrap();
        assert_eq!(out.model.params(), init.params());
        assert_eq!(out.best_epoch, 0);
        let initial = full_loss(&init, &t.validation).unwrap();
        assert!(out.epochs.iter().all(|e| e.validation_loss == initial));
    }
}

#[test]
fn training_loss_falls_on_separable_data() {
    let splits = generate_corpus(&GenConfig {
        k: 3,
        distinguish_rate: 0.0,
        outcome_strength: 4.0,
        claim_rate: 0.5,
        vocab: 300,
        train: 200,
        validation: 50,
        test: 50,
        seed: 2,
        ..GenConfig::default()
    })
    .unwrap();
    let index = filter_articles(&splits).unwrap();
    let encoder = common::bow(512, 16);
    let train_set = Dataset::new(&splits.train, &index, &encoder).unwrap();
    let validation = Dataset::new(&splits.validation, &index, &encoder).unwrap();
    let d = TrainData {
        articles: &index,
        train: &train_set,
        validation: &validation,
        vectors: None,
    };
    for arch in Architecture::ALL {
        let h = hyper(0.01, 16);
        let cfg = TrainConfig {
            grid: GridSpec::single(h),
            max_epochs: 3,
            batch_size: 16,
            seed: 0,
            encoder,
        };
        let out = train(arch, h, &cfg, d).unwrap();
        let losses: Vec<f64> = out.epochs.iter().map(|e| e.train_loss).collect();
        assert!(losses.windows(2).all(|w| w[1] < w[0]), "{arch}: {losses:?}");
    }
}

#[test]
fn selected_epoch_has_lowest_validation_loss() {
    let t = common::tiny(3, 40, 3);
    for arch in Architecture::ALL {
        let h = HyperParams {
            learning_rate: 0.05,
            dropout: 0.2,
            hidden: 6,
        };
        let out = train(arch, h, &config(&t, GridSpec::single(h), 6), data(&t)).unwrap();
        assert_eq!(out.epochs.len(), 6);
        assert!(out.epochs.iter().all(|e| out.best_validation_loss <= e.validation_loss));
        if out.best_epoch > 0 {
            assert_eq!(out.epochs[out.best_epoch - 1].validation_loss, out.best_validation_loss);
        }
        assert_eq!(full_loss(&out.model, &t.validation).unwrap(), out.best_validation_loss);
    }
}

#[test]
fn single_point_grid_equals_train() {
    let t = common::tiny(2, 30, 4);
    let h = hyper(0.01, 5);
    let cfg = config(&t, GridSpec::single(h), 2);
    let direct = train(Architecture::ClaimOutcome, h, &cfg, data(&t)).unwrap();
    let grid = grid_search(Architecture::ClaimOutcome, &cfg, data(&t)).unwrap();
    assert_eq!(grid.best.model.params(), direct.model.params());
    assert_eq!(grid.best.epochs, direct.epochs);
    assert_eq!(grid.results.len(), 1);
}

#[test]
fn grid_prefers_lower_validation_loss() {
    let t = common::tiny(3, 40, 5);
    let grid = GridSpec {
        learning_rates: vec![0.0, 0.02],
        dropouts: vec![0.0],
        hidden: vec![6],
    };
    for arch in Architecture::ALL {
        let cfg = config(&t, grid.clone(), 4);
        let out = grid_search(arch, &cfg, data(&t)).unwrap();
        let losses: Vec<f64> = out.results.iter().map(|r| r.validation_loss.unwrap()).collect();
        let expected = if losses[1] < losses[0] { 0.02 } else { 0.0 };
        assert_eq!(out.best.hyper.learning_rate, expected, "{arch}: {losses:?}");
    }
}

#[test]
fn training_is_reproducible_and_thread_independent() {
    let t = common::tiny(3, 40, 6);
    let h = HyperParams {
        learning_rate: 0.01,
        dropout: 0.3,
        hidden: 5,
    };
    let cfg = config(&t, GridSpec::single(h), 3);
    let a = train(Architecture::Joint, h, &cfg, data(&t)).unwrap();
    let b = par::sequential(|| train(Architecture::Joint, h, &cfg, data(&t))).unwrap();
    assert_eq!(a.model.params(), b.model.params());
    let other = TrainConfig { seed: 12, ..cfg.clone() };
    let c = train(Architecture::Joint, h, &other, data(&t)).unwrap();
    assert_ne!(a.model.params(), c.model.params());
}

#[test]
fn diverging_points_are_skipped() {
    let t = common::tiny(2, 30, 7);
    let grid = GridSpec {
        learning_rates: vec![1e300, 0.01],
        dropouts: vec![0.0],
        hidden: vec![4],
    };
    let cfg = config(&t, grid, 3);
    let out = grid_search(Architecture::Simple, &cfg, data(&t)).unwrap();
    assert!(out.results[0].error.is_some());
    assert_eq!(out.best.hyper.learning_rate, 0.01);

    let all_bad = config(
        &t,
        GridSpec {
            learning_rates: vec![1e300],
            dropouts: vec![0.0],
            hidden: vec![4],
        },
        3,
    );
    assert!(matches!(
        grid_search(Architecture::Simple, &all_bad, data(&t)),
        Err(Error::AllConfigsDiverged)
    ));
}

#[test]
fn gradients_match_finite_differences() {
    for arch in Architecture::ALL {
        for seed in 0..5 {
            let t = common::tiny(3, 20, 100 + seed);
            let model = Model::new(arch, t.index.clone(), t.encoder, 4, seed).unwrap();
            let cases: Vec<usize> = (0..t.train.len()).collect();
            let check = gradient_check(&model, &t.train, &cases, 1e-5, 200, seed).unwrap();
            assert!(check.coords.len() >= 200);
            assert!(check.max_relative_error < 1e-4, "{arch} seed {seed}: {}", check.max_relative_error);
        }
    }
}

#[test]
fn corrupted_gradient_is_caught() {
    let t = common::tiny(3, 20, 8);
    let model = Model::new(Architecture::ClaimOutcome, t.index.clone(), t.encoder, 4, 1).unwrap();
    let cases: Vec<usize> = (0..t.train.len()).collect();
    let (_, mut analytic, _) = batch_gradient(&model, &t.train, &cases, None).unwrap();
    let coords = precedent_core::train::live_coordinates(&analytic, 200, 1);
    let numeric = numeric_gradient(&model, &t.train, &cases, &coords, 1e-5).unwrap();
    // Zero half of the head gradient, as a dropped backward term would.
    let range = model.head_param_range();
    for (i, g) in analytic.iter_mut().enumerate() {
        if range.contains(&i) && i % 2 == 0 {
            *g = 0.0;
        }
    }
    let check = precedent_core::train::compare_gradients(&analytic, &numeric, &coords);
    assert!(check.max_relative_error > 1e-2);
}

#[test]
fn unused_embedding_row_has_zero_gradient() {
    let t = common::tiny(2, 10, 9);
    let model = Model::new(Architecture::Mtl, t.index.clone(), t.encoder, 4, 0).unwrap();
    let cases: Vec<usize> = (0..t.train.len()).collect();
    let used: std::collections::BTreeSet<u32> = t.train.inputs.iter().flat_map(|i: &FactInput| i.tokens.ids.clone()).collect();
    let unused = (0..t.encoder.vocab_buckets as u32).find(|b| !used.contains(b)).expect("some bucket is unused");
    let coord = model.encoder_param_range(0).start + unused as usize * t.encoder.width;
    let (_, analytic, _) = batch_gradient(&model, &t.train, &cases, None).unwrap();
    let numeric = numeric_gradient(&model, &t.train, &cases, &[coord], 1e-5).unwrap();
    assert_eq!(analytic[coord], 0.0);
    assert_eq!(numeric[0], 0.0);
}
