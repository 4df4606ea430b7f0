//! Invariants checked over generated inputs.

mod common;

use proptest::collection::vec;
use proptest::prelude::*;

use precedent_core::corpus::{article_set, derive_labels, load_corpus, write_corpus, CorpusFormat, CORE_ARTICLES};
use precedent_core::encoder::{mean_pool, TokenSequence};
use precedent_core::eval::{micro_f1, permutation_test, read_report_csv, render_report, PredictionSet, ReportRow, Resampling};
use precedent_core::model::{argmax_label, decide, loss_terms, marginalize};
use precedent_core::synth::{generate_corpus, GenConfig};
use precedent_core::{Architecture, ArticleId, ArticleIndex, LabelMatrix, OutcomeLabel};

fn label() -> impl Strategy<Value = OutcomeLabel> {
    prop_oneof![Just(OutcomeLabel::Pos), Just(OutcomeLabel::Neg), Just(OutcomeLabel::Null)]
}

fn arch() -> impl Strategy<Value = Architecture> {
    prop_oneof![
        Just(Architecture::Simple),
        Just(Architecture::Mtl),
        Just(Architecture::Joint),
        Just(Architecture::ClaimOutcome)
    ]
}

/// Claims and a subset of them marked violated, as article numbers.
fn claims_and_violations() -> impl Strategy<Value = (Vec<u32>, Vec<u32>)> {
    vec((1u32..25, any::<bool>()), 0..12).prop_map(|pairs| {
        let claims = pairs.iter().map(|p| p.0).collect();
        let violated = pairs.iter().filter(|p| p.1).map(|p| p.0).collect();
        (claims, violated)
    })
}

proptest! {
    #[test]
    fn labels_partition_claims((claims, violated) in claims_and_violations()) {
        let index = ArticleIndex::new(CORE_ARTICLES.map(ArticleId));
        let row = derive_labels(&article_set(claims.clone()), &article_set(violated.clone()), &index).unwrap();
        for (a, l) in index.articles().iter().zip(&row) {
            prop_assert_eq!(l.is_claimed(), claims.contains(&a.0));
            prop_assert_eq!(*l == OutcomeLabel::Pos, violated.contains(&a.0));
        }
        let mut reversed = claims.clone();
        reversed.reverse();
        let again = derive_labels(&article_set(reversed), &article_set(violated), &index).unwrap();
        prop_assert_eq!(row, again);
    }

    #[test]
    fn violations_outside_claims_are_rejected(claims in vec(2u32..19, 0..5), extra in 2u32..19) {
        prop_assume!(!claims.contains(&extra));
        let index = ArticleIndex::new(CORE_ARTICLES.map(ArticleId));
        prop_assert!(derive_labels(&article_set(claims), &article_set([extra]), &index).is_err());
    }

    #[test]
    fn mean_pool_ignores_token_order(ids in vec(0u32..8, 0..20), seed in any::<u64>(), emb in vec(-5.0f64..5.0, 8 * 3)) {
        let mut shuffled = ids.clone();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        let a = mean_pool(&TokenSequence { ids }, &emb, 3);
        let b = mean_pool(&TokenSequence { ids: shuffled }, &emb, 3);
        prop_assert_eq!(a.len(), 3);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn marginals_are_bounded_by_claim(pairs in vec((0.0f64..=1.0, 0.0f64..=1.0), 1..10)) {
        let (c, q): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let d = marginalize(&c, &q);
        for (row, c) in d.rows.iter().zip(&c) {
            prop_assert!(row[0] <= *c && row[1] <= *c);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        for (row, l) in d.rows.iter().zip(decide(&d)) {
            prop_assert!(row.iter().all(|p| *p <= row[l.index()]));
        }
    }

    #[test]
    fn argmax_prefers_earlier_class_on_ties(p in 0.0f64..1.0) {
        prop_assert_eq!(argmax_label([p, p, p]), OutcomeLabel::Pos);
        prop_assert_eq!(argmax_label([0.0, p, p]), if p > 0.0 { OutcomeLabel::Neg } else { OutcomeLabel::Pos });
    }

    #[test]
    fn loss_adds_over_articles(arch in arch(), rows in vec((vec(-8.0f64..8.0, 3), label()), 1..6)) {
        let stride = arch.stride();
        let z: Vec<f64> = rows.iter().flat_map(|(z, _)| z[..stride].to_vec()).collect();
        let gold: Vec<OutcomeLabel> = rows.iter().map(|r| r.1).collect();
        let (total, dz, _) = loss_terms(arch, &z, &gold);
        let mut sum = 0.0;
        for (k, (zk, l)) in rows.iter().enumerate() {
            let (part, dpart, _) = loss_terms(arch, &zk[..stride], &[*l]);
            sum += part;
            prop_assert_eq!(&dz[k * stride..(k + 1) * stride], dpart.as_slice());
        }
        prop_assert!(total >= 0.0);
        prop_assert!((total - sum).abs() <= 1e-12 * (1.0 + total));
    }

    #[test]
    fn micro_f1_ignores_case_order(rows in vec((vec(label(), 3), vec(label(), 3)), 1..25), rotate in 0usize..25) {
        let n = rows.len();
        let ids: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
        let score = |rows: &[(Vec<OutcomeLabel>, Vec<OutcomeLabel>)], ids: Vec<String>| {
            let gold = LabelMatrix::from_rows(common::index(3), ids.clone(), rows.iter().map(|r| r.0.clone()).collect()).unwrap();
            let pred = PredictionSet::three_way(common::index(3), ids, rows.iter().map(|r| r.1.clone()).collect()).unwrap();
            OutcomeLabel::ALL.map(|c| micro_f1(&pred, &gold, c).unwrap())
        };
        let a = score(&rows, ids.clone());
        let mut turned = rows.clone();
        turned.rotate_left(rotate % n);
        let mut turned_ids = ids;
        turned_ids.rotate_left(rotate % n);
        prop_assert_eq!(a, score(&turned, turned_ids));
        prop_assert!(a.iter().all(|f| (0.0..=100.0).contains(f)));
    }

    #[test]
    fn correcting_a_cell_never_lowers_f1(rows in vec((vec(label(), 2), vec(label(), 2)), 1..20), cell in 0usize..40) {
        let n = rows.len();
        let ids: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
        let gold_rows: Vec<Vec<OutcomeLabel>> = rows.iter().map(|r| r.0.clone()).collect();
        let gold = LabelMatrix::from_rows(common::index(2), ids.clone(), gold_rows.clone()).unwrap();
        let before: Vec<Vec<OutcomeLabel>> = rows.iter().map(|r| r.1.clone()).collect();
        let mut after = before.clone();
        let (i, j) = ((cell / 2) % n, cell % 2);
        after[i][j] = gold_rows[i][j];
        let f = |p: Vec<Vec<OutcomeLabel>>| {
            let p = PredictionSet::three_way(common::index(2), ids.clone(), p).unwrap();
            micro_f1(&p, &gold, gold_rows[i][j]).unwrap()
        };
        prop_assert!(f(after) >= f(before));
    }

    #[test]
    fn permutation_test_is_symmetric(pairs in vec((0u8..4, 0u8..4), 1..12)) {
        let a: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        let ab = permutation_test(&a, &b, Resampling::Exhaustive).unwrap();
        let ba = permutation_test(&b, &a, Resampling::Exhaustive).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!(ab > 0.0 && ab <= 1.0);
        prop_assert_eq!(permutation_test(&a, &a, Resampling::Exhaustive).unwrap(), 1.0);
    }

    #[test]
    fn synthetic_violations_are_claimed(k in 1usize..6, claim_rate in 0.0f64..=1.0, violation_rate in 0.0f64..=1.0, seed in any::<u64>()) {
        let cfg = GenConfig { k, claim_rate, violation_rate, train: 20, validation: 5, test: 5, seed, ..GenConfig::default() };
        let s = generate_corpus(&cfg).unwrap();
        for c in s.train.iter().chain(&s.validation).chain(&s.test) {
            prop_assert!(c.violated.is_subset(&c.claims));
            prop_assert!(c.claims.iter().all(|a| (2..2 + k as u32).contains(&a.0)));
        }
    }

    #[test]
    fn report_csv_round_trips(values in vec((0.0f64..100.0, 0.0f64..100.0, proptest::option::of(0.0f64..100.0), proptest::option::of(any::<u64>())), 0..6)) {
        let rows: Vec<ReportRow> = values
            .into_iter()
            .enumerate()
            .map(|(i, (pos, neg, null, seed))| ReportRow {
                model: format!("m{i}"),
                encoder: "hashed-bow".into(),
                corpus: "synth".into(),
                seed,
                pos: Some(pos),
                neg: Some(neg),
                null,
                all: null.map(|u| (pos + neg + u) / 3.0),
            })
            .collect();
        let r = render_report(&rows, None);
        prop_assert_eq!(read_report_csv(&r.csv).unwrap(), rows);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn corpus_round_trips_through_files(seed in any::<u64>(), k in 1usize..6) {
        let cfg = GenConfig { k, train: 15, validation: 6, test: 6, seed, ..GenConfig::default() };
        let splits = generate_corpus(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_corpus(dir.path(), &splits).unwrap();
        let back = load_corpus(dir.path(), CorpusFormat::JsonlDir).unwrap();
        prop_assert_eq!(&back, &splits);
        let again = tempfile::tempdir().unwrap();
        write_corpus(again.path(), &back).unwrap();
        for f in ["train.jsonl", "validation.jsonl", "test.jsonl"] {
            prop_assert_eq!(std::fs::read(dir.path().join(f)).unwrap(), std::fs::read(again.path().join(f)).unwrap());
        }
    }
}
