//! Uniform random baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::f1_from_counts;
use crate::corpus::{LabelMatrix, OutcomeLabel};
use crate::error::{Error, Result};
use crate::par;

/// Per-class F1 (POS, NEG, NULL order) over repeated uniform draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomBaseline {
    pub instantiations: usize,
    pub mean: [f64; 3],
    /// Sample standard deviation; 0 for a single instantiation.
    pub sd: [f64; 3],
}

/// Each instantiation draws a label uniformly from {POS, NEG, NULL} for
/// every (case, article) cell, independently, with its own seed derived
/// from `seed`. Uniform per cell is the same as uniform over outcome vectors.
pub fn random_baseline(gold: &LabelMatrix, instantiations: usize, seed: u64) -> Result<RandomBaseline> {
    if instantiations == 0 {
        return Err(Error::Config("random baseline needs at least one instantiation".into()));
    }
    let labels = gold.labels();
    let runs = par::map_range(instantiations, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(par::mix_seed(seed, i as u64));
        let mut counts = [[0usize; 3]; 3]; // [class][tp, fp, fn]
        for g in labels {
            let p = OutcomeLabel::ALL[rng.gen_range(0..3)];
            for class in OutcomeLabel::ALL {
                let c = &mut counts[class.index()];
                match (p == class, *g == class) {
                    (true, true) => c[0] += 1,
                    (true, false) => c[1] += 1,
                    (false, true) => c[2] += 1,
                    (false, false) => {}
                }
            }
        }
        counts.map(|c| f1_from_counts(c[0], c[1], c[2]))
    });
    let n = instantiations as f64;
    let mut mean = [0.0; 3];
    for r in &runs {
        for c in 0..3 {
            mean[c] += r[c] / n;
        }
    }
    let mut sd = [0.0; 3];
    if instantiations > 1 {
        for r in &runs {
            for c in 0..3 {
                sd[c] += (r[c] - mean[c]).powi(2);
            }
        }
        sd = sd.map(|s| (s / (n - 1.0)).sqrt());
    }
    Ok(RandomBaseline {
        instantiations,
        mean,
        sd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ArticleId, ArticleIndex};

    #[test]
    fn all_null_gold_gives_zero_pos() {
        let rows = vec![vec![OutcomeLabel::Null; 3]; 20];
        let ids = (0..20).map(|i| i.to_string()).collect();
        let g = LabelMatrix::from_rows(ArticleIndex::new((2..5).map(ArticleId)), ids, rows).unwrap();
        let r = random_baseline(&g, 10, 1).unwrap();
        assert_eq!(r.mean[0], 0.0);
        assert_eq!(r.mean[1], 0.0);
        assert!(r.mean[2] > 0.0);
        assert_eq!(r, random_baseline(&g, 10, 1).unwrap());
        assert!(random_baseline(&g, 0, 1).is_err());
    }
}
