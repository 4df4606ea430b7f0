//! Two-tailed paired permutation (sign-flip) test.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::PredictionSet;
use crate::corpus::{LabelMatrix, OutcomeLabel};
use crate::error::{Error, Result};
use crate::par;

/// Largest number of pairs enumerated exhaustively by [`Resampling::Auto`].
pub const EXHAUSTIVE_MAX: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resampling {
    /// All `2^n` sign assignments.
    Exhaustive,
    Sampled { resamples: usize, seed: u64 },
    /// Exhaustive up to [`EXHAUSTIVE_MAX`] pairs, sampled beyond.
    Auto { resamples: usize, seed: u64 },
}

/// Fraction of sign-flip assignments whose `|mean difference|` is at least
/// the observed one. Identical vectors give 1.
pub fn permutation_test(a: &[f64], b: &[f64], mode: Resampling) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Misaligned(format!("{} vs {} paired scores", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::Config("permutation test on zero pairs".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len();
    let observed = d.iter().sum::<f64>().abs() / n as f64;
    let scale: f64 = d.iter().map(|x| x.abs()).sum::<f64>() / n as f64;
    let threshold = observed - 1e-9 * scale.max(1e-300);
    let stat = |signs: &dyn Fn(usize) -> bool| -> f64 {
        let s: f64 = d.iter().enumerate().map(|(i, x)| if signs(i) { -x } else { *x }).sum();
        s.abs() / n as f64
    };

    let mode = match mode {
        Resampling::Auto { .. } if n <= EXHAUSTIVE_MAX => Resampling::Exhaustive,
        Resampling::Auto { resamples, seed } => Resampling::Sampled { resamples, seed },
        m => m,
    };
    match mode {
        Resampling::Exhaustive => {
            if n > 30 {
                return Err(Error::Config(format!("exhaustive test over {n} pairs is infeasible")));
            }
            let total: u64 = 1 << n;
            let chunk_bits = n.min(12);
            let chunks = (total >> chunk_bits) as usize;
            let counts = par::map_range(chunks, |c| {
                let base = (c as u64) << chunk_bits;
                (0..1u64 << chunk_bits)
                    .filter(|lo| {
                        let mask = base | lo;
                        stat(&|i| mask >> i & 1 == 1) >= threshold
                    })
                    .count() as u64
            });
            Ok(counts.iter().sum::<u64>() as f64 / total as f64)
        }
        Resampling::Sampled { resamples, seed } => {
            if resamples == 0 {
                return Err(Error::Config("sampled permutation test needs resamples".into()));
            }
            let hits = par::map_range(resamples, |r| {
                let mut rng = ChaCha8Rng::seed_from_u64(par::mix_seed(seed, r as u64));
                let flips: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
                stat(&|i| flips[i]) >= threshold
            });
            Ok(hits.iter().filter(|h| **h).count() as f64 / resamples as f64)
        }
        Resampling::Auto { .. } => unreachable!(),
    }
}

/// Per case, the number of articles where the prediction agrees with gold
/// on membership in `class` (true positives plus true negatives).
pub fn per_case_scores(preds: &PredictionSet, gold: &LabelMatrix, class: OutcomeLabel) -> Result<Vec<f64>> {
    preds.check_aligned(gold)?;
    if !preds.supports(class) {
        return Err(Error::Config(format!("baseline predictions have no {class} class")));
    }
    let k = gold.n_articles();
    Ok((0..gold.n_cases())
        .map(|n| {
            (0..k)
                .filter(|&c| preds.asserts(n * k + c, class) == Some(gold.label(n, c) == class))
                .count() as f64
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_vectors_give_one() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(permutation_test(&a, &a, Resampling::Exhaustive).unwrap(), 1.0);
        let s = Resampling::Sampled { resamples: 500, seed: 3 };
        assert_eq!(permutation_test(&a, &a, s).unwrap(), 1.0);
    }

    #[test]
    fn four_positive_pairs() {
        let p = permutation_test(&[1.0; 4], &[0.0; 4], Resampling::Exhaustive).unwrap();
        assert_eq!(p, 0.125);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            permutation_test(&[1.0], &[1.0, 2.0], Resampling::Exhaustive),
            Err(Error::Misaligned(_))
        ));
    }
}
