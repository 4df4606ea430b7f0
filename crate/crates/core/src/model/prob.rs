//! Probability outputs and decision rules.

use serde::{Deserialize, Serialize};

use crate::corpus::OutcomeLabel;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x)` without overflow.
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

fn softplus(y: f64) -> f64 {
    y.max(0.0) + (-y.abs()).exp().ln_1p()
}

/// Softmax with the maximum subtracted first.
pub fn softmax3(z: [f64; 3]) -> [f64; 3] {
    let m = z[0].max(z[1]).max(z[2]);
    let e = [(z[0] - m).exp(), (z[1] - m).exp(), (z[2] - m).exp()];
    let s = e[0] + e[1] + e[2];
    [e[0] / s, e[1] / s, e[2] / s]
}

pub fn log_softmax3(z: [f64; 3]) -> [f64; 3] {
    let m = z[0].max(z[1]).max(z[2]);
    let lse = m + ((z[0] - m).exp() + (z[1] - m).exp() + (z[2] - m).exp()).ln();
    [z[0] - lse, z[1] - lse, z[2] - lse]
}

/// Per article `(p_pos, p_neg, p_null)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDistribution {
    pub rows: Vec<[f64; 3]>,
}

impl OutcomeDistribution {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Per article independent `(p_pos, p_neg)`; the two need not be coherent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineScores {
    pub rows: Vec<[f64; 2]>,
}

/// Two sigmoid banks of the claim–outcome model.
#[derive(Debug, Clone, PartialEq)]
pub struct ClaimOutcomeScores {
    pub p_claim: Vec<f64>,
    pub p_pos_given_claim: Vec<f64>,
}

/// Sums the claim variable out:
/// `p_pos = q·c`, `p_neg = (1 − q)·c`, `p_null = 1 − c`.
pub fn marginalize(p_claim: &[f64], p_pos_given_claim: &[f64]) -> OutcomeDistribution {
    let rows = p_claim
        .iter()
        .zip(p_pos_given_claim)
        .map(|(&c, &q)| [q * c, (1.0 - q) * c, 1.0 - c])
        .collect();
    OutcomeDistribution { rows }
}

/// Per-article argmax; ties resolve POS, then NEG, then NULL.
pub fn decide(dist: &OutcomeDistribution) -> Vec<OutcomeLabel> {
    dist.rows.iter().map(|r| argmax_label(*r)).collect()
}

pub fn argmax_label(r: [f64; 3]) -> OutcomeLabel {
    let mut best = 0;
    for i in 1..3 {
        if r[i] > r[best] {
            best = i;
        }
    }
    OutcomeLabel::ALL[best]
}

/// Independent thresholds with strict `>`; both flags may be set.
pub fn decide_baseline(scores: &BaselineScores, threshold: f64) -> Vec<(bool, bool)> {
    scores
        .rows
        .iter()
        .map(|[p, n]| (*p > threshold, *n > threshold))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marginal_corners() {
        assert_eq!(marginalize(&[1.0], &[1.0]).rows[0], [1.0, 0.0, 0.0]);
        let r = marginalize(&[0.6], &[0.7]).rows[0];
        for (a, b) in r.iter().zip([0.42, 0.18, 0.40]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn decide_examples() {
        assert_eq!(argmax_label([0.42, 0.18, 0.40]), OutcomeLabel::Pos);
        let third = 1.0 / 3.0;
        assert_eq!(argmax_label([third; 3]), OutcomeLabel::Pos);
        assert_eq!(argmax_label([0.2, 0.4, 0.4]), OutcomeLabel::Neg);
        assert_eq!(argmax_label([0.1, 0.2, 0.7]), OutcomeLabel::Null);
    }

    #[test]
    fn baseline_threshold_is_strict() {
        let s = BaselineScores { rows: vec![[0.9, 0.8], [0.5, 0.5], [0.2, 0.51]] };
        assert_eq!(decide_baseline(&s, 0.5), vec![(true, true), (false, false), (false, true)]);
    }

    #[test]
    fn stable_log_sigmoid() {
        assert!((log_sigmoid(0.0) - 0.5f64.ln()).abs() < 1e-15);
        assert_eq!(log_sigmoid(-800.0), -800.0);
        assert!(log_sigmoid(800.0) <= 0.0);
        assert!((sigmoid(-800.0)).abs() < 1e-300);
        assert_eq!(softmax3([0.0; 3]), [1.0 / 3.0; 3]);
        let s = softmax3([1000.0, 0.0, -1000.0]);
        assert_eq!(s[0], 1.0);
    }
}
