//! ROC, AUC, EER and thresholded error rates.

use serde::{Deserialize, Serialize};

use super::EvalError;

/// Genuine (positive) and impostor (negative) scores.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub positives: Vec<f64>,
    pub negatives: Vec<f64>,
}

impl ScoreSet {
    pub fn new(positives: Vec<f64>, negatives: Vec<f64>) -> Self {
        Self { positives, negatives }
    }

    pub fn extend(&mut self, other: &ScoreSet) {
        self.positives.extend_from_slice(&other.positives);
        self.negatives.extend_from_slice(&other.negatives);
    }

    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self) -> Result<(), EvalError> {
        if self.positives.is_empty() || self.negatives.is_empty() {
            return Err(EvalError::EmptyScoreList {
                positives: self.positives.len(),
                negatives: self.negatives.len(),
            });
        }
        Ok(())
    }
}

/// One operating point: a score `>= threshold` is accepted as genuine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub fnr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Ascending threshold; FPR and TPR never increase along the list.
    pub points: Vec<RocPoint>,
    /// Rank statistic, ties counted as one half.
    pub auc: f64,
    /// Trapezoid area under `points`, for plotting.
    pub auc_trapezoid: f64,
    pub eer: f64,
    pub eer_threshold: f64,
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half, via mid-ranks.
pub fn auc_rank(positives: &[f64], negatives: &[f64]) -> f64 {
    let mut all: Vec<(f64, bool)> = positives
        .iter()
        .map(|&s| (s, true))
        .chain(negatives.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share their mean.
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * all[i..=j].iter().filter(|e| e.1).count() as f64;
        i = j + 1;
    }
    let np = positives.len() as f64;
    let nn = negatives.len() as f64;
    (rank_sum - np * (np + 1.0) / 2.0) / (np * nn)
}

fn count_at_least(sorted: &[f64], t: f64) -> usize {
    sorted.len() - sorted.partition_point(|&s| s < t)
}

pub fn compute_roc(scores: &ScoreSet) -> Result<RocCurve, EvalError> {
    scores.check()?;
    let mut pos = scores.positives.clone();
    let mut neg = scores.negatives.clone();
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    let lo = pos[0].min(neg[0]).min(0.0);
    let hi = pos[pos.len() - 1].max(neg[neg.len() - 1]).max(1.0);

    let mut thresholds: Vec<f64> = pos.iter().chain(&neg).copied().collect();
    thresholds.extend([lo, 0.0, 1.0]);
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    // Reject-all sentinel just above every score.
    thresholds.push(f64::from_bits(hi.to_bits() + 1));

    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    let points: Vec<RocPoint> = thresholds
        .iter()
        .map(|&t| {
            let tpr = count_at_least(&pos, t) as f64 / np;
            let fpr = count_at_least(&neg, t) as f64 / nn;
            RocPoint {
                threshold: t,
                fpr,
                fnr: 1.0 - tpr,
                tpr,
            }
        })
        .collect();

    let auc_trapezoid = points
        .windows(2)
        .map(|w| (w[0].fpr - w[1].fpr) * (w[0].tpr + w[1].tpr) / 2.0)
        .sum();
    let (eer, eer_threshold) = equal_error(&points);
    Ok(RocCurve {
        auc: auc_rank(&scores.positives, &scores.negatives),
        auc_trapezoid,
        points,
        eer,
        eer_threshold,
    })
}

/// Rate where FPR - FNR changes sign, interpolated linearly between the two
/// bracketing operating points.
fn equal_error(points: &[RocPoint]) -> (f64, f64) {
    for w in points.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let da = a.fpr - a.fnr;
        let db = b.fpr - b.fnr;
        if da == 0.0 {
            return (a.fpr, a.threshold);
        }
        if da > 0.0 && db <= 0.0 {
            let alpha = da / (da - db);
            let eer = a.fpr + alpha * (b.fpr - a.fpr);
            return (eer, a.threshold + alpha * (b.threshold - a.threshold));
        }
    }
    // Unreachable for a full sweep, which starts at FPR = 1 and ends at FNR = 1.
    let last = points.last().expect("sweep has points");
    (last.fpr.max(last.fnr), last.threshold)
}

/// ACC, FNR and FPR when scores `>= threshold` are accepted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRates {
    pub acc: f64,
    pub fnr: f64,
    pub fpr: f64,
}

pub fn rates_at(scores: &ScoreSet, threshold: f64) -> Result<ThresholdRates, EvalError> {
    scores.check()?;
    let tp = scores.positives.iter().filter(|&&s| s >= threshold).count();
    let fp = scores.negatives.iter().filter(|&&s| s >= threshold).count();
    let (np, nn) = (scores.positives.len(), scores.negatives.len());
    let tn = nn - fp;
    Ok(ThresholdRates {
        acc: (tp + tn) as f64 / (np + nn) as f64,
        fnr: (np - tp) as f64 / np as f64,
        fpr: fp as f64 / nn as f64,
    })
}
