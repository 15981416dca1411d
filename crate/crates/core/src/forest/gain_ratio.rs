//! Gain-ratio feature ranking. Numeric features are first discretized with
//! recursive entropy-minimizing cuts and the Fayyad–Irani MDL stopping rule.

use super::{FeatureKind, FeatureSchema, Matrix};

fn entropy(counts: &[f64]) -> f64 {
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / total;
            -p * p.log2()
        })
        .sum()
}

fn present(counts: &[f64]) -> f64 {
    counts.iter().filter(|&&c| c > 0.0).count() as f64
}

/// Cut points for `sorted` (value, class) pairs, ascending by value.
pub fn mdl_cut_points(sorted: &[(f64, usize)], num_classes: usize) -> Vec<f64> {
    let mut cuts = Vec::new();
    split(sorted, num_classes, &mut cuts);
    cuts.sort_by(f64::total_cmp);
    cuts
}

fn split(s: &[(f64, usize)], k: usize, cuts: &mut Vec<f64>) {
    let n = s.len();
    if n < 2 {
        return;
    }
    let mut prior = vec![0.0; k];
    for &(_, c) in s {
        prior[c] += 1.0;
    }
    let prior_entropy = entropy(&prior);
    let mut left = vec![0.0; k];
    let mut right = prior.clone();
    let mut best: Option<(f64, usize, Vec<f64>, Vec<f64>)> = None;
    let mut best_entropy = prior_entropy;
    for i in 0..n - 1 {
        left[s[i].1] += 1.0;
        right[s[i].1] -= 1.0;
        if s[i].0 < s[i + 1].0 {
            let nl = (i + 1) as f64;
            let e = (nl * entropy(&left) + (n as f64 - nl) * entropy(&right)) / n as f64;
            if e < best_entropy {
                best_entropy = e;
                best = Some((e, i, left.clone(), right.clone()));
            }
        }
    }
    let Some((e, i, l, r)) = best else { return };
    let gain = prior_entropy - e;
    if gain <= 0.0 {
        return;
    }
    let nf = n as f64;
    let delta = (3f64.powf(present(&prior)) - 2.0).log2()
        - (present(&prior) * prior_entropy - present(&r) * entropy(&r) - present(&l) * entropy(&l));
    if gain > ((nf - 1.0).log2() + delta) / nf {
        cuts.push((s[i].0 + s[i + 1].0) / 2.0);
        split(&s[..=i], k, cuts);
        split(&s[i + 1..], k, cuts);
    }
}

/// Gain ratio of a discrete attribute (bin per row) with respect to `classes`.
/// Zero when the attribute has no entropy.
pub fn gain_ratio(bins: &[usize], classes: &[usize]) -> f64 {
    let nb = bins.iter().max().map_or(0, |m| m + 1);
    let nc = classes.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0.0; nc]; nb];
    for (&b, &c) in bins.iter().zip(classes) {
        table[b][c] += 1.0;
    }
    let n = bins.len() as f64;
    let class_counts: Vec<f64> = (0..nc).map(|c| table.iter().map(|row| row[c]).sum()).collect();
    let bin_counts: Vec<f64> = table.iter().map(|row| row.iter().sum()).collect();
    let split_info = entropy(&bin_counts);
    if split_info <= 1e-12 {
        return 0.0;
    }
    let conditional: f64 = table
        .iter()
        .zip(&bin_counts)
        .map(|(row, &m)| m / n * entropy(row))
        .sum();
    (entropy(&class_counts) - conditional) / split_info
}

/// Ranks every feature by gain ratio, best first; ties break by name.
/// `classes` holds dense class indices (0 and 1 for genuine/impostor).
pub fn gain_ratio_ranking(x: &Matrix, classes: &[usize], schema: &FeatureSchema) -> Vec<(String, f64)> {
    assert_eq!(x.n_rows(), classes.len());
    assert_eq!(x.n_cols(), schema.len());
    let k = classes.iter().max().map_or(1, |m| m + 1);
    let mut out: Vec<(String, f64)> = schema
        .features
        .iter()
        .enumerate()
        .map(|(f, spec)| {
            let bins: Vec<usize> = match spec.kind {
                FeatureKind::Categorical { .. } => x.column(f).map(|v| v as usize).collect(),
                FeatureKind::Numeric => {
                    let mut sorted: Vec<(f64, usize)> = x.column(f).zip(classes.iter().copied()).collect();
                    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
                    let cuts = mdl_cut_points(&sorted, k);
                    x.column(f).map(|v| cuts.partition_point(|&c| c < v)).collect()
                }
            };
            (spec.name.clone(), gain_ratio(&bins, classes))
        })
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}
