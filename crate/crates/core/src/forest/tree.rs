//! CART classification tree for two classes with Gini splits.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{FeatureKind, Matrix};

/// Minimum impurity decrease counted as a useful split.
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SplitTest {
    /// `x <= threshold` goes left.
    Numeric { threshold: f64 },
    /// Categories whose bit is set go left; everything else, including codes
    /// never seen during training, goes right.
    Categorical { left_mask: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        /// Weighted count of genuine training rows reaching the leaf.
        genuine: f64,
        total: f64,
    },
    Split {
        feature: usize,
        test: SplitTest,
        left: usize,
        right: usize,
    },
}

/// Nodes live in one arena; index 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    /// Builds a tree from an explicit node arena. Child indices must point
    /// inside the arena.
    pub fn from_nodes(nodes: Vec<Node>) -> Option<Self> {
        let n = nodes.len();
        let ok = n > 0
            && nodes.iter().all(|node| match node {
                Node::Leaf { total, .. } => *total > 0.0,
                Node::Split { left, right, .. } => *left < n && *right < n,
            });
        ok.then_some(Self { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Genuine-class fraction of the leaf reached by `row`.
    pub fn leaf_probability(&self, row: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { genuine, total } => return genuine / total,
                Node::Split {
                    feature,
                    test,
                    left,
                    right,
                } => {
                    let x = row[*feature];
                    let go_left = match test {
                        SplitTest::Numeric { threshold } => x <= *threshold,
                        SplitTest::Categorical { left_mask } => {
                            let code = x as i64;
                            (0..64).contains(&code) && left_mask & (1u64 << code) != 0
                        }
                    };
                    idx = if go_left { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 1,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Grows a tree on `rows` (indices into `x`, repeats allowed). At each
    /// node `mtry` random features are tried; when none of them yields a
    /// useful split, further features are tried in random order until one
    /// does or all are exhausted.
    pub fn grow<R: Rng>(
        x: &Matrix,
        y: &[bool],
        kinds: &[FeatureKind],
        rows: Vec<usize>,
        mtry: usize,
        rng: &mut R,
    ) -> Self {
        let mut nodes = vec![Node::Leaf {
            genuine: 0.0,
            total: 1.0,
        }];
        let mut idx = rows;
        let mut stack = vec![(0usize, 0usize, idx.len())];
        let mut features: Vec<usize> = (0..x.n_cols()).collect();
        let mut scratch = Vec::new();

        while let Some((node, lo, hi)) = stack.pop() {
            let here = &mut idx[lo..hi];
            let pos = here.iter().filter(|&&r| y[r]).count();
            let n = here.len();
            let leaf = Node::Leaf {
                genuine: pos as f64,
                total: n as f64,
            };
            if pos == 0 || pos == n || n < 2 {
                nodes[node] = leaf;
                continue;
            }
            features.shuffle(rng);
            let parent = gini(pos as f64, n as f64);
            let mut best: Option<(f64, usize, SplitTest)> = None;
            for (tried, &f) in features.iter().enumerate() {
                if tried >= mtry && best.is_some() {
                    break;
                }
                let cand = match kinds[f] {
                    FeatureKind::Numeric => best_numeric(x, y, f, here, &mut scratch),
                    FeatureKind::Categorical { levels } => best_categorical(x, y, f, levels, here),
                };
                if let Some((impurity, test)) = cand {
                    let gain = parent - impurity;
                    if gain > MIN_GAIN && best.as_ref().is_none_or(|b| gain > b.0) {
                        best = Some((gain, f, test));
                    }
                }
            }
            let Some((_, feature, test)) = best else {
                nodes[node] = leaf;
                continue;
            };
            let mid = partition(here, |r| match &test {
                SplitTest::Numeric { threshold } => x.get(r, feature) <= *threshold,
                SplitTest::Categorical { left_mask } => left_mask & (1u64 << (x.get(r, feature) as u64)) != 0,
            });
            let left = nodes.len();
            let right = left + 1;
            nodes.push(Node::Leaf {
                genuine: 0.0,
                total: 1.0,
            });
            nodes.push(Node::Leaf {
                genuine: 0.0,
                total: 1.0,
            });
            nodes[node] = Node::Split {
                feature,
                test,
                left,
                right,
            };
            stack.push((right, lo + mid, hi));
            stack.push((left, lo, lo + mid));
        }
        Self { nodes }
    }
}

fn gini(pos: f64, n: f64) -> f64 {
    let p = pos / n;
    2.0 * p * (1.0 - p)
}

fn weighted_gini(lp: f64, ln: f64, rp: f64, rn: f64) -> f64 {
    let n = ln + rn;
    (ln * gini(lp, ln) + rn * gini(rp, rn)) / n
}

/// Stable partition; returns the number of rows for which `pred` holds.
fn partition(rows: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let (left, right): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| pred(r));
    let mid = left.len();
    rows[..mid].copy_from_slice(&left);
    rows[mid..].copy_from_slice(&right);
    mid
}

fn best_numeric(
    x: &Matrix,
    y: &[bool],
    f: usize,
    rows: &[usize],
    scratch: &mut Vec<(f64, bool)>,
) -> Option<(f64, SplitTest)> {
    scratch.clear();
    scratch.extend(rows.iter().map(|&r| (x.get(r, f), y[r])));
    scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = scratch.len() as f64;
    let total_pos = scratch.iter().filter(|s| s.1).count() as f64;
    let mut left_pos = 0.0;
    let mut best: Option<(f64, f64)> = None;
    for i in 0..scratch.len() - 1 {
        if scratch[i].1 {
            left_pos += 1.0;
        }
        let (lo, hi) = (scratch[i].0, scratch[i + 1].0);
        if lo == hi {
            continue;
        }
        let ln = (i + 1) as f64;
        let imp = weighted_gini(left_pos, ln, total_pos - left_pos, n - ln);
        if best.is_none_or(|b| imp < b.0) {
            let mut thr = lo + (hi - lo) / 2.0;
            if !(thr >= lo && thr < hi) {
                thr = lo;
            }
            best = Some((imp, thr));
        }
    }
    best.map(|(imp, threshold)| (imp, SplitTest::Numeric { threshold }))
}

/// Two-class subset split: order categories by genuine fraction and scan the
/// prefixes, which finds the optimal binary partition under Gini.
fn best_categorical(x: &Matrix, y: &[bool], f: usize, levels: usize, rows: &[usize]) -> Option<(f64, SplitTest)> {
    let mut counts = vec![(0.0f64, 0.0f64); levels];
    for &r in rows {
        let c = x.get(r, f) as usize;
        counts[c].1 += 1.0;
        if y[r] {
            counts[c].0 += 1.0;
        }
    }
    let mut present: Vec<usize> = (0..levels).filter(|&c| counts[c].1 > 0.0).collect();
    if present.len() < 2 {
        return None;
    }
    present.sort_by(|&a, &b| {
        let pa = counts[a].0 / counts[a].1;
        let pb = counts[b].0 / counts[b].1;
        pa.total_cmp(&pb).then(a.cmp(&b))
    });
    let n = rows.len() as f64;
    let total_pos: f64 = counts.iter().map(|c| c.0).sum();
    let (mut lp, mut ln, mut mask) = (0.0, 0.0, 0u64);
    let mut best: Option<(f64, u64)> = None;
    for &c in &present[..present.len() - 1] {
        lp += counts[c].0;
        ln += counts[c].1;
        mask |= 1u64 << c;
        let imp = weighted_gini(lp, ln, total_pos - lp, n - ln);
        if best.is_none_or(|b| imp < b.0) {
            best = Some((imp, mask));
        }
    }
    best.map(|(imp, left_mask)| (imp, SplitTest::Categorical { left_mask }))
}
