//! Random forest of CART trees, per-user balanced datasets and gain-ratio
//! feature ranking.

mod dataset;
mod gain_ratio;
mod tree;

use std::io::{Read, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::features::{feature_kinds, ActionFeatures, FEATURE_NAMES};
use crate::seed::{rng_for, TAG_TREE};

pub use dataset::{build_user_dataset, Label, UserDataset};
pub use gain_ratio::{gain_ratio, gain_ratio_ranking, mdl_cut_points};
pub use tree::{DecisionTree, Node, SplitTest};

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("need at least two users with actions, found {0}")]
    NotEnoughUsers(usize),
    #[error("genuine user {0} has no actions")]
    NoGenuineActions(u32),
    #[error("degenerate training data: {0}")]
    DegenerateData(String),
    #[error("feature schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("cannot score an empty action set")]
    EmptySet,
    #[error("model file: {0}")]
    Persist(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    Numeric,
    /// Values are integer codes in `0..levels`, `levels <= 64`.
    Categorical {
        levels: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
}

/// Ordered feature names and kinds a model was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureSpec>,
}

impl FeatureSchema {
    pub fn new(names: &[&str], kinds: &[FeatureKind]) -> Self {
        assert_eq!(names.len(), kinds.len());
        Self {
            features: names
                .iter()
                .zip(kinds)
                .map(|(n, k)| FeatureSpec {
                    name: n.to_string(),
                    kind: *k,
                })
                .collect(),
        }
    }

    /// The 39 per-action features.
    pub fn action_features() -> Self {
        Self::new(&FEATURE_NAMES, &feature_kinds())
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn kinds(&self) -> Vec<FeatureKind> {
        self.features.iter().map(|f| f.kind).collect()
    }

    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for f in &self.features {
            h.update(f.name.as_bytes());
            h.update(match f.kind {
                FeatureKind::Numeric => "|num;".to_string(),
                FeatureKind::Categorical { levels } => format!("|cat{levels};"),
            });
        }
        format!("{:x}", h.finalize())
    }

    pub fn check_row(&self, row: &[f64]) -> Result<(), ForestError> {
        if row.len() != self.len() {
            return Err(ForestError::SchemaMismatch(format!(
                "row has {} values, model expects {}",
                row.len(),
                self.len()
            )));
        }
        for (v, spec) in row.iter().zip(&self.features) {
            if let FeatureKind::Categorical { levels } = spec.kind {
                if !(v.fract() == 0.0 && *v >= 0.0 && (*v as usize) < levels) {
                    return Err(ForestError::SchemaMismatch(format!(
                        "{} = {v} is not a category code below {levels}",
                        spec.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    data: Vec<f64>,
    n_cols: usize,
}

impl Matrix {
    pub fn new(data: Vec<f64>, n_cols: usize) -> Self {
        assert!(n_cols > 0 && data.len().is_multiple_of(n_cols));
        Self { data, n_cols }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_cols = rows.first().map_or(1, Vec::len);
        let data = rows
            .iter()
            .flat_map(|r| {
                assert_eq!(r.len(), n_cols);
                r.iter().copied()
            })
            .collect();
        Self::new(data, n_cols)
    }

    pub fn n_rows(&self) -> usize {
        self.data.len() / self.n_cols
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.n_cols..(row + 1) * self.n_cols]
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().skip(col).step_by(self.n_cols).copied()
    }

    pub fn select(&self, rows: &[usize]) -> Matrix {
        let data = rows.iter().flat_map(|&r| self.row(r).iter().copied()).collect();
        Matrix::new(data, self.n_cols)
    }
}

/// How per-tree outputs combine into a genuine-class score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ScoreMode {
    /// Fraction of trees whose leaf majority is genuine; a tied leaf casts
    /// half a vote.
    #[default]
    VoteFraction,
    /// Mean of the leaves' genuine-class fractions.
    MeanProbability,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub num_trees: usize,
    /// Features tried per split; `None` means `floor(log2(k)) + 1`.
    pub mtry: Option<usize>,
    pub seed: u64,
    pub score_mode: ScoreMode,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            num_trees: 100,
            mtry: None,
            seed: 0,
            score_mode: ScoreMode::VoteFraction,
        }
    }
}

pub fn default_mtry(num_features: usize) -> usize {
    (num_features.max(1) as f64).log2().floor() as usize + 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub genuine_user: Option<u32>,
    pub training_rows: usize,
    pub genuine_rows: usize,
}

/// A trained forest. Immutable; prediction is a pure function of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub schema: FeatureSchema,
    pub params: ForestParams,
    pub meta: ModelMeta,
    trees: Vec<DecisionTree>,
}

impl RandomForest {
    /// Fits on matrix `x` with labels `y` (true = genuine). Tree `i` draws
    /// its bootstrap and feature choices from a stream keyed by
    /// `(seed, i)`, so training order does not affect the result.
    pub fn fit(x: &Matrix, y: &[bool], schema: FeatureSchema, params: ForestParams) -> Result<Self, ForestError> {
        if x.n_cols() != schema.len() || x.n_rows() != y.len() {
            return Err(ForestError::SchemaMismatch(format!(
                "{}x{} matrix, {} labels, {} schema features",
                x.n_rows(),
                x.n_cols(),
                y.len(),
                schema.len()
            )));
        }
        let pos = y.iter().filter(|&&g| g).count();
        let neg = y.len() - pos;
        if pos < 2 || neg < 2 {
            return Err(ForestError::DegenerateData(format!(
                "need at least 2 rows per class, have {pos} genuine and {neg} impostor"
            )));
        }
        if params.num_trees == 0 {
            return Err(ForestError::DegenerateData("num_trees must be positive".into()));
        }
        for r in 0..x.n_rows() {
            schema.check_row(x.row(r))?;
        }
        let kinds = schema.kinds();
        let mtry = params
            .mtry
            .unwrap_or_else(|| default_mtry(schema.len()))
            .clamp(1, schema.len());
        let n = x.n_rows();
        let trees = (0..params.num_trees)
            .into_par_iter()
            .map(|i| {
                let mut rng = rng_for(params.seed, &[TAG_TREE, i as u64]);
                let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                DecisionTree::grow(x, y, &kinds, rows, mtry, &mut rng)
            })
            .collect();
        Ok(Self {
            schema,
            params,
            meta: ModelMeta {
                genuine_user: None,
                training_rows: n,
                genuine_rows: pos,
            },
            trees,
        })
    }

    /// Assembles a forest from hand-built trees.
    pub fn from_trees(schema: FeatureSchema, params: ForestParams, trees: Vec<DecisionTree>) -> Self {
        Self {
            schema,
            params: ForestParams {
                num_trees: trees.len(),
                ..params
            },
            meta: ModelMeta {
                genuine_user: None,
                training_rows: 0,
                genuine_rows: 0,
            },
            trees,
        }
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn predict_proba(&self, row: &[f64]) -> Result<f64, ForestError> {
        self.schema.check_row(row)?;
        Ok(self.score_unchecked(row))
    }

    fn score_unchecked(&self, row: &[f64]) -> f64 {
        let sum: f64 = self
            .trees
            .iter()
            .map(|t| {
                let p = t.leaf_probability(row);
                match self.params.score_mode {
                    ScoreMode::MeanProbability => p,
                    ScoreMode::VoteFraction if p > 0.5 => 1.0,
                    ScoreMode::VoteFraction if p == 0.5 => 0.5,
                    ScoreMode::VoteFraction => 0.0,
                }
            })
            .sum();
        sum / self.trees.len() as f64
    }

    pub fn predict_features(&self, features: &ActionFeatures) -> Result<f64, ForestError> {
        self.predict_proba(&features.to_vector())
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Result<Vec<f64>, ForestError> {
        (0..x.n_rows()).map(|r| self.predict_proba(x.row(r))).collect()
    }

    pub fn save<W: Write>(&self, out: W) -> Result<(), ForestError> {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            schema_hash: self.schema.hash(),
            model: self.clone(),
        };
        serde_json::to_writer(out, &file).map_err(|e| ForestError::Persist(e.to_string()))
    }

    /// Loads a model and checks it against `expected`.
    pub fn load<R: Read>(input: R, expected: &FeatureSchema) -> Result<Self, ForestError> {
        let file: ModelFile = serde_json::from_reader(input).map_err(|e| ForestError::Persist(e.to_string()))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(ForestError::Persist(format!(
                "unsupported model format {} v{}",
                file.format, file.version
            )));
        }
        if file.schema_hash != file.model.schema.hash() {
            return Err(ForestError::Persist("schema hash does not match stored schema".into()));
        }
        if file.model.schema != *expected {
            return Err(ForestError::SchemaMismatch(format!(
                "model schema {} differs from expected {}",
                file.schema_hash,
                expected.hash()
            )));
        }
        Ok(file.model)
    }
}

const MODEL_FORMAT: &str = "mousedyn-forest";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    schema_hash: String,
    model: RandomForest,
}

/// Trains the per-user classifier on a balanced dataset.
pub fn train_forest(data: &UserDataset, params: ForestParams) -> Result<RandomForest, ForestError> {
    let (x, y) = data.to_matrix();
    let mut model = RandomForest::fit(&x, &y, FeatureSchema::action_features(), params)?;
    model.meta.genuine_user = Some(data.genuine_user);
    Ok(model)
}

/// Mean of per-action scores.
pub fn fuse_scores(scores: &[f64]) -> Result<f64, ForestError> {
    if scores.is_empty() {
        return Err(ForestError::EmptySet);
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Scores a set of actions as the mean of their genuine-class probabilities.
pub fn score_action_set(model: &RandomForest, actions: &[ActionFeatures]) -> Result<f64, ForestError> {
    let scores = actions
        .iter()
        .map(|a| model.predict_features(a))
        .collect::<Result<Vec<_>, _>>()?;
    fuse_scores(&scores)
}
