use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EvalError, EvalReport, Protocol, RocCurve, Scenario, ScoreSet};
use crate::features::ActionFeatures;
use crate::forest::{build_user_dataset, fuse_scores, train_forest, ForestParams, Matrix, RandomForest, UserDataset};
use crate::pipeline::{build_feature_corpus, FeatureConfig, SessionActions};
use crate::resample::ResampleConfig;
use crate::seed::{derive_seed, rng_for, TAG_FOLDS, TAG_MODEL, TAG_TRAIN};
use crate::segment::ActionKind;

/// Training-part features per user, each list in temporal order.
pub type UserFeatures = BTreeMap<u32, Vec<ActionFeatures>>;

/// A labeled test session claimed by `user_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSession {
    pub user_id: u32,
    pub session_id: String,
    pub genuine: bool,
    pub actions: Vec<ActionFeatures>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalParams {
    pub seed: u64,
    pub folds: usize,
    pub forest: ForestParams,
    /// Decision threshold for ACC, FNR and FPR.
    pub threshold: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            seed: 42,
            folds: 10,
            forest: ForestParams::default(),
            threshold: 0.5,
        }
    }
}

impl EvalParams {
    fn forest_for(&self, path: &[u64]) -> ForestParams {
        ForestParams {
            seed: derive_seed(self.seed, path),
            ..self.forest
        }
    }
}

/// Stratified fold index per label: each class is shuffled and dealt round
/// robin over `k` folds.
pub fn stratified_folds<R: rand::Rng>(labels: &[bool], k: usize, rng: &mut R) -> Vec<usize> {
    let mut folds = vec![0; labels.len()];
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(rng);
        for (pos, i) in idx.into_iter().enumerate() {
            folds[i] = pos % k;
        }
    }
    folds
}

/// Held-out scores of one user's cross-validation, in dataset row order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserCrossVal {
    pub user: u32,
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
    pub folds: Vec<usize>,
    /// SHA-256 of the fold assignment, one byte per row.
    pub fold_digest: String,
}

impl UserCrossVal {
    pub fn score_set(&self) -> ScoreSet {
        let mut s = ScoreSet::default();
        for (&score, &genuine) in self.scores.iter().zip(&self.labels) {
            if genuine {
                s.positives.push(score);
            } else {
                s.negatives.push(score);
            }
        }
        s
    }

    /// Held-out scores of one class within one fold, in row order.
    fn stream(&self, fold: usize, genuine: bool) -> Vec<f64> {
        (0..self.scores.len())
            .filter(|&i| self.folds[i] == fold && self.labels[i] == genuine)
            .map(|i| self.scores[i])
            .collect()
    }
}

fn filter_kind(features: &UserFeatures, kind: Option<ActionKind>) -> UserFeatures {
    features
        .iter()
        .map(|(u, rows)| {
            let rows = rows
                .iter()
                .filter(|f| kind.is_none_or(|k| f.kind == k))
                .cloned()
                .collect();
            (*u, rows)
        })
        .collect()
}

fn cross_validate_user(features: &UserFeatures, user: u32, params: &EvalParams) -> Result<UserCrossVal, EvalError> {
    let ds: UserDataset = build_user_dataset(features, user, params.seed)?;
    let (x, y) = ds.to_matrix();
    let per_class = y.iter().filter(|&&g| g).count().min(y.iter().filter(|&&g| !g).count());
    if per_class < params.folds {
        return Err(EvalError::InsufficientData {
            user,
            reason: format!("{per_class} rows per class, {} folds", params.folds),
        });
    }
    let mut rng = rng_for(params.seed, &[TAG_FOLDS, u64::from(user)]);
    let folds = stratified_folds(&y, params.folds, &mut rng);
    let mut scores = vec![0.0; y.len()];
    for fold in 0..params.folds {
        let (train, test): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| folds[i] != fold);
        let y_train: Vec<bool> = train.iter().map(|&i| y[i]).collect();
        let model = RandomForest::fit(
            &x.select(&train),
            &y_train,
            crate::forest::FeatureSchema::action_features(),
            params.forest_for(&[TAG_TRAIN, u64::from(user), fold as u64]),
        )?;
        for i in test {
            scores[i] = model.predict_proba(x.row(i))?;
        }
    }
    let digest = Sha256::digest(folds.iter().map(|&f| f as u8).collect::<Vec<u8>>());
    Ok(UserCrossVal {
        user,
        scores,
        labels: y,
        folds,
        fold_digest: format!("{digest:x}"),
    })
}

/// Stratified k-fold cross-validation of every user's balanced dataset,
/// optionally restricted to one action kind. Users are processed in
/// parallel; the result is ordered by user id.
pub fn cross_validate(
    features: &UserFeatures,
    kind: Option<ActionKind>,
    params: &EvalParams,
) -> Result<Vec<UserCrossVal>, EvalError> {
    let data = filter_kind(features, kind);
    let users: Vec<u32> = data.keys().copied().collect();
    if users.len() < 2 {
        return Err(crate::forest::ForestError::NotEnoughUsers(users.len()).into());
    }
    for (u, rows) in &data {
        if rows.len() < params.folds {
            return Err(EvalError::InsufficientData {
                user: *u,
                reason: format!("{} actions, {} folds", rows.len(), params.folds),
            });
        }
    }
    users
        .par_iter()
        .map(|&u| cross_validate_user(&data, u, params))
        .collect()
}

/// Mean or standard deviation of the per-user metrics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub acc: f64,
    pub auc: f64,
    pub eer: f64,
    pub fnr: f64,
    pub fpr: f64,
}

/// Mean and sample standard deviation over per-user reports.
pub fn summarize(reports: &[EvalReport]) -> (Summary, Summary) {
    let n = reports.len() as f64;
    let pick: [fn(&EvalReport) -> f64; 5] = [|r| r.acc, |r| r.auc, |r| r.eer, |r| r.fnr, |r| r.fpr];
    let mut mean = [0.0; 5];
    let mut std = [0.0; 5];
    for (k, f) in pick.iter().enumerate() {
        let vals: Vec<f64> = reports.iter().map(f).collect();
        let m = vals.iter().sum::<f64>() / n;
        mean[k] = m;
        std[k] = if reports.len() > 1 {
            (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
    }
    let to = |a: [f64; 5]| Summary {
        acc: a[0],
        auc: a[1],
        eer: a[2],
        fnr: a[3],
        fpr: a[4],
    };
    (to(mean), to(std))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioAReport {
    pub kind: Option<ActionKind>,
    pub per_user: Vec<EvalReport>,
    pub mean: Summary,
    pub std: Summary,
    /// Fold assignment digest per user.
    pub fold_digests: BTreeMap<u32, String>,
}

/// Builds the per-user table and summary rows from cross-validation output.
pub fn scenario_a_report(
    cv: &[UserCrossVal],
    kind: Option<ActionKind>,
    params: &EvalParams,
) -> Result<ScenarioAReport, EvalError> {
    let per_user = cv
        .iter()
        .map(|c| {
            EvalReport::from_scores(
                &c.score_set(),
                params.threshold,
                Scenario::A,
                Protocol::Action,
                Some(c.user),
            )
            .map(|r| r.0)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (mean, std) = summarize(&per_user);
    Ok(ScenarioAReport {
        kind,
        per_user,
        mean,
        std,
        fold_digests: cv.iter().map(|c| (c.user, c.fold_digest.clone())).collect(),
    })
}

/// Per-user action-based cross-validation on the training part.
pub fn scenario_a_action(features: &UserFeatures, params: &EvalParams) -> Result<ScenarioAReport, EvalError> {
    let cv = cross_validate(features, None, params)?;
    scenario_a_report(&cv, None, params)
}

/// As [`scenario_a_action`] with every dataset restricted to `kind`.
pub fn scenario_a_by_type(
    features: &UserFeatures,
    kind: ActionKind,
    params: &EvalParams,
) -> Result<ScenarioAReport, EvalError> {
    let cv = cross_validate(features, Some(kind), params)?;
    scenario_a_report(&cv, Some(kind), params)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetRow {
    pub k: usize,
    pub auc: f64,
    pub eer: f64,
    pub n_positive: usize,
    pub n_negative: usize,
}

/// Fused scores of consecutive non-overlapping windows of `k`; a trailing
/// partial window is dropped.
pub fn window_scores(stream: &[f64], k: usize) -> Vec<f64> {
    stream
        .chunks_exact(k)
        .map(|w| fuse_scores(w).expect("chunks are non-empty"))
        .collect()
}

/// Global AUC/EER per window size over held-out fold streams. Windows never
/// cross a fold or user boundary.
pub fn action_set_table(cv: &[UserCrossVal], ks: &[usize], folds: usize) -> Result<Vec<SetRow>, EvalError> {
    ks.iter()
        .map(|&k| {
            let pooled = pooled_window_scores(cv, k, folds);
            let roc = super::compute_roc(&pooled)?;
            Ok(SetRow {
                k,
                auc: roc.auc,
                eer: roc.eer,
                n_positive: pooled.positives.len(),
                n_negative: pooled.negatives.len(),
            })
        })
        .collect()
}

/// Window scores of every (user, fold, class) stream, pooled over users.
pub fn pooled_window_scores(cv: &[UserCrossVal], k: usize, folds: usize) -> ScoreSet {
    let mut pooled = ScoreSet::default();
    for c in cv {
        for fold in 0..folds {
            pooled.positives.extend(window_scores(&c.stream(fold, true), k));
            pooled.negatives.extend(window_scores(&c.stream(fold, false), k));
        }
    }
    pooled
}

pub fn scenario_a_action_set(
    features: &UserFeatures,
    ks: &[usize],
    params: &EvalParams,
) -> Result<Vec<SetRow>, EvalError> {
    let cv = cross_validate(features, None, params)?;
    action_set_table(&cv, ks, params.folds)
}

/// One model per user, each trained on that user's balanced dataset built
/// from the whole training part.
pub fn train_user_models(train: &UserFeatures, params: &EvalParams) -> Result<BTreeMap<u32, RandomForest>, EvalError> {
    let users: Vec<u32> = train.iter().filter(|(_, v)| !v.is_empty()).map(|(u, _)| *u).collect();
    users
        .par_iter()
        .map(|&u| {
            let ds = build_user_dataset(train, u, params.seed)?;
            let model = train_forest(&ds, params.forest_for(&[TAG_MODEL, u64::from(u)]))?;
            Ok((u, model))
        })
        .collect::<Result<Vec<_>, EvalError>>()
        .map(|v| v.into_iter().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioBReport {
    pub global: EvalReport,
    /// Per claimed user; filled for the action protocol.
    pub per_user: Vec<EvalReport>,
    pub mean: Option<Summary>,
    pub std: Option<Summary>,
    pub scores: ScoreSet,
    pub roc: RocCurve,
    /// Sessions too short for one window.
    pub skipped_sessions: usize,
}

fn score_sessions(models: &BTreeMap<u32, RandomForest>, sessions: &[TestSession]) -> Result<Vec<Vec<f64>>, EvalError> {
    sessions
        .par_iter()
        .map(|s| {
            let model = models.get(&s.user_id).ok_or(EvalError::NoModelForUser(s.user_id))?;
            let x = Matrix::new(
                s.actions.iter().flat_map(|a| a.to_vector()).collect(),
                crate::features::NUM_FEATURES,
            );
            if s.actions.is_empty() {
                return Ok(Vec::new());
            }
            Ok(model.predict_matrix(&x)?)
        })
        .collect()
}

/// Scores labeled test sessions with the claimed user's model.
pub fn scenario_b(
    models: &BTreeMap<u32, RandomForest>,
    sessions: &[TestSession],
    protocol: Protocol,
    threshold: f64,
) -> Result<ScenarioBReport, EvalError> {
    if sessions.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let per_session = score_sessions(models, sessions)?;
    let mut pooled = ScoreSet::default();
    let mut by_user: BTreeMap<u32, ScoreSet> = BTreeMap::new();
    let mut skipped = 0;
    for (s, scores) in sessions.iter().zip(&per_session) {
        let fused: Vec<f64> = match protocol {
            Protocol::Action => scores.clone(),
            Protocol::ActionSet(k) => window_scores(scores, k),
            Protocol::Session if scores.is_empty() => Vec::new(),
            Protocol::Session => vec![fuse_scores(scores)?],
        };
        if fused.is_empty() {
            skipped += 1;
            continue;
        }
        let (all, user) = (&mut pooled, by_user.entry(s.user_id).or_default());
        if s.genuine {
            all.positives.extend(&fused);
            user.positives.extend(&fused);
        } else {
            all.negatives.extend(&fused);
            user.negatives.extend(&fused);
        }
    }
    if pooled.positives.is_empty() || pooled.negatives.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let (global, roc) = EvalReport::from_scores(&pooled, threshold, Scenario::B, protocol, None)?;
    let mut per_user = Vec::new();
    if protocol == Protocol::Action {
        for (u, s) in &by_user {
            if s.positives.is_empty() || s.negatives.is_empty() {
                log::warn!("user {u}: test scores lack one class; no per-user report");
                continue;
            }
            per_user.push(EvalReport::from_scores(s, threshold, Scenario::B, protocol, Some(*u))?.0);
        }
    }
    let (mean, std) = if per_user.is_empty() {
        (None, None)
    } else {
        let (m, s) = summarize(&per_user);
        (Some(m), Some(s))
    };
    Ok(ScenarioBReport {
        global,
        per_user,
        mean,
        std,
        scores: pooled,
        roc,
        skipped_sessions: skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingRow {
    pub resample: ResampleConfig,
    pub report: EvalReport,
}

/// Session-protocol scenario B once per resampling configuration.
pub fn smoothing_experiment(
    sessions: &[SessionActions],
    configs: &[ResampleConfig],
    sharp_threshold: f64,
    params: &EvalParams,
) -> Result<Vec<SmoothingRow>, EvalError> {
    configs
        .iter()
        .map(|cfg| {
            let fc = FeatureConfig {
                resample: *cfg,
                sharp_threshold,
            };
            let corpus = build_feature_corpus(sessions, &fc).map_err(|e| match e {
                crate::pipeline::PipelineError::Feature { source, .. } => EvalError::Feature(source),
                crate::pipeline::PipelineError::Resample { source, .. } => EvalError::Resample(source),
            })?;
            let models = train_user_models(&corpus.training, params)?;
            let report = scenario_b(&models, &corpus.test, Protocol::Session, params.threshold)?.global;
            Ok(SmoothingRow { resample: *cfg, report })
        })
        .collect()
}
