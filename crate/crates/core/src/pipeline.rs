//! Glue from cleaned sessions to per-action features.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eval::{TestSession, UserFeatures};
use crate::features::{extract_features, ActionFeatures, FeatureError, DEFAULT_SHARP_THRESHOLD, NUM_FEATURES};
use crate::forest::{build_user_dataset, gain_ratio_ranking, FeatureSchema, ForestError, Label, Matrix, UserDataset};
use crate::ingest::{Session, SessionRole};
use crate::resample::{resample, ResampleConfig, ResampleError};
use crate::segment::{action_type_histogram, segment, ActionHistogram, MouseAction, SegmentConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionActions {
    pub user_id: u32,
    pub session_id: String,
    pub role: SessionRole,
    pub actions: Vec<MouseAction>,
}

pub fn segment_corpus(sessions: &[Session], cfg: &SegmentConfig) -> Vec<SessionActions> {
    sessions
        .par_iter()
        .map(|s| SessionActions {
            user_id: s.user_id,
            session_id: s.session_id.clone(),
            role: s.role,
            actions: segment(s, cfg),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub resample: ResampleConfig,
    pub sharp_threshold: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            resample: ResampleConfig::default(),
            sharp_threshold: DEFAULT_SHARP_THRESHOLD,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{session}: {source}")]
    Feature {
        session: String,
        #[source]
        source: FeatureError,
    },
    #[error("{session}: {source}")]
    Resample {
        session: String,
        #[source]
        source: ResampleError,
    },
}

/// Resamples (when configured) and extracts features for every action of a
/// session. `genuine` follows the session role.
pub fn session_features(sa: &SessionActions, cfg: &FeatureConfig) -> Result<Vec<ActionFeatures>, PipelineError> {
    sa.actions
        .iter()
        .map(|a| {
            let r = resample(a, &cfg.resample).map_err(|source| PipelineError::Resample {
                session: sa.session_id.clone(),
                source,
            })?;
            let mut f = extract_features(&r.action, cfg.sharp_threshold).map_err(|source| PipelineError::Feature {
                session: sa.session_id.clone(),
                source,
            })?;
            f.genuine = sa.role.is_genuine();
            Ok(f)
        })
        .collect()
}

/// Training actions grouped by user plus labeled test sessions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureCorpus {
    pub training: UserFeatures,
    pub test: Vec<TestSession>,
}

pub fn build_feature_corpus(sessions: &[SessionActions], cfg: &FeatureConfig) -> Result<FeatureCorpus, PipelineError> {
    let per_session = sessions
        .par_iter()
        .map(|sa| session_features(sa, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let mut corpus = FeatureCorpus::default();
    for (sa, feats) in sessions.iter().zip(per_session) {
        match sa.role {
            SessionRole::Training => corpus.training.entry(sa.user_id).or_default().extend(feats),
            role => corpus.test.push(TestSession {
                user_id: sa.user_id,
                session_id: sa.session_id.clone(),
                genuine: role.is_genuine(),
                actions: feats,
            }),
        }
    }
    Ok(corpus)
}

/// Regroups feature rows (e.g. read back from CSV) into training users.
pub fn group_by_user(rows: Vec<ActionFeatures>) -> UserFeatures {
    let mut out: UserFeatures = BTreeMap::new();
    for r in rows {
        out.entry(r.user_id).or_default().push(r);
    }
    out
}

/// Regroups test feature rows into sessions, keeping first-seen order.
pub fn group_test_sessions(rows: Vec<ActionFeatures>) -> Vec<TestSession> {
    let mut order: Vec<(u32, String)> = Vec::new();
    let mut map: BTreeMap<(u32, String), TestSession> = BTreeMap::new();
    for r in rows {
        let key = (r.user_id, r.session_id.clone());
        let entry = map.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            TestSession {
                user_id: r.user_id,
                session_id: r.session_id.clone(),
                genuine: r.genuine,
                actions: Vec::new(),
            }
        });
        entry.actions.push(r);
    }
    order.into_iter().filter_map(|k| map.remove(&k)).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub training: ActionHistogram,
    pub test: ActionHistogram,
    /// Training-part histogram per user.
    pub per_user: BTreeMap<u32, ActionHistogram>,
}

pub fn corpus_stats(sessions: &[SessionActions]) -> CorpusStats {
    let mut stats = CorpusStats::default();
    for sa in sessions {
        let h = action_type_histogram(&sa.actions);
        if sa.role.is_test() {
            stats.test += h;
        } else {
            stats.training += h;
            *stats.per_user.entry(sa.user_id).or_default() += h;
        }
    }
    stats
}

/// Class variable for feature ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RankTarget {
    /// Gain ratio on each user's balanced dataset, averaged over users.
    #[default]
    PerUserMean,
    /// Genuine/impostor rows of every user's balanced dataset, pooled.
    PooledBinary,
    /// User identity over all training actions.
    User,
}

fn rows_matrix<'a>(rows: impl Iterator<Item = &'a ActionFeatures>) -> Matrix {
    Matrix::new(rows.flat_map(|f| f.to_vector()).collect(), NUM_FEATURES)
}

/// Gain-ratio ranking of the 39 features, best first, ties by name.
pub fn rank_features(train: &UserFeatures, target: RankTarget, seed: u64) -> Result<Vec<(String, f64)>, ForestError> {
    let schema = FeatureSchema::action_features();
    let binary =
        |ds: &UserDataset| -> Vec<usize> { ds.rows.iter().map(|(_, l)| usize::from(*l == Label::Genuine)).collect() };
    match target {
        RankTarget::User => {
            let x = rows_matrix(train.values().flatten());
            let classes: Vec<usize> = train
                .values()
                .enumerate()
                .flat_map(|(i, r)| std::iter::repeat_n(i, r.len()))
                .collect();
            Ok(gain_ratio_ranking(&x, &classes, &schema))
        }
        RankTarget::PooledBinary => {
            let sets = train
                .keys()
                .map(|&u| build_user_dataset(train, u, seed))
                .collect::<Result<Vec<_>, _>>()?;
            let x = rows_matrix(sets.iter().flat_map(|d| d.rows.iter().map(|(f, _)| f)));
            let classes: Vec<usize> = sets.iter().flat_map(binary).collect();
            Ok(gain_ratio_ranking(&x, &classes, &schema))
        }
        RankTarget::PerUserMean => {
            let per_user = train
                .keys()
                .collect::<Vec<_>>()
                .par_iter()
                .map(|&&u| {
                    let ds = build_user_dataset(train, u, seed)?;
                    let x = rows_matrix(ds.rows.iter().map(|(f, _)| f));
                    Ok(gain_ratio_ranking(&x, &binary(&ds), &schema))
                })
                .collect::<Result<Vec<_>, ForestError>>()?;
            let mut sums: BTreeMap<String, f64> = BTreeMap::new();
            for ranking in &per_user {
                for (name, g) in ranking {
                    *sums.entry(name.clone()).or_default() += g;
                }
            }
            let n = per_user.len().max(1) as f64;
            let mut out: Vec<(String, f64)> = sums.into_iter().map(|(k, v)| (k, v / n)).collect();
            out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            Ok(out)
        }
    }
}
