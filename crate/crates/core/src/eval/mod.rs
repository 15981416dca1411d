//! Metrics and the evaluation protocols.
//!
//! Scenario A cross-validates per-user classifiers on the training part only.
//! Scenario B trains on the training part and scores the labeled test
//! sessions, one action, a window of actions or a whole session at a time.

mod metrics;
mod protocols;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureError;
use crate::forest::ForestError;
use crate::resample::ResampleError;

pub use metrics::{auc_rank, compute_roc, rates_at, RocCurve, RocPoint, ScoreSet, ThresholdRates};
pub use protocols::{
    action_set_table, cross_validate, pooled_window_scores, scenario_a_action, scenario_a_action_set,
    scenario_a_by_type, scenario_a_report, scenario_b, smoothing_experiment, stratified_folds, summarize,
    train_user_models, window_scores, EvalParams, ScenarioAReport, ScenarioBReport, SetRow, SmoothingRow, Summary,
    TestSession, UserCrossVal, UserFeatures,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("score lists must both be non-empty (positives {positives}, negatives {negatives})")]
    EmptyScoreList { positives: usize, negatives: usize },
    #[error("insufficient data for user {user}: {reason}")]
    InsufficientData { user: u32, reason: String },
    #[error("no model for user {0}")]
    NoModelForUser(u32),
    #[error("no scorable test sessions")]
    EmptyTestSet,
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Resample(#[from] ResampleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scope {
    PerUser,
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Protocol {
    Action,
    /// Non-overlapping windows of `k` consecutive actions.
    ActionSet(usize),
    Session,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Protocol::Action => f.write_str("action"),
            Protocol::ActionSet(k) => write!(f, "set:{k}"),
            Protocol::Session => f.write_str("session"),
        }
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "action" => Ok(Protocol::Action),
            "session" => Ok(Protocol::Session),
            other => match other.strip_prefix("set:").map(str::parse::<usize>) {
                Some(Ok(k)) if k > 0 => Ok(Protocol::ActionSet(k)),
                _ => Err(format!("unknown protocol `{other}` (action|set:<k>|session)")),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    A,
    B,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::A => "A",
            Scenario::B => "B",
        })
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" | "a" => Ok(Scenario::A),
            "B" | "b" => Ok(Scenario::B),
            other => Err(format!("unknown scenario `{other}` (A|B)")),
        }
    }
}

/// Metrics for one score set. Rates are fractions in [0, 1]; ACC, FNR and FPR
/// use the decision threshold, AUC and EER are threshold-free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenario: Scenario,
    pub protocol: Protocol,
    pub scope: Scope,
    pub user: Option<u32>,
    pub acc: f64,
    pub auc: f64,
    pub eer: f64,
    /// Threshold where FPR = FNR on this score set.
    pub eer_threshold: f64,
    pub fnr: f64,
    pub fpr: f64,
    pub n_positive: usize,
    pub n_negative: usize,
}

impl EvalReport {
    pub fn from_scores(
        scores: &ScoreSet,
        threshold: f64,
        scenario: Scenario,
        protocol: Protocol,
        user: Option<u32>,
    ) -> Result<(Self, RocCurve), EvalError> {
        let roc = compute_roc(scores)?;
        let rates = rates_at(scores, threshold)?;
        let report = EvalReport {
            scenario,
            protocol,
            scope: if user.is_some() { Scope::PerUser } else { Scope::Global },
            user,
            acc: rates.acc,
            auc: roc.auc,
            eer: roc.eer,
            eer_threshold: roc.eer_threshold,
            fnr: rates.fnr,
            fpr: rates.fpr,
            n_positive: scores.positives.len(),
            n_negative: scores.negatives.len(),
        };
        Ok((report, roc))
    }
}
