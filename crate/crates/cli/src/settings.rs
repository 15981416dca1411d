//! Optional TOML file for knobs that have no dedicated flag.

use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use mousedyn::features::DEFAULT_SHARP_THRESHOLD;
use mousedyn::ingest::{CleanConfig, DedupMode, LoadOptions, TokenMode, UnlabeledPolicy};
use mousedyn::SegmentConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub max_x: u32,
    pub max_y: u32,
    pub strict_tokens: bool,
    /// Dedup on same coordinates instead of identical records.
    pub dedup_same_coordinates: bool,
    /// Skip test sessions missing from the labels file instead of failing.
    pub skip_unlabeled: bool,
    pub gap_threshold: f64,
    pub min_events: usize,
    pub sharp_threshold: f64,
    pub folds: usize,
    pub threshold: f64,
}

impl Default for Settings {
    fn default() -> Self {
        let clean = CleanConfig::default();
        let seg = SegmentConfig::default();
        Self {
            max_x: clean.max_x,
            max_y: clean.max_y,
            strict_tokens: true,
            dedup_same_coordinates: false,
            skip_unlabeled: true,
            gap_threshold: seg.gap_threshold,
            min_events: seg.min_events,
            sharp_threshold: DEFAULT_SHARP_THRESHOLD,
            folds: 10,
            threshold: 0.5,
        }
    }
}

impl Settings {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn load_options(&self, training_only: bool) -> LoadOptions {
        LoadOptions {
            clean: CleanConfig {
                max_x: self.max_x,
                max_y: self.max_y,
                dedup: if self.dedup_same_coordinates {
                    DedupMode::SameCoordinates
                } else {
                    DedupMode::ExactRecord
                },
            },
            tokens: if self.strict_tokens {
                TokenMode::Strict
            } else {
                TokenMode::Lenient
            },
            unlabeled: if self.skip_unlabeled {
                UnlabeledPolicy::Skip
            } else {
                UnlabeledPolicy::Error
            },
            training_only,
        }
    }

    pub fn segment_config(&self) -> SegmentConfig {
        SegmentConfig {
            gap_threshold: self.gap_threshold,
            min_events: self.min_events,
        }
    }
}
