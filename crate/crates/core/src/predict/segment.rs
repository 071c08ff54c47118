//! Sliding-window sample segmentation.
//!
//! With current index `t_c`, horizon `t_p`, window length `l` and `s` training
//! samples, training sample `k` takes the `l` records ending at
//! `t_c - t_p - k` as features and the position at `t_c - k` as target. The
//! test features are the `l` records ending at `t_c`. Nothing after `t_c` is
//! ever read.

use serde::{Deserialize, Serialize};

use super::PredictError;
use crate::model::{GeoPoint, Track};

/// Which per-minute quantities make up a feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    /// lon, lat per minute: `2l` values.
    #[default]
    Positions,
    /// lon, lat, SOG, COG per minute: `4l` values.
    PositionsAndKinematics,
}

impl FeatureSet {
    pub fn per_minute(self) -> usize {
        match self {
            FeatureSet::Positions => 2,
            FeatureSet::PositionsAndKinematics => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    /// Window length `l`, minutes.
    pub feature_len: usize,
    /// Prediction horizon `t_p`, minutes.
    pub horizon: usize,
    /// Number of training samples `s`.
    pub samples: usize,
    /// Current index `t_c` into the track.
    pub current: usize,
}

impl SegmentationConfig {
    /// Smallest `t_c` for which every training window fits.
    pub fn first_feasible(feature_len: usize, horizon: usize, samples: usize) -> usize {
        horizon + feature_len + samples.saturating_sub(1)
    }

    /// Index of the oldest record any window touches.
    pub fn earliest_index(&self) -> usize {
        self.current + 1 - self.horizon - self.feature_len - (self.samples - 1)
    }

    fn check(&self, track_len: usize) -> Result<(), PredictError> {
        if self.feature_len == 0 || self.samples == 0 {
            return Err(PredictError::Sizing("feature length and sample count must be positive".into()));
        }
        let needed = Self::first_feasible(self.feature_len, self.horizon, self.samples);
        if self.current < needed {
            return Err(PredictError::Sizing(format!(
                "t_c={} needs at least {} minutes of history (t_p + l + s - 1), short by {}",
                self.current,
                needed,
                needed - self.current
            )));
        }
        if self.current >= track_len {
            return Err(PredictError::Sizing(format!(
                "t_c={} is past the end of a {}-record track",
                self.current, track_len
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub target: GeoPoint,
    /// Track index of the target.
    pub target_index: usize,
    /// Track indices covered by the features, oldest first.
    pub feature_range: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub training: Vec<Sample>,
    pub test_features: Vec<f64>,
    pub test_range: (usize, usize),
}

fn window(track: &Track, last: usize, len: usize, set: FeatureSet) -> Vec<f64> {
    let mut out = Vec::with_capacity(len * set.per_minute());
    for r in &track.records()[last + 1 - len..=last] {
        out.push(r.pos.lon);
        out.push(r.pos.lat);
        if set == FeatureSet::PositionsAndKinematics {
            out.push(r.sog);
            out.push(r.cog);
        }
    }
    out
}

/// True when records `lo..=hi` are one minute apart.
pub fn is_regular(track: &Track, lo: usize, hi: usize) -> bool {
    let recs = track.records();
    recs[hi].t.0 - recs[lo].t.0 == (hi - lo) as i64
}

pub fn segment(track: &Track, cfg: &SegmentationConfig, set: FeatureSet) -> Result<Segmentation, PredictError> {
    cfg.check(track.len())?;
    let lo = cfg.earliest_index();
    if !is_regular(track, lo, cfg.current) {
        return Err(PredictError::Irregular { from: lo, to: cfg.current });
    }
    let l = cfg.feature_len;
    let training: Vec<Sample> = (0..cfg.samples)
        .map(|k| {
            let last = cfg.current - cfg.horizon - k;
            let target_index = cfg.current - k;
            Sample {
                features: window(track, last, l, set),
                target: track.records()[target_index].pos,
                target_index,
                feature_range: (last + 1 - l, last),
            }
        })
        .collect();
    let test_range = (cfg.current + 1 - l, cfg.current);
    debug_assert!(training.iter().all(|s| s.target_index <= cfg.current && s.feature_range.1 <= cfg.current));
    Ok(Segmentation { training, test_features: window(track, cfg.current, l, set), test_range })
}
