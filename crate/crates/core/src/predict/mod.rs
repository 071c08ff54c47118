//! Trajectory prediction with an extreme learning machine and great-circle
//! error evaluation.

mod elm;
mod segment;

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use elm::{solve_output_weights, train_elm, ElmModel, ElmParams};
pub use segment::{is_regular, segment, FeatureSet, Sample, Segmentation, SegmentationConfig};

use crate::model::{GeoPoint, Timestamp, Track, UnitConstants};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictError {
    #[error("sizing error: {0}")]
    Sizing(String),
    #[error("records {from}..={to} are not one minute apart")]
    Irregular { from: usize, to: usize },
}

/// Runs the trained model on one feature vector.
pub fn predict_position(model: &ElmModel, features: &[f64]) -> Result<GeoPoint, PredictError> {
    model.predict(features)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Minutes ahead to predict.
    pub horizon: usize,
    pub feature_len: usize,
    pub samples: usize,
    pub hidden: usize,
    pub ridge: f64,
    pub seed: u64,
    pub stride: usize,
    /// Histogram bin width, nautical miles.
    pub bin_width: f64,
    /// Train once at the first evaluation point instead of at every `t_c`.
    pub train_once: bool,
    pub features: FeatureSet,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            horizon: 20,
            feature_len: 10,
            samples: 200,
            hidden: 100,
            ridge: 0.0,
            seed: 0,
            stride: 1,
            bin_width: 0.5,
            train_once: false,
            features: FeatureSet::Positions,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.feature_len == 0 || self.samples == 0 || self.hidden == 0 || self.stride == 0 {
            return Err("predict: feature_len, samples, hidden and stride must be positive".into());
        }
        if !(self.ridge.is_finite() && self.ridge >= 0.0) {
            return Err(format!("predict.ridge must be >= 0, got {}", self.ridge));
        }
        if !(self.bin_width.is_finite() && self.bin_width > 0.0) {
            return Err(format!("predict.bin_width must be positive, got {}", self.bin_width));
        }
        Ok(())
    }

    fn elm_params(&self, current: usize) -> ElmParams {
        ElmParams { hidden: self.hidden, seed: derive_seed(self.seed, current as u64), ridge: self.ridge }
    }
}

/// SplitMix64 of the run seed and the evaluation index, so each `t_c` gets
/// its own stream regardless of evaluation order.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub t_c: usize,
    /// Time of the predicted position, `t_c + horizon`.
    pub t: Timestamp,
    pub real: GeoPoint,
    pub predicted: GeoPoint,
    pub error_nm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorHistogram {
    pub bin_width: f64,
    /// Bin index (lower edge = index * width) to prediction count.
    pub counts: BTreeMap<u64, u64>,
}

impl ErrorHistogram {
    pub fn from_errors(errors: impl IntoIterator<Item = f64>, bin_width: f64) -> Self {
        let mut counts = BTreeMap::new();
        for e in errors {
            *counts.entry((e / bin_width).floor() as u64).or_default() += 1;
        }
        ErrorHistogram { bin_width, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    /// `bin_start,bin_end,count` rows including empty bins up to the last
    /// occupied one.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_start_nm,bin_end_nm,count\n");
        if let Some(&last) = self.counts.keys().next_back() {
            for i in 0..=last {
                let c = self.counts.get(&i).copied().unwrap_or(0);
                let lo = i as f64 * self.bin_width;
                out.push_str(&format!("{},{},{}\n", lo, lo + self.bin_width, c));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub predictions: Vec<Prediction>,
    pub histogram: ErrorHistogram,
    /// Evaluation points skipped because their window spans a time gap.
    pub skipped: usize,
}

impl Evaluation {
    pub fn mean_error_nm(&self) -> f64 {
        if self.predictions.is_empty() {
            return f64::NAN;
        }
        self.predictions.iter().map(|p| p.error_nm).sum::<f64>() / self.predictions.len() as f64
    }
}

/// Slides `t_c` over the track in steps of `stride`, trains on the windows
/// behind it and scores the prediction of the position `horizon` minutes
/// later. Evaluation points run in parallel on the current rayon pool; the
/// result does not depend on the thread count.
pub fn evaluate_track(track: &Track, cfg: &EvalConfig) -> Result<Evaluation, PredictError> {
    evaluate_track_with(track, cfg, &UnitConstants::default())
}

pub fn evaluate_track_with(track: &Track, cfg: &EvalConfig, units: &UnitConstants) -> Result<Evaluation, PredictError> {
    cfg.validate().map_err(PredictError::Sizing)?;
    let first = SegmentationConfig::first_feasible(cfg.feature_len, cfg.horizon, cfg.samples);
    let needed = first + cfg.horizon + 1;
    if track.len() < needed {
        return Err(PredictError::Sizing(format!(
            "track has {} records, evaluation needs at least {} (t_p + l + s - 1 + t_p + 1)",
            track.len(),
            needed
        )));
    }
    let last = track.len() - 1 - cfg.horizon;
    let seg_cfg = |current| SegmentationConfig {
        feature_len: cfg.feature_len,
        horizon: cfg.horizon,
        samples: cfg.samples,
        current,
    };
    let points: Vec<usize> = (first..=last)
        .step_by(cfg.stride)
        .filter(|&tc| is_regular(track, seg_cfg(tc).earliest_index(), tc + cfg.horizon))
        .collect();
    let skipped = (first..=last).step_by(cfg.stride).count() - points.len();
    if points.is_empty() {
        return Err(PredictError::Sizing("no evaluation point has a gap-free window; clean the track first".into()));
    }

    let shared = if cfg.train_once {
        let seg = segment(track, &seg_cfg(points[0]), cfg.features)?;
        Some(train_elm(&seg.training, &cfg.elm_params(points[0]))?)
    } else {
        None
    };

    let predictions = points
        .par_iter()
        .map(|&tc| {
            let seg = segment(track, &seg_cfg(tc), cfg.features)?;
            let predicted = match &shared {
                Some(model) => model.predict(&seg.test_features)?,
                None => train_elm(&seg.training, &cfg.elm_params(tc))?.predict(&seg.test_features)?,
            };
            let actual = &track.records()[tc + cfg.horizon];
            Ok(Prediction {
                t_c: tc,
                t: actual.t,
                real: actual.pos,
                predicted,
                error_nm: units.km_to_nm(units.haversine_km(actual.pos, predicted)),
            })
        })
        .collect::<Result<Vec<_>, PredictError>>()?;
    let histogram = ErrorHistogram::from_errors(predictions.iter().map(|p| p.error_nm), cfg.bin_width);
    Ok(Evaluation { predictions, histogram, skipped })
}

/// Writes `errors.csv`, `histogram.csv` and `predicted_track.csv` into
/// `directory`.
pub fn write_evaluation(ev: &Evaluation, directory: &Path) -> io::Result<()> {
    fs::create_dir_all(directory)?;
    let mut errors = String::from("t_c,error_nm\n");
    let mut track = String::from("t_c,BASEDATETIME,real_lon,real_lat,pred_lon,pred_lat,error_nm\n");
    for p in &ev.predictions {
        errors.push_str(&format!("{},{}\n", p.t_c, p.error_nm));
        let t = p.t.encode().map_err(io::Error::other)?;
        track.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            p.t_c, t, p.real.lon, p.real.lat, p.predicted.lon, p.predicted.lat, p.error_nm
        ));
    }
    fs::write(directory.join("errors.csv"), errors)?;
    fs::write(directory.join("histogram.csv"), ev.histogram.to_csv())?;
    fs::write(directory.join("predicted_track.csv"), track)
}

#[cfg(test)]
mod tests;
