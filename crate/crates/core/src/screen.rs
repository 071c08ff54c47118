//! Trajectory selection: longest navigation run, route complexity and the
//! three noisy-trajectory classes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{displacement_cos, AisRecord, Mmsi, Track, UnitConstants};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScreenError {
    #[error("route complexity needs at least 3 records, track has {0}")]
    TooFewRecords(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScreenConfig {
    /// Minimum length of the longest nonzero-SOG run.
    pub min_run: usize,
    /// Tracks at or below this mean turn cosine are tangled.
    pub complexity_threshold: f64,
    /// A single step longer than this marks the track discontinuous.
    pub gap_km_threshold: f64,
    /// Mean step length above this marks the track loose.
    pub loose_mean_spacing_km: f64,
}

impl Default for ScreenConfig {
    fn default() -> Self {
        ScreenConfig { min_run: 500, complexity_threshold: 0.8, gap_km_threshold: 10.0, loose_mean_spacing_km: 2.0 }
    }
}

impl ScreenConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(format!("screen.{name} must be positive, got {v}"))
            }
        };
        if self.min_run == 0 {
            return Err("screen.min_run must be positive".into());
        }
        positive("complexity_threshold", self.complexity_threshold)?;
        positive("gap_km_threshold", self.gap_km_threshold)?;
        positive("loose_mean_spacing_km", self.loose_mean_spacing_km)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NoiseClass {
    Clean,
    Discontinuous,
    Loose,
    Tangled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenReport {
    pub mmsi: Mmsi,
    pub records: usize,
    pub longest_nav_run: usize,
    /// Mean turn cosine; `None` when the track is too short or never moves.
    pub complexity: Option<f64>,
    /// `None` for tracks with fewer than 3 records.
    pub noise_class: Option<NoiseClass>,
    pub accepted: bool,
}

/// Maximal runs of records with nonzero SOG as `(start, len)`.
pub fn navigation_runs(track: &Track) -> Vec<(usize, usize)> {
    runs_of(track.records(), |r| r.sog != 0.0)
}

fn runs_of(records: &[AisRecord], pred: impl Fn(&AisRecord) -> bool) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, r) in records.iter().enumerate() {
        match (pred(r), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i - s));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, records.len() - s));
    }
    runs
}

pub fn longest_navigation_run(track: &Track) -> usize {
    navigation_runs(track).iter().map(|&(_, len)| len).max().unwrap_or(0)
}

/// Mean turn cosine over interior points. Points where a displacement has
/// zero length are skipped; `Ok(None)` if none remain.
pub fn route_complexity(track: &Track) -> Result<Option<f64>, ScreenError> {
    let recs = track.records();
    if recs.len() < 3 {
        return Err(ScreenError::TooFewRecords(recs.len()));
    }
    let (sum, n) = recs
        .windows(3)
        .filter_map(|w| displacement_cos(w[0].pos, w[1].pos, w[2].pos))
        .fold((0.0, 0usize), |(s, n), c| (s + c, n + 1));
    Ok((n > 0).then(|| sum / n as f64))
}

struct Spacing {
    max_km: f64,
    mean_km: f64,
}

fn spacing(track: &Track, units: &UnitConstants) -> Spacing {
    let steps: Vec<f64> = track.records().windows(2).map(|w| units.haversine_km(w[0].pos, w[1].pos)).collect();
    let max_km = steps.iter().copied().fold(0.0, f64::max);
    let mean_km = if steps.is_empty() { 0.0 } else { steps.iter().sum::<f64>() / steps.len() as f64 };
    Spacing { max_km, mean_km }
}

fn classify(spacing: &Spacing, complexity: Option<f64>, cfg: &ScreenConfig) -> NoiseClass {
    if spacing.max_km > cfg.gap_km_threshold {
        NoiseClass::Discontinuous
    } else if spacing.mean_km > cfg.loose_mean_spacing_km {
        NoiseClass::Loose
    } else {
        match complexity {
            Some(c) if c > cfg.complexity_threshold => NoiseClass::Clean,
            // a track that never moves has no defined complexity
            _ => NoiseClass::Tangled,
        }
    }
}

/// Noise class, checked in order: discontinuous, loose, tangled, clean.
pub fn classify_noise(track: &Track, cfg: &ScreenConfig) -> Result<NoiseClass, ScreenError> {
    classify_noise_with(track, cfg, &UnitConstants::default())
}

pub fn classify_noise_with(
    track: &Track,
    cfg: &ScreenConfig,
    units: &UnitConstants,
) -> Result<NoiseClass, ScreenError> {
    let complexity = route_complexity(track)?;
    Ok(classify(&spacing(track, units), complexity, cfg))
}

pub fn screen_track(track: &Track, cfg: &ScreenConfig) -> ScreenReport {
    screen_track_with(track, cfg, &UnitConstants::default())
}

pub fn screen_track_with(track: &Track, cfg: &ScreenConfig, units: &UnitConstants) -> ScreenReport {
    let longest_nav_run = longest_navigation_run(track);
    let (complexity, noise_class) = match route_complexity(track) {
        Ok(c) => (c, Some(classify(&spacing(track, units), c, cfg))),
        Err(ScreenError::TooFewRecords(_)) => (None, None),
    };
    let accepted = longest_nav_run >= cfg.min_run
        && complexity.is_some_and(|c| c > cfg.complexity_threshold)
        && noise_class == Some(NoiseClass::Clean);
    ScreenReport { mmsi: track.mmsi(), records: track.len(), longest_nav_run, complexity, noise_class, accepted }
}
