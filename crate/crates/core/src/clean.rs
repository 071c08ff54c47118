//! Speed-error correction and missing-position interpolation.
//!
//! Cleaning is two passes over a time-ordered track. The first sweeps left to
//! right and replaces any speed whose jump is not backed by the distance
//! actually travelled. The second looks for consecutive records more than
//! `missing_interval_min` apart and, when the distance covered at the earlier
//! speed implies a long enough transit, fills every missing minute by linear
//! interpolation in lon/lat.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{initial_bearing_deg, AisRecord, GeoPoint, Mmsi, Provenance, Timestamp, Track, UnitConstants};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CleanError {
    #[error("timestamps must be strictly increasing ({prev} then {cur})")]
    NonIncreasing { prev: Timestamp, cur: Timestamp },
}

/// How the course of an inserted record is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpolatedCog {
    /// Copy the earlier record's COG, like its SOG.
    #[default]
    CopyEarlier,
    /// Great-circle bearing from the earlier to the later record.
    ChordBearing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleanConfig {
    /// Knots.
    pub sog_jump_threshold: f64,
    pub distance_tolerance_km: f64,
    /// Minutes.
    pub missing_interval_min: i64,
    pub interp_ratio_threshold: f64,
    pub interpolated_cog: InterpolatedCog,
}

impl Default for CleanConfig {
    fn default() -> Self {
        CleanConfig {
            sog_jump_threshold: 15.0,
            distance_tolerance_km: 0.5,
            missing_interval_min: 1,
            interp_ratio_threshold: 2.0,
            interpolated_cog: InterpolatedCog::CopyEarlier,
        }
    }
}

impl CleanConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("sog_jump_threshold", self.sog_jump_threshold),
            ("distance_tolerance_km", self.distance_tolerance_km),
            ("interp_ratio_threshold", self.interp_ratio_threshold),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("clean.{name} must be positive, got {v}"));
            }
        }
        if self.missing_interval_min < 1 {
            return Err("clean.missing_interval_min must be at least 1".into());
        }
        Ok(())
    }
}

/// Two consecutive records further apart than the sampling interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingPair {
    pub earlier: AisRecord,
    pub later: AisRecord,
    pub gap_minutes: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CleanReport {
    pub mmsi: Option<Mmsi>,
    pub sog_corrections: usize,
    /// Indices into the input track of the records whose SOG was replaced.
    pub corrected_indices: Vec<usize>,
    pub pairs_found: usize,
    pub pairs_interpolated: usize,
    pub records_inserted: usize,
}

impl CleanReport {
    /// Total number of edits; zero means the track was already clean.
    pub fn changes(&self) -> usize {
        self.sog_corrections + self.records_inserted
    }
}

/// Speed check between two consecutive records.
///
/// A jump above the threshold is erroneous when the distance implied by the
/// new speed over the elapsed time disagrees with the great-circle distance by
/// more than the tolerance.
pub fn detect_sog_error(prev: &AisRecord, cur: &AisRecord, cfg: &CleanConfig) -> Result<bool, CleanError> {
    detect_sog_error_with(prev, cur, cfg, &UnitConstants::default())
}

pub fn detect_sog_error_with(
    prev: &AisRecord,
    cur: &AisRecord,
    cfg: &CleanConfig,
    units: &UnitConstants,
) -> Result<bool, CleanError> {
    let dt = cur.t.0 - prev.t.0;
    if dt <= 0 {
        return Err(CleanError::NonIncreasing { prev: prev.t, cur: cur.t });
    }
    if (cur.sog - prev.sog).abs() <= cfg.sog_jump_threshold {
        return Ok(false);
    }
    let implied = units.knots_to_km_per_min(cur.sog) * dt as f64;
    let actual = units.haversine_km(prev.pos, cur.pos);
    Ok((implied - actual).abs() > cfg.distance_tolerance_km)
}

/// Left-to-right sweep replacing erroneous speeds with the previous record's
/// (possibly already corrected) speed. Positions are never touched.
pub fn correct_sog_errors(track: &Track, cfg: &CleanConfig) -> (Track, CleanReport) {
    correct_sog_errors_with(track, cfg, &UnitConstants::default())
}

pub fn correct_sog_errors_with(track: &Track, cfg: &CleanConfig, units: &UnitConstants) -> (Track, CleanReport) {
    let mut recs = track.records().to_vec();
    let mut report = CleanReport { mmsi: Some(track.mmsi()), ..CleanReport::default() };
    for i in 1..recs.len() {
        let flagged =
            detect_sog_error_with(&recs[i - 1], &recs[i], cfg, units).expect("Track guarantees increasing timestamps");
        if flagged {
            recs[i].sog = recs[i - 1].sog;
            recs[i].provenance = Provenance::SpeedCorrected;
            report.corrected_indices.push(i);
        }
    }
    report.sog_corrections = report.corrected_indices.len();
    let out = Track::new(track.mmsi(), recs).expect("same timestamps as input");
    (out, report)
}

pub fn find_missing_pairs(track: &Track, cfg: &CleanConfig) -> Vec<MissingPair> {
    track
        .records()
        .windows(2)
        .filter_map(|w| {
            let gap = w[1].t.0 - w[0].t.0;
            (gap > cfg.missing_interval_min).then(|| MissingPair {
                earlier: w[0].clone(),
                later: w[1].clone(),
                gap_minutes: gap,
            })
        })
        .collect()
}

/// Distance of the pair divided by the earlier speed (km/min), compared with
/// the ratio threshold. A stationary earlier record never qualifies.
pub fn needs_interpolation(pair: &MissingPair, cfg: &CleanConfig) -> bool {
    needs_interpolation_with(pair, cfg, &UnitConstants::default())
}

pub fn needs_interpolation_with(pair: &MissingPair, cfg: &CleanConfig, units: &UnitConstants) -> bool {
    let speed = units.knots_to_km_per_min(pair.earlier.sog);
    if speed <= 0.0 {
        return false;
    }
    units.haversine_km(pair.earlier.pos, pair.later.pos) / speed > cfg.interp_ratio_threshold
}

/// One record per missing minute, linearly spaced between the pair.
pub fn interpolate_gap(pair: &MissingPair) -> Vec<AisRecord> {
    interpolate_gap_with(pair, InterpolatedCog::CopyEarlier)
}

pub fn interpolate_gap_with(pair: &MissingPair, cog_mode: InterpolatedCog) -> Vec<AisRecord> {
    let (a, b) = (pair.earlier.pos, pair.later.pos);
    let g = pair.gap_minutes;
    let cog = match cog_mode {
        InterpolatedCog::CopyEarlier => pair.earlier.cog,
        InterpolatedCog::ChordBearing => initial_bearing_deg(a, b),
    };
    (1..g)
        .map(|k| {
            let f = k as f64 / g as f64;
            AisRecord {
                pos: GeoPoint { lon: a.lon + (b.lon - a.lon) * f, lat: a.lat + (b.lat - a.lat) * f },
                cog,
                t: Timestamp(pair.earlier.t.0 + k),
                provenance: Provenance::Interpolated,
                ..pair.earlier.clone()
            }
        })
        .collect()
}

/// Speed correction followed by gap interpolation on the corrected track.
pub fn clean_track(track: &Track, cfg: &CleanConfig) -> (Track, CleanReport) {
    clean_track_with(track, cfg, &UnitConstants::default())
}

pub fn clean_track_with(track: &Track, cfg: &CleanConfig, units: &UnitConstants) -> (Track, CleanReport) {
    let (corrected, mut report) = correct_sog_errors_with(track, cfg, units);
    let pairs = find_missing_pairs(&corrected, cfg);
    report.pairs_found = pairs.len();
    if pairs.is_empty() {
        return (corrected, report);
    }

    let mut fills = pairs
        .iter()
        .filter(|p| needs_interpolation_with(p, cfg, units))
        .map(|p| (p.earlier.t, interpolate_gap_with(p, cfg.interpolated_cog)))
        .peekable();
    let src = corrected.into_records();
    let mut out = Vec::with_capacity(src.len());
    for rec in src {
        let t = rec.t;
        out.push(rec);
        if let Some((_, inserted)) = fills.next_if(|(start, _)| *start == t) {
            report.pairs_interpolated += 1;
            report.records_inserted += inserted.len();
            out.extend(inserted);
        }
    }
    (Track::new(track.mmsi(), out).expect("inserted minutes lie strictly inside gaps"), report)
}
