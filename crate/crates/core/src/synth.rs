//! Synthetic tracks and defect injection.
//!
//! Motion is generated in the lon/lat chart frame: each step has a direction
//! in degree space, and its length is chosen so that the ground distance at the
//! local latitude equals the speed for one minute (111.320 km per degree,
//! scaled by `cos(lat)` for longitude). Linear tracks keep one chart
//! direction, arcs rotate it by `turn_rate` every minute and random walks draw
//! a fresh uniform direction every minute. Working in the chart frame keeps
//! the turn cosines of an arc exactly constant, which is what route
//! complexity measures.

use std::f64::consts::TAU;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AisRecord, GeoPoint, Mmsi, Provenance, Timestamp, Track};
use crate::screen::NoiseClass;

/// Ground kilometres per degree of latitude (and of longitude at the equator).
pub const KM_PER_DEGREE: f64 = 111.320;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("index {index} out of range for a track of {len} records")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("a speed spike needs a previous record; index 0 has none")]
    SpikeAtStart,
    #[error("gap of {minutes} minutes starting at {start} would remove an endpoint of a {len}-record track")]
    GapTooLarge { start: usize, minutes: usize, len: usize },
    #[error("generated position left the valid lon/lat range at minute {0}")]
    OutOfRange(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    Linear,
    Arc,
    RandomWalk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub length_minutes: usize,
    pub speed_knots: f64,
    pub start: GeoPoint,
    /// Initial true course, degrees clockwise from north.
    pub heading: f64,
    /// Rotation of the chart-frame direction per minute, degrees (arcs only).
    pub turn_rate: f64,
    pub seed: u64,
    pub mmsi: Mmsi,
    pub start_time: Timestamp,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            kind: SynthKind::Linear,
            length_minutes: 600,
            speed_knots: 20.0,
            start: GeoPoint { lon: -123.0, lat: 40.0 },
            heading: 0.0,
            turn_rate: 1.0,
            seed: 0,
            mmsi: Mmsi::new(100_000_000).expect("valid"),
            start_time: Timestamp::from_ymd_hm(2009, 2, 1, 0, 0).expect("valid"),
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        if self.length_minutes < 3 {
            return bad("length_minutes must be at least 3");
        }
        if !(self.speed_knots.is_finite() && self.speed_knots >= 0.0) {
            return bad("speed_knots must be finite and non-negative");
        }
        if !self.heading.is_finite() || !self.turn_rate.is_finite() {
            return bad("heading and turn_rate must be finite");
        }
        GeoPoint::new(self.start.lon, self.start.lat).map(|_| ()).map_err(|e| SynthError::InvalidSpec(e.to_string()))
    }
}

/// True course of a chart-frame step taken at latitude `lat`.
fn true_course(dlon: f64, dlat: f64, lat: f64) -> f64 {
    let c = (dlon * lat.to_radians().cos()).atan2(dlat).to_degrees().rem_euclid(360.0);
    if c >= 360.0 {
        0.0
    } else {
        c
    }
}

pub fn generate(spec: &SynthSpec) -> Result<Track, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let km_per_min = crate::model::knots_to_km_per_min(spec.speed_knots);
    let h = spec.heading.to_radians();
    let mut angle = (h.sin() / spec.start.lat.to_radians().cos()).atan2(h.cos());
    let turn = spec.turn_rate.to_radians();

    let mut points = Vec::with_capacity(spec.length_minutes);
    let mut courses = Vec::with_capacity(spec.length_minutes);
    let mut p = spec.start;
    points.push(p);
    for step in 0..spec.length_minutes - 1 {
        match spec.kind {
            SynthKind::Linear => {}
            SynthKind::Arc if step > 0 => angle += turn,
            SynthKind::Arc => {}
            SynthKind::RandomWalk => angle = rng.random_range(0.0..TAU),
        }
        let (ux, uy) = (angle.sin(), angle.cos());
        let coslat = p.lat.to_radians().cos();
        let ground_per_unit = KM_PER_DEGREE * (ux * ux * coslat * coslat + uy * uy).sqrt();
        let len = if ground_per_unit > 0.0 { km_per_min / ground_per_unit } else { 0.0 };
        let (dlon, dlat) = (ux * len, uy * len);
        courses.push(true_course(dlon, dlat, p.lat));
        p = GeoPoint::new(p.lon + dlon, p.lat + dlat).map_err(|_| SynthError::OutOfRange(step + 1))?;
        points.push(p);
    }
    courses.push(*courses.last().expect("length >= 3"));

    let records = points
        .into_iter()
        .zip(courses)
        .enumerate()
        .map(|(i, (pos, cog))| AisRecord {
            mmsi: spec.mmsi,
            pos,
            sog: spec.speed_knots,
            cog,
            rot: Some(0.0),
            t: Timestamp(spec.start_time.0 + i as i64),
            vessel_type: None,
            provenance: Provenance::Raw,
        })
        .collect();
    Ok(Track::new(spec.mmsi, records).expect("minute-regular by construction"))
}

/// Adds `magnitude` knots to the SOG of record `at`.
pub fn inject_sog_spike(track: &Track, at: usize, magnitude: f64) -> Result<Track, SynthError> {
    if at >= track.len() {
        return Err(SynthError::IndexOutOfRange { index: at, len: track.len() });
    }
    if at == 0 {
        return Err(SynthError::SpikeAtStart);
    }
    let mut recs = track.records().to_vec();
    let sog = recs[at].sog + magnitude;
    if !(sog.is_finite() && sog >= 0.0) {
        return Err(SynthError::InvalidSpec(format!("spike would make SOG {sog}")));
    }
    recs[at].sog = sog;
    Ok(Track::new(track.mmsi(), recs).expect("timestamps unchanged"))
}

/// Removes the records between `start` and `start + minutes`, so that on a
/// minute-regular track the surviving pair is `minutes` apart.
pub fn inject_gap(track: &Track, start: usize, minutes: usize) -> Result<Track, SynthError> {
    if minutes == 0 || start + minutes >= track.len() {
        return Err(SynthError::GapTooLarge { start, minutes, len: track.len() });
    }
    let mut recs = track.records().to_vec();
    recs.drain(start + 1..start + minutes);
    Ok(Track::new(track.mmsi(), recs).expect("subsequence of an increasing track"))
}

/// Shifts every record from `at` onward by `dlat` degrees, creating a single
/// long step between `at - 1` and `at`.
pub fn inject_jump(track: &Track, at: usize, dlat: f64) -> Result<Track, SynthError> {
    if at == 0 || at >= track.len() {
        return Err(SynthError::IndexOutOfRange { index: at, len: track.len() });
    }
    let mut recs = track.records().to_vec();
    for (i, r) in recs.iter_mut().enumerate().skip(at) {
        r.pos = GeoPoint::new(r.pos.lon, r.pos.lat + dlat).map_err(|_| SynthError::OutOfRange(i))?;
    }
    Ok(Track::new(track.mmsi(), recs).expect("timestamps unchanged"))
}

/// Keeps every `every`-th record, producing a sparsely sampled track.
pub fn decimate(track: &Track, every: usize) -> Result<Track, SynthError> {
    if every == 0 {
        return Err(SynthError::InvalidSpec("decimation factor must be positive".into()));
    }
    let recs = track.records().iter().step_by(every).cloned().collect();
    Ok(Track::new(track.mmsi(), recs).expect("subsequence of an increasing track"))
}

/// What a corpus track was built to look like.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub noise_class: NoiseClass,
    pub accepted: bool,
    /// Indices (in the injected track) of SOG spikes.
    pub spikes: Vec<usize>,
    /// Gap lengths in minutes, in track order.
    pub gaps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusTrack {
    pub track: Track,
    pub truth: GroundTruth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub tracks: usize,
    pub records_per_track: usize,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec { tracks: 16, records_per_track: 1000, seed: 7 }
    }
}

/// Builds a mixed corpus with known defects. Every defect exceeds its
/// detection threshold by at least a factor of two.
///
/// Track `i` is, by `i % 8`: 0..=2 linear with speed spikes and gaps, 3 an arc
/// with spikes, 4 a random walk (tangled), 5 linear with a ~67 km jump
/// (discontinuous), 6 an arc sampled every 8 minutes (loose), 7 a short linear
/// track with a fifth of the records.
pub fn corpus(spec: &CorpusSpec) -> Result<Vec<CorpusTrack>, SynthError> {
    let n = spec.records_per_track;
    if n < 40 {
        return Err(SynthError::InvalidSpec("records_per_track must be at least 40".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.tracks);
    for i in 0..spec.tracks {
        let base = SynthSpec {
            kind: SynthKind::Linear,
            length_minutes: n,
            speed_knots: rng.random_range(12.0..25.0),
            start: GeoPoint { lon: rng.random_range(-125.5..-120.5), lat: rng.random_range(32.0..48.0) },
            heading: rng.random_range(0.0..360.0),
            turn_rate: 0.25,
            seed: rng.random(),
            mmsi: Mmsi::new(200_000_000 + i as u32).expect("nine digits"),
            start_time: Timestamp::from_ymd_hm(2009, 2, 1, 0, 0).expect("valid"),
        };
        let defects = |track: Track,
                       rng: &mut ChaCha8Rng,
                       with_gaps: bool|
         -> Result<(Track, Vec<usize>, Vec<usize>), SynthError> {
            let mut spikes = Vec::new();
            let mut t = track;
            let mut at = rng.random_range(5..15);
            while at < n / 2 {
                t = inject_sog_spike(&t, at, 82.0)?;
                spikes.push(at);
                at += rng.random_range(n / 10..n / 4).max(3);
            }
            let mut gaps = Vec::new();
            if with_gaps {
                let mut start = n / 2 + rng.random_range(1..10);
                while start + 10 < t.len() {
                    let minutes = rng.random_range(4..=6);
                    t = inject_gap(&t, start, minutes)?;
                    gaps.push(minutes);
                    start += rng.random_range(n / 10..n / 4).max(8);
                }
            }
            Ok((t, spikes, gaps))
        };
        let (track, truth) = match i % 8 {
            0..=2 => {
                let (t, spikes, gaps) = defects(generate(&base)?, &mut rng, true)?;
                (t, GroundTruth { noise_class: NoiseClass::Clean, accepted: n >= 500, spikes, gaps })
            }
            3 => {
                let (t, spikes, gaps) =
                    defects(generate(&SynthSpec { kind: SynthKind::Arc, ..base })?, &mut rng, false)?;
                (t, GroundTruth { noise_class: NoiseClass::Clean, accepted: n >= 500, spikes, gaps })
            }
            4 => (
                generate(&SynthSpec { kind: SynthKind::RandomWalk, ..base })?,
                GroundTruth { noise_class: NoiseClass::Tangled, accepted: false, spikes: vec![], gaps: vec![] },
            ),
            5 => (
                inject_jump(&generate(&base)?, n / 2, 0.6)?,
                GroundTruth { noise_class: NoiseClass::Discontinuous, accepted: false, spikes: vec![], gaps: vec![] },
            ),
            6 => (
                decimate(&generate(&SynthSpec { kind: SynthKind::Arc, length_minutes: n * 8, ..base })?, 8)?,
                GroundTruth { noise_class: NoiseClass::Loose, accepted: false, spikes: vec![], gaps: vec![] },
            ),
            _ => (
                generate(&SynthSpec { length_minutes: n / 5, ..base })?,
                GroundTruth { noise_class: NoiseClass::Clean, accepted: n / 5 >= 500, spikes: vec![], gaps: vec![] },
            ),
        };
        out.push(CorpusTrack { track, truth });
    }
    Ok(out)
}

/// Writes tracks as one raw CSV in (time, MMSI) order, the way a provider
/// extract is laid out.
pub fn write_raw_csv<'a, W: Write>(tracks: impl IntoIterator<Item = &'a Track>, out: W) -> std::io::Result<()> {
    let mut rows: Vec<&AisRecord> = tracks.into_iter().flat_map(|t| t.records()).collect();
    rows.sort_by_key(|r| (r.t, r.mmsi));
    let mut w = std::io::BufWriter::new(out);
    writeln!(w, "XCoord,YCoord,SOG,COG,ROT,BASEDATETIME,MMSI")?;
    for r in rows {
        let t = r.t.encode().map_err(std::io::Error::other)?;
        let rot = r.rot.map(|v| v.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{},{},{},{},{}", r.pos.lon, r.pos.lat, r.sog, r.cog, rot, t, r.mmsi)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clean::{detect_sog_error, find_missing_pairs, interpolate_gap, CleanConfig};
    use crate::model::{displacement_cos, haversine_km, knots_to_km_per_min};
    use crate::screen::{classify_noise, route_complexity, ScreenConfig};

    #[test]
    fn linear_is_straight_and_consistent() {
        let spec = SynthSpec { heading: 37.0, ..SynthSpec::default() };
        let t = generate(&spec).unwrap();
        assert_eq!(t.len(), 600);
        assert!(t.is_minute_regular());
        assert!((route_complexity(&t).unwrap().unwrap() - 1.0).abs() < 1e-9);
        let v = knots_to_km_per_min(20.0);
        for w in t.records().windows(2) {
            let d = haversine_km(w[0].pos, w[1].pos);
            assert!((d / v - 1.0).abs() < 0.01, "{d} vs {v}");
        }
        assert!((t.records()[0].cog - 37.0).abs() < 1e-9);
    }

    #[test]
    fn arc_has_constant_turn() {
        let spec = SynthSpec { kind: SynthKind::Arc, length_minutes: 360, ..SynthSpec::default() };
        let t = generate(&spec).unwrap();
        let expected = 1.0f64.to_radians().cos();
        for w in t.records().windows(3) {
            let c = displacement_cos(w[0].pos, w[1].pos, w[2].pos).unwrap();
            assert!((c - expected).abs() < 1e-9);
        }
        let c = route_complexity(&t).unwrap().unwrap();
        assert!((c - expected).abs() < 1e-9 && c > 0.8);
        let v = knots_to_km_per_min(20.0);
        for w in t.records().windows(2) {
            assert!((haversine_km(w[0].pos, w[1].pos) / v - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn random_walk_is_tangled() {
        let spec = SynthSpec { kind: SynthKind::RandomWalk, seed: 3, ..SynthSpec::default() };
        let t = generate(&spec).unwrap();
        assert!(route_complexity(&t).unwrap().unwrap().abs() < 0.2);
        assert_eq!(classify_noise(&t, &ScreenConfig::default()).unwrap(), NoiseClass::Tangled);
        assert_eq!(generate(&spec).unwrap(), t);
    }

    #[test]
    fn invalid_specs() {
        assert!(generate(&SynthSpec { length_minutes: 2, ..SynthSpec::default() }).is_err());
        assert!(generate(&SynthSpec { speed_knots: -1.0, ..SynthSpec::default() }).is_err());
        let north = SynthSpec { start: GeoPoint { lon: 0.0, lat: 89.9 }, speed_knots: 60.0, ..SynthSpec::default() };
        assert!(matches!(generate(&north), Err(SynthError::OutOfRange(_))));
    }

    #[test]
    fn spikes() {
        let t = generate(&SynthSpec::default()).unwrap();
        let cfg = CleanConfig::default();
        let s = inject_sog_spike(&t, 1, 82.0).unwrap();
        assert!(detect_sog_error(&s.records()[0], &s.records()[1], &cfg).unwrap());
        let s = inject_sog_spike(&t, 1, 10.0).unwrap();
        assert!(!detect_sog_error(&s.records()[0], &s.records()[1], &cfg).unwrap());
        assert_eq!(inject_sog_spike(&t, 0, 82.0), Err(SynthError::SpikeAtStart));
        assert!(inject_sog_spike(&t, 600, 82.0).is_err());
    }

    #[test]
    fn gaps() {
        let t = generate(&SynthSpec::default()).unwrap();
        let cfg = CleanConfig::default();
        let g = inject_gap(&t, 10, 4).unwrap();
        let pairs = find_missing_pairs(&g, &cfg);
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].gap_minutes, 4);
        assert_eq!(inject_gap(&t, 10, 1).unwrap(), t);
        assert!(find_missing_pairs(&inject_gap(&t, 10, 1).unwrap(), &cfg).is_empty());
        assert!(inject_gap(&t, 595, 5).is_err());

        // due east keeps the degree steps uniform, so the chord is exact
        let east = generate(&SynthSpec { heading: 90.0, ..SynthSpec::default() }).unwrap();
        let g = inject_gap(&east, 100, 6).unwrap();
        let pair = &find_missing_pairs(&g, &cfg)[0];
        for (k, r) in interpolate_gap(pair).iter().enumerate() {
            let truth = &east.records()[101 + k];
            assert_eq!(r.t, truth.t);
            assert!((r.pos.lon - truth.pos.lon).abs() < 1e-9);
            assert!((r.pos.lat - truth.pos.lat).abs() < 1e-9);
        }
    }

    #[test]
    fn corpus_is_deterministic_and_labelled() {
        let spec = CorpusSpec { tracks: 16, records_per_track: 600, seed: 11 };
        let a = corpus(&spec).unwrap();
        assert_eq!(a, corpus(&spec).unwrap());
        let cfg = ScreenConfig::default();
        for c in &a {
            assert_eq!(classify_noise(&c.track, &cfg).unwrap(), c.truth.noise_class, "{}", c.track.mmsi());
        }
        let mut buf = Vec::new();
        write_raw_csv(a.iter().map(|c| &c.track), &mut buf).unwrap();
        let rows = String::from_utf8(buf).unwrap().lines().count() - 1;
        assert_eq!(rows, a.iter().map(|c| c.track.len()).sum::<usize>());
    }
}
