//! Domain types shared by every stage, plus the small amount of geodesy the
//! pipeline needs (great-circle distance, turn cosines, unit conversions).

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius used by the great-circle formula.
pub const EARTH_RADIUS_KM: f64 = 6371.0;
/// Kilometres per nautical mile.
pub const KM_PER_NAUTICAL_MILE: f64 = 1.852;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid position lon={lon} lat={lat}")]
    InvalidPoint { lon: f64, lat: f64 },
    #[error("invalid timestamp {0:?}: expected 12 digits YYYYMMDDHHMM")]
    InvalidTimestamp(String),
    #[error("timestamp {0} minutes is outside the encodable range")]
    TimestampRange(i64),
    #[error("invalid MMSI {0:?}: expected 9 digits")]
    InvalidMmsi(String),
}

/// A position in decimal degrees. `lon` is the x axis, `lat` the y axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self, ModelError> {
        if lon.is_finite() && lat.is_finite() && (-180.0..=180.0).contains(&lon) && (-90.0..=90.0).contains(&lat) {
            Ok(GeoPoint { lon, lat })
        } else {
            Err(ModelError::InvalidPoint { lon, lat })
        }
    }
}

/// Minutes since 1970-01-01 00:00, the resolution of the AIS source data.
///
/// The text form is the 12-digit `YYYYMMDDHHMM` used in the `BASEDATETIME`
/// column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Timestamp(pub i64);

impl TryFrom<String> for Timestamp {
    type Error = ModelError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Timestamp::decode(&s)
    }
}

impl From<Timestamp> for String {
    fn from(t: Timestamp) -> String {
        t.to_string()
    }
}

impl Timestamp {
    pub fn minutes(self) -> i64 {
        self.0
    }

    pub fn from_ymd_hm(year: i32, month: u32, day: u32, hour: u32, minute: u32) -> Result<Self, ModelError> {
        let invalid = || ModelError::InvalidTimestamp(format!("{year:04}{month:02}{day:02}{hour:02}{minute:02}"));
        if !(0..=9999).contains(&year) {
            return Err(invalid());
        }
        let dt = NaiveDate::from_ymd_opt(year, month, day)
            .and_then(|d| d.and_hms_opt(hour, minute, 0))
            .ok_or_else(invalid)?;
        Ok(Timestamp(dt.and_utc().timestamp().div_euclid(60)))
    }

    pub fn decode(text: &str) -> Result<Self, ModelError> {
        let bytes = text.as_bytes();
        if bytes.len() != 12 || !bytes.iter().all(u8::is_ascii_digit) {
            return Err(ModelError::InvalidTimestamp(text.to_string()));
        }
        let num = |range: std::ops::Range<usize>| -> u32 {
            bytes[range].iter().fold(0, |acc, b| acc * 10 + u32::from(b - b'0'))
        };
        Self::from_ymd_hm(num(0..4) as i32, num(4..6), num(6..8), num(8..10), num(10..12))
            .map_err(|_| ModelError::InvalidTimestamp(text.to_string()))
    }

    pub fn encode(self) -> Result<String, ModelError> {
        let dt = chrono::DateTime::UNIX_EPOCH
            .naive_utc()
            .checked_add_signed(chrono::TimeDelta::minutes(self.0))
            .filter(|dt| (0..=9999).contains(&dt.year()))
            .ok_or(ModelError::TimestampRange(self.0))?;
        Ok(format!("{:04}{:02}{:02}{:02}{:02}", dt.year(), dt.month(), dt.day(), dt.hour(), dt.minute()))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.encode() {
            Ok(s) => f.write_str(&s),
            Err(_) => write!(f, "t+{}min", self.0),
        }
    }
}

/// Maritime Mobile Service Identity. Always nine digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Mmsi(u32);

impl TryFrom<u32> for Mmsi {
    type Error = ModelError;

    fn try_from(v: u32) -> Result<Self, Self::Error> {
        Mmsi::new(v)
    }
}

impl From<Mmsi> for u32 {
    fn from(m: Mmsi) -> u32 {
        m.0
    }
}

impl Mmsi {
    pub fn new(value: u32) -> Result<Self, ModelError> {
        if (100_000_000..=999_999_999).contains(&value) {
            Ok(Mmsi(value))
        } else {
            Err(ModelError::InvalidMmsi(value.to_string()))
        }
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

impl FromStr for Mmsi {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.len() != 9 || !t.bytes().all(|b| b.is_ascii_digit()) {
            return Err(ModelError::InvalidMmsi(s.to_string()));
        }
        t.parse::<u32>().map_err(|_| ModelError::InvalidMmsi(s.to_string())).and_then(Mmsi::new)
    }
}

impl fmt::Display for Mmsi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:09}", self.0)
    }
}

/// Where a record came from. Parsing only ever produces `Raw`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Provenance {
    #[default]
    Raw,
    SpeedCorrected,
    Interpolated,
}

impl Provenance {
    /// Label used in the annotated CSV `PROVENANCE` column.
    pub fn label(self) -> &'static str {
        match self {
            Provenance::Raw => "RAW",
            Provenance::SpeedCorrected => "CORRECTED",
            Provenance::Interpolated => "INTERP",
        }
    }
}

/// One position report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AisRecord {
    pub mmsi: Mmsi,
    pub pos: GeoPoint,
    /// Speed over ground, knots.
    pub sog: f64,
    /// Course over ground, degrees.
    pub cog: f64,
    /// Rate of turn, carried through untouched.
    pub rot: Option<f64>,
    pub t: Timestamp,
    pub vessel_type: Option<String>,
    pub provenance: Provenance,
}

/// Time-ordered reports of one vessel.
///
/// Constructed through [`Track::new`], which checks the shared MMSI and the
/// strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    mmsi: Mmsi,
    records: Vec<AisRecord>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackError {
    #[error("record {index} has MMSI {found}, track is {expected}")]
    MixedMmsi { index: usize, expected: Mmsi, found: Mmsi },
    #[error("timestamps not strictly increasing at record {index} ({prev} then {cur})")]
    NotIncreasing { index: usize, prev: Timestamp, cur: Timestamp },
}

impl Track {
    pub fn new(mmsi: Mmsi, records: Vec<AisRecord>) -> Result<Self, TrackError> {
        for (index, r) in records.iter().enumerate() {
            if r.mmsi != mmsi {
                return Err(TrackError::MixedMmsi { index, expected: mmsi, found: r.mmsi });
            }
            if index > 0 && records[index - 1].t >= r.t {
                return Err(TrackError::NotIncreasing { index, prev: records[index - 1].t, cur: r.t });
            }
        }
        Ok(Track { mmsi, records })
    }

    pub fn mmsi(&self) -> Mmsi {
        self.mmsi
    }

    pub fn records(&self) -> &[AisRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<AisRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Returns true when every consecutive pair is exactly one minute apart.
    pub fn is_minute_regular(&self) -> bool {
        self.records.windows(2).all(|w| w[1].t.0 - w[0].t.0 == 1)
    }
}

/// Physical constants, overridable through configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnitConstants {
    pub earth_radius_km: f64,
    pub km_per_nautical_mile: f64,
}

impl Default for UnitConstants {
    fn default() -> Self {
        UnitConstants { earth_radius_km: EARTH_RADIUS_KM, km_per_nautical_mile: KM_PER_NAUTICAL_MILE }
    }
}

impl UnitConstants {
    /// Haversine great-circle distance in kilometres.
    pub fn haversine_km(&self, a: GeoPoint, b: GeoPoint) -> f64 {
        let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
        let dphi = phi2 - phi1;
        let dpsi = (b.lon - a.lon).to_radians();
        let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dpsi / 2.0).sin().powi(2);
        // rounding can push h a hair above 1 for antipodal points
        2.0 * self.earth_radius_km * h.sqrt().min(1.0).asin()
    }

    pub fn knots_to_km_per_min(&self, sog: f64) -> f64 {
        sog * self.km_per_nautical_mile / 60.0
    }

    pub fn km_to_nm(&self, km: f64) -> f64 {
        km / self.km_per_nautical_mile
    }
}

/// Haversine distance with the default Earth radius.
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    UnitConstants::default().haversine_km(a, b)
}

/// Converts knots to kilometres per minute.
pub fn knots_to_km_per_min(sog: f64) -> f64 {
    UnitConstants::default().knots_to_km_per_min(sog)
}

/// Cosine of the turn at `p_cur` between the incoming and outgoing
/// displacement vectors, computed on raw lon/lat differences.
///
/// Returns `None` when either displacement has zero length.
pub fn displacement_cos(p_prev: GeoPoint, p_cur: GeoPoint, p_next: GeoPoint) -> Option<f64> {
    let (ax, ay) = (p_cur.lon - p_prev.lon, p_cur.lat - p_prev.lat);
    let (bx, by) = (p_next.lon - p_cur.lon, p_next.lat - p_cur.lat);
    let na = ax.hypot(ay);
    let nb = bx.hypot(by);
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some(((ax * bx + ay * by) / (na * nb)).clamp(-1.0, 1.0))
}

/// Initial great-circle bearing from `a` to `b`, degrees in [0, 360).
pub fn initial_bearing_deg(a: GeoPoint, b: GeoPoint) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dpsi = (b.lon - a.lon).to_radians();
    let y = dpsi.sin() * phi2.cos();
    let x = phi1.cos() * phi2.sin() - phi1.sin() * phi2.cos() * dpsi.cos();
    let deg = y.atan2(x).to_degrees().rem_euclid(360.0);
    if deg >= 360.0 {
        0.0
    } else {
        deg
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(lon: f64, lat: f64) -> GeoPoint {
        GeoPoint::new(lon, lat).unwrap()
    }

    /// Central angle from the 3-D unit vectors; shares no code with the
    /// haversine path.
    fn vector_oracle_km(a: GeoPoint, b: GeoPoint) -> f64 {
        let v = |g: GeoPoint| {
            let (lo, la) = (g.lon.to_radians(), g.lat.to_radians());
            [la.cos() * lo.cos(), la.cos() * lo.sin(), la.sin()]
        };
        let (u, w) = (v(a), v(b));
        let cross = [u[1] * w[2] - u[2] * w[1], u[2] * w[0] - u[0] * w[2], u[0] * w[1] - u[1] * w[0]];
        let cn = (cross[0].powi(2) + cross[1].powi(2) + cross[2].powi(2)).sqrt();
        let dot = u[0] * w[0] + u[1] * w[1] + u[2] * w[2];
        EARTH_RADIUS_KM * cn.atan2(dot)
    }

    #[test]
    fn haversine_identity_and_quarter_meridian() {
        assert_eq!(haversine_km(p(-120.0, 34.0), p(-120.0, 34.0)), 0.0);
        let q = haversine_km(p(0.0, 0.0), p(0.0, 90.0));
        assert!((q - EARTH_RADIUS_KM * std::f64::consts::FRAC_PI_2).abs() < 1e-9);
        assert!((q - 10007.543398).abs() < 1e-5);
    }

    #[test]
    fn haversine_missing_pair_distance() {
        let a = p(-124.9991, 43.2833);
        let b = p(-124.999217, 43.298783);
        // frozen from vector_oracle_km
        let expected = 1.7216570920477783;
        assert!((haversine_km(a, b) - expected).abs() < 1e-9);
        assert!((vector_oracle_km(a, b) - expected).abs() < 1e-9);
    }

    #[test]
    fn displacement_cos_examples() {
        assert_eq!(displacement_cos(p(0., 0.), p(1., 0.), p(2., 0.)), Some(1.0));
        assert_eq!(displacement_cos(p(0., 0.), p(1., 0.), p(1., 1.)), Some(0.0));
        assert_eq!(displacement_cos(p(0., 0.), p(1., 0.), p(0., 0.)), Some(-1.0));
        assert_eq!(displacement_cos(p(0., 0.), p(0., 0.), p(1., 0.)), None);
        assert_eq!(displacement_cos(p(0., 0.), p(1., 0.), p(1., 0.)), None);
    }

    #[test]
    fn knots_conversion() {
        assert_eq!(knots_to_km_per_min(0.0), 0.0);
        assert!((knots_to_km_per_min(60.0) - 1.852).abs() < 1e-15);
        assert!((knots_to_km_per_min(20.0) - 0.617_333_333_333).abs() < 1e-12);
    }

    #[test]
    fn timestamp_codec() {
        let t = Timestamp::decode("200902012013").unwrap();
        assert_eq!(t, Timestamp::from_ymd_hm(2009, 2, 1, 20, 13).unwrap());
        assert_eq!(t.encode().unwrap(), "200902012013");
        let t2 = Timestamp::decode("200902011311").unwrap();
        let t1 = Timestamp::decode("200902011307").unwrap();
        assert_eq!(t2.0 - t1.0, 4);
        for bad in [
            "20090201201",
            "2009020120134",
            "200913012013",
            "200902302013",
            "200902012413",
            "200902012060",
            "2009020120a3",
            "",
        ] {
            assert!(Timestamp::decode(bad).is_err(), "{bad}");
        }
        assert!(Timestamp::decode("201202292359").is_ok());
        assert!(Timestamp::decode("201302290000").is_err());
    }

    #[test]
    fn geopoint_validation() {
        assert!(GeoPoint::new(-180.0, 90.0).is_ok());
        assert!(GeoPoint::new(180.1, 0.0).is_err());
        assert!(GeoPoint::new(0.0, -90.5).is_err());
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn mmsi_parse() {
        assert_eq!("235844000".parse::<Mmsi>().unwrap().get(), 235844000);
        assert!("23584400".parse::<Mmsi>().is_err());
        assert!("2358440001".parse::<Mmsi>().is_err());
        assert!("23584400x".parse::<Mmsi>().is_err());
    }

    #[test]
    fn track_invariants() {
        let m = Mmsi::new(235844000).unwrap();
        let rec = |t: i64| AisRecord {
            mmsi: m,
            pos: p(-120.0, 34.0),
            sog: 1.0,
            cog: 0.0,
            rot: None,
            t: Timestamp(t),
            vessel_type: None,
            provenance: Provenance::Raw,
        };
        assert!(Track::new(m, vec![rec(1), rec(2)]).is_ok());
        assert!(matches!(Track::new(m, vec![rec(2), rec(2)]), Err(TrackError::NotIncreasing { index: 1, .. })));
        let mut other = rec(3);
        other.mmsi = Mmsi::new(111111111).unwrap();
        assert!(matches!(Track::new(m, vec![rec(1), other]), Err(TrackError::MixedMmsi { index: 1, .. })));
    }

    fn point() -> impl Strategy<Value = GeoPoint> {
        (-180.0f64..=180.0, -90.0f64..=90.0).prop_map(|(lon, lat)| GeoPoint { lon, lat })
    }

    proptest! {
        #[test]
        fn haversine_symmetric(a in point(), b in point()) {
            prop_assert_eq!(haversine_km(a, b), haversine_km(b, a));
        }

        #[test]
        fn haversine_triangle(a in point(), b in point(), c in point()) {
            prop_assert!(haversine_km(a, c) <= haversine_km(a, b) + haversine_km(b, c) + 1e-9);
        }

        #[test]
        fn displacement_cos_translation_and_scale(
            pts in prop::array::uniform6(-10.0f64..10.0),
            dx in -50.0f64..50.0, dy in -30.0f64..30.0,
            s1 in 0.01f64..100.0, s2 in 0.01f64..100.0,
        ) {
            let (a, b, c) = (p(pts[0], pts[1]), p(pts[2], pts[3]), p(pts[4], pts[5]));
            let base = displacement_cos(a, b, c);
            let shifted = displacement_cos(
                p(a.lon + dx, a.lat + dy), p(b.lon + dx, b.lat + dy), p(c.lon + dx, c.lat + dy));
            // scale the incoming and outgoing vectors independently
            let a2 = GeoPoint { lon: b.lon - (b.lon - a.lon) * s1, lat: b.lat - (b.lat - a.lat) * s1 };
            let c2 = GeoPoint { lon: b.lon + (c.lon - b.lon) * s2, lat: b.lat + (c.lat - b.lat) * s2 };
            let scaled = displacement_cos(a2, b, c2);
            if let (Some(v), Some(sh), Some(sc)) = (base, shifted, scaled) {
                prop_assert!((sh - v).abs() < 1e-9);
                prop_assert!((sc - v).abs() < 1e-9);
            }
        }

        #[test]
        fn timestamp_round_trip(y in 2009i32..=2014, mo in 1u32..=12, d in 1u32..=31,
                                h in 0u32..24, mi in 0u32..60) {
            let text = format!("{y:04}{mo:02}{d:02}{h:02}{mi:02}");
            match Timestamp::decode(&text) {
                Ok(t) => prop_assert_eq!(t.encode().unwrap(), text),
                Err(_) => prop_assert!(NaiveDate::from_ymd_opt(y, mo, d).is_none()),
            }
        }
    }
}
