//! Categorical summaries of a trajectory database: COG and SOG statuses,
//! route-length types, vessel types and interpolation counts.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clean::CleanReport;
use crate::model::{Mmsi, Track};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("SOG must be a non-negative number, got {0}")]
    NegativeSog(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CogStatus {
    North,
    Northeast,
    East,
    Southeast,
    South,
    Southwest,
    West,
    Northwest,
    Invalid,
}

impl CogStatus {
    pub const ALL: [CogStatus; 9] = [
        CogStatus::North,
        CogStatus::Northeast,
        CogStatus::East,
        CogStatus::Southeast,
        CogStatus::South,
        CogStatus::Southwest,
        CogStatus::West,
        CogStatus::Northwest,
        CogStatus::Invalid,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SogStatus {
    Slow,
    Medium,
    High,
    VeryHigh,
    Exception,
}

impl SogStatus {
    pub const ALL: [SogStatus; 5] =
        [SogStatus::Slow, SogStatus::Medium, SogStatus::High, SogStatus::VeryHigh, SogStatus::Exception];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RouteType {
    BelowRange,
    Short,
    Medium,
    Long,
    Exception,
}

impl RouteType {
    pub const ALL: [RouteType; 5] =
        [RouteType::BelowRange, RouteType::Short, RouteType::Medium, RouteType::Long, RouteType::Exception];
}

/// Eight compass sectors of 45 degrees; North wraps through 0.
pub fn cog_status(cog: f64) -> CogStatus {
    if !(0.0..=360.0).contains(&cog) {
        return CogStatus::Invalid;
    }
    const SECTORS: [(f64, CogStatus); 7] = [
        (67.5, CogStatus::Northeast),
        (112.5, CogStatus::East),
        (157.5, CogStatus::Southeast),
        (202.5, CogStatus::South),
        (247.5, CogStatus::Southwest),
        (292.5, CogStatus::West),
        (337.5, CogStatus::Northwest),
    ];
    if cog < 22.5 || cog >= 337.5 {
        return CogStatus::North;
    }
    SECTORS.iter().find(|(upper, _)| cog < *upper).map(|&(_, s)| s).expect("cog < 337.5 here")
}

pub fn sog_status(sog: f64) -> Result<SogStatus, StatsError> {
    if sog.is_nan() || sog < 0.0 {
        return Err(StatsError::NegativeSog(sog));
    }
    Ok(match sog {
        s if s < 3.0 => SogStatus::Slow,
        s if s < 14.0 => SogStatus::Medium,
        s if s < 23.0 => SogStatus::High,
        s if s < 99.0 => SogStatus::VeryHigh,
        _ => SogStatus::Exception,
    })
}

pub fn route_type(record_count: usize) -> RouteType {
    match record_count {
        0..530 => RouteType::BelowRange,
        530..1000 => RouteType::Short,
        1000..2000 => RouteType::Medium,
        2000..10000 => RouteType::Long,
        _ => RouteType::Exception,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummaryOptions {
    /// Width of the interpolated-length histogram bins, in records.
    pub interp_bin_width: usize,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        SummaryOptions { interp_bin_width: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatabaseSummary {
    pub records: u64,
    pub trajectories: u64,
    pub cog_histogram: BTreeMap<CogStatus, u64>,
    pub sog_histogram: BTreeMap<SogStatus, u64>,
    /// Route types by length before interpolation.
    pub route_type_original: BTreeMap<RouteType, u64>,
    /// Route types by length after interpolation.
    pub route_type_interpolated: BTreeMap<RouteType, u64>,
    /// Trajectories per vessel type; present only when the data has the column.
    pub vessel_type_histogram: Option<BTreeMap<String, u64>>,
    pub interp_bin_width: usize,
    /// Lower edge of the inserted-record bin mapped to trajectory count.
    pub interpolated_length_histogram: BTreeMap<u64, u64>,
}

impl DatabaseSummary {
    fn empty(opts: &SummaryOptions) -> Self {
        DatabaseSummary {
            records: 0,
            trajectories: 0,
            cog_histogram: CogStatus::ALL.iter().map(|&s| (s, 0)).collect(),
            sog_histogram: SogStatus::ALL.iter().map(|&s| (s, 0)).collect(),
            route_type_original: RouteType::ALL.iter().map(|&s| (s, 0)).collect(),
            route_type_interpolated: RouteType::ALL.iter().map(|&s| (s, 0)).collect(),
            vessel_type_histogram: None,
            interp_bin_width: opts.interp_bin_width,
            interpolated_length_histogram: BTreeMap::new(),
        }
    }

    fn merge(mut self, other: DatabaseSummary) -> Self {
        fn add<K: Ord>(into: &mut BTreeMap<K, u64>, from: BTreeMap<K, u64>) {
            for (k, v) in from {
                *into.entry(k).or_default() += v;
            }
        }
        self.records += other.records;
        self.trajectories += other.trajectories;
        add(&mut self.cog_histogram, other.cog_histogram);
        add(&mut self.sog_histogram, other.sog_histogram);
        add(&mut self.route_type_original, other.route_type_original);
        add(&mut self.route_type_interpolated, other.route_type_interpolated);
        add(&mut self.interpolated_length_histogram, other.interpolated_length_histogram);
        self.vessel_type_histogram = match (self.vessel_type_histogram, other.vessel_type_histogram) {
            (Some(mut a), Some(b)) => {
                add(&mut a, b);
                Some(a)
            }
            (a, b) => a.or(b),
        };
        self
    }
}

fn summarize_one(track: &Track, inserted: usize, opts: &SummaryOptions) -> DatabaseSummary {
    let mut s = DatabaseSummary::empty(opts);
    s.records = track.len() as u64;
    s.trajectories = 1;
    for r in track.records() {
        *s.cog_histogram.entry(cog_status(r.cog)).or_default() += 1;
        // parsed records never carry a negative SOG
        let sog = sog_status(r.sog).unwrap_or(SogStatus::Exception);
        *s.sog_histogram.entry(sog).or_default() += 1;
    }
    let original = track.len().saturating_sub(inserted);
    *s.route_type_original.entry(route_type(original)).or_default() += 1;
    *s.route_type_interpolated.entry(route_type(track.len())).or_default() += 1;
    let width = opts.interp_bin_width.max(1);
    let bin = (inserted / width * width) as u64;
    s.interpolated_length_histogram.insert(bin, 1);
    if let Some(vt) = track.records().iter().find_map(|r| r.vessel_type.as_ref()) {
        s.vessel_type_histogram = Some(BTreeMap::from([(vt.clone(), 1)]));
    }
    s
}

/// Histograms over every record and trajectory. `clean_reports` supply the
/// number of inserted records per MMSI; tracks without a report count as
/// never interpolated.
pub fn summarize(tracks: &[Track], clean_reports: &[CleanReport], opts: &SummaryOptions) -> DatabaseSummary {
    let inserted: HashMap<Mmsi, usize> =
        clean_reports.iter().filter_map(|r| r.mmsi.map(|m| (m, r.records_inserted))).collect();
    tracks
        .par_iter()
        .map(|t| summarize_one(t, inserted.get(&t.mmsi()).copied().unwrap_or(0), opts))
        .reduce(|| DatabaseSummary::empty(opts), DatabaseSummary::merge)
}

fn write_bins<K: Serialize>(path: &Path, bins: impl IntoIterator<Item = (K, u64)>) -> io::Result<()> {
    let mut out = String::from("bin,count\n");
    for (k, v) in bins {
        let label = serde_json::to_value(&k)
            .map(|v| match v {
                serde_json::Value::String(s) => s,
                other => other.to_string(),
            })
            .map_err(io::Error::other)?;
        out.push_str(&format!("{label},{v}\n"));
    }
    fs::write(path, out)
}

/// Writes `summary.json` and one flat `bin,count` CSV per histogram.
pub fn write_summary(summary: &DatabaseSummary, directory: &Path) -> io::Result<()> {
    fs::create_dir_all(directory)?;
    let json = serde_json::to_string_pretty(summary).map_err(io::Error::other)?;
    fs::write(directory.join("summary.json"), json + "\n")?;
    write_bins(&directory.join("fig14_cog.csv"), summary.cog_histogram.clone())?;
    write_bins(&directory.join("fig15_sog.csv"), summary.sog_histogram.clone())?;
    write_bins(&directory.join("fig16_len.csv"), summary.route_type_original.clone())?;
    write_bins(&directory.join("fig17_len_interp.csv"), summary.route_type_interpolated.clone())?;
    write_bins(&directory.join("fig18_interp_hist.csv"), summary.interpolated_length_histogram.clone())?;
    if let Some(vt) = &summary.vessel_type_histogram {
        write_bins(&directory.join("fig13_vessel_type.csv"), vt.clone())?;
    }
    Ok(())
}
