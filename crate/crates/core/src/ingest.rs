//! Raw CSV ingestion, per-vessel grouping and the per-MMSI trajectory
//! database on disk.
//!
//! Input columns are located by header name, so column order is free. Output
//! files always use the fixed order
//! `XCoord,YCoord,SOG,COG,ROT,BASEDATETIME,MMSI`, followed by `VesselType`
//! when any record carries one and `PROVENANCE` in annotated mode.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AisRecord, GeoPoint, Mmsi, ModelError, Provenance, Timestamp, Track, TrackError};

pub const OUTPUT_HEADER: [&str; 7] = ["XCoord", "YCoord", "SOG", "COG", "ROT", "BASEDATETIME", "MMSI"];
const VESSEL_TYPE_COLUMN: &str = "VesselType";
const PROVENANCE_COLUMN: &str = "PROVENANCE";

/// Longitude/latitude box of the source dataset (UTM zone 10 extract).
pub const STUDY_REGION_LON: (f64, f64) = (-126.0, -120.0);
pub const STUDY_REGION_LAT: (f64, f64) = (30.0, 50.0);

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("header is missing mandatory column {0:?}")]
    MissingColumn(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("cannot write an empty track")]
    EmptyTrack,
    #[error("{file}: file is named for MMSI {expected} but contains MMSI {found}")]
    MmsiMismatch { file: PathBuf, expected: String, found: Mmsi },
    #[error("{file}: file name is not a 9-digit MMSI")]
    BadFileName { file: PathBuf },
    #[error("{file}: {source}")]
    BadTrack {
        file: PathBuf,
        #[source]
        source: TrackError,
    },
}

impl IngestError {
    fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        IngestError::Io { path: path.into(), source }
    }

    /// Schema problems (as opposed to I/O) get their own exit code in the CLI.
    pub fn is_schema(&self) -> bool {
        !matches!(self, IngestError::Io { .. })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParseOptions {
    /// Drop rows outside the study region instead of keeping them.
    pub clip_region: bool,
}

/// Counters describing one ingestion. Reports from separate files merge by
/// addition.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: u64,
    pub rows_accepted: u64,
    pub rows_rejected: u64,
    pub rejection_reasons: BTreeMap<String, u64>,
    pub duplicates_dropped: u64,
    pub vessels: u64,
    pub records_per_vessel: BTreeMap<String, u64>,
}

impl IngestReport {
    fn reject(&mut self, reason: &str) {
        self.rows_rejected += 1;
        *self.rejection_reasons.entry(reason.to_string()).or_default() += 1;
    }

    pub fn merge(&mut self, other: &IngestReport) {
        self.rows_read += other.rows_read;
        self.rows_accepted += other.rows_accepted;
        self.rows_rejected += other.rows_rejected;
        for (k, v) in &other.rejection_reasons {
            *self.rejection_reasons.entry(k.clone()).or_default() += v;
        }
        self.duplicates_dropped += other.duplicates_dropped;
        for (k, v) in &other.records_per_vessel {
            *self.records_per_vessel.entry(k.clone()).or_default() += v;
        }
        self.vessels = self.records_per_vessel.len() as u64;
    }

    /// Fills the per-vessel fields from grouped tracks.
    pub fn record_grouping(&mut self, grouped: &Grouped) {
        self.duplicates_dropped += grouped.duplicates_dropped as u64;
        self.records_per_vessel = grouped.tracks.iter().map(|t| (t.mmsi().to_string(), t.len() as u64)).collect();
        self.vessels = grouped.tracks.len() as u64;
    }
}

struct Columns {
    x: usize,
    y: usize,
    sog: usize,
    cog: usize,
    rot: Option<usize>,
    time: usize,
    mmsi: usize,
    vessel_type: Option<usize>,
}

impl Columns {
    fn from_header(header: &csv::StringRecord) -> Result<Self, IngestError> {
        let find = |names: &[&str]| {
            header.iter().position(|h| {
                let h = h.trim().trim_start_matches('\u{feff}');
                names.iter().any(|n| h.eq_ignore_ascii_case(n))
            })
        };
        let need = |name: &'static str, aliases: &[&str]| {
            let mut all = vec![name];
            all.extend_from_slice(aliases);
            find(&all).ok_or(IngestError::MissingColumn(name))
        };
        Ok(Columns {
            x: need("XCoord", &[])?,
            y: need("YCoord", &[])?,
            sog: need("SOG", &[])?,
            cog: need("COG", &[])?,
            rot: find(&["ROT"]),
            time: need("BASEDATETIME", &["time"])?,
            mmsi: need("MMSI", &[])?,
            vessel_type: find(&[VESSEL_TYPE_COLUMN]),
        })
    }
}

fn parse_f64(field: &str) -> Option<f64> {
    field.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn in_study_region(p: GeoPoint) -> bool {
    (STUDY_REGION_LON.0..=STUDY_REGION_LON.1).contains(&p.lon)
        && (STUDY_REGION_LAT.0..=STUDY_REGION_LAT.1).contains(&p.lat)
}

fn parse_row(row: &csv::StringRecord, cols: &Columns, opts: &ParseOptions) -> Result<AisRecord, &'static str> {
    let field = |i: usize| row.get(i).unwrap_or("");
    let lon = parse_f64(field(cols.x)).ok_or("xcoord unparseable")?;
    let lat = parse_f64(field(cols.y)).ok_or("ycoord unparseable")?;
    let pos = GeoPoint::new(lon, lat).map_err(|_| "position out of range")?;
    if opts.clip_region && !in_study_region(pos) {
        return Err("outside study region");
    }
    let sog = parse_f64(field(cols.sog)).ok_or("sog unparseable")?;
    if sog < 0.0 {
        return Err("sog negative");
    }
    let cog = parse_f64(field(cols.cog)).ok_or("cog unparseable")?;
    if !(0.0..=360.0).contains(&cog) {
        return Err("cog out of range");
    }
    let rot = match cols.rot.map(field).map(str::trim) {
        None | Some("") => None,
        Some(text) => Some(parse_f64(text).ok_or("rot unparseable")?),
    };
    let t = Timestamp::decode(field(cols.time).trim()).map_err(|_| "basedatetime invalid")?;
    let mmsi: Mmsi = field(cols.mmsi).parse().map_err(|_| "mmsi invalid")?;
    let vessel_type = cols.vessel_type.map(|i| field(i).trim()).filter(|s| !s.is_empty()).map(str::to_string);
    Ok(AisRecord { mmsi, pos, sog, cog, rot, t, vessel_type, provenance: Provenance::Raw })
}

/// Parses one CSV stream. Bad rows are counted in the report and skipped;
/// only an unreadable stream or a header without the mandatory columns fails.
pub fn parse_csv<R: Read>(source: R, opts: &ParseOptions) -> Result<(Vec<AisRecord>, IngestReport), IngestError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::None).from_reader(source);
    let cols = Columns::from_header(reader.headers()?)?;
    let mut report = IngestReport::default();
    let mut records = Vec::new();
    let mut row = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut row) {
            Ok(false) => break,
            Ok(true) => {
                report.rows_read += 1;
                match parse_row(&row, &cols, opts) {
                    Ok(rec) => {
                        report.rows_accepted += 1;
                        records.push(rec);
                    }
                    Err(reason) => report.reject(reason),
                }
            }
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(_) => {
                report.rows_read += 1;
                report.reject("malformed row");
            }
        }
    }
    Ok((records, report))
}

pub fn parse_csv_file(path: &Path, opts: &ParseOptions) -> Result<(Vec<AisRecord>, IngestReport), IngestError> {
    let file = File::open(path).map_err(|e| IngestError::io(path, e))?;
    parse_csv(io::BufReader::new(file), opts).map_err(|e| match e {
        IngestError::Csv(c) if c.is_io_error() => IngestError::io(path, io::Error::other(c)),
        other => other,
    })
}

/// Tracks produced by [`group_by_vessel`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Grouped {
    pub tracks: Vec<Track>,
    /// Records sharing (MMSI, minute) with an earlier row in input order.
    pub duplicates_dropped: usize,
}

/// Splits records into one chronologically sorted track per MMSI, ordered by
/// ascending MMSI. For duplicate (MMSI, minute) rows the first in input order
/// wins.
pub fn group_by_vessel(mut records: Vec<AisRecord>) -> Grouped {
    // stable: equal keys keep input order, so dedup keeps the first row
    records.sort_by_key(|r| (r.mmsi, r.t));
    let before = records.len();
    records.dedup_by(|later, earlier| later.mmsi == earlier.mmsi && later.t == earlier.t);
    let duplicates_dropped = before - records.len();

    let mut tracks = Vec::new();
    let mut iter = records.into_iter().peekable();
    while let Some(first) = iter.next() {
        let mmsi = first.mmsi;
        let mut recs = vec![first];
        while let Some(r) = iter.next_if(|r| r.mmsi == mmsi) {
            recs.push(r);
        }
        tracks.push(Track::new(mmsi, recs).expect("sorted and deduplicated"));
    }
    Grouped { tracks, duplicates_dropped }
}

fn fmt_f64(v: f64) -> String {
    // Display prints the shortest string that parses back to the same value
    format!("{v}")
}

/// Serializes a track in the database CSV layout.
pub fn write_track<W: Write>(track: &Track, out: W, annotated: bool) -> Result<(), IngestError> {
    if track.is_empty() {
        return Err(IngestError::EmptyTrack);
    }
    let with_type = track.records().iter().any(|r| r.vessel_type.is_some());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = OUTPUT_HEADER.to_vec();
    if with_type {
        header.push(VESSEL_TYPE_COLUMN);
    }
    if annotated {
        header.push(PROVENANCE_COLUMN);
    }
    w.write_record(&header)?;
    let mut fields: Vec<String> = Vec::with_capacity(header.len());
    for r in track.records() {
        fields.clear();
        fields.push(fmt_f64(r.pos.lon));
        fields.push(fmt_f64(r.pos.lat));
        fields.push(fmt_f64(r.sog));
        fields.push(fmt_f64(r.cog));
        fields.push(r.rot.map(fmt_f64).unwrap_or_default());
        fields.push(r.t.encode()?);
        fields.push(r.mmsi.to_string());
        if with_type {
            fields.push(r.vessel_type.clone().unwrap_or_default());
        }
        if annotated {
            fields.push(r.provenance.label().to_string());
        }
        w.write_record(&fields)?;
    }
    w.flush().map_err(|e| IngestError::io("<writer>", e))?;
    Ok(())
}

/// Writes `<MMSI>.csv` into `directory` and returns its path.
pub fn write_track_csv(track: &Track, directory: &Path, annotated: bool) -> Result<PathBuf, IngestError> {
    if track.is_empty() {
        return Err(IngestError::EmptyTrack);
    }
    let path = directory.join(format!("{}.csv", track.mmsi()));
    let file = File::create(&path).map_err(|e| IngestError::io(&path, e))?;
    let mut buf = BufWriter::new(file);
    write_track(track, &mut buf, annotated).map_err(|e| match e {
        IngestError::Io { source, .. } => IngestError::io(&path, source),
        other => other,
    })?;
    buf.flush().map_err(|e| IngestError::io(&path, e))?;
    Ok(path)
}

/// Result of loading a database directory. Files that fail validation are
/// listed in `rejected` and do not stop the others from loading.
#[derive(Debug, Default)]
pub struct DatabaseLoad {
    pub tracks: Vec<Track>,
    pub rejected: Vec<IngestError>,
    pub report: IngestReport,
}

/// Lists `*.csv` files of a directory in file-name order.
pub fn list_csv_files(directory: &Path) -> Result<Vec<PathBuf>, IngestError> {
    let mut files = Vec::new();
    for entry in fs::read_dir(directory).map_err(|e| IngestError::io(directory, e))? {
        let path = entry.map_err(|e| IngestError::io(directory, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Loads one `<MMSI>.csv` database file.
pub fn read_track_file(path: &Path) -> Result<(Track, IngestReport), IngestError> {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
    let mmsi: Mmsi = stem.parse().map_err(|_| IngestError::BadFileName { file: path.to_path_buf() })?;
    let (records, report) = parse_csv_file(path, &ParseOptions::default())?;
    if let Some(r) = records.iter().find(|r| r.mmsi != mmsi) {
        return Err(IngestError::MmsiMismatch { file: path.to_path_buf(), expected: stem.to_string(), found: r.mmsi });
    }
    let track =
        Track::new(mmsi, records).map_err(|source| IngestError::BadTrack { file: path.to_path_buf(), source })?;
    Ok((track, report))
}

/// Loads every `<MMSI>.csv` under `directory`, in ascending MMSI order.
pub fn read_database(directory: &Path) -> Result<DatabaseLoad, IngestError> {
    let files = list_csv_files(directory)?;
    let mut load = DatabaseLoad::default();
    for path in files {
        match read_track_file(&path) {
            Ok((track, report)) => {
                load.report.merge(&report);
                load.tracks.push(track);
            }
            Err(e @ IngestError::Io { .. }) => return Err(e),
            Err(e) => {
                log::warn!("skipping database file: {e}");
                load.rejected.push(e);
            }
        }
    }
    load.tracks.sort_by_key(|t| t.mmsi());
    let counts = load.tracks.iter().map(|t| (t.mmsi().to_string(), t.len() as u64)).collect();
    load.report.records_per_vessel = counts;
    load.report.vessels = load.tracks.len() as u64;
    Ok(load)
}

/// Writes every track of a database into `directory` (created if needed).
pub fn write_database(tracks: &[Track], directory: &Path, annotated: bool) -> Result<Vec<PathBuf>, IngestError> {
    fs::create_dir_all(directory).map_err(|e| IngestError::io(directory, e))?;
    tracks.iter().filter(|t| !t.is_empty()).map(|t| write_track_csv(t, directory, annotated)).collect()
}
