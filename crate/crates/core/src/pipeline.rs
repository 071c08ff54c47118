//! End-to-end runs and the single-stage commands the CLI exposes.
//!
//! Every stage reads and writes the standard per-vessel CSV schema, so
//! running the stages one at a time gives the same bytes as one pipeline run.
//! Tracks are processed in parallel and merged in MMSI order before anything
//! is written.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clean::{clean_track_with, CleanConfig, CleanReport};
use crate::ingest::{
    group_by_vessel, list_csv_files, parse_csv_file, write_database, IngestError, IngestReport, ParseOptions,
};
use crate::model::{Mmsi, Track, UnitConstants};
use crate::predict::{evaluate_track_with, write_evaluation, EvalConfig};
use crate::screen::{screen_track_with, ScreenConfig, ScreenReport};
use crate::stats::{summarize, write_summary, DatabaseSummary, SummaryOptions};
use crate::synth::{corpus, CorpusSpec, GroundTruth};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Schema(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl PipelineError {
    /// 1 for I/O, 2 for schema, 3 for configuration errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Io(_) => 1,
            PipelineError::Schema(_) => 2,
            PipelineError::Config(_) => 3,
        }
    }

    fn io(path: &Path, e: io::Error) -> Self {
        PipelineError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<IngestError> for PipelineError {
    fn from(e: IngestError) -> Self {
        if e.is_schema() {
            PipelineError::Schema(e.to_string())
        } else {
            PipelineError::Io(e.to_string())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Raw CSV file or directory of CSV files. Leave unset to run on a
    /// synthetic corpus instead.
    pub input: Option<PathBuf>,
    /// Left out of the manifest so runs into different directories compare
    /// equal.
    #[serde(skip_serializing_if = "is_empty_path")]
    pub output: PathBuf,
    /// Global seed; overrides the prediction and corpus seeds.
    pub seed: u64,
    pub units: UnitConstants,
    pub parse: ParseOptions,
    pub screen: ScreenConfig,
    pub clean: CleanConfig,
    pub stats: SummaryOptions,
    /// Add a PROVENANCE column to database files.
    pub annotated: bool,
    /// Run the prediction experiment on every accepted track.
    pub predict: Option<EvalConfig>,
    pub synth: Option<CorpusSpec>,
}

fn is_empty_path(p: &Path) -> bool {
    p.as_os_str().is_empty()
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: None,
            output: PathBuf::from("run"),
            seed: 0,
            units: UnitConstants::default(),
            parse: ParseOptions::default(),
            screen: ScreenConfig::default(),
            clean: CleanConfig::default(),
            stats: SummaryOptions::default(),
            annotated: false,
            predict: None,
            synth: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Self::from_json(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    /// Copies the global seed into the stages that draw random numbers.
    pub fn effective(&self) -> Self {
        let mut cfg = self.clone();
        if let Some(p) = cfg.predict.as_mut() {
            p.seed = cfg.seed;
        }
        if let Some(s) = cfg.synth.as_mut() {
            s.seed = cfg.seed;
        }
        cfg
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let check = |r: Result<(), String>| r.map_err(PipelineError::Config);
        check(validate_units(&self.units))?;
        check(self.screen.validate())?;
        check(self.clean.validate())?;
        if self.stats.interp_bin_width == 0 {
            return Err(PipelineError::Config("stats.interp_bin_width must be positive".into()));
        }
        if let Some(p) = &self.predict {
            check(p.validate())?;
        }
        match (&self.input, &self.synth) {
            (Some(_), Some(_)) => Err(PipelineError::Config("set either input or synth, not both".into())),
            (None, None) => Err(PipelineError::Config("no input: set input or synth".into())),
            _ => Ok(()),
        }
    }
}

pub fn validate_units(units: &UnitConstants) -> Result<(), String> {
    for (name, v) in [("earth_radius_km", units.earth_radius_km), ("km_per_nautical_mile", units.km_per_nautical_mile)]
    {
        if !(v.is_finite() && v > 0.0) {
            return Err(format!("units.{name} must be positive, got {v}"));
        }
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| PipelineError::Io(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| PipelineError::io(path, e))
}

fn create_dir(path: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(path).map_err(|e| PipelineError::io(path, e))
}

/// CSV files named by `input`: the file itself or the `*.csv` files of a
/// directory in name order.
pub fn input_files(input: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let meta = fs::metadata(input).map_err(|e| PipelineError::io(input, e))?;
    if meta.is_dir() {
        Ok(list_csv_files(input)?)
    } else {
        Ok(vec![input.to_path_buf()])
    }
}

/// Parses every input file (in parallel) and groups the rows by vessel.
/// Works on raw extracts and on database directories alike.
pub fn load_tracks(input: &Path, opts: &ParseOptions) -> Result<(Vec<Track>, IngestReport), PipelineError> {
    let files = input_files(input)?;
    let parsed = files.par_iter().map(|f| parse_csv_file(f, opts)).collect::<Result<Vec<_>, _>>()?;
    let mut report = IngestReport::default();
    let mut records = Vec::new();
    for (recs, r) in parsed {
        report.merge(&r);
        records.extend(recs);
    }
    let grouped = group_by_vessel(records);
    report.record_grouping(&grouped);
    Ok((grouped.tracks, report))
}

pub fn screen_tracks(tracks: &[Track], cfg: &ScreenConfig, units: &UnitConstants) -> Vec<ScreenReport> {
    tracks.par_iter().map(|t| screen_track_with(t, cfg, units)).collect()
}

pub fn clean_tracks(tracks: &[Track], cfg: &CleanConfig, units: &UnitConstants) -> (Vec<Track>, Vec<CleanReport>) {
    tracks
        .par_iter()
        .map(|t| {
            let (cleaned, mut report) = clean_track_with(t, cfg, units);
            report.mmsi = Some(t.mmsi());
            (cleaned, report)
        })
        .unzip()
}

/// Per-track outcome of the prediction experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackPrediction {
    pub mmsi: Mmsi,
    pub predictions: usize,
    pub skipped_windows: usize,
    pub mean_error_nm: Option<f64>,
    /// Why the track could not be evaluated.
    pub error: Option<String>,
}

/// Evaluates every track and writes `<dir>/<MMSI>/*.csv` plus
/// `<dir>/summary.json`. Tracks too short for the configuration are listed
/// with the reason rather than failing the run.
pub fn predict_tracks(
    tracks: &[Track],
    cfg: &EvalConfig,
    units: &UnitConstants,
    directory: &Path,
) -> Result<Vec<TrackPrediction>, PipelineError> {
    create_dir(directory)?;
    let mut out = Vec::with_capacity(tracks.len());
    for track in tracks {
        let mmsi = track.mmsi();
        match evaluate_track_with(track, cfg, units) {
            Ok(ev) => {
                let dir = directory.join(mmsi.to_string());
                write_evaluation(&ev, &dir).map_err(|e| PipelineError::io(&dir, e))?;
                out.push(TrackPrediction {
                    mmsi,
                    predictions: ev.predictions.len(),
                    skipped_windows: ev.skipped,
                    mean_error_nm: Some(ev.mean_error_nm()),
                    error: None,
                });
            }
            Err(e) => {
                log::warn!("{mmsi}: not evaluated: {e}");
                out.push(TrackPrediction {
                    mmsi,
                    predictions: 0,
                    skipped_windows: 0,
                    mean_error_nm: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    write_json(&directory.join("summary.json"), &out)?;
    Ok(out)
}

/// `ingest`: raw CSV(s) to `<out>/database/` and `<out>/ingest_report.json`.
pub fn run_ingest(input: &Path, out: &Path, opts: &ParseOptions) -> Result<IngestReport, PipelineError> {
    let (tracks, report) = load_tracks(input, opts)?;
    create_dir(out)?;
    write_database(&tracks, &out.join("database"), false)?;
    write_json(&out.join("ingest_report.json"), &report)?;
    Ok(report)
}

/// `screen`: writes `<out>/screen_reports.json` and the accepted tracks to
/// `<out>/database/`.
pub fn run_screen(
    input: &Path,
    out: &Path,
    cfg: &ScreenConfig,
    units: &UnitConstants,
) -> Result<Vec<ScreenReport>, PipelineError> {
    cfg.validate().map_err(PipelineError::Config)?;
    let (tracks, _) = load_tracks(input, &ParseOptions::default())?;
    let reports = screen_tracks(&tracks, cfg, units);
    let accepted: Vec<Track> = tracks.into_iter().zip(&reports).filter(|(_, r)| r.accepted).map(|(t, _)| t).collect();
    create_dir(out)?;
    write_database(&accepted, &out.join("database"), false)?;
    write_json(&out.join("screen_reports.json"), &reports)?;
    Ok(reports)
}

/// `clean`: writes cleaned tracks to `<out>/database/` and
/// `<out>/clean_reports.json`.
pub fn run_clean(
    input: &Path,
    out: &Path,
    cfg: &CleanConfig,
    units: &UnitConstants,
    annotated: bool,
) -> Result<Vec<CleanReport>, PipelineError> {
    cfg.validate().map_err(PipelineError::Config)?;
    let (tracks, _) = load_tracks(input, &ParseOptions::default())?;
    let (cleaned, reports) = clean_tracks(&tracks, cfg, units);
    create_dir(out)?;
    write_database(&cleaned, &out.join("database"), annotated)?;
    write_json(&out.join("clean_reports.json"), &reports)?;
    Ok(reports)
}

/// `stats`: writes the summary into `<out>/stats/`. Without clean reports
/// every track counts as never interpolated.
pub fn run_stats(
    input: &Path,
    clean_reports: Option<&Path>,
    out: &Path,
    opts: &SummaryOptions,
) -> Result<DatabaseSummary, PipelineError> {
    if opts.interp_bin_width == 0 {
        return Err(PipelineError::Config("stats.interp_bin_width must be positive".into()));
    }
    let reports: Vec<CleanReport> = match clean_reports {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| PipelineError::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| PipelineError::Schema(format!("{}: {e}", p.display())))?
        }
        None => Vec::new(),
    };
    let (tracks, _) = load_tracks(input, &ParseOptions::default())?;
    let summary = summarize(&tracks, &reports, opts);
    let dir = out.join("stats");
    write_summary(&summary, &dir).map_err(|e| PipelineError::io(&dir, e))?;
    Ok(summary)
}

/// `predict`: evaluates each track of the input into `<out>/predict/`.
pub fn run_predict(
    input: &Path,
    out: &Path,
    cfg: &EvalConfig,
    units: &UnitConstants,
) -> Result<Vec<TrackPrediction>, PipelineError> {
    cfg.validate().map_err(PipelineError::Config)?;
    let (tracks, _) = load_tracks(input, &ParseOptions::default())?;
    let results = predict_tracks(&tracks, cfg, units, &out.join("predict"))?;
    if !results.is_empty() && results.iter().all(|r| r.error.is_some()) {
        return Err(PipelineError::Config(format!(
            "no track could be evaluated: {}",
            results[0].error.as_deref().unwrap_or_default()
        )));
    }
    Ok(results)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunCounts {
    pub vessels: usize,
    pub accepted: usize,
    pub database_records: usize,
    pub sog_corrections: usize,
    pub pairs_found: usize,
    pub pairs_interpolated: usize,
    pub records_inserted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: PipelineConfig,
    /// Input file names, relative to the input path.
    pub inputs: Vec<String>,
    pub counts: RunCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusTruth {
    pub mmsi: Mmsi,
    #[serde(flatten)]
    pub truth: GroundTruth,
}

fn input_name(input: &Path, file: &Path) -> String {
    match file.strip_prefix(input) {
        Ok(rel) if !rel.as_os_str().is_empty() => rel.display().to_string(),
        _ => file.file_name().unwrap_or_default().to_string_lossy().into_owned(),
    }
}

/// Runs ingest, screen, clean, stats and (optionally) predict on `jobs`
/// threads and writes everything under `cfg.output`. The configuration is
/// validated before anything touches the disk.
pub fn run_pipeline(cfg: &PipelineConfig, jobs: usize) -> Result<Manifest, PipelineError> {
    let cfg = cfg.effective();
    cfg.validate()?;
    log::info!("effective configuration: {}", serde_json::to_string(&cfg).unwrap_or_default());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| PipelineError::Config(format!("cannot start {jobs} worker threads: {e}")))?;
    pool.install(|| run_stages(&cfg))
}

fn run_stages(cfg: &PipelineConfig) -> Result<Manifest, PipelineError> {
    let out = &cfg.output;
    let (tracks, ingest_report, inputs, truth) = match (&cfg.input, &cfg.synth) {
        (Some(input), _) => {
            let files = input_files(input)?;
            let inputs = files.iter().map(|f| input_name(input, f)).collect();
            let (tracks, report) = load_tracks(input, &cfg.parse)?;
            (tracks, report, inputs, None)
        }
        (None, Some(spec)) => {
            let built = corpus(spec).map_err(|e| PipelineError::Config(e.to_string()))?;
            let truth: Vec<CorpusTruth> =
                built.iter().map(|c| CorpusTruth { mmsi: c.track.mmsi(), truth: c.truth.clone() }).collect();
            let records = built.into_iter().flat_map(|c| c.track.into_records()).collect();
            let grouped = group_by_vessel(records);
            let mut report = IngestReport::default();
            report.rows_read = grouped.tracks.iter().map(|t| t.len() as u64).sum();
            report.rows_accepted = report.rows_read;
            report.record_grouping(&grouped);
            (grouped.tracks, report, Vec::new(), Some(truth))
        }
        (None, None) => unreachable!("validated"),
    };

    let screen_reports = screen_tracks(&tracks, &cfg.screen, &cfg.units);
    let accepted: Vec<Track> =
        tracks.into_iter().zip(&screen_reports).filter(|(_, r)| r.accepted).map(|(t, _)| t).collect();
    let (cleaned, clean_reports) = clean_tracks(&accepted, &cfg.clean, &cfg.units);
    let summary = summarize(&cleaned, &clean_reports, &cfg.stats);

    create_dir(out)?;
    write_json(&out.join("ingest_report.json"), &ingest_report)?;
    write_json(&out.join("screen_reports.json"), &screen_reports)?;
    write_json(&out.join("clean_reports.json"), &clean_reports)?;
    if let Some(truth) = &truth {
        write_json(&out.join("ground_truth.json"), truth)?;
    }
    write_database(&cleaned, &out.join("database"), cfg.annotated)?;
    let stats_dir = out.join("stats");
    write_summary(&summary, &stats_dir).map_err(|e| PipelineError::io(&stats_dir, e))?;
    if let Some(p) = &cfg.predict {
        predict_tracks(&cleaned, p, &cfg.units, &out.join("predict"))?;
    }

    let counts = RunCounts {
        vessels: screen_reports.len(),
        accepted: cleaned.len(),
        database_records: cleaned.iter().map(Track::len).sum(),
        sog_corrections: clean_reports.iter().map(|r| r.sog_corrections).sum(),
        pairs_found: clean_reports.iter().map(|r| r.pairs_found).sum(),
        pairs_interpolated: clean_reports.iter().map(|r| r.pairs_interpolated).sum(),
        records_inserted: clean_reports.iter().map(|r| r.records_inserted).sum(),
    };
    let manifest = Manifest {
        tool: "aistrack".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: PipelineConfig { output: PathBuf::new(), ..cfg.clone() },
        inputs,
        counts,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
