use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aistrack::clean::InterpolatedCog;
use aistrack::model::{GeoPoint, Mmsi, Timestamp, UnitConstants};
use aistrack::pipeline::{self, PipelineConfig, PipelineError};
use aistrack::predict::{EvalConfig, FeatureSet};
use aistrack::synth::{self, CorpusSpec, SynthKind, SynthSpec};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

/// Build, summarise and evaluate a cleaned AIS trajectory database.
#[derive(Debug, Parser)]
#[command(name = "aistrack", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Seed for every random draw (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON pipeline configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ingest, screen, clean and summarise in one run.
    Run(RunArgs),
    /// Parse raw CSV and split it into one file per vessel.
    Ingest(IngestArgs),
    /// Classify trajectories and keep the accepted ones.
    Screen(ScreenArgs),
    /// Correct SOG errors and interpolate missing minutes.
    Clean(CleanArgs),
    /// Histograms over a database directory.
    Stats(StatsArgs),
    /// Sliding-window ELM prediction experiment.
    Predict(PredictArgs),
    /// Write synthetic tracks with injected defects as raw CSV.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct Paths {
    /// Raw CSV file or directory of CSV files.
    #[arg(short, long)]
    input: PathBuf,
    /// Output directory.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args, Default)]
struct UnitFlags {
    #[arg(long)]
    earth_radius_km: Option<f64>,
    #[arg(long)]
    km_per_nautical_mile: Option<f64>,
}

#[derive(Debug, Args, Default)]
struct ScreenFlags {
    /// Minimum longest run of nonzero-SOG records.
    #[arg(long)]
    min_run: Option<usize>,
    #[arg(long)]
    complexity_threshold: Option<f64>,
    #[arg(long)]
    gap_km_threshold: Option<f64>,
    #[arg(long)]
    loose_mean_spacing_km: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CogMode {
    CopyEarlier,
    ChordBearing,
}

#[derive(Debug, Args, Default)]
struct CleanFlags {
    /// Knots.
    #[arg(long)]
    sog_jump_threshold: Option<f64>,
    #[arg(long)]
    distance_tolerance_km: Option<f64>,
    /// Minutes.
    #[arg(long)]
    missing_interval_min: Option<i64>,
    #[arg(long)]
    interp_ratio_threshold: Option<f64>,
    #[arg(long, value_enum)]
    interpolated_cog: Option<CogMode>,
    /// Add a PROVENANCE column to the written tracks.
    #[arg(long)]
    annotated: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Features {
    Positions,
    PositionsAndKinematics,
}

#[derive(Debug, Args, Default)]
struct PredictFlags {
    /// Prediction horizon t_p, minutes.
    #[arg(long)]
    horizon: Option<usize>,
    /// Feature window length l, minutes.
    #[arg(long)]
    feature_len: Option<usize>,
    /// Training samples s per evaluation point.
    #[arg(long)]
    samples: Option<usize>,
    /// Hidden nodes L.
    #[arg(long)]
    hidden: Option<usize>,
    /// Ridge penalty; 0 is the minimum-norm solution.
    #[arg(long)]
    ridge: Option<f64>,
    #[arg(long)]
    stride: Option<usize>,
    /// Error histogram bin width, nautical miles.
    #[arg(long)]
    bin_width: Option<f64>,
    /// Train once at the first evaluation point.
    #[arg(long)]
    train_once: bool,
    #[arg(long, value_enum)]
    features: Option<Features>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(short, long)]
    input: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Drop rows outside the study region.
    #[arg(long)]
    clip_region: bool,
    /// Run on a synthetic corpus of this many tracks instead of an input.
    #[arg(long)]
    synth_tracks: Option<usize>,
    #[arg(long)]
    synth_records: Option<usize>,
    /// Also run the prediction experiment on accepted tracks.
    #[arg(long)]
    predict: bool,
    #[arg(long)]
    interp_bin_width: Option<usize>,
    #[command(flatten)]
    units: UnitFlags,
    #[command(flatten)]
    screen: ScreenFlags,
    #[command(flatten)]
    clean: CleanFlags,
    #[command(flatten)]
    model: PredictFlags,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[command(flatten)]
    paths: Paths,
    #[arg(long)]
    clip_region: bool,
}

#[derive(Debug, Args)]
struct ScreenArgs {
    #[command(flatten)]
    paths: Paths,
    #[command(flatten)]
    units: UnitFlags,
    #[command(flatten)]
    screen: ScreenFlags,
}

#[derive(Debug, Args)]
struct CleanArgs {
    #[command(flatten)]
    paths: Paths,
    #[command(flatten)]
    units: UnitFlags,
    #[command(flatten)]
    clean: CleanFlags,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[command(flatten)]
    paths: Paths,
    /// clean_reports.json from the clean stage, for interpolation counts.
    #[arg(long)]
    clean_reports: Option<PathBuf>,
    #[arg(long)]
    interp_bin_width: Option<usize>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[command(flatten)]
    paths: Paths,
    #[command(flatten)]
    units: UnitFlags,
    #[command(flatten)]
    model: PredictFlags,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Linear,
    Arc,
    RandomWalk,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// JSON scenario: a track spec plus `spikes` and `gaps` lists.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Raw CSV destination (default: stdout).
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    kind: Option<Kind>,
    #[arg(long)]
    length_minutes: Option<usize>,
    #[arg(long)]
    speed_knots: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    start_lon: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    start_lat: Option<f64>,
    #[arg(long)]
    heading: Option<f64>,
    /// Degrees per minute, arcs only.
    #[arg(long, allow_hyphen_values = true)]
    turn_rate: Option<f64>,
    #[arg(long)]
    mmsi: Option<Mmsi>,
    /// YYYYMMDDHHMM.
    #[arg(long, value_parser = parse_time)]
    start_time: Option<Timestamp>,
    /// SOG spike as INDEX:KNOTS; repeatable.
    #[arg(long, value_parser = parse_spike)]
    spike: Vec<Spike>,
    /// Gap of MINUTES after record INDEX, as INDEX:MINUTES; repeatable.
    #[arg(long, value_parser = parse_gap)]
    gap: Vec<Gap>,
    /// Generate the labelled test corpus with this many tracks instead.
    #[arg(long)]
    corpus_tracks: Option<usize>,
    #[arg(long)]
    corpus_records: Option<usize>,
    /// Where to write the corpus ground truth JSON.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct Spike {
    at: usize,
    magnitude: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct Gap {
    start: usize,
    minutes: usize,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct Scenario {
    #[serde(flatten)]
    spec: SynthSpec,
    spikes: Vec<Spike>,
    gaps: Vec<Gap>,
}

fn split_pair(s: &str) -> Result<(&str, &str), String> {
    s.split_once(':').ok_or_else(|| format!("expected A:B, got {s:?}"))
}

fn parse_spike(s: &str) -> Result<Spike, String> {
    let (a, b) = split_pair(s)?;
    Ok(Spike {
        at: a.parse().map_err(|e| format!("{a:?}: {e}"))?,
        magnitude: b.parse().map_err(|e| format!("{b:?}: {e}"))?,
    })
}

fn parse_gap(s: &str) -> Result<Gap, String> {
    let (a, b) = split_pair(s)?;
    Ok(Gap {
        start: a.parse().map_err(|e| format!("{a:?}: {e}"))?,
        minutes: b.parse().map_err(|e| format!("{b:?}: {e}"))?,
    })
}

fn parse_time(s: &str) -> Result<Timestamp, String> {
    Timestamp::decode(s).map_err(|e| e.to_string())
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn apply_units(units: &mut UnitConstants, f: &UnitFlags) {
    set(&mut units.earth_radius_km, f.earth_radius_km);
    set(&mut units.km_per_nautical_mile, f.km_per_nautical_mile);
}

fn apply_screen(cfg: &mut PipelineConfig, f: &ScreenFlags) {
    let s = &mut cfg.screen;
    set(&mut s.min_run, f.min_run);
    set(&mut s.complexity_threshold, f.complexity_threshold);
    set(&mut s.gap_km_threshold, f.gap_km_threshold);
    set(&mut s.loose_mean_spacing_km, f.loose_mean_spacing_km);
}

fn apply_clean(cfg: &mut PipelineConfig, f: &CleanFlags) {
    let c = &mut cfg.clean;
    set(&mut c.sog_jump_threshold, f.sog_jump_threshold);
    set(&mut c.distance_tolerance_km, f.distance_tolerance_km);
    set(&mut c.missing_interval_min, f.missing_interval_min);
    set(&mut c.interp_ratio_threshold, f.interp_ratio_threshold);
    set(
        &mut c.interpolated_cog,
        f.interpolated_cog.map(|m| match m {
            CogMode::CopyEarlier => InterpolatedCog::CopyEarlier,
            CogMode::ChordBearing => InterpolatedCog::ChordBearing,
        }),
    );
    cfg.annotated |= f.annotated;
}

fn apply_predict(p: &mut EvalConfig, f: &PredictFlags) {
    set(&mut p.horizon, f.horizon);
    set(&mut p.feature_len, f.feature_len);
    set(&mut p.samples, f.samples);
    set(&mut p.hidden, f.hidden);
    set(&mut p.ridge, f.ridge);
    set(&mut p.stride, f.stride);
    set(&mut p.bin_width, f.bin_width);
    p.train_once |= f.train_once;
    set(
        &mut p.features,
        f.features.map(|x| match x {
            Features::Positions => FeatureSet::Positions,
            Features::PositionsAndKinematics => FeatureSet::PositionsAndKinematics,
        }),
    );
}

fn check(r: Result<(), String>) -> Result<(), PipelineError> {
    r.map_err(PipelineError::Config)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| PipelineError::Io(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct PredictManifest<'a> {
    tool: &'static str,
    version: &'static str,
    predict: &'a EvalConfig,
    units: &'a UnitConstants,
    tracks: &'a [pipeline::TrackPrediction],
}

fn run_synth(args: &SynthArgs, seed: Option<u64>) -> Result<(), PipelineError> {
    let config_err = |e: synth::SynthError| PipelineError::Config(e.to_string());
    let open = |path: &Option<PathBuf>| -> Result<Box<dyn Write>, PipelineError> {
        Ok(match path {
            Some(p) => Box::new(File::create(p).map_err(|e| PipelineError::Io(format!("{}: {e}", p.display())))?),
            None => Box::new(io::stdout().lock()),
        })
    };
    let io_err = |e: io::Error| PipelineError::Io(e.to_string());

    if let Some(tracks) = args.corpus_tracks {
        let mut spec = CorpusSpec { tracks, ..CorpusSpec::default() };
        set(&mut spec.records_per_track, args.corpus_records);
        set(&mut spec.seed, seed);
        let built = synth::corpus(&spec).map_err(config_err)?;
        if let Some(path) = &args.truth {
            let truth: Vec<pipeline::CorpusTruth> =
                built.iter().map(|c| pipeline::CorpusTruth { mmsi: c.track.mmsi(), truth: c.truth.clone() }).collect();
            write_json(path, &truth)?;
        }
        return synth::write_raw_csv(built.iter().map(|c| &c.track), open(&args.output)?).map_err(io_err);
    }

    let mut scenario = match &args.scenario {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| PipelineError::Io(format!("{}: {e}", p.display())))?;
            serde_json::from_str::<Scenario>(&text)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?
        }
        None => Scenario::default(),
    };
    let spec = &mut scenario.spec;
    set(
        &mut spec.kind,
        args.kind.map(|k| match k {
            Kind::Linear => SynthKind::Linear,
            Kind::Arc => SynthKind::Arc,
            Kind::RandomWalk => SynthKind::RandomWalk,
        }),
    );
    set(&mut spec.length_minutes, args.length_minutes);
    set(&mut spec.speed_knots, args.speed_knots);
    set(&mut spec.heading, args.heading);
    set(&mut spec.turn_rate, args.turn_rate);
    set(&mut spec.mmsi, args.mmsi);
    set(&mut spec.start_time, args.start_time);
    set(&mut spec.seed, seed);
    spec.start =
        GeoPoint { lon: args.start_lon.unwrap_or(spec.start.lon), lat: args.start_lat.unwrap_or(spec.start.lat) };
    scenario.spikes.extend(&args.spike);
    scenario.gaps.extend(&args.gap);

    let mut track = synth::generate(&scenario.spec).map_err(config_err)?;
    for s in &scenario.spikes {
        track = synth::inject_sog_spike(&track, s.at, s.magnitude).map_err(config_err)?;
    }
    for g in &scenario.gaps {
        track = synth::inject_gap(&track, g.start, g.minutes).map_err(config_err)?;
    }
    synth::write_raw_csv([&track], open(&args.output)?).map_err(io_err)
}

fn execute(cli: Cli) -> Result<(), PipelineError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    set(&mut cfg.seed, cli.seed);
    let jobs = cli.jobs.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    if jobs == 0 {
        return Err(PipelineError::Config("--jobs must be at least 1".into()));
    }

    if let Command::Run(a) = &cli.command {
        if let Some(input) = &a.input {
            cfg.input = Some(input.clone());
            cfg.synth = None;
        }
        if a.synth_tracks.is_some() || a.synth_records.is_some() {
            let mut spec = cfg.synth.unwrap_or_default();
            set(&mut spec.tracks, a.synth_tracks);
            set(&mut spec.records_per_track, a.synth_records);
            cfg.synth = Some(spec);
            if a.input.is_none() {
                cfg.input = None;
            }
        }
        set(&mut cfg.output, a.output.clone());
        cfg.parse.clip_region |= a.clip_region;
        set(&mut cfg.stats.interp_bin_width, a.interp_bin_width);
        apply_units(&mut cfg.units, &a.units);
        apply_screen(&mut cfg, &a.screen);
        apply_clean(&mut cfg, &a.clean);
        if a.predict || cfg.predict.is_some() {
            let mut p = cfg.predict.unwrap_or_default();
            apply_predict(&mut p, &a.model);
            cfg.predict = Some(p);
        }
        let m = pipeline::run_pipeline(&cfg, jobs)?;
        let c = &m.counts;
        println!(
            "vessels {} accepted {} records {} sog_corrections {} pairs {} interpolated {} inserted {}",
            c.vessels,
            c.accepted,
            c.database_records,
            c.sog_corrections,
            c.pairs_found,
            c.pairs_interpolated,
            c.records_inserted
        );
        return Ok(());
    }

    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .map_err(|e| PipelineError::Config(e.to_string()))?;

    match &cli.command {
        Command::Run(_) => unreachable!("handled above"),
        Command::Ingest(a) => {
            cfg.parse.clip_region |= a.clip_region;
            let r = pipeline::run_ingest(&a.paths.input, &a.paths.output, &cfg.parse)?;
            println!(
                "rows {} accepted {} rejected {} vessels {}",
                r.rows_read, r.rows_accepted, r.rows_rejected, r.vessels
            );
        }
        Command::Screen(a) => {
            apply_units(&mut cfg.units, &a.units);
            apply_screen(&mut cfg, &a.screen);
            check(pipeline::validate_units(&cfg.units))?;
            let r = pipeline::run_screen(&a.paths.input, &a.paths.output, &cfg.screen, &cfg.units)?;
            println!("vessels {} accepted {}", r.len(), r.iter().filter(|x| x.accepted).count());
        }
        Command::Clean(a) => {
            apply_units(&mut cfg.units, &a.units);
            apply_clean(&mut cfg, &a.clean);
            check(pipeline::validate_units(&cfg.units))?;
            let r = pipeline::run_clean(&a.paths.input, &a.paths.output, &cfg.clean, &cfg.units, cfg.annotated)?;
            println!(
                "tracks {} sog_corrections {} inserted {}",
                r.len(),
                r.iter().map(|x| x.sog_corrections).sum::<usize>(),
                r.iter().map(|x| x.records_inserted).sum::<usize>()
            );
        }
        Command::Stats(a) => {
            set(&mut cfg.stats.interp_bin_width, a.interp_bin_width);
            let s = pipeline::run_stats(&a.paths.input, a.clean_reports.as_deref(), &a.paths.output, &cfg.stats)?;
            println!("trajectories {} records {}", s.trajectories, s.records);
        }
        Command::Predict(a) => {
            apply_units(&mut cfg.units, &a.units);
            check(pipeline::validate_units(&cfg.units))?;
            let mut p = cfg.predict.unwrap_or_default();
            apply_predict(&mut p, &a.model);
            p.seed = cfg.seed;
            let results = pipeline::run_predict(&a.paths.input, &a.paths.output, &p, &cfg.units)?;
            write_json(
                &a.paths.output.join("manifest.json"),
                &PredictManifest {
                    tool: "aistrack",
                    version: env!("CARGO_PKG_VERSION"),
                    predict: &p,
                    units: &cfg.units,
                    tracks: &results,
                },
            )?;
            for r in &results {
                match (r.mean_error_nm, &r.error) {
                    (Some(e), _) => println!("{} predictions {} mean_error_nm {e}", r.mmsi, r.predictions),
                    (None, Some(why)) => println!("{} skipped: {why}", r.mmsi),
                    _ => {}
                }
            }
        }
        Command::Synth(a) => run_synth(a, cli.seed)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    // bad flags are configuration errors; clap's own code 2 means schema here
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
