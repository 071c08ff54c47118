//! Build a cleaned AIS trajectory database from minute-resolution position
//! reports, summarise it, and evaluate an ELM trajectory predictor on it.
//!
//! Stage order mirrors the construction process: [`ingest`] parses and groups
//! raw rows, [`screen`] selects trajectories, [`clean`] corrects speeds and
//! fills gaps, [`stats`] bins the result and [`predict`] runs the sliding
//! window ELM experiment. [`synth`] generates tracks with known defects and
//! [`pipeline`] runs everything end to end.

pub mod clean;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod predict;
pub mod screen;
pub mod stats;
pub mod synth;

pub use model::{AisRecord, GeoPoint, Mmsi, Provenance, Timestamp, Track, UnitConstants};
