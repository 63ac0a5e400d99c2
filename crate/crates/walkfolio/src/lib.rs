//! File formats, the parallel grid runner, reports and the command line
//! for `walkfolio-core`.
//!
//! A run directory holds `records.csv` (one row per grid cell, full
//! precision), `manifest.json` (inputs, settings, data fingerprint,
//! cardinality and failures) and `reports/` (ranked tables).

pub mod cli;
pub mod io;
pub mod report;
pub mod runner;
pub mod store;
pub mod synth;
