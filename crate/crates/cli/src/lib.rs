//! Harness library behind the `faithbench` binary: dataset ingestion, run
//! configuration, grid execution, and report emission.

pub mod config;
pub mod idx;
pub mod pgm;
pub mod report;
pub mod runner;
pub mod synth;
pub mod verify;
