//! Command-line surface for the precision-matrix toolkit: run configs,
//! matrix file formats, curve CSV output and validation suites.

pub mod commands;
pub mod config;
pub mod curves;
pub mod matio;
pub mod reports;
pub mod suites;
