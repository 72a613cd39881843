//! Experiment harness for width sweeps of mean-field variational networks:
//! configuration, datasets, CSV records, experiment drivers, SVG plots and the CLI.

pub mod cli;
pub mod config;
pub mod datasets;
pub mod experiments;
pub mod records;
pub mod svg;
