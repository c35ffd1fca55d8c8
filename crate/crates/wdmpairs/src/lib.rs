//! File formats, configuration, parallel Monte Carlo and the command-line
//! experiment runner built on [`wdmpairs_core`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod parallel;
pub mod svg;

pub use config::{Experiment, ExperimentConfig};
pub use error::{ConfigIssue, Error, Result};
