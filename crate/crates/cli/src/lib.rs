//! Experiment runner: connectivity sweeps, the planar two-arc heatmaps,
//! verification suites and δ calibration.

// `!(x > 0.0)` is used on purpose so that NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
pub mod config;
pub mod fig1;
pub mod svg;
pub mod sweep;
pub mod verify;

use ssc_core::SscError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] SscError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    /// A verification suite found violations.
    #[error("{0} violation(s)")]
    Violations(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}
