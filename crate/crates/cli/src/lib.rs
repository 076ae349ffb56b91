//! Experiment orchestration for `planloc`: scene construction from a JSON
//! config, the 2×3 method matrix over simulated trial sequences, and
//! single-shot localization of scan files.

pub mod config;
mod experiment;
mod once;

pub use experiment::{
    build_scene, prepare_scans, reference_offset, run_matrix, write_scene, BuiltScene, MatrixRun,
    PreparedScans, TrialLog,
};
pub use once::{localize_once, parse_pose, OnceRequest};

use std::fmt::Display;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn input(path: &Path, message: impl Display) -> Self {
        CliError::Input {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    pub fn invalid(message: impl Display) -> Self {
        CliError::Invalid(message.to_string())
    }
}

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILED: i32 = 1;
    pub const INPUT: i32 = 2;
}
