//! Benchmark harness behind the `prkit` binary: experiment configs, synthetic
//! and on-disk instances, solver dispatch, and CSV / image reports.

pub mod config;
pub mod experiment;
pub mod imageio;
pub mod instances;
pub mod report;

use std::path::PathBuf;

pub use config::{ExperimentConfig, InstanceSource, Mode, Overrides, SolverSpec, SyntheticKind};
pub use experiment::{run_experiment, ReconstructionReport, RowStatus, CSV_HEADER, CSV_SCHEMA};
pub use instances::{generate_instances, Instance};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: imageio::ImageError,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Core(#[from] prkit_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io_error(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
