//! File formats, sample generation, cross-evaluation tables and plot data for
//! [`bitfit_core`].
//!
//! Datasets are headerless comma-separated text with `#` comments. Models are
//! JSON documents that round-trip every float exactly.

pub mod crosstab;
pub mod generate;
pub mod io;
pub mod plotdata;

pub use crosstab::{crosstab, repair_cells, CrossTable, RepairedCell};
pub use generate::{Component, GeneratorSpec};
pub use io::{load_model, read_dataset, save_model, write_dataset, ModelFile, Provenance};
pub use plotdata::{plot_data, GridSpec, PlotData};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Core(#[from] bitfit_core::Error),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("model file: {0}")]
    Model(String),
    #[error("generator spec: {0}")]
    Spec(String),
    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
