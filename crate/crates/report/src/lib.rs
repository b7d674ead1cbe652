//! Study configuration, metric report computation, and emission of result
//! tables (CSV + aligned text) and figure data (JSON).

pub mod compute;
pub mod config;
pub mod data;
pub mod plot;
pub mod tables;
pub mod validate;

use thiserror::Error;

pub use compute::{compute_report, AggregateMetrics, CellMetrics, Metric, MetricsReport, Summary, UnitMetrics};
pub use config::StudyConfig;
pub use data::{load_study, StudyData};
pub use tables::{build_tables, emit_tables, Table};
pub use plot::emit_plot_data;
pub use validate::{validate_fixtures, Check, ValidationReport};




#[derive(Debug, Error)]
pub enum ReportError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}")]
    Ingest {
        path: String,
        #[source]
        source: repheur_core::survey::IngestError,
    },
    #[error(transparent)]
    Registry(#[from] repheur_core::survey::RegistryError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
