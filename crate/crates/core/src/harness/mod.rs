//! Factor sweeps: train a grid of networks, probe them at checkpoints, and
//! aggregate the results.

mod config;
mod records;
mod regime;
mod report;
mod sweep;

pub use config::{DatasetKind, Factor, Probe, RegimeThresholds, Regularizer, SweepConfig, SweepValue};
pub use records::{
    load_records, read_records, save_records, write_records, ExperimentRecord, TimingRecord,
    RECORD_HEADER, STATUS_OK,
};
pub use regime::{label_regime, Regime, RegimeLabel};
pub use report::{report, summarize, Report, Stat, SummaryRow, REGIMES_FILE, REGIME_COUNTS_FILE, SUMMARY_FILE};
pub use sweep::{
    load_sweep_data, resolve_data_dir, run_sweep, run_sweep_with_data, SweepData, SweepSummary,
    CONFIG_FILE, RECORDS_FILE, TIMINGS_FILE,
};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("thresholds: {0}")]
    Thresholds(String),
    #[error("records: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
    #[error(transparent)]
    Code(#[from] crate::codes::CodeError),
    #[error(transparent)]
    Probe(#[from] crate::probes::ProbeError),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}
