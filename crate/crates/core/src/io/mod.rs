//! Configuration and file formats.
//!
//! Bulk numbers go to CSV, structured records to JSON. Every file is written
//! to a temporary sibling and renamed into place.

mod config;
mod formats;

pub use config::{parse_config, RunConfig, SimulateConfig, StudySpec};
pub use formats::{
    json_bytes, read_environment, read_event_log_csv, read_measure_csv, read_snapshot_csv, write_atomic,
    write_environment, write_event_log_csv, write_measure_csv, write_report, write_series_csv, write_snapshot_csv,
    EnvironmentHeader, EstimatorRecord, MetricRecord, SnapshotHeader,
};
