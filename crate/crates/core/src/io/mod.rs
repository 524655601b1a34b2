//! File formats, run configuration and command implementations.

pub mod commands;
pub mod config;
pub mod stream;
pub mod trace_csv;

pub use commands::{
    cmd_calibrate, cmd_experiment, cmd_monitor, cmd_simulate, CalibrationMethod, CalibrationRecord,
    MonitorOutcome, SimulateOutput, EXIT_ALARM, EXIT_CENSORED, EXIT_ERROR,
};
pub use config::RunConfig;
pub use stream::{
    read_source, read_stream, source_records, write_stream, StreamReader, StreamRecord,
};
