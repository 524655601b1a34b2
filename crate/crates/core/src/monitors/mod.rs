//! Online monitors that turn a stream of [`StepBatch`](crate::estimators::StepBatch)
//! values into bound traces and a latched alarm.

pub mod calibration;
pub mod config;
pub mod monitor;
pub mod trace;
pub mod urm;

pub use calibration::{calibrate_source, SourceCalibration, SourceData};
pub use config::{MonitorConfig, SourceBoundMethod};
pub use monitor::{MonitorKind, MonitorState, RiskMonitor};
pub use trace::{first_alarm_time, BoundTrace};
pub use urm::{urm_calibrate, UrmCalibration, UrmMonitor, UrmSettings};

use crate::error::Result;
use crate::estimators::StepBatch;

/// Common interface of the SRM/PPRM and URM state machines.
pub trait Monitor {
    /// Consumes the next batch (its `t` must follow the previous one) and
    /// returns the trace row for that step.
    fn step(&mut self, batch: &StepBatch) -> Result<BoundTrace>;

    fn alarm_latched(&self) -> bool;

    /// Runs the monitor over a whole stream.
    fn run(&mut self, batches: &[StepBatch]) -> Result<Vec<BoundTrace>> {
        batches.iter().map(|b| self.step(b)).collect()
    }
}
