use serde::{Deserialize, Serialize};

/// One row of a monitor's output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundTrace {
    pub t: u64,
    pub step_estimate: f64,
    pub running_estimate: f64,
    /// Lower confidence bound on the running risk. Not clipped; it may be
    /// negative early in a stream.
    pub lower_bound: f64,
    pub upper_bound_source: f64,
    pub eta_t: f64,
    pub v_t: f64,
    pub alarm: bool,
}

impl BoundTrace {
    /// Lower bound clipped at 0, for display.
    pub fn reported_lower_bound(&self) -> f64 {
        self.lower_bound.max(0.0)
    }
}

/// Smallest `t` whose row carries a raised alarm.
pub fn first_alarm_time(trace: &[BoundTrace]) -> Option<u64> {
    trace.iter().find(|r| r.alarm).map(|r| r.t)
}
