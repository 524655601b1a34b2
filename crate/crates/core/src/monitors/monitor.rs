use std::collections::VecDeque;

use super::calibration::SourceCalibration;
use super::config::MonitorConfig;
use super::trace::BoundTrace;
use super::Monitor;
use crate::bounds::{CmEb, VarianceProcess};
use crate::error::{Error, Result};
use crate::estimators::{
    denormalize_bound, normalize_loss, ppi_estimate, supervised_estimate, LabeledLossPair,
    StepBatch,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonitorKind {
    /// Labeled losses only; values are already in `[0, 1]`.
    Supervised,
    /// Prediction-powered estimates with `eta` from the configured policy,
    /// normalized onto `[0, 1]` with the policy's `eta_max`.
    PredictionPowered,
}

/// Evolving state of one SRM/PPRM monitor.
#[derive(Debug, Clone)]
pub struct MonitorState {
    pub t: u64,
    pub running_estimate: f64,
    /// Variance process over the normalized step estimates.
    pub variance_process: VarianceProcess,
    pub lower_bound: f64,
    pub alarm_latched: bool,
    /// `eta` of the most recent steps, at most `window_l` entries.
    pub eta_history: VecDeque<f64>,
    estimate_sum: f64,
    labeled_window: VecDeque<LabeledLossPair>,
    unlabeled_window: VecDeque<f64>,
    /// `(labeled, unlabeled)` sample counts of each step in the window.
    window_steps: VecDeque<(usize, usize)>,
}

impl MonitorState {
    fn new(initial_prediction: f64) -> Self {
        Self {
            t: 0,
            running_estimate: 0.0,
            variance_process: VarianceProcess::new(initial_prediction),
            lower_bound: f64::NEG_INFINITY,
            alarm_latched: false,
            eta_history: VecDeque::new(),
            estimate_sum: 0.0,
            labeled_window: VecDeque::new(),
            unlabeled_window: VecDeque::new(),
            window_steps: VecDeque::new(),
        }
    }
}

/// Supervised or prediction-powered running-risk monitor.
///
/// Each step fixes `eta_t` from the window of earlier steps, forms the step
/// estimate, feeds its normalized value to the CM-EB variance process and
/// latches an alarm once `L_t > U_0 + eps_tol`.
#[derive(Debug, Clone)]
pub struct RiskMonitor {
    kind: MonitorKind,
    config: MonitorConfig,
    calibration: SourceCalibration,
    cs: CmEb,
    /// `eta_max` of the affine normalization; 0 for the supervised monitor.
    scale_eta_max: f64,
    state: MonitorState,
}

impl RiskMonitor {
    pub fn new(
        kind: MonitorKind,
        config: MonitorConfig,
        calibration: SourceCalibration,
    ) -> Result<Self> {
        config.validate()?;
        let cs = CmEb::new(config.cs_spec())?;
        let scale_eta_max = match kind {
            MonitorKind::Supervised => 0.0,
            MonitorKind::PredictionPowered => config.eta_policy.eta_max,
        };
        Ok(Self {
            kind,
            state: MonitorState::new(config.cs_spec.initial_prediction),
            config,
            calibration,
            cs,
            scale_eta_max,
        })
    }

    pub fn supervised(config: MonitorConfig, calibration: SourceCalibration) -> Result<Self> {
        Self::new(MonitorKind::Supervised, config, calibration)
    }

    pub fn prediction_powered(
        config: MonitorConfig,
        calibration: SourceCalibration,
    ) -> Result<Self> {
        Self::new(MonitorKind::PredictionPowered, config, calibration)
    }

    pub fn kind(&self) -> MonitorKind {
        self.kind
    }

    pub fn state(&self) -> &MonitorState {
        &self.state
    }

    pub fn calibration(&self) -> &SourceCalibration {
        &self.calibration
    }

    /// `eta` the next step would use, computed from the current window.
    pub fn next_eta(&mut self) -> f64 {
        match self.kind {
            MonitorKind::Supervised => 0.0,
            MonitorKind::PredictionPowered => {
                let labeled = self.state.labeled_window.make_contiguous();
                let unlabeled = self.state.unlabeled_window.make_contiguous();
                self.config.eta_policy.select(labeled, unlabeled)
            }
        }
    }

    fn push_window(&mut self, batch: &StepBatch) {
        let s = &mut self.state;
        s.labeled_window.extend(batch.labeled.iter().copied());
        s.unlabeled_window
            .extend(batch.unlabeled_synth.iter().copied());
        s.window_steps
            .push_back((batch.labeled.len(), batch.unlabeled_synth.len()));
        while s.window_steps.len() > self.config.eta_policy.window_l {
            let (nl, nu) = s.window_steps.pop_front().expect("window is nonempty");
            s.labeled_window.drain(..nl);
            s.unlabeled_window.drain(..nu);
        }
    }
}

impl Monitor for RiskMonitor {
    fn step(&mut self, batch: &StepBatch) -> Result<BoundTrace> {
        let expected = self.state.t + 1;
        if batch.t != expected {
            return Err(Error::Sequencing {
                expected,
                got: batch.t,
            });
        }
        batch.validate()?;

        // eta_t depends only on steps before t
        let eta = if batch.unlabeled_synth.is_empty() {
            0.0
        } else {
            self.next_eta()
        };
        let estimate = match self.kind {
            MonitorKind::Supervised => supervised_estimate(batch)?,
            MonitorKind::PredictionPowered => {
                ppi_estimate(batch, eta, self.config.eta_policy.eta_max)?
            }
        };

        let z = normalize_loss(estimate.value, self.scale_eta_max)?;
        self.state.variance_process.update(z)?;
        let t = batch.t as f64;
        let radius = self.cs.radius(self.state.variance_process.v)? / t;
        let lower = denormalize_bound(
            self.state.variance_process.running_mean() - radius,
            self.scale_eta_max,
        );

        let s = &mut self.state;
        s.t = batch.t;
        s.estimate_sum += estimate.value;
        s.running_estimate = s.estimate_sum / t;
        s.lower_bound = lower;
        s.alarm_latched |= lower > self.calibration.upper_bound + self.config.eps_tol;
        s.eta_history.push_back(estimate.eta_used);
        if s.eta_history.len() > self.config.eta_policy.window_l {
            s.eta_history.pop_front();
        }
        let row = BoundTrace {
            t: batch.t,
            step_estimate: estimate.value,
            running_estimate: s.running_estimate,
            lower_bound: lower,
            upper_bound_source: self.calibration.upper_bound,
            eta_t: estimate.eta_used,
            v_t: s.variance_process.v,
            alarm: s.alarm_latched,
        };
        self.push_window(batch);
        Ok(row)
    }

    fn alarm_latched(&self) -> bool {
        self.state.alarm_latched
    }
}
