//! Per-step risk estimators over loss values in `[0, 1]`.
//!
//! The prediction-powered estimate of one step is
//!
//! ```text
//! R_pp = (eta / N) * sum(unlabeled synth) + (1 / n) * sum(true) - (eta / n) * sum(labeled synth)
//! ```
//!
//! which is unbiased for the step's true risk for any `eta` fixed before the
//! step's data is seen. `eta = 0` recovers the supervised mean.

use serde::{Deserialize, Serialize};

use crate::error::{check_unit, Error, Result};

/// Loss of the deployed model against the true label and against the
/// synthetic label, for one labeled input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledLossPair {
    pub true_loss: f64,
    pub synth_loss: f64,
}

impl LabeledLossPair {
    pub fn new(true_loss: f64, synth_loss: f64) -> Result<Self> {
        let pair = Self {
            true_loss,
            synth_loss,
        };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<()> {
        check_unit(self.true_loss, "true loss")?;
        check_unit(self.synth_loss, "synthetic loss")
    }
}

/// Everything the monitor observes at one time step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepBatch {
    pub t: u64,
    pub labeled: Vec<LabeledLossPair>,
    /// Synthetic-label losses on the unlabeled inputs.
    pub unlabeled_synth: Vec<f64>,
    /// Label-free loss proxies for every input of the step (labeled inputs
    /// first, then unlabeled). Only the unsupervised monitor reads these;
    /// empty when not available.
    pub proxies: Vec<f64>,
}

impl StepBatch {
    pub fn new(t: u64, labeled: Vec<LabeledLossPair>, unlabeled_synth: Vec<f64>) -> Result<Self> {
        let batch = Self {
            t,
            labeled,
            unlabeled_synth,
            proxies: Vec::new(),
        };
        batch.validate()?;
        Ok(batch)
    }

    pub fn with_proxies(mut self, proxies: Vec<f64>) -> Self {
        self.proxies = proxies;
        self
    }

    /// Checks the time index, the labeled count and every loss value.
    pub fn validate(&self) -> Result<()> {
        if self.t == 0 {
            return Err(Error::Precondition("time index must be >= 1".into()));
        }
        if self.labeled.is_empty() {
            return Err(Error::Precondition(format!(
                "step {} has no labeled samples",
                self.t
            )));
        }
        for pair in &self.labeled {
            pair.validate()?;
        }
        for &x in &self.unlabeled_synth {
            check_unit(x, "unlabeled synthetic loss")?;
        }
        for &x in &self.proxies {
            if !x.is_finite() {
                return Err(Error::Range(format!("proxy value {x} is not finite")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaMode {
    Fixed,
    Adaptive,
}

/// How the reliance weight on synthetic losses is chosen at each step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaPolicy {
    pub mode: EtaMode,
    pub eta_fixed: f64,
    /// Used by the adaptive mode until the window holds enough data.
    pub eta_init: f64,
    pub eta_max: f64,
    /// Number of past steps the adaptive estimator looks back over.
    pub window_l: usize,
}

impl Default for EtaPolicy {
    fn default() -> Self {
        Self {
            mode: EtaMode::Adaptive,
            eta_fixed: 1.0,
            eta_init: 1.0,
            eta_max: 1.0,
            window_l: 60,
        }
    }
}

impl EtaPolicy {
    pub fn fixed(eta: f64) -> Self {
        Self {
            mode: EtaMode::Fixed,
            eta_fixed: eta,
            eta_max: eta.max(1.0),
            ..Self::default()
        }
    }

    pub fn adaptive() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta_max.is_finite() && self.eta_max >= 0.0) {
            return Err(Error::Parameter(format!(
                "eta_max = {} must be finite and >= 0",
                self.eta_max
            )));
        }
        for (name, v) in [("eta_fixed", self.eta_fixed), ("eta_init", self.eta_init)] {
            if !(v.is_finite() && v >= 0.0 && v <= self.eta_max) {
                return Err(Error::Parameter(format!(
                    "{name} = {v} must lie in [0, eta_max = {}]",
                    self.eta_max
                )));
            }
        }
        if self.window_l == 0 {
            return Err(Error::Parameter("window length must be >= 1".into()));
        }
        Ok(())
    }

    /// Chooses `eta` for the next step from the pre-step window histories.
    pub fn select(&self, history_labeled: &[LabeledLossPair], history_unlabeled: &[f64]) -> f64 {
        match self.mode {
            EtaMode::Fixed => self.eta_fixed,
            EtaMode::Adaptive => eta_adaptive(history_labeled, history_unlabeled, self),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskEstimate {
    pub value: f64,
    pub eta_used: f64,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
}

fn mean(xs: impl Iterator<Item = f64>, n: usize) -> f64 {
    xs.sum::<f64>() / n as f64
}

/// Mean true loss over the labeled samples; unlabeled data is ignored.
pub fn supervised_estimate(batch: &StepBatch) -> Result<RiskEstimate> {
    let n = batch.labeled.len();
    if n == 0 {
        return Err(Error::Precondition(
            "supervised estimate needs labeled samples".into(),
        ));
    }
    Ok(RiskEstimate {
        value: mean(batch.labeled.iter().map(|p| p.true_loss), n),
        eta_used: 0.0,
        n_labeled: n,
        n_unlabeled: batch.unlabeled_synth.len(),
    })
}

/// Prediction-powered estimate of the step risk at reliance weight `eta`.
///
/// With no unlabeled samples the unlabeled term is 0 and `eta` is forced to
/// 0, so the step degrades to the supervised mean.
pub fn ppi_estimate(batch: &StepBatch, eta: f64, eta_max: f64) -> Result<RiskEstimate> {
    if !(eta.is_finite() && eta >= 0.0 && eta <= eta_max) {
        return Err(Error::Parameter(format!(
            "eta = {eta} must lie in [0, eta_max = {eta_max}]"
        )));
    }
    let n = batch.labeled.len();
    if n == 0 {
        return Err(Error::Precondition(
            "PPI estimate needs labeled samples".into(),
        ));
    }
    let big_n = batch.unlabeled_synth.len();
    let eta = if big_n == 0 { 0.0 } else { eta };

    let true_mean = mean(batch.labeled.iter().map(|p| p.true_loss), n);
    let synth_sum: f64 = batch.labeled.iter().map(|p| p.synth_loss).sum();
    let rectified = true_mean - eta * synth_sum / n as f64;
    let unlabeled_term = if big_n == 0 {
        0.0
    } else {
        eta * batch.unlabeled_synth.iter().sum::<f64>() / big_n as f64
    };

    Ok(RiskEstimate {
        value: unlabeled_term + rectified,
        eta_used: eta,
        n_labeled: n,
        n_unlabeled: big_n,
    })
}

/// Variance-minimizing reliance weight for one step, clipped to `[0, eta_max]`.
///
/// `cov_u_usynth` is the covariance between true and synthetic losses of a
/// labeled input, `var_usynth` the variance of a synthetic loss. Returns 0
/// for a non-positive covariance, a degenerate variance or `big_n = 0`.
pub fn eta_star(cov_u_usynth: f64, var_usynth: f64, n: usize, big_n: usize, eta_max: f64) -> f64 {
    if big_n == 0 || !(var_usynth > 0.0) || !(cov_u_usynth > 0.0) {
        return 0.0;
    }
    let ratio = n as f64 / big_n as f64;
    let eta = cov_u_usynth / ((1.0 + ratio) * var_usynth);
    eta.clamp(0.0, eta_max)
}

/// Plug-in version of [`eta_star`] over a sliding window of past steps.
///
/// The caller passes the pooled labeled pairs and unlabeled synthetic losses
/// of the last `window_l` steps, all strictly before the step being
/// estimated. Moments use the unbiased `n - 1` denominator.
pub fn eta_adaptive(
    history_labeled: &[LabeledLossPair],
    history_unlabeled: &[f64],
    policy: &EtaPolicy,
) -> f64 {
    let n = history_labeled.len();
    let big_n = history_unlabeled.len();
    if n < 2 || big_n < 2 {
        return policy.eta_init.clamp(0.0, policy.eta_max);
    }

    let mean_u = mean(history_labeled.iter().map(|p| p.true_loss), n);
    let mean_s = mean(history_labeled.iter().map(|p| p.synth_loss), n);
    let cov = history_labeled
        .iter()
        .map(|p| (p.true_loss - mean_u) * (p.synth_loss - mean_s))
        .sum::<f64>()
        / (n - 1) as f64;

    let mean_unl = mean(history_unlabeled.iter().copied(), big_n);
    let var = history_unlabeled
        .iter()
        .map(|x| (x - mean_unl) * (x - mean_unl))
        .sum::<f64>()
        / (big_n - 1) as f64;

    // rounding leaves ~1e-33 residue on constant windows
    if var <= MOMENT_EPS || cov <= MOMENT_EPS {
        return 0.0;
    }
    eta_star(cov, var, n, big_n, policy.eta_max)
}

const MOMENT_EPS: f64 = 1e-15;

const NORMALIZE_SLACK: f64 = 1e-12;

/// Affine map of `[-eta_max, 1 + eta_max]` onto `[0, 1]`.
///
/// Inputs within `1e-12` outside the range (floating rounding of the PPI
/// sums) are clamped; anything further out is a range error.
pub fn normalize_loss(x: f64, eta_max: f64) -> Result<f64> {
    let lo = -eta_max;
    let hi = 1.0 + eta_max;
    if !x.is_finite() || x < lo - NORMALIZE_SLACK || x > hi + NORMALIZE_SLACK {
        return Err(Error::Range(format!(
            "value {x} outside [{lo}, {hi}] cannot be normalized"
        )));
    }
    Ok(((x + eta_max) / (1.0 + 2.0 * eta_max)).clamp(0.0, 1.0))
}

/// Inverse of [`normalize_loss`]; defined on the whole real line so that
/// lower bounds below 0 map back unchanged in shape.
pub fn denormalize_bound(y: f64, eta_max: f64) -> f64 {
    (1.0 + 2.0 * eta_max) * y - eta_max
}
