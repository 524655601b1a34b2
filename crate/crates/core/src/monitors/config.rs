use serde::{Deserialize, Serialize};

use crate::bounds::{BettingSpec, ConfidenceSequenceSpec};
use crate::error::{Error, Result};
use crate::estimators::EtaPolicy;

/// How the upper bound on the source risk is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceBoundMethod {
    /// Labeled mean plus the Hoeffding radius.
    HoeffdingLabeledOnly,
    /// Betting upper bound on block-wise prediction-powered values.
    BettingPpi,
}

/// Everything a monitor needs besides its source calibration.
///
/// `delta_s` and `delta_t` are authoritative: the copies inside `cs_spec` and
/// `betting_spec` are overwritten by [`MonitorConfig::cs_spec`] and
/// [`MonitorConfig::betting_spec`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    pub delta_s: f64,
    pub delta_t: f64,
    pub eps_tol: f64,
    pub eta_policy: EtaPolicy,
    /// Reliance weight of the source estimate.
    pub eta0: f64,
    pub cs_spec: ConfidenceSequenceSpec,
    pub betting_spec: BettingSpec,
    pub source_bound_method: SourceBoundMethod,
    /// Fraction of `delta_s` the unsupervised monitor spends on its
    /// false-positive-rate bound; the rest goes to its source-risk bound.
    pub urm_delta_share: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            delta_s: 0.05,
            delta_t: 0.2,
            eps_tol: 0.05,
            eta_policy: EtaPolicy::default(),
            eta0: 1.0,
            cs_spec: ConfidenceSequenceSpec::default(),
            betting_spec: BettingSpec::default(),
            source_bound_method: SourceBoundMethod::BettingPpi,
            urm_delta_share: 0.5,
        }
    }
}

impl MonitorConfig {
    pub fn cs_spec(&self) -> ConfidenceSequenceSpec {
        ConfidenceSequenceSpec {
            delta_t: self.delta_t,
            ..self.cs_spec
        }
    }

    pub fn betting_spec(&self) -> BettingSpec {
        BettingSpec {
            delta_s: self.delta_s,
            ..self.betting_spec
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, d) in [("delta_s", self.delta_s), ("delta_t", self.delta_t)] {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::Config(format!("{name} = {d} must lie in (0, 1)")));
            }
        }
        if self.delta_s + self.delta_t >= 1.0 {
            return Err(Error::Config(format!(
                "delta_s + delta_t = {} must be < 1",
                self.delta_s + self.delta_t
            )));
        }
        if !(self.eps_tol > 0.0 && self.eps_tol.is_finite()) {
            return Err(Error::Config(format!(
                "eps_tol = {} must be > 0",
                self.eps_tol
            )));
        }
        if !(self.eta0.is_finite() && self.eta0 >= 0.0) {
            return Err(Error::Config(format!("eta0 = {} must be >= 0", self.eta0)));
        }
        if !(self.urm_delta_share > 0.0 && self.urm_delta_share < 1.0) {
            return Err(Error::Config(format!(
                "urm_delta_share = {} must lie in (0, 1)",
                self.urm_delta_share
            )));
        }
        self.eta_policy.validate()?;
        self.cs_spec().validate()?;
        self.betting_spec().validate()
    }
}
