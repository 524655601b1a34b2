//! TOML run configuration.
//!
//! Every section and key is optional; missing keys take the defaults shown
//! in `config.example.toml`. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bounds::{BettingSpec, ConfidenceSequenceSpec};
use crate::error::{Error, Result};
use crate::estimators::{EtaMode, EtaPolicy};
use crate::harness::{ExperimentPlan, Method};
use crate::monitors::{MonitorConfig, SourceBoundMethod, UrmSettings};
use crate::simulator::DriftScenario;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorSection {
    pub delta_s: f64,
    pub delta_t: f64,
    pub eps_tol: f64,
    pub eta0: f64,
    pub source_bound_method: SourceBoundMethod,
    pub urm_delta_share: f64,
    pub urm_quantile_levels: usize,
}

impl Default for MonitorSection {
    fn default() -> Self {
        let m = MonitorConfig::default();
        Self {
            delta_s: m.delta_s,
            delta_t: m.delta_t,
            eps_tol: m.eps_tol,
            eta0: m.eta0,
            source_bound_method: m.source_bound_method,
            urm_delta_share: m.urm_delta_share,
            urm_quantile_levels: UrmSettings::default().quantile_levels,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EtaSection {
    pub mode: EtaMode,
    pub eta_fixed: f64,
    pub eta_init: f64,
    pub eta_max: f64,
    pub window_l: usize,
}

impl Default for EtaSection {
    fn default() -> Self {
        let p = EtaPolicy::default();
        Self {
            mode: p.mode,
            eta_fixed: p.eta_fixed,
            eta_init: p.eta_init,
            eta_max: p.eta_max,
            window_l: p.window_l,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfidenceSequenceSection {
    pub lambda_max: f64,
    pub quadrature_nodes: usize,
    pub root_tol: f64,
    pub max_doublings: u32,
    pub initial_prediction: f64,
}

impl Default for ConfidenceSequenceSection {
    fn default() -> Self {
        let c = ConfidenceSequenceSpec::default();
        Self {
            lambda_max: c.lambda_max,
            quadrature_nodes: c.quadrature_nodes,
            root_tol: c.root_tol,
            max_doublings: c.max_doublings,
            initial_prediction: c.initial_prediction,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BettingSection {
    pub grid_size: usize,
    pub bet_cap: f64,
    pub variance_floor: f64,
}

impl Default for BettingSection {
    fn default() -> Self {
        let b = BettingSpec::default();
        Self {
            grid_size: b.grid_size,
            bet_cap: b.bet_cap,
            variance_floor: b.variance_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub replications: usize,
    pub base_seed: u64,
    pub methods: Vec<Method>,
    pub agreement_levels: Vec<f64>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        let p = ExperimentPlan::default();
        Self {
            replications: p.replications,
            base_seed: p.base_seed,
            methods: p.methods,
            agreement_levels: p.agreement_levels,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub monitor: MonitorSection,
    pub eta: EtaSection,
    pub confidence_sequence: ConfidenceSequenceSection,
    pub betting: BettingSection,
    pub scenario: DriftScenario,
    pub experiment: ExperimentSection,
}

impl RunConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.monitor_config();
        m.validate()?;
        m.eta_policy
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        m.cs_spec()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        m.betting_spec()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.scenario.validate()?;
        if self.experiment.replications == 0 {
            return Err(Error::Config("experiment.replications must be >= 1".into()));
        }
        Ok(())
    }

    pub fn monitor_config(&self) -> MonitorConfig {
        let (m, e, c, b) = (
            &self.monitor,
            &self.eta,
            &self.confidence_sequence,
            &self.betting,
        );
        MonitorConfig {
            delta_s: m.delta_s,
            delta_t: m.delta_t,
            eps_tol: m.eps_tol,
            eta_policy: EtaPolicy {
                mode: e.mode,
                eta_fixed: e.eta_fixed,
                eta_init: e.eta_init,
                eta_max: e.eta_max,
                window_l: e.window_l,
            },
            eta0: m.eta0,
            cs_spec: ConfidenceSequenceSpec {
                delta_t: m.delta_t,
                lambda_max: c.lambda_max,
                quadrature_nodes: c.quadrature_nodes,
                root_tol: c.root_tol,
                max_doublings: c.max_doublings,
                initial_prediction: c.initial_prediction,
            },
            betting_spec: BettingSpec {
                delta_s: m.delta_s,
                grid_size: b.grid_size,
                bet_cap: b.bet_cap,
                variance_floor: b.variance_floor,
            },
            source_bound_method: m.source_bound_method,
            urm_delta_share: m.urm_delta_share,
        }
    }

    pub fn experiment_plan(&self) -> ExperimentPlan {
        ExperimentPlan {
            scenario: self.scenario,
            methods: self.experiment.methods.clone(),
            replications: self.experiment.replications,
            base_seed: self.experiment.base_seed,
            config: self.monitor_config(),
            agreement_levels: self.experiment.agreement_levels.clone(),
            urm_quantile_levels: self.monitor.urm_quantile_levels,
        }
    }

    /// Applies `--seed`: the scenario seed and the experiment base seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.scenario.seed = seed;
        self.experiment.base_seed = seed;
    }

    /// Applies `--horizon`.
    pub fn set_horizon(&mut self, horizon: u64) -> Result<()> {
        self.scenario.horizon = horizon;
        self.scenario.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::Schedule;

    #[test]
    fn empty_document_gives_defaults() {
        let c = RunConfig::from_toml_str("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.monitor_config(), MonitorConfig::default());
        let p = c.experiment_plan();
        assert_eq!(p.scenario.n_per_step, 1);
        assert_eq!(p.scenario.big_n_per_step, 15);
    }

    #[test]
    fn defaults_round_trip() {
        let text = RunConfig::default().to_toml_string().unwrap();
        assert_eq!(
            RunConfig::from_toml_str(&text).unwrap(),
            RunConfig::default()
        );
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::from_toml_str("[monitor]\ndelta_ss = 0.1\n").unwrap_err();
        assert!(err.to_string().contains("delta_ss"), "{err}");
        let err = RunConfig::from_toml_str("[scenario]\nhorizn = 10\n").unwrap_err();
        assert!(err.to_string().contains("horizn"), "{err}");
        assert!(RunConfig::from_toml_str("[nope]\n").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::from_toml_str("[monitor]\ndelta_s = 0.9\ndelta_t = 0.2\n").is_err());
        assert!(RunConfig::from_toml_str("[eta]\nwindow_l = 0\n").is_err());
        assert!(RunConfig::from_toml_str("[betting]\ngrid_size = 10\n").is_err());
        assert!(RunConfig::from_toml_str("[experiment]\nreplications = 0\n").is_err());
    }

    #[test]
    fn partial_sections() {
        let c = RunConfig::from_toml_str(
            "[scenario]\nhorizon = 50\nagreement = 0.6\n[scenario.schedule]\nkind = \"constant\"\np = 0.3\n\
             [experiment]\nmethods = [\"srm\", \"pprm_adaptive\"]\n",
        )
        .unwrap();
        assert_eq!(c.scenario.horizon, 50);
        assert_eq!(c.scenario.schedule, Schedule::Constant { p: 0.3 });
        assert_eq!(c.scenario.big_n_per_step, 15);
        assert_eq!(
            c.experiment.methods,
            vec![Method::Srm, Method::PprmAdaptive]
        );
    }

    #[test]
    fn overrides() {
        let mut c = RunConfig::default();
        c.set_seed(9);
        assert_eq!(c.experiment_plan().base_seed, 9);
        assert_eq!(c.scenario.seed, 9);
        assert!(c.set_horizon(100).is_err());
        c.scenario.schedule = Schedule::Constant { p: 0.3 };
        c.set_horizon(100).unwrap();
    }
}
