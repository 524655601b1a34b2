//! Replicated Monte Carlo runs of several monitors on paired streams.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::EtaMode;
use crate::monitors::{
    calibrate_source, BoundTrace, Monitor, MonitorConfig, RiskMonitor, SourceBoundMethod,
    UrmCalibration, UrmMonitor, UrmSettings,
};
use crate::simulator::{
    generate_source, generate_stream_with_truth, true_running_risk_path, DriftScenario,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Labeled losses only, Hoeffding source bound.
    Srm,
    /// Prediction-powered with `eta = eta_policy.eta_fixed`.
    PprmFixed,
    /// Prediction-powered with the windowed plug-in `eta`.
    PprmAdaptive,
    /// Proxy exceedances only.
    Urm,
    /// Adaptive prediction-powered monitor fed true losses in place of
    /// every synthetic loss, source included.
    PprmIdeal,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Srm,
        Method::PprmFixed,
        Method::PprmAdaptive,
        Method::Urm,
        Method::PprmIdeal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Srm => "srm",
            Method::PprmFixed => "pprm_fixed",
            Method::PprmAdaptive => "pprm_adaptive",
            Method::Urm => "urm",
            Method::PprmIdeal => "pprm_ideal",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    /// Accepts `pprm_fixed` and `pprm-fixed` spellings.
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

/// Monitor configuration actually used by `method`.
pub fn method_config(method: Method, base: &MonitorConfig) -> MonitorConfig {
    let mut config = *base;
    match method {
        Method::Srm => config.source_bound_method = SourceBoundMethod::HoeffdingLabeledOnly,
        Method::PprmFixed => config.eta_policy.mode = EtaMode::Fixed,
        Method::PprmAdaptive | Method::PprmIdeal => config.eta_policy.mode = EtaMode::Adaptive,
        Method::Urm => {}
    }
    config
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub scenario: DriftScenario,
    pub methods: Vec<Method>,
    pub replications: usize,
    pub base_seed: u64,
    pub config: MonitorConfig,
    /// Agreement levels for [`compare_eta_modes`]; empty means the
    /// scenario's own level.
    #[serde(default)]
    pub agreement_levels: Vec<f64>,
    #[serde(default = "default_quantile_levels")]
    pub urm_quantile_levels: usize,
}

fn default_quantile_levels() -> usize {
    UrmSettings::default().quantile_levels
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            scenario: DriftScenario::default(),
            methods: Method::ALL.to_vec(),
            replications: 100,
            base_seed: 0,
            config: MonitorConfig::default(),
            agreement_levels: Vec::new(),
            urm_quantile_levels: default_quantile_levels(),
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        self.scenario.validate()?;
        self.config.validate()?;
        if self.methods.contains(&Method::Urm) && !self.scenario.with_proxies {
            return Err(Error::Config("urm needs a scenario with proxies".into()));
        }
        Ok(())
    }

    /// Scenario of replication `r`.
    pub fn replication_scenario(&self, r: usize) -> DriftScenario {
        DriftScenario {
            seed: self.base_seed.wrapping_add(r as u64),
            ..self.scenario
        }
    }
}

/// Outcome of one method on one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodRun {
    pub method: Method,
    pub upper_bound_source: f64,
    pub alarm_time: Option<u64>,
    /// Some `t` had `L_t` above the true running risk.
    pub coverage_violated: bool,
    pub trace: Vec<BoundTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationResult {
    pub replication: usize,
    pub seed: u64,
    pub runs: Vec<MethodRun>,
}

/// Runs every method of `plan` on replication `r`'s stream.
pub fn run_replication(plan: &ExperimentPlan, r: usize) -> Result<ReplicationResult> {
    let scenario = plan.replication_scenario(r);
    let steps = generate_stream_with_truth(&scenario)?;
    let source = generate_source(&scenario)?;
    let truth = true_running_risk_path(&scenario);

    let mut runs = Vec::with_capacity(plan.methods.len());
    for &method in &plan.methods {
        let config = method_config(method, &plan.config);
        let mut monitor: Box<dyn Monitor> = match method {
            Method::Urm => {
                let calib =
                    UrmCalibration::from_source(&source.data, &config, plan.urm_quantile_levels)?;
                Box::new(UrmMonitor::new(config, calib)?)
            }
            Method::Srm => Box::new(RiskMonitor::supervised(
                config,
                calibrate_source(&source.data, &config)?,
            )?),
            Method::PprmFixed | Method::PprmAdaptive => Box::new(RiskMonitor::prediction_powered(
                config,
                calibrate_source(&source.data, &config)?,
            )?),
            Method::PprmIdeal => Box::new(RiskMonitor::prediction_powered(
                config,
                calibrate_source(&source.with_true_labels(), &config)?,
            )?),
        };
        let mut trace = Vec::with_capacity(steps.len());
        for step in &steps {
            let row = if method == Method::PprmIdeal {
                monitor.step(&step.with_true_labels())?
            } else {
                monitor.step(&step.batch)?
            };
            trace.push(row);
        }
        let coverage_violated = trace
            .iter()
            .zip(&truth)
            .any(|(row, &risk)| risk < row.lower_bound);
        runs.push(MethodRun {
            method,
            upper_bound_source: trace.first().map_or(f64::NAN, |row| row.upper_bound_source),
            alarm_time: crate::monitors::first_alarm_time(&trace),
            coverage_violated,
            trace,
        });
    }
    Ok(ReplicationResult {
        replication: r,
        seed: scenario.seed,
        runs,
    })
}

/// Per-step averages over replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedTrace {
    pub lower_bound: Vec<f64>,
    pub running_estimate: Vec<f64>,
    pub eta_t: Vec<f64>,
    pub alarm_fraction: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub replications: usize,
    pub alarms: usize,
    /// Fraction of replications that raised an alarm.
    pub pfa: f64,
    pub censored: usize,
    /// Mean over alarmed runs only; `None` when every run is censored.
    pub mean_alarm_time: Option<f64>,
    /// Standard error of `mean_alarm_time`.
    pub alarm_time_se: Option<f64>,
    /// Range over all runs, censored runs counted at the horizon.
    pub min_alarm_time: u64,
    pub max_alarm_time: u64,
    pub coverage_violations: usize,
    pub mean_upper_bound_source: f64,
    /// Median over replications of each run's median `eta_t`.
    pub median_eta: f64,
    /// First alarm time of each replication in order (`None` = censored).
    pub alarm_times: Vec<Option<u64>>,
    pub averaged_trace: AveragedTrace,
}

impl MethodSummary {
    pub fn coverage_violation_rate(&self) -> f64 {
        self.coverage_violations as f64 / self.replications as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub horizon: u64,
    pub replications: usize,
    pub base_seed: u64,
    pub methods: Vec<MethodSummary>,
}

impl ExperimentSummary {
    pub fn method(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

fn mean_and_se(xs: &[f64]) -> Option<(f64, f64)> {
    let k = xs.len();
    if k == 0 {
        return None;
    }
    let mean = xs.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return Some((mean, 0.0));
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    Some((mean, (var / k as f64).sqrt()))
}

/// Folds one method's runs in replication order.
#[derive(Debug, Clone)]
struct Accumulator {
    method: Method,
    horizon: u64,
    sums: AveragedTrace,
    alarm_times: Vec<Option<u64>>,
    coverage_violations: usize,
    upper_bound_sum: f64,
    run_eta_medians: Vec<f64>,
}

impl Accumulator {
    fn new(method: Method, horizon: u64) -> Self {
        let h = horizon as usize;
        Self {
            method,
            horizon,
            sums: AveragedTrace {
                lower_bound: vec![0.0; h],
                running_estimate: vec![0.0; h],
                eta_t: vec![0.0; h],
                alarm_fraction: vec![0.0; h],
            },
            alarm_times: Vec::new(),
            coverage_violations: 0,
            upper_bound_sum: 0.0,
            run_eta_medians: Vec::new(),
        }
    }

    fn absorb(&mut self, run: &MethodRun) {
        let s = &mut self.sums;
        for (i, row) in run.trace.iter().enumerate() {
            s.lower_bound[i] += row.lower_bound;
            s.running_estimate[i] += row.running_estimate;
            s.eta_t[i] += row.eta_t;
            s.alarm_fraction[i] += if row.alarm { 1.0 } else { 0.0 };
        }
        let mut etas: Vec<f64> = run.trace.iter().map(|r| r.eta_t).collect();
        self.run_eta_medians.push(median(&mut etas));
        self.alarm_times.push(run.alarm_time);
        self.coverage_violations += usize::from(run.coverage_violated);
        self.upper_bound_sum += run.upper_bound_source;
    }

    fn finish(mut self) -> MethodSummary {
        let reps = self.alarm_times.len();
        let mut avg = self.sums;
        for col in [
            &mut avg.lower_bound,
            &mut avg.running_estimate,
            &mut avg.eta_t,
            &mut avg.alarm_fraction,
        ] {
            col.iter_mut().for_each(|x| *x /= reps as f64);
        }
        let horizon = self.horizon;
        let alarmed: Vec<f64> = self
            .alarm_times
            .iter()
            .flatten()
            .map(|&t| t as f64)
            .collect();
        let ranged = self.alarm_times.iter().map(|t| t.unwrap_or(horizon));
        let stats = mean_and_se(&alarmed);
        MethodSummary {
            method: self.method,
            replications: reps,
            alarms: alarmed.len(),
            pfa: alarmed.len() as f64 / reps as f64,
            censored: reps - alarmed.len(),
            mean_alarm_time: stats.map(|s| s.0),
            alarm_time_se: stats.map(|s| s.1),
            min_alarm_time: ranged.clone().min().unwrap_or(horizon),
            max_alarm_time: ranged.max().unwrap_or(horizon),
            coverage_violations: self.coverage_violations,
            mean_upper_bound_source: self.upper_bound_sum / reps as f64,
            median_eta: median(&mut self.run_eta_medians),
            alarm_times: self.alarm_times,
            averaged_trace: avg,
        }
    }
}

fn accumulators(plan: &ExperimentPlan) -> Vec<Accumulator> {
    plan.methods
        .iter()
        .map(|&m| Accumulator::new(m, plan.scenario.horizon))
        .collect()
}

fn finish(plan: &ExperimentPlan, accs: Vec<Accumulator>) -> ExperimentSummary {
    ExperimentSummary {
        horizon: plan.scenario.horizon,
        replications: accs.first().map_or(0, |a| a.alarm_times.len()),
        base_seed: plan.base_seed,
        methods: accs.into_iter().map(Accumulator::finish).collect(),
    }
}

/// Runs every replication (in parallel) and returns the full per-run results
/// in replication order.
pub fn run_replications(plan: &ExperimentPlan) -> Result<Vec<ReplicationResult>> {
    plan.validate()?;
    (0..plan.replications)
        .into_par_iter()
        .map(|r| run_replication(plan, r))
        .collect()
}

/// Aggregates replication results; the result depends only on their order.
pub fn summarize_replications(
    plan: &ExperimentPlan,
    results: &[ReplicationResult],
) -> ExperimentSummary {
    let mut accs = accumulators(plan);
    for res in results {
        for (acc, run) in accs.iter_mut().zip(&res.runs) {
            acc.absorb(run);
        }
    }
    finish(plan, accs)
}

/// Runs the plan, folding replications in order chunk by chunk so that
/// full traces are only held for one chunk at a time.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentSummary> {
    run_experiment_with(plan, |_| Ok(()))
}

/// [`run_experiment`] that also hands every replication's full result to
/// `visit`, in replication order.
pub fn run_experiment_with(
    plan: &ExperimentPlan,
    mut visit: impl FnMut(&ReplicationResult) -> Result<()>,
) -> Result<ExperimentSummary> {
    plan.validate()?;
    let chunk = rayon::current_num_threads().max(1) * 8;
    let mut accs = accumulators(plan);
    let mut start = 0;
    while start < plan.replications {
        let end = (start + chunk).min(plan.replications);
        let results: Vec<ReplicationResult> = (start..end)
            .into_par_iter()
            .map(|r| run_replication(plan, r))
            .collect::<Result<_>>()?;
        for res in &results {
            visit(res)?;
            for (acc, run) in accs.iter_mut().zip(&res.runs) {
                acc.absorb(run);
            }
        }
        start = end;
    }
    Ok(finish(plan, accs))
}

/// Mean and standard error of the paired difference `a - b` of alarm times,
/// censored runs counted at the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedGap {
    pub mean: f64,
    pub se: f64,
    pub pairs: usize,
}

pub fn paired_gap(a: &MethodSummary, b: &MethodSummary, horizon: u64) -> Result<PairedGap> {
    if a.alarm_times.len() != b.alarm_times.len() {
        return Err(Error::Precondition(format!(
            "unpaired summaries: {} vs {} replications",
            a.alarm_times.len(),
            b.alarm_times.len()
        )));
    }
    let diffs: Vec<f64> = a
        .alarm_times
        .iter()
        .zip(&b.alarm_times)
        .map(|(x, y)| x.unwrap_or(horizon) as f64 - y.unwrap_or(horizon) as f64)
        .collect();
    let (mean, se) = mean_and_se(&diffs)
        .ok_or_else(|| Error::Precondition("no replications to compare".into()))?;
    Ok(PairedGap {
        mean,
        se,
        pairs: diffs.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaComparisonRow {
    pub agreement: f64,
    pub fixed_mean_alarm_time: Option<f64>,
    pub adaptive_mean_alarm_time: Option<f64>,
    pub fixed_censored: usize,
    pub adaptive_censored: usize,
    /// Paired `fixed - adaptive`, censored runs at the horizon.
    pub gap: PairedGap,
    pub adaptive_median_eta: f64,
}

/// Fixed vs adaptive `eta` on paired streams at each agreement level.
pub fn compare_eta_modes(plan: &ExperimentPlan) -> Result<Vec<EtaComparisonRow>> {
    if !(plan.methods.contains(&Method::PprmFixed) && plan.methods.contains(&Method::PprmAdaptive))
    {
        return Err(Error::Precondition(
            "comparing eta modes needs both pprm_fixed and pprm_adaptive".into(),
        ));
    }
    let levels = if plan.agreement_levels.is_empty() {
        vec![plan.scenario.agreement]
    } else {
        plan.agreement_levels.clone()
    };
    levels
        .into_iter()
        .map(|agreement| {
            let sub = ExperimentPlan {
                scenario: DriftScenario {
                    agreement,
                    ..plan.scenario
                },
                methods: vec![Method::PprmFixed, Method::PprmAdaptive],
                ..plan.clone()
            };
            let summary = run_experiment(&sub)?;
            let fixed = &summary.methods[0];
            let adaptive = &summary.methods[1];
            Ok(EtaComparisonRow {
                agreement,
                fixed_mean_alarm_time: fixed.mean_alarm_time,
                adaptive_mean_alarm_time: adaptive.mean_alarm_time,
                fixed_censored: fixed.censored,
                adaptive_censored: adaptive.censored,
                gap: paired_gap(fixed, adaptive, summary.horizon)?,
                adaptive_median_eta: adaptive.median_eta,
            })
        })
        .collect()
}
