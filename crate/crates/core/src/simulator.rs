//! Seeded synthetic loss streams with controlled drift.
//!
//! # Random number generation
//!
//! All randomness comes from xoshiro256++ seeded with the SplitMix64
//! expansion of the scenario seed (`Xoshiro256PlusPlus::seed_from_u64`).
//! The source sample uses the same generator after one `jump()`, so stream
//! and source never overlap. Conversions, in draw order:
//!
//! * uniform: `(next_u64 >> 11) * 2^-53`, in `[0, 1)`;
//! * normal pair: Box–Muller on two uniforms `a, b`:
//!   `r = sqrt(-2 ln(1 - a))`, `(r cos(2 pi b), r sin(2 pi b))`, with the
//!   transcendental functions from `libm`.
//!
//! # Per-sample draws
//!
//! At step `t` with risk level `p = schedule(t)`, the labeled samples are
//! drawn first, then the unlabeled ones. Each sample draws:
//!
//! * bernoulli: uniform `a`, true loss `1[a < p]`; uniform `b`, synthetic
//!   loss equal to the true loss when `b < agreement`, flipped otherwise;
//! * bounded continuous: normal pair `(g1, g2)`, true loss
//!   `clip01(p + s g1)`, synthetic loss `clip01(p + s (rho g1 + sqrt(1 - rho^2) g2))`
//!   with `s = noise_scale` and `rho = agreement`;
//!
//! and then, when proxies are enabled, one normal pair whose first
//! component `g` gives the proxy `clip01(0.25 + 0.5 * true + proxy_noise * g)`.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{LabeledLossPair, StepBatch};
use crate::monitors::SourceData;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossModel {
    Bernoulli,
    BoundedContinuous,
}

/// Per-step risk level as a function of `t`.
///
/// For the continuous loss model the level is the location before clipping
/// to `[0, 1]`; [`DriftScenario::step_risk`] gives the exact mean loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Constant {
        p: f64,
    },
    /// `before` for `t < t0`, `after` from `t0` on.
    Step {
        t0: u64,
        before: f64,
        after: f64,
    },
    /// Linear interpolation between `t0` and `t1`.
    Ramp {
        t0: u64,
        t1: u64,
        before: f64,
        after: f64,
    },
    /// `peak` for `t0 <= t <= t1`, `base` elsewhere.
    Pulse {
        t0: u64,
        t1: u64,
        base: f64,
        peak: f64,
    },
}

impl Schedule {
    pub fn level(&self, t: u64) -> f64 {
        match *self {
            Schedule::Constant { p } => p,
            Schedule::Step { t0, before, after } => {
                if t < t0 {
                    before
                } else {
                    after
                }
            }
            Schedule::Ramp {
                t0,
                t1,
                before,
                after,
            } => {
                if t <= t0 {
                    before
                } else if t >= t1 {
                    after
                } else {
                    before + (after - before) * (t - t0) as f64 / (t1 - t0) as f64
                }
            }
            Schedule::Pulse { t0, t1, base, peak } => {
                if (t0..=t1).contains(&t) {
                    peak
                } else {
                    base
                }
            }
        }
    }

    /// Level of the nominal source distribution.
    pub fn baseline(&self) -> f64 {
        match *self {
            Schedule::Constant { p } => p,
            Schedule::Step { before, .. } | Schedule::Ramp { before, .. } => before,
            Schedule::Pulse { base, .. } => base,
        }
    }

    fn validate(&self, horizon: u64) -> Result<()> {
        let (levels, times): (Vec<f64>, Vec<u64>) = match *self {
            Schedule::Constant { p } => (vec![p], vec![]),
            Schedule::Step { t0, before, after } => (vec![before, after], vec![t0]),
            Schedule::Ramp {
                t0,
                t1,
                before,
                after,
            } => {
                if t1 <= t0 {
                    return Err(Error::Config(format!(
                        "ramp needs t0 < t1, got {t0} and {t1}"
                    )));
                }
                (vec![before, after], vec![t0, t1])
            }
            Schedule::Pulse { t0, t1, base, peak } => {
                if t1 < t0 {
                    return Err(Error::Config(format!(
                        "pulse needs t0 <= t1, got {t0} and {t1}"
                    )));
                }
                (vec![base, peak], vec![t0, t1])
            }
        };
        if let Some(p) = levels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Config(format!(
                "schedule level {p} is not in [0, 1]"
            )));
        }
        if let Some(t) = times.iter().find(|&&t| t < 1 || t > horizon) {
            return Err(Error::Config(format!(
                "schedule time {t} is outside [1, {horizon}]"
            )));
        }
        Ok(())
    }
}

/// Generative description of a synthetic monitoring run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftScenario {
    pub loss_model: LossModel,
    pub schedule: Schedule,
    /// Bernoulli: probability the synthetic loss equals the true loss.
    /// Continuous: correlation `rho` in `[-1, 1]` of the Gaussian noises.
    pub agreement: f64,
    pub n_per_step: usize,
    #[serde(rename = "N_per_step")]
    pub big_n_per_step: usize,
    pub horizon: u64,
    pub seed: u64,
    pub source_labeled: usize,
    pub source_unlabeled: usize,
    pub noise_scale: f64,
    pub proxy_noise: f64,
    pub with_proxies: bool,
}

impl Default for DriftScenario {
    fn default() -> Self {
        Self {
            loss_model: LossModel::Bernoulli,
            schedule: Schedule::Step {
                t0: 200,
                before: 0.3,
                after: 0.55,
            },
            agreement: 0.95,
            n_per_step: 1,
            big_n_per_step: 15,
            horizon: 1000,
            seed: 0,
            source_labeled: 1000,
            source_unlabeled: 15000,
            noise_scale: 0.15,
            proxy_noise: 0.15,
            with_proxies: true,
        }
    }
}

/// One generated step together with the hidden true losses of its
/// unlabeled inputs (used by the full-label reference monitor).
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedStep {
    pub batch: StepBatch,
    pub unlabeled_true: Vec<f64>,
}

impl SimulatedStep {
    /// The same step with every synthetic loss replaced by the true loss.
    pub fn with_true_labels(&self) -> StepBatch {
        StepBatch {
            t: self.batch.t,
            labeled: self
                .batch
                .labeled
                .iter()
                .map(|p| LabeledLossPair {
                    true_loss: p.true_loss,
                    synth_loss: p.true_loss,
                })
                .collect(),
            unlabeled_synth: self.unlabeled_true.clone(),
            proxies: self.batch.proxies.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSource {
    pub data: SourceData,
    pub unlabeled_true: Vec<f64>,
}

impl SimulatedSource {
    pub fn with_true_labels(&self) -> SourceData {
        SourceData {
            labeled: self
                .data
                .labeled
                .iter()
                .map(|p| LabeledLossPair {
                    true_loss: p.true_loss,
                    synth_loss: p.true_loss,
                })
                .collect(),
            unlabeled_synth: self.unlabeled_true.clone(),
            labeled_proxies: self.data.labeled_proxies.clone(),
        }
    }
}

struct Sampler {
    rng: Xoshiro256PlusPlus,
}

impl Sampler {
    fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn normal_pair(&mut self) -> (f64, f64) {
        let a = self.uniform();
        let b = self.uniform();
        let r = libm::sqrt(-2.0 * libm::log(1.0 - a));
        let theta = 2.0 * std::f64::consts::PI * b;
        (r * libm::cos(theta), r * libm::sin(theta))
    }
}

fn clip01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(x: f64) -> f64 {
    libm::exp(-0.5 * x * x) / (2.0 * std::f64::consts::PI).sqrt()
}

/// `E[clip01(mu + s G)]` for standard normal `G`.
fn clipped_normal_mean(mu: f64, s: f64) -> f64 {
    if s == 0.0 {
        return clip01(mu);
    }
    let a = -mu / s;
    let b = (1.0 - mu) / s;
    (1.0 - std_normal_cdf(b))
        + mu * (std_normal_cdf(b) - std_normal_cdf(a))
        + s * (std_normal_pdf(a) - std_normal_pdf(b))
}

impl DriftScenario {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        if self.n_per_step == 0 {
            return Err(Error::Config("n_per_step must be >= 1".into()));
        }
        self.schedule.validate(self.horizon)?;
        let agreement_ok = match self.loss_model {
            LossModel::Bernoulli => (0.0..=1.0).contains(&self.agreement),
            LossModel::BoundedContinuous => (-1.0..=1.0).contains(&self.agreement),
        };
        if !agreement_ok {
            return Err(Error::Config(format!(
                "agreement {} is out of range for {:?}",
                self.agreement, self.loss_model
            )));
        }
        for (name, v) in [
            ("noise_scale", self.noise_scale),
            ("proxy_noise", self.proxy_noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} = {v} must be >= 0")));
            }
        }
        Ok(())
    }

    fn sampler(&self) -> Sampler {
        Sampler {
            rng: Xoshiro256PlusPlus::seed_from_u64(self.seed),
        }
    }

    /// Draws `(true, synth, proxy)` for one input at level `p`.
    fn draw(&self, s: &mut Sampler, p: f64) -> (f64, f64, Option<f64>) {
        let (truth, synth) = match self.loss_model {
            LossModel::Bernoulli => {
                let truth = if s.uniform() < p { 1.0 } else { 0.0 };
                let synth = if s.uniform() < self.agreement {
                    truth
                } else {
                    1.0 - truth
                };
                (truth, synth)
            }
            LossModel::BoundedContinuous => {
                let (g1, g2) = s.normal_pair();
                let rho = self.agreement;
                let truth = clip01(p + self.noise_scale * g1);
                let mixed = rho * g1 + (1.0 - rho * rho).max(0.0).sqrt() * g2;
                (truth, clip01(p + self.noise_scale * mixed))
            }
        };
        let proxy = self.with_proxies.then(|| {
            let (g, _) = s.normal_pair();
            clip01(0.25 + 0.5 * truth + self.proxy_noise * g)
        });
        (truth, synth, proxy)
    }

    fn draw_step(&self, s: &mut Sampler, t: u64, p: f64, n: usize, big_n: usize) -> SimulatedStep {
        let mut labeled = Vec::with_capacity(n);
        let mut proxies = Vec::new();
        for _ in 0..n {
            let (true_loss, synth_loss, proxy) = self.draw(s, p);
            labeled.push(LabeledLossPair {
                true_loss,
                synth_loss,
            });
            proxies.extend(proxy);
        }
        let mut unlabeled_synth = Vec::with_capacity(big_n);
        let mut unlabeled_true = Vec::with_capacity(big_n);
        for _ in 0..big_n {
            let (truth, synth, proxy) = self.draw(s, p);
            unlabeled_true.push(truth);
            unlabeled_synth.push(synth);
            proxies.extend(proxy);
        }
        SimulatedStep {
            batch: StepBatch {
                t,
                labeled,
                unlabeled_synth,
                proxies,
            },
            unlabeled_true,
        }
    }

    /// Mean true loss at step `t` (the clipped-normal mean for the
    /// continuous model).
    pub fn step_risk(&self, t: u64) -> f64 {
        self.level_risk(self.schedule.level(t))
    }

    fn level_risk(&self, p: f64) -> f64 {
        match self.loss_model {
            LossModel::Bernoulli => p,
            LossModel::BoundedContinuous => clipped_normal_mean(p, self.noise_scale),
        }
    }

    /// Mean true loss under the source distribution.
    pub fn source_risk(&self) -> f64 {
        self.level_risk(self.schedule.baseline())
    }
}

/// The full stream of a scenario, with hidden unlabeled truths.
pub fn generate_stream_with_truth(scenario: &DriftScenario) -> Result<Vec<SimulatedStep>> {
    scenario.validate()?;
    let mut s = scenario.sampler();
    Ok((1..=scenario.horizon)
        .map(|t| {
            let p = scenario.schedule.level(t);
            scenario.draw_step(&mut s, t, p, scenario.n_per_step, scenario.big_n_per_step)
        })
        .collect())
}

pub fn generate_stream(scenario: &DriftScenario) -> Result<Vec<StepBatch>> {
    Ok(generate_stream_with_truth(scenario)?
        .into_iter()
        .map(|s| s.batch)
        .collect())
}

/// Calibration sample from the source distribution (level
/// `schedule.baseline()`), drawn from the jumped generator.
pub fn generate_source(scenario: &DriftScenario) -> Result<SimulatedSource> {
    scenario.validate()?;
    if scenario.source_labeled == 0 {
        return Err(Error::Config("source_labeled must be >= 1".into()));
    }
    let mut s = scenario.sampler();
    s.rng.jump();
    let p = scenario.schedule.baseline();
    let step = scenario.draw_step(
        &mut s,
        1,
        p,
        scenario.source_labeled,
        scenario.source_unlabeled,
    );
    let n = step.batch.labeled.len();
    let labeled_proxies = if scenario.with_proxies {
        step.batch.proxies[..n].to_vec()
    } else {
        Vec::new()
    };
    Ok(SimulatedSource {
        data: SourceData {
            labeled: step.batch.labeled,
            unlabeled_synth: step.batch.unlabeled_synth,
            labeled_proxies,
        },
        unlabeled_true: step.unlabeled_true,
    })
}

/// `(1/t) * sum_{t' <= t} R_{t'}`, the running risk the monitors bound.
pub fn true_running_risk(scenario: &DriftScenario, t: u64) -> Result<f64> {
    if t == 0 || t > scenario.horizon {
        return Err(Error::Range(format!(
            "t = {t} outside [1, {}]",
            scenario.horizon
        )));
    }
    Ok((1..=t).map(|k| scenario.step_risk(k)).sum::<f64>() / t as f64)
}

/// Running risk at every step `1..=horizon`.
pub fn true_running_risk_path(scenario: &DriftScenario) -> Vec<f64> {
    let mut sum = 0.0;
    (1..=scenario.horizon)
        .map(|t| {
            sum += scenario.step_risk(t);
            sum / t as f64
        })
        .collect()
}
