//! Unsupervised risk monitoring from loss proxies.
//!
//! With a loss threshold `tau` and a proxy threshold `beta0`, the running
//! risk satisfies
//!
//! ```text
//! Rbar_t >= tau * ( mean_t P(proxy > beta0) - P_0(proxy > beta0, loss <= tau) )
//! ```
//!
//! whenever the false-positive rate of the proxy test does not grow beyond
//! its source value plus the false-negative rate. The monitor tracks a CM-EB
//! lower bound on the exceedance frequency and subtracts an upper bound on
//! the source false-positive rate.

use serde::{Deserialize, Serialize};

use super::calibration::SourceData;
use super::config::MonitorConfig;
use super::trace::BoundTrace;
use super::Monitor;
use crate::bounds::{hoeffding_radius, CmEb, VarianceProcess};
use crate::error::{Error, Result};
use crate::estimators::StepBatch;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UrmSettings {
    /// Number of interior quantile levels used to build threshold candidates.
    pub quantile_levels: usize,
    /// Miscoverage spent on the false-positive-rate bound.
    pub delta_pfp: f64,
}

impl Default for UrmSettings {
    fn default() -> Self {
        Self {
            quantile_levels: 99,
            delta_pfp: 0.025,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UrmCalibration {
    pub tau: f64,
    pub beta0: f64,
    pub pfp0_ucb: f64,
    pub f1: f64,
    /// Upper bound on the source risk from the labeled source losses.
    pub upper_bound: f64,
    pub n0: usize,
}

/// Empirical quantiles at levels `k / (levels + 1)` plus midpoints between
/// consecutive distinct quantiles, sorted and deduplicated.
fn threshold_candidates(values: &[f64], levels: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut qs: Vec<f64> = (1..=levels)
        .map(|k| {
            let idx = ((k as f64 / (levels + 1) as f64) * n as f64).ceil() as usize;
            sorted[idx.clamp(1, n) - 1]
        })
        .collect();
    qs.dedup();
    let mids: Vec<f64> = qs.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    qs.extend(mids);
    qs.sort_by(f64::total_cmp);
    qs.dedup();
    qs
}

/// Selects `(tau, beta0)` maximizing the F1 score of `proxy > beta0` as a
/// predictor of `loss > tau` on the source pairs, and bounds the source
/// false-positive rate `P(proxy > beta0, loss <= tau)`.
///
/// Ties in F1 go to the larger `tau` (a tighter risk bound), then the
/// smaller `beta0`. Returns `(tau, beta0, pfp0_ucb)`.
pub fn urm_calibrate(
    source_proxies: &[f64],
    source_losses: &[f64],
    settings: &UrmSettings,
) -> Result<(f64, f64, f64)> {
    urm_calibrate_detailed(source_proxies, source_losses, settings).map(|c| (c.0, c.1, c.2))
}

fn urm_calibrate_detailed(
    proxies: &[f64],
    losses: &[f64],
    settings: &UrmSettings,
) -> Result<(f64, f64, f64, f64)> {
    let n = proxies.len();
    if n == 0 || n != losses.len() {
        return Err(Error::Calibration(format!(
            "need equal-length nonempty proxy/loss lists, got {} and {}",
            n,
            losses.len()
        )));
    }
    if proxies.iter().chain(losses).any(|x| !x.is_finite()) {
        return Err(Error::Calibration("non-finite proxy or loss value".into()));
    }
    let first = proxies[0];
    if proxies.iter().all(|&p| p == first) {
        return Err(Error::Calibration("proxies are constant".into()));
    }
    if settings.quantile_levels == 0 {
        return Err(Error::Parameter("quantile_levels must be >= 1".into()));
    }

    let taus = threshold_candidates(losses, settings.quantile_levels);
    let betas = threshold_candidates(proxies, settings.quantile_levels);

    // samples by decreasing proxy; sweeping betas downwards adds samples
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| proxies[b].total_cmp(&proxies[a]));

    let mut best: Option<(f64, f64, f64, usize)> = None; // (f1, tau, beta, false positives)
    for &tau in &taus {
        let positives = losses.iter().filter(|&&l| l > tau).count();
        if positives == 0 {
            continue;
        }
        let mut tp = 0;
        let mut fp = 0;
        let mut cursor = 0;
        for &beta in betas.iter().rev() {
            while cursor < n && proxies[order[cursor]] > beta {
                if losses[order[cursor]] > tau {
                    tp += 1;
                } else {
                    fp += 1;
                }
                cursor += 1;
            }
            let fneg = positives - tp;
            let f1 = 2.0 * tp as f64 / (2 * tp + fp + fneg) as f64;
            let better = match best {
                None => true,
                Some((bf, bt, bb, _)) => {
                    f1 > bf || (f1 == bf && (tau > bt || (tau == bt && beta < bb)))
                }
            };
            if better {
                best = Some((f1, tau, beta, fp));
            }
        }
    }

    let (f1, tau, beta, fp) = best.filter(|b| b.0 > 0.0).ok_or_else(|| {
        Error::Calibration("no threshold pair separates the source losses".into())
    })?;
    let pfp0_ucb = (fp as f64 / n as f64 + hoeffding_radius(n, settings.delta_pfp)?).min(1.0);
    Ok((tau, beta, pfp0_ucb, f1))
}

impl UrmCalibration {
    /// Calibrates thresholds and both source bounds, splitting `delta_s`
    /// between the false-positive-rate bound and the source-risk bound by
    /// `config.urm_delta_share`.
    pub fn from_source(
        data: &SourceData,
        config: &MonitorConfig,
        quantile_levels: usize,
    ) -> Result<Self> {
        let losses: Vec<f64> = data.labeled.iter().map(|p| p.true_loss).collect();
        if data.labeled_proxies.len() != losses.len() {
            return Err(Error::Calibration(format!(
                "{} labeled source samples but {} proxies",
                losses.len(),
                data.labeled_proxies.len()
            )));
        }
        let settings = UrmSettings {
            quantile_levels,
            delta_pfp: config.delta_s * config.urm_delta_share,
        };
        let (tau, beta0, pfp0_ucb, f1) =
            urm_calibrate_detailed(&data.labeled_proxies, &losses, &settings)?;
        let n0 = losses.len();
        let mean = losses.iter().sum::<f64>() / n0 as f64;
        let delta_u = config.delta_s * (1.0 - config.urm_delta_share);
        Ok(Self {
            tau,
            beta0,
            pfp0_ucb,
            f1,
            upper_bound: mean + hoeffding_radius(n0, delta_u)?,
            n0,
        })
    }
}

/// Proxy-only monitor. Reads `StepBatch::proxies` and ignores losses.
#[derive(Debug, Clone)]
pub struct UrmMonitor {
    config: MonitorConfig,
    calibration: UrmCalibration,
    cs: CmEb,
    t: u64,
    variance_process: VarianceProcess,
    alarm_latched: bool,
}

impl UrmMonitor {
    pub fn new(config: MonitorConfig, calibration: UrmCalibration) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            cs: CmEb::new(config.cs_spec())?,
            variance_process: VarianceProcess::new(config.cs_spec.initial_prediction),
            config,
            calibration,
            t: 0,
            alarm_latched: false,
        })
    }

    pub fn calibration(&self) -> &UrmCalibration {
        &self.calibration
    }

    /// Exceedance step using only the proxies of one step.
    pub fn step_proxies(&mut self, t: u64, proxies: &[f64]) -> Result<BoundTrace> {
        let expected = self.t + 1;
        if t != expected {
            return Err(Error::Sequencing { expected, got: t });
        }
        if proxies.is_empty() {
            return Err(Error::Precondition(format!(
                "step {t} carries no proxy values"
            )));
        }
        let c = &self.calibration;
        let exceed = proxies.iter().filter(|&&p| p > c.beta0).count() as f64 / proxies.len() as f64;
        self.variance_process.update(exceed)?;
        self.t = t;
        let tf = t as f64;
        let mean = self.variance_process.running_mean();
        let radius = self.cs.radius(self.variance_process.v)? / tf;
        let lower = c.tau * (mean - radius - c.pfp0_ucb);
        self.alarm_latched |= lower > c.upper_bound + self.config.eps_tol;
        Ok(BoundTrace {
            t,
            step_estimate: c.tau * exceed,
            running_estimate: c.tau * mean,
            lower_bound: lower,
            upper_bound_source: c.upper_bound,
            eta_t: 0.0,
            v_t: self.variance_process.v,
            alarm: self.alarm_latched,
        })
    }
}

impl Monitor for UrmMonitor {
    fn step(&mut self, batch: &StepBatch) -> Result<BoundTrace> {
        self.step_proxies(batch.t, &batch.proxies)
    }

    fn alarm_latched(&self) -> bool {
        self.alarm_latched
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (*seed >> 11) as f64 / (1u64 << 53) as f64
    }

    #[test]
    fn perfect_proxy() {
        let losses: Vec<f64> = (0..500).map(|i| i as f64 / 499.0).collect();
        let (tau, beta, pfp) = urm_calibrate(&losses, &losses, &UrmSettings::default()).unwrap();
        let fp = losses.iter().filter(|&&l| l > beta && l <= tau).count();
        assert_eq!(fp, 0);
        let radius = hoeffding_radius(500, 0.025).unwrap();
        assert!((pfp - radius).abs() < 1e-12);
        let (.., f1) = urm_calibrate_detailed(&losses, &losses, &UrmSettings::default()).unwrap();
        assert_eq!(f1, 1.0);
    }

    #[test]
    fn uninformative_proxy_has_false_positives() {
        let mut s = 7u64;
        let losses: Vec<f64> = (0..1000).map(|_| lcg(&mut s)).collect();
        let proxies: Vec<f64> = (0..1000).map(|_| lcg(&mut s)).collect();
        let (tau, beta, pfp) = urm_calibrate(&proxies, &losses, &UrmSettings::default()).unwrap();
        let emp = proxies
            .iter()
            .zip(&losses)
            .filter(|(&p, &l)| p > beta && l <= tau)
            .count();
        assert!(emp > 0);
        assert!(pfp > hoeffding_radius(1000, 0.025).unwrap());
    }

    #[test]
    fn binary_losses_pick_midpoint_threshold() {
        let losses: Vec<f64> = (0..400)
            .map(|i| if i % 3 == 0 { 1.0 } else { 0.0 })
            .collect();
        let proxies: Vec<f64> = losses.iter().map(|l| 0.25 + 0.5 * l).collect();
        let (tau, beta, _) = urm_calibrate(&proxies, &losses, &UrmSettings::default()).unwrap();
        assert_eq!(tau, 0.5);
        assert!((0.25..0.75).contains(&beta));
    }

    #[test]
    fn degenerate_inputs() {
        let s = UrmSettings::default();
        assert!(matches!(
            urm_calibrate(&[0.3; 10], &[0.5; 10], &s),
            Err(Error::Calibration(_))
        ));
        assert!(urm_calibrate(&[], &[], &s).is_err());
        assert!(urm_calibrate(&[0.1, 0.2], &[0.1], &s).is_err());
    }

    fn calib() -> UrmCalibration {
        UrmCalibration {
            tau: 0.5,
            beta0: 0.5,
            pfp0_ucb: 0.05,
            f1: 1.0,
            upper_bound: 0.2,
            n0: 100,
        }
    }

    #[test]
    fn no_exceedances_gives_nonpositive_bound() {
        let mut m = UrmMonitor::new(MonitorConfig::default(), calib()).unwrap();
        for t in 1..=50 {
            let row = m.step_proxies(t, &[0.1, 0.2, 0.5]).unwrap();
            assert_eq!(row.step_estimate, 0.0);
            assert!(row.lower_bound <= 0.0);
            assert_eq!(row.reported_lower_bound(), 0.0);
        }
        assert!(!m.alarm_latched());
    }

    #[test]
    fn all_exceedances_approach_limit() {
        let mut m = UrmMonitor::new(MonitorConfig::default(), calib()).unwrap();
        let mut row = None;
        for t in 1..=5000 {
            row = Some(m.step_proxies(t, &[0.9; 15]).unwrap());
        }
        let lower = row.unwrap().lower_bound;
        let limit = 0.5 * (1.0 - 0.05);
        assert!(lower < limit && limit - lower < 0.01, "{lower}");
    }

    #[test]
    fn missing_proxies_rejected() {
        let mut m = UrmMonitor::new(MonitorConfig::default(), calib()).unwrap();
        assert!(matches!(
            m.step_proxies(1, &[]),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            m.step_proxies(2, &[0.1]),
            Err(Error::Sequencing { .. })
        ));
    }
}
