//! Fixed-sample upper bounds on a bounded mean by testing by betting.
//!
//! For each candidate mean `m` on a grid, a gambler bets against `H_m: mean >= m`
//! with wealth `W_i(m) = prod_j (1 + lambda_j (m - x_j))`. Under `H_m` the
//! wealth is a nonnegative supermartingale, so by Ville's inequality it
//! reaches `1 / delta` with probability at most `delta`. Every grid mean
//! whose wealth never reached the threshold is retained; the bound is the
//! grid point just above the largest retained one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::LabeledLossPair;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BettingSpec {
    pub delta_s: f64,
    /// Number of candidate means, evenly spaced on `[0, 1]`.
    pub grid_size: usize,
    /// Bets are truncated at `bet_cap / (1 - m)`, keeping every wealth
    /// factor at least `1 - bet_cap`.
    pub bet_cap: f64,
    pub variance_floor: f64,
}

impl Default for BettingSpec {
    fn default() -> Self {
        Self {
            delta_s: 0.05,
            grid_size: 1000,
            bet_cap: 0.75,
            variance_floor: 1e-4,
        }
    }
}

impl BettingSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_s > 0.0 && self.delta_s < 1.0) {
            return Err(Error::Parameter(format!(
                "delta_s = {} must lie in (0, 1)",
                self.delta_s
            )));
        }
        if self.grid_size < 100 {
            return Err(Error::Parameter(format!(
                "grid_size = {} must be >= 100",
                self.grid_size
            )));
        }
        if !(self.bet_cap > 0.0 && self.bet_cap < 1.0) {
            return Err(Error::Parameter(format!(
                "bet_cap = {} must lie in (0, 1)",
                self.bet_cap
            )));
        }
        if !(self.variance_floor > 0.0) {
            return Err(Error::Parameter("variance_floor must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockwiseValues {
    pub values: Vec<f64>,
    /// Set when some labeled sample was paired with an empty block.
    pub degenerate: bool,
}

/// Pairs each labeled sample with a contiguous block of unlabeled synthetic
/// losses and returns `z_i = eta0 * mean(block_i) + true_i - eta0 * synth_i`.
///
/// Block sizes differ by at most one (the first `N mod n` blocks hold the
/// extra sample). An empty block has mean 0.
pub fn blockwise_ppi_values(
    labeled: &[LabeledLossPair],
    unlabeled_synth: &[f64],
    eta0: f64,
) -> Result<BlockwiseValues> {
    let n = labeled.len();
    if n == 0 {
        return Err(Error::Precondition(
            "block-wise values need labeled samples".into(),
        ));
    }
    if !(eta0.is_finite() && eta0 >= 0.0) {
        return Err(Error::Parameter(format!("eta0 = {eta0} must be >= 0")));
    }
    let big_n = unlabeled_synth.len();
    let base = big_n / n;
    let extra = big_n % n;

    let mut values = Vec::with_capacity(n);
    let mut start = 0;
    for (i, pair) in labeled.iter().enumerate() {
        let size = base + usize::from(i < extra);
        let block = &unlabeled_synth[start..start + size];
        start += size;
        let block_mean = if size == 0 {
            0.0
        } else {
            block.iter().sum::<f64>() / size as f64
        };
        values.push(eta0 * block_mean + pair.true_loss - eta0 * pair.synth_loss);
    }
    Ok(BlockwiseValues {
        values,
        degenerate: base == 0,
    })
}

fn rescale(values: &[f64], lo: f64, hi: f64) -> Result<Vec<f64>> {
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Parameter(format!(
            "value range [{lo}, {hi}] is empty"
        )));
    }
    let width = hi - lo;
    values
        .iter()
        .map(|&v| {
            if v.is_finite() && v >= lo - 1e-12 && v <= hi + 1e-12 {
                Ok(((v - lo) / width).clamp(0.0, 1.0))
            } else {
                Err(Error::Range(format!("value {v} outside [{lo}, {hi}]")))
            }
        })
        .collect()
}

/// Predictable plug-in bet sizes, before the per-candidate truncation.
///
/// `lambda_i = sqrt(2 ln(1/delta) / (sigma2_{i-1} * i))` with the regularized
/// running variance `sigma2_i = (1/4 + sum_j (x_j - mu_{j-1})^2) / (i + 1)`,
/// `mu_i = (1/2 + sum_j x_j) / (i + 1)`, floored at `variance_floor`.
fn raw_bets(xs: &[f64], spec: &BettingSpec) -> Vec<f64> {
    let log_term = 2.0 * (1.0 / spec.delta_s).ln();
    let mut bets = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    let mut sq = 0.0;
    let mut mu_prev = 0.5;
    let mut var_prev: f64 = 0.25;
    for (i, &x) in xs.iter().enumerate() {
        let step = (i + 1) as f64;
        bets.push((log_term / (var_prev.max(spec.variance_floor) * step)).sqrt());
        sq += (x - mu_prev) * (x - mu_prev);
        sum += x;
        mu_prev = (0.5 + sum) / (step + 1.0);
        var_prev = (0.25 + sq) / (step + 1.0);
    }
    bets
}

fn truncated(bet: f64, m: f64, cap: f64) -> f64 {
    let room = 1.0 - m;
    if room > 0.0 {
        bet.min(cap / room)
    } else {
        bet
    }
}

/// Wealth path `W_1(m), ..., W_n(m)` for values already scaled to `[0, 1]`.
pub fn betting_wealth_path(xs: &[f64], m: f64, spec: &BettingSpec) -> Vec<f64> {
    let bets = raw_bets(xs, spec);
    let mut wealth = 1.0;
    xs.iter()
        .zip(&bets)
        .map(|(&x, &b)| {
            wealth *= 1.0 + truncated(b, m, spec.bet_cap) * (m - x);
            wealth
        })
        .collect()
}

/// Upper confidence bound at level `1 - delta_s` on the mean of i.i.d.
/// values known to lie in `value_range`.
pub fn betting_upper_bound(
    values: &[f64],
    value_range: (f64, f64),
    spec: &BettingSpec,
) -> Result<f64> {
    spec.validate()?;
    let (lo, hi) = value_range;
    let xs = rescale(values, lo, hi)?;
    if xs.is_empty() {
        return Ok(hi);
    }
    let bets = raw_bets(&xs, spec);
    let threshold = 1.0 / spec.delta_s;
    let last = spec.grid_size - 1;
    let grid = |k: usize| k as f64 / last as f64;

    let rejected = |m: f64| {
        let mut wealth = 1.0;
        for (&x, &b) in xs.iter().zip(&bets) {
            wealth *= 1.0 + truncated(b, m, spec.bet_cap) * (m - x);
            if wealth >= threshold {
                return true;
            }
        }
        false
    };

    let largest_kept = (0..=last).rev().find(|&k| !rejected(grid(k)));
    let bound01 = match largest_kept {
        Some(k) => grid((k + 1).min(last)),
        None => 0.0,
    };
    Ok(lo + bound01 * (hi - lo))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(v: &[(f64, f64)]) -> Vec<LabeledLossPair> {
        v.iter()
            .map(|&(a, b)| LabeledLossPair::new(a, b).unwrap())
            .collect()
    }

    #[test]
    fn blockwise_hand_example() {
        let z = blockwise_ppi_values(
            &pairs(&[(0.2, 0.3), (0.4, 0.5)]),
            &[0.1, 0.3, 0.5, 0.7],
            1.0,
        )
        .unwrap();
        assert!(!z.degenerate);
        assert!((z.values[0] - 0.1).abs() < 1e-12);
        assert!((z.values[1] - 0.5).abs() < 1e-12);
        let mean = (z.values[0] + z.values[1]) / 2.0;
        assert!((mean - 0.3).abs() < 1e-12);
    }

    #[test]
    fn blockwise_eta_zero_gives_true_losses() {
        let l = pairs(&[(0.2, 0.9), (0.7, 0.1), (1.0, 0.0)]);
        let z = blockwise_ppi_values(&l, &[0.5; 7], 0.0).unwrap();
        assert_eq!(z.values, vec![0.2, 0.7, 1.0]);
    }

    #[test]
    fn blockwise_empty_unlabeled_is_degenerate() {
        let l = pairs(&[(0.2, 0.9), (0.7, 0.1)]);
        let z = blockwise_ppi_values(&l, &[], 1.0).unwrap();
        assert!(z.degenerate);
        assert!((z.values[0] - (0.2 - 0.9)).abs() < 1e-15);
        assert!((z.values[1] - (0.7 - 0.1)).abs() < 1e-15);
        assert!(blockwise_ppi_values(&[], &[0.1], 1.0).is_err());
    }

    #[test]
    fn blockwise_uneven_blocks() {
        // 5 unlabeled over 2 labeled: blocks of 3 and 2
        let l = pairs(&[(0.0, 0.0), (0.0, 0.0)]);
        let z = blockwise_ppi_values(&l, &[0.3, 0.6, 0.9, 0.2, 0.4], 1.0).unwrap();
        assert!((z.values[0] - 0.6).abs() < 1e-12);
        assert!((z.values[1] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn constant_sample_bound_shrinks_toward_value() {
        let spec = BettingSpec::default();
        let mut prev = f64::INFINITY;
        for n in [20, 100, 500, 2000] {
            let b = betting_upper_bound(&vec![0.3; n], (0.0, 1.0), &spec).unwrap();
            assert!(b >= 0.3, "n = {n}: {b}");
            assert!(b <= prev);
            prev = b;
        }
        assert!(prev < 0.32, "{prev}");
    }

    #[test]
    fn smaller_delta_is_more_conservative() {
        let xs: Vec<f64> = (0..300).map(|i| ((i * 37) % 101) as f64 / 100.0).collect();
        let mut prev = 0.0;
        for delta in [0.5, 0.2, 0.1, 0.05, 0.01, 0.001] {
            let spec = BettingSpec {
                delta_s: delta,
                ..Default::default()
            };
            let b = betting_upper_bound(&xs, (0.0, 1.0), &spec).unwrap();
            assert!(b >= prev, "delta = {delta}: {b} < {prev}");
            prev = b;
        }
    }

    #[test]
    fn bound_respects_range_mapping() {
        let spec = BettingSpec::default();
        let xs = vec![0.5; 200];
        let b01 = betting_upper_bound(&xs, (0.0, 1.0), &spec).unwrap();
        let shifted: Vec<f64> = xs.iter().map(|x| 3.0 * x - 1.0).collect();
        let b = betting_upper_bound(&shifted, (-1.0, 2.0), &spec).unwrap();
        assert!((b - (3.0 * b01 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_values_rejected() {
        let spec = BettingSpec::default();
        assert!(matches!(
            betting_upper_bound(&[0.2, 1.3], (0.0, 1.0), &spec),
            Err(Error::Range(_))
        ));
        assert!(betting_upper_bound(&[0.2], (1.0, 1.0), &spec).is_err());
    }

    #[test]
    fn wealth_stays_positive() {
        let spec = BettingSpec::default();
        let xs: Vec<f64> = (0..500)
            .map(|i| if i % 3 == 0 { 1.0 } else { 0.9 })
            .collect();
        for m in [0.0, 0.2, 0.5, 0.9, 1.0] {
            assert!(betting_wealth_path(&xs, m, &spec).iter().all(|&w| w > 0.0));
        }
    }
}
