use serde::{Deserialize, Serialize};

use crate::error::{check_unit, Result};

/// Running `V_t = sum (z_t - zhat_t)^2` with `zhat_t` the mean of the values
/// seen before step `t` (or the initial prediction at `t = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceProcess {
    pub v: f64,
    /// Prediction for the next value.
    pub last_running_mean: f64,
    pub count: u64,
    sum: f64,
}

impl VarianceProcess {
    pub fn new(initial_prediction: f64) -> Self {
        Self {
            v: 0.0,
            last_running_mean: initial_prediction,
            count: 0,
            sum: 0.0,
        }
    }

    pub fn update(&mut self, z: f64) -> Result<()> {
        check_unit(z, "variance process input")?;
        let err = z - self.last_running_mean;
        self.v += err * err;
        self.count += 1;
        self.sum += z;
        self.last_running_mean = (self.sum / self.count as f64).clamp(0.0, 1.0);
        Ok(())
    }

    /// Mean of every value seen so far (0 before the first update).
    pub fn running_mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }
}

impl Default for VarianceProcess {
    fn default() -> Self {
        Self::new(0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_prediction_adds_nothing() {
        let mut vp = VarianceProcess::default();
        vp.update(0.5).unwrap();
        assert_eq!(vp.v, 0.0);
        assert_eq!(vp.count, 1);
    }

    #[test]
    fn first_miss() {
        let mut vp = VarianceProcess::default();
        vp.update(1.0).unwrap();
        assert_eq!(vp.v, 0.25);
        assert_eq!(vp.last_running_mean, 1.0);
        vp.update(0.0).unwrap();
        assert_eq!(vp.v, 1.25);
        assert_eq!(vp.last_running_mean, 0.5);
    }

    #[test]
    fn rejects_out_of_range() {
        let mut vp = VarianceProcess::default();
        assert!(vp.update(1.01).is_err());
        assert!(vp.update(f64::NAN).is_err());
        assert_eq!(vp.count, 0);
    }

    proptest! {
        #[test]
        fn bounded_and_nondecreasing(zs in prop::collection::vec(0.0f64..=1.0, 1..200)) {
            let mut vp = VarianceProcess::default();
            let mut prev = 0.0;
            for &z in &zs {
                vp.update(z).unwrap();
                prop_assert!(vp.v >= prev);
                prev = vp.v;
            }
            prop_assert!(vp.v <= vp.count as f64);
        }
    }
}
