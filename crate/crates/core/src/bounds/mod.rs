//! Confidence bounds on means of bounded values.
//!
//! * [`cmeb`]: anytime-valid lower confidence sequences for running means.
//! * [`betting`]: fixed-sample upper bounds by testing by betting, plus the
//!   block-wise prediction-powered values they are fed with.
//! * [`hoeffding_radius`]: the classical fixed-sample radius.

pub mod betting;
pub mod cmeb;
pub mod quadrature;
pub mod variance;

pub use betting::{
    betting_upper_bound, betting_wealth_path, blockwise_ppi_values, BettingSpec, BlockwiseValues,
};
pub use cmeb::{cm_eb_radius, mixture_integral, psi_e, CmEb, ConfidenceSequenceSpec};
pub use variance::VarianceProcess;

use crate::error::{Error, Result};

/// `sqrt(ln(1 / delta) / (2 n))`, the one-sided Hoeffding radius for the
/// mean of `n` values in `[0, 1]`.
pub fn hoeffding_radius(n: usize, delta: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Precondition("Hoeffding radius needs n >= 1".into()));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Parameter(format!(
            "delta = {delta} must lie in (0, 1]"
        )));
    }
    Ok(((1.0 / delta).ln() / (2.0 * n as f64)).sqrt())
}
