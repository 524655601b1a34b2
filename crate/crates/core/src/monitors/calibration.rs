use serde::{Deserialize, Serialize};

use super::config::{MonitorConfig, SourceBoundMethod};
use crate::bounds::{betting_upper_bound, blockwise_ppi_values, hoeffding_radius};
use crate::error::{Error, Result};
use crate::estimators::LabeledLossPair;

/// Pooled calibration data drawn from the nominal source distribution.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SourceData {
    pub labeled: Vec<LabeledLossPair>,
    /// Synthetic losses on unlabeled source inputs, in arrival order.
    pub unlabeled_synth: Vec<f64>,
    /// Proxy value of each labeled input (empty when not recorded).
    pub labeled_proxies: Vec<f64>,
}

/// Upper bound on the source risk together with how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceCalibration {
    pub method: SourceBoundMethod,
    pub estimate: f64,
    pub upper_bound: f64,
    pub n0: usize,
    #[serde(rename = "N0")]
    pub big_n0: usize,
    pub eta0: f64,
}

/// Computes `U_0` from source data.
///
/// The betting method pairs each labeled sample with a block of unlabeled
/// samples at weight `config.eta0`; when there are fewer unlabeled than
/// labeled samples the blocks are incomplete and `eta0` falls back to 0.
pub fn calibrate_source(data: &SourceData, config: &MonitorConfig) -> Result<SourceCalibration> {
    let n0 = data.labeled.len();
    if n0 == 0 {
        return Err(Error::Calibration(
            "source data has no labeled samples".into(),
        ));
    }
    for pair in &data.labeled {
        pair.validate()?;
    }
    let big_n0 = data.unlabeled_synth.len();

    match config.source_bound_method {
        SourceBoundMethod::HoeffdingLabeledOnly => {
            let estimate = data.labeled.iter().map(|p| p.true_loss).sum::<f64>() / n0 as f64;
            Ok(SourceCalibration {
                method: SourceBoundMethod::HoeffdingLabeledOnly,
                estimate,
                upper_bound: estimate + hoeffding_radius(n0, config.delta_s)?,
                n0,
                big_n0,
                eta0: 0.0,
            })
        }
        SourceBoundMethod::BettingPpi => {
            let mut eta0 = config.eta0;
            let mut z = blockwise_ppi_values(&data.labeled, &data.unlabeled_synth, eta0)?;
            if z.degenerate {
                eta0 = 0.0;
                z = blockwise_ppi_values(&data.labeled, &data.unlabeled_synth, eta0)?;
            }
            let estimate = z.values.iter().sum::<f64>() / n0 as f64;
            let upper_bound =
                betting_upper_bound(&z.values, (-eta0, 1.0 + eta0), &config.betting_spec())?;
            Ok(SourceCalibration {
                method: SourceBoundMethod::BettingPpi,
                estimate,
                upper_bound,
                n0,
                big_n0,
                eta0,
            })
        }
    }
}
