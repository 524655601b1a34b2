//! Online risk monitoring for deployed models.
//!
//! The engine consumes per-step batches of precomputed losses (a few labeled
//! pairs plus many synthetic-label losses on unlabeled inputs) and maintains
//! an anytime-valid lower confidence bound on the running test risk. An
//! alarm is raised when that bound exceeds an upper bound on the nominal
//! source risk by more than a tolerance. Under the null of no harmful shift,
//! the probability of ever raising an alarm is at most `delta_s + delta_t`.
//!
//! Three monitors are provided:
//!
//! * **SRM**: supervised, uses labeled losses only.
//! * **PPRM**: prediction-powered, combines labeled losses with synthetic
//!   losses through a rectified estimator whose reliance weight `eta` is
//!   fixed or chosen adaptively from past data.
//! * **URM**: unsupervised, uses proxy exceedances only.
//!
//! Module map:
//!
//! * [`estimators`]: pointwise risk estimators and the `eta` selector.
//! * [`bounds`]: CM-EB confidence sequences, Hoeffding and betting bounds.
//! * [`monitors`]: the monitor state machines and source calibration.
//! * [`simulator`]: seeded synthetic loss streams with controlled drift.
//! * [`harness`]: replicated Monte Carlo experiments.
//! * [`io`]: stream/trace/config file formats and the CLI commands.

pub mod bounds;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod io;
pub mod monitors;
pub mod simulator;

pub use error::{Error, Result};
