//! Simulation toolkit for comparing conditional, crude, IPTW and marginal
//! hazard ratios in randomized trials with a single prognostic covariate.
//!
//! The pieces, bottom-up:
//!
//! - [`sim`]: cohorts with Weibull proportional-hazards event times.
//! - [`cox`]: weighted Cox partial likelihood and its maximizer.
//! - [`iptw`]: propensity scores and inverse-probability weights.
//! - [`oracle`]: the duplicate-cohort marginal hazard ratio.
//! - [`analysis`]: per-replication fits, the adjusted/crude decomposition,
//!   period-specific hazard ratios and survivor covariate trajectories.
//! - [`study`]: the scenario grid runner and its CSV/JSON outputs.

pub mod analysis;
pub mod cox;
pub mod error;
pub mod io;
pub mod iptw;
pub mod oracle;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod study;

pub use error::{Error, Result};
