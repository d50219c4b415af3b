//! Multi-peak epidemic wave fitting.
//!
//! Weekly-averaged daily case counts are modeled as a sum of Gompertz-rate
//! peaks over a linear background; deaths follow the same peaks convolved
//! with a shared gamma delay kernel. A per-region Monte Carlo search seeds a
//! simultaneous generalized-least-squares fit across all regions, whose full
//! covariance matrix feeds confidence bands, delay-kernel summaries, and
//! per-peak case-fatality rates.

pub mod config;
pub mod error;
pub mod fit;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod seed;
pub mod uncertainty;

pub use error::{Error, Result};
