//! Volatility forecasting after news shocks.
//!
//! Donor series that lived through comparable shocks each contribute an
//! estimated fixed effect on the variance intercept. Those effects are
//! weighted by how closely each donor's shock-time covariates match the
//! series under study, and the weighted sum shifts the GARCH forecast.

pub mod error;
pub mod estimation;
pub mod evaluation;
pub mod garch;
pub mod montecarlo;
pub mod multiverse;
pub mod optim;
pub mod pipeline;
pub mod similarity;

pub use error::{Error, Result};
