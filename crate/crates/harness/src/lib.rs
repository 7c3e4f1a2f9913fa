//! Config-driven experiments for the `minimax-core` estimators: random
//! Gaussian singleton problems for the linear estimator, hazard-rate
//! estimation by bisection, Monte-Carlo coverage, CSV output and SVG
//! boxplots.

pub mod boxplot;
pub mod cli;
pub mod config;
pub mod error;
pub mod hazard;
pub mod linear_exp;
pub mod output;
pub mod selftest;

pub use error::{HarnessError, Result};
