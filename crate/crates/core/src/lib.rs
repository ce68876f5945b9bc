//! Market data, scenario generation, portfolio optimization and backtesting.

// Negated comparisons below are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod error;
pub mod gan;
pub mod market;
pub mod portfolio;
pub mod simulation;

pub use error::{Error, Result};
