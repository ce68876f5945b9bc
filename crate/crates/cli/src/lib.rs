//! Batch pipeline behind the `trendgan` binary.

pub mod commands;
pub mod config;
pub mod pipeline;
pub mod svg;
