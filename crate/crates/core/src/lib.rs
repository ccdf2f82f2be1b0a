//! Load, latency and cost benchmarking for retail point-of-sale HTTP APIs.
//!
//! The crate is organized as a pipeline: [`workload`] describes what a
//! checkout terminal asks of its backend, [`engine`] drives that workload
//! against a [`target`], [`metrics`] and [`costs`] reduce the raw results,
//! and [`report`] renders tables and charts. [`cli`] ties it together.

pub mod cli;
pub mod costs;
pub mod engine;
pub mod metrics;
pub mod money;
pub mod report;
pub mod target;
pub mod workload;
