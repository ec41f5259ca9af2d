//! Benchmarks for the resiliency combinators: an artificial fixed-grain
//! workload, a 1D advection stencil, and the campaign driver that sweeps
//! them and writes CSV or JSON reports.

pub mod artificial;
pub mod campaign;
pub mod cli;
pub mod report;
pub mod stats;
pub mod stencil;
