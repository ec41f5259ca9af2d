//! Fault-tolerant task launching on a small work-stealing task runtime.
//!
//! The [`runtime`] module provides the substrate: a worker pool, deferred
//! results ([`TaskHandle`]) and dataflow joins. [`resiliency`] layers the
//! replay and replicate combinators on top, and [`fault`] injects
//! controlled failures for testing and benchmarking them.

pub mod error;
pub mod fault;
pub mod handle;
pub mod resiliency;
pub mod runtime;

pub use error::{ErrorKind, ErrorPayload, TaskResult};
pub use handle::{Promise, TaskHandle};
pub use runtime::{run_pool, when_all, ConfigError, QueuePolicy, Runtime, RuntimeConfig, ThreadPool};
