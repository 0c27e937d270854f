//! Load generation and measurement for the purpose-aware broker.
//!
//! A [`Scenario`] is expanded into a deterministic [`Workload`] (reservations,
//! subscriptions, messages). Each mode of the matrix gets a fresh broker;
//! publishers and subscribers live in this process so round-trip latency
//! can use one monotonic clock.

mod report;
mod run;
mod scenario;

pub use report::{emit_report, Report};
pub use run::{run_once, run_scenario, summarize, BenchError, RunResult, Sample};
pub use scenario::{ModeSpec, Scenario, UnknownMode, Workload};
