//! Purpose-aware MQTT 3.1.1 broker.
//!
//! Wraps the policy engine of `pbac-core` in a TCP broker: commands
//! published under the configured keywords manage reservations,
//! presubscriptions and settings; subscriptions may carry an access
//! purpose; deliveries are gated according to the configured mode.

pub mod audit;
pub mod broker;
pub mod client;
pub mod config;
pub mod packet;
pub mod routing;
pub mod server;

pub use audit::{AuditEvent, Auditor, Violation};
pub use broker::{Broker, DeliveryCounts, Outbound, PublishError, PublishOutcome, SessionHandle, Snapshot};
pub use client::{Client, Message};
pub use config::{BrokerConfig, ConfigError};
pub use server::{run_connection, ConnectionError, RunningServer, Server};
