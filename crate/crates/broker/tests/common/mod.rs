#![allow(dead_code)]

use std::time::Duration;

use pbac_broker::{Auditor, BrokerConfig, Client, Message, RunningServer, Server};
use pbac_core::{EngineConfig, Mode};

pub async fn start(mode: Mode) -> RunningServer {
    start_with(EngineConfig::new(mode)).await
}

pub async fn start_with(engine: EngineConfig) -> RunningServer {
    start_config(BrokerConfig { audit: true, ..BrokerConfig::ephemeral(engine) }).await
}

pub async fn start_config(config: BrokerConfig) -> RunningServer {
    Server::bind(config).await.unwrap().spawn().unwrap()
}

pub async fn client(server: &RunningServer, id: &str) -> Client {
    Client::connect(server.addr, id, 30).await.unwrap()
}

/// Publishes at QoS 1 so the broker has acted on it when this returns.
pub async fn publish(c: &Client, topic: &str, payload: &str) {
    c.publish(topic, payload.as_bytes().to_vec(), 1).await.unwrap();
}

/// Everything the broker queued for `c` so far.
pub async fn received(c: &mut Client) -> Vec<Message> {
    c.ping().await.unwrap();
    c.drain()
}

pub async fn settle() {
    tokio::time::sleep(Duration::from_millis(50)).await;
}

/// Routing/registry coherence and zero audit violations.
pub fn assert_sound(server: &RunningServer) {
    let snapshot = server.broker.snapshot();
    assert_eq!(snapshot.coherence_errors(), Vec::<String>::new());
    let (_, violations) = Auditor::audit(&server.broker.audit_log());
    assert!(violations.is_empty(), "{violations:?}");
}
