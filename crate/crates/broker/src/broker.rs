//! Session registry, command dispatch, routing and delivery gating.
//!
//! All policy, registry and routing mutations happen under one lock, so
//! every decision sees a consistent snapshot. Parsing happens before the
//! lock is taken; delivery only enqueues onto per-session channels.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use bytes::Bytes;
use parking_lot::Mutex;
use pbac_core::{
    Command, CommandCodec, CommandError, CommandKind, EngineConfig, FilterEngine, InvalidSetting, IpTuple,
    MalformedTopic, Mode, PauseAction, PauseKind, Presubscription, SubscribeDecision, SubscriptionRecord,
    TopicName,
};
use thiserror::Error;
use tokio::sync::{mpsc, Notify};
use tracing::{debug, info, trace};

use crate::audit::AuditEvent;
use crate::config::BrokerConfig;
use crate::packet::{Packet, SUBACK_FAILURE};
use crate::routing::RoutingTable;

/// Work for a session's writer.
#[derive(Debug, Clone)]
pub enum Outbound {
    Deliver { topic: Arc<str>, payload: Bytes, qos: u8 },
    Packet(Packet),
}

/// The broker side of one connected session.
pub struct SessionHandle {
    pub client_id: String,
    pub generation: u64,
    pub sender: mpsc::UnboundedSender<Outbound>,
    pub outbound: mpsc::UnboundedReceiver<Outbound>,
    /// Notified when a newer connection takes over this client id.
    pub kicked: Arc<Notify>,
}

struct Session {
    generation: u64,
    sender: mpsc::UnboundedSender<Outbound>,
    kicked: Arc<Notify>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DeliveryCounts {
    pub delivered: usize,
    pub withheld: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PublishOutcome {
    /// Consumed as a broker command; never routed.
    Command(CommandKind),
    Routed(DeliveryCounts),
}

#[derive(Debug, Error)]
pub enum PublishError {
    #[error(transparent)]
    Command(#[from] CommandError),
    #[error(transparent)]
    Setting(#[from] InvalidSetting),
    #[error(transparent)]
    Topic(#[from] MalformedTopic),
}

/// Introspection dump for tests and diagnostics.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub config: EngineConfig,
    pub reservations: Vec<(String, IpTuple)>,
    pub records: Vec<SubscriptionRecord>,
    pub presubscriptions: Vec<Presubscription>,
    /// (client, filter, qos)
    pub routes: BTreeSet<(String, String, u8)>,
    pub sessions: BTreeSet<String>,
}

impl Snapshot {
    /// Differences between the routing table and the unpaused records.
    pub fn coherence_errors(&self) -> Vec<String> {
        let active: BTreeSet<(String, String, u8)> = self
            .records
            .iter()
            .filter(|r| !r.paused)
            .map(|r| (r.client_id.clone(), r.filter.as_str().to_owned(), r.qos))
            .collect();
        let mut errors: Vec<String> = Vec::new();
        for r in self.routes.difference(&active) {
            errors.push(format!("route without active record: {r:?}"));
        }
        for r in active.difference(&self.routes) {
            errors.push(format!("active record without route: {r:?}"));
        }
        for r in &self.records {
            if !self.sessions.contains(&r.client_id) {
                errors.push(format!("record of disconnected client: {} {}", r.client_id, r.filter));
            }
        }
        errors
    }
}

struct State {
    engine: FilterEngine,
    routing: RoutingTable,
    sessions: HashMap<String, Session>,
    next_generation: u64,
    audit: Option<Vec<AuditEvent>>,
}

impl State {
    fn record(&mut self, event: impl FnOnce() -> AuditEvent) {
        if let Some(log) = self.audit.as_mut() {
            log.push(event());
        }
    }
}

pub struct Broker {
    codec: CommandCodec,
    lenient_commands: bool,
    state: Mutex<State>,
}

impl Broker {
    pub fn new(config: &BrokerConfig) -> Self {
        let codec = config.codec();
        let audit = config.audit.then(|| vec![AuditEvent::Config(config.engine)]);
        Broker {
            state: Mutex::new(State {
                engine: FilterEngine::with_codec(config.engine, codec.clone()),
                routing: RoutingTable::new(),
                sessions: HashMap::new(),
                next_generation: 0,
                audit,
            }),
            codec,
            lenient_commands: config.lenient_commands,
        }
    }

    pub fn lenient_commands(&self) -> bool {
        self.lenient_commands
    }

    pub fn engine_config(&self) -> EngineConfig {
        self.state.lock().engine.config()
    }

    /// Registers a session, taking over any older session of the same
    /// client id. The older session's subscriptions are discarded.
    pub fn connect(&self, client_id: &str) -> SessionHandle {
        let mut st = self.state.lock();
        if let Some(old) = st.sessions.remove(client_id) {
            info!(client_id, "session takeover");
            old.kicked.notify_one();
            drop_client(&mut st, client_id);
        }
        st.next_generation += 1;
        let generation = st.next_generation;
        let (sender, outbound) = mpsc::unbounded_channel();
        let kicked = Arc::new(Notify::new());
        st.sessions.insert(
            client_id.to_owned(),
            Session {
                generation,
                sender: sender.clone(),
                kicked: Arc::clone(&kicked),
            },
        );
        SessionHandle {
            client_id: client_id.to_owned(),
            generation,
            sender,
            outbound,
            kicked,
        }
    }

    /// Ends a session unless it was already taken over. Presubscriptions
    /// of the client survive.
    pub fn disconnect(&self, client_id: &str, generation: u64) -> bool {
        let mut st = self.state.lock();
        match st.sessions.get(client_id) {
            Some(s) if s.generation == generation => {
                st.sessions.remove(client_id);
                drop_client(&mut st, client_id);
                true
            }
            _ => false,
        }
    }

    pub fn handle_publish(
        &self,
        client_id: &str,
        topic: &str,
        payload: &Bytes,
        qos: u8,
    ) -> Result<PublishOutcome, PublishError> {
        if let Some(command) = self.codec.parse_publish(topic, payload)? {
            let kind = match &command {
                Command::Reserve { .. } => CommandKind::Reserve,
                Command::Presubscribe { .. } => CommandKind::Presub,
                Command::Set { .. } => CommandKind::Set,
                Command::ApSubscribe { .. } => CommandKind::Ap,
            };
            debug!(client_id, topic, "command");
            self.execute(command)?;
            return Ok(PublishOutcome::Command(kind));
        }
        let topic = TopicName::parse(topic)?;
        Ok(PublishOutcome::Routed(self.route(&topic, payload, qos)))
    }

    fn execute(&self, command: Command) -> Result<(), PublishError> {
        let mut st = self.state.lock();
        match command {
            Command::Reserve { filter, tuple } => {
                st.record(|| AuditEvent::Reserve {
                    filter: filter.clone(),
                    tuple: tuple.clone(),
                });
                let actions = st.engine.apply_reservation(filter, tuple);
                apply_actions(&mut st, &actions);
            }
            Command::Presubscribe { client_id, filter, ap } => {
                st.engine.add_presubscription(Presubscription { client_id, filter, ap });
            }
            Command::Set { key, value } => {
                let new = st.engine.config().with_setting(key, &value)?;
                reconfigure(&mut st, new);
            }
            Command::ApSubscribe { .. } => unreachable!("rejected by the codec"),
        }
        Ok(())
    }

    /// Replaces the engine configuration as a `!SET` command would.
    pub fn set_engine_config(&self, config: EngineConfig) {
        reconfigure(&mut self.state.lock(), config);
    }

    fn route(&self, topic: &TopicName, payload: &Bytes, qos: u8) -> DeliveryCounts {
        let mut guard = self.state.lock();
        let st = &mut *guard;
        let candidates: Vec<(&str, u8)> = st.routing.lookup(topic).into_iter().collect();
        let mut counts = DeliveryCounts::default();
        if candidates.is_empty() {
            return counts;
        }
        let allowed = if st.engine.config().mode == Mode::Off {
            vec![true; candidates.len()]
        } else {
            let ids: Vec<&str> = candidates.iter().map(|(c, _)| *c).collect();
            st.engine.gate_deliveries(topic, &ids)
        };
        let shared_topic: Arc<str> = topic.as_str().into();
        for ((client_id, sub_qos), ok) in candidates.into_iter().zip(allowed) {
            if !ok {
                counts.withheld += 1;
                debug!(client_id, topic = topic.as_str(), "delivery withheld");
                if let Some(log) = st.audit.as_mut() {
                    log.push(AuditEvent::Withhold {
                        client_id: client_id.to_owned(),
                        topic: topic.clone(),
                    });
                }
                continue;
            }
            let Some(session) = st.sessions.get(client_id) else {
                continue;
            };
            let sent = session.sender.send(Outbound::Deliver {
                topic: Arc::clone(&shared_topic),
                payload: payload.clone(),
                qos: qos.min(sub_qos),
            });
            if sent.is_ok() {
                trace!(client_id, topic = topic.as_str(), "delivery allowed");
                counts.delivered += 1;
                if let Some(log) = st.audit.as_mut() {
                    log.push(AuditEvent::Deliver {
                        client_id: client_id.to_owned(),
                        topic: topic.clone(),
                    });
                }
            }
        }
        counts
    }

    /// SUBACK return code per requested filter.
    pub fn handle_subscribe(&self, client_id: &str, filters: &[(String, u8)]) -> Vec<u8> {
        let mut st = self.state.lock();
        let mut codes = Vec::with_capacity(filters.len());
        for (raw, qos) in filters {
            match st.engine.on_subscribe(client_id, raw, *qos) {
                SubscribeDecision::Allow { filter, granted_qos } => {
                    info!(client_id, raw, "subscribe allowed");
                    st.routing.insert(client_id, &filter, granted_qos);
                    let ap = st.engine.subscription_purpose(client_id, &filter);
                    st.record(|| AuditEvent::Route {
                        client_id: client_id.to_owned(),
                        filter,
                        ap,
                    });
                    codes.push(granted_qos);
                }
                SubscribeDecision::Deny { filter, reason } => {
                    info!(client_id, raw, ?reason, "subscribe denied");
                    if let Some(f) = filter {
                        if st.routing.remove(client_id, &f) {
                            st.record(|| AuditEvent::Unroute {
                                client_id: client_id.to_owned(),
                                filter: f,
                            });
                        }
                    }
                    st.record(|| AuditEvent::SubscribeDenied {
                        client_id: client_id.to_owned(),
                        raw_filter: raw.clone(),
                    });
                    codes.push(SUBACK_FAILURE);
                }
            }
        }
        codes
    }

    pub fn handle_unsubscribe(&self, client_id: &str, filters: &[String]) {
        let mut st = self.state.lock();
        for raw in filters {
            if let Some(record) = st.engine.on_unsubscribe(client_id, raw) {
                if st.routing.remove(client_id, &record.filter) {
                    st.record(|| AuditEvent::Unroute {
                        client_id: client_id.to_owned(),
                        filter: record.filter,
                    });
                }
            }
        }
    }

    /// Executes pause decisions on the routing table. Idempotent.
    pub fn apply_pause_actions(&self, actions: &[PauseAction]) {
        apply_actions(&mut self.state.lock(), actions);
    }

    pub fn snapshot(&self) -> Snapshot {
        let st = self.state.lock();
        let mut reservations: Vec<(String, IpTuple)> = st
            .engine
            .store()
            .reservations()
            .into_iter()
            .map(|r| (r.filter.as_str().to_owned(), (*r.tuple).clone()))
            .collect();
        reservations.sort_by(|a, b| a.0.cmp(&b.0));
        let mut records: Vec<SubscriptionRecord> = st.engine.registry().iter().cloned().collect();
        records.sort_by(|a, b| (&a.client_id, a.filter.as_str()).cmp(&(&b.client_id, b.filter.as_str())));
        Snapshot {
            config: st.engine.config(),
            reservations,
            records,
            presubscriptions: st.engine.registry().presubscriptions().cloned().collect(),
            routes: st.routing.entries(),
            sessions: st.sessions.keys().cloned().collect(),
        }
    }

    /// Recorded decisions, empty unless auditing is enabled.
    pub fn audit_log(&self) -> Vec<AuditEvent> {
        self.state.lock().audit.clone().unwrap_or_default()
    }
}

fn reconfigure(st: &mut State, new: EngineConfig) {
    info!(mode = %new.mode, strict = new.strict, store = %new.store, cache = new.cache, "engine reconfigured");
    let actions = st.engine.reconfigure(new);
    st.record(|| AuditEvent::Config(new));
    apply_actions(st, &actions);
}

fn apply_actions(st: &mut State, actions: &[PauseAction]) {
    for a in actions {
        match a.kind {
            PauseKind::Pause => {
                info!(client_id = a.client_id.as_str(), filter = a.filter.as_str(), "pause");
                if st.routing.remove(&a.client_id, &a.filter) {
                    st.record(|| AuditEvent::Unroute {
                        client_id: a.client_id.clone(),
                        filter: a.filter.clone(),
                    });
                }
            }
            PauseKind::Unpause => {
                if st.engine.registry().get(&a.client_id, &a.filter).is_none() {
                    continue;
                }
                info!(client_id = a.client_id.as_str(), filter = a.filter.as_str(), "unpause");
                st.routing.insert(&a.client_id, &a.filter, a.qos);
                let ap = st.engine.subscription_purpose(&a.client_id, &a.filter);
                st.record(|| AuditEvent::Route {
                    client_id: a.client_id.clone(),
                    filter: a.filter.clone(),
                    ap,
                });
            }
        }
        st.engine.apply_pause(a);
    }
}

fn drop_client(st: &mut State, client_id: &str) {
    for record in st.engine.on_disconnect(client_id) {
        if st.routing.remove(client_id, &record.filter) {
            st.record(|| AuditEvent::Unroute {
                client_id: client_id.to_owned(),
                filter: record.filter,
            });
        }
    }
}
