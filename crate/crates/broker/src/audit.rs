//! Decision log and an independent post-hoc soundness check.
//!
//! The [`Auditor`] replays the log with its own bookkeeping. It only uses
//! topic matching and purpose-closure membership from the core crate, not
//! the policy stores or the engine.

use std::collections::{BTreeMap, HashMap};

use pbac_core::{EngineConfig, IpTuple, Purpose, TopicFilter, TopicName};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuditEvent {
    Config(EngineConfig),
    Reserve {
        filter: TopicFilter,
        tuple: Option<IpTuple>,
    },
    /// A routing entry became active with the given access purpose.
    Route {
        client_id: String,
        filter: TopicFilter,
        ap: Option<Purpose>,
    },
    /// A routing entry was removed (unsubscribe, denial, pause, disconnect).
    Unroute {
        client_id: String,
        filter: TopicFilter,
    },
    SubscribeDenied {
        client_id: String,
        raw_filter: String,
    },
    Deliver {
        client_id: String,
        topic: TopicName,
    },
    Withhold {
        client_id: String,
        topic: TopicName,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Index of the offending event in the log.
    pub index: usize,
    pub client_id: String,
    pub topic: String,
    pub reason: &'static str,
}

#[derive(Debug, Default)]
pub struct Auditor {
    strict: bool,
    reservations: BTreeMap<String, (TopicFilter, IpTuple)>,
    routes: HashMap<String, BTreeMap<String, (TopicFilter, Option<Purpose>)>>,
    deliveries: usize,
}

impl Auditor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn deliveries(&self) -> usize {
        self.deliveries
    }

    /// Replays `events` and returns every delivery that breaks purpose
    /// limitation.
    pub fn audit(events: &[AuditEvent]) -> (Auditor, Vec<Violation>) {
        let mut auditor = Auditor::new();
        let mut violations = Vec::new();
        for (index, event) in events.iter().enumerate() {
            if let Some((client_id, topic, reason)) = auditor.observe(event) {
                violations.push(Violation {
                    index,
                    client_id,
                    topic,
                    reason,
                });
            }
        }
        (auditor, violations)
    }

    fn observe(&mut self, event: &AuditEvent) -> Option<(String, String, &'static str)> {
        match event {
            AuditEvent::Config(c) => self.strict = c.strict,
            AuditEvent::Reserve { filter, tuple: Some(t) } => {
                self.reservations
                    .insert(filter.as_str().to_owned(), (filter.clone(), t.clone()));
            }
            AuditEvent::Reserve { filter, tuple: None } => {
                self.reservations.remove(filter.as_str());
            }
            AuditEvent::Route { client_id, filter, ap } => {
                self.routes
                    .entry(client_id.clone())
                    .or_default()
                    .insert(filter.as_str().to_owned(), (filter.clone(), ap.clone()));
            }
            AuditEvent::Unroute { client_id, filter } => {
                if let Some(m) = self.routes.get_mut(client_id) {
                    m.remove(filter.as_str());
                }
            }
            AuditEvent::SubscribeDenied { .. } | AuditEvent::Withhold { .. } => {}
            AuditEvent::Deliver { client_id, topic } => {
                self.deliveries += 1;
                return self
                    .check(client_id, topic)
                    .map(|reason| (client_id.clone(), topic.as_str().to_owned(), reason));
            }
        }
        None
    }

    fn check(&self, client_id: &str, topic: &TopicName) -> Option<&'static str> {
        if topic.as_str().starts_with('!') {
            return Some("command topic delivered");
        }
        let routes: Vec<&Option<Purpose>> = self
            .routes
            .get(client_id)
            .into_iter()
            .flat_map(|m| m.values())
            .filter(|(f, _)| f.matches(topic))
            .map(|(_, ap)| ap)
            .collect();
        if routes.is_empty() {
            return Some("no active subscription matches");
        }
        let matching: Vec<&IpTuple> = self
            .reservations
            .values()
            .filter(|(f, _)| f.matches(topic))
            .map(|(_, t)| t)
            .collect();
        if matching.is_empty() {
            return self.strict.then_some("unreserved topic delivered in strict mode");
        }
        // union of all matching reservations, evaluated set by set
        let admitted = |ap: &Purpose| {
            matching.iter().any(|t| t.aip.closure_contains(ap)) && !matching.iter().any(|t| t.pip.closure_contains(ap))
        };
        if routes.iter().any(|ap| ap.as_ref().is_some_and(admitted)) {
            None
        } else {
            Some("no matching subscription holds a compatible access purpose")
        }
    }
}
