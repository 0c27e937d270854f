//! Subscription access purposes, presubscriptions and pause state.

use std::collections::HashMap;

use thiserror::Error;

use crate::purpose::Purpose;
use crate::topic::{TopicFilter, TopicName};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no subscription of client {client_id:?} on {filter:?}")]
pub struct UnknownSubscription {
    pub client_id: String,
    pub filter: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubscriptionRecord {
    pub client_id: String,
    pub filter: TopicFilter,
    pub qos: u8,
    pub ap: Option<Purpose>,
    pub paused: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Presubscription {
    pub client_id: String,
    pub filter: TopicFilter,
    pub ap: Purpose,
}

/// Records keyed by client id, then by canonical filter text.
#[derive(Debug, Default, Clone)]
pub struct SubscriptionRegistry {
    records: HashMap<String, HashMap<String, SubscriptionRecord>>,
    presubscriptions: HashMap<(String, String), Presubscription>,
}

impl SubscriptionRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores an unpaused record. Without an explicit purpose a pending
    /// presubscription on exactly this filter is consumed.
    pub fn upsert(&mut self, client_id: &str, filter: TopicFilter, qos: u8, ap: Option<Purpose>) -> SubscriptionRecord {
        let ap = ap.or_else(|| {
            self.presubscriptions
                .remove(&(client_id.to_owned(), filter.as_str().to_owned()))
                .map(|p| p.ap)
        });
        let record = SubscriptionRecord {
            client_id: client_id.to_owned(),
            filter,
            qos,
            ap,
            paused: false,
        };
        self.records
            .entry(client_id.to_owned())
            .or_default()
            .insert(record.filter.as_str().to_owned(), record.clone());
        record
    }

    pub fn remove(&mut self, client_id: &str, filter: &TopicFilter) -> Option<SubscriptionRecord> {
        let per_client = self.records.get_mut(client_id)?;
        let removed = per_client.remove(filter.as_str());
        if per_client.is_empty() {
            self.records.remove(client_id);
        }
        removed
    }

    /// Drops every record of a client. Presubscriptions are kept.
    pub fn remove_client(&mut self, client_id: &str) -> Vec<SubscriptionRecord> {
        self.records
            .remove(client_id)
            .map(|m| m.into_values().collect())
            .unwrap_or_default()
    }

    pub fn add_presubscription(&mut self, presub: Presubscription) {
        let key = (presub.client_id.clone(), presub.filter.as_str().to_owned());
        self.presubscriptions.insert(key, presub);
    }

    pub fn presubscription(&self, client_id: &str, filter: &TopicFilter) -> Option<&Presubscription> {
        self.presubscriptions
            .get(&(client_id.to_owned(), filter.as_str().to_owned()))
    }

    pub fn presubscriptions(&self) -> impl Iterator<Item = &Presubscription> {
        self.presubscriptions.values()
    }

    pub fn get(&self, client_id: &str, filter: &TopicFilter) -> Option<&SubscriptionRecord> {
        self.records.get(client_id)?.get(filter.as_str())
    }

    /// Records of `client_id` whose filter matches `topic`, paused or not.
    pub fn matching<'a>(
        &'a self,
        client_id: &str,
        topic: &'a TopicName,
    ) -> impl Iterator<Item = &'a SubscriptionRecord> + 'a {
        self.records
            .get(client_id)
            .into_iter()
            .flat_map(|m| m.values())
            .filter(move |r| r.filter.matches(topic))
    }

    pub fn matching_records(&self, client_id: &str, topic: &TopicName) -> Vec<SubscriptionRecord> {
        self.matching(client_id, topic).cloned().collect()
    }

    /// Records of any client whose filter overlaps `filter`.
    pub fn records_overlapping(&self, filter: &TopicFilter) -> Vec<SubscriptionRecord> {
        self.iter().filter(|r| r.filter.overlaps(filter)).cloned().collect()
    }

    pub fn set_paused(&mut self, client_id: &str, filter: &TopicFilter, paused: bool) -> Result<(), UnknownSubscription> {
        let record = self
            .records
            .get_mut(client_id)
            .and_then(|m| m.get_mut(filter.as_str()))
            .ok_or_else(|| UnknownSubscription {
                client_id: client_id.to_owned(),
                filter: filter.as_str().to_owned(),
            })?;
        record.paused = paused;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &SubscriptionRecord> {
        self.records.values().flat_map(|m| m.values())
    }

    pub fn len(&self) -> usize {
        self.records.values().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}
