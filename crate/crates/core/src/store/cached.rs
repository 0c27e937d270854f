use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::RwLock;

use super::{ChangeNotice, Reservation, ReservationRef, ReservationStore};
use crate::eip::{Eip, UnreservedPolicy};
use crate::purpose::IpTuple;
use crate::topic::{TopicFilter, TopicName};

/// Entries per map before the cache starts over.
const CAPACITY: usize = 1 << 16;

/// Memoizes EIP answers of an inner store. Any write clears everything.
pub struct CachedStore {
    inner: Box<dyn ReservationStore>,
    topics: RwLock<HashMap<Box<str>, Eip>>,
    filters: RwLock<HashMap<(Box<str>, UnreservedPolicy), Eip>>,
}

impl CachedStore {
    pub fn new(inner: Box<dyn ReservationStore>) -> Self {
        CachedStore {
            inner,
            topics: RwLock::default(),
            filters: RwLock::default(),
        }
    }

    pub fn into_inner(self) -> Box<dyn ReservationStore> {
        self.inner
    }

    fn invalidate(&mut self) {
        self.topics.get_mut().clear();
        self.filters.get_mut().clear();
    }

    pub fn cached_entries(&self) -> usize {
        self.topics.read().len() + self.filters.read().len()
    }
}

fn insert_bounded<K: std::hash::Hash + Eq>(map: &RwLock<HashMap<K, Eip>>, key: K, value: Eip) {
    let mut map = map.write();
    if map.len() >= CAPACITY {
        map.clear();
    }
    map.insert(key, value);
}

impl ReservationStore for CachedStore {
    fn set_reservation(&mut self, filter: TopicFilter, tuple: IpTuple) -> ChangeNotice {
        self.invalidate();
        self.inner.set_reservation(filter, tuple)
    }

    fn remove_reservation(&mut self, filter: &TopicFilter) -> ChangeNotice {
        self.invalidate();
        self.inner.remove_reservation(filter)
    }

    fn get(&self, filter: &TopicFilter) -> Option<Arc<IpTuple>> {
        self.inner.get(filter)
    }

    fn len(&self) -> usize {
        self.inner.len()
    }

    fn reservations(&self) -> Vec<Reservation> {
        self.inner.reservations()
    }

    fn combined_eip(&self, topic: &TopicName) -> Eip {
        if let Some(hit) = self.topics.read().get(topic.as_str()) {
            return hit.clone();
        }
        let eip = self.inner.combined_eip(topic);
        insert_bounded(&self.topics, topic.as_str().into(), eip.clone());
        eip
    }

    fn overlapping(&self, filter: &TopicFilter) -> Vec<ReservationRef<'_>> {
        self.inner.overlapping(filter)
    }

    fn filter_eip(&self, filter: &TopicFilter, policy: UnreservedPolicy) -> Eip {
        let key: (Box<str>, UnreservedPolicy) = (filter.as_str().into(), policy);
        if let Some(hit) = self.filters.read().get(&key) {
            return hit.clone();
        }
        let eip = self.inner.filter_eip(filter, policy);
        insert_bounded(&self.filters, key, eip.clone());
        eip
    }

    fn describe(&self) -> String {
        format!("cached({})", self.inner.describe())
    }
}
