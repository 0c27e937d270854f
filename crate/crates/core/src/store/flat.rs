use std::collections::HashMap;
use std::sync::Arc;

use super::{ChangeNotice, Reservation, ReservationRef, ReservationStore};
use crate::eip::{union_eip, Eip};
use crate::purpose::IpTuple;
use crate::topic::{TopicFilter, TopicName};

/// Hash map keyed by canonical filter text. Every query scans all entries.
#[derive(Default)]
pub struct FlatStore {
    entries: HashMap<String, (TopicFilter, Arc<IpTuple>)>,
}

impl FlatStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl ReservationStore for FlatStore {
    fn set_reservation(&mut self, filter: TopicFilter, tuple: IpTuple) -> ChangeNotice {
        self.entries
            .insert(filter.as_str().to_owned(), (filter.clone(), Arc::new(tuple)));
        ChangeNotice { filter }
    }

    fn remove_reservation(&mut self, filter: &TopicFilter) -> ChangeNotice {
        self.entries.remove(filter.as_str());
        ChangeNotice {
            filter: filter.clone(),
        }
    }

    fn get(&self, filter: &TopicFilter) -> Option<Arc<IpTuple>> {
        self.entries.get(filter.as_str()).map(|(_, t)| Arc::clone(t))
    }

    fn len(&self) -> usize {
        self.entries.len()
    }

    fn reservations(&self) -> Vec<Reservation> {
        self.entries
            .values()
            .map(|(filter, tuple)| Reservation {
                filter: filter.clone(),
                tuple: Arc::clone(tuple),
            })
            .collect()
    }

    fn combined_eip(&self, topic: &TopicName) -> Eip {
        let matched: Vec<&Arc<IpTuple>> = self
            .entries
            .values()
            .filter(|(filter, _)| filter.matches(topic))
            .map(|(_, tuple)| tuple)
            .collect();
        union_eip(&matched)
    }

    fn overlapping(&self, filter: &TopicFilter) -> Vec<ReservationRef<'_>> {
        self.entries
            .values()
            .filter(|(f, _)| f.overlaps(filter))
            .map(|(f, t)| (f, t))
            .collect()
    }

    fn describe(&self) -> String {
        format!("flat({} reservations)", self.entries.len())
    }
}
