//! Reservation stores.
//!
//! Three implementations sit behind [`ReservationStore`]: a flat hash map
//! that scans every entry, a level trie that walks only the relevant
//! branches, and a caching wrapper that memoizes EIP answers until the
//! next write.

mod cached;
mod flat;
mod tree;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

pub use cached::CachedStore;
pub use flat::FlatStore;
pub use tree::TreeStore;

use crate::eip::{self, Eip, UnreservedPolicy};
use crate::purpose::{IpTuple, Purpose};
use crate::topic::{TopicFilter, TopicName};

/// A topic filter bound to an intended-purpose tuple.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reservation {
    pub filter: TopicFilter,
    pub tuple: Arc<IpTuple>,
}

/// Emitted by every write. Carries the filter whose reservation changed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChangeNotice {
    pub filter: TopicFilter,
}

pub type ReservationRef<'a> = (&'a TopicFilter, &'a Arc<IpTuple>);

pub trait ReservationStore: Send + Sync {
    /// Stores `tuple` under `filter`, replacing any previous tuple.
    fn set_reservation(&mut self, filter: TopicFilter, tuple: IpTuple) -> ChangeNotice;

    /// Removes the reservation stored under exactly `filter`, if any.
    fn remove_reservation(&mut self, filter: &TopicFilter) -> ChangeNotice;

    fn get(&self, filter: &TopicFilter) -> Option<Arc<IpTuple>>;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn reservations(&self) -> Vec<Reservation>;

    /// Union of all reservations whose filter matches `topic`.
    fn combined_eip(&self, topic: &TopicName) -> Eip;

    /// All reservations whose filter overlaps `filter`.
    fn overlapping(&self, filter: &TopicFilter) -> Vec<ReservationRef<'_>>;

    fn reservations_overlapping(&self, filter: &TopicFilter) -> Vec<Reservation> {
        self.overlapping(filter)
            .into_iter()
            .map(|(f, t)| Reservation {
                filter: f.clone(),
                tuple: Arc::clone(t),
            })
            .collect()
    }

    /// Restrictive combination over every topic `filter` can match.
    fn filter_eip(&self, filter: &TopicFilter, policy: UnreservedPolicy) -> Eip {
        eip::filter_eip(filter, &self.overlapping(filter), policy)
    }

    /// True iff some topic matched by `filter` admits `ap`.
    fn any_topic_admits(&self, filter: &TopicFilter, ap: Option<&Purpose>, strict: bool) -> bool {
        eip::any_topic_admits(filter, &self.overlapping(filter), ap, strict)
    }

    fn describe(&self) -> String;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum StoreKind {
    Flat,
    #[default]
    Tree,
}

impl FromStr for StoreKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flat" => Ok(StoreKind::Flat),
            "tree" => Ok(StoreKind::Tree),
            other => Err(format!("unknown store kind {other:?} (expected flat or tree)")),
        }
    }
}

impl fmt::Display for StoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StoreKind::Flat => "flat",
            StoreKind::Tree => "tree",
        })
    }
}

/// Builds a store of the given kind pre-populated with `reservations`.
pub fn build_store<I>(kind: StoreKind, cache: bool, reservations: I) -> Box<dyn ReservationStore>
where
    I: IntoIterator<Item = Reservation>,
{
    let mut store: Box<dyn ReservationStore> = match kind {
        StoreKind::Flat => Box::new(FlatStore::new()),
        StoreKind::Tree => Box::new(TreeStore::new()),
    };
    for r in reservations {
        store.set_reservation(r.filter, (*r.tuple).clone());
    }
    if cache {
        Box::new(CachedStore::new(store))
    } else {
        store
    }
}
