use std::collections::HashMap;
use std::sync::Arc;

use super::{ChangeNotice, Reservation, ReservationRef, ReservationStore};
use crate::eip::{union_eip, Eip};
use crate::purpose::IpTuple;
use crate::topic::{FilterLevel, TopicFilter, TopicName};

const SINGLE: &str = "+";
const MULTI: &str = "#";

#[derive(Default)]
struct Node {
    reservation: Option<(TopicFilter, Arc<IpTuple>)>,
    // literal levels plus "+" and "#"; literals can never collide with those
    children: HashMap<Box<str>, Node>,
}

impl Node {
    fn is_empty(&self) -> bool {
        self.reservation.is_none() && self.children.is_empty()
    }

    fn multi_child(&self) -> Option<ReservationRef<'_>> {
        self.children
            .get(MULTI)
            .and_then(|n| n.reservation.as_ref())
            .map(|(f, t)| (f, t))
    }

    fn own(&self) -> Option<ReservationRef<'_>> {
        self.reservation.as_ref().map(|(f, t)| (f, t))
    }

    fn collect_matching<'a>(&'a self, levels: &[&str], out: &mut Vec<&'a Arc<IpTuple>>) {
        if let Some((_, t)) = self.multi_child() {
            out.push(t);
        }
        match levels.split_first() {
            None => out.extend(self.own().map(|(_, t)| t)),
            Some((head, rest)) => {
                if let Some(child) = self.children.get(*head) {
                    child.collect_matching(rest, out);
                }
                if let Some(child) = self.children.get(SINGLE) {
                    child.collect_matching(rest, out);
                }
            }
        }
    }

    fn collect_overlapping<'a>(&'a self, query: &[FilterLevel], out: &mut Vec<ReservationRef<'a>>) {
        match query.split_first() {
            None => {
                out.extend(self.own());
                out.extend(self.multi_child());
            }
            Some((FilterLevel::MultiLevel, _)) => self.collect_all(out),
            Some((FilterLevel::SingleLevel, rest)) => {
                out.extend(self.multi_child());
                for (key, child) in &self.children {
                    if &**key != MULTI {
                        child.collect_overlapping(rest, out);
                    }
                }
            }
            Some((FilterLevel::Literal(lit), rest)) => {
                out.extend(self.multi_child());
                if let Some(child) = self.children.get(&**lit) {
                    child.collect_overlapping(rest, out);
                }
                if let Some(child) = self.children.get(SINGLE) {
                    child.collect_overlapping(rest, out);
                }
            }
        }
    }

    fn collect_all<'a>(&'a self, out: &mut Vec<ReservationRef<'a>>) {
        out.extend(self.own());
        for child in self.children.values() {
            child.collect_all(out);
        }
    }

    fn remove(&mut self, levels: &[FilterLevel]) -> bool {
        let removed = match levels.split_first() {
            None => self.reservation.take().is_some(),
            Some((head, rest)) => match self.children.get_mut(head.as_str()) {
                None => false,
                Some(child) => {
                    let removed = child.remove(rest);
                    if child.is_empty() {
                        self.children.remove(head.as_str());
                    }
                    removed
                }
            },
        };
        removed
    }
}

/// Level trie mirroring the topic hierarchy, with `+` and `#` as ordinary
/// child keys.
#[derive(Default)]
pub struct TreeStore {
    root: Node,
    len: usize,
}

impl TreeStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn find(&self, filter: &TopicFilter) -> Option<&Node> {
        let mut node = &self.root;
        for level in filter.levels() {
            node = node.children.get(level.as_str())?;
        }
        Some(node)
    }
}

impl ReservationStore for TreeStore {
    fn set_reservation(&mut self, filter: TopicFilter, tuple: IpTuple) -> ChangeNotice {
        let mut node = &mut self.root;
        for level in filter.levels() {
            node = node.children.entry(level.as_str().into()).or_default();
        }
        if node.reservation.is_none() {
            self.len += 1;
        }
        node.reservation = Some((filter.clone(), Arc::new(tuple)));
        ChangeNotice { filter }
    }

    fn remove_reservation(&mut self, filter: &TopicFilter) -> ChangeNotice {
        if self.root.remove(filter.levels()) {
            self.len -= 1;
        }
        ChangeNotice {
            filter: filter.clone(),
        }
    }

    fn get(&self, filter: &TopicFilter) -> Option<Arc<IpTuple>> {
        self.find(filter)?.reservation.as_ref().map(|(_, t)| Arc::clone(t))
    }

    fn len(&self) -> usize {
        self.len
    }

    fn reservations(&self) -> Vec<Reservation> {
        let mut all = Vec::with_capacity(self.len);
        self.root.collect_all(&mut all);
        all.into_iter()
            .map(|(f, t)| Reservation {
                filter: f.clone(),
                tuple: Arc::clone(t),
            })
            .collect()
    }

    fn combined_eip(&self, topic: &TopicName) -> Eip {
        let levels: Vec<&str> = topic.levels().collect();
        let mut matched = Vec::new();
        self.root.collect_matching(&levels, &mut matched);
        union_eip(&matched)
    }

    fn overlapping(&self, filter: &TopicFilter) -> Vec<ReservationRef<'_>> {
        let mut out = Vec::new();
        self.root.collect_overlapping(filter.levels(), &mut out);
        out
    }

    fn describe(&self) -> String {
        format!("tree({} reservations)", self.len)
    }
}
