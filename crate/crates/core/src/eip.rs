//! Effective intended purposes of topics and topic filters.
//!
//! The EIP of a concrete topic is the union of every reservation matching
//! it. The EIP of a filter is the restrictive combination of the EIPs of
//! all topics the filter can match. Topics are not known in advance, so
//! [`topic_classes`] enumerates the distinct sets of reservations that some
//! topic inside the filter can match at the same time. The enumeration is
//! symbolic: at each level a topic can either take one of the literals
//! mentioned by the relevant filters or a fresh literal that none of them
//! mention, and it can end at any depth.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::purpose::{merge_restrictive, merge_union, IpTuple, Purpose};
use crate::topic::{FilterLevel, TopicFilter};

/// Effective intended purposes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Eip {
    /// No reservation applies.
    Unrestricted,
    Restricted(Arc<IpTuple>),
}

impl Eip {
    pub fn restricted(tuple: IpTuple) -> Self {
        Eip::Restricted(Arc::new(tuple))
    }

    pub fn is_restricted(&self) -> bool {
        matches!(self, Eip::Restricted(_))
    }

    pub fn tuple(&self) -> Option<&IpTuple> {
        match self {
            Eip::Unrestricted => None,
            Eip::Restricted(t) => Some(t),
        }
    }

    /// Delivery decision for an access purpose.
    ///
    /// Unrestricted space admits anything (including a missing purpose)
    /// unless `strict`; restricted space requires a compatible purpose.
    pub fn admits(&self, ap: Option<&Purpose>, strict: bool) -> bool {
        match (self, ap) {
            (Eip::Unrestricted, _) => !strict,
            (Eip::Restricted(t), Some(ap)) => t.is_compatible(ap),
            (Eip::Restricted(_), None) => false,
        }
    }
}

/// How reservation-free topic space is treated in filter queries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnreservedPolicy {
    AllowAll,
    DenyAll,
}

/// Sets of indices into `candidates`, one per class of topics matched by
/// `filter`. Every topic matched by `filter` matches exactly the
/// candidates of one returned set, and every returned set is realized by
/// at least one topic.
pub fn topic_classes(filter: &TopicFilter, candidates: &[&TopicFilter]) -> BTreeSet<Vec<usize>> {
    // Index 0 is the query filter, candidates follow.
    let mut all: Vec<&[FilterLevel]> = Vec::with_capacity(candidates.len() + 1);
    all.push(filter.levels());
    all.extend(candidates.iter().map(|c| c.levels()));

    let mut classes = BTreeSet::new();
    let pending: Vec<usize> = (0..all.len()).collect();
    descend(&all, 0, &pending, &mut Vec::new(), &mut classes);
    classes
}

/// `pending` filters matched the first `depth` levels and still need
/// more; `absorbed` filters hit a trailing `#` and match any extension.
fn descend(
    filters: &[&[FilterLevel]],
    depth: usize,
    pending: &[usize],
    absorbed: &mut Vec<usize>,
    classes: &mut BTreeSet<Vec<usize>>,
) {
    let absorbed_before = absorbed.len();
    let mut ends_here = Vec::new();
    let mut continuing = Vec::new();
    for &i in pending {
        match filters[i].get(depth) {
            None => ends_here.push(i),
            Some(FilterLevel::MultiLevel) => absorbed.push(i),
            Some(_) => continuing.push(i),
        }
    }

    // topic ends at `depth` levels
    if depth > 0 && (ends_here.contains(&0) || absorbed.contains(&0)) {
        record(classes, ends_here.iter().chain(absorbed.iter()));
    }

    if continuing.contains(&0) || absorbed.contains(&0) {
        if continuing.is_empty() {
            // every longer topic matches exactly the absorbed filters
            record(classes, absorbed.iter());
        } else {
            let mut literals: Vec<&str> = continuing
                .iter()
                .filter_map(|&i| match &filters[i][depth] {
                    FilterLevel::Literal(l) => Some(&**l),
                    _ => None,
                })
                .collect();
            literals.sort_unstable();
            literals.dedup();

            // each mentioned literal, then a fresh one
            let choices = literals.iter().map(|l| Some(*l)).chain(std::iter::once(None));
            for choice in choices {
                let next: Vec<usize> = continuing
                    .iter()
                    .copied()
                    .filter(|&i| match (&filters[i][depth], choice) {
                        (FilterLevel::Literal(l), Some(c)) => &**l == c,
                        (FilterLevel::Literal(_), None) => false,
                        _ => true,
                    })
                    .collect();
                descend(filters, depth + 1, &next, absorbed, classes);
            }
        }
    }
    absorbed.truncate(absorbed_before);
}

fn record<'i>(classes: &mut BTreeSet<Vec<usize>>, matched: impl Iterator<Item = &'i usize>) {
    let mut class: Vec<usize> = matched.filter(|&&i| i != 0).map(|&i| i - 1).collect();
    class.sort_unstable();
    class.dedup();
    classes.insert(class);
}

/// Union of the given tuples, or `Unrestricted` when there are none.
pub fn union_eip(tuples: &[&Arc<IpTuple>]) -> Eip {
    match tuples {
        [] => Eip::Unrestricted,
        [one] => Eip::Restricted(Arc::clone(one)),
        many => Eip::restricted(merge_union(many.iter().map(|t| &***t)).expect("non-empty")),
    }
}

/// Restrictive EIP of `filter` given the reservations overlapping it.
pub fn filter_eip(
    filter: &TopicFilter,
    overlapping: &[(&TopicFilter, &Arc<IpTuple>)],
    policy: UnreservedPolicy,
) -> Eip {
    if overlapping.is_empty() {
        return match policy {
            UnreservedPolicy::AllowAll => Eip::Unrestricted,
            UnreservedPolicy::DenyAll => Eip::restricted(IpTuple::deny_all()),
        };
    }
    let filters: Vec<&TopicFilter> = overlapping.iter().map(|(f, _)| *f).collect();
    let mut branches: Vec<IpTuple> = Vec::new();
    let mut seen_deny = false;
    for class in topic_classes(filter, &filters) {
        if class.is_empty() {
            if policy == UnreservedPolicy::DenyAll && !seen_deny {
                seen_deny = true;
                branches.push(IpTuple::deny_all());
            }
            continue;
        }
        let merged = merge_union(class.iter().map(|&i| &**overlapping[i].1)).expect("non-empty");
        branches.push(merged);
    }
    match merge_restrictive(&branches) {
        Ok(t) => Eip::restricted(t),
        Err(_) => Eip::Unrestricted,
    }
}

/// True iff at least one topic matched by `filter` would be delivered to a
/// subscription holding `ap`.
pub fn any_topic_admits(
    filter: &TopicFilter,
    overlapping: &[(&TopicFilter, &Arc<IpTuple>)],
    ap: Option<&Purpose>,
    strict: bool,
) -> bool {
    if overlapping.is_empty() {
        return !strict;
    }
    let filters: Vec<&TopicFilter> = overlapping.iter().map(|(f, _)| *f).collect();
    topic_classes(filter, &filters).into_iter().any(|class| {
        let tuples: Vec<&Arc<IpTuple>> = class.iter().map(|&i| overlapping[i].1).collect();
        union_eip(&tuples).admits(ap, strict)
    })
}
