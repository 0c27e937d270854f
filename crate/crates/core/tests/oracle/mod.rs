//! Brute-force reference semantics.
//!
//! Everything here works on plain strings and enumerated universes and
//! shares no code with the library's algorithms. Tests compare the two.

#![allow(dead_code)]

pub mod cases;

use std::collections::BTreeSet;

use regex::Regex;

/// Every path over `alphabet` with 1..=`depth` segments.
pub fn paths(alphabet: &[&str], depth: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut layer: Vec<String> = alphabet.iter().map(|s| s.to_string()).collect();
    for _ in 0..depth {
        out.extend(layer.iter().cloned());
        layer = layer
            .iter()
            .flat_map(|p| alphabet.iter().map(move |s| format!("{p}/{s}")))
            .collect();
    }
    out
}

/// The purpose and all its path-prefix ancestors.
pub fn closure(purpose: &str) -> Vec<String> {
    let segs: Vec<&str> = purpose.split('/').collect();
    (1..=segs.len()).map(|n| segs[..n].join("/")).collect()
}

pub fn compatible(ap: &str, aip: &[String], pip: &[String]) -> bool {
    let c = closure(ap);
    c.iter().any(|a| aip.contains(a)) && !c.iter().any(|a| pip.contains(a))
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Tuple {
    pub aip: Vec<String>,
    pub pip: Vec<String>,
}

impl Tuple {
    pub fn compatible(&self, ap: &str) -> bool {
        compatible(ap, &self.aip, &self.pip)
    }
}

/// Compatibility with the union of several tuples.
pub fn union_compatible(tuples: &[&Tuple], ap: &str) -> bool {
    let aip: Vec<String> = tuples.iter().flat_map(|t| t.aip.iter().cloned()).collect();
    let pip: Vec<String> = tuples.iter().flat_map(|t| t.pip.iter().cloned()).collect();
    compatible(ap, &aip, &pip)
}

/// Regular expression equivalent of an MQTT topic filter.
pub fn filter_regex(filter: &str) -> Regex {
    let levels: Vec<&str> = filter.split('/').collect();
    let mut pattern = String::from("^");
    for (i, level) in levels.iter().enumerate() {
        let sep = if i == 0 { "" } else { "/" };
        match *level {
            "#" if i == 0 => pattern.push_str(".*"),
            "#" => pattern.push_str("(/.*)?"),
            "+" => {
                pattern.push_str(sep);
                pattern.push_str("[^/]*");
            }
            lit => {
                pattern.push_str(sep);
                pattern.push_str(&regex::escape(lit));
            }
        }
    }
    pattern.push('$');
    Regex::new(&pattern).expect("valid pattern")
}

pub fn matches(filter: &str, topic: &str) -> bool {
    filter_regex(filter).is_match(topic)
}

/// Every topic of `universe` matched by `specific` is matched by `general`.
pub fn covers(general: &str, specific: &str, universe: &[String]) -> bool {
    let (g, s) = (filter_regex(general), filter_regex(specific));
    universe.iter().all(|t| !s.is_match(t) || g.is_match(t))
}

pub fn overlaps(a: &str, b: &str, universe: &[String]) -> bool {
    let (ra, rb) = (filter_regex(a), filter_regex(b));
    universe.iter().any(|t| ra.is_match(t) && rb.is_match(t))
}

/// Delivery verdict for one topic: `None` when no reservation matches.
pub fn topic_verdict(reservations: &[(String, Tuple)], topic: &str, ap: &str) -> Option<bool> {
    Verdicts::new(reservations).topic(topic, ap)
}

/// Reservations with their filters compiled once.
pub struct Verdicts<'a> {
    compiled: Vec<(Regex, &'a Tuple)>,
}

impl<'a> Verdicts<'a> {
    pub fn new(reservations: &'a [(String, Tuple)]) -> Self {
        Verdicts {
            compiled: reservations.iter().map(|(f, t)| (filter_regex(f), t)).collect(),
        }
    }

    pub fn topic(&self, topic: &str, ap: &str) -> Option<bool> {
        let hits: Vec<&Tuple> = self
            .compiled
            .iter()
            .filter(|(r, _)| r.is_match(topic))
            .map(|(_, t)| *t)
            .collect();
        if hits.is_empty() {
            None
        } else {
            Some(union_compatible(&hits, ap))
        }
    }

    /// A subscription with `ap` passes the filter-level check iff every
    /// topic it can match (`matched`) admits `ap`. Unreserved topics
    /// admit anything unless `deny_unreserved`.
    pub fn filter_admits(&self, matched: &[&String], ap: &str, deny_unreserved: bool) -> bool {
        matched.iter().all(|t| self.topic(t, ap).unwrap_or(!deny_unreserved))
    }

    /// Some topic of `matched` admits `ap`.
    pub fn filter_partially_admits(&self, matched: &[&String], ap: &str, deny_unreserved: bool) -> bool {
        matched.iter().any(|t| self.topic(t, ap).unwrap_or(!deny_unreserved))
    }
}

/// Topics of `universe` matched by `filter`.
pub fn matched<'t>(filter: &str, universe: &'t [String]) -> Vec<&'t String> {
    let f = filter_regex(filter);
    universe.iter().filter(|t| f.is_match(t)).collect()
}

/// Filter texts of `reservations` sharing at least one topic with `filter`.
pub fn overlapping(reservations: &[String], filter: &str, universe: &[String]) -> BTreeSet<String> {
    reservations
        .iter()
        .filter(|r| overlaps(r, filter, universe))
        .cloned()
        .collect()
}
