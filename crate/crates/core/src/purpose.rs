//! Hierarchical purposes, purpose sets and (AIP, PIP) tuples.
//!
//! A purpose is a slash-separated path such as `marketing/individualized`.
//! Hierarchy is implicit in the path: `marketing` is the parent of
//! `marketing/individualized`. Membership tests against a [`PurposeSet`]
//! always consider the purpose itself together with all of its ancestors.

use std::borrow::Borrow;
use std::collections::btree_set;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PurposeError {
    #[error("malformed purpose {text:?}: {reason}")]
    MalformedPurpose { text: String, reason: &'static str },
    #[error("cannot merge an empty list of purpose tuples")]
    EmptyMerge,
}

fn malformed(text: &str, reason: &'static str) -> PurposeError {
    PurposeError::MalformedPurpose {
        text: text.to_owned(),
        reason,
    }
}

fn valid_segment_char(c: char) -> bool {
    c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-' || c == '_'
}

/// A hierarchical purpose identifier in canonical text form.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Purpose(String);

impl Purpose {
    pub fn parse(text: &str) -> Result<Self, PurposeError> {
        if text.is_empty() {
            return Err(malformed(text, "empty purpose"));
        }
        if text.starts_with('/') || text.ends_with('/') {
            return Err(malformed(text, "leading or trailing slash"));
        }
        for segment in text.split('/') {
            if segment.is_empty() {
                return Err(malformed(text, "empty segment"));
            }
            if !segment.chars().all(valid_segment_char) {
                return Err(malformed(text, "forbidden character"));
            }
        }
        Ok(Purpose(text.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn segments(&self) -> impl Iterator<Item = &str> {
        self.0.split('/')
    }

    pub fn depth(&self) -> usize {
        self.0.bytes().filter(|&b| b == b'/').count() + 1
    }

    /// Canonical text of every prefix of this purpose at segment
    /// boundaries, root-most first, ending with the purpose itself.
    pub fn prefixes(&self) -> impl Iterator<Item = &str> {
        let text = self.0.as_str();
        text.match_indices('/')
            .map(move |(i, _)| &text[..i])
            .chain(std::iter::once(text))
    }

    /// All ancestors of this purpose followed by the purpose itself.
    pub fn ancestors_or_self(&self) -> Vec<Purpose> {
        self.prefixes().map(|p| Purpose(p.to_owned())).collect()
    }

    /// True if `self` equals `other` or is one of its ancestors.
    pub fn is_ancestor_or_self(&self, other: &Purpose) -> bool {
        let (a, b) = (self.as_str(), other.as_str());
        b.len() >= a.len()
            && b.starts_with(a)
            && (b.len() == a.len() || b.as_bytes()[a.len()] == b'/')
    }

    pub fn is_strict_ancestor(&self, other: &Purpose) -> bool {
        self.0.len() < other.0.len() && self.is_ancestor_or_self(other)
    }
}

impl fmt::Display for Purpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Purpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Purpose({})", self.0)
    }
}

impl FromStr for Purpose {
    type Err = PurposeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Purpose::parse(s)
    }
}

impl Borrow<str> for Purpose {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// A finite set of purposes, ordered by canonical text.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct PurposeSet(BTreeSet<Purpose>);

impl PurposeSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses every item, failing on the first malformed one.
    pub fn parse_all<'a, I>(items: I) -> Result<Self, PurposeError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        items.into_iter().map(Purpose::parse).collect()
    }

    pub fn insert(&mut self, purpose: Purpose) -> bool {
        self.0.insert(purpose)
    }

    pub fn contains(&self, purpose: &str) -> bool {
        self.0.contains(purpose)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> btree_set::Iter<'_, Purpose> {
        self.0.iter()
    }

    pub fn extend_from(&mut self, other: &PurposeSet) {
        self.0.extend(other.0.iter().cloned());
    }

    /// True iff `purpose` or any of its ancestors is a member.
    pub fn closure_contains(&self, purpose: &Purpose) -> bool {
        !self.0.is_empty() && purpose.prefixes().any(|p| self.0.contains(p))
    }

    /// Drops members already implied by a strict ancestor in the set.
    /// The closure is unchanged.
    fn normalize(self) -> Self {
        let keep: BTreeSet<Purpose> = self
            .0
            .iter()
            .filter(|p| {
                let own = p.as_str();
                !p.prefixes().any(|a| a != own && self.0.contains(a))
            })
            .cloned()
            .collect();
        PurposeSet(keep)
    }

    /// Set whose closure is the intersection of both closures.
    fn meet(&self, other: &PurposeSet) -> PurposeSet {
        let mut out = BTreeSet::new();
        for a in &self.0 {
            for b in &other.0 {
                if a.is_ancestor_or_self(b) {
                    out.insert(b.clone());
                } else if b.is_ancestor_or_self(a) {
                    out.insert(a.clone());
                }
            }
        }
        PurposeSet(out).normalize()
    }
}

impl FromIterator<Purpose> for PurposeSet {
    fn from_iter<I: IntoIterator<Item = Purpose>>(iter: I) -> Self {
        PurposeSet(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a PurposeSet {
    type Item = &'a Purpose;
    type IntoIter = btree_set::Iter<'a, Purpose>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

impl fmt::Debug for PurposeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.0.iter().map(|p| p.as_str())).finish()
    }
}

/// An (allowed, prohibited) intended-purpose tuple.
///
/// Prohibition dominates: a purpose covered by both sets is not compatible.
/// An empty AIP set denies everything.
#[derive(Clone, Default, PartialEq, Eq, Hash, Debug)]
pub struct IpTuple {
    pub aip: PurposeSet,
    pub pip: PurposeSet,
}

impl IpTuple {
    pub fn new(aip: PurposeSet, pip: PurposeSet) -> Self {
        IpTuple { aip, pip }
    }

    pub fn deny_all() -> Self {
        Self::default()
    }

    pub fn is_compatible(&self, access_purpose: &Purpose) -> bool {
        self.aip.closure_contains(access_purpose) && !self.pip.closure_contains(access_purpose)
    }
}

/// Permissive combination: allowed by any AIP, forbidden by any PIP.
pub fn merge_union<'a, I>(tuples: I) -> Result<IpTuple, PurposeError>
where
    I: IntoIterator<Item = &'a IpTuple>,
{
    let mut iter = tuples.into_iter();
    let mut merged = iter.next().ok_or(PurposeError::EmptyMerge)?.clone();
    for t in iter {
        merged.aip.extend_from(&t.aip);
        merged.pip.extend_from(&t.pip);
    }
    Ok(merged)
}

/// Restrictive combination: the result admits a purpose iff every input does.
///
/// The allowed set is the pairwise meet of all AIP sets (normalized so that
/// no member has an ancestor in the set); prohibitions are unioned.
pub fn merge_restrictive<'a, I>(tuples: I) -> Result<IpTuple, PurposeError>
where
    I: IntoIterator<Item = &'a IpTuple>,
{
    let mut iter = tuples.into_iter();
    let first = iter.next().ok_or(PurposeError::EmptyMerge)?;
    let mut aip = first.aip.clone().normalize();
    let mut pip = first.pip.clone();
    for t in iter {
        aip = aip.meet(&t.aip);
        pip.extend_from(&t.pip);
    }
    Ok(IpTuple { aip, pip })
}
