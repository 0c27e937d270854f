//! Topic names, topic filters and the relations between them.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed topic {text:?}: {reason}")]
pub struct MalformedTopic {
    pub text: String,
    pub reason: &'static str,
}

fn malformed(text: &str, reason: &'static str) -> MalformedTopic {
    MalformedTopic {
        text: text.to_owned(),
        reason,
    }
}

const MAX_TOPIC_LEN: usize = 65_535;

fn check_literal(text: &str, level: &str) -> Result<(), MalformedTopic> {
    if level.is_empty() {
        return Err(malformed(text, "empty level"));
    }
    if level.starts_with('!') {
        return Err(malformed(text, "level starting with '!' is reserved for commands"));
    }
    if level.contains(['+', '#']) {
        return Err(malformed(text, "wildcard inside a level"));
    }
    if level.contains(['{', '}', '\0']) {
        return Err(malformed(text, "forbidden character"));
    }
    Ok(())
}

fn check_length(text: &str) -> Result<(), MalformedTopic> {
    if text.is_empty() {
        return Err(malformed(text, "empty topic"));
    }
    if text.len() > MAX_TOPIC_LEN {
        return Err(malformed(text, "topic too long"));
    }
    Ok(())
}

/// A concrete, wildcard-free topic.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TopicName(String);

impl TopicName {
    pub fn parse(text: &str) -> Result<Self, MalformedTopic> {
        check_length(text)?;
        for level in text.split('/') {
            check_literal(text, level)?;
        }
        Ok(TopicName(text.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn levels(&self) -> std::str::Split<'_, char> {
        self.0.split('/')
    }

    pub fn depth(&self) -> usize {
        self.levels().count()
    }
}

impl fmt::Display for TopicName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for TopicName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TopicName({})", self.0)
    }
}

impl FromStr for TopicName {
    type Err = MalformedTopic;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TopicName::parse(s)
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum FilterLevel {
    Literal(Box<str>),
    /// `+`
    SingleLevel,
    /// `#`, only ever the last level.
    MultiLevel,
}

impl FilterLevel {
    pub fn as_str(&self) -> &str {
        match self {
            FilterLevel::Literal(s) => s,
            FilterLevel::SingleLevel => "+",
            FilterLevel::MultiLevel => "#",
        }
    }
}

/// An MQTT subscription pattern.
#[derive(Clone)]
pub struct TopicFilter {
    text: String,
    levels: Vec<FilterLevel>,
}

impl TopicFilter {
    pub fn parse(text: &str) -> Result<Self, MalformedTopic> {
        check_length(text)?;
        let parts: Vec<&str> = text.split('/').collect();
        let last = parts.len() - 1;
        let mut levels = Vec::with_capacity(parts.len());
        for (i, part) in parts.into_iter().enumerate() {
            let level = match part {
                "+" => FilterLevel::SingleLevel,
                "#" if i == last => FilterLevel::MultiLevel,
                "#" => return Err(malformed(text, "'#' must be the last level")),
                literal => {
                    check_literal(text, literal)?;
                    FilterLevel::Literal(literal.into())
                }
            };
            levels.push(level);
        }
        Ok(TopicFilter {
            text: text.to_owned(),
            levels,
        })
    }

    /// The filter matching exactly one topic.
    pub fn exact(topic: &TopicName) -> Self {
        TopicFilter {
            text: topic.as_str().to_owned(),
            levels: topic
                .levels()
                .map(|l| FilterLevel::Literal(l.into()))
                .collect(),
        }
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn levels(&self) -> &[FilterLevel] {
        &self.levels
    }

    pub fn has_wildcards(&self) -> bool {
        self.levels
            .iter()
            .any(|l| !matches!(l, FilterLevel::Literal(_)))
    }

    pub fn matches(&self, topic: &TopicName) -> bool {
        matches_levels(&self.levels, topic.levels())
    }

    /// True iff every topic matched by `specific` is also matched by `self`.
    pub fn covers(&self, specific: &TopicFilter) -> bool {
        // topics have at least one level, so `+/#` matches everything
        if let [FilterLevel::SingleLevel, FilterLevel::MultiLevel] = self.levels[..] {
            if let [FilterLevel::MultiLevel] = specific.levels[..] {
                return true;
            }
        }
        covers_levels(&self.levels, &specific.levels)
    }

    /// True iff at least one topic is matched by both filters.
    pub fn overlaps(&self, other: &TopicFilter) -> bool {
        overlaps_levels(&self.levels, &other.levels)
    }
}

/// Level-wise match of a filter against a split topic.
pub fn matches_levels<'a, I>(filter: &[FilterLevel], mut topic: I) -> bool
where
    I: Iterator<Item = &'a str>,
{
    for level in filter {
        match level {
            FilterLevel::MultiLevel => return true,
            FilterLevel::SingleLevel => {
                if topic.next().is_none() {
                    return false;
                }
            }
            FilterLevel::Literal(lit) => match topic.next() {
                Some(t) if t == &**lit => {}
                _ => return false,
            },
        }
    }
    topic.next().is_none()
}

fn covers_levels(general: &[FilterLevel], specific: &[FilterLevel]) -> bool {
    match (general.split_first(), specific.split_first()) {
        (None, None) => true,
        (Some((FilterLevel::MultiLevel, _)), _) => true,
        (None, Some(_)) | (Some(_), None) => false,
        (Some((g, g_rest)), Some((s, s_rest))) => {
            let head = match (g, s) {
                (FilterLevel::SingleLevel, FilterLevel::MultiLevel) => false,
                (FilterLevel::SingleLevel, _) => true,
                (FilterLevel::Literal(a), FilterLevel::Literal(b)) => a == b,
                (FilterLevel::Literal(_), _) => false,
                (FilterLevel::MultiLevel, _) => unreachable!(),
            };
            head && covers_levels(g_rest, s_rest)
        }
    }
}

fn overlaps_levels(a: &[FilterLevel], b: &[FilterLevel]) -> bool {
    match (a.split_first(), b.split_first()) {
        (None, None) => true,
        (Some((FilterLevel::MultiLevel, _)), _) | (_, Some((FilterLevel::MultiLevel, _))) => true,
        (None, Some(_)) | (Some(_), None) => false,
        (Some((x, x_rest)), Some((y, y_rest))) => {
            let head = match (x, y) {
                (FilterLevel::Literal(p), FilterLevel::Literal(q)) => p == q,
                _ => true,
            };
            head && overlaps_levels(x_rest, y_rest)
        }
    }
}

impl PartialEq for TopicFilter {
    fn eq(&self, other: &Self) -> bool {
        self.text == other.text
    }
}

impl Eq for TopicFilter {}

impl std::hash::Hash for TopicFilter {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.text.hash(state)
    }
}

impl PartialOrd for TopicFilter {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TopicFilter {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.text.cmp(&other.text)
    }
}

impl fmt::Display for TopicFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl fmt::Debug for TopicFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TopicFilter({})", self.text)
    }
}

impl FromStr for TopicFilter {
    type Err = MalformedTopic;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TopicFilter::parse(s)
    }
}
