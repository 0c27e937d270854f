//! The topic-embedded purpose grammar.
//!
//! ```text
//! !RESERVE/<filter>[{p(,p)*[|p(,p)*]}]
//! !AP/<filter>{p}
//! !PRESUB/<filter>{p}          payload: client id
//! !SET/<key>/<value>
//! ```
//!
//! Keywords and delimiter characters are configurable through [`Syntax`].

use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

use crate::purpose::{IpTuple, Purpose, PurposeError, PurposeSet};
use crate::topic::{MalformedTopic, TopicFilter};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CommandError {
    #[error("unknown command keyword {0:?}")]
    UnknownCommand(String),
    #[error("malformed command {text:?}: {reason}")]
    MalformedCommand { text: String, reason: String },
}

impl CommandError {
    fn malformed(text: &str, reason: impl Into<String>) -> Self {
        CommandError::MalformedCommand {
            text: text.to_owned(),
            reason: reason.into(),
        }
    }
}

/// Keywords and delimiters of the command grammar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Syntax {
    pub reserve: String,
    pub ap: String,
    pub presub: String,
    pub set: String,
    pub open: char,
    pub close: char,
    pub list_separator: char,
    pub tuple_separator: char,
}

impl Default for Syntax {
    fn default() -> Self {
        Syntax {
            reserve: "!RESERVE".into(),
            ap: "!AP".into(),
            presub: "!PRESUB".into(),
            set: "!SET".into(),
            open: '{',
            close: '}',
            list_separator: ',',
            tuple_separator: '|',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CommandKind {
    Reserve,
    Ap,
    Presub,
    Set,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Classified {
    Command(CommandKind),
    Data,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SettingKey {
    Mode,
    Strict,
    Store,
    Cache,
}

impl SettingKey {
    pub fn as_str(self) -> &'static str {
        match self {
            SettingKey::Mode => "mode",
            SettingKey::Strict => "strict",
            SettingKey::Store => "store",
            SettingKey::Cache => "cache",
        }
    }
}

impl FromStr for SettingKey {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mode" => Ok(SettingKey::Mode),
            "strict" => Ok(SettingKey::Strict),
            "store" => Ok(SettingKey::Store),
            "cache" => Ok(SettingKey::Cache),
            _ => Err(()),
        }
    }
}

impl fmt::Display for SettingKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    /// `tuple == None` removes the reservation.
    Reserve {
        filter: TopicFilter,
        tuple: Option<IpTuple>,
    },
    Presubscribe {
        client_id: String,
        filter: TopicFilter,
        ap: Purpose,
    },
    Set {
        key: SettingKey,
        value: String,
    },
    /// Only produced from SUBSCRIBE packets.
    ApSubscribe { filter: TopicFilter, ap: Purpose },
}

/// Parsed SUBSCRIBE entry: the effective filter plus its access purpose.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubscriptionRequest {
    pub filter: TopicFilter,
    pub ap: Option<Purpose>,
}

#[derive(Debug, Clone, Default)]
pub struct CommandCodec {
    syntax: Syntax,
    strict_keywords: bool,
}

impl CommandCodec {
    pub fn new(syntax: Syntax) -> Self {
        CommandCodec {
            syntax,
            strict_keywords: false,
        }
    }

    /// Unknown `!`-prefixed keywords become errors instead of data.
    pub fn with_strict_keywords(mut self, strict: bool) -> Self {
        self.strict_keywords = strict;
        self
    }

    pub fn syntax(&self) -> &Syntax {
        &self.syntax
    }

    pub fn classify(&self, topic: &str) -> Result<Classified, CommandError> {
        if !topic.starts_with('!') && !self.custom_keywords() {
            return Ok(Classified::Data);
        }
        let first = topic.split('/').next().unwrap_or(topic);
        let s = &self.syntax;
        let kind = if first == s.reserve {
            CommandKind::Reserve
        } else if first == s.ap {
            CommandKind::Ap
        } else if first == s.presub {
            CommandKind::Presub
        } else if first == s.set {
            CommandKind::Set
        } else if first.starts_with('!') && self.strict_keywords {
            return Err(CommandError::UnknownCommand(first.to_owned()));
        } else {
            return Ok(Classified::Data);
        };
        Ok(Classified::Command(kind))
    }

    fn custom_keywords(&self) -> bool {
        let s = &self.syntax;
        [&s.reserve, &s.ap, &s.presub, &s.set]
            .iter()
            .any(|k| !k.starts_with('!'))
    }

    /// Parses a PUBLISH topic (and payload) as a broker command.
    /// Returns `None` for data topics.
    pub fn parse_publish(&self, topic: &str, payload: &[u8]) -> Result<Option<Command>, CommandError> {
        match self.classify(topic)? {
            Classified::Data => Ok(None),
            Classified::Command(CommandKind::Reserve) => {
                let (filter, tuple) = self.parse_reserve(topic)?;
                Ok(Some(Command::Reserve { filter, tuple }))
            }
            Classified::Command(CommandKind::Presub) => self.parse_presub(topic, payload).map(Some),
            Classified::Command(CommandKind::Set) => self.parse_set(topic).map(Some),
            Classified::Command(CommandKind::Ap) => Err(CommandError::malformed(
                topic,
                "access purposes are only accepted in SUBSCRIBE packets",
            )),
        }
    }

    /// Parses a SUBSCRIBE/UNSUBSCRIBE filter with an optional AP wrapper.
    pub fn parse_subscription(&self, raw: &str) -> Result<SubscriptionRequest, CommandError> {
        match self.classify(raw)? {
            Classified::Command(CommandKind::Ap) => {
                let (filter, ap) = self.parse_ap(raw)?;
                Ok(SubscriptionRequest { filter, ap: Some(ap) })
            }
            Classified::Command(_) => Err(CommandError::malformed(raw, "command keyword in subscription")),
            Classified::Data => {
                let filter = TopicFilter::parse(raw).map_err(|e| topic_error(raw, e))?;
                Ok(SubscriptionRequest { filter, ap: None })
            }
        }
    }

    pub fn parse_reserve(&self, topic: &str) -> Result<(TopicFilter, Option<IpTuple>), CommandError> {
        let body = self.strip_keyword(topic, &self.syntax.reserve)?;
        match self.split_block(topic, body)? {
            (filter, None) => Ok((parse_filter(topic, filter)?, None)),
            (filter, Some(block)) => {
                let filter = parse_filter(topic, filter)?;
                let (aip, pip) = match block.split_once(self.syntax.tuple_separator) {
                    Some((aip, pip)) => (aip, pip),
                    None => (block, ""),
                };
                if pip.contains(self.syntax.tuple_separator) {
                    return Err(CommandError::malformed(topic, "more than one AIP/PIP divider"));
                }
                let tuple = IpTuple::new(self.parse_list(topic, aip)?, self.parse_list(topic, pip)?);
                Ok((filter, Some(tuple)))
            }
        }
    }

    pub fn parse_ap(&self, topic: &str) -> Result<(TopicFilter, Purpose), CommandError> {
        let body = self.strip_keyword(topic, &self.syntax.ap)?;
        self.parse_filter_with_purpose(topic, body)
    }

    pub fn parse_presub(&self, topic: &str, payload: &[u8]) -> Result<Command, CommandError> {
        let body = self.strip_keyword(topic, &self.syntax.presub)?;
        let (filter, ap) = self.parse_filter_with_purpose(topic, body)?;
        let client_id = std::str::from_utf8(payload)
            .map_err(|_| CommandError::malformed(topic, "client id is not UTF-8"))?;
        if !valid_client_id(client_id) {
            return Err(CommandError::malformed(topic, "empty or invalid client id"));
        }
        Ok(Command::Presubscribe {
            client_id: client_id.to_owned(),
            filter,
            ap,
        })
    }

    pub fn parse_set(&self, topic: &str) -> Result<Command, CommandError> {
        let body = self.strip_keyword(topic, &self.syntax.set)?;
        let parts: Vec<&str> = body.split('/').collect();
        let [key, value] = parts[..] else {
            return Err(CommandError::malformed(topic, "expected !SET/<key>/<value>"));
        };
        let key: SettingKey = key
            .parse()
            .map_err(|_| CommandError::malformed(topic, format!("unknown setting {key:?}")))?;
        if value.is_empty() {
            return Err(CommandError::malformed(topic, "empty setting value"));
        }
        Ok(Command::Set {
            key,
            value: value.to_owned(),
        })
    }

    pub fn render_reserve(&self, filter: &TopicFilter, tuple: Option<&IpTuple>) -> String {
        let s = &self.syntax;
        let mut out = format!("{}/{}", s.reserve, filter);
        if let Some(t) = tuple {
            out.push(s.open);
            self.render_list(&mut out, &t.aip);
            if !t.pip.is_empty() {
                out.push(s.tuple_separator);
                self.render_list(&mut out, &t.pip);
            }
            out.push(s.close);
        }
        out
    }

    pub fn render_ap(&self, filter: &TopicFilter, ap: &Purpose) -> String {
        let s = &self.syntax;
        format!("{}/{}{}{}{}", s.ap, filter, s.open, ap, s.close)
    }

    /// Topic and payload of a presubscription command.
    pub fn render_presub(&self, client_id: &str, filter: &TopicFilter, ap: &Purpose) -> (String, Vec<u8>) {
        let s = &self.syntax;
        (
            format!("{}/{}{}{}{}", s.presub, filter, s.open, ap, s.close),
            client_id.as_bytes().to_vec(),
        )
    }

    pub fn render_set(&self, key: SettingKey, value: &str) -> String {
        format!("{}/{}/{}", self.syntax.set, key, value)
    }

    /// Topic and payload carrying `command`.
    pub fn render(&self, command: &Command) -> (String, Vec<u8>) {
        match command {
            Command::Reserve { filter, tuple } => (self.render_reserve(filter, tuple.as_ref()), Vec::new()),
            Command::Presubscribe { client_id, filter, ap } => self.render_presub(client_id, filter, ap),
            Command::Set { key, value } => (self.render_set(*key, value), Vec::new()),
            Command::ApSubscribe { filter, ap } => (self.render_ap(filter, ap), Vec::new()),
        }
    }

    fn render_list(&self, out: &mut String, set: &PurposeSet) {
        for (i, p) in set.iter().enumerate() {
            if i > 0 {
                out.push(self.syntax.list_separator);
            }
            let _ = write!(out, "{p}");
        }
    }

    fn strip_keyword<'a>(&self, topic: &'a str, keyword: &str) -> Result<&'a str, CommandError> {
        topic
            .strip_prefix(keyword)
            .and_then(|rest| rest.strip_prefix('/'))
            .filter(|rest| !rest.is_empty())
            .ok_or_else(|| CommandError::malformed(topic, "missing topic filter after keyword"))
    }

    /// Splits `filter{block}` into its parts; the block is optional.
    fn split_block<'a>(&self, topic: &str, body: &'a str) -> Result<(&'a str, Option<&'a str>), CommandError> {
        let (open, close) = (self.syntax.open, self.syntax.close);
        match body.find(open) {
            None if body.contains(close) => Err(CommandError::malformed(topic, "unbalanced braces")),
            None => Ok((body, None)),
            Some(start) => {
                let inner = body[start + open.len_utf8()..]
                    .strip_suffix(close)
                    .ok_or_else(|| CommandError::malformed(topic, "unbalanced braces"))?;
                if inner.contains(open) || inner.contains(close) {
                    return Err(CommandError::malformed(topic, "nested braces"));
                }
                Ok((&body[..start], Some(inner)))
            }
        }
    }

    fn parse_filter_with_purpose(&self, topic: &str, body: &str) -> Result<(TopicFilter, Purpose), CommandError> {
        let (filter, block) = self.split_block(topic, body)?;
        let block = block.ok_or_else(|| CommandError::malformed(topic, "missing access purpose block"))?;
        if block.contains(self.syntax.list_separator) || block.contains(self.syntax.tuple_separator) {
            return Err(CommandError::malformed(topic, "exactly one access purpose expected"));
        }
        let ap = Purpose::parse(block).map_err(|e| purpose_error(topic, e))?;
        Ok((parse_filter(topic, filter)?, ap))
    }

    fn parse_list(&self, topic: &str, list: &str) -> Result<PurposeSet, CommandError> {
        if list.is_empty() {
            return Ok(PurposeSet::new());
        }
        PurposeSet::parse_all(list.split(self.syntax.list_separator)).map_err(|e| purpose_error(topic, e))
    }
}

fn parse_filter(topic: &str, text: &str) -> Result<TopicFilter, CommandError> {
    TopicFilter::parse(text).map_err(|e| topic_error(topic, e))
}

fn topic_error(topic: &str, e: MalformedTopic) -> CommandError {
    CommandError::malformed(topic, e.to_string())
}

fn purpose_error(topic: &str, e: PurposeError) -> CommandError {
    CommandError::malformed(topic, e.to_string())
}

/// Non-empty, no whitespace or control characters.
pub fn valid_client_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 65_535 && !id.chars().any(|c| c.is_whitespace() || c.is_control())
}
