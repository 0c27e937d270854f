use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::Path;
use std::time::Duration;

use pbac_core::{CommandCodec, EngineConfig, Mode, StoreKind, Syntax};
use serde::Deserialize;
use thiserror::Error;

use crate::packet::DEFAULT_MAX_PACKET_SIZE;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing config file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone)]
pub struct BrokerConfig {
    pub bind: IpAddr,
    /// 0 picks an ephemeral port.
    pub port: u16,
    pub engine: EngineConfig,
    pub syntax: Syntax,
    /// Malformed or unknown commands are dropped and the connection kept.
    /// When false they close the connection.
    pub lenient_commands: bool,
    pub max_packet_size: usize,
    /// Record every decision for [`crate::audit::Auditor`].
    pub audit: bool,
    pub connect_timeout: Duration,
}

impl Default for BrokerConfig {
    fn default() -> Self {
        BrokerConfig {
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: 1883,
            engine: EngineConfig::default(),
            syntax: Syntax::default(),
            lenient_commands: true,
            max_packet_size: DEFAULT_MAX_PACKET_SIZE,
            audit: false,
            connect_timeout: Duration::from_secs(10),
        }
    }
}

impl BrokerConfig {
    /// Loopback listener on an ephemeral port with the given engine setup.
    pub fn ephemeral(engine: EngineConfig) -> Self {
        BrokerConfig {
            port: 0,
            engine,
            ..Self::default()
        }
    }

    pub fn addr(&self) -> SocketAddr {
        SocketAddr::new(self.bind, self.port)
    }

    pub fn codec(&self) -> CommandCodec {
        CommandCodec::new(self.syntax.clone()).with_strict_keywords(!self.lenient_commands)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.syntax;
        let keywords = [
            ("keyword_reserve", &s.reserve),
            ("keyword_ap", &s.ap),
            ("keyword_presub", &s.presub),
            ("keyword_set", &s.set),
        ];
        for (i, (field, k)) in keywords.iter().enumerate() {
            if k.is_empty() || k.contains('/') || k.contains(['+', '#']) {
                return Err(invalid(field, format!("{k:?} must be one non-empty topic level without wildcards")));
            }
            if keywords[..i].iter().any(|(_, other)| other == k) {
                return Err(invalid(field, format!("{k:?} is used twice")));
            }
        }
        let delimiters = [s.open, s.close, s.list_separator, s.tuple_separator];
        for (i, c) in delimiters.iter().enumerate() {
            if delimiters[..i].contains(c) || matches!(c, '/' | '+' | '#') || c.is_alphanumeric() {
                return Err(invalid("delimiters", format!("{c:?} is not usable as a delimiter")));
            }
        }
        if self.max_packet_size < 64 {
            return Err(invalid("max_packet_size", "must be at least 64 bytes"));
        }
        Ok(())
    }

    pub fn from_toml_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// Defaults overridden by the keys present in `text`.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let file: FileConfig = toml::from_str(text)?;
        let mut c = BrokerConfig::default();
        file.apply(&mut c)?;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    bind: Option<IpAddr>,
    port: Option<u16>,
    mode: Option<String>,
    strict: Option<bool>,
    store: Option<String>,
    cache: Option<bool>,
    lenient_commands: Option<bool>,
    max_packet_size: Option<usize>,
    audit: Option<bool>,
    connect_timeout_ms: Option<u64>,
    keywords: Option<KeywordConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeywordConfig {
    reserve: Option<String>,
    ap: Option<String>,
    presub: Option<String>,
    set: Option<String>,
    open: Option<char>,
    close: Option<char>,
    list_separator: Option<char>,
    tuple_separator: Option<char>,
}

impl FileConfig {
    fn apply(self, c: &mut BrokerConfig) -> Result<(), ConfigError> {
        if let Some(v) = self.bind {
            c.bind = v;
        }
        if let Some(v) = self.port {
            c.port = v;
        }
        if let Some(v) = self.mode {
            c.engine.mode = v.parse::<Mode>().map_err(|e| invalid("mode", e.to_string()))?;
        }
        if let Some(v) = self.strict {
            c.engine.strict = v;
        }
        if let Some(v) = self.store {
            c.engine.store = v.parse::<StoreKind>().map_err(|_| invalid("store", v))?;
        }
        if let Some(v) = self.cache {
            c.engine.cache = v;
        }
        if let Some(v) = self.lenient_commands {
            c.lenient_commands = v;
        }
        if let Some(v) = self.max_packet_size {
            c.max_packet_size = v;
        }
        if let Some(v) = self.audit {
            c.audit = v;
        }
        if let Some(v) = self.connect_timeout_ms {
            c.connect_timeout = Duration::from_millis(v);
        }
        if let Some(k) = self.keywords {
            let s = &mut c.syntax;
            if let Some(v) = k.reserve {
                s.reserve = v;
            }
            if let Some(v) = k.ap {
                s.ap = v;
            }
            if let Some(v) = k.presub {
                s.presub = v;
            }
            if let Some(v) = k.set {
                s.set = v;
            }
            if let Some(v) = k.open {
                s.open = v;
            }
            if let Some(v) = k.close {
                s.close = v;
            }
            if let Some(v) = k.list_separator {
                s.list_separator = v;
            }
            if let Some(v) = k.tuple_separator {
                s.tuple_separator = v;
            }
        }
        Ok(())
    }
}
