use std::collections::BTreeSet;
use std::fmt;
use std::net::SocketAddr;
use std::str::FromStr;
use std::time::Duration;

use pbac_core::{EngineConfig, Mode, StoreKind, TopicFilter, TopicName};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

const SITES: usize = 10;
const METRICS: usize = 16;
const AIP_EXTRA: [&str; 3] = ["marketing", "research", "maintenance"];
const PIP_POOL: [&str; 3] = ["marketing/analytics", "research/profiling", "operational/export"];
const SUBSCRIBER_APS: [&str; 2] = ["operational", "operational/billing"];

/// One column of the mode matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeSpec {
    pub label: String,
    pub engine: EngineConfig,
}

#[derive(Debug, Error)]
#[error("unknown mode {0:?} (expected off, scan, fos, fop, fop-cache, fop-flat or hybrid)")]
pub struct UnknownMode(pub String);

impl FromStr for ModeSpec {
    type Err = UnknownMode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let engine = match s {
            "fop-cache" => EngineConfig { cache: true, ..EngineConfig::new(Mode::FilterOnPublish) },
            "fop-flat" => EngineConfig { store: StoreKind::Flat, ..EngineConfig::new(Mode::FilterOnPublish) },
            other => EngineConfig::new(other.parse().map_err(|_| UnknownMode(s.to_owned()))?),
        };
        Ok(ModeSpec { label: s.to_owned(), engine })
    }
}

impl fmt::Display for ModeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

impl ModeSpec {
    pub fn parse_list(s: &str) -> Result<Vec<ModeSpec>, UnknownMode> {
        s.split(',').map(str::trim).filter(|m| !m.is_empty()).map(str::parse).collect()
    }

    pub fn all() -> Vec<ModeSpec> {
        Self::parse_list("off,scan,fos,fop,fop-cache,fop-flat,hybrid").expect("known modes")
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub publishers: usize,
    pub subscribers: usize,
    pub subscriptions_per_client: usize,
    pub messages: usize,
    /// At least 8; the first 8 bytes carry the send timestamp.
    pub payload_bytes: usize,
    pub qos: u8,
    pub reservations: usize,
    pub seed: u64,
    pub modes: Vec<ModeSpec>,
    pub repetitions: usize,
    /// Unmeasured passes over the mode matrix before the first repetition.
    pub warmup: usize,
    /// Messages a publisher sends before waiting for the broker to catch up.
    pub window: usize,
    /// Slices each repetition is cut into. Brokers for all modes run side
    /// by side and take turns slice by slice, so every mode sees the same
    /// stretch of machine speed.
    pub slices: usize,
    /// How long to wait for outstanding deliveries once publishing is done.
    pub drain_timeout: Duration,
    /// Use a running broker, reconfigured through `!SET`, instead of an
    /// in-process one per mode.
    pub connect: Option<SocketAddr>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            publishers: 25,
            subscribers: 25,
            subscriptions_per_client: 3,
            messages: 10_000,
            payload_bytes: 64,
            qos: 0,
            reservations: 500,
            seed: 1,
            modes: ModeSpec::all(),
            repetitions: 5,
            warmup: 1,
            window: 16,
            slices: 40,
            drain_timeout: Duration::from_secs(5),
            connect: None,
        }
    }
}

/// Everything a run sends, fixed by the scenario seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workload {
    /// Rendered `!RESERVE` topics.
    pub reservations: Vec<String>,
    /// Per subscriber: rendered `!AP` filters.
    pub subscriptions: Vec<Vec<String>>,
    /// Per publisher: topics in send order.
    pub messages: Vec<Vec<String>>,
    /// Per publisher and message: number of subscribers that receive it.
    pub fanout: Vec<Vec<usize>>,
    /// Per subscriber: how many messages it must receive.
    pub expected: Vec<usize>,
}

impl Workload {
    pub fn expected_total(&self) -> usize {
        self.expected.iter().sum()
    }
}

impl Scenario {
    fn devices(&self) -> usize {
        (self.reservations * 2 / SITES).max(4)
    }

    /// Expands the scenario. Every subscription holds a purpose that all
    /// reservations admit, so every mode must deliver the same messages.
    pub fn workload(&self) -> Workload {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let devices = self.devices();

        let mut filters = BTreeSet::new();
        let capacity = SITES * devices + SITES * METRICS;
        while filters.len() < self.reservations.min(capacity) {
            let site = rng.random_range(0..SITES);
            let f = if rng.random_bool(0.8) {
                format!("site/{site}/dev{}/#", rng.random_range(0..devices))
            } else {
                format!("site/{site}/+/m{}", rng.random_range(0..METRICS))
            };
            filters.insert(f);
        }
        let reservations = filters
            .into_iter()
            .map(|f| {
                let mut aip = vec!["operational"];
                aip.extend(AIP_EXTRA.iter().filter(|_| rng.random_bool(0.5)));
                let pip: Vec<&str> = PIP_POOL.iter().copied().filter(|_| rng.random_bool(0.4)).collect();
                format!("!RESERVE/{f}{{{}|{}}}", aip.join(","), pip.join(","))
            })
            .collect();

        let mut plain_filters = Vec::with_capacity(self.subscribers);
        let subscriptions = (0..self.subscribers)
            .map(|_| {
                let mut mine = BTreeSet::new();
                while mine.len() < self.subscriptions_per_client {
                    let site = rng.random_range(0..SITES);
                    let f = match rng.random_range(0..4) {
                        0 | 1 => format!("site/{site}/#"),
                        2 => format!("site/{site}/dev{}/#", rng.random_range(0..devices)),
                        _ => format!("site/+/+/m{}", rng.random_range(0..METRICS)),
                    };
                    mine.insert(f);
                }
                let ap = SUBSCRIBER_APS.choose(&mut rng).unwrap();
                let rendered = mine.iter().map(|f| format!("!AP/{f}{{{ap}}}")).collect();
                plain_filters.push(mine.into_iter().map(|f| TopicFilter::parse(&f).unwrap()).collect::<Vec<_>>());
                rendered
            })
            .collect();

        let mut messages = vec![Vec::new(); self.publishers];
        let mut fanout = vec![Vec::new(); self.publishers];
        let mut expected = vec![0; self.subscribers];
        if self.publishers > 0 {
            for i in 0..self.messages {
                let topic = format!(
                    "site/{}/dev{}/m{}",
                    rng.random_range(0..SITES),
                    rng.random_range(0..devices),
                    rng.random_range(0..METRICS)
                );
                let name = TopicName::parse(&topic).unwrap();
                let mut receivers = 0;
                for (count, filters) in expected.iter_mut().zip(&plain_filters) {
                    if filters.iter().any(|f| f.matches(&name)) {
                        *count += 1;
                        receivers += 1;
                    }
                }
                messages[i % self.publishers].push(topic);
                fanout[i % self.publishers].push(receivers);
            }
        }
        Workload { reservations, subscriptions, messages, fanout, expected }
    }
}
