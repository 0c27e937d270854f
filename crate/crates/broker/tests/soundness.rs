//! Random workloads against the broker state machine, checked by the
//! independent auditor.

use std::collections::HashMap;

use bytes::Bytes;
use pbac_broker::{Auditor, Broker, BrokerConfig, SessionHandle};
use pbac_core::{EngineConfig, Mode};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CLIENTS: [&str; 5] = ["c0", "c1", "c2", "c3", "c4"];
const PURPOSES: [&str; 6] = ["m", "o", "m/x", "o/y", "m/x/z", "q"];

fn level(rng: &mut ChaCha8Rng) -> &'static str {
    ["a", "b", "c"].choose(rng).unwrap()
}

fn filter(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(0..=3);
    let mut levels: Vec<&str> = (0..n)
        .map(|_| if rng.random_bool(0.25) { "+" } else { level(rng) })
        .collect();
    if n == 0 || rng.random_bool(0.3) {
        levels.push("#");
    }
    levels.join("/")
}

fn topic(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(1..=4);
    (0..n).map(|_| level(rng)).collect::<Vec<_>>().join("/")
}

fn purposes(rng: &mut ChaCha8Rng, max: usize) -> String {
    let n = rng.random_range(0..=max);
    let mut v: Vec<&str> = (0..n).map(|_| *PURPOSES.choose(rng).unwrap()).collect();
    v.sort_unstable();
    v.dedup();
    v.join(",")
}

struct Run {
    broker: Broker,
    sessions: HashMap<&'static str, SessionHandle>,
}

impl Run {
    fn publish(&self, client: &str, topic: &str, payload: &str) {
        let _ = self
            .broker
            .handle_publish(client, topic, &Bytes::copy_from_slice(payload.as_bytes()), 0);
    }
}

/// Returns the auditor's violation count and the number of deliveries.
fn workload(seed: u64, start: Mode, modes: &[Mode], steps: usize) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = BrokerConfig { audit: true, ..BrokerConfig::ephemeral(EngineConfig::new(start)) };
    let mut run = Run { broker: Broker::new(&config), sessions: HashMap::new() };
    for c in CLIENTS {
        run.sessions.insert(c, run.broker.connect(c));
    }
    for _ in 0..steps {
        let client = *CLIENTS.choose(&mut rng).unwrap();
        match rng.random_range(0..100) {
            0..15 => {
                let body = if rng.random_bool(0.1) {
                    String::new()
                } else {
                    format!("{{{}|{}}}", purposes(&mut rng, 3), purposes(&mut rng, 1))
                };
                run.publish(client, &format!("!RESERVE/{}{body}", filter(&mut rng)), "");
            }
            15..40 => {
                let f = filter(&mut rng);
                let raw = if rng.random_bool(0.8) {
                    format!("!AP/{f}{{{}}}", PURPOSES.choose(&mut rng).unwrap())
                } else {
                    f
                };
                run.broker.handle_subscribe(client, &[(raw, rng.random_range(0..2))]);
            }
            40..44 => {
                let raw = format!("!PRESUB/{}{{{}}}", filter(&mut rng), PURPOSES.choose(&mut rng).unwrap());
                run.publish(client, &raw, CLIENTS.choose(&mut rng).unwrap());
            }
            44..50 => run.broker.handle_unsubscribe(client, &[filter(&mut rng)]),
            50..53 => {
                let session = run.sessions.remove(client).unwrap();
                run.broker.disconnect(client, session.generation);
                run.sessions.insert(client, run.broker.connect(client));
            }
            53..57 => {
                let setting = match rng.random_range(0..4) {
                    0 => format!("!SET/mode/{}", modes.choose(&mut rng).unwrap()),
                    1 => format!("!SET/strict/{}", ["on", "off"].choose(&mut rng).unwrap()),
                    2 => format!("!SET/store/{}", ["flat", "tree"].choose(&mut rng).unwrap()),
                    _ => format!("!SET/cache/{}", ["on", "off"].choose(&mut rng).unwrap()),
                };
                run.publish(client, &setting, "");
            }
            _ => run.publish(client, &topic(&mut rng), "x"),
        }
    }
    let snapshot = run.broker.snapshot();
    assert_eq!(snapshot.coherence_errors(), Vec::<String>::new(), "seed {seed}");
    let (auditor, violations) = Auditor::audit(&run.broker.audit_log());
    (violations.len(), auditor.deliveries())
}

#[test]
fn gating_modes_never_violate_purposes() {
    let gating = [Mode::FilterOnSubscribe, Mode::FilterOnPublish, Mode::Hybrid];
    let mut deliveries = 0;
    for seed in 0..60 {
        for start in gating {
            let (violations, delivered) = workload(seed, start, &gating, 400);
            assert_eq!(violations, 0, "seed {seed}, start {start}");
            deliveries += delivered;
        }
    }
    assert!(deliveries > 1000, "{deliveries}");
}

#[test]
fn unfiltered_modes_are_caught_by_the_auditor() {
    for mode in [Mode::Off, Mode::ScanOnly] {
        let violations: usize = (0..20).map(|seed| workload(seed, mode, &[mode], 400).0).sum();
        assert!(violations > 0, "{mode}");
    }
}
