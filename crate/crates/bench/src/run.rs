use std::io;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use bytes::{BufMut, Bytes, BytesMut};
use pbac_broker::packet::SUBACK_FAILURE;
use pbac_broker::{BrokerConfig, Client, RunningServer, Server};
use pbac_core::{EngineConfig, Mode};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;
use tokio::sync::{watch, Notify};
use tokio::task::JoinHandle;

use crate::scenario::{ModeSpec, Scenario, Workload};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("could not start broker: {0}")]
    Broker(io::Error),
    #[error("broker at {addr} unreachable: {source}")]
    BrokerUnreachable { addr: SocketAddr, source: io::Error },
    #[error("connection failed during the run: {0}")]
    Io(#[from] io::Error),
    #[error("subscriber {0} was refused a subscription")]
    SubscriptionDenied(usize),
    #[error("{mode}: {delivered} of {expected} deliveries arrived")]
    ScenarioTimeout { mode: String, delivered: usize, expected: usize },
}

/// One measured run.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub throughput: f64,
    pub latency_median_ms: Option<f64>,
    pub latency_p95_ms: Option<f64>,
    pub delivered: usize,
    pub expected: usize,
}

/// Medians over the repetitions of one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub mode: String,
    /// Published messages per second.
    pub throughput: f64,
    pub latency_median_ms: Option<f64>,
    pub latency_p95_ms: Option<f64>,
    /// Throughput loss relative to the `off` run, in percent.
    pub overhead_pct: Option<f64>,
    pub delivered: usize,
    pub expected: usize,
}

fn now_ns() -> u64 {
    static EPOCH: OnceLock<Instant> = OnceLock::new();
    EPOCH.get_or_init(Instant::now).elapsed().as_nanos() as u64
}

fn payload(len: usize) -> Bytes {
    let mut b = BytesMut::with_capacity(len.max(8));
    b.put_u64(now_ns());
    b.resize(len.max(8), 0);
    b.freeze()
}

fn settings(engine: &EngineConfig) -> [String; 4] {
    let switch = |on: bool| if on { "on" } else { "off" };
    [
        format!("!SET/store/{}", engine.store),
        format!("!SET/cache/{}", switch(engine.cache)),
        format!("!SET/strict/{}", switch(engine.strict)),
        format!("!SET/mode/{}", engine.mode),
    ]
}

/// Nearest-rank percentile of sorted values.
fn percentile(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Some(sorted[rank - 1])
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Delivery progress shared by the subscribers of one rig.
#[derive(Default)]
struct Progress {
    received: AtomicUsize,
    target: AtomicUsize,
    last_ns: AtomicU64,
    reached: Notify,
}

async fn subscriber(mut c: Client, expected: usize, progress: Arc<Progress>, mut stop: watch::Receiver<bool>) -> io::Result<Vec<f64>> {
    let mut latencies_ms = Vec::with_capacity(expected);
    while latencies_ms.len() < expected {
        let m = tokio::select! {
            m = c.recv() => m,
            _ = stop.changed() => None,
        };
        let Some(m) = m else {
            break;
        };
        let now = now_ns();
        if m.payload.len() >= 8 {
            let sent = u64::from_be_bytes(m.payload[..8].try_into().unwrap());
            latencies_ms.push(now.saturating_sub(sent) as f64 / 1e6);
        }
        progress.last_ns.fetch_max(now, Ordering::Relaxed);
        if progress.received.fetch_add(1, Ordering::AcqRel) + 1 >= progress.target.load(Ordering::Acquire) {
            progress.reached.notify_one();
        }
    }
    c.disconnect().await?;
    Ok(latencies_ms)
}

async fn publish_slice(c: Client, topics: Vec<String>, s: Scenario) -> io::Result<Client> {
    for (i, topic) in topics.iter().enumerate() {
        c.publish(topic, payload(s.payload_bytes), s.qos).await?;
        if s.window > 0 && (i + 1) % s.window == 0 {
            c.ping().await?;
        }
    }
    c.ping().await?;
    Ok(c)
}

/// A configured broker with its connected clients, ready to run slices.
struct Rig {
    label: String,
    _server: Option<RunningServer>,
    admin: Client,
    publishers: Vec<Client>,
    subscribers: Vec<JoinHandle<io::Result<Vec<f64>>>>,
    progress: Arc<Progress>,
    stop: watch::Sender<bool>,
    busy: Duration,
}

impl Rig {
    async fn start(s: &Scenario, w: &Workload, mode: &ModeSpec) -> Result<Rig, BenchError> {
        let mut server = None;
        let addr = match s.connect {
            Some(addr) => addr,
            None => {
                let running = Server::bind(BrokerConfig::ephemeral(mode.engine))
                    .await
                    .and_then(Server::spawn)
                    .map_err(BenchError::Broker)?;
                let addr = running.addr;
                server = Some(running);
                addr
            }
        };
        let connect = |id: String| async move {
            Client::connect(addr, &id, 60)
                .await
                .map_err(|source| BenchError::BrokerUnreachable { addr, source })
        };

        let admin = connect("bench-admin".into()).await?;
        if s.connect.is_some() {
            for setting in settings(&mode.engine) {
                admin.publish(&setting, Bytes::new(), 0).await?;
            }
        }
        for r in &w.reservations {
            admin.publish(r, Bytes::new(), 0).await?;
        }
        admin.ping().await?;

        let progress = Arc::new(Progress::default());
        let (stop, stopped) = watch::channel(false);
        let mut subscribers = Vec::with_capacity(w.subscriptions.len());
        for (i, filters) in w.subscriptions.iter().enumerate() {
            let c = connect(format!("bench-sub-{i}")).await?;
            let request: Vec<(&str, u8)> = filters.iter().map(|f| (f.as_str(), s.qos)).collect();
            if c.subscribe(&request).await?.contains(&SUBACK_FAILURE) {
                return Err(BenchError::SubscriptionDenied(i));
            }
            subscribers.push(c);
        }
        let subscribers = subscribers
            .into_iter()
            .zip(&w.expected)
            .map(|(c, &n)| tokio::spawn(subscriber(c, n, Arc::clone(&progress), stopped.clone())))
            .collect();
        let mut publishers = Vec::with_capacity(w.messages.len());
        for i in 0..w.messages.len() {
            publishers.push(connect(format!("bench-pub-{i}")).await?);
        }
        Ok(Rig { label: mode.label.clone(), _server: server, admin, publishers, subscribers, progress, stop, busy: Duration::ZERO })
    }

    /// Publishes slice `k` of `n` and waits until its deliveries arrived.
    async fn run_slice(&mut self, s: &Scenario, w: &Workload, k: usize, n: usize) -> Result<(), BenchError> {
        let range = |len: usize| (k * len / n)..((k + 1) * len / n);
        let expected: usize = w.fanout.iter().map(|f| f[range(f.len())].iter().sum::<usize>()).sum();
        let target = self.progress.target.fetch_add(expected, Ordering::AcqRel) + expected;

        let start = Instant::now();
        let start_ns = now_ns();
        let tasks: Vec<_> = self
            .publishers
            .drain(..)
            .zip(&w.messages)
            .map(|(c, topics)| tokio::spawn(publish_slice(c, topics[range(topics.len())].to_vec(), s.clone())))
            .collect();
        for t in tasks {
            self.publishers.push(t.await.expect("publisher task")?);
        }
        let published = start.elapsed();

        let deadline = Instant::now() + s.drain_timeout;
        while self.progress.received.load(Ordering::Acquire) < target {
            let left = deadline.saturating_duration_since(Instant::now());
            if tokio::time::timeout(left, self.progress.reached.notified()).await.is_err() {
                let received = self.progress.received.load(Ordering::Acquire);
                // a lost QoS 0 message must not stall the remaining slices
                self.progress.target.store(received, Ordering::Release);
                break;
            }
        }
        let last_ns = self.progress.last_ns.load(Ordering::Acquire);
        let delivered = Duration::from_nanos(last_ns.saturating_sub(start_ns));
        self.busy += if expected == 0 { published } else { published.max(delivered) };
        Ok(())
    }

    async fn finish(self, s: &Scenario, w: &Workload) -> Result<Sample, BenchError> {
        let _ = self.stop.send(true);
        let mut latencies = Vec::new();
        for t in self.subscribers {
            latencies.extend(t.await.expect("subscriber task")?);
        }
        for c in self.publishers {
            c.disconnect().await?;
        }
        self.admin.disconnect().await?;

        let delivered = latencies.len();
        let expected = w.expected_total();
        let conserved =
            delivered == expected || (s.qos == 0 && delivered * 1000 >= expected * 999 && delivered <= expected);
        if !conserved {
            return Err(BenchError::ScenarioTimeout { mode: self.label, delivered, expected });
        }
        let messages: usize = w.messages.iter().map(Vec::len).sum();
        latencies.sort_by(f64::total_cmp);
        Ok(Sample {
            throughput: if messages == 0 { 0.0 } else { messages as f64 / self.busy.as_secs_f64() },
            latency_median_ms: percentile(&latencies, 0.5),
            latency_p95_ms: percentile(&latencies, 0.95),
            delivered,
            expected,
        })
    }
}

/// Runs the workload once against a broker configured for `mode`.
pub async fn run_once(s: &Scenario, w: &Workload, mode: &ModeSpec) -> Result<Sample, BenchError> {
    let mut rig = Rig::start(s, w, mode).await?;
    let n = s.slices.max(1);
    for k in 0..n {
        rig.run_slice(s, w, k, n).await?;
    }
    rig.finish(s, w).await
}

/// One repetition of every mode. In-process brokers run side by side,
/// taking turns per slice in a shuffled order; a shared external broker
/// can only serve one mode at a time.
async fn repetition(s: &Scenario, w: &Workload, rng: &mut ChaCha8Rng) -> Result<Vec<Sample>, BenchError> {
    if s.connect.is_some() {
        let mut out = Vec::with_capacity(s.modes.len());
        for mode in &s.modes {
            out.push(run_once(s, w, mode).await?);
        }
        return Ok(out);
    }
    let mut rigs = Vec::with_capacity(s.modes.len());
    for mode in &s.modes {
        rigs.push(Rig::start(s, w, mode).await?);
    }
    let n = s.slices.max(1);
    let mut order: Vec<usize> = (0..rigs.len()).collect();
    for k in 0..n {
        order.shuffle(rng);
        for &i in &order {
            rigs[i].run_slice(s, w, k, n).await?;
        }
    }
    let mut out = Vec::with_capacity(rigs.len());
    for rig in rigs {
        out.push(rig.finish(s, w).await?);
    }
    Ok(out)
}

/// Medians per mode; `samples[i]` holds the repetitions of `modes[i]`.
pub fn summarize(modes: &[ModeSpec], samples: &[Vec<Sample>]) -> Vec<RunResult> {
    let mut results: Vec<RunResult> = modes
        .iter()
        .zip(samples)
        .map(|(mode, runs)| {
            let med = |f: fn(&Sample) -> Option<f64>| {
                let mut v: Option<Vec<f64>> = runs.iter().map(f).collect();
                v.as_deref_mut().filter(|v| !v.is_empty()).map(median)
            };
            RunResult {
                mode: mode.label.clone(),
                throughput: med(|r| Some(r.throughput)).unwrap_or(0.0),
                latency_median_ms: med(|r| r.latency_median_ms),
                latency_p95_ms: med(|r| r.latency_p95_ms),
                overhead_pct: None,
                delivered: runs.first().map_or(0, |r| r.delivered),
                expected: runs.first().map_or(0, |r| r.expected),
            }
        })
        .collect();
    let baseline = modes
        .iter()
        .position(|m| m.engine.mode == Mode::Off)
        .map(|i| results[i].throughput)
        .filter(|&t| t > 0.0);
    if let Some(base) = baseline {
        for r in &mut results {
            r.overhead_pct = Some((base - r.throughput) / base * 100.0);
        }
    }
    results
}

/// Runs every mode `repetitions` times after `warmup` unmeasured passes.
pub async fn run_scenario(s: &Scenario) -> Result<Vec<RunResult>, BenchError> {
    let w = s.workload();
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut samples = vec![Vec::with_capacity(s.repetitions); s.modes.len()];
    for rep in 0..s.warmup + s.repetitions.max(1) {
        let run = repetition(s, &w, &mut rng).await?;
        if rep >= s.warmup {
            for (i, sample) in run.into_iter().enumerate() {
                samples[i].push(sample);
            }
        }
    }
    Ok(summarize(&s.modes, &samples))
}
