use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use pbac_bench::{emit_report, run_scenario, ModeSpec, Scenario};

#[derive(Parser, Debug)]
#[command(name = "bench", about = "Throughput and latency per filtering mode")]
struct Args {
    #[arg(long, default_value_t = 25)]
    publishers: usize,
    #[arg(long, default_value_t = 25)]
    subscribers: usize,
    #[arg(long, default_value_t = 3)]
    subscriptions_per_client: usize,
    #[arg(long, default_value_t = 10_000)]
    messages: usize,
    #[arg(long, default_value_t = 64)]
    payload_bytes: usize,
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=1))]
    qos: u8,
    #[arg(long, default_value_t = 500)]
    reservations: usize,
    #[arg(long, value_delimiter = ',', default_value = "off,scan,fos,fop,fop-cache,fop-flat,hybrid")]
    modes: Vec<ModeSpec>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    warmup: usize,
    /// Turns per repetition in which the per-mode brokers alternate.
    #[arg(long, default_value_t = 40)]
    slices: usize,
    /// Benchmark a running broker instead of an in-process one.
    #[arg(long)]
    connect: Option<SocketAddr>,
    /// CSV output path; the table always goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> ExitCode {
    let args = Args::parse();
    let scenario = Scenario {
        publishers: args.publishers,
        subscribers: args.subscribers,
        subscriptions_per_client: args.subscriptions_per_client,
        messages: args.messages,
        payload_bytes: args.payload_bytes,
        qos: args.qos,
        reservations: args.reservations,
        seed: args.seed,
        modes: args.modes,
        repetitions: args.reps,
        warmup: args.warmup,
        slices: args.slices,
        connect: args.connect,
        ..Scenario::default()
    };
    let results = match run_scenario(&scenario).await {
        Ok(r) => r,
        Err(e) => {
            eprintln!("bench: {e}");
            return ExitCode::FAILURE;
        }
    };
    let report = emit_report(&results);
    print!("{}", report.table);
    if let Some(path) = args.out {
        if let Err(e) = std::fs::write(&path, report.csv) {
            eprintln!("bench: writing {}: {e}", path.display());
            return ExitCode::FAILURE;
        }
    }
    ExitCode::SUCCESS
}
