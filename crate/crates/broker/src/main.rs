use std::net::IpAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use pbac_broker::{BrokerConfig, Server};
use pbac_core::engine::parse_switch;
use pbac_core::{Mode, SettingKey, StoreKind};
use tracing_subscriber::EnvFilter;

#[derive(Parser, Debug)]
#[command(name = "pbac-broker", version, about = "Purpose-aware MQTT broker")]
struct Args {
    /// TOML file with broker settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    bind: Option<IpAddr>,
    #[arg(long)]
    port: Option<u16>,
    /// off, scan, fos, fop or hybrid
    #[arg(long)]
    mode: Option<Mode>,
    /// flat or tree
    #[arg(long)]
    store: Option<StoreKind>,
    /// on or off
    #[arg(long)]
    cache: Option<String>,
    /// on or off
    #[arg(long)]
    strict: Option<String>,
    #[arg(long)]
    keyword_reserve: Option<String>,
    #[arg(long)]
    keyword_ap: Option<String>,
    #[arg(long)]
    keyword_presub: Option<String>,
    #[arg(long)]
    keyword_set: Option<String>,
    /// Close connections that publish malformed or unknown commands.
    #[arg(long)]
    strict_commands: bool,
    #[arg(long)]
    max_packet_size: Option<usize>,
}

fn build_config(args: Args) -> Result<BrokerConfig, String> {
    let mut c = match &args.config {
        Some(path) => BrokerConfig::from_toml_file(path).map_err(|e| e.to_string())?,
        None => BrokerConfig::default(),
    };
    if let Some(v) = args.bind {
        c.bind = v;
    }
    if let Some(v) = args.port {
        c.port = v;
    }
    if let Some(v) = args.mode {
        c.engine.mode = v;
    }
    if let Some(v) = args.store {
        c.engine.store = v;
    }
    if let Some(v) = args.cache {
        c.engine.cache = parse_switch(SettingKey::Cache, &v).map_err(|e| e.to_string())?;
    }
    if let Some(v) = args.strict {
        c.engine.strict = parse_switch(SettingKey::Strict, &v).map_err(|e| e.to_string())?;
    }
    for (value, slot) in [
        (args.keyword_reserve, &mut c.syntax.reserve),
        (args.keyword_ap, &mut c.syntax.ap),
        (args.keyword_presub, &mut c.syntax.presub),
        (args.keyword_set, &mut c.syntax.set),
    ] {
        if let Some(v) = value {
            *slot = v;
        }
    }
    if args.strict_commands {
        c.lenient_commands = false;
    }
    if let Some(v) = args.max_packet_size {
        c.max_packet_size = v;
    }
    c.validate().map_err(|e| e.to_string())?;
    Ok(c)
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let config = match build_config(Args::parse()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("pbac-broker: {e}");
            return ExitCode::from(2);
        }
    };
    let server = match Server::bind(config.clone()).await {
        Ok(s) => s,
        Err(e) => {
            eprintln!("pbac-broker: cannot listen on {}: {e}", config.addr());
            return ExitCode::FAILURE;
        }
    };
    if let Ok(addr) = server.local_addr() {
        tracing::info!(%addr, mode = %config.engine.mode, store = %config.engine.store, "listening");
    }
    match server.run().await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pbac-broker: {e}");
            ExitCode::FAILURE
        }
    }
}
