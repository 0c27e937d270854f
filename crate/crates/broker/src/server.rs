//! TCP listener and per-connection session handling.

use std::io;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use bytes::BytesMut;
use thiserror::Error;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::tcp::OwnedWriteHalf;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;
use tokio::task::JoinHandle;
use tracing::{debug, warn};

use crate::broker::{Broker, Outbound, SessionHandle};
use crate::config::BrokerConfig;
use crate::packet::{decode, encode, Packet, ProtocolViolation, Publish};

#[derive(Debug, Error)]
pub enum ConnectionError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Protocol(#[from] ProtocolViolation),
    #[error("first packet was {0}, not CONNECT")]
    NotConnect(&'static str),
    #[error("no CONNECT within the connect timeout")]
    ConnectTimeout,
    #[error("keep-alive expired")]
    KeepAliveExpired,
    #[error("rejected command: {0}")]
    Command(String),
}

/// A bound listener with its broker.
pub struct Server {
    listener: TcpListener,
    broker: Arc<Broker>,
    config: Arc<BrokerConfig>,
}

impl Server {
    pub async fn bind(config: BrokerConfig) -> io::Result<Server> {
        config
            .validate()
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
        let listener = TcpListener::bind(config.addr()).await?;
        Ok(Server {
            broker: Arc::new(Broker::new(&config)),
            listener,
            config: Arc::new(config),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn broker(&self) -> Arc<Broker> {
        Arc::clone(&self.broker)
    }

    /// Accepts connections until the task is dropped.
    pub async fn run(self) -> io::Result<()> {
        loop {
            let (stream, peer) = self.listener.accept().await?;
            let broker = Arc::clone(&self.broker);
            let config = Arc::clone(&self.config);
            tokio::spawn(async move {
                if let Err(e) = run_connection(stream, broker, config).await {
                    debug!(%peer, error = %e, "connection closed");
                }
            });
        }
    }

    /// Runs the accept loop on the current runtime and returns its address.
    pub fn spawn(self) -> io::Result<RunningServer> {
        let addr = self.local_addr()?;
        let broker = self.broker();
        let task = tokio::spawn(self.run());
        Ok(RunningServer { addr, broker, task })
    }
}

pub struct RunningServer {
    pub addr: SocketAddr,
    pub broker: Arc<Broker>,
    task: JoinHandle<io::Result<()>>,
}

impl RunningServer {
    pub fn shutdown(self) {
        self.task.abort();
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        self.task.abort();
    }
}

static ANONYMOUS: AtomicU64 = AtomicU64::new(0);

async fn read_packet(
    stream: &mut (impl AsyncReadExt + Unpin),
    buf: &mut BytesMut,
    max_packet_size: usize,
) -> Result<Option<Packet>, ConnectionError> {
    loop {
        if let Some((packet, used)) = decode(buf, max_packet_size)? {
            let _ = buf.split_to(used);
            return Ok(Some(packet));
        }
        if stream.read_buf(buf).await? == 0 {
            return Ok(None);
        }
    }
}

/// Serves one client connection until it disconnects, violates the
/// protocol, goes silent past its keep-alive or is taken over.
pub async fn run_connection(
    stream: TcpStream,
    broker: Arc<Broker>,
    config: Arc<BrokerConfig>,
) -> Result<(), ConnectionError> {
    stream.set_nodelay(true)?;
    let (mut reader, writer) = stream.into_split();
    let mut buf = BytesMut::with_capacity(8 * 1024);
    let max = config.max_packet_size;

    let first = tokio::time::timeout(config.connect_timeout, read_packet(&mut reader, &mut buf, max))
        .await
        .map_err(|_| ConnectionError::ConnectTimeout)??;
    let (client_id, keep_alive_s) = match first {
        Some(Packet::Connect {
            client_id,
            keep_alive_s,
            ..
        }) => (client_id, keep_alive_s),
        Some(other) => return Err(ConnectionError::NotConnect(other.name())),
        None => return Ok(()),
    };
    // sessions are always clean; a requested persistent session is served clean
    let client_id = if client_id.is_empty() {
        format!("anonymous-{}", ANONYMOUS.fetch_add(1, Ordering::Relaxed))
    } else {
        client_id
    };

    let SessionHandle {
        generation,
        sender,
        outbound,
        kicked,
        ..
    } = broker.connect(&client_id);
    let _ = sender.send(Outbound::Packet(Packet::ConnAck {
        session_present: false,
        return_code: 0,
    }));
    let writer_task = tokio::spawn(write_loop(writer, outbound));

    let keep_alive = (keep_alive_s > 0).then(|| Duration::from_millis(keep_alive_s as u64 * 1500));
    let result = async {
        loop {
            let next = read_packet(&mut reader, &mut buf, max);
            let packet = tokio::select! {
                _ = kicked.notified() => return Ok(()),
                p = async {
                    match keep_alive {
                        Some(d) => tokio::time::timeout(d, next).await.map_err(|_| ConnectionError::KeepAliveExpired)?,
                        None => next.await,
                    }
                } => p?,
            };
            let Some(packet) = packet else {
                return Ok(());
            };
            match packet {
                Packet::Publish(p) => {
                    handle_publish(&broker, &client_id, &p)?;
                    if let Some(id) = p.packet_id {
                        let _ = sender.send(Outbound::Packet(Packet::PubAck(id)));
                    }
                }
                Packet::Subscribe { packet_id, filters } => {
                    let return_codes = broker.handle_subscribe(&client_id, &filters);
                    let _ = sender.send(Outbound::Packet(Packet::SubAck {
                        packet_id,
                        return_codes,
                    }));
                }
                Packet::Unsubscribe { packet_id, filters } => {
                    broker.handle_unsubscribe(&client_id, &filters);
                    let _ = sender.send(Outbound::Packet(Packet::UnsubAck(packet_id)));
                }
                Packet::PingReq => {
                    let _ = sender.send(Outbound::Packet(Packet::PingResp));
                }
                Packet::PubAck(_) => {}
                Packet::Disconnect => return Ok(()),
                other => return Err(ConnectionError::Protocol(ProtocolViolation::Unexpected(other.name()))),
            }
        }
    }
    .await;

    broker.disconnect(&client_id, generation);
    drop(sender);
    // the writer drains what is queued, then closes
    let _ = writer_task.await;
    result
}

fn handle_publish(broker: &Broker, client_id: &str, p: &Publish) -> Result<(), ConnectionError> {
    match broker.handle_publish(client_id, &p.topic, &p.payload, p.qos) {
        Ok(_) => Ok(()),
        Err(e) if broker.lenient_commands() => {
            warn!(client_id, topic = p.topic.as_str(), error = %e, "publish dropped");
            Ok(())
        }
        Err(e) => Err(ConnectionError::Command(e.to_string())),
    }
}

async fn write_loop(mut writer: OwnedWriteHalf, mut outbound: mpsc::UnboundedReceiver<Outbound>) {
    let mut next_id: u16 = 0;
    let mut out = BytesMut::with_capacity(16 * 1024);
    while let Some(first) = outbound.recv().await {
        let mut item = Some(first);
        // batch whatever is already queued into one write
        while let Some(o) = item.take() {
            let packet = match o {
                Outbound::Packet(p) => p,
                Outbound::Deliver { topic, payload, qos } => {
                    let packet_id = (qos > 0).then(|| {
                        next_id = next_id.checked_add(1).unwrap_or(1);
                        next_id
                    });
                    Packet::Publish(Publish {
                        topic: topic.to_string(),
                        payload,
                        qos,
                        packet_id,
                        dup: false,
                    })
                }
            };
            encode(&packet, &mut out);
            if out.len() < 64 * 1024 {
                item = outbound.try_recv().ok();
            }
        }
        if writer.write_all(&out).await.is_err() {
            return;
        }
        out.clear();
    }
    let _ = writer.shutdown().await;
}
