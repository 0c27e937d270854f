//! Minimal asynchronous MQTT client for tests and load generation.

use std::collections::HashMap;
use std::io;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU16, Ordering};
use std::sync::Arc;
use std::time::Duration;

use bytes::{Bytes, BytesMut};
use parking_lot::Mutex;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio::sync::{mpsc, oneshot};
use tokio::task::JoinHandle;

use crate::packet::{decode, encode, Packet, Publish, DEFAULT_MAX_PACKET_SIZE};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub topic: String,
    pub payload: Bytes,
    pub qos: u8,
}

enum Outgoing {
    Bytes(BytesMut),
    /// Flush and close the write half.
    Close,
}

type Pending = Arc<Mutex<HashMap<u16, oneshot::Sender<Packet>>>>;

/// Key for the single outstanding PINGREQ; real packet ids are never 0.
const PING_KEY: u16 = 0;

pub struct Client {
    outgoing: mpsc::UnboundedSender<Outgoing>,
    pending: Pending,
    messages: mpsc::UnboundedReceiver<Message>,
    next_id: AtomicU16,
    tasks: [JoinHandle<()>; 2],
}

fn broken(what: &str) -> io::Error {
    io::Error::new(io::ErrorKind::ConnectionAborted, what.to_owned())
}

impl Client {
    pub async fn connect(addr: SocketAddr, client_id: &str, keep_alive_s: u16) -> io::Result<Client> {
        let mut stream = TcpStream::connect(addr).await?;
        stream.set_nodelay(true)?;
        let mut buf = BytesMut::new();
        encode(
            &Packet::Connect {
                client_id: client_id.to_owned(),
                clean_session: true,
                keep_alive_s,
            },
            &mut buf,
        );
        stream.write_all(&buf).await?;
        buf.clear();
        let connack = loop {
            if let Some((p, used)) = decode(&buf, DEFAULT_MAX_PACKET_SIZE).map_err(invalid)? {
                let _ = buf.split_to(used);
                break p;
            }
            if stream.read_buf(&mut buf).await? == 0 {
                return Err(broken("closed before CONNACK"));
            }
        };
        match connack {
            Packet::ConnAck { return_code: 0, .. } => {}
            other => return Err(io::Error::new(io::ErrorKind::ConnectionRefused, format!("{other:?}"))),
        }

        let (mut reader, mut writer) = stream.into_split();
        let (outgoing, mut out_rx) = mpsc::unbounded_channel::<Outgoing>();
        let (msg_tx, messages) = mpsc::unbounded_channel();
        let pending: Pending = Arc::default();

        let write_task = tokio::spawn(async move {
            let mut chunk = BytesMut::new();
            let mut closing = false;
            while let Some(first) = out_rx.recv().await {
                let mut next = Some(first);
                while let Some(item) = next.take() {
                    match item {
                        Outgoing::Bytes(b) => chunk.extend_from_slice(&b),
                        Outgoing::Close => closing = true,
                    }
                    if !closing && chunk.len() < 64 * 1024 {
                        next = out_rx.try_recv().ok();
                    }
                }
                if writer.write_all(&chunk).await.is_err() {
                    return;
                }
                chunk.clear();
                if closing {
                    break;
                }
            }
            let _ = writer.shutdown().await;
        });

        let acks = outgoing.clone();
        let waiting = Arc::clone(&pending);
        let read_task = tokio::spawn(async move {
            loop {
                loop {
                    match decode(&buf, DEFAULT_MAX_PACKET_SIZE) {
                        Ok(Some((p, used))) => {
                            let _ = buf.split_to(used);
                            dispatch(p, &msg_tx, &acks, &waiting);
                        }
                        Ok(None) => break,
                        Err(_) => return,
                    }
                }
                match reader.read_buf(&mut buf).await {
                    Ok(0) | Err(_) => return,
                    Ok(_) => {}
                }
            }
        });

        Ok(Client {
            outgoing,
            pending,
            messages,
            next_id: AtomicU16::new(1),
            tasks: [write_task, read_task],
        })
    }

    fn send(&self, packet: &Packet) -> io::Result<()> {
        let mut buf = BytesMut::new();
        encode(packet, &mut buf);
        self.outgoing
            .send(Outgoing::Bytes(buf))
            .map_err(|_| broken("writer stopped"))
    }

    fn packet_id(&self) -> u16 {
        loop {
            let id = self.next_id.fetch_add(1, Ordering::Relaxed);
            if id != 0 {
                return id;
            }
        }
    }

    async fn request(&self, key: u16, packet: &Packet) -> io::Result<Packet> {
        let (tx, rx) = oneshot::channel();
        self.pending.lock().insert(key, tx);
        self.send(packet)?;
        rx.await.map_err(|_| broken("connection closed while waiting for a reply"))
    }

    /// QoS 0 returns once queued; QoS 1 waits for the PUBACK.
    pub async fn publish(&self, topic: &str, payload: impl Into<Bytes>, qos: u8) -> io::Result<()> {
        let payload = payload.into();
        if qos == 0 {
            return self.send(&Packet::Publish(Publish::qos0(topic, payload)));
        }
        let id = self.packet_id();
        let publish = Packet::Publish(Publish {
            topic: topic.to_owned(),
            payload,
            qos: 1,
            packet_id: Some(id),
            dup: false,
        });
        self.request(id, &publish).await.map(|_| ())
    }

    /// Returns one SUBACK code per filter.
    pub async fn subscribe(&self, filters: &[(&str, u8)]) -> io::Result<Vec<u8>> {
        let packet_id = self.packet_id();
        let packet = Packet::Subscribe {
            packet_id,
            filters: filters.iter().map(|(f, q)| (f.to_string(), *q)).collect(),
        };
        match self.request(packet_id, &packet).await? {
            Packet::SubAck { return_codes, .. } => Ok(return_codes),
            other => Err(broken(&format!("unexpected {other:?}"))),
        }
    }

    pub async fn unsubscribe(&self, filters: &[&str]) -> io::Result<()> {
        let packet_id = self.packet_id();
        let packet = Packet::Unsubscribe {
            packet_id,
            filters: filters.iter().map(|f| f.to_string()).collect(),
        };
        self.request(packet_id, &packet).await.map(|_| ())
    }

    /// Round trip through the broker. Everything the broker sent before
    /// answering has been received once this returns.
    pub async fn ping(&self) -> io::Result<()> {
        self.request(PING_KEY, &Packet::PingReq).await.map(|_| ())
    }

    pub async fn recv(&mut self) -> Option<Message> {
        self.messages.recv().await
    }

    pub async fn recv_timeout(&mut self, timeout: Duration) -> Option<Message> {
        tokio::time::timeout(timeout, self.messages.recv()).await.ok().flatten()
    }

    /// Messages already received, without waiting.
    pub fn drain(&mut self) -> Vec<Message> {
        let mut out = Vec::new();
        while let Ok(m) = self.messages.try_recv() {
            out.push(m);
        }
        out
    }

    pub async fn disconnect(mut self) -> io::Result<()> {
        self.send(&Packet::Disconnect)?;
        let _ = self.outgoing.send(Outgoing::Close);
        let _ = (&mut self.tasks[0]).await;
        Ok(())
    }
}

impl Drop for Client {
    fn drop(&mut self) {
        for t in &self.tasks {
            t.abort();
        }
    }
}

fn invalid(e: impl std::error::Error + Send + Sync + 'static) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, e)
}

fn dispatch(
    packet: Packet,
    messages: &mpsc::UnboundedSender<Message>,
    acks: &mpsc::UnboundedSender<Outgoing>,
    pending: &Pending,
) {
    let key = match &packet {
        Packet::Publish(p) => {
            if let Some(id) = p.packet_id {
                let mut buf = BytesMut::new();
                encode(&Packet::PubAck(id), &mut buf);
                let _ = acks.send(Outgoing::Bytes(buf));
            }
            let _ = messages.send(Message {
                topic: p.topic.clone(),
                payload: p.payload.clone(),
                qos: p.qos,
            });
            return;
        }
        Packet::PubAck(id) | Packet::UnsubAck(id) => *id,
        Packet::SubAck { packet_id, .. } => *packet_id,
        Packet::PingResp => PING_KEY,
        _ => return,
    };
    if let Some(tx) = pending.lock().remove(&key) {
        let _ = tx.send(packet);
    }
}
