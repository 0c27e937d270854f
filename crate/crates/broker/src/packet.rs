//! MQTT 3.1.1 packet subset: QoS 0 and 1, no retained messages, no wills,
//! no credentials.

use bytes::{Buf, BufMut, Bytes, BytesMut};
use thiserror::Error;

pub const DEFAULT_MAX_PACKET_SIZE: usize = 256 * 1024;

/// SUBACK return code for a refused subscription.
pub const SUBACK_FAILURE: u8 = 0x80;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolViolation {
    #[error("unsupported packet type {0}")]
    UnsupportedPacket(u8),
    #[error("invalid flags {flags:#06b} for packet type {packet}")]
    InvalidFlags { packet: u8, flags: u8 },
    #[error("qos 2 is not supported")]
    QosUnsupported,
    #[error("retained messages are not supported")]
    RetainUnsupported,
    #[error("remaining length uses more than four bytes")]
    RemainingLengthOverflow,
    #[error("packet of {0} bytes exceeds the maximum size")]
    TooLarge(usize),
    #[error("malformed utf-8 string")]
    MalformedString,
    #[error("packet ends early")]
    Truncated,
    #[error("{0} trailing bytes after packet body")]
    TrailingBytes(usize),
    #[error("unsupported protocol {name:?} level {level}")]
    UnsupportedProtocol { name: String, level: u8 },
    #[error("unsupported connect flags {0:#010b}")]
    UnsupportedConnectFlags(u8),
    #[error("packet identifier 0")]
    ZeroPacketId,
    #[error("empty subscription list")]
    EmptySubscription,
    #[error("unexpected {0}")]
    Unexpected(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Publish {
    pub topic: String,
    pub payload: Bytes,
    pub qos: u8,
    /// Present iff `qos == 1`.
    pub packet_id: Option<u16>,
    pub dup: bool,
}

impl Publish {
    pub fn qos0(topic: impl Into<String>, payload: impl Into<Bytes>) -> Self {
        Publish {
            topic: topic.into(),
            payload: payload.into(),
            qos: 0,
            packet_id: None,
            dup: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Packet {
    Connect {
        client_id: String,
        clean_session: bool,
        keep_alive_s: u16,
    },
    ConnAck {
        session_present: bool,
        return_code: u8,
    },
    Publish(Publish),
    PubAck(u16),
    Subscribe {
        packet_id: u16,
        filters: Vec<(String, u8)>,
    },
    SubAck {
        packet_id: u16,
        return_codes: Vec<u8>,
    },
    Unsubscribe {
        packet_id: u16,
        filters: Vec<String>,
    },
    UnsubAck(u16),
    PingReq,
    PingResp,
    Disconnect,
}

impl Packet {
    pub fn name(&self) -> &'static str {
        match self {
            Packet::Connect { .. } => "CONNECT",
            Packet::ConnAck { .. } => "CONNACK",
            Packet::Publish(_) => "PUBLISH",
            Packet::PubAck(_) => "PUBACK",
            Packet::Subscribe { .. } => "SUBSCRIBE",
            Packet::SubAck { .. } => "SUBACK",
            Packet::Unsubscribe { .. } => "UNSUBSCRIBE",
            Packet::UnsubAck(_) => "UNSUBACK",
            Packet::PingReq => "PINGREQ",
            Packet::PingResp => "PINGRESP",
            Packet::Disconnect => "DISCONNECT",
        }
    }
}

const CONNECT: u8 = 1;
const CONNACK: u8 = 2;
const PUBLISH: u8 = 3;
const PUBACK: u8 = 4;
const SUBSCRIBE: u8 = 8;
const SUBACK: u8 = 9;
const UNSUBSCRIBE: u8 = 10;
const UNSUBACK: u8 = 11;
const PINGREQ: u8 = 12;
const PINGRESP: u8 = 13;
const DISCONNECT: u8 = 14;

const MAX_REMAINING_LENGTH: usize = 268_435_455;

/// Decodes one packet from the front of `buf`.
///
/// Returns `Ok(None)` while `buf` holds less than a complete packet, and
/// otherwise the packet with the number of bytes it occupied.
pub fn decode(buf: &[u8], max_packet_size: usize) -> Result<Option<(Packet, usize)>, ProtocolViolation> {
    let Some(&first) = buf.first() else {
        return Ok(None);
    };
    let mut remaining = 0usize;
    let mut header_len = 1;
    loop {
        if header_len > 4 {
            return Err(ProtocolViolation::RemainingLengthOverflow);
        }
        let Some(&byte) = buf.get(header_len) else {
            return Ok(None);
        };
        remaining |= ((byte & 0x7f) as usize) << (7 * (header_len - 1));
        header_len += 1;
        if byte & 0x80 == 0 {
            break;
        }
    }
    let total = header_len + remaining;
    if total > max_packet_size {
        return Err(ProtocolViolation::TooLarge(total));
    }
    if buf.len() < total {
        return Ok(None);
    }
    let packet = decode_body(first >> 4, first & 0x0f, &buf[header_len..total])?;
    Ok(Some((packet, total)))
}

fn decode_body(kind: u8, flags: u8, mut body: &[u8]) -> Result<Packet, ProtocolViolation> {
    let expect_flags = |want: u8| {
        if flags == want {
            Ok(())
        } else {
            Err(ProtocolViolation::InvalidFlags { packet: kind, flags })
        }
    };
    let packet = match kind {
        CONNECT => {
            expect_flags(0)?;
            let name = read_string(&mut body)?;
            let level = read_u8(&mut body)?;
            if name != "MQTT" || level != 4 {
                return Err(ProtocolViolation::UnsupportedProtocol { name, level });
            }
            let connect_flags = read_u8(&mut body)?;
            // only the clean-session bit is supported
            if connect_flags & !0x02 != 0 {
                return Err(ProtocolViolation::UnsupportedConnectFlags(connect_flags));
            }
            let keep_alive_s = read_u16(&mut body)?;
            let client_id = read_string(&mut body)?;
            Packet::Connect {
                client_id,
                clean_session: connect_flags & 0x02 != 0,
                keep_alive_s,
            }
        }
        CONNACK => {
            expect_flags(0)?;
            let ack = read_u8(&mut body)?;
            if ack & !0x01 != 0 {
                return Err(ProtocolViolation::Unexpected("connack flags"));
            }
            Packet::ConnAck {
                session_present: ack == 1,
                return_code: read_u8(&mut body)?,
            }
        }
        PUBLISH => {
            let qos = (flags >> 1) & 0x03;
            if qos > 1 {
                return Err(ProtocolViolation::QosUnsupported);
            }
            if flags & 0x01 != 0 {
                return Err(ProtocolViolation::RetainUnsupported);
            }
            let dup = flags & 0x08 != 0;
            if dup && qos == 0 {
                return Err(ProtocolViolation::InvalidFlags { packet: kind, flags });
            }
            let topic = read_string(&mut body)?;
            let packet_id = if qos == 1 { Some(read_packet_id(&mut body)?) } else { None };
            let payload = Bytes::copy_from_slice(body);
            body = &[];
            Packet::Publish(Publish {
                topic,
                payload,
                qos,
                packet_id,
                dup,
            })
        }
        PUBACK => {
            expect_flags(0)?;
            Packet::PubAck(read_packet_id(&mut body)?)
        }
        SUBSCRIBE => {
            expect_flags(0b0010)?;
            let packet_id = read_packet_id(&mut body)?;
            let mut filters = Vec::new();
            while !body.is_empty() {
                let filter = read_string(&mut body)?;
                let qos = read_u8(&mut body)?;
                if qos > 2 {
                    return Err(ProtocolViolation::Unexpected("requested qos"));
                }
                filters.push((filter, qos));
            }
            if filters.is_empty() {
                return Err(ProtocolViolation::EmptySubscription);
            }
            Packet::Subscribe { packet_id, filters }
        }
        SUBACK => {
            expect_flags(0)?;
            let packet_id = read_packet_id(&mut body)?;
            let return_codes = body.to_vec();
            body = &[];
            Packet::SubAck {
                packet_id,
                return_codes,
            }
        }
        UNSUBSCRIBE => {
            expect_flags(0b0010)?;
            let packet_id = read_packet_id(&mut body)?;
            let mut filters = Vec::new();
            while !body.is_empty() {
                filters.push(read_string(&mut body)?);
            }
            if filters.is_empty() {
                return Err(ProtocolViolation::EmptySubscription);
            }
            Packet::Unsubscribe { packet_id, filters }
        }
        UNSUBACK => {
            expect_flags(0)?;
            Packet::UnsubAck(read_packet_id(&mut body)?)
        }
        PINGREQ => {
            expect_flags(0)?;
            Packet::PingReq
        }
        PINGRESP => {
            expect_flags(0)?;
            Packet::PingResp
        }
        DISCONNECT => {
            expect_flags(0)?;
            Packet::Disconnect
        }
        other => return Err(ProtocolViolation::UnsupportedPacket(other)),
    };
    if !body.is_empty() {
        return Err(ProtocolViolation::TrailingBytes(body.len()));
    }
    Ok(packet)
}

fn read_u8(buf: &mut &[u8]) -> Result<u8, ProtocolViolation> {
    if buf.is_empty() {
        return Err(ProtocolViolation::Truncated);
    }
    Ok(buf.get_u8())
}

fn read_u16(buf: &mut &[u8]) -> Result<u16, ProtocolViolation> {
    if buf.len() < 2 {
        return Err(ProtocolViolation::Truncated);
    }
    Ok(buf.get_u16())
}

fn read_packet_id(buf: &mut &[u8]) -> Result<u16, ProtocolViolation> {
    match read_u16(buf)? {
        0 => Err(ProtocolViolation::ZeroPacketId),
        id => Ok(id),
    }
}

fn read_string(buf: &mut &[u8]) -> Result<String, ProtocolViolation> {
    let len = read_u16(buf)? as usize;
    if buf.len() < len {
        return Err(ProtocolViolation::Truncated);
    }
    let text = std::str::from_utf8(&buf[..len]).map_err(|_| ProtocolViolation::MalformedString)?;
    if text.contains('\0') {
        return Err(ProtocolViolation::MalformedString);
    }
    let text = text.to_owned();
    buf.advance(len);
    Ok(text)
}

/// Appends the wire form of `packet` to `out`.
///
/// # Panics
///
/// If a string exceeds 65,535 bytes or the packet exceeds the largest
/// encodable remaining length.
pub fn encode(packet: &Packet, out: &mut BytesMut) {
    let mut body = BytesMut::new();
    let first = match packet {
        Packet::Connect {
            client_id,
            clean_session,
            keep_alive_s,
        } => {
            put_string(&mut body, "MQTT");
            body.put_u8(4);
            body.put_u8(if *clean_session { 0x02 } else { 0 });
            body.put_u16(*keep_alive_s);
            put_string(&mut body, client_id);
            CONNECT << 4
        }
        Packet::ConnAck {
            session_present,
            return_code,
        } => {
            body.put_u8(*session_present as u8);
            body.put_u8(*return_code);
            CONNACK << 4
        }
        Packet::Publish(p) => {
            put_string(&mut body, &p.topic);
            if let Some(id) = p.packet_id {
                body.put_u16(id);
            }
            body.put_slice(&p.payload);
            (PUBLISH << 4) | ((p.dup as u8) << 3) | (p.qos << 1)
        }
        Packet::PubAck(id) => {
            body.put_u16(*id);
            PUBACK << 4
        }
        Packet::Subscribe { packet_id, filters } => {
            body.put_u16(*packet_id);
            for (f, qos) in filters {
                put_string(&mut body, f);
                body.put_u8(*qos);
            }
            (SUBSCRIBE << 4) | 0b0010
        }
        Packet::SubAck {
            packet_id,
            return_codes,
        } => {
            body.put_u16(*packet_id);
            body.put_slice(return_codes);
            SUBACK << 4
        }
        Packet::Unsubscribe { packet_id, filters } => {
            body.put_u16(*packet_id);
            for f in filters {
                put_string(&mut body, f);
            }
            (UNSUBSCRIBE << 4) | 0b0010
        }
        Packet::UnsubAck(id) => {
            body.put_u16(*id);
            UNSUBACK << 4
        }
        Packet::PingReq => PINGREQ << 4,
        Packet::PingResp => PINGRESP << 4,
        Packet::Disconnect => DISCONNECT << 4,
    };
    out.put_u8(first);
    put_remaining_length(out, body.len());
    out.put_slice(&body);
}

pub fn encode_to_vec(packet: &Packet) -> Vec<u8> {
    let mut out = BytesMut::new();
    encode(packet, &mut out);
    out.to_vec()
}

fn put_string(out: &mut BytesMut, s: &str) {
    let len = u16::try_from(s.len()).expect("string longer than 65535 bytes");
    out.put_u16(len);
    out.put_slice(s.as_bytes());
}

fn put_remaining_length(out: &mut BytesMut, mut len: usize) {
    assert!(len <= MAX_REMAINING_LENGTH, "packet too large to encode");
    loop {
        let mut byte = (len % 128) as u8;
        len /= 128;
        if len > 0 {
            byte |= 0x80;
        }
        out.put_u8(byte);
        if len == 0 {
            break;
        }
    }
}
