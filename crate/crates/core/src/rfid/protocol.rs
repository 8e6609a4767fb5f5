//! Binary reader protocol.
//!
//! ```text
//! header (8 bytes, big-endian): magic u16 = 0xAF1D | version u8 = 1 | type u8 | payload_len u32
//! 0x01 INVENTORY_REQ  [antenna u8]             (empty payload: all antennas)
//! 0x02 TAG_REPORT     count u16, count × (epc 12B, rssi i16 centi-dBm, antenna u8, timestamp u64 µs)
//! 0x03 WRITE_REQ      epc 12B, bank u8, wordptr u16, word u16
//! 0x04 WRITE_RESP     status u8
//! 0x05 READ_REQ       epc 12B, bank u8, wordptr u16
//! 0x06 READ_RESP      status u8, word u16
//! status: 0 OK, 1 TAG_NOT_FOUND, 2 MEMORY_OVERRUN
//! ```

use std::io::{self, Read, Write};

use thiserror::Error;

use super::{Epc, ReadEvent};

pub const MAGIC: u16 = 0xAF1D;
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 8;
/// Largest accepted payload: a full 65535-tag report.
pub const MAX_PAYLOAD: usize = 2 + 65535 * TAG_ENTRY_LEN;
const TAG_ENTRY_LEN: usize = 12 + 2 + 1 + 8;

pub mod msg_type {
    pub const INVENTORY_REQ: u8 = 0x01;
    pub const TAG_REPORT: u8 = 0x02;
    pub const WRITE_REQ: u8 = 0x03;
    pub const WRITE_RESP: u8 = 0x04;
    pub const READ_REQ: u8 = 0x05;
    pub const READ_RESP: u8 = 0x06;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Ok = 0,
    TagNotFound = 1,
    MemoryOverrun = 2,
}

impl Status {
    fn from_u8(v: u8) -> Result<Self, ProtocolError> {
        match v {
            0 => Ok(Status::Ok),
            1 => Ok(Status::TagNotFound),
            2 => Ok(Status::MemoryOverrun),
            other => Err(ProtocolError::InvalidStatus(other)),
        }
    }
}

/// One tag line of a report. RSSI is carried in hundredths of a dBm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TagReportEntry {
    pub epc: Epc,
    pub rssi_centi_dbm: i16,
    pub antenna: u8,
    pub timestamp_us: u64,
}

impl TagReportEntry {
    pub fn from_event(e: &ReadEvent) -> Self {
        let centi = (e.rssi * 100.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        Self { epc: e.epc, rssi_centi_dbm: centi, antenna: e.antenna_id, timestamp_us: e.timestamp_us }
    }

    pub fn to_event(&self) -> ReadEvent {
        ReadEvent { epc: self.epc, rssi: self.rssi_centi_dbm as f64 / 100.0, antenna_id: self.antenna, timestamp_us: self.timestamp_us }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Message {
    InventoryReq { antenna: Option<u8> },
    TagReport { tags: Vec<TagReportEntry> },
    WriteReq { epc: Epc, bank: u8, wordptr: u16, word: u16 },
    WriteResp { status: Status },
    ReadReq { epc: Epc, bank: u8, wordptr: u16 },
    ReadResp { status: Status, word: u16 },
}

impl Message {
    pub fn msg_type(&self) -> u8 {
        match self {
            Message::InventoryReq { .. } => msg_type::INVENTORY_REQ,
            Message::TagReport { .. } => msg_type::TAG_REPORT,
            Message::WriteReq { .. } => msg_type::WRITE_REQ,
            Message::WriteResp { .. } => msg_type::WRITE_RESP,
            Message::ReadReq { .. } => msg_type::READ_REQ,
            Message::ReadResp { .. } => msg_type::READ_RESP,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("bad magic 0x{0:04X}")]
    BadMagic(u16),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated frame: need {needed} bytes, have {got}")]
    Truncated { needed: usize, got: usize },
    #[error("unknown message type 0x{0:02X}")]
    UnknownMessageType(u8),
    #[error("invalid status code {0}")]
    InvalidStatus(u8),
    #[error("payload of {actual} bytes does not fit message type 0x{msg_type:02X}")]
    PayloadLengthMismatch { msg_type: u8, actual: usize },
    #[error("declared payload length {0} exceeds the maximum")]
    FrameTooLarge(u32),
    #[error("{0} trailing bytes after frame")]
    TrailingBytes(usize),
    #[error("tag report with {0} entries does not fit the count field")]
    ReportTooLarge(usize),
}

fn epc_bytes(e: &Epc, out: &mut Vec<u8>) {
    out.extend_from_slice(&e.0);
}

/// Serializes a message into one frame.
pub fn encode_message(msg: &Message) -> Result<Vec<u8>, ProtocolError> {
    let mut p = Vec::new();
    match msg {
        Message::InventoryReq { antenna } => p.extend(antenna.iter()),
        Message::TagReport { tags } => {
            let count = u16::try_from(tags.len()).map_err(|_| ProtocolError::ReportTooLarge(tags.len()))?;
            p.extend_from_slice(&count.to_be_bytes());
            for t in tags {
                epc_bytes(&t.epc, &mut p);
                p.extend_from_slice(&t.rssi_centi_dbm.to_be_bytes());
                p.push(t.antenna);
                p.extend_from_slice(&t.timestamp_us.to_be_bytes());
            }
        }
        Message::WriteReq { epc, bank, wordptr, word } => {
            epc_bytes(epc, &mut p);
            p.push(*bank);
            p.extend_from_slice(&wordptr.to_be_bytes());
            p.extend_from_slice(&word.to_be_bytes());
        }
        Message::WriteResp { status } => p.push(*status as u8),
        Message::ReadReq { epc, bank, wordptr } => {
            epc_bytes(epc, &mut p);
            p.push(*bank);
            p.extend_from_slice(&wordptr.to_be_bytes());
        }
        Message::ReadResp { status, word } => {
            p.push(*status as u8);
            p.extend_from_slice(&word.to_be_bytes());
        }
    }
    let mut out = Vec::with_capacity(HEADER_LEN + p.len());
    out.extend_from_slice(&MAGIC.to_be_bytes());
    out.push(VERSION);
    out.push(msg.msg_type());
    out.extend_from_slice(&(p.len() as u32).to_be_bytes());
    out.extend_from_slice(&p);
    Ok(out)
}

/// Validated frame header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub msg_type: u8,
    pub payload_len: usize,
}

pub fn decode_header(bytes: &[u8]) -> Result<Header, ProtocolError> {
    if bytes.len() < HEADER_LEN {
        return Err(ProtocolError::Truncated { needed: HEADER_LEN, got: bytes.len() });
    }
    let magic = u16::from_be_bytes([bytes[0], bytes[1]]);
    if magic != MAGIC {
        return Err(ProtocolError::BadMagic(magic));
    }
    if bytes[2] != VERSION {
        return Err(ProtocolError::UnsupportedVersion(bytes[2]));
    }
    let msg_type = bytes[3];
    if !(msg_type::INVENTORY_REQ..=msg_type::READ_RESP).contains(&msg_type) {
        return Err(ProtocolError::UnknownMessageType(msg_type));
    }
    let len = u32::from_be_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]);
    if len as usize > MAX_PAYLOAD {
        return Err(ProtocolError::FrameTooLarge(len));
    }
    Ok(Header { msg_type, payload_len: len as usize })
}

/// Parses exactly one frame.
pub fn decode_message(bytes: &[u8]) -> Result<Message, ProtocolError> {
    let h = decode_header(bytes)?;
    let total = HEADER_LEN + h.payload_len;
    if bytes.len() < total {
        return Err(ProtocolError::Truncated { needed: total, got: bytes.len() });
    }
    if bytes.len() > total {
        return Err(ProtocolError::TrailingBytes(bytes.len() - total));
    }
    decode_payload(h.msg_type, &bytes[HEADER_LEN..])
}

fn epc_at(p: &[u8]) -> Epc {
    let mut e = [0u8; 12];
    e.copy_from_slice(&p[..12]);
    Epc(e)
}

fn u16_at(p: &[u8], i: usize) -> u16 {
    u16::from_be_bytes([p[i], p[i + 1]])
}

pub fn decode_payload(ty: u8, p: &[u8]) -> Result<Message, ProtocolError> {
    let expect = |n: usize| if p.len() == n { Ok(()) } else { Err(ProtocolError::PayloadLengthMismatch { msg_type: ty, actual: p.len() }) };
    match ty {
        msg_type::INVENTORY_REQ => match p.len() {
            0 => Ok(Message::InventoryReq { antenna: None }),
            1 => Ok(Message::InventoryReq { antenna: Some(p[0]) }),
            _ => Err(ProtocolError::PayloadLengthMismatch { msg_type: ty, actual: p.len() }),
        },
        msg_type::TAG_REPORT => {
            if p.len() < 2 {
                return Err(ProtocolError::PayloadLengthMismatch { msg_type: ty, actual: p.len() });
            }
            let count = u16_at(p, 0) as usize;
            expect(2 + count * TAG_ENTRY_LEN)?;
            let tags = p[2..]
                .chunks_exact(TAG_ENTRY_LEN)
                .map(|c| TagReportEntry {
                    epc: epc_at(c),
                    rssi_centi_dbm: u16_at(c, 12) as i16,
                    antenna: c[14],
                    timestamp_us: u64::from_be_bytes(c[15..23].try_into().unwrap()),
                })
                .collect();
            Ok(Message::TagReport { tags })
        }
        msg_type::WRITE_REQ => {
            expect(17)?;
            Ok(Message::WriteReq { epc: epc_at(p), bank: p[12], wordptr: u16_at(p, 13), word: u16_at(p, 15) })
        }
        msg_type::WRITE_RESP => {
            expect(1)?;
            Ok(Message::WriteResp { status: Status::from_u8(p[0])? })
        }
        msg_type::READ_REQ => {
            expect(15)?;
            Ok(Message::ReadReq { epc: epc_at(p), bank: p[12], wordptr: u16_at(p, 13) })
        }
        msg_type::READ_RESP => {
            expect(3)?;
            Ok(Message::ReadResp { status: Status::from_u8(p[0])?, word: u16_at(p, 1) })
        }
        other => Err(ProtocolError::UnknownMessageType(other)),
    }
}

/// Errors of frame I/O on a byte stream.
#[derive(Debug, Error)]
pub enum FrameError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Io(#[from] io::Error),
    /// The peer closed the stream cleanly between frames.
    #[error("connection closed")]
    Closed,
}

/// Reads one frame. A clean EOF before the first header byte yields [`FrameError::Closed`].
pub fn read_frame(r: &mut impl Read) -> Result<Message, FrameError> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Err(FrameError::Closed),
            Ok(0) => return Err(ProtocolError::Truncated { needed: HEADER_LEN, got }.into()),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let h = decode_header(&header)?;
    let mut payload = vec![0u8; h.payload_len];
    let mut got = 0;
    while got < payload.len() {
        match r.read(&mut payload[got..]) {
            Ok(0) => return Err(ProtocolError::Truncated { needed: HEADER_LEN + h.payload_len, got: HEADER_LEN + got }.into()),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(decode_payload(h.msg_type, &payload)?)
}

pub fn write_frame(w: &mut impl Write, msg: &Message) -> Result<(), FrameError> {
    w.write_all(&encode_message(msg)?)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_inventory_is_header_only() {
        let b = encode_message(&Message::InventoryReq { antenna: None }).unwrap();
        assert_eq!(b, vec![0xAF, 0x1D, 1, 1, 0, 0, 0, 0]);
        assert_eq!(decode_message(&b).unwrap(), Message::InventoryReq { antenna: None });
    }

    #[test]
    fn read_resp_layout() {
        let b = encode_message(&Message::ReadResp { status: Status::MemoryOverrun, word: 0xBEEF }).unwrap();
        assert_eq!(b, vec![0xAF, 0x1D, 1, 6, 0, 0, 0, 3, 2, 0xBE, 0xEF]);
    }

    #[test]
    fn header_errors() {
        assert_eq!(decode_message(&[0, 0, 1, 1, 0, 0, 0, 0]), Err(ProtocolError::BadMagic(0)));
        assert_eq!(decode_message(&[0xAF, 0x1D, 2, 1, 0, 0, 0, 0]), Err(ProtocolError::UnsupportedVersion(2)));
        assert_eq!(decode_message(&[0xAF, 0x1D, 1, 9, 0, 0, 0, 0]), Err(ProtocolError::UnknownMessageType(9)));
        assert_eq!(decode_message(&[0xAF, 0x1D, 1]), Err(ProtocolError::Truncated { needed: 8, got: 3 }));
        assert_eq!(decode_message(&[0xAF, 0x1D, 1, 4, 0, 0, 0, 1]), Err(ProtocolError::Truncated { needed: 9, got: 8 }));
        assert_eq!(decode_message(&[0xAF, 0x1D, 1, 4, 0, 0, 0, 1, 7]), Err(ProtocolError::InvalidStatus(7)));
        assert!(matches!(decode_message(&[0xAF, 0x1D, 1, 4, 0, 0, 0, 2, 0, 0]), Err(ProtocolError::PayloadLengthMismatch { .. })));
        assert_eq!(decode_message(&[0xAF, 0x1D, 1, 1, 0xFF, 0xFF, 0xFF, 0xFF]), Err(ProtocolError::FrameTooLarge(u32::MAX)));
    }
}
