//! Binary framing for protocol messages.
//!
//! ```text
//! frame   := "DCM1" kind:u8 sender:u32 receiver:u32 len:u64 payload[len]
//! data    := site:u32 rows:u32 cols:u32 global:u32[cols] values:f64[rows*cols]
//! cov     := site_a:u32 site_b:u32 rows:u32 cols:u32
//!            row_globals:u32[rows] col_globals:u32[cols] values:f64[rows*cols]
//! done    := (empty)
//! ```
//!
//! Integers and floats are little-endian; values are row-major binary64.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::covariance::{ColumnBlock, CovBlock, SiteId};
use crate::matrix::DenseMatrix;

pub const MAGIC: [u8; 4] = *b"DCM1";
pub const HEADER_LEN: usize = 4 + 1 + 4 + 4 + 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("malformed frame: {0}")]
    MalformedFrame(&'static str),
    #[error("unknown message kind {0:#04x}")]
    UnknownKind(u8),
    #[error("length mismatch: expected {expected} bytes, found {found}")]
    LengthMismatch { expected: u64, found: u64 },
    #[error("field does not fit its wire width: {0}")]
    FieldOverflow(&'static str),
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MessageKind {
    DataBlock = 1,
    CovBlockMsg = 2,
    Done = 3,
}

impl TryFrom<u8> for MessageKind {
    type Error = WireError;

    fn try_from(value: u8) -> Result<Self, WireError> {
        match value {
            1 => Ok(Self::DataBlock),
            2 => Ok(Self::CovBlockMsg),
            3 => Ok(Self::Done),
            other => Err(WireError::UnknownKind(other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// Raw columns shipped from a site to one of its successors.
    DataBlock(ColumnBlock),
    /// A local or cross covariance block forwarded to the coordinator.
    CovBlock(CovBlock),
    Done,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolMessage {
    pub sender: SiteId,
    pub receiver: SiteId,
    pub payload: Payload,
}

impl ProtocolMessage {
    pub fn kind(&self) -> MessageKind {
        match self.payload {
            Payload::DataBlock(_) => MessageKind::DataBlock,
            Payload::CovBlock(_) => MessageKind::CovBlockMsg,
            Payload::Done => MessageKind::Done,
        }
    }

    /// Size of the encoded frame in bytes.
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + payload_len(&self.payload)
    }
}

fn payload_len(p: &Payload) -> usize {
    match p {
        Payload::DataBlock(b) => 12 + 4 * b.width() + 8 * b.rows() * b.width(),
        Payload::CovBlock(c) => {
            let (r, k) = (c.block.rows(), c.block.cols());
            16 + 4 * (r + k) + 8 * r * k
        }
        Payload::Done => 0,
    }
}

/// Parsed fixed-size frame header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub kind: MessageKind,
    pub sender: u32,
    pub receiver: u32,
    pub payload_len: u64,
}

fn put_u32(out: &mut Vec<u8>, v: usize, what: &'static str) -> Result<(), WireError> {
    let v = u32::try_from(v).map_err(|_| WireError::FieldOverflow(what))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_values(out: &mut Vec<u8>, m: &DenseMatrix) {
    for v in m.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_message(msg: &ProtocolMessage) -> Result<Vec<u8>, WireError> {
    let len = payload_len(&msg.payload);
    let mut out = Vec::with_capacity(HEADER_LEN + len);
    out.extend_from_slice(&MAGIC);
    out.push(msg.kind() as u8);
    put_u32(&mut out, msg.sender, "sender")?;
    put_u32(&mut out, msg.receiver, "receiver")?;
    out.extend_from_slice(&(len as u64).to_le_bytes());
    match &msg.payload {
        Payload::DataBlock(b) => {
            put_u32(&mut out, b.site(), "site")?;
            put_u32(&mut out, b.rows(), "rows")?;
            put_u32(&mut out, b.width(), "cols")?;
            for &g in b.global_cols() {
                put_u32(&mut out, g, "global column")?;
            }
            put_values(&mut out, b.data());
        }
        Payload::CovBlock(c) => {
            put_u32(&mut out, c.site_a, "site_a")?;
            put_u32(&mut out, c.site_b, "site_b")?;
            put_u32(&mut out, c.block.rows(), "rows")?;
            put_u32(&mut out, c.block.cols(), "cols")?;
            for &g in c.rows_global_cols.iter().chain(&c.cols_global_cols) {
                put_u32(&mut out, g, "global column")?;
            }
            put_values(&mut out, &c.block);
        }
        Payload::Done => {}
    }
    debug_assert_eq!(out.len(), HEADER_LEN + len);
    Ok(out)
}

/// Parses the 21-byte header at the front of `bytes`.
pub fn decode_header(bytes: &[u8]) -> Result<FrameHeader, WireError> {
    if bytes.len() < HEADER_LEN {
        return Err(WireError::MalformedFrame("truncated header"));
    }
    if bytes[..4] != MAGIC {
        return Err(WireError::MalformedFrame("bad magic"));
    }
    let kind = MessageKind::try_from(bytes[4])?;
    let mut r = Reader { buf: &bytes[5..HEADER_LEN] };
    Ok(FrameHeader { kind, sender: r.u32()?, receiver: r.u32()?, payload_len: r.u64()? })
}

pub fn decode_message(bytes: &[u8]) -> Result<ProtocolMessage, WireError> {
    let header = decode_header(bytes)?;
    let body = &bytes[HEADER_LEN..];
    if (body.len() as u64) < header.payload_len {
        return Err(WireError::MalformedFrame("truncated payload"));
    }
    if body.len() as u64 > header.payload_len {
        return Err(WireError::LengthMismatch { expected: header.payload_len, found: body.len() as u64 });
    }
    let mut r = Reader { buf: body };
    let payload = match header.kind {
        MessageKind::DataBlock => {
            let site = r.u32()? as usize;
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            r.expect_remaining(4 * cols as u64 + 8 * rows as u64 * cols as u64)?;
            let globals = r.indices(cols)?;
            let data = r.matrix(rows, cols)?;
            Payload::DataBlock(
                ColumnBlock::new(site, data, globals).map_err(|e| WireError::InvalidPayload(format!("{e}")))?,
            )
        }
        MessageKind::CovBlockMsg => {
            let site_a = r.u32()? as usize;
            let site_b = r.u32()? as usize;
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            r.expect_remaining(4 * (rows as u64 + cols as u64) + 8 * rows as u64 * cols as u64)?;
            let rows_global_cols = r.indices(rows)?;
            let cols_global_cols = r.indices(cols)?;
            let block = r.matrix(rows, cols)?;
            Payload::CovBlock(CovBlock { site_a, site_b, block, rows_global_cols, cols_global_cols })
        }
        MessageKind::Done => Payload::Done,
    };
    if !r.buf.is_empty() {
        return Err(WireError::LengthMismatch {
            expected: header.payload_len - r.buf.len() as u64,
            found: header.payload_len,
        });
    }
    Ok(ProtocolMessage { sender: header.sender as usize, receiver: header.receiver as usize, payload })
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() < n {
            return Err(WireError::MalformedFrame("payload shorter than its own fields"));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn expect_remaining(&self, n: u64) -> Result<(), WireError> {
        if self.buf.len() as u64 != n {
            return Err(WireError::LengthMismatch { expected: n, found: self.buf.len() as u64 });
        }
        Ok(())
    }

    fn indices(&mut self, n: usize) -> Result<Vec<usize>, WireError> {
        (0..n).map(|_| self.u32().map(|v| v as usize)).collect()
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DenseMatrix, WireError> {
        let raw = self.take(8 * rows * cols)?;
        let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        DenseMatrix::new(rows, cols, values, None).map_err(|e| WireError::InvalidPayload(format!("{e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn data_msg() -> ProtocolMessage {
        let data = DenseMatrix::new(2, 1, vec![1.5, -2.25], None).unwrap();
        ProtocolMessage {
            sender: 0,
            receiver: 1,
            payload: Payload::DataBlock(ColumnBlock::new(0, data, vec![3]).unwrap()),
        }
    }

    #[test]
    fn data_block_layout() {
        let msg = data_msg();
        let bytes = encode_message(&msg).unwrap();
        // 12 bytes of site/rows/cols, one index, two values
        assert_eq!(bytes.len(), HEADER_LEN + 12 + 4 + 16);
        assert_eq!(bytes.len(), msg.encoded_len());
        assert_eq!(&bytes[..4], b"DCM1");
        assert_eq!(bytes[4], 1);
        assert_eq!(&bytes[5..9], &0u32.to_le_bytes());
        assert_eq!(&bytes[9..13], &1u32.to_le_bytes());
        assert_eq!(&bytes[13..21], &32u64.to_le_bytes());
        assert_eq!(&bytes[21..25], &0u32.to_le_bytes());
        assert_eq!(&bytes[25..29], &2u32.to_le_bytes());
        assert_eq!(&bytes[29..33], &1u32.to_le_bytes());
        assert_eq!(&bytes[33..37], &3u32.to_le_bytes());
        assert_eq!(&bytes[37..45], &1.5f64.to_le_bytes());
        assert_eq!(&bytes[45..53], &(-2.25f64).to_le_bytes());
        assert_eq!(decode_message(&bytes).unwrap(), msg);
    }

    #[test]
    fn done_and_cov_roundtrip() {
        let done = ProtocolMessage { sender: 2, receiver: 3, payload: Payload::Done };
        let bytes = encode_message(&done).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN);
        assert_eq!(decode_message(&bytes).unwrap(), done);

        let cov = ProtocolMessage {
            sender: 1,
            receiver: 3,
            payload: Payload::CovBlock(CovBlock {
                site_a: 0,
                site_b: 1,
                block: DenseMatrix::new(1, 2, vec![0.25, -7.0], None).unwrap(),
                rows_global_cols: vec![0],
                cols_global_cols: vec![1, 2],
            }),
        };
        let bytes = encode_message(&cov).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 16 + 12 + 16);
        assert_eq!(decode_message(&bytes).unwrap(), cov);
    }

    #[test]
    fn truncated_frames() {
        let bytes = encode_message(&data_msg()).unwrap();
        assert!(matches!(decode_message(&bytes[..bytes.len() - 1]), Err(WireError::MalformedFrame(_))));
        assert!(matches!(decode_message(&bytes[..10]), Err(WireError::MalformedFrame(_))));
    }

    #[test]
    fn unknown_kind_and_magic() {
        let mut bytes = encode_message(&data_msg()).unwrap();
        bytes[4] = 0xFF;
        assert_eq!(decode_message(&bytes), Err(WireError::UnknownKind(0xFF)));
        bytes[0] = b'X';
        assert_eq!(decode_message(&bytes), Err(WireError::MalformedFrame("bad magic")));
    }

    #[test]
    fn inconsistent_lengths() {
        let mut bytes = encode_message(&data_msg()).unwrap();
        bytes.push(0);
        assert!(matches!(decode_message(&bytes), Err(WireError::LengthMismatch { .. })));

        // Declared rows disagree with the payload size.
        let mut bytes = encode_message(&data_msg()).unwrap();
        bytes[25..29].copy_from_slice(&3u32.to_le_bytes());
        assert!(matches!(decode_message(&bytes), Err(WireError::LengthMismatch { .. })));

        // Done frames carry no payload.
        let mut bytes = encode_message(&ProtocolMessage { sender: 0, receiver: 1, payload: Payload::Done }).unwrap();
        bytes[13..21].copy_from_slice(&1u64.to_le_bytes());
        bytes.push(9);
        assert!(matches!(decode_message(&bytes), Err(WireError::LengthMismatch { .. })));
    }

    #[test]
    fn rejects_non_finite_payload() {
        let mut bytes = encode_message(&data_msg()).unwrap();
        bytes[37..45].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(decode_message(&bytes), Err(WireError::InvalidPayload(_))));
    }
}
