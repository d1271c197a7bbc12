//! Framed client/server protocol.
//!
//! A frame is `"HEDB"`, version `0x01`, a message type byte, a big-endian
//! u32 payload length and the payload. Every request gets exactly one reply
//! frame, except QUERY, which gets RESULT (or ACK for mutations) followed by
//! COUNTERS.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::bytes::{put_short_str, ByteReader, DecodeError};
use crate::data::{read_schema, write_schema, DataError, TableSchema};
use crate::he::codec::{read_ciphertext, write_ciphertext};
use crate::he::Ciphertext;

pub const MAGIC: &[u8; 4] = b"HEDB";
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 10;
pub const DEFAULT_MAX_PAYLOAD: usize = 256 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MsgType {
    CreateTable = 0x01,
    InsertRow = 0x02,
    Query = 0x03,
    Result = 0x04,
    Counters = 0x05,
    Error = 0x06,
    Ping = 0x07,
    Ack = 0x08,
    Describe = 0x09,
    TableInfo = 0x0A,
}

impl MsgType {
    pub fn from_byte(b: u8) -> Option<Self> {
        use MsgType::*;
        Some(match b {
            0x01 => CreateTable,
            0x02 => InsertRow,
            0x03 => Query,
            0x04 => Result,
            0x05 => Counters,
            0x06 => Error,
            0x07 => Ping,
            0x08 => Ack,
            0x09 => Describe,
            0x0A => TableInfo,
            _ => return None,
        })
    }
}

/// Machine-readable ERROR codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorCode {
    MalformedFrame = 1,
    PayloadTooLarge = 2,
    UnknownTable = 3,
    DuplicateTable = 4,
    InvalidSchema = 5,
    SchemaMismatch = 6,
    ShapeMismatch = 7,
    NoiseBudget = 8,
    BootstrapUnavailable = 9,
    Internal = 10,
    UnsupportedVersion = 11,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 11] = [
        ErrorCode::MalformedFrame,
        ErrorCode::PayloadTooLarge,
        ErrorCode::UnknownTable,
        ErrorCode::DuplicateTable,
        ErrorCode::InvalidSchema,
        ErrorCode::SchemaMismatch,
        ErrorCode::ShapeMismatch,
        ErrorCode::NoiseBudget,
        ErrorCode::BootstrapUnavailable,
        ErrorCode::Internal,
        ErrorCode::UnsupportedVersion,
    ];

    pub fn from_u16(v: u16) -> Option<Self> {
        Self::ALL.into_iter().find(|c| *c as u16 == v)
    }
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad frame magic")]
    BadMagic,
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error("payload of {len} bytes exceeds the {max}-byte limit")]
    PayloadTooLarge { len: usize, max: usize },
    #[error("connection closed inside a frame")]
    Truncated,
    #[error("malformed payload: {0}")]
    Payload(String),
    #[error("server error {code:?}: {message}")]
    Remote { code: ErrorCode, message: String },
    #[error("unexpected {0:?} frame")]
    Unexpected(MsgType),
}

impl WireError {
    /// The code a server reports for this failure.
    pub fn code(&self) -> ErrorCode {
        match self {
            WireError::UnsupportedVersion(_) => ErrorCode::UnsupportedVersion,
            WireError::PayloadTooLarge { .. } => ErrorCode::PayloadTooLarge,
            WireError::Remote { code, .. } => *code,
            WireError::Io(_) => ErrorCode::Internal,
            _ => ErrorCode::MalformedFrame,
        }
    }
}

impl From<DecodeError> for WireError {
    fn from(e: DecodeError) -> Self {
        WireError::Payload(e.to_string())
    }
}

impl From<DataError> for WireError {
    fn from(e: DataError) -> Self {
        WireError::Payload(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MsgType,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(msg_type: MsgType, payload: Vec<u8>) -> Self {
        Frame { msg_type, payload }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        frame_bytes(self.msg_type, &self.payload)
    }

    /// The ERROR frame payload decoded, or `Unexpected` for other types.
    pub fn into_error(self) -> WireError {
        if self.msg_type != MsgType::Error {
            return WireError::Unexpected(self.msg_type);
        }
        match decode_error(&self.payload) {
            Ok((code, message)) => WireError::Remote { code, message },
            Err(e) => e,
        }
    }
}

/// Writes a frame as one buffer, so a small request never waits on
/// delayed acknowledgements between header and payload.
pub fn write_frame(w: &mut impl Write, msg_type: MsgType, payload: &[u8]) -> io::Result<()> {
    w.write_all(&frame_bytes(msg_type, payload))?;
    w.flush()
}

fn frame_bytes(msg_type: MsgType, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(msg_type as u8);
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(payload);
    out
}

/// Reads one frame. A clean end of stream before the first header byte is
/// `Ok(None)`. The payload length is checked against `max` before any
/// allocation.
pub fn read_frame(r: &mut impl Read, max: usize) -> Result<Option<Frame>, WireError> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(WireError::Truncated),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    if &header[..4] != MAGIC {
        return Err(WireError::BadMagic);
    }
    if header[4] != VERSION {
        return Err(WireError::UnsupportedVersion(header[4]));
    }
    let msg_type = MsgType::from_byte(header[5]).ok_or(WireError::UnknownType(header[5]))?;
    let len = u32::from_be_bytes(header[6..].try_into().expect("four bytes")) as usize;
    if len > max {
        return Err(WireError::PayloadTooLarge { len, max });
    }
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => WireError::Truncated,
        _ => WireError::Io(e),
    })?;
    Ok(Some(Frame { msg_type, payload }))
}

pub fn encode_error(code: ErrorCode, message: &str) -> Vec<u8> {
    let mut out = (code as u16).to_be_bytes().to_vec();
    out.extend_from_slice(message.as_bytes());
    out
}

pub fn decode_error(payload: &[u8]) -> Result<(ErrorCode, String), WireError> {
    let (code, msg) = payload
        .split_first_chunk::<2>()
        .ok_or_else(|| WireError::Payload("short ERROR payload".into()))?;
    let code = ErrorCode::from_u16(u16::from_be_bytes(*code))
        .ok_or_else(|| WireError::Payload("unknown error code".into()))?;
    Ok((code, String::from_utf8_lossy(msg).into_owned()))
}

fn put_ciphertexts(out: &mut Vec<u8>, cts: &[Ciphertext]) {
    out.extend_from_slice(&(cts.len() as u32).to_be_bytes());
    for ct in cts {
        write_ciphertext(out, ct, None);
    }
}

fn get_ciphertexts(r: &mut ByteReader<'_>) -> Result<Vec<Ciphertext>, WireError> {
    let n = r.u32()? as usize;
    // a ciphertext takes at least nine bytes
    if n.saturating_mul(9) > r.remaining() {
        return Err(WireError::Payload(format!("{n} ciphertexts cannot fit the payload")));
    }
    let cts = (0..n)
        .map(|_| read_ciphertext(r, None))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(cts)
}

fn finish(r: &ByteReader<'_>) -> Result<(), WireError> {
    if r.is_empty() {
        Ok(())
    } else {
        Err(WireError::Payload(format!("{} trailing bytes", r.remaining())))
    }
}

pub fn encode_schema(schema: &TableSchema) -> Vec<u8> {
    let mut out = Vec::new();
    write_schema(&mut out, schema);
    out
}

pub fn decode_schema(payload: &[u8]) -> Result<TableSchema, DataError> {
    let mut r = ByteReader::new(payload);
    let schema = read_schema(&mut r)?;
    if !r.is_empty() {
        return Err(DataError::MalformedHeader("trailing bytes after schema".into()));
    }
    Ok(schema)
}

/// Table name, then the record bits in schema order.
pub fn encode_insert(table: &str, bits: &[Ciphertext]) -> Vec<u8> {
    let mut out = Vec::new();
    put_short_str(&mut out, table);
    put_ciphertexts(&mut out, bits);
    out
}

pub fn decode_insert(payload: &[u8]) -> Result<(String, Vec<Ciphertext>), WireError> {
    let mut r = ByteReader::new(payload);
    let table = r.short_str()?;
    let bits = get_ciphertexts(&mut r)?;
    finish(&r)?;
    Ok((table, bits))
}

pub fn encode_result(bits: &[Ciphertext]) -> Vec<u8> {
    let mut out = Vec::new();
    put_ciphertexts(&mut out, bits);
    out
}

pub fn decode_result(payload: &[u8]) -> Result<Vec<Ciphertext>, WireError> {
    let mut r = ByteReader::new(payload);
    let bits = get_ciphertexts(&mut r)?;
    finish(&r)?;
    Ok(bits)
}

pub fn encode_describe(table: &str) -> Vec<u8> {
    let mut out = Vec::new();
    put_short_str(&mut out, table);
    out
}

pub fn decode_describe(payload: &[u8]) -> Result<String, WireError> {
    let mut r = ByteReader::new(payload);
    let table = r.short_str()?;
    finish(&r)?;
    Ok(table)
}

/// Schema block, then the current row count.
pub fn encode_table_info(schema: &TableSchema, rows: usize) -> Vec<u8> {
    let mut out = encode_schema(schema);
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out
}

pub fn decode_table_info(payload: &[u8]) -> Result<(TableSchema, usize), WireError> {
    let mut r = ByteReader::new(payload);
    let schema = read_schema(&mut r)?;
    let rows = r.u32()? as usize;
    finish(&r)?;
    Ok((schema, rows))
}
