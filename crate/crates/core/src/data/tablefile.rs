//! Binary table file.
//!
//! ```text
//! "HEDB-TBL v1"
//! u16 len + table name
//! u16 column count
//!   per column: u16 len + name, kind byte (0x01 uint, 0x02 string), u16 bit width
//! u32 row count
//! rows: record_bits ciphertexts each, in schema bit order
//! ```
//! All integers are big-endian. Squash vectors are not stored.

use crate::bytes::{put_short_str, ByteReader, DecodeError};
use crate::he::codec::{read_ciphertext, write_ciphertext};

use super::{ColumnKind, ColumnSpec, DataError, EncryptedRecord, EncryptedTable, TableSchema};

pub const TABLE_MAGIC: &[u8] = b"HEDB-TBL v1";

pub fn serialize_table(t: &EncryptedTable) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(TABLE_MAGIC);
    write_schema(&mut out, t.schema());
    out.extend_from_slice(&(t.len() as u32).to_be_bytes());
    for row in t.rows() {
        for ct in row.bits() {
            write_ciphertext(&mut out, ct, None);
        }
    }
    out
}

pub fn write_schema(out: &mut Vec<u8>, schema: &TableSchema) {
    put_short_str(out, schema.table_name());
    out.extend_from_slice(&(schema.columns().len() as u16).to_be_bytes());
    for c in schema.columns() {
        put_short_str(out, c.name());
        out.push(match c.kind() {
            ColumnKind::Uint => 0x01,
            ColumnKind::Str => 0x02,
        });
        out.extend_from_slice(&(c.bit_width() as u16).to_be_bytes());
    }
}

/// Reads a schema block; every failure maps to `MalformedHeader` or
/// `TruncatedPayload`.
pub fn read_schema(r: &mut ByteReader<'_>) -> Result<TableSchema, DataError> {
    let name = r.short_str().map_err(header_err)?;
    let count = r.u16().map_err(header_err)?;
    let mut columns = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let cname = r.short_str().map_err(header_err)?;
        let kind = match r.u8().map_err(header_err)? {
            0x01 => ColumnKind::Uint,
            0x02 => ColumnKind::Str,
            k => return Err(DataError::MalformedHeader(format!("unknown column kind {k:#04x}"))),
        };
        let width = r.u16().map_err(header_err)?;
        columns.push(
            ColumnSpec::new(&cname, kind, width)
                .map_err(|e| DataError::MalformedHeader(e.to_string()))?,
        );
    }
    TableSchema::new(&name, columns).map_err(|e| DataError::MalformedHeader(e.to_string()))
}

pub fn parse_table(bytes: &[u8]) -> Result<EncryptedTable, DataError> {
    if !bytes.starts_with(TABLE_MAGIC) {
        return Err(DataError::MalformedHeader("bad magic".into()));
    }
    let mut r = ByteReader::new(&bytes[TABLE_MAGIC.len()..]);
    let schema = read_schema(&mut r)?;
    let rows = r.u32().map_err(header_err)? as usize;
    let per_row = schema.record_bits();
    // Each ciphertext occupies at least 9 bytes, which bounds the allocation.
    if rows.saturating_mul(per_row).saturating_mul(9) > r.remaining() {
        return Err(DataError::TruncatedPayload(bytes.len()));
    }
    let mut table = Vec::with_capacity(rows);
    for _ in 0..rows {
        let bits = (0..per_row)
            .map(|_| read_ciphertext(&mut r, None).map_err(|e| payload_err(e, TABLE_MAGIC.len())))
            .collect::<Result<Vec<_>, _>>()?;
        table.push(EncryptedRecord::from_bits(bits, &schema)?);
    }
    if !r.is_empty() {
        return Err(DataError::SchemaMismatch(format!(
            "{} bytes after the last row",
            r.remaining()
        )));
    }
    EncryptedTable::with_rows(schema, table)
}

fn header_err(e: DecodeError) -> DataError {
    match e {
        DecodeError::Truncated { .. } => DataError::MalformedHeader("truncated header".into()),
        DecodeError::Invalid { what, .. } => DataError::MalformedHeader(what),
    }
}

fn payload_err(e: DecodeError, base: usize) -> DataError {
    match e {
        DecodeError::Truncated { offset } => DataError::TruncatedPayload(base + offset),
        DecodeError::Invalid { offset, what } => {
            DataError::SchemaMismatch(format!("{what} at byte {}", base + offset))
        }
    }
}
