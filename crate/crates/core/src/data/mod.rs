//! Bit-sliced encrypted tables.
//!
//! Every value is stored as a fixed-width word of individually encrypted
//! bits, least-significant bit first. Unsigned columns use the binary
//! expansion of the value; string columns store their bytes in order, each
//! byte LSB first, right-padded with `0x00`. The schema, the row count and the
//! row order are public.

mod tablefile;

use rand::RngCore;
use thiserror::Error;

use crate::he::{BitEncryptor, Ciphertext, HeError, SecretKey};

pub use tablefile::{parse_table, read_schema, serialize_table, write_schema, TABLE_MAGIC};

/// Widest supported unsigned column.
pub const MAX_UINT_BITS: u16 = 64;
/// Widest supported column of any kind.
pub const MAX_COLUMN_BITS: u16 = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DataError {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("value does not fit column {column} ({bits} bits)")]
    ValueOverflow { column: String, bits: u16 },
    #[error("string for column {column} contains a NUL character")]
    InvalidCharacter { column: String },
    #[error("column {column} expects a {expected} value")]
    TypeMismatch { column: String, expected: ColumnKind },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated payload at byte {0}")]
    TruncatedPayload(usize),
    #[error(transparent)]
    He(#[from] HeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ColumnKind {
    Uint,
    Str,
}

impl ColumnKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ColumnKind::Uint => "uint",
            ColumnKind::Str => "string",
        }
    }
}

impl std::fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ColumnSpec {
    name: String,
    kind: ColumnKind,
    bit_width: u16,
}

impl ColumnSpec {
    pub fn new(name: &str, kind: ColumnKind, bit_width: u16) -> Result<Self, DataError> {
        if !is_identifier(name) {
            return Err(DataError::InvalidSchema(format!("bad column name {name:?}")));
        }
        if bit_width == 0 || bit_width > MAX_COLUMN_BITS {
            return Err(DataError::InvalidSchema(format!(
                "column {name}: width {bit_width} out of range"
            )));
        }
        match kind {
            ColumnKind::Uint if bit_width > MAX_UINT_BITS => Err(DataError::InvalidSchema(format!(
                "column {name}: uint columns hold at most {MAX_UINT_BITS} bits"
            ))),
            ColumnKind::Str if bit_width % 8 != 0 => Err(DataError::InvalidSchema(format!(
                "column {name}: string width must be a multiple of 8"
            ))),
            _ => Ok(ColumnSpec {
                name: name.to_string(),
                kind,
                bit_width,
            }),
        }
    }

    pub fn uint(name: &str, bits: u16) -> Result<Self, DataError> {
        Self::new(name, ColumnKind::Uint, bits)
    }

    /// A string column holding up to `chars` bytes.
    pub fn string(name: &str, chars: u16) -> Result<Self, DataError> {
        Self::new(name, ColumnKind::Str, chars.saturating_mul(8))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> ColumnKind {
        self.kind
    }

    pub fn bit_width(&self) -> usize {
        self.bit_width as usize
    }

    /// Character capacity of a string column.
    pub fn chars(&self) -> usize {
        self.bit_width as usize / 8
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TableSchema {
    table_name: String,
    columns: Vec<ColumnSpec>,
}

impl TableSchema {
    pub fn new(table_name: &str, columns: Vec<ColumnSpec>) -> Result<Self, DataError> {
        if !is_identifier(table_name) {
            return Err(DataError::InvalidSchema(format!("bad table name {table_name:?}")));
        }
        if columns.is_empty() {
            return Err(DataError::InvalidSchema("a table needs at least one column".into()));
        }
        for (i, c) in columns.iter().enumerate() {
            if columns[..i].iter().any(|d| d.name == c.name) {
                return Err(DataError::InvalidSchema(format!("duplicate column {}", c.name)));
            }
        }
        Ok(TableSchema {
            table_name: table_name.to_string(),
            columns,
        })
    }

    /// Parses the schema file format: one `name:kind:bits` per line, where
    /// kind is `uint` or `string`. Blank lines and `#` comments are ignored.
    pub fn parse_lines(table_name: &str, text: &str) -> Result<Self, DataError> {
        let mut columns = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || DataError::InvalidSchema(format!("line {}: expected name:kind:bits", no + 1));
            let mut parts = line.split(':');
            let (Some(name), Some(kind), Some(bits), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(bad());
            };
            let kind = match kind.trim() {
                "uint" => ColumnKind::Uint,
                "string" | "str" => ColumnKind::Str,
                _ => return Err(bad()),
            };
            let bits: u16 = bits.trim().parse().map_err(|_| bad())?;
            columns.push(ColumnSpec::new(name.trim(), kind, bits)?);
        }
        TableSchema::new(table_name, columns)
    }

    pub fn to_lines(&self) -> String {
        self.columns
            .iter()
            .map(|c| format!("{}:{}:{}\n", c.name, c.kind, c.bit_width))
            .collect()
    }

    pub fn table_name(&self) -> &str {
        &self.table_name
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<(usize, &ColumnSpec)> {
        self.columns.iter().enumerate().find(|(_, c)| c.name == name)
    }

    pub fn record_bits(&self) -> usize {
        self.columns.iter().map(ColumnSpec::bit_width).sum()
    }
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && s.len() <= 64
}

/// A plaintext column value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Uint(u64),
    Str(String),
}

impl Value {
    /// Plaintext bit layout of this value in `spec`'s column.
    pub fn to_bits(&self, spec: &ColumnSpec) -> Result<Vec<bool>, DataError> {
        let width = spec.bit_width();
        match (self, spec.kind) {
            (Value::Uint(v), ColumnKind::Uint) => {
                if width < 64 && *v >> width != 0 {
                    return Err(DataError::ValueOverflow {
                        column: spec.name.clone(),
                        bits: spec.bit_width,
                    });
                }
                Ok((0..width).map(|i| (v >> i) & 1 == 1).collect())
            }
            (Value::Str(s), ColumnKind::Str) => Ok(bytes_to_bits(&string_bytes(s, spec)?)),
            (_, expected) => Err(DataError::TypeMismatch {
                column: spec.name.clone(),
                expected,
            }),
        }
    }

    /// Inverse of [`Value::to_bits`]; trailing `0x00` padding is stripped.
    pub fn from_bits(bits: &[bool], spec: &ColumnSpec) -> Value {
        match spec.kind {
            ColumnKind::Uint => Value::Uint(
                bits.iter()
                    .enumerate()
                    .fold(0u64, |acc, (i, &b)| acc | (u64::from(b) << i)),
            ),
            ColumnKind::Str => {
                let mut bytes = bits_to_bytes(bits);
                while bytes.last() == Some(&0) {
                    bytes.pop();
                }
                Value::Str(String::from_utf8_lossy(&bytes).into_owned())
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Value::Uint(v) => *v == 0,
            Value::Str(s) => s.is_empty(),
        }
    }
}

impl std::fmt::Display for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Value::Uint(v) => write!(f, "{v}"),
            Value::Str(s) => f.write_str(s),
        }
    }
}

/// Bytes of a string value padded to the column width.
pub fn string_bytes(s: &str, spec: &ColumnSpec) -> Result<Vec<u8>, DataError> {
    let raw = s.as_bytes();
    if raw.contains(&0) {
        return Err(DataError::InvalidCharacter {
            column: spec.name.clone(),
        });
    }
    if raw.len() > spec.chars() {
        return Err(DataError::ValueOverflow {
            column: spec.name.clone(),
            bits: spec.bit_width,
        });
    }
    let mut bytes = raw.to_vec();
    bytes.resize(spec.chars(), 0);
    Ok(bytes)
}

pub fn bytes_to_bits(bytes: &[u8]) -> Vec<bool> {
    bytes
        .iter()
        .flat_map(|&b| (0..8).map(move |i| (b >> i) & 1 == 1))
        .collect()
}

pub fn bits_to_bytes(bits: &[bool]) -> Vec<u8> {
    bits.chunks(8)
        .map(|c| c.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | (u8::from(b) << i)))
        .collect()
}

/// Encrypted fixed-width value, least-significant bit first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedWord {
    bits: Vec<Ciphertext>,
}

impl EncryptedWord {
    pub fn new(bits: Vec<Ciphertext>) -> Self {
        EncryptedWord { bits }
    }

    pub fn encrypt_bits(bits: &[bool], enc: &dyn BitEncryptor, rng: &mut dyn RngCore) -> Self {
        EncryptedWord {
            bits: bits.iter().map(|&b| enc.encrypt_bit(b, rng)).collect(),
        }
    }

    pub fn trivial(bits: &[bool]) -> Self {
        EncryptedWord {
            bits: bits.iter().map(|&b| Ciphertext::trivial(b)).collect(),
        }
    }

    pub fn bits(&self) -> &[Ciphertext] {
        &self.bits
    }

    pub fn into_bits(self) -> Vec<Ciphertext> {
        self.bits
    }

    pub fn width(&self) -> usize {
        self.bits.len()
    }

    pub fn decrypt_bits(&self, sk: &SecretKey) -> Result<Vec<bool>, HeError> {
        self.bits.iter().map(|c| sk.decrypt(c)).collect()
    }
}

pub fn encode_word(
    value: &Value,
    spec: &ColumnSpec,
    enc: &dyn BitEncryptor,
    rng: &mut dyn RngCore,
) -> Result<EncryptedWord, DataError> {
    let bits = value.to_bits(spec)?;
    Ok(EncryptedWord::encrypt_bits(&bits, enc, rng))
}

pub fn decode_word(w: &EncryptedWord, spec: &ColumnSpec, sk: &SecretKey) -> Result<Value, DataError> {
    if w.width() != spec.bit_width() {
        return Err(DataError::SchemaMismatch(format!(
            "word of {} bits for column {} of {} bits",
            w.width(),
            spec.name,
            spec.bit_width
        )));
    }
    Ok(Value::from_bits(&w.decrypt_bits(sk)?, spec))
}

/// One encrypted row: a word per schema column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedRecord {
    words: Vec<EncryptedWord>,
}

impl EncryptedRecord {
    pub fn new(words: Vec<EncryptedWord>) -> Self {
        EncryptedRecord { words }
    }

    pub fn encrypt(
        values: &[Value],
        schema: &TableSchema,
        enc: &dyn BitEncryptor,
        rng: &mut dyn RngCore,
    ) -> Result<Self, DataError> {
        if values.len() != schema.columns.len() {
            return Err(DataError::SchemaMismatch(format!(
                "{} values for {} columns",
                values.len(),
                schema.columns.len()
            )));
        }
        let words = values
            .iter()
            .zip(&schema.columns)
            .map(|(v, spec)| encode_word(v, spec, enc, rng))
            .collect::<Result<_, _>>()?;
        Ok(EncryptedRecord { words })
    }

    pub fn decrypt(&self, schema: &TableSchema, sk: &SecretKey) -> Result<Vec<Value>, DataError> {
        self.check_schema(schema)?;
        self.words
            .iter()
            .zip(&schema.columns)
            .map(|(w, spec)| decode_word(w, spec, sk))
            .collect()
    }

    pub fn words(&self) -> &[EncryptedWord] {
        &self.words
    }

    pub fn into_words(self) -> Vec<EncryptedWord> {
        self.words
    }

    /// All bits in schema order.
    pub fn bits(&self) -> impl Iterator<Item = &Ciphertext> {
        self.words.iter().flat_map(|w| w.bits.iter())
    }

    /// Rebuilds a record from bits laid out in schema order.
    pub fn from_bits(bits: Vec<Ciphertext>, schema: &TableSchema) -> Result<Self, DataError> {
        if bits.len() != schema.record_bits() {
            return Err(DataError::SchemaMismatch(format!(
                "{} bits for a record of {}",
                bits.len(),
                schema.record_bits()
            )));
        }
        let mut it = bits.into_iter();
        let words = schema
            .columns
            .iter()
            .map(|c| EncryptedWord::new(it.by_ref().take(c.bit_width()).collect()))
            .collect();
        Ok(EncryptedRecord { words })
    }

    pub fn check_schema(&self, schema: &TableSchema) -> Result<(), DataError> {
        let ok = self.words.len() == schema.columns.len()
            && self
                .words
                .iter()
                .zip(&schema.columns)
                .all(|(w, c)| w.width() == c.bit_width());
        if ok {
            Ok(())
        } else {
            Err(DataError::SchemaMismatch(format!(
                "record does not match the layout of table {}",
                schema.table_name
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedTable {
    schema: TableSchema,
    rows: Vec<EncryptedRecord>,
}

impl EncryptedTable {
    pub fn new(schema: TableSchema) -> Self {
        EncryptedTable {
            schema,
            rows: Vec::new(),
        }
    }

    pub fn with_rows(schema: TableSchema, rows: Vec<EncryptedRecord>) -> Result<Self, DataError> {
        for r in &rows {
            r.check_schema(&schema)?;
        }
        Ok(EncryptedTable { schema, rows })
    }

    pub fn schema(&self) -> &TableSchema {
        &self.schema
    }

    pub fn rows(&self) -> &[EncryptedRecord] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: EncryptedRecord) -> Result<(), DataError> {
        row.check_schema(&self.schema)?;
        self.rows.push(row);
        Ok(())
    }

    pub fn decrypt(&self, sk: &SecretKey) -> Result<Vec<Vec<Value>>, DataError> {
        self.rows.iter().map(|r| r.decrypt(&self.schema, sk)).collect()
    }
}
