//! Trusted-side client: holds the secret key, encrypts rows and query
//! literals, talks to the server and decrypts what comes back.

pub mod cli;
pub mod render;
pub mod shell;

use std::io::{Read, Write};
use std::net::TcpStream;

use hedb_core::circuits::OpCounts;
use hedb_core::data::{ColumnKind, DataError, EncryptedRecord, TableSchema, Value};
use hedb_core::he::{Ciphertext, HeError, PublicKey, SecretKey};
use hedb_core::query::{encode_query, CompiledQuery, EvalContext, QueryKind};
use hedb_core::sql::{self, CheckedQuery, QueryResult, SqlError};
use hedb_core::wire::{self, read_frame, ErrorCode, Frame, MsgType, WireError, DEFAULT_MAX_PAYLOAD};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

pub use render::render_answer;

pub const DEFAULT_SERVER: &str = "127.0.0.1:7878";

#[derive(Debug, Error)]
pub enum ClientError {
    #[error(transparent)]
    Sql(#[from] SqlError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    He(#[from] HeError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("column {column} expects an unsigned integer, got {raw:?}")]
    BadValue { column: String, raw: String },
    #[error("table {table} has {expected} columns, got {got} values")]
    ValueCount { table: String, expected: usize, got: usize },
    #[error("server closed the connection")]
    Disconnected,
}

impl ClientError {
    /// Whether the failure came from exhausting the key's noise budget.
    pub fn is_noise_exhaustion(&self) -> bool {
        match self {
            ClientError::He(HeError::NoiseOverflow { .. }) => true,
            ClientError::Data(DataError::He(HeError::NoiseOverflow { .. })) => true,
            ClientError::Sql(SqlError::Data(DataError::He(HeError::NoiseOverflow { .. }))) => true,
            ClientError::Wire(WireError::Remote { code, .. }) => *code == ErrorCode::NoiseBudget,
            _ => false,
        }
    }
}

/// Framed request/reply channel over any byte stream.
pub struct Connection<S> {
    stream: S,
}

impl Connection<TcpStream> {
    pub fn connect(addr: &str) -> std::io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Connection { stream })
    }
}

impl<S: Read + Write> Connection<S> {
    pub fn new(stream: S) -> Self {
        Connection { stream }
    }

    pub fn get_ref(&self) -> &S {
        &self.stream
    }

    pub fn into_inner(self) -> S {
        self.stream
    }

    fn send(&mut self, t: MsgType, payload: &[u8]) -> Result<(), ClientError> {
        wire::write_frame(&mut self.stream, t, payload).map_err(WireError::from)?;
        Ok(())
    }

    fn receive(&mut self) -> Result<Frame, ClientError> {
        let frame = read_frame(&mut self.stream, DEFAULT_MAX_PAYLOAD)?.ok_or(ClientError::Disconnected)?;
        if frame.msg_type == MsgType::Error {
            return Err(frame.into_error().into());
        }
        Ok(frame)
    }

    fn expect(&mut self, t: MsgType) -> Result<Frame, ClientError> {
        let frame = self.receive()?;
        if frame.msg_type != t {
            return Err(WireError::Unexpected(frame.msg_type).into());
        }
        Ok(frame)
    }

    pub fn ping(&mut self) -> Result<(), ClientError> {
        self.send(MsgType::Ping, &[])?;
        self.expect(MsgType::Ack).map(drop)
    }

    pub fn create_table(&mut self, schema: &TableSchema) -> Result<(), ClientError> {
        self.send(MsgType::CreateTable, &wire::encode_schema(schema))?;
        self.expect(MsgType::Ack).map(drop)
    }

    pub fn insert(&mut self, table: &str, bits: &[Ciphertext]) -> Result<(), ClientError> {
        self.send(MsgType::InsertRow, &wire::encode_insert(table, bits))?;
        self.expect(MsgType::Ack).map(drop)
    }

    /// Schema and current row count of `table`.
    pub fn describe(&mut self, table: &str) -> Result<(TableSchema, usize), ClientError> {
        self.send(MsgType::Describe, &wire::encode_describe(table))?;
        let f = self.expect(MsgType::TableInfo)?;
        Ok(wire::decode_table_info(&f.payload)?)
    }

    /// Result ciphertexts (none for mutations) and the evaluation counters.
    pub fn query(&mut self, q: &CompiledQuery) -> Result<(Vec<Ciphertext>, OpCounts), ClientError> {
        self.send(MsgType::Query, &encode_query(q))?;
        let first = self.receive()?;
        let bits = match (first.msg_type, q.shape.kind.is_mutation()) {
            (MsgType::Result, false) => wire::decode_result(&first.payload)?,
            (MsgType::Ack, true) => Vec::new(),
            (other, _) => return Err(WireError::Unexpected(other).into()),
        };
        let counters = self.expect(MsgType::Counters)?;
        let raw: &[u8; 24] = counters
            .payload
            .as_slice()
            .try_into()
            .map_err(|_| WireError::Payload("COUNTERS payload is not 24 bytes".into()))?;
        Ok((bits, OpCounts::from_bytes(raw)))
    }
}

/// A decrypted answer with the statement that produced it.
#[derive(Debug, Clone)]
pub struct Answer {
    pub query: CheckedQuery,
    pub result: QueryResult,
    pub counts: OpCounts,
}

/// Key material plus a connection.
pub struct Session<S> {
    conn: Connection<S>,
    sk: SecretKey,
    pk: PublicKey,
    rng: ChaCha20Rng,
    last_counts: Option<OpCounts>,
}

impl<S: Read + Write> Session<S> {
    pub fn new(conn: Connection<S>, sk: SecretKey, pk: PublicKey, rng: ChaCha20Rng) -> Self {
        Session {
            conn,
            sk,
            pk,
            rng,
            last_counts: None,
        }
    }

    pub fn connection(&mut self) -> &mut Connection<S> {
        &mut self.conn
    }

    pub fn last_counts(&self) -> Option<OpCounts> {
        self.last_counts
    }

    fn context(&self) -> EvalContext {
        EvalContext {
            reduction: Some(self.pk.x0().clone()),
            noise_limit: Some(self.pk.params().noise_limit()),
        }
    }

    pub fn create_table(&mut self, schema: &TableSchema) -> Result<(), ClientError> {
        self.conn.create_table(schema)
    }

    /// Encrypts and appends a row given as command-line text. Values are
    /// checked against the schema before the row is sent.
    pub fn insert_text(&mut self, table: &str, raw: &[String]) -> Result<(), ClientError> {
        let (schema, _) = self.conn.describe(table)?;
        let values = parse_values(&schema, raw)?;
        self.insert_with_schema(&schema, &values)
    }

    pub fn insert_values(&mut self, table: &str, values: &[Value]) -> Result<(), ClientError> {
        let (schema, _) = self.conn.describe(table)?;
        self.insert_with_schema(&schema, values)
    }

    fn insert_with_schema(&mut self, schema: &TableSchema, values: &[Value]) -> Result<(), ClientError> {
        let rec = EncryptedRecord::encrypt(values, schema, &self.pk, &mut self.rng)?;
        let bits: Vec<Ciphertext> = rec.bits().cloned().collect();
        self.conn.insert(schema.table_name(), &bits)
    }

    /// Runs one statement. Parse errors are reported before any traffic.
    pub fn query(&mut self, text: &str, n: u64) -> Result<Answer, ClientError> {
        let ast = sql::parse(text)?;
        if n == 0 && ast.kind == QueryKind::Select {
            return Err(SqlError::InvalidMatchNumber.into());
        }
        let (schema, rows) = self.conn.describe(&ast.table)?;
        let checked = sql::validate(&ast, &schema)?;
        let ctx = self.context();
        let compiled = sql::compile(&checked, n, &self.pk, ctx, rows, &mut self.rng)?;
        let (bits, counts) = self.conn.query(&compiled)?;
        self.last_counts = Some(counts);
        let result = sql::decrypt_output(&checked, &bits, &self.sk)?;
        Ok(Answer {
            query: checked,
            result,
            counts,
        })
    }
}

/// Reads command-line values in schema order.
pub fn parse_values(schema: &TableSchema, raw: &[String]) -> Result<Vec<Value>, ClientError> {
    if raw.len() != schema.columns().len() {
        return Err(ClientError::ValueCount {
            table: schema.table_name().to_string(),
            expected: schema.columns().len(),
            got: raw.len(),
        });
    }
    schema
        .columns()
        .iter()
        .zip(raw)
        .map(|(spec, text)| match spec.kind() {
            ColumnKind::Uint => text.parse().map(Value::Uint).map_err(|_| ClientError::BadValue {
                column: spec.name().to_string(),
                raw: text.clone(),
            }),
            ColumnKind::Str => Ok(Value::Str(text.clone())),
        })
        .collect()
}

/// A human-readable error; SQL errors point at the offending byte.
pub fn describe_error(text: Option<&str>, e: &ClientError) -> String {
    let offset = match e {
        ClientError::Sql(SqlError::Syntax { offset, .. } | SqlError::Unsupported { offset, .. }) => Some(*offset),
        _ => None,
    };
    let mut msg = format!("error: {e}");
    if let (Some(text), Some(at)) = (text, offset) {
        let col = text[..at.min(text.len())].chars().count();
        msg.push_str(&format!("\n  {text}\n  {}^", " ".repeat(col)));
    }
    if e.is_noise_exhaustion() {
        msg.push_str(
            "\nhint: the key's noise budget is too small for this statement; \
             generate a key with a larger --lambda or a larger \
             --max-rows/--max-width/--mutations budget, or run the server \
             with --enable-recrypt",
        );
    }
    msg
}
