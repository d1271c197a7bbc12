//! Blind-execution server.
//!
//! [`ServerState`] holds encrypted tables and, optionally, public
//! bootstrapping material. It has no field that could hold a secret key and
//! this crate never calls a routine that needs one, so every branch the server
//! takes depends only on public shapes and sizes.

pub mod net;
pub mod store;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use hedb_core::circuits::{CircuitError, Evaluator, OpCounts};
use hedb_core::data::{EncryptedRecord, EncryptedTable, TableSchema};
use hedb_core::he::{BootstrapKey, Ciphertext, PublicKey};
use hedb_core::query::{decode_query, execute, CompiledQuery, QueryOutput};
use hedb_core::wire::{self, ErrorCode, Frame, MsgType, DEFAULT_MAX_PAYLOAD};

pub use store::LoadError;

/// Public material for refreshing ciphertexts during evaluation.
#[derive(Debug, Clone)]
pub struct BootstrapMaterial {
    pub pk: Arc<PublicKey>,
    pub bk: Arc<BootstrapKey>,
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub data_dir: PathBuf,
    pub max_payload: usize,
    /// Enables recrypt mode when present.
    pub bootstrap: Option<BootstrapMaterial>,
}

impl ServerConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        ServerConfig {
            data_dir: data_dir.into(),
            max_payload: DEFAULT_MAX_PAYLOAD,
            bootstrap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{code:?}: {message}")]
pub struct ServerError {
    pub code: ErrorCode,
    pub message: String,
}

impl ServerError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ServerError {
            code,
            message: message.into(),
        }
    }

    fn unknown_table(name: &str) -> Self {
        Self::new(ErrorCode::UnknownTable, format!("no table named {name}"))
    }

    fn to_frame(&self) -> Frame {
        Frame::new(MsgType::Error, wire::encode_error(self.code, &self.message))
    }
}

impl From<CircuitError> for ServerError {
    fn from(e: CircuitError) -> Self {
        let code = match &e {
            CircuitError::NoiseBudget { .. } => ErrorCode::NoiseBudget,
            CircuitError::He(_) => ErrorCode::Internal,
            _ => ErrorCode::ShapeMismatch,
        };
        ServerError::new(code, e.to_string())
    }
}

/// Result of one query: the RESULT ciphertexts (empty for mutations) and
/// the gate counts of its evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryReply {
    pub mutation: bool,
    pub result: Vec<Ciphertext>,
    pub counts: OpCounts,
}

type TableSlot = Arc<Mutex<EncryptedTable>>;

pub struct ServerState {
    data_dir: PathBuf,
    max_payload: usize,
    bootstrap: Option<BootstrapMaterial>,
    tables: RwLock<BTreeMap<String, TableSlot>>,
}

impl ServerState {
    /// Opens `config.data_dir`, creating it if needed, and loads its tables.
    pub fn open(config: ServerConfig) -> Result<Self, LoadError> {
        std::fs::create_dir_all(&config.data_dir).map_err(|source| LoadError::Io {
            path: config.data_dir.clone(),
            source,
        })?;
        let tables = store::load_tables(&config.data_dir)?
            .into_iter()
            .map(|t| (t.schema().table_name().to_string(), Arc::new(Mutex::new(t))))
            .collect();
        Ok(ServerState {
            data_dir: config.data_dir,
            max_payload: config.max_payload,
            bootstrap: config.bootstrap,
            tables: RwLock::new(tables),
        })
    }

    pub fn max_payload(&self) -> usize {
        self.max_payload
    }

    pub fn recrypt_enabled(&self) -> bool {
        self.bootstrap.is_some()
    }

    pub fn table_names(&self) -> Vec<String> {
        self.tables.read().expect("table map lock").keys().cloned().collect()
    }

    fn slot(&self, name: &str) -> Result<TableSlot, ServerError> {
        self.tables
            .read()
            .expect("table map lock")
            .get(name)
            .cloned()
            .ok_or_else(|| ServerError::unknown_table(name))
    }

    /// A copy of the current contents of `name`.
    pub fn snapshot(&self, name: &str) -> Option<EncryptedTable> {
        let slot = self.slot(name).ok()?;
        let t = slot.lock().expect("table lock").clone();
        Some(t)
    }

    pub fn create_table(&self, schema: TableSchema) -> Result<(), ServerError> {
        let mut tables = self.tables.write().expect("table map lock");
        let name = schema.table_name().to_string();
        if tables.contains_key(&name) {
            return Err(ServerError::new(ErrorCode::DuplicateTable, format!("table {name} exists")));
        }
        let t = EncryptedTable::new(schema);
        self.persist(&t)?;
        tables.insert(name, Arc::new(Mutex::new(t)));
        Ok(())
    }

    /// Appends a row; it is on disk before this returns. Returns the new
    /// row count.
    pub fn insert(&self, table: &str, bits: Vec<Ciphertext>) -> Result<usize, ServerError> {
        let slot = self.slot(table)?;
        let mut t = slot.lock().expect("table lock");
        let row = EncryptedRecord::from_bits(bits, t.schema())
            .map_err(|e| ServerError::new(ErrorCode::SchemaMismatch, e.to_string()))?;
        let mut next = t.clone();
        next.push(row)
            .map_err(|e| ServerError::new(ErrorCode::SchemaMismatch, e.to_string()))?;
        self.persist(&next)?;
        *t = next;
        Ok(t.len())
    }

    pub fn describe(&self, table: &str) -> Result<(TableSchema, usize), ServerError> {
        let slot = self.slot(table)?;
        let t = slot.lock().expect("table lock");
        Ok((t.schema().clone(), t.len()))
    }

    fn evaluator(&self, q: &CompiledQuery) -> Result<Evaluator, ServerError> {
        let Some(b) = &self.bootstrap else {
            return Ok(q.context.evaluator());
        };
        if q.context.reduction.as_ref().is_some_and(|x0| x0 != b.pk.x0()) {
            return Err(ServerError::new(
                ErrorCode::BootstrapUnavailable,
                "query was compiled under a key other than the loaded bootstrap key",
            ));
        }
        Evaluator::new()
            .with_bootstrap(b.pk.clone(), b.bk.clone())
            .map_err(|e| ServerError::new(ErrorCode::BootstrapUnavailable, e.to_string()))
    }

    /// Runs a query. Tables are locked for the whole evaluation, so
    /// statements against one table run one at a time. A mutation replaces
    /// the table only after the new contents are on disk.
    pub fn query(&self, q: &CompiledQuery) -> Result<QueryReply, ServerError> {
        let slot = self.slot(&q.shape.table)?;
        let ev = self.evaluator(q)?;
        let mut t = slot.lock().expect("table lock");
        let out = execute(&t, q, &ev)?;
        let counts = ev.counts();
        let result = out.result_bits();
        let mutation = match out {
            QueryOutput::Table(next) => {
                self.persist(&next)?;
                *t = next;
                true
            }
            _ => false,
        };
        Ok(QueryReply {
            mutation,
            result,
            counts,
        })
    }

    fn persist(&self, t: &EncryptedTable) -> Result<(), ServerError> {
        store::save_table(&self.data_dir, t).map_err(|e| {
            ServerError::new(
                ErrorCode::Internal,
                format!("cannot persist {}: {e}", t.schema().table_name()),
            )
        })
    }

    /// Replies to one request frame, in order.
    pub fn handle(&self, frame: &Frame) -> Vec<Frame> {
        match self.dispatch(frame) {
            Ok(frames) => frames,
            Err(e) => vec![e.to_frame()],
        }
    }

    fn dispatch(&self, frame: &Frame) -> Result<Vec<Frame>, ServerError> {
        let malformed = |e: &dyn std::fmt::Display| ServerError::new(ErrorCode::MalformedFrame, e.to_string());
        let ack = || Frame::new(MsgType::Ack, Vec::new());
        match frame.msg_type {
            MsgType::Ping => Ok(vec![ack()]),
            MsgType::CreateTable => {
                let schema = wire::decode_schema(&frame.payload)
                    .map_err(|e| ServerError::new(ErrorCode::InvalidSchema, e.to_string()))?;
                self.create_table(schema)?;
                Ok(vec![ack()])
            }
            MsgType::InsertRow => {
                let (table, bits) = wire::decode_insert(&frame.payload).map_err(|e| malformed(&e))?;
                self.insert(&table, bits)?;
                Ok(vec![ack()])
            }
            MsgType::Describe => {
                let table = wire::decode_describe(&frame.payload).map_err(|e| malformed(&e))?;
                let (schema, rows) = self.describe(&table)?;
                Ok(vec![Frame::new(MsgType::TableInfo, wire::encode_table_info(&schema, rows))])
            }
            MsgType::Query => {
                let q = decode_query(&frame.payload).map_err(|e| malformed(&e))?;
                let reply = self.query(&q)?;
                let first = if reply.mutation {
                    ack()
                } else {
                    Frame::new(MsgType::Result, wire::encode_result(&reply.result))
                };
                Ok(vec![first, Frame::new(MsgType::Counters, reply.counts.to_bytes().to_vec())])
            }
            other => Err(ServerError::new(
                ErrorCode::MalformedFrame,
                format!("{other:?} is not a request"),
            )),
        }
    }
}
