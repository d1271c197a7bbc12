//! Blind SQL over bit-encrypted tables.
//!
//! [`he`] implements the integer homomorphic scheme, [`data`] the bit-sliced
//! table model and its file format, [`circuits`] the query circuits the
//! server evaluates, [`sql`] the statement front end and the client-side
//! query compiler, and [`wire`] the framed client/server protocol.

pub mod bytes;
pub mod circuits;
pub mod data;
pub mod he;
pub mod query;
pub mod sql;
pub mod wire;
