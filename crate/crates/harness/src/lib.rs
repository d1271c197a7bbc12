//! Test and measurement harness for hedb.
//!
//! [`oracle`] executes statements over plaintext tables, [`diff`] compares
//! it against the encrypted pipeline on random scenarios, and [`bench`]
//! measures operation counts and encrypted arithmetic timings.

pub mod bench;
pub mod diff;
pub mod oracle;
