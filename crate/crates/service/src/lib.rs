//! Command-line runner and HTTP labeling service for `crm-active`.
//!
//! Sessions created over HTTP are journaled to NDJSON files and rebuilt
//! from them on restart.

pub mod cli;
pub mod http;
pub mod journal;
pub mod store;
