//! Command-line front end: configuration resolution, on-disk formats,
//! and the command implementations behind the `hwm` binary. Split from
//! `main.rs` so integration tests can exercise the pieces directly.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
