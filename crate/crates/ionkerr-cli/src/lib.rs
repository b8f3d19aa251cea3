//! Library side of the `ionkerr` command-line tool: config parsing, scenario
//! execution, and deterministic CSV rendering.
//!
//! Everything here is exercised both by the binary and by the test/fuzz
//! harnesses; the binary in `main.rs` is a thin argument-parsing shell.

pub mod config;
pub mod output;
pub mod scenario;
