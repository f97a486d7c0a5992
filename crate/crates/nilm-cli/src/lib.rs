//! Library half of the `nilm` binary: configuration, dataset assembly,
//! command implementations, the verification suite, and artifact writers.
//! Kept as a library so integration tests can drive commands in-process.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod manifest;
pub mod svg;
pub mod verify;
