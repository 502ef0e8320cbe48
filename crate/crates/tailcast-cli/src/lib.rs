//! Library surface of the CLI so the commands are drivable from tests.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
