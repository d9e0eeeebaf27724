//! Library half of the `genban` binary, so the subcommands can be tested
//! without spawning a process.

pub mod commands;
pub mod config;
pub mod verify;
