//! File formats and workflows behind the `shockvol` command.

pub mod bundle;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
