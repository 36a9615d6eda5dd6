//! Command-line plumbing for `pnp-core`: configuration files, subcommands and
//! result export.

pub mod commands;
pub mod config;
