//! Command-line front end for the `fracvar` toolkit.

pub mod commands;
pub mod config;
pub mod error;
