//! The `intentgrid` command: precompute tables, replay scenarios, inspect
//! traces and serve live sessions.

pub mod args;
pub mod commands;
pub mod service;
