//! File formats, experiment configuration and pipeline orchestration around
//! the `pips-core` reconstruction library.

pub mod config;
pub mod io;
pub mod pipeline;
