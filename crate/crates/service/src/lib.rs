//! Batch CLI and HTTP review service.

pub mod api;
pub mod cli;
pub mod io;
