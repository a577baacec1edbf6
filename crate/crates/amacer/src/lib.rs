//! File formats, pipeline stages and the command-line front end.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod pipeline;
pub mod store_format;
pub mod synth;

pub use error::{Error, Result};
