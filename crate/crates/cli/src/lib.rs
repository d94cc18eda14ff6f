//! Command-line pipeline for dynamic landslide susceptibility mapping.

pub mod config;
pub mod pipeline;

pub use config::RunConfig;

use lsm_core::Error;

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Io { .. } => 2,
        Error::Data(_) | Error::Parse { .. } | Error::Csv(_) | Error::Json(_) | Error::InvalidInput(_) => 3,
        Error::Divergence(_) => 4,
    }
}
