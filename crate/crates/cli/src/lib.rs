//! Command line front end for the `gdilm` library: configuration, CSV
//! ingestion and validation, subcommands and run manifests.

pub mod commands;
pub mod config;
pub mod draws;
pub mod io;
pub mod manifest;
pub mod recovery;

pub use commands::{run, Cli};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const VALIDATION: i32 = 2;
    pub const NUMERICAL: i32 = 3;
    pub const IO: i32 = 4;
}

/// Maps a failure to its exit code. I/O anywhere in the cause chain wins,
/// then a non-finite starting posterior; everything else is a validation
/// failure of the inputs or configuration.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let chain = || err.chain();
    if chain().any(|e| {
        e.is::<std::io::Error>()
            || e.downcast_ref::<csv::Error>()
                .is_some_and(csv::Error::is_io_error)
    }) {
        return exit::IO;
    }
    let numerical = chain().any(|e| {
        matches!(
            e.downcast_ref::<gdilm::mcmc::McmcError>(),
            Some(gdilm::mcmc::McmcError::NonFiniteInit { .. })
        )
    });
    if numerical {
        exit::NUMERICAL
    } else {
        exit::VALIDATION
    }
}
