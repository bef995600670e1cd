//! File formats, model artifacts, the simulation benchmark and the `mistr`
//! command-line interface on top of `mistr-core`.

pub mod artifact;
pub mod benchmark;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod report;

pub use error::CliError;

/// Environment variable with the default worker cap.
pub const THREADS_ENV: &str = "MISTR_THREADS";

/// Caps the global worker pool. Results do not depend on the cap.
pub fn init_threads(threads: Option<usize>) -> Result<(), CliError> {
    let n = match threads {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(v.trim().parse().map_err(|_| {
                CliError::Validation(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(CliError::Validation("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(format!("cannot configure {n} threads: {e}")))?;
    }
    Ok(())
}
