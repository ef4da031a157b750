//! Command implementations behind the `polyloc` binary.

pub mod commands;
pub mod config;
pub mod metrics;
pub mod registry;

use polyloc::Error;

/// Exit status for validation failures: bad configuration, inputs or dataset layout.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit status for runtime and numeric failures.
pub const EXIT_RUNTIME: i32 = 3;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::MissingSensor { .. }
        | Error::Coverage(_)
        | Error::OutOfRange { .. }
        | Error::Format { .. } => EXIT_VALIDATION,
        Error::Dimension(_) | Error::Numeric(_) | Error::EmptyCloud(_) | Error::EmptyInput(_) | Error::Io { .. } => {
            EXIT_RUNTIME
        }
    }
}
