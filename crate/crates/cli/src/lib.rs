//! Library side of the `psca` command: configuration, code files, model
//! artifacts and the subcommands themselves.

pub mod artifacts;
pub mod codefile;
pub mod commands;
pub mod config;

use psca_core::PscaError;

/// Process exit status for an error: 2 configuration, 3 data or format,
/// 4 numerical failure.
pub fn exit_code(err: &PscaError) -> i32 {
    match err {
        PscaError::Config(_) => 2,
        PscaError::Numerical(_) | PscaError::DegeneratePrototypes(_) => 4,
        PscaError::Format { .. }
        | PscaError::Data(_)
        | PscaError::Label(_)
        | PscaError::Shape(_)
        | PscaError::Precondition(_)
        | PscaError::UndefinedQuery
        | PscaError::Io { .. } => 3,
    }
}
