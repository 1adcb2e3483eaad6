//! Command line front end for `elastomono`: scenario files, artifact
//! persistence, the forward → NtD → reconstruction pipeline, parameter
//! sweeps and the verification suite.

pub mod error;
pub mod matrix_file;
pub mod oracle;
pub mod pipeline;
pub mod result_file;
pub mod scenario;
pub mod sweep;
pub mod verify;

pub use error::{CliError, CliResult};
