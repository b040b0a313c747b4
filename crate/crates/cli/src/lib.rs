//! Scenario-driven verification runs over `isotm-core`: JSON scenarios in,
//! JSON reports and CSV grids out.

pub mod checks;
pub mod dump;
pub mod error;
pub mod report;
pub mod sampler;
pub mod scenario;

pub use checks::verify;
pub use dump::{dump_field, DumpWhat};
pub use error::{CliError, Result};
pub use report::{CheckReport, VerificationReport};
pub use scenario::{CheckName, Scenario};
