//! Experiment orchestration.

pub mod oracle;
pub mod plan;
pub mod run;

pub use oracle::*;
pub use plan::*;
pub use run::*;
