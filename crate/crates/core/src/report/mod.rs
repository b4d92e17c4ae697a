//! Run persistence and figures.

pub mod store;
pub mod summary;
pub mod svg;

pub use store::*;
pub use summary::*;
pub use svg::*;
