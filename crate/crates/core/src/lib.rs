//! Algebraic overlapping Schwarz preconditioners with spectral coarse spaces built from
//! locally computed SPSD splittings, plus the Krylov solvers that drive them.

pub mod error;
pub mod gen;
pub mod partition;
pub mod sparse;
pub mod splitting;
pub mod coarse;
pub mod driver;
pub mod krylov;
pub mod schwarz;
pub mod verify;

pub use error::{Error, Result};
