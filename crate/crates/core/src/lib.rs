//! Compiler and simulated distributed runtime for sparse tensor algebra.
//!
//! The pipeline: parse a statement ([`frontend`]), load tensors ([`io`]),
//! build a partitioning plan ([`planner`]) from the level functions in
//! [`level`], and execute it on a simulated worker grid ([`runtime`]).
//! [`oracle`] evaluates statements densely for verification.

pub mod error;
pub mod frontend;
pub mod io;
pub mod level;
pub mod oracle;
pub mod partition;
pub mod planner;
pub mod runtime;
pub mod space;
pub mod tensor;

pub use error::{Error, Result};
pub use partition::Partition;
pub use space::{CoordRange, IndexSpace, Region, ValueKind};
pub use tensor::{Level, LevelStorage, SparseTensor};
