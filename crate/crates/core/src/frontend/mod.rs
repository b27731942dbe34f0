//! Parsers and validators for the input languages.

pub mod format;
pub mod machine;
pub mod schedule;
pub mod tdn;
pub mod tin;

pub use format::{FormatSpec, LevelKind};
pub use machine::MachineGrid;
pub use schedule::{parse_schedule, validate_schedule, Derivation, Directive, DistributedVar, Factor, LoopNest, Schedule, VarInfo};
pub use tdn::{parse_tdn, Placement, TdnStatement};
pub use tin::{parse_tin, Access, TinStatement};
