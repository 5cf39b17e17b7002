//! Domain types shared by every module.

mod ids;
mod memory;
mod packet;
mod params;
pub mod wire;

pub use ids::*;
pub use memory::{audit_memory, MemoryLedger, MemoryViolation};
pub use packet::*;
pub use params::*;
