//! Probability facts behind the localization argument, the offline
//! throughput oracle and competitive reporting.

mod competitive;
mod multinomial;
mod offline;

pub use competitive::{competitive_report, fit_memory, ratio, Checkpoint, CompetitiveReport, MemoryFit};
pub use multinomial::*;
pub use offline::{offline_optimal, offline_packets, FlowGraph, OfflineOracle, OfflineOracleResult};
