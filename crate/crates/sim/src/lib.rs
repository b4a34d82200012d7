//! Scenario-driven simulation harness over the ledger, contract, registry
//! and swap machinery in chainsim-core. A scenario file declares chains,
//! an optional validator registry, and a timed event list; the runner
//! executes it deterministically and emits a metrics report plus an
//! optional replayable dump of every block produced.

pub mod dump;
pub mod metrics;
pub mod runner;
pub mod scenario;
