//! Deterministic asset-chain toolkit: UTXO ledgers with scheduled block
//! production, a native contract engine for on-chain asset sales, a
//! validator-run registration authority, and hash-locked cross-chain swaps.
//!
//! Everything is built for reproducible simulation. Randomness is seeded,
//! collections iterate in sorted order, signatures are cheap keyed digests,
//! and a chain replayed from its blocks lands on the same state digest as
//! the live run that produced them.

pub mod address;
pub mod amount;
pub mod block;
pub mod chain;
pub mod codec;
pub mod contract;
pub mod keys;
pub mod registry;
pub mod swap;
pub mod tx;
