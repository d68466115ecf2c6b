//! Protocol engine and deterministic simulator for a chain-backed delivery
//! marketplace.
//!
//! Orders are split per vendor into suborders, offered to nearby carriers,
//! and driven through placement, acceptance, handover, delivery and customer
//! finalization. Every step is an authenticated transaction sealed into a
//! proof-of-authority hash chain, which is the only source of truth for
//! replay and audit.

pub mod contracts;
pub mod dispatch;
pub mod ledger;
pub mod marketplace;
pub mod reputation;
pub mod simnet;

/// Simulation time in whole seconds since the start of a run.
pub type SimTime = u64;

/// Money in integer minor units.
pub type Money = u64;

/// Rounds `num / den` to the nearest integer, halves away from zero.
pub fn div_round_half_up(num: u64, den: u64) -> u64 {
    assert!(den > 0, "division by zero");
    ((2 * num as u128 + den as u128) / (2 * den as u128)) as u64
}
