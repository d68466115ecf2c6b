//! Carrier tracking, radius-gated offers, acceptance checks and
//! rating-based conflict resolution.

mod geo;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::contracts::{OrderState, SubOrder};
use crate::ledger::AccountId;
use crate::marketplace::PricingConfig;
use crate::SimTime;

pub use geo::{haversine_distance, GeoPoint, InvalidGeoPoint, EARTH_RADIUS_M};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CarrierStatus {
    pub carrier: AccountId,
    pub location: GeoPoint,
    pub reported_at: SimTime,
    /// Centi-stars in [100, 500]; absent until the first review.
    pub rating_centi: Option<u16>,
    pub completed_deliveries: u64,
}

impl CarrierStatus {
    pub fn new(carrier: AccountId, location: GeoPoint, reported_at: SimTime) -> Self {
        Self { carrier, location, reported_at, rating_centi: None, completed_deliveries: 0 }
    }

    /// Records a location fix. Reports older than the current one are ignored.
    pub fn report(&mut self, location: GeoPoint, at: SimTime) -> bool {
        if at < self.reported_at {
            return false;
        }
        self.location = location;
        self.reported_at = at;
        true
    }

    pub fn is_fresh(&self, now: SimTime, cfg: &PricingConfig) -> bool {
        now.saturating_sub(self.reported_at) <= 2 * cfg.location_update_period_s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Offer {
    pub suborder_id: String,
    pub vendor_location: GeoPoint,
    pub created_at: SimTime,
    /// `placed_at + ttl_s`; the offer is open strictly before this instant.
    pub expires_at: SimTime,
}

impl Offer {
    pub fn for_suborder(sub: &SubOrder) -> Self {
        Self {
            suborder_id: sub.suborder_id.clone(),
            vendor_location: sub.vendor_location,
            created_at: sub.placed_at,
            expires_at: sub.deadline(),
        }
    }

    pub fn is_open(&self, now: SimTime) -> bool {
        now < self.expires_at
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptanceAttempt {
    pub carrier: AccountId,
    pub suborder_id: String,
    pub attempted_at: SimTime,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum AcceptError {
    #[error("offer closed")]
    OfferClosed,
    #[error("location is {age_s}s old")]
    StaleLocation { age_s: u64 },
    #[error("carrier is {distance_m} m from pickup, limit {limit_m} m")]
    OutOfRange { distance_m: u64, limit_m: u64 },
}

/// Offers a carrier can see: within the offer radius of the pickup point,
/// still open, and only if the carrier's fix is fresh. Nearest first, ties
/// by suborder id.
pub fn eligible_offers<'a>(
    carrier: &CarrierStatus,
    offers: impl IntoIterator<Item = &'a Offer>,
    now: SimTime,
    cfg: &PricingConfig,
) -> Vec<&'a Offer> {
    if !carrier.is_fresh(now, cfg) {
        return Vec::new();
    }
    let mut visible: Vec<(u64, &Offer)> = offers
        .into_iter()
        .filter(|o| o.is_open(now))
        .map(|o| (haversine_distance(carrier.location, o.vendor_location), o))
        .filter(|(d, _)| *d <= cfg.offer_radius_m)
        .collect();
    visible.sort_by(|a, b| (a.0, &a.1.suborder_id).cmp(&(b.0, &b.1.suborder_id)));
    visible.into_iter().map(|(_, o)| o).collect()
}

/// Gate checked at acceptance time. On success returns the carrier's
/// distance to the pickup point.
pub fn check_acceptance(
    carrier: &CarrierStatus,
    suborder: &SubOrder,
    vendor_location: GeoPoint,
    now: SimTime,
    cfg: &PricingConfig,
) -> Result<u64, AcceptError> {
    if suborder.state != OrderState::Placed || now >= suborder.deadline() {
        return Err(AcceptError::OfferClosed);
    }
    if !carrier.is_fresh(now, cfg) {
        return Err(AcceptError::StaleLocation { age_s: now.saturating_sub(carrier.reported_at) });
    }
    let distance_m = haversine_distance(carrier.location, vendor_location);
    if distance_m > cfg.accept_radius_m {
        return Err(AcceptError::OutOfRange { distance_m, limit_m: cfg.accept_radius_m });
    }
    Ok(distance_m)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resolution {
    pub winner: AccountId,
    pub losers: Vec<AccountId>,
}

/// Ordering used to pick a winner: higher is better.
fn priority(a: &AcceptanceAttempt, statuses: &BTreeMap<AccountId, CarrierStatus>) -> (u16, u64) {
    statuses
        .get(&a.carrier)
        .map_or((0, 0), |s| (s.rating_centi.unwrap_or(0), s.completed_deliveries))
}

fn compare(a: &AcceptanceAttempt, b: &AcceptanceAttempt, statuses: &BTreeMap<AccountId, CarrierStatus>) -> Ordering {
    priority(a, statuses)
        .cmp(&priority(b, statuses))
        .then_with(|| b.attempted_at.cmp(&a.attempted_at))
        .then_with(|| b.carrier.cmp(&a.carrier))
}

/// Picks one winner per contested suborder by rating, then completed
/// deliveries, then earliest attempt, then smallest carrier id. Unrated
/// carriers count as rating 0. Repeat attempts by the same carrier on the
/// same suborder collapse to the earliest one.
pub fn resolve_conflicts(
    attempts: &[AcceptanceAttempt],
    statuses: &BTreeMap<AccountId, CarrierStatus>,
) -> BTreeMap<String, Resolution> {
    let mut by_suborder: BTreeMap<&str, BTreeMap<&AccountId, &AcceptanceAttempt>> = BTreeMap::new();
    for a in attempts {
        let slot = by_suborder.entry(&a.suborder_id).or_default().entry(&a.carrier).or_insert(a);
        if a.attempted_at < slot.attempted_at {
            *slot = a;
        }
    }
    by_suborder
        .into_iter()
        .map(|(sid, per_carrier)| {
            let mut ranked: Vec<&AcceptanceAttempt> = per_carrier.into_values().collect();
            ranked.sort_by(|a, b| compare(b, a, statuses));
            let winner = ranked[0].carrier.clone();
            let losers = ranked[1..].iter().map(|a| a.carrier.clone()).collect();
            (sid.to_string(), Resolution { winner, losers })
        })
        .collect()
}

#[cfg(test)]
mod tests;
