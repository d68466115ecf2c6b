use super::*;
use crate::ledger::{OrderLine, TxKind};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn id(s: &str) -> AccountId {
    AccountId::new(s).unwrap()
}

/// Independent distance oracle: chord length between unit vectors, then
/// the central angle from the chord. Shares no code with `haversine_distance`.
fn oracle_distance_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let v = |p: GeoPoint| {
        let (lat, lon) = ((p.lat_e6() as f64 / 1e6).to_radians(), (p.lon_e6() as f64 / 1e6).to_radians());
        [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
    };
    let (x, y) = (v(a), v(b));
    let chord = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2)).sqrt();
    2.0 * 6_371_000.0 * (chord / 2.0).asin()
}

const VENDOR: (i64, i64) = (23_810_300, 90_412_500);

/// A point due east of the vendor whose oracle distance is `meters` ± 5.
fn east_of_vendor(meters: f64) -> GeoPoint {
    let vendor = GeoPoint::new(VENDOR.0, VENDOR.1).unwrap();
    // bisection on longitude offset, judged only by the oracle
    let (mut lo, mut hi) = (0i64, 1_000_000i64);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        let p = GeoPoint::new(VENDOR.0, VENDOR.1 + mid).unwrap();
        if oracle_distance_m(vendor, p) < meters {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let p = GeoPoint::new(VENDOR.0, VENDOR.1 + hi).unwrap();
    assert!((oracle_distance_m(vendor, p) - meters).abs() <= 5.0);
    p
}

fn vendor() -> GeoPoint {
    GeoPoint::new(VENDOR.0, VENDOR.1).unwrap()
}

fn suborder(state: OrderState) -> SubOrder {
    SubOrder {
        suborder_id: "o1/v1".into(),
        parent_order_id: "o1".into(),
        consumer: id("c1"),
        vendor: id("v1"),
        items: vec![OrderLine { product_id: "p".into(), quantity: 1 }],
        items_cost: 100,
        shipping_fee: 100,
        state,
        placed_at: 0,
        ttl_s: 600,
        vendor_location: vendor(),
        consumer_location: vendor(),
        assigned_carrier: None,
        accepted_at: None,
        handed_over_at: None,
        bill: None,
    }
}

fn offer() -> Offer {
    Offer::for_suborder(&suborder(OrderState::Placed))
}

fn carrier_at(p: GeoPoint, reported_at: SimTime) -> CarrierStatus {
    CarrierStatus::new(id("k1"), p, reported_at)
}

#[test]
fn offer_visible_at_9900m() {
    let cfg = PricingConfig::default();
    let offers = [offer()];
    let c = carrier_at(east_of_vendor(9900.0), 100);
    assert_eq!(eligible_offers(&c, &offers, 100, &cfg).len(), 1);
}

#[test]
fn offer_hidden_at_10600m() {
    let cfg = PricingConfig::default();
    let offers = [offer()];
    let c = carrier_at(east_of_vendor(10_600.0), 100);
    assert!(eligible_offers(&c, &offers, 100, &cfg).is_empty());
}

#[test]
fn stale_location_sees_nothing() {
    let cfg = PricingConfig::default();
    let offers = [offer()];
    let c = carrier_at(vendor(), 100);
    assert_eq!(eligible_offers(&c, &offers, 160, &cfg).len(), 1);
    assert!(eligible_offers(&c, &offers, 161, &cfg).is_empty());
}

#[test]
fn closed_offers_hidden() {
    let cfg = PricingConfig::default();
    let offers = [offer()];
    let c = carrier_at(vendor(), 600);
    assert!(eligible_offers(&c, &offers, 600, &cfg).is_empty());
}

#[test]
fn offers_sorted_by_distance_then_id() {
    let cfg = PricingConfig::default();
    let near = Offer { suborder_id: "b".into(), ..offer() };
    let tie = Offer { suborder_id: "a".into(), ..offer() };
    let far = Offer { suborder_id: "0".into(), vendor_location: east_of_vendor(5000.0), ..offer() };
    let offers = [far, near, tie];
    let c = carrier_at(vendor(), 0);
    let ids: Vec<&str> = eligible_offers(&c, &offers, 0, &cfg).iter().map(|o| o.suborder_id.as_str()).collect();
    assert_eq!(ids, ["a", "b", "0"]);
}

#[test]
fn acceptance_gates() {
    let cfg = PricingConfig::default();
    let sub = suborder(OrderState::Placed);
    let ok = carrier_at(east_of_vendor(10_400.0), 100);
    assert!(check_acceptance(&ok, &sub, vendor(), 100, &cfg).is_ok());
    let far = carrier_at(east_of_vendor(10_600.0), 100);
    assert!(matches!(check_acceptance(&far, &sub, vendor(), 100, &cfg), Err(AcceptError::OutOfRange { .. })));
    let stale = carrier_at(vendor(), 10);
    assert_eq!(check_acceptance(&stale, &sub, vendor(), 71, &cfg), Err(AcceptError::StaleLocation { age_s: 61 }));
    let taken = suborder(OrderState::Accepted);
    assert_eq!(check_acceptance(&ok, &taken, vendor(), 100, &cfg), Err(AcceptError::OfferClosed));
    let now_expired = carrier_at(vendor(), 600);
    assert_eq!(check_acceptance(&now_expired, &sub, vendor(), 600, &cfg), Err(AcceptError::OfferClosed));
}

#[test]
fn reports_never_go_backwards() {
    let mut c = carrier_at(vendor(), 100);
    assert!(!c.report(east_of_vendor(100.0), 90));
    assert_eq!(c.reported_at, 100);
    assert!(c.report(east_of_vendor(100.0), 130));
    assert_eq!(c.reported_at, 130);
}

fn status(name: &str, rating: Option<u16>, completed: u64) -> CarrierStatus {
    CarrierStatus { rating_centi: rating, completed_deliveries: completed, ..CarrierStatus::new(id(name), vendor(), 0) }
}

fn attempt(name: &str, at: SimTime) -> AcceptanceAttempt {
    AcceptanceAttempt { carrier: id(name), suborder_id: "s".into(), attempted_at: at }
}

fn statuses(list: Vec<CarrierStatus>) -> BTreeMap<AccountId, CarrierStatus> {
    list.into_iter().map(|s| (s.carrier.clone(), s)).collect()
}

#[test]
fn higher_rating_wins() {
    let st = statuses(vec![status("c-a", Some(420), 50), status("c-b", Some(480), 0)]);
    let r = resolve_conflicts(&[attempt("c-a", 0), attempt("c-b", 5)], &st);
    assert_eq!(r["s"].winner, id("c-b"));
    assert_eq!(r["s"].losers, vec![id("c-a")]);
}

#[test]
fn completed_deliveries_break_rating_ties() {
    let st = statuses(vec![status("c-a", Some(400), 7), status("c-b", Some(400), 12)]);
    assert_eq!(resolve_conflicts(&[attempt("c-a", 0), attempt("c-b", 0)], &st)["s"].winner, id("c-b"));
}

#[test]
fn earliest_attempt_then_smallest_id() {
    let st = statuses(vec![status("c-a", Some(400), 7), status("c-b", Some(400), 7)]);
    assert_eq!(resolve_conflicts(&[attempt("c-a", 3), attempt("c-b", 2)], &st)["s"].winner, id("c-b"));
    assert_eq!(resolve_conflicts(&[attempt("c-b", 2), attempt("c-a", 2)], &st)["s"].winner, id("c-a"));
}

#[test]
fn unrated_ranks_below_rated() {
    let st = statuses(vec![status("c-a", None, 100), status("c-b", Some(100), 0)]);
    assert_eq!(resolve_conflicts(&[attempt("c-a", 0), attempt("c-b", 0)], &st)["s"].winner, id("c-b"));
}

#[test]
fn duplicate_attempts_collapse() {
    let st = statuses(vec![status("c-a", None, 0)]);
    let r = resolve_conflicts(&[attempt("c-a", 4), attempt("c-a", 1)], &st);
    assert!(r["s"].losers.is_empty());
}

/// Brute-force oracle: sort every attempt of a suborder by the full key and
/// take the first.
fn oracle_winner(attempts: &[AcceptanceAttempt], st: &BTreeMap<AccountId, CarrierStatus>, sid: &str) -> AccountId {
    let mut all: Vec<(std::cmp::Reverse<u16>, std::cmp::Reverse<u64>, SimTime, AccountId)> = attempts
        .iter()
        .filter(|a| a.suborder_id == sid)
        .map(|a| {
            let s = st.get(&a.carrier);
            (
                std::cmp::Reverse(s.and_then(|s| s.rating_centi).unwrap_or(0)),
                std::cmp::Reverse(s.map_or(0, |s| s.completed_deliveries)),
                a.attempted_at,
                a.carrier.clone(),
            )
        })
        .collect();
    all.sort();
    all[0].3.clone()
}

#[test]
fn resolution_matches_brute_force_on_random_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let carriers: Vec<CarrierStatus> = (0..rng.gen_range(1..8))
            .map(|i| {
                let rating = if rng.gen_bool(0.2) { None } else { Some(rng.gen_range(4..=5) * 100) };
                status(&format!("c{i}"), rating, rng.gen_range(0..3))
            })
            .collect();
        let st = statuses(carriers.clone());
        let attempts: Vec<AcceptanceAttempt> = (0..rng.gen_range(1..12))
            .map(|_| AcceptanceAttempt {
                carrier: carriers[rng.gen_range(0..carriers.len())].carrier.clone(),
                suborder_id: format!("s{}", rng.gen_range(0..3)),
                attempted_at: rng.gen_range(0..3),
            })
            .collect();
        let res = resolve_conflicts(&attempts, &st);
        for (sid, r) in &res {
            assert_eq!(r.winner, oracle_winner(&attempts, &st, sid));
            assert!(!r.losers.contains(&r.winner));
        }
        let contested: std::collections::BTreeSet<&str> = attempts.iter().map(|a| a.suborder_id.as_str()).collect();
        assert_eq!(res.len(), contested.len());
    }
}

proptest! {
    #[test]
    fn winner_is_maximal(ratings in prop::collection::vec(prop::option::of(100u16..=500), 1..6)) {
        let carriers: Vec<CarrierStatus> =
            ratings.iter().enumerate().map(|(i, r)| status(&format!("c{i}"), *r, 0)).collect();
        let st = statuses(carriers.clone());
        let attempts: Vec<AcceptanceAttempt> = carriers.iter().map(|c| attempt(c.carrier.as_str(), 0)).collect();
        let w = &resolve_conflicts(&attempts, &st)["s"].winner;
        let best = ratings.iter().map(|r| r.unwrap_or(0)).max().unwrap();
        prop_assert_eq!(st[w].rating_centi.unwrap_or(0), best);
    }
}

#[test]
fn kind_sanity() {
    // acceptance is the only transition that assigns a carrier
    assert_eq!(OrderState::Placed.next(TxKind::OrderAccepted), Some(OrderState::Accepted));
}
