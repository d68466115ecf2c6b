use super::*;
use crate::ledger::{UnsignedTx, ZERO_HASH};
use proptest::prelude::*;

fn id(s: &str) -> AccountId {
    AccountId::new(s).unwrap()
}

fn pt(lat: i64, lon: i64) -> GeoPoint {
    GeoPoint::new(lat, lon).unwrap()
}

const VENDOR_LOC: (i64, i64) = (23_800_000, 90_400_000);
const CONSUMER_LOC: (i64, i64) = (23_780_000, 90_410_000);

/// Builds unauthenticated envelopes; the contract engine trusts the ledger
/// to have verified tags already.
struct Fx {
    state: ContractState,
    seq: u64,
}

impl Fx {
    fn new() -> Self {
        let mut fx = Fx { state: ContractState::new(), seq: 0 };
        for (name, role, bal) in [
            ("c1", Role::Consumer, 10_000),
            ("c2", Role::Consumer, 10_000),
            ("v1", Role::Producer, 0),
            ("v2", Role::Producer, 0),
            ("k1", Role::Carrier, 0),
            ("k2", Role::Carrier, 0),
            ("system", Role::System, 0),
        ] {
            fx.ok(name, 0, TxPayload::Register(RegisterPayload { role, initial_balance: bal, home: None }));
        }
        fx
    }

    fn tx(&mut self, author: &str, t: SimTime, payload: TxPayload) -> TxEnvelope {
        self.seq += 1;
        TxEnvelope {
            body: UnsignedTx { tx_id: format!("{author}.{}", self.seq), author: id(author), created_at: t, payload },
            auth_tag: ZERO_HASH.into(),
        }
    }

    fn try_apply(&mut self, author: &str, t: SimTime, payload: TxPayload) -> Result<Vec<Event>, ContractError> {
        let tx = self.tx(author, t, payload);
        self.state.apply(&tx)
    }

    fn ok(&mut self, author: &str, t: SimTime, payload: TxPayload) -> Vec<Event> {
        self.try_apply(author, t, payload).unwrap()
    }

    fn sub(&self, s: &str) -> &SubOrder {
        self.state.suborder(s).unwrap()
    }

    fn advance_to(&mut self, s: &str, target: OrderState) {
        for (kind, t) in lifecycle_path(target) {
            let payload = self.payload_for(kind, s, t);
            let author = self.author_for(kind, s);
            self.ok(&author, t, payload);
        }
    }

    fn author_for(&self, kind: TxKind, s: &str) -> String {
        match kind {
            TxKind::Register => "newbie".into(),
            TxKind::OrderPlaced | TxKind::CustomerFinalize | TxKind::Review => "c1".into(),
            TxKind::OrderAccepted => "k1".into(),
            TxKind::ProducerHandover => "v1".into(),
            TxKind::Delivery => self
                .state
                .suborder(s)
                .and_then(|x| x.assigned_carrier.clone())
                .map(String::from)
                .unwrap_or_else(|| "k1".into()),
            TxKind::OrderExpired => "system".into(),
        }
    }

    fn payload_for(&self, kind: TxKind, s: &str, t: SimTime) -> TxPayload {
        let r = SubOrderRef { suborder_id: s.into() };
        match kind {
            TxKind::Register => TxPayload::Register(RegisterPayload { role: Role::Carrier, initial_balance: 0, home: None }),
            TxKind::OrderPlaced => TxPayload::OrderPlaced(placement(s, "c1", "v1", 1000, 2100)),
            TxKind::OrderAccepted => TxPayload::OrderAccepted(OrderAcceptedPayload {
                suborder_id: s.into(),
                carrier_location: pt(VENDOR_LOC.0, VENDOR_LOC.1),
                location_reported_at: t,
            }),
            TxKind::ProducerHandover => TxPayload::ProducerHandover(r),
            TxKind::Delivery => {
                let sub = self.state.suborder(s);
                let bill = match sub {
                    Some(sub) if sub.state == OrderState::HandedOver => {
                        make_bill(sub, sub.handed_over_at.unwrap(), t, sub.vendor_location, sub.consumer_location).unwrap()
                    }
                    _ => dummy_bill(s),
                };
                TxPayload::Delivery(DeliveryPayload { suborder_id: s.into(), bill })
            }
            TxKind::CustomerFinalize => TxPayload::CustomerFinalize(r),
            TxKind::OrderExpired => TxPayload::OrderExpired(r),
            TxKind::Review => TxPayload::Review(ReviewPayload { suborder_id: s.into(), ratee: id("k1"), stars: 5, body: String::new() }),
        }
    }
}

fn placement(s: &str, consumer: &str, vendor: &str, items_cost: Money, shipping_fee: Money) -> OrderPlacedPayload {
    OrderPlacedPayload {
        suborder_id: s.into(),
        parent_order_id: "o1".into(),
        consumer: id(consumer),
        vendor: id(vendor),
        items: vec![OrderLine { product_id: "p1".into(), quantity: 1 }],
        items_cost,
        shipping_fee,
        ttl_s: 300,
        vendor_location: pt(VENDOR_LOC.0, VENDOR_LOC.1),
        consumer_location: pt(CONSUMER_LOC.0, CONSUMER_LOC.1),
    }
}

fn dummy_bill(s: &str) -> Bill {
    Bill {
        suborder_id: s.into(),
        pickup_address: Address { location: pt(VENDOR_LOC.0, VENDOR_LOC.1), label: "v1".into() },
        delivery_address: Address { location: pt(CONSUMER_LOC.0, CONSUMER_LOC.1), label: "c1".into() },
        order_date: 10,
        handover_date: 10,
        delivery_date: 10,
        items_cost: 1000,
        shipping_fee: 2100,
        total: 3100,
    }
}

/// Transactions (with times) that take a fresh suborder to `target`.
fn lifecycle_path(target: OrderState) -> Vec<(TxKind, SimTime)> {
    use OrderState::*;
    let mut path = vec![(TxKind::OrderPlaced, 10)];
    let steps: &[(TxKind, SimTime)] = match target {
        Placed => &[],
        Expired => &[(TxKind::OrderExpired, 310)],
        Accepted => &[(TxKind::OrderAccepted, 40)],
        HandedOver => &[(TxKind::OrderAccepted, 40), (TxKind::ProducerHandover, 100)],
        Delivered => &[(TxKind::OrderAccepted, 40), (TxKind::ProducerHandover, 100), (TxKind::Delivery, 400)],
        Finalized => &[
            (TxKind::OrderAccepted, 40),
            (TxKind::ProducerHandover, 100),
            (TxKind::Delivery, 400),
            (TxKind::CustomerFinalize, 500),
        ],
    };
    path.extend_from_slice(steps);
    path
}

#[test]
fn full_lifecycle_reaches_finalized() {
    let mut fx = Fx::new();
    let supply = fx.state.book.total_supply();
    fx.advance_to("s1", OrderState::Finalized);
    let sub = fx.sub("s1");
    assert_eq!(sub.state, OrderState::Finalized);
    assert_eq!(sub.assigned_carrier, Some(id("k1")));
    assert_eq!(sub.bill.as_ref().unwrap().total, 3100);
    assert_eq!(fx.state.book.balance(&id("v1")), 1000);
    assert_eq!(fx.state.book.balance(&id("k1")), 2100);
    assert_eq!(fx.state.book.balance(&id("c1")), 10_000 - 3100);
    assert!(fx.state.book.escrow.is_empty());
    assert_eq!(fx.state.book.total_supply(), supply);
    assert_eq!(fx.state.completed_deliveries[&id("k1")], 1);
}

#[test]
fn finalize_emits_confirmation_email() {
    let mut fx = Fx::new();
    fx.advance_to("s1", OrderState::Delivered);
    let events = fx.ok("c1", 600, TxPayload::CustomerFinalize(SubOrderRef { suborder_id: "s1".into() }));
    let kinds: Vec<EventKind> = events.iter().map(|e| e.kind).collect();
    assert_eq!(kinds, [EventKind::Finalized, EventKind::ConfirmationEmail]);
}

#[test]
fn delivery_while_placed_is_invalid() {
    let mut fx = Fx::new();
    fx.advance_to("s1", OrderState::Placed);
    let p = fx.payload_for(TxKind::Delivery, "s1", 50);
    assert!(matches!(
        fx.try_apply("k1", 50, p),
        Err(ContractError::InvalidTransition { state: OrderState::Placed, kind: TxKind::Delivery, .. })
    ));
}

#[test]
fn handover_by_other_producer_is_unauthorized() {
    let mut fx = Fx::new();
    fx.advance_to("s1", OrderState::Accepted);
    let r = TxPayload::ProducerHandover(SubOrderRef { suborder_id: "s1".into() });
    assert!(matches!(fx.try_apply("v2", 90, r), Err(ContractError::Unauthorized { .. })));
}

#[test]
fn unknown_suborder() {
    let mut fx = Fx::new();
    let r = TxPayload::ProducerHandover(SubOrderRef { suborder_id: "nope".into() });
    assert_eq!(fx.try_apply("v1", 90, r), Err(ContractError::UnknownSubOrder("nope".into())));
}

#[test]
fn state_kind_matrix_is_exhaustive() {
    let mut transitions = 0;
    for state in OrderState::ALL {
        for kind in TxKind::ALL {
            let expected = state.next(kind);
            if kind == TxKind::Register {
                // Register never targets a suborder; it must leave every suborder untouched.
                assert_eq!(expected, None);
                let mut fx = Fx::new();
                fx.advance_to("s1", state);
                let p = fx.payload_for(kind, "s1", 700);
                fx.ok("newbie", 700, p);
                assert_eq!(fx.sub("s1").state, state);
                continue;
            }
            let mut fx = Fx::new();
            fx.advance_to("s1", state);
            let t = if kind == TxKind::OrderExpired { 320 } else { 250 };
            let t = if state == OrderState::Delivered || state == OrderState::Finalized { t.max(600) } else { t };
            let t = if kind == TxKind::OrderAccepted { 200 } else { t };
            let author = fx.author_for(kind, "s1");
            let payload = fx.payload_for(kind, "s1", t);
            let result = fx.try_apply(&author, t, payload);
            match expected {
                Some(next) => {
                    transitions += 1;
                    assert!(result.is_ok(), "{state} x {kind}: {result:?}");
                    assert_eq!(fx.sub("s1").state, next);
                }
                None => assert!(
                    matches!(result, Err(ContractError::InvalidTransition { .. })),
                    "{state} x {kind}: {result:?}"
                ),
            }
        }
    }
    assert_eq!(transitions, 6);
}

#[test]
fn every_legal_edge_checks_its_author() {
    use OrderState::*;
    let cases = [
        (Placed, TxKind::OrderAccepted, "v1"),
        (Placed, TxKind::OrderExpired, "c1"),
        (Accepted, TxKind::ProducerHandover, "k1"),
        (HandedOver, TxKind::Delivery, "k2"),
        (Delivered, TxKind::CustomerFinalize, "c2"),
        (Finalized, TxKind::Review, "c2"),
    ];
    for (state, kind, wrong) in cases {
        let mut fx = Fx::new();
        fx.advance_to("s1", state);
        let t = if kind == TxKind::OrderExpired { 320 } else if kind == TxKind::OrderAccepted { 200 } else { 700 };
        let payload = fx.payload_for(kind, "s1", t);
        let result = fx.try_apply(wrong, t, payload);
        assert!(matches!(result, Err(ContractError::Unauthorized { .. })), "{state} x {kind}: {result:?}");
        assert_eq!(fx.sub("s1").state, state);
    }
}

#[test]
fn acceptance_after_deadline_rejected() {
    let mut fx = Fx::new();
    fx.advance_to("s1", OrderState::Placed);
    let p = fx.payload_for(TxKind::OrderAccepted, "s1", 310);
    assert!(matches!(fx.try_apply("k1", 310, p), Err(ContractError::InvalidTransition { .. })));
    let p = fx.payload_for(TxKind::OrderAccepted, "s1", 309);
    assert!(fx.try_apply("k1", 309, p).is_ok());
}

#[test]
fn early_expiry_rejected() {
    let mut fx = Fx::new();
    fx.advance_to("s1", OrderState::Placed);
    let r = TxPayload::OrderExpired(SubOrderRef { suborder_id: "s1".into() });
    assert!(matches!(fx.try_apply("system", 309, r.clone()), Err(ContractError::InvalidTransition { .. })));
    let events = fx.ok("system", 310, r);
    assert_eq!(events[1].kind, EventKind::Refunded);
    assert_eq!(fx.state.book.balance(&id("c1")), 10_000);
    assert!(fx.state.book.escrow.is_empty());
}

#[test]
fn insufficient_funds_leaves_state_untouched() {
    let mut fx = Fx::new();
    let before = fx.state.clone();
    let p = TxPayload::OrderPlaced(placement("s1", "c1", "v1", 9_000, 1_001));
    assert!(matches!(fx.try_apply("c1", 10, p), Err(ContractError::InsufficientFunds { .. })));
    assert_eq!(fx.state, before);
    let p = TxPayload::OrderPlaced(placement("s1", "c1", "v1", 9_000, 1_000));
    assert!(fx.try_apply("c1", 10, p).is_ok());
}

#[test]
fn placement_must_be_authored_by_consumer() {
    let mut fx = Fx::new();
    let p = TxPayload::OrderPlaced(placement("s1", "c1", "v1", 100, 100));
    assert!(matches!(fx.try_apply("c2", 10, p), Err(ContractError::Unauthorized { .. })));
}

#[test]
fn bill_must_match_suborder() {
    let mut fx = Fx::new();
    fx.advance_to("s1", OrderState::HandedOver);
    let sub = fx.sub("s1").clone();
    let mut bill = make_bill(&sub, 100, 400, sub.vendor_location, sub.consumer_location).unwrap();
    bill.total += 1;
    let p = TxPayload::Delivery(DeliveryPayload { suborder_id: "s1".into(), bill });
    assert!(matches!(fx.try_apply("k1", 400, p), Err(ContractError::BadBill { field: "total", .. })));
    assert_eq!(fx.sub("s1").state, OrderState::HandedOver);
}

#[test]
fn make_bill_totals_and_dates() {
    let mut fx = Fx::new();
    fx.advance_to("s1", OrderState::HandedOver);
    let sub = fx.sub("s1").clone();
    let bill = make_bill(&sub, 100, 400, sub.vendor_location, sub.consumer_location).unwrap();
    assert_eq!(bill.total, 3100);
    assert_eq!((bill.order_date, bill.handover_date, bill.delivery_date), (10, 100, 400));
    assert_eq!(bill.pickup_address.label, "v1");
    assert_eq!(make_bill(&sub, 5, 400, sub.vendor_location, sub.consumer_location), Err(ContractError::BadDates("s1".into())));
    assert_eq!(make_bill(&sub, 100, 99, sub.vendor_location, sub.consumer_location), Err(ContractError::BadDates("s1".into())));
    let json = serde_json::to_string(&bill).unwrap();
    assert_eq!(serde_json::from_str::<Bill>(&json).unwrap(), bill);
}

#[test]
fn settle_payment_examples() {
    let mut fx = Fx::new();
    fx.advance_to("s1", OrderState::HandedOver);
    let sub = fx.sub("s1").clone();
    let book = fx.state.book.clone();
    assert_eq!(book.escrow["s1"], 3100);
    let after = settle_payment(&book, &sub).unwrap();
    assert_eq!(after.balance(&id("v1")), book.balance(&id("v1")) + 1000);
    assert_eq!(after.balance(&id("k1")), book.balance(&id("k1")) + 2100);
    assert!(!after.escrow.contains_key("s1"));
    assert_eq!(after.total_supply(), book.total_supply());
    // a second settlement finds no escrow
    assert!(matches!(settle_payment(&after, &sub), Err(ContractError::EscrowMismatch { held: 0, .. })));
}

#[test]
fn refund_example() {
    let mut fx = Fx::new();
    fx.advance_to("s1", OrderState::Placed);
    let sub = fx.sub("s1").clone();
    let mut book = fx.state.book.clone();
    let before = book.balance(&id("c1"));
    book.refund(&sub).unwrap();
    assert_eq!(book.balance(&id("c1")), before + 3100);
}

#[test]
fn review_rules() {
    let mut fx = Fx::new();
    fx.advance_to("s1", OrderState::Delivered);
    let review = |ratee: &str, stars| TxPayload::Review(ReviewPayload { suborder_id: "s1".into(), ratee: id(ratee), stars, body: "ok".into() });
    assert!(matches!(fx.try_apply("c1", 600, review("k1", 5)), Err(ContractError::InvalidTransition { .. })));
    fx.ok("c1", 600, TxPayload::CustomerFinalize(SubOrderRef { suborder_id: "s1".into() }));
    assert!(matches!(fx.try_apply("c2", 601, review("k1", 5)), Err(ContractError::Unauthorized { .. })));
    assert!(matches!(fx.try_apply("c1", 601, review("k2", 5)), Err(ContractError::Unauthorized { .. })));
    assert_eq!(fx.try_apply("c1", 601, review("k1", 0)), Err(ContractError::BadStars(0)));
    assert_eq!(fx.try_apply("c1", 601, review("k1", 6)), Err(ContractError::BadStars(6)));
    fx.ok("c1", 601, review("k1", 5));
    fx.ok("c1", 602, review("v1", 3));
    assert!(matches!(fx.try_apply("c1", 603, review("k1", 4)), Err(ContractError::DuplicateReview { .. })));
}

#[test]
fn pure_apply_does_not_mutate_input() {
    let mut fx = Fx::new();
    let tx = fx.tx("c1", 10, TxPayload::OrderPlaced(placement("s1", "c1", "v1", 100, 100)));
    let before = fx.state.clone();
    let (after, events) = apply_transaction(&fx.state, &tx).unwrap();
    assert_eq!(fx.state, before);
    assert_eq!(after.suborder("s1").unwrap().state, OrderState::Placed);
    assert_eq!(events.len(), 1);
}

#[derive(Debug, Clone)]
enum Op {
    Place { consumer: u8, vendor: u8, cost: u16, fee: u16 },
    Advance { pick: u16, carrier: u8 },
    Expire { pick: u16 },
    Review { pick: u16, stars: u8 },
}

fn arb_op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0u8..2, 0u8..2, 0u16..3000, 0u16..3000).prop_map(|(consumer, vendor, cost, fee)| Op::Place { consumer, vendor, cost, fee }),
        (any::<u16>(), 0u8..2).prop_map(|(pick, carrier)| Op::Advance { pick, carrier }),
        any::<u16>().prop_map(|pick| Op::Expire { pick }),
        (any::<u16>(), 0u8..7).prop_map(|(pick, stars)| Op::Review { pick, stars }),
    ]
}

proptest! {
    // Σ balances + Σ escrow never changes, whatever sequence of lifecycle
    // transactions is thrown at the engine (rejected ones included).
    #[test]
    fn conservation_under_random_sequences(ops in prop::collection::vec(arb_op(), 1..120)) {
        let mut fx = Fx::new();
        let supply = fx.state.book.total_supply();
        let mut t = 10;
        let mut placed = 0u32;
        for op in ops {
            t += 7;
            let ids: Vec<String> = fx.state.suborders.keys().cloned().collect();
            let pick = |p: u16| ids.get(p as usize % ids.len().max(1)).cloned();
            let _ = match op {
                Op::Place { consumer, vendor, cost, fee } => {
                    placed += 1;
                    let s = format!("s{placed}");
                    let c = ["c1", "c2"][consumer as usize];
                    let mut p = placement(&s, c, ["v1", "v2"][vendor as usize], cost as Money, fee as Money);
                    p.ttl_s = 50;
                    fx.try_apply(c, t, TxPayload::OrderPlaced(p))
                }
                Op::Advance { pick: p, carrier } => match pick(p) {
                    None => continue,
                    Some(s) => {
                        let sub = fx.sub(&s).clone();
                        let kind = match sub.state {
                            OrderState::Placed => TxKind::OrderAccepted,
                            OrderState::Accepted => TxKind::ProducerHandover,
                            OrderState::HandedOver => TxKind::Delivery,
                            OrderState::Delivered => TxKind::CustomerFinalize,
                            _ => continue,
                        };
                        let author = match kind {
                            TxKind::OrderAccepted => ["k1", "k2"][carrier as usize].to_string(),
                            TxKind::ProducerHandover => sub.vendor.to_string(),
                            TxKind::Delivery => sub.assigned_carrier.clone().unwrap().to_string(),
                            _ => sub.consumer.to_string(),
                        };
                        let payload = fx.payload_for(kind, &s, t);
                        fx.try_apply(&author, t, payload)
                    }
                },
                Op::Expire { pick: p } => match pick(p) {
                    None => continue,
                    Some(s) => fx.try_apply("system", t, TxPayload::OrderExpired(SubOrderRef { suborder_id: s })),
                },
                Op::Review { pick: p, stars } => match pick(p) {
                    None => continue,
                    Some(s) => {
                        let sub = fx.sub(&s).clone();
                        let ratee = sub.assigned_carrier.clone().unwrap_or(sub.vendor.clone());
                        let payload = TxPayload::Review(ReviewPayload { suborder_id: s, ratee, stars, body: String::new() });
                        fx.try_apply(sub.consumer.as_str(), t, payload)
                    }
                },
            };
            prop_assert_eq!(fx.state.book.total_supply(), supply);
        }
        for sub in fx.state.suborders.values() {
            let escrowed = fx.state.book.escrow.get(&sub.suborder_id).copied();
            match sub.state {
                OrderState::Placed | OrderState::Accepted | OrderState::HandedOver => prop_assert_eq!(escrowed, Some(sub.total())),
                _ => prop_assert_eq!(escrowed, None),
            }
            prop_assert_eq!(sub.assigned_carrier.is_some(), !matches!(sub.state, OrderState::Placed | OrderState::Expired));
            prop_assert_eq!(sub.bill.is_some(), matches!(sub.state, OrderState::Delivered | OrderState::Finalized));
        }
    }
}
