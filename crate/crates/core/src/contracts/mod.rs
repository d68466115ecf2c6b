//! Order-lifecycle contract engine.
//!
//! Each suborder moves `Placed -> Accepted -> HandedOver -> Delivered ->
//! Finalized`, or `Placed -> Expired`. Funds are escrowed at placement,
//! released to the vendor and carrier at delivery, and refunded on expiry.
//! [`ContractState::apply`] is the only mutator and validates a transaction
//! completely before touching any state.

mod events;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dispatch::GeoPoint;
use crate::ledger::{
    AccountId, Chain, DeliveryPayload, OrderAcceptedPayload, OrderLine, OrderPlacedPayload, RegisterPayload,
    ReviewPayload, Role, SubOrderRef, TxEnvelope, TxKind, TxPayload,
};
use crate::{Money, SimTime};

pub use events::{Event, EventKind, EventLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OrderState {
    Placed,
    Accepted,
    HandedOver,
    Delivered,
    Finalized,
    Expired,
}

impl OrderState {
    pub const ALL: [OrderState; 6] = [
        OrderState::Placed,
        OrderState::Accepted,
        OrderState::HandedOver,
        OrderState::Delivered,
        OrderState::Finalized,
        OrderState::Expired,
    ];

    /// The state graph. `Review` is a legal self-loop on `Finalized`.
    pub fn next(self, kind: TxKind) -> Option<OrderState> {
        use OrderState::*;
        match (self, kind) {
            (Placed, TxKind::OrderAccepted) => Some(Accepted),
            (Placed, TxKind::OrderExpired) => Some(Expired),
            (Accepted, TxKind::ProducerHandover) => Some(HandedOver),
            (HandedOver, TxKind::Delivery) => Some(Delivered),
            (Delivered, TxKind::CustomerFinalize) => Some(Finalized),
            (Finalized, TxKind::Review) => Some(Finalized),
            _ => None,
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, OrderState::Finalized | OrderState::Expired)
    }
}

impl fmt::Display for OrderState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Address {
    pub location: GeoPoint,
    pub label: String,
}

/// Digital bill carried by the `Delivery` transaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bill {
    pub suborder_id: String,
    pub pickup_address: Address,
    pub delivery_address: Address,
    pub order_date: SimTime,
    pub handover_date: SimTime,
    pub delivery_date: SimTime,
    pub items_cost: Money,
    pub shipping_fee: Money,
    pub total: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubOrder {
    pub suborder_id: String,
    pub parent_order_id: String,
    pub consumer: AccountId,
    pub vendor: AccountId,
    pub items: Vec<OrderLine>,
    pub items_cost: Money,
    pub shipping_fee: Money,
    pub state: OrderState,
    pub placed_at: SimTime,
    pub ttl_s: u64,
    pub vendor_location: GeoPoint,
    pub consumer_location: GeoPoint,
    pub assigned_carrier: Option<AccountId>,
    pub accepted_at: Option<SimTime>,
    pub handed_over_at: Option<SimTime>,
    pub bill: Option<Bill>,
}

impl SubOrder {
    pub fn total(&self) -> Money {
        self.items_cost + self.shipping_fee
    }

    /// First instant at which the suborder may be expired.
    pub fn deadline(&self) -> SimTime {
        self.placed_at + self.ttl_s
    }

    /// The suborder an `OrderPlaced` payload creates.
    pub fn placed(p: &OrderPlacedPayload, placed_at: SimTime) -> Self {
        Self {
            suborder_id: p.suborder_id.clone(),
            parent_order_id: p.parent_order_id.clone(),
            consumer: p.consumer.clone(),
            vendor: p.vendor.clone(),
            items: p.items.clone(),
            items_cost: p.items_cost,
            shipping_fee: p.shipping_fee,
            state: OrderState::Placed,
            placed_at,
            ttl_s: p.ttl_s,
            vendor_location: p.vendor_location,
            consumer_location: p.consumer_location,
            assigned_carrier: None,
            accepted_at: None,
            handed_over_at: None,
            bill: None,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ContractError {
    #[error("{kind} not allowed for suborder {suborder_id} in state {state}")]
    InvalidTransition { suborder_id: String, state: OrderState, kind: TxKind },
    #[error("{author} may not submit {kind} for {target}")]
    Unauthorized { author: AccountId, kind: TxKind, target: String },
    #[error("unknown suborder {0}")]
    UnknownSubOrder(String),
    #[error("unknown account {0}")]
    UnknownAccount(AccountId),
    #[error("account {0} already registered")]
    DuplicateAccount(AccountId),
    #[error("{account} holds {available}, needs {required}")]
    InsufficientFunds { account: AccountId, available: Money, required: Money },
    #[error("escrow for {suborder_id} is {held}, expected {expected}")]
    EscrowMismatch { suborder_id: String, held: Money, expected: Money },
    #[error("bill dates out of order for {0}")]
    BadDates(String),
    #[error("bill for {suborder_id} does not match the suborder: {field}")]
    BadBill { suborder_id: String, field: &'static str },
    #[error("malformed order {suborder_id}: {reason}")]
    BadOrder { suborder_id: String, reason: &'static str },
    #[error("stars must be 1..=5, got {0}")]
    BadStars(u8),
    #[error("{rater} already reviewed {ratee} for {suborder_id}")]
    DuplicateReview { suborder_id: String, rater: AccountId, ratee: AccountId },
}

/// Account balances plus per-suborder escrow.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceBook {
    pub balances: BTreeMap<AccountId, Money>,
    pub escrow: BTreeMap<String, Money>,
}

impl BalanceBook {
    pub fn balance(&self, account: &AccountId) -> Money {
        self.balances.get(account).copied().unwrap_or(0)
    }

    /// Σ balances + Σ escrow.
    pub fn total_supply(&self) -> u128 {
        self.balances.values().map(|&v| v as u128).sum::<u128>() + self.escrow.values().map(|&v| v as u128).sum::<u128>()
    }

    fn credit(&mut self, account: &AccountId, amount: Money) {
        *self.balances.entry(account.clone()).or_insert(0) += amount;
    }

    fn held_for(&self, suborder: &SubOrder) -> Result<Money, ContractError> {
        let held = self.escrow.get(&suborder.suborder_id).copied().unwrap_or(0);
        if held != suborder.total() {
            return Err(ContractError::EscrowMismatch {
                suborder_id: suborder.suborder_id.clone(),
                held,
                expected: suborder.total(),
            });
        }
        Ok(held)
    }

    /// Releases escrow: items cost to the vendor, shipping to the carrier.
    pub fn settle(&mut self, suborder: &SubOrder, carrier: &AccountId) -> Result<(), ContractError> {
        self.held_for(suborder)?;
        self.escrow.remove(&suborder.suborder_id);
        self.credit(&suborder.vendor, suborder.items_cost);
        self.credit(carrier, suborder.shipping_fee);
        Ok(())
    }

    /// Returns the full escrow to the consumer.
    pub fn refund(&mut self, suborder: &SubOrder) -> Result<(), ContractError> {
        let held = self.held_for(suborder)?;
        self.escrow.remove(&suborder.suborder_id);
        self.credit(&suborder.consumer, held);
        Ok(())
    }
}

/// Pure settlement: returns the book after paying out `suborder`.
pub fn settle_payment(book: &BalanceBook, suborder: &SubOrder) -> Result<BalanceBook, ContractError> {
    let carrier = suborder
        .assigned_carrier
        .as_ref()
        .ok_or_else(|| ContractError::InvalidTransition {
            suborder_id: suborder.suborder_id.clone(),
            state: suborder.state,
            kind: TxKind::Delivery,
        })?;
    let mut next = book.clone();
    next.settle(suborder, carrier)?;
    Ok(next)
}

/// Builds the digital bill for a handed-over suborder.
pub fn make_bill(
    suborder: &SubOrder,
    handover_date: SimTime,
    delivery_date: SimTime,
    vendor_loc: GeoPoint,
    consumer_loc: GeoPoint,
) -> Result<Bill, ContractError> {
    if suborder.state != OrderState::HandedOver {
        return Err(ContractError::InvalidTransition {
            suborder_id: suborder.suborder_id.clone(),
            state: suborder.state,
            kind: TxKind::Delivery,
        });
    }
    if !(suborder.placed_at <= handover_date && handover_date <= delivery_date) {
        return Err(ContractError::BadDates(suborder.suborder_id.clone()));
    }
    Ok(Bill {
        suborder_id: suborder.suborder_id.clone(),
        pickup_address: Address { location: vendor_loc, label: suborder.vendor.to_string() },
        delivery_address: Address { location: consumer_loc, label: suborder.consumer.to_string() },
        order_date: suborder.placed_at,
        handover_date,
        delivery_date,
        items_cost: suborder.items_cost,
        shipping_fee: suborder.shipping_fee,
        total: suborder.total(),
    })
}

/// Everything the contracts know, rebuilt purely from transactions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ContractState {
    pub roles: BTreeMap<AccountId, Role>,
    pub book: BalanceBook,
    pub suborders: BTreeMap<String, SubOrder>,
    /// (suborder, rater, ratee) of every accepted review.
    pub reviews: BTreeSet<(String, AccountId, AccountId)>,
    pub completed_deliveries: BTreeMap<AccountId, u64>,
}

impl ContractState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replays every transaction of `chain` in order.
    pub fn replay(chain: &Chain) -> Result<(ContractState, Vec<Event>), (String, ContractError)> {
        let mut state = ContractState::new();
        let mut events = Vec::new();
        for (_, tx) in chain.transactions() {
            events.extend(state.apply(tx).map_err(|e| (tx.tx_id().to_string(), e))?);
        }
        Ok((state, events))
    }

    pub fn suborder(&self, id: &str) -> Option<&SubOrder> {
        self.suborders.get(id)
    }

    pub fn role(&self, account: &AccountId) -> Option<Role> {
        self.roles.get(account).copied()
    }

    /// Applies one transaction in place. On error nothing is modified.
    pub fn apply(&mut self, tx: &TxEnvelope) -> Result<Vec<Event>, ContractError> {
        let now = tx.created_at();
        let author = tx.author();
        match tx.payload() {
            TxPayload::Register(p) => self.apply_register(author, p, now),
            TxPayload::OrderPlaced(p) => self.apply_placed(author, p, now),
            TxPayload::OrderAccepted(p) => self.apply_accepted(author, p, now),
            TxPayload::ProducerHandover(r) => self.apply_handover(author, r, now),
            TxPayload::Delivery(p) => self.apply_delivery(author, p, now),
            TxPayload::CustomerFinalize(r) => self.apply_finalize(author, r, now),
            TxPayload::OrderExpired(r) => self.apply_expired(author, r, now),
            TxPayload::Review(p) => self.apply_review(author, p, now),
        }
    }

    /// Looks up the suborder and checks the state graph edge for `kind`.
    fn edge(&self, id: &str, kind: TxKind) -> Result<&SubOrder, ContractError> {
        let sub = self.suborders.get(id).ok_or_else(|| ContractError::UnknownSubOrder(id.to_string()))?;
        if sub.state.next(kind).is_none() {
            return Err(invalid(sub, kind));
        }
        Ok(sub)
    }

    fn apply_register(&mut self, author: &AccountId, p: &RegisterPayload, now: SimTime) -> Result<Vec<Event>, ContractError> {
        if self.roles.contains_key(author) {
            return Err(ContractError::DuplicateAccount(author.clone()));
        }
        self.roles.insert(author.clone(), p.role);
        self.book.credit(author, p.initial_balance);
        Ok(vec![Event::new(
            now,
            EventKind::Registered,
            None,
            format!("account={} role={} balance={}", author, p.role, p.initial_balance),
        )])
    }

    fn apply_placed(&mut self, author: &AccountId, p: &OrderPlacedPayload, now: SimTime) -> Result<Vec<Event>, ContractError> {
        if let Some(existing) = self.suborders.get(&p.suborder_id) {
            return Err(invalid(existing, TxKind::OrderPlaced));
        }
        if author != &p.consumer || self.role(author) != Some(Role::Consumer) {
            return Err(unauthorized(author, TxKind::OrderPlaced, &p.suborder_id));
        }
        if self.role(&p.vendor) != Some(Role::Producer) {
            return Err(ContractError::UnknownAccount(p.vendor.clone()));
        }
        let bad = |reason| ContractError::BadOrder { suborder_id: p.suborder_id.clone(), reason };
        if p.items.is_empty() {
            return Err(bad("no items"));
        }
        if p.items.iter().any(|l| l.quantity == 0) {
            return Err(bad("zero quantity"));
        }
        if p.ttl_s == 0 {
            return Err(bad("ttl must be positive"));
        }
        let total = p.items_cost + p.shipping_fee;
        let available = self.book.balance(author);
        if available < total {
            return Err(ContractError::InsufficientFunds { account: author.clone(), available, required: total });
        }
        *self.book.balances.get_mut(author).expect("registered consumer has a balance") -= total;
        self.book.escrow.insert(p.suborder_id.clone(), total);
        self.suborders.insert(p.suborder_id.clone(), SubOrder::placed(p, now));
        Ok(vec![Event::new(
            now,
            EventKind::OrderPlaced,
            Some(&p.suborder_id),
            format!("consumer={} vendor={} escrow={}", p.consumer, p.vendor, total),
        )])
    }

    fn apply_accepted(&mut self, author: &AccountId, p: &OrderAcceptedPayload, now: SimTime) -> Result<Vec<Event>, ContractError> {
        let sub = self.edge(&p.suborder_id, TxKind::OrderAccepted)?;
        if now >= sub.deadline() {
            return Err(invalid(sub, TxKind::OrderAccepted));
        }
        if self.role(author) != Some(Role::Carrier) {
            return Err(unauthorized(author, TxKind::OrderAccepted, &p.suborder_id));
        }
        let sub = self.suborders.get_mut(&p.suborder_id).expect("checked above");
        sub.state = OrderState::Accepted;
        sub.assigned_carrier = Some(author.clone());
        sub.accepted_at = Some(now);
        Ok(vec![Event::new(now, EventKind::Accepted, Some(&p.suborder_id), format!("carrier={author}"))])
    }

    fn apply_handover(&mut self, author: &AccountId, r: &SubOrderRef, now: SimTime) -> Result<Vec<Event>, ContractError> {
        let sub = self.edge(&r.suborder_id, TxKind::ProducerHandover)?;
        if author != &sub.vendor {
            return Err(unauthorized(author, TxKind::ProducerHandover, &r.suborder_id));
        }
        let sub = self.suborders.get_mut(&r.suborder_id).expect("checked above");
        sub.state = OrderState::HandedOver;
        sub.handed_over_at = Some(now);
        let carrier = sub.assigned_carrier.as_ref().map(ToString::to_string).unwrap_or_default();
        Ok(vec![Event::new(now, EventKind::HandedOver, Some(&r.suborder_id), format!("vendor={author} carrier={carrier}"))])
    }

    fn apply_delivery(&mut self, author: &AccountId, p: &DeliveryPayload, now: SimTime) -> Result<Vec<Event>, ContractError> {
        let sub = self.edge(&p.suborder_id, TxKind::Delivery)?;
        if sub.assigned_carrier.as_ref() != Some(author) {
            return Err(unauthorized(author, TxKind::Delivery, &p.suborder_id));
        }
        check_bill(sub, &p.bill, now)?;
        let mut book = self.book.clone();
        book.settle(sub, author)?;
        self.book = book;
        let sub = self.suborders.get_mut(&p.suborder_id).expect("checked above");
        sub.state = OrderState::Delivered;
        sub.bill = Some(p.bill.clone());
        *self.completed_deliveries.entry(author.clone()).or_insert(0) += 1;
        Ok(vec![
            Event::new(now, EventKind::Delivered, Some(&p.suborder_id), format!("carrier={} total={}", author, p.bill.total)),
            Event::new(
                now,
                EventKind::Settled,
                Some(&p.suborder_id),
                format!("vendor={} +{} carrier={} +{}", sub.vendor, sub.items_cost, author, sub.shipping_fee),
            ),
        ])
    }

    fn apply_finalize(&mut self, author: &AccountId, r: &SubOrderRef, now: SimTime) -> Result<Vec<Event>, ContractError> {
        let sub = self.edge(&r.suborder_id, TxKind::CustomerFinalize)?;
        if author != &sub.consumer {
            return Err(unauthorized(author, TxKind::CustomerFinalize, &r.suborder_id));
        }
        let sub = self.suborders.get_mut(&r.suborder_id).expect("checked above");
        sub.state = OrderState::Finalized;
        Ok(vec![
            Event::new(now, EventKind::Finalized, Some(&r.suborder_id), format!("consumer={author}")),
            Event::new(now, EventKind::ConfirmationEmail, Some(&r.suborder_id), format!("to={author}")),
        ])
    }

    fn apply_expired(&mut self, author: &AccountId, r: &SubOrderRef, now: SimTime) -> Result<Vec<Event>, ContractError> {
        let sub = self.edge(&r.suborder_id, TxKind::OrderExpired)?;
        if self.role(author) != Some(Role::System) {
            return Err(unauthorized(author, TxKind::OrderExpired, &r.suborder_id));
        }
        if now < sub.deadline() {
            return Err(invalid(sub, TxKind::OrderExpired));
        }
        let mut book = self.book.clone();
        book.refund(sub)?;
        self.book = book;
        let sub = self.suborders.get_mut(&r.suborder_id).expect("checked above");
        sub.state = OrderState::Expired;
        Ok(vec![
            Event::new(now, EventKind::Expired, Some(&r.suborder_id), format!("deadline={}", sub.deadline())),
            Event::new(now, EventKind::Refunded, Some(&r.suborder_id), format!("consumer={} +{}", sub.consumer, sub.total())),
        ])
    }

    fn apply_review(&mut self, author: &AccountId, p: &ReviewPayload, now: SimTime) -> Result<Vec<Event>, ContractError> {
        let sub = self.edge(&p.suborder_id, TxKind::Review)?;
        let ratee_is_party = sub.assigned_carrier.as_ref() == Some(&p.ratee) || sub.vendor == p.ratee;
        if author != &sub.consumer || !ratee_is_party {
            return Err(unauthorized(author, TxKind::Review, &p.suborder_id));
        }
        if !(1..=5).contains(&p.stars) {
            return Err(ContractError::BadStars(p.stars));
        }
        let key = (p.suborder_id.clone(), author.clone(), p.ratee.clone());
        if self.reviews.contains(&key) {
            return Err(ContractError::DuplicateReview {
                suborder_id: p.suborder_id.clone(),
                rater: author.clone(),
                ratee: p.ratee.clone(),
            });
        }
        self.reviews.insert(key);
        Ok(vec![Event::new(now, EventKind::Reviewed, Some(&p.suborder_id), format!("ratee={} stars={}", p.ratee, p.stars))])
    }
}

/// Pure transition: returns the successor state and emitted events.
pub fn apply_transaction(state: &ContractState, tx: &TxEnvelope) -> Result<(ContractState, Vec<Event>), ContractError> {
    let mut next = state.clone();
    let events = next.apply(tx)?;
    Ok((next, events))
}

fn check_bill(sub: &SubOrder, bill: &Bill, now: SimTime) -> Result<(), ContractError> {
    let mismatch = |field| Err(ContractError::BadBill { suborder_id: sub.suborder_id.clone(), field });
    if bill.suborder_id != sub.suborder_id {
        return mismatch("suborder_id");
    }
    if bill.items_cost != sub.items_cost || bill.shipping_fee != sub.shipping_fee {
        return mismatch("costs");
    }
    if bill.total != bill.items_cost + bill.shipping_fee {
        return mismatch("total");
    }
    if bill.pickup_address.location != sub.vendor_location || bill.delivery_address.location != sub.consumer_location {
        return mismatch("addresses");
    }
    if bill.order_date != sub.placed_at || Some(bill.handover_date) != sub.handed_over_at || bill.delivery_date != now {
        return mismatch("dates");
    }
    if !(bill.order_date <= bill.handover_date && bill.handover_date <= bill.delivery_date) {
        return Err(ContractError::BadDates(sub.suborder_id.clone()));
    }
    Ok(())
}

fn invalid(sub: &SubOrder, kind: TxKind) -> ContractError {
    ContractError::InvalidTransition { suborder_id: sub.suborder_id.clone(), state: sub.state, kind }
}

fn unauthorized(author: &AccountId, kind: TxKind, target: &str) -> ContractError {
    ContractError::Unauthorized { author: author.clone(), kind, target: target.to_string() }
}

#[cfg(test)]
mod tests;
