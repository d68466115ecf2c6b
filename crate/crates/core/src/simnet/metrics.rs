//! Run counters, derived entirely from contract state and the chain.

use std::collections::{BTreeMap, BTreeSet};

use crate::contracts::{ContractState, OrderState};
use crate::ledger::{AccountId, Chain, Role};
use crate::{div_round_half_up, Money};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Metrics {
    pub orders_placed: u64,
    pub suborders_created: u64,
    pub accepted: u64,
    pub expired: u64,
    /// Suborders that reached Delivered, including those since finalized.
    pub delivered: u64,
    pub finalized: u64,
    /// Placement to delivery, mean over delivered suborders, rounded half-up.
    pub mean_delivery_latency_s: u64,
    pub chain_height: u64,
    pub tx_count: u64,
    /// Income per producer and carrier.
    pub earnings: BTreeMap<AccountId, Money>,
}

impl Metrics {
    pub fn from_state(state: &ContractState, chain: &Chain) -> Self {
        let subs = state.suborders.values();
        let parents: BTreeSet<&str> = subs.clone().map(|s| s.parent_order_id.as_str()).collect();
        let mut earnings: BTreeMap<AccountId, Money> = state
            .roles
            .iter()
            .filter(|(_, r)| matches!(r, Role::Producer | Role::Carrier))
            .map(|(a, _)| (a.clone(), 0))
            .collect();
        let (mut latency_sum, mut delivered) = (0u64, 0u64);
        for s in subs.clone() {
            if let Some(bill) = &s.bill {
                delivered += 1;
                latency_sum += bill.delivery_date - s.placed_at;
                *earnings.entry(s.vendor.clone()).or_insert(0) += s.items_cost;
                if let Some(c) = &s.assigned_carrier {
                    *earnings.entry(c.clone()).or_insert(0) += s.shipping_fee;
                }
            }
        }
        let count = |pred: &dyn Fn(&crate::contracts::SubOrder) -> bool| subs.clone().filter(|s| pred(s)).count() as u64;
        Metrics {
            orders_placed: parents.len() as u64,
            suborders_created: state.suborders.len() as u64,
            accepted: count(&|s| s.accepted_at.is_some()),
            expired: count(&|s| s.state == OrderState::Expired),
            delivered,
            finalized: count(&|s| s.state == OrderState::Finalized),
            mean_delivery_latency_s: if delivered == 0 { 0 } else { div_round_half_up(latency_sum, delivered) },
            chain_height: chain.height(),
            tx_count: chain.tx_count() as u64,
            earnings,
        }
    }

    pub fn csv_header(&self) -> String {
        let mut cols: Vec<String> = [
            "orders_placed",
            "suborders_created",
            "accepted",
            "expired",
            "delivered",
            "finalized",
            "mean_delivery_latency_s",
            "chain_height",
            "tx_count",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        cols.extend(self.earnings.keys().map(|a| format!("earnings_{a}")));
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut vals = vec![
            self.orders_placed,
            self.suborders_created,
            self.accepted,
            self.expired,
            self.delivered,
            self.finalized,
            self.mean_delivery_latency_s,
            self.chain_height,
            self.tx_count,
        ];
        vals.extend(self.earnings.values());
        vals.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", self.csv_header(), self.csv_row())
    }
}
