//! Catalog, per-vendor order splitting, shipping prices and TTL expiry.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::contracts::{ContractState, OrderState, SubOrder};
use crate::dispatch::{haversine_distance, GeoPoint};
use crate::ledger::{
    AccountId, Directory, OrderLine, OrderPlacedPayload, Role, SubOrderRef, TxIdAllocator, TxPayload, UnsignedTx,
};
use crate::{Money, SimTime};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Product {
    pub product_id: String,
    pub vendor: AccountId,
    pub name: String,
    pub unit_price: Money,
    /// The vendor's pickup point.
    pub location: GeoPoint,
}

/// Fee schedule, radii and protocol cadences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PricingConfig {
    pub base_fee: Money,
    pub per_km_fee: Money,
    pub per_unit_fee: Money,
    pub offer_radius_m: u64,
    pub accept_radius_m: u64,
    pub location_update_period_s: u64,
    pub block_period_s: u64,
}

impl Default for PricingConfig {
    fn default() -> Self {
        Self {
            base_fee: 2000,
            per_km_fee: 500,
            per_unit_fee: 100,
            offer_radius_m: 10_000,
            accept_radius_m: 10_500,
            location_update_period_s: 30,
            block_period_s: 15,
        }
    }
}

impl PricingConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.offer_radius_m == 0 || self.offer_radius_m > self.accept_radius_m {
            return Err("radii must satisfy 0 < offer_radius_m <= accept_radius_m");
        }
        if self.location_update_period_s == 0 || self.block_period_s == 0 {
            return Err("periods must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MarketError {
    #[error("unknown product {0}")]
    UnknownProduct(String),
    #[error("quantity must be at least 1 (product {0})")]
    BadQuantity(String),
    #[error("ttl must be positive")]
    BadTTL,
    #[error("order has no items")]
    EmptyOrder,
    #[error("{0} is not a registered consumer")]
    UnknownConsumer(AccountId),
    #[error("{0} has no home location")]
    MissingHome(AccountId),
    #[error("{consumer} holds {available}, order needs {required}")]
    InsufficientFunds { consumer: AccountId, available: Money, required: Money },
}

/// Items of one vendor, in input order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemGroup {
    pub vendor: AccountId,
    pub items: Vec<OrderLine>,
}

pub type Catalog = BTreeMap<String, Product>;

/// Partitions an order into one group per vendor, ordered by vendor id.
pub fn split_order(items: &[OrderLine], catalog: &Catalog) -> Result<Vec<ItemGroup>, MarketError> {
    let mut groups: BTreeMap<&AccountId, Vec<OrderLine>> = BTreeMap::new();
    for line in items {
        let product = catalog
            .get(&line.product_id)
            .ok_or_else(|| MarketError::UnknownProduct(line.product_id.clone()))?;
        if line.quantity < 1 {
            return Err(MarketError::BadQuantity(line.product_id.clone()));
        }
        groups.entry(&product.vendor).or_default().push(line.clone());
    }
    Ok(groups
        .into_iter()
        .map(|(vendor, items)| ItemGroup { vendor: vendor.clone(), items })
        .collect())
}

/// `base + per_km × ceil(distance / 1 km) + per_unit × units`.
pub fn shipping_fee(distance_m: u64, units: u64, cfg: &PricingConfig) -> Result<Money, MarketError> {
    if units < 1 {
        return Err(MarketError::BadQuantity("<units>".into()));
    }
    let km = distance_m.div_ceil(1000);
    Ok(cfg.base_fee + cfg.per_km_fee * km + cfg.per_unit_fee * units)
}

fn group_cost(group: &ItemGroup, catalog: &Catalog) -> Money {
    group.items.iter().map(|l| catalog[&l.product_id].unit_price * l.quantity).sum()
}

#[derive(Debug, Clone)]
pub struct PlacedOrder {
    pub parent_order_id: String,
    pub suborders: Vec<SubOrder>,
    pub txs: Vec<UnsignedTx>,
}

/// Order intake: owns the catalog and hands out order ids.
#[derive(Debug, Clone)]
pub struct Marketplace {
    pub catalog: Catalog,
    pub config: PricingConfig,
    orders_taken: u64,
}

impl Marketplace {
    pub fn new(products: impl IntoIterator<Item = Product>, config: PricingConfig) -> Self {
        let catalog = products.into_iter().map(|p| (p.product_id.clone(), p)).collect();
        Self { catalog, config, orders_taken: 0 }
    }

    /// Splits, prices and drafts one `OrderPlaced` per vendor group. Either
    /// every suborder is drafted or nothing is; the order counter only moves
    /// on success.
    #[allow(clippy::too_many_arguments)]
    pub fn place_order(
        &mut self,
        consumer: &AccountId,
        items: &[OrderLine],
        ttl_s: u64,
        now: SimTime,
        directory: &Directory,
        state: &ContractState,
        ids: &mut TxIdAllocator,
    ) -> Result<PlacedOrder, MarketError> {
        if ttl_s == 0 {
            return Err(MarketError::BadTTL);
        }
        if items.is_empty() {
            return Err(MarketError::EmptyOrder);
        }
        let entry = directory
            .get(consumer)
            .filter(|e| e.role == Role::Consumer)
            .ok_or_else(|| MarketError::UnknownConsumer(consumer.clone()))?;
        let consumer_location = entry.home_location.ok_or_else(|| MarketError::MissingHome(consumer.clone()))?;
        let groups = split_order(items, &self.catalog)?;

        let parent_order_id = format!("o{:06}", self.orders_taken + 1);
        let mut payloads = Vec::with_capacity(groups.len());
        for group in &groups {
            let vendor_location = self.catalog[&group.items[0].product_id].location;
            let units = group.items.iter().map(|l| l.quantity).sum();
            let distance = haversine_distance(vendor_location, consumer_location);
            payloads.push(OrderPlacedPayload {
                suborder_id: format!("{}/{}", parent_order_id, group.vendor),
                parent_order_id: parent_order_id.clone(),
                consumer: consumer.clone(),
                vendor: group.vendor.clone(),
                items: group.items.clone(),
                items_cost: group_cost(group, &self.catalog),
                shipping_fee: shipping_fee(distance, units, &self.config)?,
                ttl_s,
                vendor_location,
                consumer_location,
            });
        }
        let required: Money = payloads.iter().map(|p| p.items_cost + p.shipping_fee).sum();
        let available = state.book.balance(consumer);
        if available < required {
            return Err(MarketError::InsufficientFunds { consumer: consumer.clone(), available, required });
        }

        self.orders_taken += 1;
        let suborders = payloads.iter().map(|p| SubOrder::placed(p, now)).collect();
        let txs = payloads
            .into_iter()
            .map(|p| ids.draft(consumer, now, TxPayload::OrderPlaced(p)))
            .collect();
        Ok(PlacedOrder { parent_order_id, suborders, txs })
    }
}

/// One system-authored `OrderExpired` per Placed suborder whose deadline
/// (`placed_at + ttl_s`, inclusive) has been reached.
pub fn expire_orders(state: &ContractState, now: SimTime, ids: &mut TxIdAllocator) -> Vec<UnsignedTx> {
    let system = AccountId::system();
    state
        .suborders
        .values()
        .filter(|s| s.state == OrderState::Placed && now >= s.deadline())
        .map(|s| ids.draft(&system, now, TxPayload::OrderExpired(SubOrderRef { suborder_id: s.suborder_id.clone() })))
        .collect()
}
