//! Scenario files: schema, loading and cross-reference checks.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dispatch::GeoPoint;
use crate::ledger::{AccountId, OrderLine, Role, GENESIS_SEALER, SYSTEM_ACCOUNT};
use crate::marketplace::{PricingConfig, Product};
use crate::{Money, SimTime};

/// Pricing and protocol cadences plus simulator knobs. Every field has a
/// default except `seed`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "d::base_fee")]
    pub base_fee: Money,
    #[serde(default = "d::per_km_fee")]
    pub per_km_fee: Money,
    #[serde(default = "d::per_unit_fee")]
    pub per_unit_fee: Money,
    #[serde(default = "d::offer_radius_m")]
    pub offer_radius_m: u64,
    #[serde(default = "d::accept_radius_m")]
    pub accept_radius_m: u64,
    #[serde(default = "d::location_update_period_s")]
    pub location_update_period_s: u64,
    #[serde(default = "d::block_period_s")]
    pub block_period_s: u64,
    #[serde(default = "d::propagation_delay_s")]
    pub propagation_delay_s: u64,
    pub seed: u64,
    /// Speed of a carrier travelling to pickup and drop-off, metres per second.
    #[serde(default = "d::carrier_speed_mps")]
    pub carrier_speed_mps: u64,
    #[serde(default = "d::finalize_delay_s")]
    pub finalize_delay_s: u64,
    #[serde(default = "d::review_delay_s")]
    pub review_delay_s: u64,
    /// Chance, per finalized suborder, that the consumer leaves reviews.
    #[serde(default)]
    pub review_probability_ppm: u32,
    #[serde(default = "d::geofence_m")]
    pub geofence_m: u64,
}

mod d {
    use crate::marketplace::PricingConfig;

    fn p() -> PricingConfig {
        PricingConfig::default()
    }
    pub fn base_fee() -> u64 {
        p().base_fee
    }
    pub fn per_km_fee() -> u64 {
        p().per_km_fee
    }
    pub fn per_unit_fee() -> u64 {
        p().per_unit_fee
    }
    pub fn offer_radius_m() -> u64 {
        p().offer_radius_m
    }
    pub fn accept_radius_m() -> u64 {
        p().accept_radius_m
    }
    pub fn location_update_period_s() -> u64 {
        p().location_update_period_s
    }
    pub fn block_period_s() -> u64 {
        p().block_period_s
    }
    pub fn propagation_delay_s() -> u64 {
        1
    }
    pub fn carrier_speed_mps() -> u64 {
        8
    }
    pub fn finalize_delay_s() -> u64 {
        120
    }
    pub fn review_delay_s() -> u64 {
        120
    }
    pub fn geofence_m() -> u64 {
        50
    }
}

impl SimConfig {
    pub fn with_seed(seed: u64) -> Self {
        serde_json::from_value(serde_json::json!({ "seed": seed })).expect("all other fields default")
    }

    pub fn pricing(&self) -> PricingConfig {
        PricingConfig {
            base_fee: self.base_fee,
            per_km_fee: self.per_km_fee,
            per_unit_fee: self.per_unit_fee,
            offer_radius_m: self.offer_radius_m,
            accept_radius_m: self.accept_radius_m,
            location_update_period_s: self.location_update_period_s,
            block_period_s: self.block_period_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccountSpec {
    pub id: AccountId,
    pub role: Role,
    #[serde(default)]
    pub balance: Money,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub home: Option<GeoPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum AcceptPolicy {
    Always,
    Never,
    #[serde(rename = "probability_ppm")]
    ProbabilityPpm(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t: SimTime,
    pub location: GeoPoint,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarrierRoute {
    pub carrier: AccountId,
    pub accept_policy: AcceptPolicy,
    pub waypoints: Vec<Waypoint>,
}

impl CarrierRoute {
    /// Position at `t`, linearly interpolated; clamped to the first and last
    /// waypoints outside the route's time span.
    pub fn position_at(&self, t: SimTime) -> GeoPoint {
        let w = &self.waypoints;
        let next = w.partition_point(|p| p.t <= t);
        if next == 0 {
            return w[0].location;
        }
        if next == w.len() {
            return w[w.len() - 1].location;
        }
        let (a, b) = (w[next - 1], w[next]);
        a.location.lerp(b.location, t - a.t, b.t - a.t)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderEvent {
    pub time: SimTime,
    pub consumer: AccountId,
    pub items: Vec<OrderLine>,
    pub ttl_s: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub config: SimConfig,
    pub accounts: Vec<AccountSpec>,
    pub products: Vec<Product>,
    #[serde(default)]
    pub carrier_routes: Vec<CarrierRoute>,
    #[serde(default)]
    pub order_events: Vec<OrderEvent>,
    #[serde(default)]
    pub producer_prep_s: BTreeMap<AccountId, u64>,
    pub duration_s: SimTime,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("schema error at line {line}, column {column}, field `{field}`: {message}")]
    Schema { line: usize, column: usize, field: String, message: String },
    #[error("undefined reference {0}")]
    DanglingReference(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        ScenarioError::Schema { line: inner.line(), column: inner.column(), field, message: inner.to_string() }
    })?;
    scenario.validate()?;
    Ok(scenario)
}

impl Scenario {
    /// Cross-reference and bounds checks beyond the JSON schema.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Invalid(m));
        if let Err(m) = self.config.pricing().validate() {
            return invalid(m.into());
        }
        if self.config.carrier_speed_mps == 0 {
            return invalid("carrier_speed_mps must be positive".into());
        }
        if self.config.review_probability_ppm > 1_000_000 {
            return invalid("review_probability_ppm exceeds 1000000".into());
        }

        let mut roles = BTreeMap::new();
        for a in &self.accounts {
            if a.id.as_str() == GENESIS_SEALER || a.id.as_str() == SYSTEM_ACCOUNT {
                return invalid(format!("account id {} is reserved", a.id));
            }
            if a.role == Role::System {
                return invalid(format!("account {} cannot take the system role", a.id));
            }
            if a.role == Role::Consumer && a.home.is_none() {
                return invalid(format!("consumer {} has no home", a.id));
            }
            if roles.insert(&a.id, a.role).is_some() {
                return invalid(format!("duplicate account {}", a.id));
            }
        }
        let require = |id: &AccountId, role: Role| match roles.get(id) {
            None => Err(ScenarioError::DanglingReference(id.to_string())),
            Some(r) if *r != role => Err(ScenarioError::Invalid(format!("{id} is not a {role:?}"))),
            Some(_) => Ok(()),
        };

        let mut products = BTreeSet::new();
        let mut vendor_sites: BTreeMap<&AccountId, GeoPoint> = BTreeMap::new();
        for p in &self.products {
            require(&p.vendor, Role::Producer)?;
            if !products.insert(p.product_id.as_str()) {
                return invalid(format!("duplicate product {}", p.product_id));
            }
            if *vendor_sites.entry(&p.vendor).or_insert(p.location) != p.location {
                return invalid(format!("products of {} are listed at different locations", p.vendor));
            }
        }

        let mut routed = BTreeSet::new();
        for r in &self.carrier_routes {
            require(&r.carrier, Role::Carrier)?;
            if !routed.insert(&r.carrier) {
                return invalid(format!("carrier {} has two routes", r.carrier));
            }
            if r.waypoints.is_empty() {
                return invalid(format!("route of {} has no waypoints", r.carrier));
            }
            if r.waypoints.windows(2).any(|w| w[0].t >= w[1].t) {
                return invalid(format!("waypoint times of {} must increase", r.carrier));
            }
            if r.waypoints.iter().any(|w| w.t > self.duration_s) {
                return invalid(format!("route of {} runs past duration_s", r.carrier));
            }
            if let AcceptPolicy::ProbabilityPpm(ppm) = r.accept_policy {
                if ppm > 1_000_000 {
                    return invalid(format!("accept probability of {} exceeds 1000000 ppm", r.carrier));
                }
            }
        }

        for (i, o) in self.order_events.iter().enumerate() {
            require(&o.consumer, Role::Consumer)?;
            if o.time > self.duration_s {
                return invalid(format!("order event {i} is after duration_s"));
            }
            if o.ttl_s == 0 {
                return invalid(format!("order event {i} has zero ttl_s"));
            }
            if o.items.is_empty() {
                return invalid(format!("order event {i} has no items"));
            }
            for line in &o.items {
                if !products.contains(line.product_id.as_str()) {
                    return Err(ScenarioError::DanglingReference(line.product_id.clone()));
                }
                if line.quantity == 0 {
                    return invalid(format!("order event {i} has zero quantity of {}", line.product_id));
                }
            }
        }

        for producer in self.producer_prep_s.keys() {
            require(producer, Role::Producer)?;
        }
        Ok(())
    }

    pub fn prep_time(&self, producer: &AccountId) -> u64 {
        self.producer_prep_s.get(producer).copied().unwrap_or(0)
    }
}
