//! Seeded generator for random city-scale scenarios.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scenario::{AccountSpec, AcceptPolicy, CarrierRoute, OrderEvent, Scenario, SimConfig, Waypoint};
use crate::dispatch::GeoPoint;
use crate::ledger::{AccountId, OrderLine, Role};
use crate::marketplace::Product;
use crate::SimTime;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthParams {
    pub seed: u64,
    pub consumers: usize,
    pub carriers: usize,
    pub producers: usize,
    pub orders: usize,
    pub duration_s: SimTime,
    /// Half-width of the square service area, in micro-degrees.
    pub spread_e6: i64,
    pub review_probability_ppm: u32,
}

impl SynthParams {
    /// 100 consumers, 20 carriers, 10 producers, 500 orders over four hours.
    pub fn desk_scale(seed: u64) -> Self {
        Self {
            seed,
            consumers: 100,
            carriers: 20,
            producers: 10,
            orders: 500,
            duration_s: 4 * 3600,
            spread_e6: 40_000,
            review_probability_ppm: 600_000,
        }
    }
}

const CENTER: (i64, i64) = (23_810_300, 90_412_500);

fn id(prefix: &str, i: usize) -> AccountId {
    AccountId::new(format!("{prefix}{i:03}")).expect("generated ids are well formed")
}

pub fn synthesize(p: &SynthParams) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let point = |rng: &mut ChaCha8Rng| {
        GeoPoint::new(
            CENTER.0 + rng.gen_range(-p.spread_e6..=p.spread_e6),
            CENTER.1 + rng.gen_range(-p.spread_e6..=p.spread_e6),
        )
        .expect("service area is near the centre")
    };

    let mut accounts = Vec::new();
    let mut products = Vec::new();
    let mut prep = BTreeMap::new();
    for i in 0..p.producers {
        let vendor = id("v", i);
        let site = point(&mut rng);
        for j in 0..3 {
            products.push(Product {
                product_id: format!("{vendor}-p{j}"),
                vendor: vendor.clone(),
                name: format!("item {j} of {vendor}"),
                unit_price: rng.gen_range(200..=2000),
                location: site,
            });
        }
        prep.insert(vendor.clone(), rng.gen_range(60..=600));
        accounts.push(AccountSpec { id: vendor, role: Role::Producer, balance: 0, home: None });
    }
    for i in 0..p.consumers {
        let home = Some(point(&mut rng));
        accounts.push(AccountSpec { id: id("c", i), role: Role::Consumer, balance: 10_000_000, home });
    }
    let mut routes = Vec::new();
    for i in 0..p.carriers {
        let carrier = id("k", i);
        let waypoints = (0..=p.duration_s / 600).map(|k| Waypoint { t: k * 600, location: point(&mut rng) }).collect();
        let accept_policy =
            if rng.gen_bool(0.8) { AcceptPolicy::Always } else { AcceptPolicy::ProbabilityPpm(500_000) };
        routes.push(CarrierRoute { carrier: carrier.clone(), accept_policy, waypoints });
        accounts.push(AccountSpec { id: carrier, role: Role::Carrier, balance: 0, home: None });
    }

    let latest = p.duration_s.saturating_sub(1800).max(1);
    let mut orders: Vec<OrderEvent> = (0..p.orders)
        .map(|_| {
            let items = (0..rng.gen_range(1..=3))
                .map(|_| OrderLine {
                    product_id: products[rng.gen_range(0..products.len())].product_id.clone(),
                    quantity: rng.gen_range(1..=3),
                })
                .collect();
            OrderEvent {
                time: rng.gen_range(0..latest),
                consumer: id("c", rng.gen_range(0..p.consumers)),
                items,
                ttl_s: rng.gen_range(900..=1800),
            }
        })
        .collect();
    orders.sort_by_key(|o| o.time);

    let mut config = SimConfig::with_seed(p.seed);
    config.review_probability_ppm = p.review_probability_ppm;
    Scenario {
        config,
        accounts,
        products,
        carrier_routes: routes,
        order_events: orders,
        producer_prep_s: prep,
        duration_s: p.duration_s,
    }
}
