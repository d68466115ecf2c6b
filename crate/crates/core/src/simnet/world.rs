//! The event loop: one priority queue, one clock, one writer.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::metrics::Metrics;
use super::scenario::{AcceptPolicy, CarrierRoute, Scenario};
use super::SimError;
use crate::contracts::{make_bill, ContractState, Event, EventKind, EventLog};
use crate::dispatch::{
    check_acceptance, eligible_offers, haversine_distance, resolve_conflicts, AcceptanceAttempt, CarrierStatus,
    GeoPoint, Offer,
};
use crate::ledger::{
    authenticate_tx, next_sealer, AccountId, Chain, DeliveryPayload, Directory, OrderAcceptedPayload, RegisterPayload,
    Role, Secret, SubOrderRef, TxIdAllocator, TxKind, TxPayload, UnsignedTx,
};
use crate::marketplace::{expire_orders, Marketplace, PricingConfig};
use crate::reputation::{review_tx, RatingBook, Review};
use crate::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeId {
    Node1,
    Node2,
    Node3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    Registration,
    OrderLifecycle,
    ReviewMisc,
}

impl NodeId {
    pub const ALL: [NodeId; 3] = [NodeId::Node1, NodeId::Node2, NodeId::Node3];

    /// The node that ingests transactions of `kind`.
    pub fn for_kind(kind: TxKind) -> NodeId {
        match kind {
            TxKind::Register => NodeId::Node1,
            TxKind::Review => NodeId::Node3,
            TxKind::OrderPlaced
            | TxKind::OrderAccepted
            | TxKind::ProducerHandover
            | TxKind::Delivery
            | TxKind::CustomerFinalize
            | TxKind::OrderExpired => NodeId::Node2,
        }
    }

    pub fn role(self) -> NodeRole {
        match self {
            NodeId::Node1 => NodeRole::Registration,
            NodeId::Node2 => NodeRole::OrderLifecycle,
            NodeId::Node3 => NodeRole::ReviewMisc,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone)]
pub struct Node {
    pub id: NodeId,
    pub role: NodeRole,
    /// Ingested transactions not yet propagated to the sealers.
    pub inbox: VecDeque<crate::ledger::TxEnvelope>,
}

/// Tie-break order for events at the same instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Rank {
    Movement,
    Placement,
    Acceptance,
    Handover,
    Delivery,
    Finalize,
    Review,
    Expiry,
    Propagation,
    Sealing,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum SimEvent {
    Movement,
    Placement(usize),
    AcceptanceRound,
    Handover(String),
    Delivery(String),
    Finalize(String),
    Review(String),
    Expiry(String),
    Propagation { node: NodeId, tx_id: String },
    Sealing,
}

impl SimEvent {
    fn rank(&self) -> Rank {
        match self {
            SimEvent::Movement => Rank::Movement,
            SimEvent::Placement(_) => Rank::Placement,
            SimEvent::AcceptanceRound => Rank::Acceptance,
            SimEvent::Handover(_) => Rank::Handover,
            SimEvent::Delivery(_) => Rank::Delivery,
            SimEvent::Finalize(_) => Rank::Finalize,
            SimEvent::Review(_) => Rank::Review,
            SimEvent::Expiry(_) => Rank::Expiry,
            SimEvent::Propagation { .. } => Rank::Propagation,
            SimEvent::Sealing => Rank::Sealing,
        }
    }

    fn is_periodic(&self) -> bool {
        matches!(self, SimEvent::Movement | SimEvent::AcceptanceRound | SimEvent::Sealing)
    }
}

/// `(time, rank, subject id, insertion sequence)`
type QueueKey = (SimTime, Rank, String, u64);

/// Pickup-and-drop-off plan of a carrier that won a suborder.
#[derive(Debug, Clone)]
struct Job {
    suborder_id: String,
    start: GeoPoint,
    start_t: SimTime,
    vendor: GeoPoint,
    arrive_vendor_t: SimTime,
    consumer: GeoPoint,
    /// Set at handover: `(depart_t, arrive_consumer_t)`.
    leg: Option<(SimTime, SimTime)>,
    delivery_scheduled: bool,
}

impl Job {
    fn position(&self, t: SimTime) -> GeoPoint {
        if t < self.arrive_vendor_t {
            return self.start.lerp(self.vendor, t.saturating_sub(self.start_t), self.arrive_vendor_t - self.start_t);
        }
        match self.leg {
            Some((depart, arrive)) if t > depart => self.vendor.lerp(self.consumer, t - depart, arrive - depart),
            _ => self.vendor,
        }
    }
}

#[derive(Debug, Clone)]
struct CarrierAgent {
    route: Option<CarrierRoute>,
    policy: AcceptPolicy,
    job: Option<Job>,
    /// Where the carrier stopped after its last drop-off.
    parked: Option<GeoPoint>,
    status: Option<CarrierStatus>,
}

impl CarrierAgent {
    fn position(&self, t: SimTime) -> Option<GeoPoint> {
        if let Some(job) = &self.job {
            return Some(job.position(t));
        }
        self.parked.or_else(|| self.route.as_ref().map(|r| r.position_at(t)))
    }
}

fn travel_time(from: GeoPoint, to: GeoPoint, speed_mps: u64) -> SimTime {
    haversine_distance(from, to).div_ceil(speed_mps)
}

/// Complete simulation state. Cloning gives an independent snapshot that
/// steps identically.
#[derive(Debug, Clone)]
pub struct World {
    scenario: Scenario,
    cfg: PricingConfig,
    clock: SimTime,
    directory: Directory,
    chain: Chain,
    /// State as seen by the ingesting nodes, updated at submission.
    live: ContractState,
    /// State rebuilt from sealed blocks only.
    sealed: ContractState,
    ratings: RatingBook,
    market: Marketplace,
    ids: TxIdAllocator,
    nodes: [Node; 3],
    mempool: Vec<crate::ledger::TxEnvelope>,
    carriers: BTreeMap<AccountId, CarrierAgent>,
    offers: BTreeMap<String, Offer>,
    queue: BTreeMap<QueueKey, SimEvent>,
    seq: u64,
    one_shots: usize,
    rng: ChaCha8Rng,
    log: EventLog,
}

impl World {
    /// Registers every account at t=0 and seeds the event queue.
    pub fn new(scenario: Scenario) -> Result<Self, SimError> {
        scenario.validate().map_err(|e| SimError::Invalid(e.to_string()))?;
        let seed = scenario.config.seed;
        let cfg = scenario.config.pricing();
        let mut directory = Directory::new();
        let mut registrations = Vec::new();
        let system = AccountId::system();
        let accounts = scenario
            .accounts
            .iter()
            .map(|a| (a.id.clone(), a.role, a.balance, a.home))
            .chain(std::iter::once((system, Role::System, 0, None)));
        for (id, role, balance, home) in accounts {
            directory.register(id.clone(), role, Secret::derive(seed, &id), 0, home)?;
            registrations.push((id, RegisterPayload { role, initial_balance: balance, home }));
        }

        let routes: BTreeMap<&AccountId, &CarrierRoute> =
            scenario.carrier_routes.iter().map(|r| (&r.carrier, r)).collect();
        let carriers = scenario
            .accounts
            .iter()
            .filter(|a| a.role == Role::Carrier)
            .map(|a| {
                let route = routes.get(&a.id).map(|r| (*r).clone());
                let policy = route.as_ref().map_or(AcceptPolicy::Never, |r| r.accept_policy);
                (a.id.clone(), CarrierAgent { route, policy, job: None, parked: None, status: None })
            })
            .collect();

        let nodes = NodeId::ALL.map(|id| Node { id, role: id.role(), inbox: VecDeque::new() });
        let mut world = World {
            market: Marketplace::new(scenario.products.clone(), cfg.clone()),
            cfg,
            clock: 0,
            directory,
            chain: Chain::new(),
            live: ContractState::new(),
            sealed: ContractState::new(),
            ratings: RatingBook::new(),
            ids: TxIdAllocator::new(),
            nodes,
            mempool: Vec::new(),
            carriers,
            offers: BTreeMap::new(),
            queue: BTreeMap::new(),
            seq: 0,
            one_shots: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            log: EventLog::default(),
            scenario,
        };
        for (id, payload) in registrations {
            let tx = world.ids.draft(&id, 0, TxPayload::Register(payload));
            world.submit(tx)?;
        }
        for i in 0..world.scenario.order_events.len() {
            let o = &world.scenario.order_events[i];
            let (t, subject) = (o.time, o.consumer.to_string());
            world.schedule(t, subject, SimEvent::Placement(i));
        }
        world.schedule(0, String::new(), SimEvent::Movement);
        world.schedule(world.cfg.block_period_s, String::new(), SimEvent::Sealing);
        Ok(world)
    }

    pub fn clock(&self) -> SimTime {
        self.clock
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn directory(&self) -> &Directory {
        &self.directory
    }

    pub fn events(&self) -> &EventLog {
        &self.log
    }

    pub fn sealed_state(&self) -> &ContractState {
        &self.sealed
    }

    pub fn live_state(&self) -> &ContractState {
        &self.live
    }

    pub fn nodes(&self) -> &[Node; 3] {
        &self.nodes
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    pub fn metrics(&self) -> Metrics {
        Metrics::from_state(&self.sealed, &self.chain)
    }

    fn schedule(&mut self, t: SimTime, subject: String, ev: SimEvent) {
        if !ev.is_periodic() {
            self.one_shots += 1;
        }
        self.seq += 1;
        self.queue.insert((t, ev.rank(), subject, self.seq), ev);
    }

    fn work_remains(&self) -> bool {
        self.one_shots > 0 || !self.mempool.is_empty() || self.carriers.values().any(|c| c.job.is_some())
    }

    fn keep_ticking(&self, next: SimTime) -> bool {
        next <= self.scenario.duration_s || self.work_remains()
    }

    /// Dequeues and applies the earliest event. Returns false once the queue
    /// is empty.
    pub fn step(&mut self) -> Result<bool, SimError> {
        let Some(((t, _, _, _), ev)) = self.queue.pop_first() else {
            return Ok(false);
        };
        debug_assert!(t >= self.clock, "clock moves forward");
        self.clock = t;
        if !ev.is_periodic() {
            self.one_shots -= 1;
        }
        match ev {
            SimEvent::Movement => self.on_movement(),
            SimEvent::Placement(i) => self.on_placement(i)?,
            SimEvent::AcceptanceRound => self.on_acceptance_round()?,
            SimEvent::Handover(sid) => self.on_handover(&sid)?,
            SimEvent::Delivery(sid) => self.on_delivery(&sid)?,
            SimEvent::Finalize(sid) => self.on_finalize(&sid)?,
            SimEvent::Review(sid) => self.on_review(&sid)?,
            SimEvent::Expiry(_) => self.on_expiry()?,
            SimEvent::Propagation { node, tx_id } => self.on_propagation(node, &tx_id),
            SimEvent::Sealing => self.on_sealing()?,
        }
        Ok(true)
    }

    pub fn run_to_end(&mut self) -> Result<(), SimError> {
        while self.step()? {}
        if self.live != self.sealed {
            return Err(SimError::Invalid("live and sealed contract state diverged".into()));
        }
        Ok(())
    }

    fn submit(&mut self, tx: UnsignedTx) -> Result<(), SimError> {
        let now = self.clock;
        let env = authenticate_tx(tx, &self.directory)?;
        let emitted = self.live.apply(&env).map_err(|source| SimError::ContractAbort {
            tx_id: env.tx_id().to_string(),
            suborder_id: env.payload().suborder_id().map(str::to_string),
            source,
        })?;
        let node = NodeId::for_kind(env.kind());
        self.log.push(Event::new(
            now,
            EventKind::TxIngested,
            env.payload().suborder_id(),
            format!("tx={} node={} kind={}", env.tx_id(), node, env.kind().name()),
        ));
        self.log.extend(emitted);
        let tx_id = env.tx_id().to_string();
        self.nodes[node.index()].inbox.push_back(env);
        let at = now + self.scenario.config.propagation_delay_s;
        self.schedule(at, tx_id.clone(), SimEvent::Propagation { node, tx_id });
        Ok(())
    }

    fn on_propagation(&mut self, node: NodeId, tx_id: &str) {
        let inbox = &mut self.nodes[node.index()].inbox;
        let pos = inbox.iter().position(|t| t.tx_id() == tx_id).expect("propagated tx is in its inbox");
        let env = inbox.remove(pos).expect("position is in range");
        self.mempool.push(env);
    }

    fn on_sealing(&mut self) -> Result<(), SimError> {
        let now = self.clock;
        if !self.mempool.is_empty() {
            let pending = std::mem::take(&mut self.mempool);
            for env in &pending {
                self.sealed.apply(env).map_err(|source| SimError::ContractAbort {
                    tx_id: env.tx_id().to_string(),
                    suborder_id: env.payload().suborder_id().map(str::to_string),
                    source,
                })?;
                if let TxPayload::Review(r) = env.payload() {
                    self.ratings.record(&r.ratee, r.stars);
                }
            }
            let sealer = next_sealer(&self.chain, &self.directory)?;
            let block = self.chain.seal(pending, &sealer, now, &self.directory)?;
            let detail = format!("index={} sealer={} txs={}", block.index, block.sealer, block.txs.len());
            self.log.push(Event::new(now, EventKind::BlockSealed, None, detail));
        }
        let next = now + self.cfg.block_period_s;
        if self.keep_ticking(next) {
            self.schedule(next, String::new(), SimEvent::Sealing);
        }
        Ok(())
    }

    fn on_movement(&mut self) {
        let now = self.clock;
        let geofence = self.scenario.config.geofence_m;
        let mut arrivals = Vec::new();
        for (id, agent) in self.carriers.iter_mut() {
            let Some(pos) = agent.position(now) else { continue };
            match &mut agent.status {
                Some(s) => {
                    s.report(pos, now);
                }
                None => agent.status = Some(CarrierStatus::new(id.clone(), pos, now)),
            }
            if let Some(job) = agent.job.as_mut() {
                if job.leg.is_some() && !job.delivery_scheduled && haversine_distance(pos, job.consumer) <= geofence {
                    job.delivery_scheduled = true;
                    arrivals.push(job.suborder_id.clone());
                }
            }
        }
        for sid in arrivals {
            self.schedule(now, sid.clone(), SimEvent::Delivery(sid));
        }
        self.schedule(now, String::new(), SimEvent::AcceptanceRound);
    }

    fn on_placement(&mut self, i: usize) -> Result<(), SimError> {
        let now = self.clock;
        let order = self.scenario.order_events[i].clone();
        let placed = self.market.place_order(
            &order.consumer,
            &order.items,
            order.ttl_s,
            now,
            &self.directory,
            &self.live,
            &mut self.ids,
        );
        let placed = match placed {
            Ok(p) => p,
            Err(e) => {
                let detail = format!("consumer={} reason={}", order.consumer, e);
                self.log.push(Event::new(now, EventKind::OrderRejected, None, detail));
                return Ok(());
            }
        };
        for tx in placed.txs {
            self.submit(tx)?;
        }
        for sub in &placed.suborders {
            self.offers.insert(sub.suborder_id.clone(), Offer::for_suborder(sub));
            self.schedule(sub.deadline(), sub.suborder_id.clone(), SimEvent::Expiry(sub.suborder_id.clone()));
        }
        Ok(())
    }

    fn on_acceptance_round(&mut self) -> Result<(), SimError> {
        let now = self.clock;
        let mut attempts = Vec::new();
        let mut statuses = BTreeMap::new();
        for (id, agent) in self.carriers.iter_mut() {
            let Some(status) = agent.status.as_mut() else { continue };
            status.rating_centi = self.ratings.get(id).map(|r| r.rating_centi);
            status.completed_deliveries = self.sealed.completed_deliveries.get(id).copied().unwrap_or(0);
            statuses.insert(id.clone(), status.clone());
            if agent.job.is_some() {
                continue;
            }
            let Some(offer) = eligible_offers(status, self.offers.values(), now, &self.cfg).first().copied() else {
                continue;
            };
            let willing = match agent.policy {
                AcceptPolicy::Always => true,
                AcceptPolicy::Never => false,
                AcceptPolicy::ProbabilityPpm(ppm) => self.rng.gen_range(0..1_000_000) < ppm,
            };
            if !willing {
                continue;
            }
            let sub = self.live.suborder(&offer.suborder_id).expect("offers track live suborders");
            if check_acceptance(status, sub, offer.vendor_location, now, &self.cfg).is_ok() {
                attempts.push(AcceptanceAttempt {
                    carrier: id.clone(),
                    suborder_id: offer.suborder_id.clone(),
                    attempted_at: now,
                });
            }
        }

        for (sid, res) in resolve_conflicts(&attempts, &statuses) {
            let status = &statuses[&res.winner];
            let payload = OrderAcceptedPayload {
                suborder_id: sid.clone(),
                carrier_location: status.location,
                location_reported_at: status.reported_at,
            };
            let tx = self.ids.draft(&res.winner, now, TxPayload::OrderAccepted(payload));
            self.submit(tx)?;
            for loser in &res.losers {
                self.log.push(Event::new(now, EventKind::Lost, Some(&sid), format!("carrier={} winner={}", loser, res.winner)));
            }
            self.offers.remove(&sid);

            let sub = self.live.suborder(&sid).expect("just accepted").clone();
            let speed = self.scenario.config.carrier_speed_mps;
            let arrive_vendor_t = now + travel_time(status.location, sub.vendor_location, speed);
            let handover_t = arrive_vendor_t.max(now + self.scenario.prep_time(&sub.vendor));
            let job = Job {
                suborder_id: sid.clone(),
                start: status.location,
                start_t: now,
                vendor: sub.vendor_location,
                arrive_vendor_t,
                consumer: sub.consumer_location,
                leg: None,
                delivery_scheduled: false,
            };
            self.carriers.get_mut(&res.winner).expect("winner is a carrier").job = Some(job);
            self.schedule(handover_t, sid.clone(), SimEvent::Handover(sid));
        }

        let next = now + self.cfg.location_update_period_s;
        if self.keep_ticking(next) {
            self.schedule(next, String::new(), SimEvent::Movement);
        }
        Ok(())
    }

    fn on_handover(&mut self, sid: &str) -> Result<(), SimError> {
        let now = self.clock;
        let sub = self.live.suborder(sid).expect("handover of a known suborder").clone();
        let tx = self.ids.draft(&sub.vendor, now, TxPayload::ProducerHandover(SubOrderRef { suborder_id: sid.into() }));
        self.submit(tx)?;
        let carrier = sub.assigned_carrier.expect("accepted suborder has a carrier");
        let speed = self.scenario.config.carrier_speed_mps;
        let job = self.carriers.get_mut(&carrier).and_then(|c| c.job.as_mut()).expect("carrier is on this job");
        job.leg = Some((now, now + travel_time(job.vendor, job.consumer, speed)));
        Ok(())
    }

    fn on_delivery(&mut self, sid: &str) -> Result<(), SimError> {
        let now = self.clock;
        let sub = self.live.suborder(sid).expect("delivery of a known suborder").clone();
        let carrier = sub.assigned_carrier.clone().expect("handed-over suborder has a carrier");
        let handed_over_at = sub.handed_over_at.expect("handed over");
        let bill = make_bill(&sub, handed_over_at, now, sub.vendor_location, sub.consumer_location).map_err(|source| {
            SimError::ContractAbort { tx_id: "-".into(), suborder_id: Some(sid.into()), source }
        })?;
        let tx = self.ids.draft(&carrier, now, TxPayload::Delivery(DeliveryPayload { suborder_id: sid.into(), bill }));
        self.submit(tx)?;
        let agent = self.carriers.get_mut(&carrier).expect("carrier agent");
        agent.job = None;
        agent.parked = Some(sub.consumer_location);
        let at = now + self.scenario.config.finalize_delay_s;
        self.schedule(at, sid.into(), SimEvent::Finalize(sid.into()));
        Ok(())
    }

    fn on_finalize(&mut self, sid: &str) -> Result<(), SimError> {
        let now = self.clock;
        let consumer = self.live.suborder(sid).expect("known suborder").consumer.clone();
        let tx = self.ids.draft(&consumer, now, TxPayload::CustomerFinalize(SubOrderRef { suborder_id: sid.into() }));
        self.submit(tx)?;
        let ppm = self.scenario.config.review_probability_ppm;
        if ppm > 0 && self.rng.gen_range(0..1_000_000) < ppm {
            let at = now + self.scenario.config.review_delay_s;
            self.schedule(at, sid.into(), SimEvent::Review(sid.into()));
        }
        Ok(())
    }

    fn on_review(&mut self, sid: &str) -> Result<(), SimError> {
        let now = self.clock;
        let sub = self.live.suborder(sid).expect("known suborder").clone();
        let carrier = sub.assigned_carrier.clone().expect("finalized suborder has a carrier");
        for ratee in [carrier, sub.vendor.clone()] {
            let review = Review {
                rater: sub.consumer.clone(),
                ratee,
                suborder_id: sid.into(),
                stars: self.rng.gen_range(1..=5),
                submitted_at: now,
                body: String::new(),
            };
            match review_tx(&self.sealed, &review, &mut self.ids) {
                Ok(tx) => self.submit(tx)?,
                Err(e) => {
                    let detail = format!("ratee={} reason={}", review.ratee, e);
                    self.log.push(Event::new(now, EventKind::ReviewRejected, Some(sid), detail));
                }
            }
        }
        Ok(())
    }

    fn on_expiry(&mut self) -> Result<(), SimError> {
        let now = self.clock;
        for tx in expire_orders(&self.live, now, &mut self.ids) {
            if let Some(sid) = tx.payload.suborder_id() {
                self.offers.remove(sid);
            }
            self.submit(tx)?;
        }
        Ok(())
    }
}
