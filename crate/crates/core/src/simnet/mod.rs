//! Deterministic discrete-event simulation of the marketplace over three
//! ingest nodes and a round-robin sealer set.
//!
//! Transactions enter at the node responsible for their kind, reach the
//! shared mempool after a fixed propagation delay, and are sealed at every
//! block tick. Carriers report positions on the location cadence; each
//! report tick ends with a batched acceptance round.

mod metrics;
mod scenario;
pub mod synth;
mod world;

use std::path::{Path, PathBuf};

pub use metrics::Metrics;
pub use scenario::{
    load_scenario, parse_scenario, AcceptPolicy, AccountSpec, CarrierRoute, OrderEvent, Scenario, ScenarioError,
    SimConfig, Waypoint,
};
pub use world::{Node, NodeId, NodeRole, Rank, World};

use crate::contracts::{ContractError, ContractState, EventLog};
use crate::ledger::{Chain, Directory, LedgerError};

pub const LEDGER_FILE: &str = "ledger.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const EVENTS_FILE: &str = "events.log";
pub const DIRECTORY_FILE: &str = "directory.json";

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("contract rejected tx {tx_id} (suborder {}): {source}", suborder_id.as_deref().unwrap_or("-"))]
    ContractAbort { tx_id: String, suborder_id: Option<String>, source: ContractError },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("writing {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub chain: Chain,
    pub directory: Directory,
    pub events: EventLog,
    pub metrics: Metrics,
}

impl RunOutput {
    pub fn ledger_bytes(&self) -> Vec<u8> {
        self.chain.to_ledger_bytes()
    }

    pub fn metrics_csv(&self) -> String {
        self.metrics.to_csv()
    }

    pub fn events_bytes(&self) -> Vec<u8> {
        self.events.to_bytes()
    }

    pub fn directory_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.directory.to_json()).expect("directory is plain JSON");
        s.push('\n');
        s
    }

    /// Writes the ledger, metrics, event log and directory into `dir`,
    /// creating it if needed.
    pub fn write_to_dir(&self, dir: &Path) -> Result<Vec<PathBuf>, SimError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| SimError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let files: [(&str, Vec<u8>); 4] = [
            (LEDGER_FILE, self.ledger_bytes()),
            (METRICS_FILE, self.metrics_csv().into_bytes()),
            (EVENTS_FILE, self.events_bytes()),
            (DIRECTORY_FILE, self.directory_json().into_bytes()),
        ];
        let mut written = Vec::new();
        for (name, bytes) in files {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(io(&path))?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Runs `scenario` until the event queue drains.
pub fn run_simulation(scenario: Scenario) -> Result<RunOutput, SimError> {
    let mut world = World::new(scenario)?;
    world.run_to_end()?;
    Ok(RunOutput {
        metrics: world.metrics(),
        chain: world.chain().clone(),
        directory: world.directory().clone(),
        events: world.events().clone(),
    })
}

/// Metrics recomputed from nothing but a ledger.
pub fn recount_metrics(chain: &Chain) -> Result<Metrics, (String, ContractError)> {
    let (state, _) = ContractState::replay(chain)?;
    Ok(Metrics::from_state(&state, chain))
}
