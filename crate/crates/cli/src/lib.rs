//! Command implementations behind the `courier-chain` binary. Each command
//! returns a [`CommandOutcome`] instead of exiting, so tests can drive them
//! directly.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use courier_chain::contracts::ContractState;
use courier_chain::ledger::{canonical_value_bytes, validate_chain, Chain, Directory, TxPayload};
use courier_chain::simnet::{load_scenario, run_simulation, ScenarioError, SimError, DIRECTORY_FILE};
use serde_json::Value;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_BAD_INPUT: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandOutcome {
    pub exit_code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl CommandOutcome {
    fn ok(stdout: String) -> Self {
        Self { exit_code: EXIT_OK, stdout, stderr: String::new() }
    }

    fn fail(exit_code: i32, stderr: impl Into<String>) -> Self {
        Self { exit_code, stdout: String::new(), stderr: stderr.into() }
    }

    fn bad_input(stderr: impl Into<String>) -> Self {
        Self::fail(EXIT_BAD_INPUT, stderr)
    }
}

pub fn cmd_run(scenario_path: &Path, seed: Option<u64>, out_dir: &Path) -> CommandOutcome {
    let mut scenario = match load_scenario(scenario_path) {
        Ok(s) => s,
        Err(e @ ScenarioError::Io { .. }) => return CommandOutcome::bad_input(e.to_string()),
        Err(e) => return CommandOutcome::bad_input(format!("{}: {e}", scenario_path.display())),
    };
    if let Some(seed) = seed {
        scenario.config.seed = seed;
    }
    let output = match run_simulation(scenario) {
        Ok(o) => o,
        Err(e @ SimError::Invalid(_)) => return CommandOutcome::bad_input(e.to_string()),
        Err(e) => return CommandOutcome::fail(EXIT_RUNTIME, e.to_string()),
    };
    let written = match output.write_to_dir(out_dir) {
        Ok(w) => w,
        Err(e) => return CommandOutcome::fail(EXIT_RUNTIME, e.to_string()),
    };
    let mut stdout = output.metrics_csv();
    for path in written {
        let _ = writeln!(stdout, "wrote {}", path.display());
    }
    CommandOutcome::ok(stdout)
}

fn read_chain(path: &Path) -> Result<Chain, CommandOutcome> {
    let file = File::open(path).map_err(|e| CommandOutcome::bad_input(format!("cannot read {}: {e}", path.display())))?;
    Chain::read_from(BufReader::new(file)).map_err(|e| CommandOutcome::bad_input(format!("{}: {e}", path.display())))
}

/// The directory file next to `ledger` unless one is given explicitly.
fn directory_path(ledger: &Path, explicit: Option<&Path>) -> PathBuf {
    explicit.map(Path::to_path_buf).unwrap_or_else(|| {
        ledger.parent().unwrap_or_else(|| Path::new(".")).join(DIRECTORY_FILE)
    })
}

fn read_directory(path: &Path) -> Result<Directory, CommandOutcome> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CommandOutcome::bad_input(format!("cannot read directory {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CommandOutcome::bad_input(format!("{}: {e}", path.display())))?;
    Directory::from_json(&value).map_err(|e| CommandOutcome::bad_input(format!("{}: {e}", path.display())))
}

pub fn cmd_validate(ledger: &Path, directory: Option<&Path>) -> CommandOutcome {
    let chain = match read_chain(ledger) {
        Ok(c) => c,
        Err(o) => return o,
    };
    let dir = match read_directory(&directory_path(ledger, directory)) {
        Ok(d) => d,
        Err(o) => return o,
    };
    let report = validate_chain(&chain, &dir);
    match (report.first_bad_index, report.reason) {
        (Some(at), Some(reason)) => CommandOutcome {
            exit_code: EXIT_INVALID,
            stdout: format!("INVALID at={at} reason={reason}\n"),
            stderr: String::new(),
        },
        _ => CommandOutcome::ok(format!("VALID height={}\n", chain.height())),
    }
}

/// Path of the copy written by [`cmd_tamper`].
pub fn tampered_path(ledger: &Path) -> PathBuf {
    let mut name = ledger.as_os_str().to_owned();
    name.push(".tampered");
    PathBuf::from(name)
}

fn leaf_mut<'a>(root: &'a mut Value, field: &str) -> Option<&'a mut Value> {
    field.split('.').try_fold(root, |node, key| match node {
        Value::Object(map) => map.get_mut(key),
        Value::Array(items) => key.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
        _ => None,
    })
}

/// Rewrites one scalar of one block without touching any hash.
pub fn cmd_tamper(ledger: &Path, block: u64, field: &str, value: &str) -> CommandOutcome {
    if block == 0 {
        return CommandOutcome::bad_input("block 0 is the fixed genesis block and cannot be tampered");
    }
    let text = match std::fs::read_to_string(ledger) {
        Ok(t) => t,
        Err(e) => return CommandOutcome::bad_input(format!("cannot read {}: {e}", ledger.display())),
    };
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let Some(line) = lines.get_mut(block as usize) else {
        return CommandOutcome::bad_input(format!("no block {block}; ledger has {} blocks", text.lines().count()));
    };
    let mut parsed: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => return CommandOutcome::bad_input(format!("block {block} does not parse: {e}")),
    };
    let Some(slot) = leaf_mut(&mut parsed, field) else {
        return CommandOutcome::bad_input(format!("block {block} has no field {field}"));
    };
    let replacement = match slot {
        Value::Number(_) => match value.parse::<u64>().map(Value::from).or_else(|_| value.parse::<i64>().map(Value::from)) {
            Ok(v) => v,
            Err(_) => return CommandOutcome::bad_input(format!("{field} is an integer; got {value:?}")),
        },
        Value::String(_) => Value::String(value.to_string()),
        Value::Bool(_) => match value.parse::<bool>() {
            Ok(b) => Value::Bool(b),
            Err(_) => return CommandOutcome::bad_input(format!("{field} is a boolean; got {value:?}")),
        },
        _ => return CommandOutcome::bad_input(format!("{field} is not a scalar field")),
    };
    *slot = replacement;
    let bytes = canonical_value_bytes(&parsed).expect("tampered block still holds only integers");
    *line = String::from_utf8(bytes).expect("canonical output is UTF-8");

    let out = tampered_path(ledger);
    let mut body = lines.join("\n");
    body.push('\n');
    if let Err(e) = std::fs::write(&out, body) {
        return CommandOutcome::fail(EXIT_RUNTIME, format!("writing {}: {e}", out.display()));
    }
    CommandOutcome::ok(format!("wrote {}\n", out.display()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InspectTarget {
    Block(u64),
    Order(String),
}

pub fn cmd_inspect(ledger: &Path, target: &InspectTarget) -> CommandOutcome {
    let chain = match read_chain(ledger) {
        Ok(c) => c,
        Err(o) => return o,
    };
    match target {
        InspectTarget::Block(n) => match chain.blocks().get(*n as usize) {
            Some(b) => CommandOutcome::ok(format!("{}\n", b.to_canonical_line())),
            None => CommandOutcome::bad_input(format!("no block {n}; height is {}", chain.height())),
        },
        InspectTarget::Order(id) => inspect_order(&chain, id),
    }
}

/// One line per transaction touching `suborder_id`, in chain order, with the
/// suborder's state after that transaction.
fn inspect_order(chain: &Chain, suborder_id: &str) -> CommandOutcome {
    let mut state = ContractState::new();
    let mut out = String::new();
    for (block, tx) in chain.transactions() {
        if let Err(e) = state.apply(tx) {
            return CommandOutcome::fail(EXIT_INVALID, format!("replay failed at tx {}: {e}", tx.tx_id()));
        }
        if tx.payload().suborder_id() != Some(suborder_id) {
            continue;
        }
        let sub = state.suborder(suborder_id).expect("suborder exists once a tx refers to it");
        let _ = write!(
            out,
            "block={} t={} tx={} kind={} author={} state={:?}",
            block.index,
            tx.created_at(),
            tx.tx_id(),
            tx.kind().name(),
            tx.author(),
            sub.state
        );
        if let TxPayload::Review(r) = tx.payload() {
            let _ = write!(out, " ratee={} stars={}", r.ratee, r.stars);
        }
        out.push('\n');
    }
    if out.is_empty() {
        return CommandOutcome::bad_input(format!("suborder {suborder_id} not found"));
    }
    CommandOutcome::ok(out)
}
