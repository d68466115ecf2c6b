//! Blocks, the hash-linked chain, round-robin sealing and validation.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::canonical::{canonical_serialize, sha256_hex};
use super::directory::{AccountId, Directory};
use super::tx::{verify_tx, TxEnvelope};
use super::LedgerError;
use crate::SimTime;

pub const ZERO_HASH: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub index: u64,
    pub timestamp: SimTime,
    pub prev_hash: String,
    pub sealer: AccountId,
    pub txs: Vec<TxEnvelope>,
    pub hash: String,
}

#[derive(Serialize)]
struct HashedFields<'a> {
    index: u64,
    timestamp: SimTime,
    prev_hash: &'a str,
    sealer: &'a AccountId,
    txs: &'a [TxEnvelope],
}

impl Block {
    /// SHA-256 over the canonical form of every field except `hash`.
    pub fn compute_hash(&self) -> Result<String, LedgerError> {
        let bytes = canonical_serialize(&HashedFields {
            index: self.index,
            timestamp: self.timestamp,
            prev_hash: &self.prev_hash,
            sealer: &self.sealer,
            txs: &self.txs,
        })?;
        Ok(sha256_hex(&bytes))
    }

    pub fn genesis() -> Block {
        let mut block = Block {
            index: 0,
            timestamp: 0,
            prev_hash: ZERO_HASH.to_string(),
            sealer: AccountId::genesis(),
            txs: Vec::new(),
            hash: String::new(),
        };
        block.hash = block.compute_hash().expect("genesis is integer-only");
        block
    }

    /// One ledger-file line (without the trailing newline).
    pub fn to_canonical_line(&self) -> String {
        let bytes = canonical_serialize(self).expect("blocks contain only integers and strings");
        String::from_utf8(bytes).expect("canonical output is UTF-8")
    }
}

/// Failure codes reported by [`validate_chain`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailureCode {
    HashMismatch,
    LinkBroken,
    BadSealer,
    BadAuthTag,
    DuplicateTx,
    BadGenesis,
}

impl fmt::Display for FailureCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub valid: bool,
    pub first_bad_index: Option<u64>,
    pub reason: Option<FailureCode>,
}

impl ValidationReport {
    fn ok() -> Self {
        Self { valid: true, first_bad_index: None, reason: None }
    }

    fn bad(index: u64, reason: FailureCode) -> Self {
        Self { valid: false, first_bad_index: Some(index), reason: Some(reason) }
    }
}

/// Append-only sequence of blocks rooted at the fixed genesis block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chain {
    blocks: Vec<Block>,
    tx_ids: HashSet<String>,
}

impl Default for Chain {
    fn default() -> Self {
        Self::new()
    }
}

impl Chain {
    pub fn new() -> Self {
        Self { blocks: vec![Block::genesis()], tx_ids: HashSet::new() }
    }

    /// Wraps blocks read from storage without checking them; run
    /// [`validate_chain`] before trusting the result.
    pub fn from_blocks_unchecked(blocks: Vec<Block>) -> Self {
        let tx_ids = blocks.iter().flat_map(|b| b.txs.iter().map(|t| t.tx_id().to_string())).collect();
        Self { blocks, tx_ids }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn tip(&self) -> Option<&Block> {
        self.blocks.last()
    }

    /// Index of the tip block; 0 for a genesis-only chain.
    pub fn height(&self) -> u64 {
        self.tip().map_or(0, |b| b.index)
    }

    pub fn tx_count(&self) -> usize {
        self.blocks.iter().map(|b| b.txs.len()).sum()
    }

    pub fn contains_tx(&self, tx_id: &str) -> bool {
        self.tx_ids.contains(tx_id)
    }

    pub fn transactions(&self) -> impl Iterator<Item = (&Block, &TxEnvelope)> {
        self.blocks.iter().flat_map(|b| b.txs.iter().map(move |t| (b, t)))
    }

    /// Returns a chain made of the first `len` blocks.
    pub fn prefix(&self, len: usize) -> Chain {
        Chain::from_blocks_unchecked(self.blocks[..len.min(self.blocks.len())].to_vec())
    }

    /// Seals `pending` as the next block and appends it.
    pub fn seal(
        &mut self,
        pending: Vec<TxEnvelope>,
        sealer: &AccountId,
        now: SimTime,
        directory: &Directory,
    ) -> Result<&Block, LedgerError> {
        let block = seal_block(pending, self, directory, sealer, now)?;
        self.tx_ids.extend(block.txs.iter().map(|t| t.tx_id().to_string()));
        self.blocks.push(block);
        Ok(self.blocks.last().expect("just pushed"))
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for block in &self.blocks {
            out.write_all(block.to_canonical_line().as_bytes())?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    /// Ledger-file bytes: one canonical block per line, `\n` terminated.
    pub fn to_ledger_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Chain, LedgerError> {
        let mut blocks = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| LedgerError::Parse { line: i + 1, message: e.to_string() })?;
            let block: Block = serde_json::from_str(&line)
                .map_err(|e| LedgerError::Parse { line: i + 1, message: e.to_string() })?;
            blocks.push(block);
        }
        Ok(Chain::from_blocks_unchecked(blocks))
    }
}

fn sealer_for_index<'a>(sealers: &[&'a AccountId], index: u64) -> Option<&'a AccountId> {
    if sealers.is_empty() {
        None
    } else {
        Some(sealers[(index % sealers.len() as u64) as usize])
    }
}

/// Round-robin pick of the sealer for the block after the current tip.
pub fn next_sealer(chain: &Chain, directory: &Directory) -> Result<AccountId, LedgerError> {
    sealer_for_index(&directory.sealers(), chain.height() + 1)
        .cloned()
        .ok_or(LedgerError::NoSealers)
}

/// Builds (but does not append) the next block over `pending`, in order.
pub fn seal_block(
    pending: Vec<TxEnvelope>,
    chain: &Chain,
    directory: &Directory,
    sealer: &AccountId,
    now: SimTime,
) -> Result<Block, LedgerError> {
    if pending.is_empty() {
        return Err(LedgerError::EmptyBlock);
    }
    let expected = next_sealer(chain, directory)?;
    if &expected != sealer {
        return Err(LedgerError::BadSealer { expected, got: sealer.clone() });
    }
    let mut seen = HashSet::new();
    for tx in &pending {
        if !verify_tx(tx, directory) {
            return Err(LedgerError::BadAuthTag(tx.tx_id().to_string()));
        }
        if chain.contains_tx(tx.tx_id()) || !seen.insert(tx.tx_id()) {
            return Err(LedgerError::DuplicateTx(tx.tx_id().to_string()));
        }
    }
    let tip = chain.tip().ok_or(LedgerError::MissingGenesis)?;
    let mut block = Block {
        index: tip.index + 1,
        timestamp: now,
        prev_hash: tip.hash.clone(),
        sealer: sealer.clone(),
        txs: pending,
        hash: String::new(),
    };
    block.hash = block.compute_hash()?;
    Ok(block)
}

/// Checks genesis, hashes, links, sealer rotation, auth tags and tx-id
/// uniqueness, reporting the lowest failing block index.
///
/// A block whose stored `hash` disagrees with its recomputed hash, while its
/// successor still links to the recomputed value, has had only its `hash`
/// field altered. That is reported as a broken link at the successor, the
/// first place where the recorded linkage is wrong.
pub fn validate_chain(chain: &Chain, directory: &Directory) -> ValidationReport {
    let blocks = chain.blocks();
    match blocks.first() {
        Some(b) if *b == Block::genesis() => {}
        _ => return ValidationReport::bad(0, FailureCode::BadGenesis),
    }
    let sealers = directory.sealers();
    let mut seen = HashSet::new();
    for i in 1..blocks.len() {
        let block = &blocks[i];
        let idx = i as u64;
        let recomputed = match block.compute_hash() {
            Ok(h) => h,
            Err(_) => return ValidationReport::bad(idx, FailureCode::HashMismatch),
        };
        if recomputed != block.hash {
            let successor_commits_to_content = blocks.get(i + 1).is_some_and(|next| next.prev_hash == recomputed);
            if !successor_commits_to_content {
                return ValidationReport::bad(idx, FailureCode::HashMismatch);
            }
        }
        if block.index != idx || block.prev_hash != blocks[i - 1].hash {
            return ValidationReport::bad(idx, FailureCode::LinkBroken);
        }
        if sealer_for_index(&sealers, idx) != Some(&block.sealer) {
            return ValidationReport::bad(idx, FailureCode::BadSealer);
        }
        if block.txs.iter().any(|tx| !verify_tx(tx, directory)) {
            return ValidationReport::bad(idx, FailureCode::BadAuthTag);
        }
        for tx in &block.txs {
            if !seen.insert(tx.tx_id()) {
                return ValidationReport::bad(idx, FailureCode::DuplicateTx);
            }
        }
    }
    ValidationReport::ok()
}
