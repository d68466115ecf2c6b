//! Ledger transactions and their authentication tags.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::canonical::canonical_serialize;
use super::directory::{AccountId, Directory, Role};
use super::LedgerError;
use crate::contracts::Bill;
use crate::dispatch::GeoPoint;
use crate::{Money, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TxKind {
    Register,
    OrderPlaced,
    OrderAccepted,
    ProducerHandover,
    Delivery,
    CustomerFinalize,
    OrderExpired,
    Review,
}

impl TxKind {
    pub const ALL: [TxKind; 8] = [
        TxKind::Register,
        TxKind::OrderPlaced,
        TxKind::OrderAccepted,
        TxKind::ProducerHandover,
        TxKind::Delivery,
        TxKind::CustomerFinalize,
        TxKind::OrderExpired,
        TxKind::Review,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TxKind::Register => "Register",
            TxKind::OrderPlaced => "OrderPlaced",
            TxKind::OrderAccepted => "OrderAccepted",
            TxKind::ProducerHandover => "ProducerHandover",
            TxKind::Delivery => "Delivery",
            TxKind::CustomerFinalize => "CustomerFinalize",
            TxKind::OrderExpired => "OrderExpired",
            TxKind::Review => "Review",
        }
    }
}

impl fmt::Display for TxKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderLine {
    pub product_id: String,
    pub quantity: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterPayload {
    pub role: Role,
    pub initial_balance: Money,
    pub home: Option<GeoPoint>,
}

/// Everything needed to reconstruct a suborder from the chain alone.
/// The placement time is the transaction's `created_at`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderPlacedPayload {
    pub suborder_id: String,
    pub parent_order_id: String,
    pub consumer: AccountId,
    pub vendor: AccountId,
    pub items: Vec<OrderLine>,
    pub items_cost: Money,
    pub shipping_fee: Money,
    pub ttl_s: u64,
    pub vendor_location: GeoPoint,
    pub consumer_location: GeoPoint,
}

/// Acceptance carries the carrier's last reported fix so radius compliance
/// can be audited from the chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderAcceptedPayload {
    pub suborder_id: String,
    pub carrier_location: GeoPoint,
    pub location_reported_at: SimTime,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubOrderRef {
    pub suborder_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryPayload {
    pub suborder_id: String,
    pub bill: Bill,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewPayload {
    pub suborder_id: String,
    pub ratee: AccountId,
    pub stars: u8,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum TxPayload {
    Register(RegisterPayload),
    OrderPlaced(OrderPlacedPayload),
    OrderAccepted(OrderAcceptedPayload),
    ProducerHandover(SubOrderRef),
    Delivery(DeliveryPayload),
    CustomerFinalize(SubOrderRef),
    OrderExpired(SubOrderRef),
    Review(ReviewPayload),
}

impl TxPayload {
    pub fn kind(&self) -> TxKind {
        match self {
            TxPayload::Register(_) => TxKind::Register,
            TxPayload::OrderPlaced(_) => TxKind::OrderPlaced,
            TxPayload::OrderAccepted(_) => TxKind::OrderAccepted,
            TxPayload::ProducerHandover(_) => TxKind::ProducerHandover,
            TxPayload::Delivery(_) => TxKind::Delivery,
            TxPayload::CustomerFinalize(_) => TxKind::CustomerFinalize,
            TxPayload::OrderExpired(_) => TxKind::OrderExpired,
            TxPayload::Review(_) => TxKind::Review,
        }
    }

    /// The suborder a lifecycle transaction refers to; `None` for `Register`.
    pub fn suborder_id(&self) -> Option<&str> {
        match self {
            TxPayload::Register(_) => None,
            TxPayload::OrderPlaced(p) => Some(&p.suborder_id),
            TxPayload::OrderAccepted(p) => Some(&p.suborder_id),
            TxPayload::ProducerHandover(p) | TxPayload::CustomerFinalize(p) | TxPayload::OrderExpired(p) => {
                Some(&p.suborder_id)
            }
            TxPayload::Delivery(p) => Some(&p.suborder_id),
            TxPayload::Review(p) => Some(&p.suborder_id),
        }
    }
}

/// A transaction without its auth tag: exactly the bytes the tag covers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnsignedTx {
    pub tx_id: String,
    pub author: AccountId,
    pub created_at: SimTime,
    #[serde(flatten)]
    pub payload: TxPayload,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxEnvelope {
    #[serde(flatten)]
    pub body: UnsignedTx,
    pub auth_tag: String,
}

impl TxEnvelope {
    pub fn tx_id(&self) -> &str {
        &self.body.tx_id
    }

    pub fn author(&self) -> &AccountId {
        &self.body.author
    }

    pub fn created_at(&self) -> SimTime {
        self.body.created_at
    }

    pub fn kind(&self) -> TxKind {
        self.body.payload.kind()
    }

    pub fn payload(&self) -> &TxPayload {
        &self.body.payload
    }
}

fn auth_tag(secret: &[u8; 32], body: &UnsignedTx) -> Result<String, LedgerError> {
    let bytes = canonical_serialize(body)?;
    let mut h = Sha256::new();
    h.update(secret);
    h.update(&bytes);
    Ok(hex::encode(h.finalize()))
}

/// Computes the auth tag for `tx` using its author's directory secret.
pub fn authenticate_tx(tx: UnsignedTx, directory: &Directory) -> Result<TxEnvelope, LedgerError> {
    let entry = directory
        .get(&tx.author)
        .ok_or_else(|| LedgerError::UnknownAccount(tx.author.clone()))?;
    let auth_tag = auth_tag(entry.secret.as_bytes(), &tx)?;
    Ok(TxEnvelope { body: tx, auth_tag })
}

/// True iff the author is known and the tag recomputes.
pub fn verify_tx(tx: &TxEnvelope, directory: &Directory) -> bool {
    let Some(entry) = directory.get(&tx.body.author) else {
        return false;
    };
    matches!(auth_tag(entry.secret.as_bytes(), &tx.body), Ok(tag) if tag == tx.auth_tag)
}

/// Hands out `author.seq` transaction ids, one counter per author.
#[derive(Debug, Clone, Default)]
pub struct TxIdAllocator {
    next: BTreeMap<AccountId, u64>,
}

impl TxIdAllocator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Continues numbering after every `<author>.<n>` id already on `chain`.
    pub fn resume(chain: &super::Chain) -> Self {
        let mut ids = Self::new();
        for (_, tx) in chain.transactions() {
            let seq = tx
                .tx_id()
                .strip_prefix(tx.author().as_str())
                .and_then(|rest| rest.strip_prefix('.'))
                .and_then(|n| n.parse::<u64>().ok());
            if let Some(seq) = seq {
                let slot = ids.next.entry(tx.author().clone()).or_insert(0);
                *slot = (*slot).max(seq);
            }
        }
        ids
    }

    pub fn next_id(&mut self, author: &AccountId) -> String {
        let seq = self.next.entry(author.clone()).or_insert(0);
        *seq += 1;
        format!("{}.{}", author, seq)
    }

    pub fn draft(&mut self, author: &AccountId, created_at: SimTime, payload: TxPayload) -> UnsignedTx {
        UnsignedTx {
            tx_id: self.next_id(author),
            author: author.clone(),
            created_at,
            payload,
        }
    }
}
