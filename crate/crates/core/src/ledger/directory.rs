//! Trusted directory service: accounts, roles, sealer rights and MAC secrets.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dispatch::GeoPoint;
use crate::SimTime;

use super::LedgerError;

const MAX_ACCOUNT_ID_LEN: usize = 64;

/// Sealer name recorded in the genesis block. Never a registrable account.
pub const GENESIS_SEALER: &str = "genesis";
/// The operator account that authors expiry transactions.
pub const SYSTEM_ACCOUNT: &str = "system";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("invalid account id {0:?}: expected 1-64 chars of [a-z0-9_-]")]
pub struct InvalidAccountId(pub String);

/// Account identifier: short, non-empty, `[a-z0-9_-]`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AccountId(String);

impl AccountId {
    pub fn new(id: impl Into<String>) -> Result<Self, InvalidAccountId> {
        let id = id.into();
        let ok = !id.is_empty()
            && id.len() <= MAX_ACCOUNT_ID_LEN
            && id
                .bytes()
                .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'-');
        if ok {
            Ok(Self(id))
        } else {
            Err(InvalidAccountId(id))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn system() -> Self {
        Self(SYSTEM_ACCOUNT.to_string())
    }

    pub fn genesis() -> Self {
        Self(GENESIS_SEALER.to_string())
    }
}

impl TryFrom<String> for AccountId {
    type Error = InvalidAccountId;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl TryFrom<&str> for AccountId {
    type Error = InvalidAccountId;
    fn try_from(value: &str) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<AccountId> for String {
    fn from(value: AccountId) -> Self {
        value.0
    }
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Consumer,
    Carrier,
    Producer,
    System,
}

impl Role {
    /// Consumers, producers and the operator may seal; carriers may not.
    pub fn may_seal(self) -> bool {
        !matches!(self, Role::Carrier)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::Consumer => "consumer",
            Role::Carrier => "carrier",
            Role::Producer => "producer",
            Role::System => "system",
        };
        f.write_str(s)
    }
}

/// 32-byte MAC key. Debug output is redacted and the type has no serde impls,
/// so it cannot leak into block serialization.
#[derive(Clone, PartialEq, Eq)]
pub struct Secret([u8; 32]);

impl Secret {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    /// Derives a deterministic per-account secret from a run seed.
    pub fn derive(seed: u64, account: &AccountId) -> Self {
        let mut h = Sha256::new();
        h.update(b"courier-chain/secret/v1");
        h.update(seed.to_be_bytes());
        h.update(account.as_str().as_bytes());
        Self(h.finalize().into())
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        Some(Self(bytes.try_into().ok()?))
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(..)")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectoryEntry {
    pub account: AccountId,
    pub role: Role,
    pub secret: Secret,
    pub is_sealer: bool,
    pub registered_at: SimTime,
    pub home_location: Option<GeoPoint>,
}

/// Registry of every known account. Accounts are never removed or re-registered.
#[derive(Debug, Clone, Default)]
pub struct Directory {
    entries: BTreeMap<AccountId, DirectoryEntry>,
}

impl Directory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        account: AccountId,
        role: Role,
        secret: Secret,
        registered_at: SimTime,
        home_location: Option<GeoPoint>,
    ) -> Result<&DirectoryEntry, LedgerError> {
        if account.as_str() == GENESIS_SEALER {
            return Err(LedgerError::ReservedAccount(account));
        }
        if self.entries.contains_key(&account) {
            return Err(LedgerError::DuplicateAccount(account));
        }
        let entry = DirectoryEntry {
            account: account.clone(),
            role,
            secret,
            is_sealer: role.may_seal(),
            registered_at,
            home_location,
        };
        Ok(self.entries.entry(account).or_insert(entry))
    }

    pub fn get(&self, account: &AccountId) -> Option<&DirectoryEntry> {
        self.entries.get(account)
    }

    pub fn role(&self, account: &AccountId) -> Option<Role> {
        self.entries.get(account).map(|e| e.role)
    }

    pub fn entries(&self) -> impl Iterator<Item = &DirectoryEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sealers ordered by `(registered_at, account)`.
    pub fn sealers(&self) -> Vec<&AccountId> {
        let mut sealers: Vec<&DirectoryEntry> = self.entries.values().filter(|e| e.is_sealer).collect();
        sealers.sort_by(|a, b| (a.registered_at, &a.account).cmp(&(b.registered_at, &b.account)));
        sealers.into_iter().map(|e| &e.account).collect()
    }

    /// JSON export of the directory including secrets. This is the trusted
    /// service's own state and is kept apart from the ledger.
    pub fn to_json(&self) -> serde_json::Value {
        let entries: Vec<DirectoryRecord> = self.entries.values().map(DirectoryRecord::from).collect();
        serde_json::json!({ "accounts": entries })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self, LedgerError> {
        #[derive(Deserialize)]
        struct File {
            accounts: Vec<DirectoryRecord>,
        }
        let file: File =
            serde_json::from_value(value.clone()).map_err(|e| LedgerError::BadDirectory(e.to_string()))?;
        let mut dir = Directory::new();
        for rec in file.accounts {
            let secret = Secret::from_hex(&rec.secret)
                .ok_or_else(|| LedgerError::BadDirectory(format!("bad secret for {}", rec.account)))?;
            dir.register(rec.account, rec.role, secret, rec.registered_at, rec.home)?;
        }
        Ok(dir)
    }
}

#[derive(Serialize, Deserialize)]
struct DirectoryRecord {
    account: AccountId,
    role: Role,
    secret: String,
    registered_at: SimTime,
    home: Option<GeoPoint>,
}

impl From<&DirectoryEntry> for DirectoryRecord {
    fn from(e: &DirectoryEntry) -> Self {
        Self {
            account: e.account.clone(),
            role: e.role,
            secret: e.secret.to_hex(),
            registered_at: e.registered_at,
            home: e.home_location,
        }
    }
}
