//! Tamper-evident ledger: canonical hashing, authenticated transactions,
//! proof-of-authority sealing and chain validation.

pub mod canonical;
mod chain;
mod directory;
mod tx;

pub use canonical::{canonical_serialize, canonical_value_bytes, sha256_hex, CanonicalError};
pub use chain::{
    next_sealer, seal_block, validate_chain, Block, Chain, FailureCode, ValidationReport, ZERO_HASH,
};
pub use directory::{
    AccountId, Directory, DirectoryEntry, InvalidAccountId, Role, Secret, GENESIS_SEALER, SYSTEM_ACCOUNT,
};
pub use tx::{
    authenticate_tx, verify_tx, DeliveryPayload, OrderAcceptedPayload, OrderLine, OrderPlacedPayload,
    RegisterPayload, ReviewPayload, SubOrderRef, TxEnvelope, TxIdAllocator, TxKind, TxPayload, UnsignedTx,
};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum LedgerError {
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
    #[error("unknown account {0}")]
    UnknownAccount(AccountId),
    #[error("account {0} already registered")]
    DuplicateAccount(AccountId),
    #[error("account id {0} is reserved")]
    ReservedAccount(AccountId),
    #[error("no sealers in directory")]
    NoSealers,
    #[error("block must be sealed by {expected}, not {got}")]
    BadSealer { expected: AccountId, got: AccountId },
    #[error("transaction {0} failed authentication")]
    BadAuthTag(String),
    #[error("transaction {0} already on chain")]
    DuplicateTx(String),
    #[error("refusing to seal an empty block")]
    EmptyBlock,
    #[error("chain has no genesis block")]
    MissingGenesis,
    #[error("ledger line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("directory file: {0}")]
    BadDirectory(String),
}
