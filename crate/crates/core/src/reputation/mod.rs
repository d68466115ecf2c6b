//! Reviews cross-checked against the chain, and centi-star rating aggregates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::contracts::{ContractState, OrderState};
use crate::ledger::{AccountId, Chain, ReviewPayload, TxIdAllocator, TxPayload, UnsignedTx};
use crate::{div_round_half_up, SimTime};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Review {
    pub rater: AccountId,
    pub ratee: AccountId,
    pub suborder_id: String,
    pub stars: u8,
    pub submitted_at: SimTime,
    #[serde(default)]
    pub body: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingAggregate {
    pub rating_centi: u16,
    pub review_count: u64,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum ReviewError {
    #[error("suborder {0} is not finalized on chain")]
    NotFinalized(String),
    #[error("{rater} -> {ratee} are not consumer and carrier/vendor of {suborder_id}")]
    NotAParty { suborder_id: String, rater: AccountId, ratee: AccountId },
    #[error("{rater} already reviewed {ratee} for {suborder_id}")]
    Duplicate { suborder_id: String, rater: AccountId, ratee: AccountId },
    #[error("stars must be in 1..=5, got {0}")]
    BadStars(u8),
    #[error("chain does not replay: tx {tx_id}: {message}")]
    Replay { tx_id: String, message: String },
}

/// Cross-checks a review against contract state rebuilt from sealed blocks.
pub fn check_review(state: &ContractState, review: &Review) -> Result<(), ReviewError> {
    let sub = state
        .suborder(&review.suborder_id)
        .filter(|s| s.state == OrderState::Finalized)
        .ok_or_else(|| ReviewError::NotFinalized(review.suborder_id.clone()))?;
    let ratee_is_party = sub.assigned_carrier.as_ref() == Some(&review.ratee) || sub.vendor == review.ratee;
    if review.rater != sub.consumer || !ratee_is_party {
        return Err(ReviewError::NotAParty {
            suborder_id: review.suborder_id.clone(),
            rater: review.rater.clone(),
            ratee: review.ratee.clone(),
        });
    }
    if !(1..=5).contains(&review.stars) {
        return Err(ReviewError::BadStars(review.stars));
    }
    let key = (review.suborder_id.clone(), review.rater.clone(), review.ratee.clone());
    if state.reviews.contains(&key) {
        return Err(ReviewError::Duplicate {
            suborder_id: review.suborder_id.clone(),
            rater: review.rater.clone(),
            ratee: review.ratee.clone(),
        });
    }
    Ok(())
}

/// Checked review as a `Review` transaction draft.
pub fn review_tx(state: &ContractState, review: &Review, ids: &mut TxIdAllocator) -> Result<UnsignedTx, ReviewError> {
    check_review(state, review)?;
    Ok(ids.draft(
        &review.rater,
        review.submitted_at,
        TxPayload::Review(ReviewPayload {
            suborder_id: review.suborder_id.clone(),
            ratee: review.ratee.clone(),
            stars: review.stars,
            body: review.body.clone(),
        }),
    ))
}

/// Replays `chain` and drafts the review transaction if every cross-check passes.
pub fn submit_review(chain: &Chain, review: &Review, ids: &mut TxIdAllocator) -> Result<UnsignedTx, ReviewError> {
    let (state, _) = ContractState::replay(chain)
        .map_err(|(tx_id, e)| ReviewError::Replay { tx_id, message: e.to_string() })?;
    review_tx(&state, review, ids)
}

fn aggregate(sum: u64, count: u64) -> Option<RatingAggregate> {
    (count > 0).then(|| RatingAggregate {
        rating_centi: div_round_half_up(100 * sum, count) as u16,
        review_count: count,
    })
}

/// Rating of `account` recomputed from every Review tx on the chain.
pub fn aggregate_rating(chain: &Chain, account: &AccountId) -> Option<RatingAggregate> {
    let (sum, count) = chain
        .transactions()
        .filter_map(|(_, tx)| match tx.payload() {
            TxPayload::Review(r) if &r.ratee == account => Some(r.stars as u64),
            _ => None,
        })
        .fold((0, 0), |(s, c), stars| (s + stars, c + 1));
    aggregate(sum, count)
}

/// Running star sums per ratee, fed as Review txs are sealed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RatingBook {
    totals: BTreeMap<AccountId, (u64, u64)>,
}

impl RatingBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_chain(chain: &Chain) -> Self {
        let mut book = Self::new();
        for (_, tx) in chain.transactions() {
            if let TxPayload::Review(r) = tx.payload() {
                book.record(&r.ratee, r.stars);
            }
        }
        book
    }

    pub fn record(&mut self, ratee: &AccountId, stars: u8) {
        let slot = self.totals.entry(ratee.clone()).or_insert((0, 0));
        slot.0 += stars as u64;
        slot.1 += 1;
    }

    pub fn get(&self, account: &AccountId) -> Option<RatingAggregate> {
        self.totals.get(account).and_then(|&(sum, count)| aggregate(sum, count))
    }

    pub fn accounts(&self) -> impl Iterator<Item = &AccountId> {
        self.totals.keys()
    }
}
