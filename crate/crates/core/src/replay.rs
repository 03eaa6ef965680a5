//! Log replay: folds an event log back through the chain module and checks
//! that the final ledger state hashes to the recorded value, receipt by
//! receipt. A log that replays clean is a complete, faithful record of the
//! run.

use std::collections::BTreeMap;

use crate::chain::{execute_block, Block, ChainState, Receipt, Transaction};
use crate::events::{EventLog, EventRecord};
use crate::types::{AgentId, Asset, TxId};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReplayError {
    #[error("block at round {round} references unknown tx {tx}")]
    UnknownTx { round: u32, tx: TxId },
    #[error("block execution failed at round {round}: {message}")]
    BlockFailed { round: u32, message: String },
    #[error("receipt mismatch for tx {tx}: log says {logged:?}, replay got {replayed:?}")]
    ReceiptMismatch { tx: TxId, logged: Box<Receipt>, replayed: Box<Receipt> },
    #[error("log has no final state hash")]
    MissingStateHash,
    #[error("state hash mismatch: log {logged:016x}, replay {replayed:016x}")]
    HashMismatch { logged: u64, replayed: u64 },
    #[error("rebate/penalty transfer failed at round {round}")]
    TransferFailed { round: u32 },
}

/// FNV-1a over the canonical little-endian encoding of the ledger:
/// height, pools, balances, included ids; all in sorted order.
pub fn state_hash(state: &ChainState) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    let mut eat = |bytes: &[u8]| {
        for b in bytes {
            hash ^= *b as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
    };
    eat(&state.height.to_le_bytes());
    for (id, pool) in &state.pools {
        eat(&id.0.to_le_bytes());
        eat(&pool.reserve_x.micros().to_le_bytes());
        eat(&pool.reserve_y.micros().to_le_bytes());
        eat(&(pool.fee_bps as u32).to_le_bytes());
    }
    for ((agent, asset), amount) in &state.balances {
        eat(&agent.0.to_le_bytes());
        eat(&[match asset {
            Asset::X => 0u8,
            Asset::Y => 1u8,
        }]);
        eat(&amount.micros().to_le_bytes());
    }
    for tx in &state.included {
        eat(&tx.0.to_le_bytes());
    }
    hash
}

#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub state: ChainState,
    pub computed_hash: u64,
    pub logged_hash: u64,
    pub blocks_replayed: u64,
    pub receipts_checked: u64,
}

/// Rebuilds the initial state from init records, re-executes every proposed
/// block (cross-checking each logged receipt), applies rebates and
/// penalties, and compares the final state hash against the log's.
pub fn replay(log: &EventLog) -> Result<ReplayOutcome, ReplayError> {
    let mut state = ChainState::default();
    let mut txs: BTreeMap<TxId, Transaction> = BTreeMap::new();
    let mut receipts: BTreeMap<TxId, Receipt> = BTreeMap::new();
    let mut regulator: Option<AgentId> = None;
    let mut blocks_replayed = 0u64;
    let mut receipts_checked = 0u64;

    // Receipts are logged right after their block; collect them up front so
    // each replayed block can be cross-checked.
    for record in &log.records {
        if let EventRecord::TxReceipt { tx, status, amount_out, gas_paid, .. } = record {
            receipts.insert(
                *tx,
                Receipt { tx_id: *tx, status: *status, amount_out: *amount_out, gas_paid: *gas_paid },
            );
        }
    }

    for record in &log.records {
        match record {
            EventRecord::AgentInfo { agent, name } if name == "REG" => {
                regulator = Some(*agent);
            }
            EventRecord::PoolInit { pool, reserve_x, reserve_y, fee_bps } => {
                let p = crate::amm::Pool::new(*pool, *reserve_x, *reserve_y, *fee_bps)
                    .expect("logged pools are valid");
                state.pools.insert(*pool, p);
            }
            EventRecord::BalanceInit { agent, asset, amount } => {
                state.credit(*agent, *asset, *amount);
            }
            EventRecord::TxSubmit { tx, .. } => {
                txs.insert(tx.id, *tx);
            }
            EventRecord::BlockProposed {
                round,
                height,
                builder,
                proposer,
                bid,
                gas_limit,
                payload,
                spans,
            } => {
                let mut block_payload = Vec::with_capacity(payload.len());
                for (id, gas_used) in payload {
                    let mut tx =
                        *txs.get(id).ok_or(ReplayError::UnknownTx { round: *round, tx: *id })?;
                    tx.gas_used = *gas_used;
                    block_payload.push(tx);
                }
                let block = Block {
                    height: *height,
                    builder: *builder,
                    payload: block_payload,
                    bundle_spans: spans.clone(),
                    bid: *bid,
                    gas_limit: *gas_limit,
                };
                let (next, replayed_receipts) =
                    execute_block(&state, &block, Some(*proposer)).map_err(|e| {
                        ReplayError::BlockFailed { round: *round, message: e.to_string() }
                    })?;
                state = next;
                blocks_replayed += 1;
                for receipt in replayed_receipts {
                    if let Some(logged) = receipts.get(&receipt.tx_id) {
                        if *logged != receipt {
                            return Err(ReplayError::ReceiptMismatch {
                                tx: receipt.tx_id,
                                logged: Box::new(*logged),
                                replayed: Box::new(receipt),
                            });
                        }
                        receipts_checked += 1;
                    }
                }
            }
            EventRecord::Penalty { round, builder, amount } => {
                let sink = regulator.ok_or(ReplayError::TransferFailed { round: *round })?;
                if !state.transfer(*builder, sink, Asset::Y, *amount) {
                    return Err(ReplayError::TransferFailed { round: *round });
                }
            }
            EventRecord::Rebate { round, user, extractor, amount }
                if !state.transfer(*extractor, *user, Asset::Y, *amount) => {
                    return Err(ReplayError::TransferFailed { round: *round });
                }
            _ => {}
        }
    }

    let logged = log.final_state_hash().ok_or(ReplayError::MissingStateHash)?;
    let computed = state_hash(&state);
    if logged != computed {
        return Err(ReplayError::HashMismatch { logged, replayed: computed });
    }
    Ok(ReplayOutcome {
        state,
        computed_hash: computed,
        logged_hash: logged,
        blocks_replayed,
        receipts_checked,
    })
}

/// Parses a TSV log file and replays it.
pub fn replay_tsv(text: &str) -> Result<ReplayOutcome, ReplayTsvError> {
    let log = EventLog::from_tsv(text)?;
    Ok(replay(&log)?)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReplayTsvError {
    #[error(transparent)]
    Log(#[from] crate::events::LogError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{PoolId, TokenAmount};

    #[test]
    fn state_hash_is_stable_and_sensitive() {
        let mut a = ChainState::default();
        a.pools.insert(
            PoolId(0),
            crate::amm::Pool::new(
                PoolId(0),
                TokenAmount::from_tokens(1000),
                TokenAmount::from_tokens(1000),
                0,
            )
            .unwrap(),
        );
        a.credit(AgentId(1), Asset::Y, TokenAmount::from_tokens(5));
        let b = a.clone();
        assert_eq!(state_hash(&a), state_hash(&b));

        let mut c = a.clone();
        c.credit(AgentId(1), Asset::Y, TokenAmount::from_micros(1));
        assert_ne!(state_hash(&a), state_hash(&c), "one millionth must change the hash");

        let mut d = a.clone();
        d.included.insert(TxId(42));
        assert_ne!(state_hash(&a), state_hash(&d));
    }

    #[test]
    fn empty_log_fails_for_missing_hash() {
        let log = EventLog::default();
        assert_eq!(replay(&log).unwrap_err(), ReplayError::MissingStateHash);
    }
}
