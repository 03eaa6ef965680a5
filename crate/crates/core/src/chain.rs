//! Ledger state and execution semantics for transactions, bundles, and
//! blocks. Execution is a pure state transition: callers get back a new
//! `ChainState` and receipts.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::amm::{self, Pool};
use crate::types::{AgentId, Asset, PoolId, SwapIntent, TokenAmount, TxId};

/// Flat gas schedule per transaction kind; gas is an ordering/priority lever,
/// not a metering model.
pub const GAS_SWAP: u32 = 100;
pub const GAS_TRANSFER: u32 = 21;
pub const GAS_NOOP: u32 = 10;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct TransferIntent {
    pub to: AgentId,
    pub asset: Asset,
    pub amount: TokenAmount,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum TxKind {
    Swap(SwapIntent),
    Transfer(TransferIntent),
    Noop,
}

impl TxKind {
    pub fn base_gas(&self) -> u32 {
        match self {
            TxKind::Swap(_) => GAS_SWAP,
            TxKind::Transfer(_) => GAS_TRANSFER,
            TxKind::Noop => GAS_NOOP,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            TxKind::Swap(_) => "swap",
            TxKind::Transfer(_) => "transfer",
            TxKind::Noop => "noop",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Transaction {
    pub id: TxId,
    pub sender: AgentId,
    pub kind: TxKind,
    /// Price per gas unit, paid in Y to the block's builder.
    pub gas_price: TokenAmount,
    pub gas_used: u32,
    pub origin_round: u32,
}

impl Transaction {
    pub fn new(
        id: TxId,
        sender: AgentId,
        kind: TxKind,
        gas_price: TokenAmount,
        origin_round: u32,
    ) -> Self {
        let gas_used = kind.base_gas();
        Transaction { id, sender, kind, gas_price, gas_used, origin_round }
    }

    pub fn gas_cost(&self) -> TokenAmount {
        self.gas_price.mul_int(self.gas_used as u64)
    }

    /// Gas-priority ordering: higher gas price first, lower id breaks ties.
    pub fn priority_key(&self) -> (std::cmp::Reverse<TokenAmount>, TxId) {
        (std::cmp::Reverse(self.gas_price), self.id)
    }
}

/// An atomic ordered group: executed exactly in list order, all-or-nothing.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Bundle {
    pub txs: Vec<Transaction>,
    pub submitter: AgentId,
}

impl Bundle {
    pub fn new(txs: Vec<Transaction>, submitter: AgentId) -> Result<Self, BundleError> {
        if txs.is_empty() {
            return Err(BundleError::Empty);
        }
        Ok(Bundle { txs, submitter })
    }

    pub fn tx_ids(&self) -> Vec<TxId> {
        self.txs.iter().map(|t| t.id).collect()
    }

    /// Weighted-average gas price, the bundle's placement key in a block.
    pub fn effective_gas_price(&self) -> TokenAmount {
        let total_fees: u128 = self
            .txs
            .iter()
            .map(|t| t.gas_price.micros() as u128 * t.gas_used as u128)
            .sum();
        let total_gas: u128 = self.txs.iter().map(|t| t.gas_used as u128).sum();
        TokenAmount::from_micros((total_fees / total_gas.max(1)) as u64)
    }

    pub fn total_gas(&self) -> u64 {
        self.txs.iter().map(|t| t.gas_used as u64).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BundleError {
    #[error("bundle must contain at least one transaction")]
    Empty,
}

/// Contiguous span of a block payload occupied by one bundle.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct BundleSpan {
    pub start: usize,
    pub len: usize,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub builder: AgentId,
    pub payload: Vec<Transaction>,
    /// Disjoint, ordered spans marking bundle boundaries inside the payload.
    pub bundle_spans: Vec<BundleSpan>,
    /// Paid by the builder to the proposer on execution.
    pub bid: TokenAmount,
    pub gas_limit: u64,
}

impl Block {
    pub fn total_gas(&self) -> u64 {
        self.payload.iter().map(|t| t.gas_used as u64).sum()
    }

    /// Checks structural invariants: gas cap, unique tx ids, and bundle
    /// spans that are in-bounds, disjoint, and ordered.
    pub fn validate(&self) -> Result<(), BlockError> {
        if self.total_gas() > self.gas_limit {
            return Err(BlockError::GasLimitExceeded {
                used: self.total_gas(),
                limit: self.gas_limit,
            });
        }
        let mut seen = BTreeSet::new();
        for tx in &self.payload {
            if !seen.insert(tx.id) {
                return Err(BlockError::DuplicateTx(tx.id));
            }
        }
        let mut cursor = 0usize;
        for span in &self.bundle_spans {
            if span.len == 0 || span.start < cursor || span.start + span.len > self.payload.len() {
                return Err(BlockError::MalformedBundleSpan);
            }
            cursor = span.start + span.len;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BlockError {
    #[error("block gas {used} exceeds limit {limit}")]
    GasLimitExceeded { used: u64, limit: u64 },
    #[error("duplicate transaction {0} in block")]
    DuplicateTx(TxId),
    #[error("transaction {0} already included on chain")]
    AlreadyIncluded(TxId),
    #[error("bundle spans overlap, are unordered, or fall out of bounds")]
    MalformedBundleSpan,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum DropReason {
    UnknownPool,
    InsufficientBalance,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum ReceiptStatus {
    Success,
    /// Slippage floor violated (or bundle atomicity tripped): state rolled
    /// back, gas still charged.
    Reverted,
    /// Structurally invalid at execution time: inert on chain, no gas.
    Dropped(DropReason),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Receipt {
    pub tx_id: TxId,
    pub status: ReceiptStatus,
    /// Realized output for swaps (recorded even when the floor reverts it).
    pub amount_out: TokenAmount,
    pub gas_paid: TokenAmount,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TxError {
    #[error("transaction {0} already included")]
    AlreadyIncluded(TxId),
    #[error("unknown pool {0}")]
    UnknownPool(PoolId),
    #[error("sender {0} balance cannot cover amount_in plus gas")]
    InsufficientBalance(AgentId),
}

/// The replicated ledger: pools, per-(agent, asset) balances, and the set of
/// transaction ids already consumed by some block.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct ChainState {
    pub height: u64,
    pub pools: BTreeMap<PoolId, Pool>,
    pub balances: BTreeMap<(AgentId, Asset), TokenAmount>,
    pub included: BTreeSet<TxId>,
}

impl ChainState {
    pub fn balance(&self, agent: AgentId, asset: Asset) -> TokenAmount {
        self.balances.get(&(agent, asset)).copied().unwrap_or(TokenAmount::ZERO)
    }

    pub fn credit(&mut self, agent: AgentId, asset: Asset, amount: TokenAmount) {
        if amount.is_zero() {
            return;
        }
        let slot = self.balances.entry((agent, asset)).or_insert(TokenAmount::ZERO);
        *slot += amount;
    }

    pub fn debit(&mut self, agent: AgentId, asset: Asset, amount: TokenAmount) -> bool {
        if amount.is_zero() {
            return true;
        }
        match self.balances.get_mut(&(agent, asset)) {
            Some(slot) if *slot >= amount => {
                *slot = *slot - amount;
                true
            }
            _ => false,
        }
    }

    /// Moves `amount` between agents; false (and no change) if underfunded.
    pub fn transfer(&mut self, from: AgentId, to: AgentId, asset: Asset, amount: TokenAmount) -> bool {
        if !self.debit(from, asset, amount) {
            return false;
        }
        self.credit(to, asset, amount);
        true
    }

    /// Total of one asset across all balances and pool reserves; constant
    /// over any execution (gas and bids are transfers, not burns).
    pub fn total_supply(&self, asset: Asset) -> u128 {
        let in_balances: u128 = self
            .balances
            .iter()
            .filter(|((_, a), _)| *a == asset)
            .map(|(_, v)| v.micros() as u128)
            .sum();
        let in_pools: u128 = self
            .pools
            .values()
            .map(|p| match asset {
                Asset::X => p.reserve_x.micros() as u128,
                Asset::Y => p.reserve_y.micros() as u128,
            })
            .sum();
        in_balances + in_pools
    }
}

/// Executes one transaction against the state: pool swap with slippage
/// floor, transfer, or no-op. Gas goes to `builder`. Reverted transactions
/// pay gas; dropped (invalid) ones surface as errors and cost nothing.
pub fn execute_transaction(
    state: &ChainState,
    tx: &Transaction,
    builder: AgentId,
) -> Result<(ChainState, Receipt), TxError> {
    if state.included.contains(&tx.id) {
        return Err(TxError::AlreadyIncluded(tx.id));
    }
    let mut next = state.clone();
    let receipt = apply_tx(&mut next, tx, builder)?;
    next.included.insert(tx.id);
    Ok((next, receipt))
}

/// In-place single-transaction step shared by `execute_transaction` and
/// `execute_block`. Does not touch `included`.
fn apply_tx(state: &mut ChainState, tx: &Transaction, builder: AgentId) -> Result<Receipt, TxError> {
    let gas = tx.gas_cost();
    let charge_gas = |state: &mut ChainState| {
        // Balance was checked up front; a failed debit would be a logic bug.
        assert!(state.transfer(tx.sender, builder, Asset::Y, gas), "gas debit failed");
    };
    match &tx.kind {
        TxKind::Noop => {
            if state.balance(tx.sender, Asset::Y) < gas {
                return Err(TxError::InsufficientBalance(tx.sender));
            }
            charge_gas(state);
            Ok(Receipt { tx_id: tx.id, status: ReceiptStatus::Success, amount_out: TokenAmount::ZERO, gas_paid: gas })
        }
        TxKind::Transfer(t) => {
            let mut need_y = gas;
            if t.asset == Asset::Y {
                need_y += t.amount;
            }
            if state.balance(tx.sender, Asset::Y) < need_y
                || state.balance(tx.sender, t.asset) < t.amount
            {
                return Err(TxError::InsufficientBalance(tx.sender));
            }
            assert!(state.transfer(tx.sender, t.to, t.asset, t.amount));
            charge_gas(state);
            Ok(Receipt { tx_id: tx.id, status: ReceiptStatus::Success, amount_out: t.amount, gas_paid: gas })
        }
        TxKind::Swap(intent) => {
            let pool = *state.pools.get(&intent.pool).ok_or(TxError::UnknownPool(intent.pool))?;
            let asset_in = intent.direction.asset_in();
            let mut need_y = gas;
            if asset_in == Asset::Y {
                need_y += intent.amount_in;
            }
            if state.balance(tx.sender, Asset::Y) < need_y
                || state.balance(tx.sender, asset_in) < intent.amount_in
            {
                return Err(TxError::InsufficientBalance(tx.sender));
            }
            let (moved, out) = amm::apply_swap(&pool, intent.direction, intent.amount_in)
                .map_err(|_| TxError::UnknownPool(intent.pool))?;
            if out < intent.min_out {
                // Slippage floor violated: pool untouched, gas still charged.
                charge_gas(state);
                return Ok(Receipt {
                    tx_id: tx.id,
                    status: ReceiptStatus::Reverted,
                    amount_out: out,
                    gas_paid: gas,
                });
            }
            assert!(state.debit(tx.sender, asset_in, intent.amount_in));
            state.credit(tx.sender, intent.direction.asset_out(), out);
            state.pools.insert(intent.pool, moved);
            charge_gas(state);
            Ok(Receipt { tx_id: tx.id, status: ReceiptStatus::Success, amount_out: out, gas_paid: gas })
        }
    }
}

/// Executes a whole block: payload strictly in order, bundle spans
/// all-or-nothing, gas fees credited to the builder, bid forwarded to the
/// proposer. Every payload tx id is consumed (marked included) whatever its
/// receipt says. The block is rejected whole on structural violations.
pub fn execute_block(
    state: &ChainState,
    block: &Block,
    proposer: Option<AgentId>,
) -> Result<(ChainState, Vec<Receipt>), BlockError> {
    block.validate()?;
    for tx in &block.payload {
        if state.included.contains(&tx.id) {
            return Err(BlockError::AlreadyIncluded(tx.id));
        }
    }

    let mut next = state.clone();
    let mut receipts = Vec::with_capacity(block.payload.len());
    let mut idx = 0usize;
    let mut spans = block.bundle_spans.iter().peekable();

    while idx < block.payload.len() {
        if let Some(&&span) = spans.peek() {
            if span.start == idx {
                spans.next();
                execute_bundle_span(&mut next, &block.payload[idx..idx + span.len], block.builder, &mut receipts);
                idx += span.len;
                continue;
            }
        }
        let tx = &block.payload[idx];
        match apply_tx(&mut next, tx, block.builder) {
            Ok(receipt) => receipts.push(receipt),
            Err(err) => receipts.push(dropped_receipt(tx, err)),
        }
        idx += 1;
    }

    for tx in &block.payload {
        next.included.insert(tx.id);
    }
    next.height = block.height;

    if let Some(proposer) = proposer {
        if proposer != block.builder && !block.bid.is_zero() {
            // Bid ≤ realized builder income by construction; a shortfall
            // would mean the builder overbid its own block.
            assert!(
                next.transfer(block.builder, proposer, Asset::Y, block.bid),
                "builder {} cannot cover bid {}",
                block.builder,
                block.bid
            );
        }
    }

    Ok((next, receipts))
}

fn dropped_receipt(tx: &Transaction, err: TxError) -> Receipt {
    let reason = match err {
        TxError::UnknownPool(_) => DropReason::UnknownPool,
        _ => DropReason::InsufficientBalance,
    };
    Receipt {
        tx_id: tx.id,
        status: ReceiptStatus::Dropped(reason),
        amount_out: TokenAmount::ZERO,
        gas_paid: TokenAmount::ZERO,
    }
}

/// Runs one bundle span atomically: if any leg fails, the whole span rolls
/// back and every executable leg is charged gas as a revert; legs that were
/// structurally invalid are dropped free of charge.
fn execute_bundle_span(
    state: &mut ChainState,
    legs: &[Transaction],
    builder: AgentId,
    receipts: &mut Vec<Receipt>,
) {
    let snapshot = state.clone();
    let mut staged = Vec::with_capacity(legs.len());
    let mut all_ok = true;
    for tx in legs {
        match apply_tx(state, tx, builder) {
            Ok(receipt) => {
                if receipt.status != ReceiptStatus::Success {
                    all_ok = false;
                }
                staged.push(receipt);
            }
            Err(err) => {
                staged.push(dropped_receipt(tx, err));
                all_ok = false;
            }
        }
        if !all_ok {
            break;
        }
    }
    if all_ok {
        receipts.extend(staged);
        return;
    }

    // Roll back, then re-settle: every leg that could pay gas reverts (and
    // pays); structurally invalid legs stay dropped.
    *state = snapshot;
    for tx in legs {
        let gas = tx.gas_cost();
        if state.balance(tx.sender, Asset::Y) >= gas {
            assert!(state.transfer(tx.sender, builder, Asset::Y, gas));
            let realized = realized_swap_out(state, tx);
            receipts.push(Receipt {
                tx_id: tx.id,
                status: ReceiptStatus::Reverted,
                amount_out: realized,
                gas_paid: gas,
            });
        } else {
            receipts.push(dropped_receipt(tx, TxError::InsufficientBalance(tx.sender)));
        }
    }
}

/// What the swap would have produced on the rolled-back state; recorded in
/// reverted receipts for diagnostics.
fn realized_swap_out(state: &ChainState, tx: &Transaction) -> TokenAmount {
    if let TxKind::Swap(intent) = &tx.kind {
        if let Some(pool) = state.pools.get(&intent.pool) {
            return amm::quote_swap(pool, intent.direction, intent.amount_in)
                .unwrap_or(TokenAmount::ZERO);
        }
    }
    TokenAmount::ZERO
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{SwapDirection, SwapIntent};

    fn tok(s: &str) -> TokenAmount {
        s.parse().unwrap()
    }

    const USER: AgentId = AgentId(1);
    const ATTACKER: AgentId = AgentId(2);
    const BUILDER: AgentId = AgentId(10);
    const PROPOSER: AgentId = AgentId(11);

    fn base_state() -> ChainState {
        let mut state = ChainState::default();
        state.pools.insert(
            PoolId(0),
            Pool::new(PoolId(0), TokenAmount::from_tokens(1000), TokenAmount::from_tokens(1000), 0)
                .unwrap(),
        );
        for agent in [USER, ATTACKER] {
            state.credit(agent, Asset::X, TokenAmount::from_tokens(1000));
            state.credit(agent, Asset::Y, TokenAmount::from_tokens(1000));
        }
        state
    }

    fn swap_tx(id: u32, sender: AgentId, amount: &str, min_out: &str, gas_price: &str) -> Transaction {
        Transaction::new(
            TxId::new(sender, id),
            sender,
            TxKind::Swap(
                SwapIntent::new(PoolId(0), SwapDirection::YForX, tok(amount), tok(min_out)).unwrap(),
            ),
            tok(gas_price),
            0,
        )
    }

    #[test]
    fn swap_success_updates_pool_and_balances() {
        let state = base_state();
        let tx = swap_tx(0, USER, "100", "0", "0.000010");
        let (next, receipt) = execute_transaction(&state, &tx, BUILDER).unwrap();
        assert_eq!(receipt.status, ReceiptStatus::Success);
        assert_eq!(receipt.amount_out, tok("90.909090"));
        assert_eq!(next.balance(USER, Asset::X), tok("1090.909090"));
        let gas = tok("0.000010").mul_int(100);
        assert_eq!(next.balance(USER, Asset::Y), tok("900") - gas);
        assert_eq!(next.balance(BUILDER, Asset::Y), gas);
        assert_eq!(next.pools[&PoolId(0)].reserve_y, tok("1100"));
    }

    #[test]
    fn min_out_violation_reverts_but_charges_gas() {
        let state = base_state();
        let tx = swap_tx(0, USER, "100", "95", "0.000010");
        let (next, receipt) = execute_transaction(&state, &tx, BUILDER).unwrap();
        assert_eq!(receipt.status, ReceiptStatus::Reverted);
        assert_eq!(receipt.amount_out, tok("90.909090"), "realized out recorded");
        assert_eq!(next.pools[&PoolId(0)], state.pools[&PoolId(0)], "pool untouched");
        assert_eq!(next.balance(BUILDER, Asset::Y), tok("0.001000"));
        assert_eq!(next.balance(USER, Asset::X), tok("1000"));
    }

    #[test]
    fn insufficient_balance_drops_without_gas() {
        let state = base_state();
        let tx = swap_tx(0, USER, "5000", "0", "0.000010");
        assert_eq!(
            execute_transaction(&state, &tx, BUILDER),
            Err(TxError::InsufficientBalance(USER))
        );
    }

    #[test]
    fn unknown_pool_is_a_drop() {
        let state = base_state();
        let mut tx = swap_tx(0, USER, "10", "0", "0.000010");
        if let TxKind::Swap(ref mut intent) = tx.kind {
            intent.pool = PoolId(9);
        }
        assert_eq!(execute_transaction(&state, &tx, BUILDER), Err(TxError::UnknownPool(PoolId(9))));
    }

    #[test]
    fn replaying_an_included_tx_fails() {
        let state = base_state();
        let tx = swap_tx(0, USER, "10", "0", "0.000010");
        let (next, _) = execute_transaction(&state, &tx, BUILDER).unwrap();
        assert_eq!(execute_transaction(&next, &tx, BUILDER), Err(TxError::AlreadyIncluded(tx.id)));
    }

    #[test]
    fn empty_block_is_a_no_op() {
        let state = base_state();
        let block = Block {
            height: 1,
            builder: BUILDER,
            payload: vec![],
            bundle_spans: vec![],
            bid: TokenAmount::ZERO,
            gas_limit: 10_000,
        };
        let (next, receipts) = execute_block(&state, &block, Some(PROPOSER)).unwrap();
        assert!(receipts.is_empty());
        assert_eq!(next.pools, state.pools);
        assert_eq!(next.balances, state.balances);
    }

    #[test]
    fn sandwich_bundle_nets_attacker_the_frozen_profit() {
        let state = base_state();
        let front = swap_tx(0, ATTACKER, "100", "0", "0.000010");
        let victim = swap_tx(0, USER, "100", "0", "0.000010");
        let back = Transaction::new(
            TxId::new(ATTACKER, 1),
            ATTACKER,
            TxKind::Swap(
                SwapIntent::new(PoolId(0), SwapDirection::XForY, tok("90.909090"), tok("0")).unwrap(),
            ),
            tok("0.000010"),
            0,
        );
        let block = Block {
            height: 1,
            builder: BUILDER,
            payload: vec![front, victim, back],
            bundle_spans: vec![BundleSpan { start: 0, len: 3 }],
            bid: TokenAmount::ZERO,
            gas_limit: 10_000,
        };
        let (next, receipts) = execute_block(&state, &block, Some(PROPOSER)).unwrap();
        assert!(receipts.iter().all(|r| r.status == ReceiptStatus::Success));
        // Attacker: -100 Y (front), +118.032785 Y (back), X round-trips flat.
        let gas = tok("0.000010").mul_int(100);
        assert_eq!(
            next.balance(ATTACKER, Asset::Y),
            tok("1018.032785") - gas.mul_int(2),
        );
        assert_eq!(next.balance(ATTACKER, Asset::X), tok("1000"));
        // Victim got 75.757575 X for its 100 Y.
        assert_eq!(next.balance(USER, Asset::X), tok("1075.757575"));
    }

    #[test]
    fn reverting_leg_rolls_back_the_whole_bundle() {
        let state = base_state();
        let front = swap_tx(0, ATTACKER, "100", "0", "0.000010");
        // Victim's floor is above what it gets post-front-run: it reverts,
        // and atomicity must revert the attacker's legs too.
        let victim = swap_tx(0, USER, "100", "90", "0.000010");
        let back = Transaction::new(
            TxId::new(ATTACKER, 1),
            ATTACKER,
            TxKind::Swap(
                SwapIntent::new(PoolId(0), SwapDirection::XForY, tok("90.909090"), tok("0")).unwrap(),
            ),
            tok("0.000010"),
            0,
        );
        let block = Block {
            height: 1,
            builder: BUILDER,
            payload: vec![front, victim, back],
            bundle_spans: vec![BundleSpan { start: 0, len: 3 }],
            bid: TokenAmount::ZERO,
            gas_limit: 10_000,
        };
        let (next, receipts) = execute_block(&state, &block, Some(PROPOSER)).unwrap();
        assert!(receipts.iter().all(|r| r.status == ReceiptStatus::Reverted));
        assert_eq!(next.pools[&PoolId(0)], state.pools[&PoolId(0)], "pool rolled back");
        let gas = tok("0.000010").mul_int(100);
        assert_eq!(next.balance(USER, Asset::Y), tok("1000") - gas, "victim still pays gas");
        assert_eq!(next.balance(ATTACKER, Asset::Y), tok("1000") - gas.mul_int(2));
        assert_eq!(next.balance(BUILDER, Asset::Y), gas.mul_int(3));
    }

    #[test]
    fn duplicate_tx_rejects_whole_block() {
        let state = base_state();
        let tx = swap_tx(0, USER, "10", "0", "0.000010");
        let block = Block {
            height: 1,
            builder: BUILDER,
            payload: vec![tx, tx],
            bundle_spans: vec![],
            bid: TokenAmount::ZERO,
            gas_limit: 10_000,
        };
        assert_eq!(execute_block(&state, &block, Some(PROPOSER)), Err(BlockError::DuplicateTx(tx.id)));
    }

    #[test]
    fn gas_limit_rejects_whole_block() {
        let state = base_state();
        let txs: Vec<Transaction> = (0..3).map(|i| swap_tx(i, USER, "1", "0", "0.000010")).collect();
        let block = Block {
            height: 1,
            builder: BUILDER,
            payload: txs,
            bundle_spans: vec![],
            bid: TokenAmount::ZERO,
            gas_limit: 250,
        };
        assert!(matches!(
            execute_block(&state, &block, Some(PROPOSER)),
            Err(BlockError::GasLimitExceeded { used: 300, limit: 250 })
        ));
    }

    #[test]
    fn bid_moves_from_builder_to_proposer() {
        let mut state = base_state();
        state.credit(BUILDER, Asset::Y, tok("50"));
        let block = Block {
            height: 1,
            builder: BUILDER,
            payload: vec![],
            bundle_spans: vec![],
            bid: tok("7"),
            gas_limit: 10_000,
        };
        let (next, _) = execute_block(&state, &block, Some(PROPOSER)).unwrap();
        assert_eq!(next.balance(PROPOSER, Asset::Y), tok("7"));
        assert_eq!(next.balance(BUILDER, Asset::Y), tok("43"));
    }

    #[test]
    fn execution_conserves_total_supply() {
        let state = base_state();
        let front = swap_tx(0, ATTACKER, "100", "0", "0.000010");
        let victim = swap_tx(0, USER, "100", "80", "0.000010");
        let block = Block {
            height: 1,
            builder: BUILDER,
            payload: vec![front, victim],
            bundle_spans: vec![],
            bid: TokenAmount::ZERO,
            gas_limit: 10_000,
        };
        let (next, _) = execute_block(&state, &block, Some(PROPOSER)).unwrap();
        for asset in [Asset::X, Asset::Y] {
            assert_eq!(state.total_supply(asset), next.total_supply(asset), "{asset} conserved");
        }
    }

    #[test]
    fn execute_block_is_replay_deterministic() {
        let state = base_state();
        let block = Block {
            height: 1,
            builder: BUILDER,
            payload: vec![swap_tx(0, USER, "100", "0", "0.000010")],
            bundle_spans: vec![],
            bid: TokenAmount::ZERO,
            gas_limit: 10_000,
        };
        let a = execute_block(&state, &block, Some(PROPOSER)).unwrap();
        let b = execute_block(&state, &block, Some(PROPOSER)).unwrap();
        assert_eq!(a, b);
    }
}
