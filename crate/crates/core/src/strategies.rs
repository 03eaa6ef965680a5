//! Searcher-bot behaviors: scanning a mempool view for extractable
//! opportunities and crafting front-run copies, sandwich bundles, back-runs,
//! cross-pool arbitrage pairs, and gas-auction escalation responses.
//!
//! Everything here is a pure function of an immutable view snapshot plus the
//! searcher's config; estimated profits are computed on that possibly-stale
//! snapshot, so realized profits may differ (the gap itself is logged by the
//! engine as a coordination-waste signal).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::amm::{self, Pool};
use crate::chain::{Bundle, Transaction, TxKind};
use crate::types::{AgentId, PoolId, SwapIntent, TokenAmount, TxId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StrategyError {
    #[error("no front-run size keeps the victim above its slippage floor")]
    NoProfitableSize,
    #[error("no profitable back-run exists against this target")]
    NoProfit,
    #[error("crafted size {needed} exceeds searcher budget {budget}")]
    BudgetExceeded { needed: TokenAmount, budget: TokenAmount },
    #[error("victim transaction is not a swap")]
    NotASwap,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Sandwich,
    FrontRunCopy,
    BackRun,
    CrossPoolArb,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearcherConfig {
    pub agent: AgentId,
    pub watched_pools: Vec<PoolId>,
    pub strategies: Vec<StrategyKind>,
    /// Increment used both to outbid a victim's gas price and to escalate
    /// against rival bots.
    pub gas_bump: TokenAmount,
    pub max_escalations: u32,
    pub budget: TokenAmount,
}

impl SearcherConfig {
    pub fn has(&self, kind: StrategyKind) -> bool {
        self.strategies.contains(&kind)
    }
}

/// A detected extraction opportunity, priced against the scanner's own view
/// snapshot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Opportunity {
    pub kind: StrategyKind,
    /// The pending transaction being attacked, when one exists.
    pub victim: Option<TxId>,
    pub pools: Vec<PoolId>,
    pub estimated_profit: TokenAmount,
}

/// Scans a view snapshot for opportunities whose estimated profit exceeds
/// the searcher's own gas spend, sorted by estimated profit descending with
/// victim tx id as tie-break.
pub fn scan_opportunities(
    view: &[Transaction],
    pools: &BTreeMap<PoolId, Pool>,
    config: &SearcherConfig,
) -> Vec<Opportunity> {
    let mut found = Vec::new();
    let swap_gas_cost = |gas_price: TokenAmount| gas_price.mul_int(crate::chain::GAS_SWAP as u64);

    for tx in view {
        if tx.sender == config.agent {
            continue;
        }
        let TxKind::Swap(intent) = &tx.kind else { continue };
        if !config.watched_pools.contains(&intent.pool) {
            continue;
        }
        let Some(pool) = pools.get(&intent.pool) else { continue };

        if config.has(StrategyKind::Sandwich) {
            if let Ok(front) = amm::optimal_frontrun_size(pool, intent, config.budget) {
                if !front.is_zero() {
                    let gross = amm::sandwich_profit(pool, intent, front).unwrap_or(0);
                    // Two legs of gas at the victim's price level.
                    let gas = 2 * swap_gas_cost(tx.gas_price).micros() as i128;
                    if gross > gas {
                        found.push(Opportunity {
                            kind: StrategyKind::Sandwich,
                            victim: Some(tx.id),
                            pools: vec![intent.pool],
                            estimated_profit: TokenAmount::from_micros((gross - gas) as u64),
                        });
                    }
                }
            }
        }

        if config.has(StrategyKind::FrontRunCopy) {
            // A copy only pays when the loot can be unloaded on a second
            // watched pool at a better price.
            if let Some(est) = copy_arb_estimate(pool, intent, pools, config) {
                let gas = 2 * swap_gas_cost(tx.gas_price + config.gas_bump).micros() as i128;
                if est > gas {
                    found.push(Opportunity {
                        kind: StrategyKind::FrontRunCopy,
                        victim: Some(tx.id),
                        pools: vec![intent.pool],
                        estimated_profit: TokenAmount::from_micros((est - gas) as u64),
                    });
                }
            }
        }

        if config.has(StrategyKind::BackRun) {
            for reference in config.watched_pools.iter().filter(|p| **p != intent.pool) {
                let Some(ref_pool) = pools.get(reference) else { continue };
                if let Ok((_, profit)) = backrun_size(pool, ref_pool, intent, config.budget) {
                    let gas = swap_gas_cost(tx.gas_price).micros() as i128;
                    if profit > gas {
                        found.push(Opportunity {
                            kind: StrategyKind::BackRun,
                            victim: Some(tx.id),
                            pools: vec![intent.pool, *reference],
                            estimated_profit: TokenAmount::from_micros((profit - gas) as u64),
                        });
                    }
                }
            }
        }
    }

    if config.has(StrategyKind::CrossPoolArb) {
        for (i, a) in config.watched_pools.iter().enumerate() {
            for b in config.watched_pools.iter().skip(i + 1) {
                let (Some(pa), Some(pb)) = (pools.get(a), pools.get(b)) else { continue };
                if let Some(plan) = cross_pool_arbitrage(pa, pb, config.budget) {
                    found.push(Opportunity {
                        kind: StrategyKind::CrossPoolArb,
                        victim: None,
                        pools: vec![plan.buy_pool, plan.sell_pool],
                        estimated_profit: plan.estimated_profit,
                    });
                }
            }
        }
    }

    found.sort_by(|l, r| {
        r.estimated_profit
            .cmp(&l.estimated_profit)
            .then_with(|| l.victim.cmp(&r.victim))
            .then_with(|| l.kind.cmp(&r.kind))
    });
    found
}

/// Profit of copying the victim's swap and unloading the proceeds on the
/// best other watched pool, before gas.
fn copy_arb_estimate(
    pool: &Pool,
    intent: &SwapIntent,
    pools: &BTreeMap<PoolId, Pool>,
    config: &SearcherConfig,
) -> Option<i128> {
    if intent.amount_in > config.budget {
        return None;
    }
    let loot = amm::quote_swap(pool, intent.direction, intent.amount_in).ok()?;
    if loot.is_zero() {
        return None;
    }
    let mut best: Option<i128> = None;
    for other in config.watched_pools.iter().filter(|p| **p != intent.pool) {
        let other_pool = pools.get(other)?;
        let back = amm::quote_swap(other_pool, intent.direction.opposite(), loot).ok()?;
        let profit = back.micros() as i128 - intent.amount_in.micros() as i128;
        best = Some(best.map_or(profit, |b: i128| b.max(profit)));
    }
    best.filter(|p| *p > 0)
}

/// Replicates the victim's swap for the searcher's own account at a gas
/// price one bump above the victim's, so it sorts strictly earlier under
/// gas-priority ordering.
pub fn craft_frontrun_copy(
    victim: &Transaction,
    config: &SearcherConfig,
    copy_id: TxId,
) -> Result<Transaction, StrategyError> {
    let TxKind::Swap(intent) = &victim.kind else {
        return Err(StrategyError::NotASwap);
    };
    if intent.amount_in > config.budget {
        return Err(StrategyError::BudgetExceeded {
            needed: intent.amount_in,
            budget: config.budget,
        });
    }
    Ok(Transaction::new(
        copy_id,
        config.agent,
        TxKind::Swap(*intent),
        victim.gas_price + config.gas_bump,
        victim.origin_round,
    ))
}

/// Builds the atomic [front buy, victim, back sell] bundle. The front leg is
/// sized by `optimal_frontrun_size` (capped by budget); the back leg sells
/// exactly what the front leg acquires on the snapshot state.
pub fn craft_sandwich(
    victim: &Transaction,
    pool: &Pool,
    config: &SearcherConfig,
    leg_ids: (TxId, TxId),
) -> Result<Bundle, StrategyError> {
    let TxKind::Swap(intent) = &victim.kind else {
        return Err(StrategyError::NotASwap);
    };
    let front = amm::optimal_frontrun_size(pool, intent, config.budget)
        .map_err(|_| StrategyError::NoProfitableSize)?;
    if front.is_zero() {
        return Err(StrategyError::NoProfitableSize);
    }
    let (_, acquired) = amm::apply_swap(pool, intent.direction, front)
        .map_err(|_| StrategyError::NoProfitableSize)?;
    let front_tx = Transaction::new(
        leg_ids.0,
        config.agent,
        TxKind::Swap(
            SwapIntent::new(intent.pool, intent.direction, front, TokenAmount::ZERO)
                .map_err(|_| StrategyError::NoProfitableSize)?,
        ),
        victim.gas_price,
        victim.origin_round,
    );
    let back_tx = Transaction::new(
        leg_ids.1,
        config.agent,
        TxKind::Swap(
            SwapIntent::new(intent.pool, intent.direction.opposite(), acquired, TokenAmount::ZERO)
                .map_err(|_| StrategyError::NoProfitableSize)?,
        ),
        victim.gas_price,
        victim.origin_round,
    );
    Bundle::new(vec![front_tx, *victim, back_tx], config.agent)
        .map_err(|_| StrategyError::NoProfitableSize)
}

/// Profit-maximizing size for the price-restoring swap placed right after
/// `target` on the moved pool, valued against replacing the spent inventory
/// on `reference`. Returns (size, profit in micros).
fn backrun_size(
    moved: &Pool,
    reference: &Pool,
    target: &SwapIntent,
    budget: TokenAmount,
) -> Result<(TokenAmount, i128), StrategyError> {
    // State of the moved pool once the target lands.
    let (after, _) = amm::apply_swap(moved, target.direction, target.amount_in)
        .map_err(|_| StrategyError::NoProfit)?;
    // The restoring swap pays back the asset the target bought.
    let restore_dir = target.direction.opposite();

    let profit = |size_micros: u64| -> i128 {
        if size_micros == 0 {
            return 0;
        }
        let size = TokenAmount::from_micros(size_micros);
        let Ok(out) = amm::quote_swap(&after, restore_dir, size) else { return i128::MIN };
        let Some(replace_cost) = acquire_cost(reference, restore_dir, size) else {
            return i128::MIN;
        };
        out.micros() as i128 - replace_cost as i128
    };

    // Profit is concave in size (concave output minus convex replacement
    // cost): ternary search, then an exact scan over the final bracket.
    let mut lo = 0u64;
    let mut hi = budget.micros();
    while hi - lo > 64 {
        let m1 = lo + (hi - lo) / 3;
        let m2 = hi - (hi - lo) / 3;
        if profit(m1) < profit(m2) {
            lo = m1 + 1;
        } else {
            hi = m2;
        }
    }
    let (best_size, best_profit) = (lo..=hi)
        .map(|s| (s, profit(s)))
        .max_by_key(|(s, p)| (*p, std::cmp::Reverse(*s)))
        .unwrap_or((0, 0));
    if best_profit <= 0 || best_size == 0 {
        return Err(StrategyError::NoProfit);
    }
    Ok((TokenAmount::from_micros(best_size), best_profit))
}

/// Smallest input on `pool` that yields at least `want` of the restore
/// direction's in-asset, i.e. the cost of replacing spent inventory.
fn acquire_cost(
    pool: &Pool,
    restore_dir: crate::types::SwapDirection,
    want: TokenAmount,
) -> Option<u64> {
    // Replacing inventory swaps the other way: pay the restore direction's
    // out-asset to buy its in-asset back.
    let dir = restore_dir.opposite();
    let out_res = match dir.asset_out() {
        crate::types::Asset::X => pool.reserve_x.micros(),
        crate::types::Asset::Y => pool.reserve_y.micros(),
    };
    if want.micros() >= out_res {
        return None; // pool cannot produce that much
    }
    let mut hi = 16u64;
    loop {
        let out = amm::quote_swap(pool, dir, TokenAmount::from_micros(hi)).ok()?;
        if out >= want {
            break;
        }
        hi = hi.checked_mul(2)?;
    }
    let mut lo = 1u64;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        let out = amm::quote_swap(pool, dir, TokenAmount::from_micros(mid)).ok()?;
        if out >= want {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Some(lo)
}

/// Crafts the price-restoring swap placed immediately after `target`; its
/// gas price sits one millionth below the target's so it sorts just after
/// under gas-priority ordering.
pub fn craft_backrun(
    target: &Transaction,
    moved_pool: &Pool,
    reference_pool: &Pool,
    config: &SearcherConfig,
    id: TxId,
) -> Result<Transaction, StrategyError> {
    let TxKind::Swap(intent) = &target.kind else {
        return Err(StrategyError::NotASwap);
    };
    let (size, _) = backrun_size(moved_pool, reference_pool, intent, config.budget)?;
    let gas_price = target
        .gas_price
        .checked_sub(TokenAmount::from_micros(1))
        .ok_or(StrategyError::NoProfit)?;
    Ok(Transaction::new(
        id,
        config.agent,
        TxKind::Swap(
            SwapIntent::new(intent.pool, intent.direction.opposite(), size, TokenAmount::ZERO)
                .map_err(|_| StrategyError::NoProfit)?,
        ),
        gas_price,
        target.origin_round,
    ))
}

/// A two-leg arbitrage plan: buy X where it is cheap, sell it where it is
/// dear, sized to the price-crossing point (capped by budget).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArbPlan {
    pub buy_pool: PoolId,
    pub sell_pool: PoolId,
    /// Y paid into the cheap pool.
    pub amount_in: TokenAmount,
    /// X bought on the cheap pool and sold into the dear one.
    pub acquired: TokenAmount,
    pub estimated_profit: TokenAmount,
}

/// When two pools disagree on the spot price of X, returns the plan that
/// buys on the cheaper pool and sells on the dearer one, sized by bisection
/// to the price-crossing point so post-trade spots differ by well under 1%
/// (budget permitting). Returns `None` for agreeing pools, zero budgets, or
/// unprofitable dust.
pub fn cross_pool_arbitrage(a: &Pool, b: &Pool, budget: TokenAmount) -> Option<ArbPlan> {
    use std::cmp::Ordering;
    let (cheap, dear) = match a.cmp_price_of_x(b) {
        Ordering::Less => (a, b),
        Ordering::Greater => (b, a),
        Ordering::Equal => return None,
    };
    if budget.is_zero() {
        return None;
    }

    // Pools after paying `s` Y into the cheap pool and selling the proceeds
    // into the dear one. The signed price gap rises monotonically in s.
    let after = |s: u64| -> Option<(Pool, Pool, TokenAmount)> {
        let (cheap_after, bought) =
            amm::apply_swap(cheap, crate::types::SwapDirection::YForX, TokenAmount::from_micros(s))
                .ok()?;
        if bought.is_zero() {
            return None;
        }
        let (dear_after, got) =
            amm::apply_swap(dear, crate::types::SwapDirection::XForY, bought).ok()?;
        Some((cheap_after, dear_after, got))
    };
    let crossed = |s: u64| -> bool {
        match after(s) {
            Some((ca, da, _)) => ca.cmp_price_of_x(&da) != Ordering::Less,
            None => false,
        }
    };

    // Smallest size that lifts the cheap pool's price up to the dear one's.
    let size = if crossed(budget.micros()) {
        let mut lo = 1u64;
        let mut hi = budget.micros();
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if crossed(mid) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo
    } else {
        budget.micros()
    };

    let (_, _, got) = after(size)?;
    let profit = got.micros() as i128 - size as i128;
    if profit <= 0 {
        return None;
    }
    let (_, bought) =
        amm::apply_swap(cheap, crate::types::SwapDirection::YForX, TokenAmount::from_micros(size))
            .ok()?;
    Some(ArbPlan {
        buy_pool: cheap.id,
        sell_pool: dear.id,
        amount_in: TokenAmount::from_micros(size),
        acquired: bought,
        estimated_profit: TokenAmount::from_micros(profit as u64),
    })
}

/// One escalation step of a priority-gas auction: outbid the rival while the
/// new bid stays within our valuation, otherwise withdraw (`None`). Losing
/// bids already broadcast stay in the mempool and may still be included and
/// revert; that burned gas is the waste the engine measures.
pub fn gas_auction_response(
    rival_bid: TokenAmount,
    own_valuation: TokenAmount,
    config: &SearcherConfig,
) -> Option<TokenAmount> {
    let next = rival_bid.checked_add(config.gas_bump)?;
    if next <= own_valuation {
        Some(next)
    } else {
        None
    }
}
