//! Constant-product market maker math: quotes, swaps, slippage, and the
//! attacker-side optimal front-run sizing.
//!
//! All math is integer (millionths) with floor rounding on outputs, so the
//! pool keeps every rounding remainder and `x·y` never decreases.

use serde::{Deserialize, Serialize};

use crate::types::{PoolId, SwapDirection, SwapIntent, TokenAmount};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AmmError {
    #[error("pool reserves must be positive")]
    ZeroReserve,
    #[error("swap amount_in must be positive")]
    ZeroAmountIn,
    #[error("fee_bps {0} out of range [0, 1000]")]
    FeeOutOfRange(u16),
}

/// A two-asset constant-product pool. `fee_bps` shaves the effective input
/// used for pricing; the full input still enters the reserves.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Pool {
    pub id: PoolId,
    pub reserve_x: TokenAmount,
    pub reserve_y: TokenAmount,
    pub fee_bps: u16,
}

impl Pool {
    pub fn new(
        id: PoolId,
        reserve_x: TokenAmount,
        reserve_y: TokenAmount,
        fee_bps: u16,
    ) -> Result<Self, AmmError> {
        if reserve_x.is_zero() || reserve_y.is_zero() {
            return Err(AmmError::ZeroReserve);
        }
        if fee_bps > 1000 {
            return Err(AmmError::FeeOutOfRange(fee_bps));
        }
        Ok(Pool { id, reserve_x, reserve_y, fee_bps })
    }

    fn reserves_for(&self, direction: SwapDirection) -> (u128, u128) {
        match direction {
            SwapDirection::XForY => (self.reserve_x.micros() as u128, self.reserve_y.micros() as u128),
            SwapDirection::YForX => (self.reserve_y.micros() as u128, self.reserve_x.micros() as u128),
        }
    }

    /// Compares this pool's spot price of X (in Y per X) against `other`'s,
    /// exactly, via cross-multiplication.
    pub fn cmp_price_of_x(&self, other: &Pool) -> std::cmp::Ordering {
        let lhs = self.reserve_y.micros() as u128 * other.reserve_x.micros() as u128;
        let rhs = other.reserve_y.micros() as u128 * self.reserve_x.micros() as u128;
        lhs.cmp(&rhs)
    }
}

/// Quoted output for paying `amount_in`: floor(out · eff / (in + eff)) where
/// eff is the fee-reduced input. The pool is not modified.
pub fn quote_swap(
    pool: &Pool,
    direction: SwapDirection,
    amount_in: TokenAmount,
) -> Result<TokenAmount, AmmError> {
    if amount_in.is_zero() {
        return Err(AmmError::ZeroAmountIn);
    }
    let (in_res, out_res) = pool.reserves_for(direction);
    if in_res == 0 || out_res == 0 {
        return Err(AmmError::ZeroReserve);
    }
    let eff = amount_in.micros() as u128 * (10_000 - pool.fee_bps as u128) / 10_000;
    let out = out_res * eff / (in_res + eff);
    Ok(TokenAmount::from_micros(out as u64))
}

/// Executes the swap: returns the updated pool and the floored output.
/// Reserves move by (+amount_in, −amount_out); the output floor keeps the
/// remainder in the pool, so reserves never hit zero.
pub fn apply_swap(
    pool: &Pool,
    direction: SwapDirection,
    amount_in: TokenAmount,
) -> Result<(Pool, TokenAmount), AmmError> {
    let out = quote_swap(pool, direction, amount_in)?;
    let mut next = *pool;
    match direction {
        SwapDirection::XForY => {
            next.reserve_x += amount_in;
            next.reserve_y = next.reserve_y - out;
        }
        SwapDirection::YForX => {
            next.reserve_y += amount_in;
            next.reserve_x = next.reserve_x - out;
        }
    }
    Ok((next, out))
}

/// Fraction of the quoted output lost at execution. Negative values mean
/// price improvement. Requires quoted_out > 0.
pub fn realized_slippage(quoted_out: TokenAmount, executed_out: TokenAmount) -> f64 {
    assert!(!quoted_out.is_zero(), "realized_slippage requires quoted_out > 0");
    (quoted_out.micros() as f64 - executed_out.micros() as f64) / quoted_out.micros() as f64
}

/// The victim's output if a same-direction front-run of `front` executes
/// first. Monotone non-increasing in `front`.
pub fn victim_out_after_frontrun(
    pool: &Pool,
    victim: &SwapIntent,
    front: TokenAmount,
) -> Result<TokenAmount, AmmError> {
    if front.is_zero() {
        return quote_swap(pool, victim.direction, victim.amount_in);
    }
    let (moved, _) = apply_swap(pool, victim.direction, front)?;
    quote_swap(&moved, victim.direction, victim.amount_in)
}

/// Largest front-run input `a ≤ budget` that still leaves the victim at or
/// above its `min_out` floor, found by bisection on the millionth grid.
/// Returns zero when no size yields a strictly profitable buy-victim-sell
/// round trip (rounding eats microscopic front-runs, and a victim quoting at
/// its full output leaves no room at all).
pub fn optimal_frontrun_size(
    pool: &Pool,
    victim: &SwapIntent,
    budget: TokenAmount,
) -> Result<TokenAmount, AmmError> {
    if budget.is_zero() {
        return Ok(TokenAmount::ZERO);
    }
    if victim_out_after_frontrun(pool, victim, TokenAmount::ZERO)? < victim.min_out {
        // The victim reverts even untouched; front-running it extracts nothing.
        return Ok(TokenAmount::ZERO);
    }
    let mut lo = 0u64;
    let mut hi = budget.micros();
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        let out = victim_out_after_frontrun(pool, victim, TokenAmount::from_micros(mid))?;
        if out >= victim.min_out {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let best = TokenAmount::from_micros(lo);
    if best.is_zero() || sandwich_profit(pool, victim, best)? <= 0 {
        return Ok(TokenAmount::ZERO);
    }
    Ok(best)
}

/// Signed profit (micros of the front leg's in-asset) of the full
/// buy → victim → sell round trip with front-run size `front`, executed
/// alone on `pool`. Gas-free: gas is accounted by the caller.
pub fn sandwich_profit(
    pool: &Pool,
    victim: &SwapIntent,
    front: TokenAmount,
) -> Result<i128, AmmError> {
    if front.is_zero() {
        return Ok(0);
    }
    let (p1, acquired) = apply_swap(pool, victim.direction, front)?;
    let p2 = match quote_swap(&p1, victim.direction, victim.amount_in) {
        Ok(out) if out >= victim.min_out => apply_swap(&p1, victim.direction, victim.amount_in)?.0,
        // Victim reverts: the attacker unwinds on the un-moved-by-victim pool.
        _ => p1,
    };
    if acquired.is_zero() {
        return Ok(-(front.micros() as i128));
    }
    let (_, back_out) = apply_swap(&p2, victim.direction.opposite(), acquired)?;
    Ok(back_out.micros() as i128 - front.micros() as i128)
}
