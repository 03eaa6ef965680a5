//! Foundational domain types: fixed-point token amounts, id newtypes, and
//! swap intents shared by every other module.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// One token = 10^6 millionths. All amounts are integer counts of millionths
/// and every arithmetic result is floored at the 6th fractional digit, so a
/// run produces bit-identical numbers on any platform.
pub const SCALE: u64 = 1_000_000;

/// Non-negative fixed-point token quantity (integer millionths).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct TokenAmount(u64);

impl TokenAmount {
    pub const ZERO: TokenAmount = TokenAmount(0);

    pub const fn from_micros(micros: u64) -> Self {
        TokenAmount(micros)
    }

    pub const fn from_tokens(tokens: u64) -> Self {
        TokenAmount(tokens * SCALE)
    }

    pub const fn micros(self) -> u64 {
        self.0
    }

    pub const fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn checked_add(self, other: Self) -> Option<Self> {
        self.0.checked_add(other.0).map(TokenAmount)
    }

    pub fn checked_sub(self, other: Self) -> Option<Self> {
        self.0.checked_sub(other.0).map(TokenAmount)
    }

    pub fn saturating_sub(self, other: Self) -> Self {
        TokenAmount(self.0.saturating_sub(other.0))
    }

    /// Multiply by an integer count (e.g. gas price × gas units).
    pub fn mul_int(self, n: u64) -> Self {
        let v = (self.0 as u128) * (n as u128);
        assert!(v <= u64::MAX as u128, "token amount overflow");
        TokenAmount(v as u64)
    }

    /// Multiply by basis points, flooring at the millionth.
    pub fn mul_bps(self, bps: u16) -> Self {
        TokenAmount(((self.0 as u128) * (bps as u128) / 10_000) as u64)
    }
}

impl std::ops::Add for TokenAmount {
    type Output = TokenAmount;
    fn add(self, rhs: TokenAmount) -> TokenAmount {
        self.checked_add(rhs).expect("token amount overflow")
    }
}

impl std::ops::AddAssign for TokenAmount {
    fn add_assign(&mut self, rhs: TokenAmount) {
        *self = *self + rhs;
    }
}

impl std::ops::Sub for TokenAmount {
    type Output = TokenAmount;
    fn sub(self, rhs: TokenAmount) -> TokenAmount {
        self.checked_sub(rhs).expect("token amount underflow")
    }
}

impl fmt::Display for TokenAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / SCALE, self.0 % SCALE)
    }
}

// Debug renders like Display so assertions show "90.909090", not a raw
// micro count.
impl fmt::Debug for TokenAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid token amount {input:?}: {reason}")]
pub struct ParseAmountError {
    pub input: String,
    pub reason: &'static str,
}

impl FromStr for TokenAmount {
    type Err = ParseAmountError;

    /// Accepts "123", "123.4", "123.456789"; at most 6 fractional digits.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason| ParseAmountError { input: s.to_string(), reason };
        let (int_part, frac_part) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(err("empty"));
        }
        if frac_part.len() > 6 {
            return Err(err("more than 6 fractional digits"));
        }
        let int: u64 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| err("bad integer part"))?
        };
        let mut frac: u64 = 0;
        if !frac_part.is_empty() {
            frac = frac_part.parse().map_err(|_| err("bad fractional part"))?;
            frac *= 10u64.pow(6 - frac_part.len() as u32);
        }
        int.checked_mul(SCALE)
            .and_then(|v| v.checked_add(frac))
            .map(TokenAmount)
            .ok_or_else(|| err("overflow"))
    }
}

impl Serialize for TokenAmount {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for TokenAmount {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct V;
        impl serde::de::Visitor<'_> for V {
            type Value = TokenAmount;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a token amount as string (\"12.5\") or non-negative integer")
            }
            fn visit_str<E: serde::de::Error>(self, v: &str) -> Result<TokenAmount, E> {
                v.parse().map_err(|e| E::custom(e))
            }
            fn visit_u64<E: serde::de::Error>(self, v: u64) -> Result<TokenAmount, E> {
                Ok(TokenAmount::from_tokens(v))
            }
            fn visit_i64<E: serde::de::Error>(self, v: i64) -> Result<TokenAmount, E> {
                if v < 0 {
                    return Err(E::custom("token amount must be non-negative"));
                }
                Ok(TokenAmount::from_tokens(v as u64))
            }
        }
        deserializer.deserialize_any(V)
    }
}

/// Formats a signed micro quantity the same way `TokenAmount` renders.
pub fn format_signed_micros(micros: i128) -> String {
    let sign = if micros < 0 { "-" } else { "" };
    let abs = micros.unsigned_abs();
    format!("{sign}{}.{:06}", abs / SCALE as u128, abs % SCALE as u128)
}

macro_rules! id_newtype {
    ($(#[$doc:meta])* $name:ident, $inner:ty) => {
        $(#[$doc])*
        #[derive(
            Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug,
            Serialize, Deserialize, Default,
        )]
        pub struct $name(pub $inner);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }

        impl FromStr for $name {
            type Err = std::num::ParseIntError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                s.parse().map($name)
            }
        }
    };
}

id_newtype!(
    /// An agent (user, searcher, builder, relay, proposer, regulator).
    AgentId, u32);
id_newtype!(
    /// A network node holding its own mempool view.
    NodeId, u32);
id_newtype!(
    /// A constant-product pool.
    PoolId, u32);

/// Transaction id: unique within a run, stable across counterfactual re-runs
/// because it encodes (sender, per-sender sequence) rather than a global
/// counter.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct TxId(pub u64);

impl TxId {
    pub fn new(sender: AgentId, seq: u32) -> Self {
        TxId(((sender.0 as u64) << 32) | seq as u64)
    }
}

impl fmt::Display for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for TxId {
    type Err = std::num::ParseIntError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(TxId)
    }
}

/// The two assets of the (single) traded pair. Y doubles as the numeraire:
/// gas, bids, penalties and rebates are all paid in Y.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum Asset {
    X,
    Y,
}

impl Asset {
    pub fn other(self) -> Asset {
        match self {
            Asset::X => Asset::Y,
            Asset::Y => Asset::X,
        }
    }
}

impl fmt::Display for Asset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Asset::X => "X",
            Asset::Y => "Y",
        })
    }
}

impl FromStr for Asset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "X" => Ok(Asset::X),
            "Y" => Ok(Asset::Y),
            other => Err(format!("unknown asset {other:?}")),
        }
    }
}

/// Swap direction, named by the asset paid in: `XForY` pays X and receives Y.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwapDirection {
    XForY,
    YForX,
}

impl SwapDirection {
    pub fn asset_in(self) -> Asset {
        match self {
            SwapDirection::XForY => Asset::X,
            SwapDirection::YForX => Asset::Y,
        }
    }

    pub fn asset_out(self) -> Asset {
        self.asset_in().other()
    }

    pub fn opposite(self) -> SwapDirection {
        match self {
            SwapDirection::XForY => SwapDirection::YForX,
            SwapDirection::YForX => SwapDirection::XForY,
        }
    }
}

impl fmt::Display for SwapDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SwapDirection::XForY => "x_for_y",
            SwapDirection::YForX => "y_for_x",
        })
    }
}

impl FromStr for SwapDirection {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "x_for_y" => Ok(SwapDirection::XForY),
            "y_for_x" => Ok(SwapDirection::YForX),
            other => Err(format!("unknown direction {other:?}")),
        }
    }
}

/// A user's swap order: pay `amount_in` of the direction's in-asset, insist
/// on at least `min_out` of the out-asset (the slippage floor).
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct SwapIntent {
    pub pool: PoolId,
    pub direction: SwapDirection,
    pub amount_in: TokenAmount,
    pub min_out: TokenAmount,
}

impl SwapIntent {
    /// Rejects zero-input intents at construction.
    pub fn new(
        pool: PoolId,
        direction: SwapDirection,
        amount_in: TokenAmount,
        min_out: TokenAmount,
    ) -> Result<Self, InvalidIntent> {
        if amount_in.is_zero() {
            return Err(InvalidIntent::ZeroAmountIn);
        }
        Ok(SwapIntent { pool, direction, amount_in, min_out })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InvalidIntent {
    #[error("swap amount_in must be positive")]
    ZeroAmountIn,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn amount_parse_and_display_round_trip() {
        for s in ["0.000000", "1.000000", "90.909090", "1000.000000", "0.000001"] {
            let a: TokenAmount = s.parse().unwrap();
            assert_eq!(a.to_string(), s);
        }
        assert_eq!("100".parse::<TokenAmount>().unwrap(), TokenAmount::from_tokens(100));
        assert_eq!("0.5".parse::<TokenAmount>().unwrap(), TokenAmount::from_micros(500_000));
    }

    #[test]
    fn amount_parse_rejects_excess_precision() {
        assert!("1.0000001".parse::<TokenAmount>().is_err());
        assert!("".parse::<TokenAmount>().is_err());
        assert!("abc".parse::<TokenAmount>().is_err());
    }

    #[test]
    fn zero_amount_intent_rejected() {
        let err = SwapIntent::new(
            PoolId(0),
            SwapDirection::YForX,
            TokenAmount::ZERO,
            TokenAmount::ZERO,
        );
        assert_eq!(err, Err(InvalidIntent::ZeroAmountIn));
    }

    #[test]
    fn tx_ids_are_stable_per_sender() {
        let a = TxId::new(AgentId(3), 7);
        let b = TxId::new(AgentId(3), 8);
        let c = TxId::new(AgentId(4), 7);
        assert!(a < b && b < c);
        assert_eq!(a.0, (3u64 << 32) | 7);
    }

    #[test]
    fn signed_micros_formatting() {
        assert_eq!(format_signed_micros(-1_500_000), "-1.500000");
        assert_eq!(format_signed_micros(15_151_515), "15.151515");
        assert_eq!(format_signed_micros(0), "0.000000");
    }
}
