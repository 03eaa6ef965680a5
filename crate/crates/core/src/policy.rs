//! The intervention toolkit: a regulator penalty game over builder
//! collusion, enforced-random ordering with its spam counter-attack, a
//! user-report reputation ledger, and the rebate auction that flips the
//! extraction market around to face the user.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chain::Transaction;
use crate::types::{AgentId, TokenAmount, TxId};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegulatoryRegime {
    pub active: bool,
    /// Per-colluding-block detection probability.
    pub p_detect: f64,
    /// Debited from every coalition member on each detection.
    pub penalty: TokenAmount,
}

impl RegulatoryRegime {
    pub fn inactive() -> Self {
        RegulatoryRegime { active: false, p_detect: 0.0, penalty: TokenAmount::ZERO }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CollusionChoice {
    Collude,
    Honest,
}

/// The deterrence threshold: collusion stops paying once the penalty
/// exceeds (c − h) / p. Infinite when detection never happens.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DeterrenceThreshold {
    Finite(TokenAmount),
    Infinite,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("collusion game needs c > h ≥ 0, got h={h} c={c}")]
    CollusionNotTempting { h: TokenAmount, c: TokenAmount },
    #[error("duplicate report by user {user} for tx {tx}")]
    DuplicateReport { user: AgentId, tx: TxId },
    #[error("report references tx {tx} not included by builder {builder}")]
    UnknownInclusion { builder: AgentId, tx: TxId },
}

/// Myopic coalition decision: collude iff the collusive payoff beats the
/// honest one after expected penalties, `c − p·F > h`. Comparison is exact:
/// p is taken at parts-per-million resolution, matching the regime's own
/// granularity. Also returns the deterrence threshold F* = (c − h)/p.
pub fn collusion_decision(
    honest_profit: TokenAmount,
    collusive_profit: TokenAmount,
    regime: &RegulatoryRegime,
) -> Result<(CollusionChoice, DeterrenceThreshold), PolicyError> {
    let h = honest_profit.micros() as i128;
    let c = collusive_profit.micros() as i128;
    if c <= h {
        return Err(PolicyError::CollusionNotTempting { h: honest_profit, c: collusive_profit });
    }
    let p_ppm = (regime.p_detect * 1_000_000.0).round() as i128;
    let effective_p_ppm = if regime.active { p_ppm } else { 0 };
    if effective_p_ppm <= 0 {
        return Ok((CollusionChoice::Collude, DeterrenceThreshold::Infinite));
    }
    let penalty = regime.penalty.micros() as i128;
    // c − p·F > h  ⟺  (c − h)·10^6 > p_ppm·F
    let choice = if (c - h) * 1_000_000 > effective_p_ppm * penalty {
        CollusionChoice::Collude
    } else {
        CollusionChoice::Honest
    };
    let threshold = (c - h) * 1_000_000 / effective_p_ppm;
    Ok((choice, DeterrenceThreshold::Finite(TokenAmount::from_micros(threshold as u64))))
}

/// One penalty assessment against one coalition member.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PenaltyEvent {
    pub block_height: u64,
    pub builder: AgentId,
    pub amount: TokenAmount,
}

/// Audits colluding blocks: each is independently detected with probability
/// `p_detect`; on detection, every coalition member is fined.
pub fn regulator_audit<R: Rng>(
    colluding_blocks: &[u64],
    coalition_members: &[AgentId],
    regime: &RegulatoryRegime,
    rng: &mut R,
) -> Vec<PenaltyEvent> {
    if !regime.active {
        return Vec::new();
    }
    let mut penalties = Vec::new();
    for &height in colluding_blocks {
        if rng.gen::<f64>() < regime.p_detect {
            for &builder in coalition_members {
                penalties.push(PenaltyEvent { block_height: height, builder, amount: regime.penalty });
            }
        }
    }
    penalties
}

/// Uniform random permutation of the payload (Fisher-Yates), with the fixed
/// ordering overhead added to every transaction's gas. Bundles are dissolved
/// on purpose: randomness defeats ordering intent.
pub fn tee_shuffle<R: Rng>(
    mut payload: Vec<Transaction>,
    overhead_gas: u32,
    rng: &mut R,
) -> Vec<Transaction> {
    for tx in &mut payload {
        tx.gas_used += overhead_gas;
    }
    let n = payload.len();
    if n < 2 {
        return payload;
    }
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        payload.swap(i, j);
    }
    payload
}

/// Probability that at least one of `k` attacker copies lands before the
/// victim under a uniform shuffle: k/(k+1). Unrelated transactions cancel
/// out by symmetry.
pub fn spam_success_probability(k: u64) -> f64 {
    k as f64 / (k + 1) as f64
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
struct BuilderReputation {
    inclusions: u64,
    reports: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReputationEvent {
    /// The builder included a user order cleanly.
    Included { tx: TxId },
    /// A user suspects this inclusion was front-run or sandwiched.
    UserReport { user: AgentId, tx: TxId },
}

/// Per-builder inclusion/report counters with the smoothed score
/// (inclusions − reports + 1)/(inclusions + 2), clamped to [0, 1]. Reports
/// are suspicions, not proofs; duplicates per (user, tx) are rejected, and a
/// report must reference a tx this builder actually included.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReputationLedger {
    builders: BTreeMap<AgentId, BuilderReputation>,
    inclusion_index: BTreeMap<TxId, AgentId>,
    seen_reports: BTreeSet<(AgentId, TxId)>,
}

impl ReputationLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, builder: AgentId, event: ReputationEvent) -> Result<(), PolicyError> {
        match event {
            ReputationEvent::Included { tx } => {
                self.builders.entry(builder).or_default().inclusions += 1;
                self.inclusion_index.insert(tx, builder);
                Ok(())
            }
            ReputationEvent::UserReport { user, tx } => {
                if self.inclusion_index.get(&tx) != Some(&builder) {
                    return Err(PolicyError::UnknownInclusion { builder, tx });
                }
                if !self.seen_reports.insert((user, tx)) {
                    return Err(PolicyError::DuplicateReport { user, tx });
                }
                self.builders.entry(builder).or_default().reports += 1;
                Ok(())
            }
        }
    }

    /// Score as an exact (numerator, denominator) pair, clamped to [0, 1].
    pub fn score_ratio(&self, builder: AgentId) -> (u64, u64) {
        let rep = self.builders.get(&builder).copied().unwrap_or_default();
        let den = rep.inclusions + 2;
        let num = (rep.inclusions + 1).saturating_sub(rep.reports).min(den);
        (num, den)
    }

    pub fn score(&self, builder: AgentId) -> f64 {
        let (num, den) = self.score_ratio(builder);
        num as f64 / den as f64
    }

    pub fn counters(&self, builder: AgentId) -> (u64, u64) {
        let rep = self.builders.get(&builder).copied().unwrap_or_default();
        (rep.inclusions, rep.reports)
    }
}

/// Sealed-bid rebate auction for one user order: extractors bid rebates, the
/// highest rebate wins exclusive execution rights (lowest extractor id
/// breaks ties), and the user is credited the winning rebate. No bids means
/// the order proceeds through normal routing, rebate zero.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EscalatorAuction {
    bids: BTreeMap<AgentId, TokenAmount>,
}

impl EscalatorAuction {
    pub fn new() -> Self {
        Self::default()
    }

    /// First bid per extractor wins; the rest are ignored (sealed, one shot).
    pub fn submit_bid(&mut self, extractor: AgentId, rebate: TokenAmount) {
        self.bids.entry(extractor).or_insert(rebate);
    }

    pub fn bid_count(&self) -> usize {
        self.bids.len()
    }

    /// First-price resolution: (winner, rebate) or None without bids.
    pub fn resolve(&self) -> Option<(AgentId, TokenAmount)> {
        self.bids
            .iter()
            .max_by(|l, r| l.1.cmp(r.1).then_with(|| r.0.cmp(l.0)))
            .map(|(id, rebate)| (*id, *rebate))
    }
}

/// Convenience wrapper matching the auction's batch form: collects sealed
/// bids and resolves in one shot.
pub fn fee_escalator_auction(
    bids: &BTreeMap<AgentId, TokenAmount>,
) -> (Option<AgentId>, TokenAmount) {
    let mut auction = EscalatorAuction::new();
    for (extractor, rebate) in bids {
        auction.submit_bid(*extractor, *rebate);
    }
    match auction.resolve() {
        Some((winner, rebate)) => (Some(winner), rebate),
        None => (None, TokenAmount::ZERO),
    }
}
