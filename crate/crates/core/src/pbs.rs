//! The builder/relay/proposer pipeline: builders assemble blocks from their
//! public view plus private channels under honest / self-dealing /
//! censoring / colluding policies and bid for inclusion; relays forward the
//! most profitable (optionally sanctions-filtered) block; the proposer signs
//! the best offer. User order-flow routing closes the centralization loop.
//! A legacy single-miner mode covers the pre-separation design.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::amm::{self, Pool};
use crate::chain::{Block, Bundle, BundleSpan, Transaction, TxKind};
use crate::types::{AgentId, NodeId, PoolId, SwapIntent, TokenAmount, TxId};

/// Mutually exclusive builder behavior; `Honest` excludes all the others by
/// construction.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuilderPolicy {
    Honest,
    /// Wraps the most profitable private-flow victim in a builder-owned
    /// sandwich; builders can still act as searchers.
    SelfDealing,
    /// Excludes transactions touching sanctioned agents.
    Censoring,
    /// Splits sandwiches across blocks inside a coalition: the front and
    /// victim land now, the back leg is handed to a partner's next block.
    Colluding,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuilderProfile {
    pub agent: AgentId,
    pub node: NodeId,
    pub policy: BuilderPolicy,
    /// Required for colluding builders, meaningless otherwise.
    pub coalition: Option<u32>,
    /// The builder sees the network this many ticks early.
    pub latency_advantage: u32,
    /// Share of realized block profit bid to the proposer, in basis points.
    pub payment_fraction_bps: u16,
    /// When set, payloads are randomly shuffled (bundles dissolved) and each
    /// transaction pays the fixed ordering overhead.
    pub tee_bound: bool,
    /// Budget for the builder's own sandwich front legs.
    pub self_deal_budget: TokenAmount,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelayProfile {
    pub agent: AgentId,
    /// Regulated relays drop blocks containing sanctioned transactions.
    pub regulated: bool,
    pub connected_builders: Vec<AgentId>,
}

/// Per-builder order-flow counters with add-one smoothing:
/// rate = (included + 1) / (received + 2), so fresh builders start at 1/2.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InclusionStats {
    pub received: u64,
    pub included: u64,
}

impl InclusionStats {
    pub fn smoothed_rate(&self) -> f64 {
        (self.included + 1) as f64 / (self.received + 2) as f64
    }

    /// Exact rational comparison of smoothed rates, no floats involved.
    pub fn cmp_rate(&self, other: &InclusionStats) -> std::cmp::Ordering {
        let lhs = (self.included + 1) as u128 * (other.received + 2) as u128;
        let rhs = (other.included + 1) as u128 * (self.received + 2) as u128;
        lhs.cmp(&rhs)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bid {
    pub builder: AgentId,
    pub block: Block,
    pub amount: TokenAmount,
}

/// What a builder hands back besides the block itself: its estimated profit,
/// any self-extraction it embedded, and a deferred back leg for a coalition
/// partner.
#[derive(Clone, Debug)]
pub struct BuildOutcome {
    pub block: Block,
    /// Gas fees plus own-sandwich gains, estimated on the build snapshot.
    pub estimated_profit: TokenAmount,
    /// (victim tx, front size, estimated gain) for a builder-own sandwich.
    pub self_extraction: Option<SelfExtraction>,
    /// Back leg reserved for a coalition partner's next block.
    pub deferred_back_leg: Option<Transaction>,
    /// Builder-crafted transaction ids consumed from `next_seq`.
    pub ids_consumed: u32,
}

#[derive(Clone, Copy, Debug)]
pub struct SelfExtraction {
    pub victim: TxId,
    pub front: TxId,
    pub back: Option<TxId>,
    pub estimated_gain: TokenAmount,
}

/// Everything a builder sees when assembling a block.
pub struct BuildInputs<'a> {
    pub view: &'a [Transaction],
    pub private_bundles: &'a [Bundle],
    pub pools: &'a BTreeMap<PoolId, Pool>,
    pub sanctioned: &'a [AgentId],
    pub gas_limit: u64,
    pub height: u64,
    /// Back legs handed over by coalition partners, injected first.
    pub inherited_back_legs: &'a [Transaction],
    /// Allocator for builder-crafted transaction ids.
    pub next_seq: u32,
    /// Extra gas per transaction under enforced random ordering.
    pub tee_overhead_gas: u32,
}

fn touches_sanctioned(tx: &Transaction, sanctioned: &[AgentId]) -> bool {
    if sanctioned.contains(&tx.sender) {
        return true;
    }
    if let TxKind::Transfer(t) = &tx.kind {
        if sanctioned.contains(&t.to) {
            return true;
        }
    }
    false
}

pub fn block_contains_sanctioned(block: &Block, sanctioned: &[AgentId]) -> bool {
    block.payload.iter().any(|tx| touches_sanctioned(tx, sanctioned))
}

/// Orders public transactions by gas price (tx id tie-break), keeps private
/// bundles contiguous placed by their effective gas price, greedily packs to
/// the gas limit, and applies the profile's policy on top. Returns the block
/// plus the builder's estimated profit (gas fees + own-sandwich gains).
pub fn builder_build_block<R: Rng>(
    profile: &BuilderProfile,
    inputs: &BuildInputs,
    rng: &mut R,
) -> BuildOutcome {
    let mut seq = inputs.next_seq;
    let mut ids_consumed = 0u32;
    let mut alloc_id = || {
        let id = TxId::new(profile.agent, seq);
        seq += 1;
        ids_consumed += 1;
        id
    };

    // Censoring drops sanctioned traffic before anything else sees it.
    let censor = profile.policy == BuilderPolicy::Censoring;
    let mut public: Vec<Transaction> = inputs
        .view
        .iter()
        .filter(|tx| !censor || !touches_sanctioned(tx, inputs.sanctioned))
        .copied()
        .collect();
    let mut bundles: Vec<Bundle> = inputs
        .private_bundles
        .iter()
        .filter(|b| !censor || !b.txs.iter().any(|t| touches_sanctioned(t, inputs.sanctioned)))
        .cloned()
        .collect();

    // Self-dealing / colluding builders wrap the most profitable private
    // victim in their own sandwich.
    let mut self_extraction = None;
    let mut deferred_back_leg = None;
    if matches!(profile.policy, BuilderPolicy::SelfDealing | BuilderPolicy::Colluding) {
        if let Some((bundle_idx, leg_idx, front_size, gain)) =
            best_private_victim(&bundles, inputs.pools, profile.self_deal_budget)
        {
            let victim = bundles[bundle_idx].txs[leg_idx];
            let TxKind::Swap(victim_intent) = victim.kind else { unreachable!() };
            let pool = inputs.pools[&victim_intent.pool];
            let (_, acquired) =
                amm::apply_swap(&pool, victim_intent.direction, front_size).expect("sized on this pool");
            let front_tx = Transaction::new(
                alloc_id(),
                profile.agent,
                TxKind::Swap(
                    SwapIntent::new(
                        victim_intent.pool,
                        victim_intent.direction,
                        front_size,
                        TokenAmount::ZERO,
                    )
                    .expect("front size is positive"),
                ),
                victim.gas_price,
                victim.origin_round,
            );
            let back_tx = Transaction::new(
                alloc_id(),
                profile.agent,
                TxKind::Swap(
                    SwapIntent::new(
                        victim_intent.pool,
                        victim_intent.direction.opposite(),
                        acquired,
                        TokenAmount::ZERO,
                    )
                    .expect("acquired is positive"),
                ),
                victim.gas_price,
                victim.origin_round,
            );

            let submitter = bundles[bundle_idx].submitter;
            let mut legs = bundles[bundle_idx].txs.clone();
            if profile.policy == BuilderPolicy::Colluding {
                // Interblock split: front + victim now, back leg handed to a
                // coalition partner's next block.
                legs.insert(leg_idx, front_tx);
                deferred_back_leg = Some(back_tx);
                self_extraction = Some(SelfExtraction {
                    victim: victim.id,
                    front: front_tx.id,
                    back: None,
                    estimated_gain: gain,
                });
            } else {
                legs.insert(leg_idx, front_tx);
                legs.insert(leg_idx + 2, back_tx);
                self_extraction = Some(SelfExtraction {
                    victim: victim.id,
                    front: front_tx.id,
                    back: Some(back_tx.id),
                    estimated_gain: gain,
                });
            }
            bundles[bundle_idx] = Bundle::new(legs, submitter).expect("non-empty");
        }
    }

    // A bundle consumes its victims: drop standalone copies from the public
    // list so the block cannot double-include a tx id.
    let bundled_ids: Vec<TxId> =
        bundles.iter().flat_map(|b| b.txs.iter().map(|t| t.id)).collect();
    public.retain(|tx| !bundled_ids.contains(&tx.id));

    // Greedy packing by gas price; bundles ride as units at their effective
    // gas price and stay contiguous.
    enum Item {
        Tx(Transaction),
        Bundle(Bundle),
    }
    let mut items: Vec<(TokenAmount, TxId, Item)> = Vec::new();
    for tx in public {
        items.push((tx.gas_price, tx.id, Item::Tx(tx)));
    }
    for bundle in bundles {
        let key_id = bundle.txs.iter().map(|t| t.id).min().expect("non-empty");
        items.push((bundle.effective_gas_price(), key_id, Item::Bundle(bundle)));
    }
    items.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));

    let mut payload: Vec<Transaction> = Vec::new();
    let mut spans: Vec<BundleSpan> = Vec::new();
    let mut gas_left = inputs.gas_limit;
    // Under enforced random ordering every packed tx will also pay the
    // ordering overhead; budget for it now so the block stays within limit.
    let extra = if profile.tee_bound { inputs.tee_overhead_gas as u64 } else { 0 };

    // Partners' deferred back legs execute first, ahead of everything.
    for back in inputs.inherited_back_legs {
        if back.gas_used as u64 + extra <= gas_left {
            gas_left -= back.gas_used as u64 + extra;
            payload.push(*back);
        }
    }

    for (_, _, item) in items {
        match item {
            Item::Tx(tx) => {
                if tx.gas_used as u64 + extra <= gas_left {
                    gas_left -= tx.gas_used as u64 + extra;
                    payload.push(tx);
                }
            }
            Item::Bundle(bundle) => {
                let need = bundle.total_gas() + extra * bundle.txs.len() as u64;
                if need <= gas_left {
                    gas_left -= need;
                    spans.push(BundleSpan { start: payload.len(), len: bundle.txs.len() });
                    payload.extend(bundle.txs);
                }
            }
        }
    }

    // Enforced random ordering: dissolve bundles, shuffle uniformly, charge
    // the overhead. Randomness defeats ordering intent by design.
    if profile.tee_bound {
        payload = crate::policy::tee_shuffle(payload, inputs.tee_overhead_gas, rng);
        spans.clear();
        self_extraction = None;
        deferred_back_leg = None;
    }

    let gas_fees: u128 =
        payload.iter().map(|t| t.gas_price.micros() as u128 * t.gas_used as u128).sum();
    let own_gas: u128 = payload
        .iter()
        .filter(|t| t.sender == profile.agent)
        .map(|t| t.gas_price.micros() as u128 * t.gas_used as u128)
        .sum();
    let extraction_gain =
        self_extraction.map(|s| s.estimated_gain.micros() as u128).unwrap_or(0);
    // Own legs' gas washes out (builder pays itself).
    let estimated_profit =
        TokenAmount::from_micros((gas_fees - own_gas + extraction_gain) as u64);

    let block = Block {
        height: inputs.height,
        builder: profile.agent,
        payload,
        bundle_spans: spans,
        bid: TokenAmount::ZERO, // set by the caller from estimated_profit
        gas_limit: inputs.gas_limit,
    };
    BuildOutcome { block, estimated_profit, self_extraction, deferred_back_leg, ids_consumed }
}

/// Most profitable sandwichable swap across private bundles:
/// (bundle index, leg index, front size, estimated gain).
fn best_private_victim(
    bundles: &[Bundle],
    pools: &BTreeMap<PoolId, Pool>,
    budget: TokenAmount,
) -> Option<(usize, usize, TokenAmount, TokenAmount)> {
    let mut best: Option<(usize, usize, TokenAmount, TokenAmount)> = None;
    for (bi, bundle) in bundles.iter().enumerate() {
        // Only raw order flow is fair game: a bundle that already contains a
        // searcher's own legs is left alone (its intent is opaque).
        if bundle.txs.len() != 1 {
            continue;
        }
        for (li, tx) in bundle.txs.iter().enumerate() {
            let TxKind::Swap(intent) = &tx.kind else { continue };
            let Some(pool) = pools.get(&intent.pool) else { continue };
            let Ok(front) = amm::optimal_frontrun_size(pool, intent, budget) else { continue };
            if front.is_zero() {
                continue;
            }
            let gain = amm::sandwich_profit(pool, intent, front).unwrap_or(0);
            if gain <= 0 {
                continue;
            }
            let gain = TokenAmount::from_micros(gain as u64);
            if best.is_none_or(|(_, _, _, g)| gain > g) {
                best = Some((bi, li, front, gain));
            }
        }
    }
    best
}

/// Relay selection: regulated relays drop bids whose blocks carry sanctioned
/// transactions, then argmax by amount with lowest builder id as tie-break.
pub fn relay_select<'a>(
    bids: &'a [Bid],
    relay: &RelayProfile,
    sanctioned: &[AgentId],
) -> Option<&'a Bid> {
    bids.iter()
        .filter(|b| relay.connected_builders.contains(&b.builder))
        .filter(|b| !relay.regulated || !block_contains_sanctioned(&b.block, sanctioned))
        .min_by(|l, r| r.amount.cmp(&l.amount).then_with(|| l.builder.cmp(&r.builder)))
}

/// Proposer selection: the highest relay offer, unless a local block beats
/// them all (or none exist). Offers tie-break by lowest builder id.
pub fn proposer_select(
    relay_offers: &[Bid],
    local_block: Option<(Block, TokenAmount)>,
) -> Result<Block, ProposerError> {
    let best_offer = relay_offers
        .iter()
        .min_by(|l, r| r.amount.cmp(&l.amount).then_with(|| l.builder.cmp(&r.builder)));
    match (best_offer, local_block) {
        (Some(offer), Some((local, local_profit))) => {
            if local_profit > offer.amount {
                Ok(local)
            } else {
                Ok(offer.block.clone())
            }
        }
        (Some(offer), None) => Ok(offer.block.clone()),
        (None, Some((local, _))) => Ok(local),
        (None, None) => Err(ProposerError::NothingToPropose),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProposerError {
    #[error("no relay offers and no local block")]
    NothingToPropose,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutingMode {
    /// Argmax smoothed inclusion rate, lowest builder id tie-break.
    Rate,
    /// Seeded uniform pick.
    Uniform,
    /// Weight proportional to reputation score^gamma.
    Reputation,
}

/// Routes one user order to a builder. `builders` must be non-empty and is
/// iterated in ascending id order so ties are deterministic.
pub fn route_order_flow<R: Rng>(
    stats: &BTreeMap<AgentId, InclusionStats>,
    mode: RoutingMode,
    reputation: Option<&crate::policy::ReputationLedger>,
    gamma: u32,
    rng: &mut R,
) -> AgentId {
    assert!(!stats.is_empty(), "route_order_flow needs at least one builder");
    match mode {
        RoutingMode::Rate => {
            let mut best: Option<(AgentId, &InclusionStats)> = None;
            for (id, s) in stats {
                match best {
                    None => best = Some((*id, s)),
                    Some((_, cur)) if s.cmp_rate(cur) == std::cmp::Ordering::Greater => {
                        best = Some((*id, s))
                    }
                    _ => {}
                }
            }
            best.expect("non-empty").0
        }
        RoutingMode::Uniform => {
            let ids: Vec<AgentId> = stats.keys().copied().collect();
            ids[rng.gen_range(0..ids.len())]
        }
        RoutingMode::Reputation => {
            // Integer weights: score^gamma scaled to 10^12; ledger-less
            // builders get the neutral prior.
            let ids: Vec<AgentId> = stats.keys().copied().collect();
            let weights: Vec<u128> = ids
                .iter()
                .map(|id| {
                    let (num, den) = reputation
                        .map(|l| l.score_ratio(*id))
                        .unwrap_or((1, 2));
                    let mut w: u128 = 1_000_000_000_000;
                    for _ in 0..gamma {
                        w = w * num as u128 / den as u128;
                    }
                    w.max(1)
                })
                .collect();
            let total: u128 = weights.iter().sum();
            let mut draw = rng.gen_range(0..total);
            for (id, w) in ids.iter().zip(&weights) {
                if draw < *w {
                    return *id;
                }
                draw -= w;
            }
            *ids.last().expect("non-empty")
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LegacyMode {
    /// Append in the order this node received transactions.
    Naive,
    /// Gas price descending.
    Greedy,
}

/// Pre-separation single-miner block building from the miner's own view;
/// the miner keeps all fees, so the bid is zero.
pub fn miner_build_legacy(
    view: &[Transaction],
    mode: LegacyMode,
    miner: AgentId,
    height: u64,
    gas_limit: u64,
) -> Block {
    let mut txs: Vec<Transaction> = view.to_vec();
    if mode == LegacyMode::Greedy {
        txs.sort_by_key(|t| t.priority_key());
    }
    let mut payload = Vec::new();
    let mut gas_left = gas_limit;
    for tx in txs {
        if (tx.gas_used as u64) <= gas_left {
            gas_left -= tx.gas_used as u64;
            payload.push(tx);
        }
    }
    Block {
        height,
        builder: miner,
        payload,
        bundle_spans: vec![],
        bid: TokenAmount::ZERO,
        gas_limit,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::SwapDirection;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tok(s: &str) -> TokenAmount {
        s.parse().unwrap()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn profile(policy: BuilderPolicy) -> BuilderProfile {
        BuilderProfile {
            agent: AgentId(100),
            node: NodeId(0),
            policy,
            coalition: if policy == BuilderPolicy::Colluding { Some(1) } else { None },
            latency_advantage: 0,
            payment_fraction_bps: 9000,
            tee_bound: false,
            self_deal_budget: tok("1000"),
        }
    }

    fn pools() -> BTreeMap<PoolId, Pool> {
        BTreeMap::from([(
            PoolId(0),
            Pool::new(PoolId(0), TokenAmount::from_tokens(1000), TokenAmount::from_tokens(1000), 0)
                .unwrap(),
        )])
    }

    fn noop(sender: u32, seq: u32, gas_price: &str) -> Transaction {
        Transaction::new(
            TxId::new(AgentId(sender), seq),
            AgentId(sender),
            TxKind::Noop,
            tok(gas_price),
            0,
        )
    }

    fn swap(sender: u32, seq: u32, amount: &str, min_out: &str, gas_price: &str) -> Transaction {
        Transaction::new(
            TxId::new(AgentId(sender), seq),
            AgentId(sender),
            TxKind::Swap(
                SwapIntent::new(PoolId(0), SwapDirection::YForX, tok(amount), tok(min_out)).unwrap(),
            ),
            tok(gas_price),
            0,
        )
    }

    fn inputs<'a>(
        view: &'a [Transaction],
        bundles: &'a [Bundle],
        pools: &'a BTreeMap<PoolId, Pool>,
        sanctioned: &'a [AgentId],
    ) -> BuildInputs<'a> {
        BuildInputs {
            view,
            private_bundles: bundles,
            pools,
            sanctioned,
            gas_limit: 10_000,
            height: 1,
            inherited_back_legs: &[],
            next_seq: 1000,
            tee_overhead_gas: 20,
        }
    }

    #[test]
    fn honest_builder_orders_by_gas_price() {
        let view = [noop(1, 0, "0.000005"), noop(2, 0, "0.000009"), noop(3, 0, "0.000007")];
        let pools = pools();
        let out = builder_build_block(&profile(BuilderPolicy::Honest), &inputs(&view, &[], &pools, &[]), &mut rng());
        let prices: Vec<TokenAmount> = out.block.payload.iter().map(|t| t.gas_price).collect();
        assert_eq!(prices, vec![tok("0.000009"), tok("0.000007"), tok("0.000005")]);
        assert!(out.self_extraction.is_none());
    }

    #[test]
    fn equal_gas_price_breaks_ties_by_tx_id() {
        let view = [noop(2, 5, "0.000005"), noop(1, 9, "0.000005")];
        let pools = pools();
        let out = builder_build_block(&profile(BuilderPolicy::Honest), &inputs(&view, &[], &pools, &[]), &mut rng());
        let ids: Vec<TxId> = out.block.payload.iter().map(|t| t.id).collect();
        assert_eq!(ids, vec![TxId::new(AgentId(1), 9), TxId::new(AgentId(2), 5)]);
    }

    #[test]
    fn gas_limit_packs_greedily() {
        let view = [noop(1, 0, "0.000009"), noop(2, 0, "0.000008"), noop(3, 0, "0.000007")];
        let pools = pools();
        let mut inp = inputs(&view, &[], &pools, &[]);
        inp.gas_limit = 20; // room for two noops only
        let out = builder_build_block(&profile(BuilderPolicy::Honest), &inp, &mut rng());
        assert_eq!(out.block.payload.len(), 2);
        assert_eq!(out.block.total_gas(), 20);
    }

    // Frozen from the sequential oracle: a private 100 Y victim with floor
    // 75.757576 yields an own-sandwich gain of 18.032786 at front size
    // 99.999998.
    #[test]
    fn self_dealing_builder_wraps_private_victim() {
        let victim = swap(1, 0, "100", "75.757576", "0.000010");
        let bundles = [Bundle::new(vec![victim], AgentId(1)).unwrap()];
        let pools = pools();
        let out = builder_build_block(
            &profile(BuilderPolicy::SelfDealing),
            &inputs(&[], &bundles, &pools, &[]),
            &mut rng(),
        );
        let kinds: Vec<AgentId> = out.block.payload.iter().map(|t| t.sender).collect();
        assert_eq!(kinds, vec![AgentId(100), AgentId(1), AgentId(100)], "buy, victim, sell");
        let extraction = out.self_extraction.unwrap();
        assert_eq!(extraction.victim, victim.id);
        assert_eq!(extraction.estimated_gain, tok("18.032786"));
        assert_eq!(out.block.bundle_spans, vec![BundleSpan { start: 0, len: 3 }]);
        assert_eq!(out.estimated_profit, tok("18.032786") + tok("0.000010").mul_int(100));
    }

    #[test]
    fn censoring_builder_filters_sanctioned_senders() {
        let view = [noop(1, 0, "0.000005"), noop(2, 0, "0.000009")];
        let pools = pools();
        let sanctioned = [AgentId(2)];
        let out = builder_build_block(
            &profile(BuilderPolicy::Censoring),
            &inputs(&view, &[], &pools, &sanctioned),
            &mut rng(),
        );
        assert_eq!(out.block.payload.len(), 1);
        assert_eq!(out.block.payload[0].sender, AgentId(1));
    }

    #[test]
    fn colluding_builder_defers_the_back_leg() {
        let victim = swap(1, 0, "100", "75.757576", "0.000010");
        let bundles = [Bundle::new(vec![victim], AgentId(1)).unwrap()];
        let pools = pools();
        let out = builder_build_block(
            &profile(BuilderPolicy::Colluding),
            &inputs(&[], &bundles, &pools, &[]),
            &mut rng(),
        );
        // Front and victim land now; the sell leg is handed off.
        assert_eq!(out.block.payload.len(), 2);
        let back = out.deferred_back_leg.unwrap();
        let TxKind::Swap(back_intent) = back.kind else { panic!() };
        assert_eq!(back_intent.direction, SwapDirection::XForY);
        // The partner's block injects the inherited leg first.
        let view = [noop(3, 0, "0.000009")];
        let mut partner = profile(BuilderPolicy::Colluding);
        partner.agent = AgentId(101);
        let inherited = [back];
        let mut inp = inputs(&view, &[], &pools, &[]);
        inp.inherited_back_legs = &inherited;
        let out2 = builder_build_block(&partner, &inp, &mut rng());
        assert_eq!(out2.block.payload[0].id, back.id, "inherited back leg executes first");
    }

    #[test]
    fn bundle_contiguity_survives_packing() {
        let view = [noop(5, 0, "0.000020"), noop(6, 0, "0.000001")];
        let legs =
            vec![swap(1, 0, "10", "0", "0.000010"), swap(1, 1, "10", "0", "0.000010")];
        let bundles = [Bundle::new(legs, AgentId(1)).unwrap()];
        let pools = pools();
        let out = builder_build_block(
            &profile(BuilderPolicy::Honest),
            &inputs(&view, &bundles, &pools, &[]),
            &mut rng(),
        );
        assert_eq!(out.block.bundle_spans.len(), 1);
        let span = out.block.bundle_spans[0];
        let senders: Vec<AgentId> = out.block.payload[span.start..span.start + span.len]
            .iter()
            .map(|t| t.sender)
            .collect();
        assert_eq!(senders, vec![AgentId(1), AgentId(1)], "bundle stayed contiguous");
        assert!(out.block.validate().is_ok());
    }

    #[test]
    fn bundled_tx_never_duplicated_from_public_view() {
        let victim = swap(1, 0, "100", "0", "0.000010");
        let view = [victim];
        let bundles = [Bundle::new(vec![victim], AgentId(1)).unwrap()];
        let pools = pools();
        let out = builder_build_block(
            &profile(BuilderPolicy::Honest),
            &inputs(&view, &bundles, &pools, &[]),
            &mut rng(),
        );
        assert_eq!(out.block.payload.len(), 1, "victim appears exactly once");
        assert!(out.block.validate().is_ok());
    }

    fn bid(builder: u32, amount: &str) -> Bid {
        Bid {
            builder: AgentId(builder),
            block: Block {
                height: 1,
                builder: AgentId(builder),
                payload: vec![],
                bundle_spans: vec![],
                bid: tok(amount),
                gas_limit: 10_000,
            },
            amount: tok(amount),
        }
    }

    fn relay(regulated: bool, builders: &[u32]) -> RelayProfile {
        RelayProfile {
            agent: AgentId(200),
            regulated,
            connected_builders: builders.iter().map(|b| AgentId(*b)).collect(),
        }
    }

    #[test]
    fn relay_picks_the_highest_bid() {
        let bids = [bid(1, "5"), bid(2, "7")];
        let chosen = relay_select(&bids, &relay(false, &[1, 2]), &[]).unwrap();
        assert_eq!(chosen.builder, AgentId(2));
    }

    #[test]
    fn relay_ties_break_to_lowest_builder_id() {
        let bids = [bid(2, "5"), bid(1, "5")];
        let chosen = relay_select(&bids, &relay(false, &[1, 2]), &[]).unwrap();
        assert_eq!(chosen.builder, AgentId(1));
    }

    #[test]
    fn regulated_relay_skips_sanctioned_blocks() {
        let mut high = bid(1, "9");
        high.block.payload.push(noop(66, 0, "0.000005"));
        let bids = [high, bid(2, "7")];
        let sanctioned = [AgentId(66)];
        let chosen = relay_select(&bids, &relay(true, &[1, 2]), &sanctioned).unwrap();
        assert_eq!(chosen.builder, AgentId(2), "second-best clean block wins");
        let unregulated = relay_select(&bids, &relay(false, &[1, 2]), &sanctioned).unwrap();
        assert_eq!(unregulated.builder, AgentId(1));
    }

    #[test]
    fn relay_ignores_unconnected_builders() {
        let bids = [bid(1, "9"), bid(2, "7")];
        let chosen = relay_select(&bids, &relay(false, &[2]), &[]).unwrap();
        assert_eq!(chosen.builder, AgentId(2));
    }

    #[test]
    fn proposer_takes_best_offer_or_local() {
        let offers = [bid(1, "7"), bid(2, "9")];
        assert_eq!(proposer_select(&offers, None).unwrap().builder, AgentId(2));

        let local = miner_build_legacy(&[], LegacyMode::Naive, AgentId(9), 1, 10_000);
        assert_eq!(
            proposer_select(&[], Some((local.clone(), tok("1")))).unwrap().builder,
            AgentId(9)
        );
        assert_eq!(
            proposer_select(&offers[..1], Some((local.clone(), tok("8")))).unwrap().builder,
            AgentId(9),
            "local profit 8 beats the 7 offer"
        );
        assert_eq!(
            proposer_select(&offers[..1], Some((local, tok("7")))).unwrap().builder,
            AgentId(1),
            "offers win ties"
        );
        assert_eq!(proposer_select(&[], None), Err(ProposerError::NothingToPropose));
    }

    #[test]
    fn rate_routing_argmaxes_and_ties_to_lowest_id() {
        let mut stats = BTreeMap::new();
        stats.insert(AgentId(1), InclusionStats { received: 10, included: 9 });
        stats.insert(AgentId(2), InclusionStats { received: 10, included: 8 });
        let chosen = route_order_flow(&stats, RoutingMode::Rate, None, 1, &mut rng());
        assert_eq!(chosen, AgentId(1));

        let fresh = BTreeMap::from([
            (AgentId(3), InclusionStats::default()),
            (AgentId(1), InclusionStats::default()),
            (AgentId(2), InclusionStats::default()),
        ]);
        assert_eq!(route_order_flow(&fresh, RoutingMode::Rate, None, 1, &mut rng()), AgentId(1));
    }

    #[test]
    fn uniform_routing_is_reproducible_per_seed() {
        let stats = BTreeMap::from([
            (AgentId(1), InclusionStats::default()),
            (AgentId(2), InclusionStats::default()),
            (AgentId(3), InclusionStats::default()),
        ]);
        let seq = |seed: u64| -> Vec<AgentId> {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            (0..12)
                .map(|_| route_order_flow(&stats, RoutingMode::Uniform, None, 1, &mut r))
                .collect()
        };
        assert_eq!(seq(42), seq(42), "same seed, same routing sequence");
        assert_ne!(seq(42), seq(43), "different seed diverges");
    }

    #[test]
    fn legacy_naive_keeps_arrival_order_and_greedy_sorts() {
        // Arrival order C(t3), A(t1), B(t2) is whatever the view gives us.
        let a = noop(1, 0, "0.000001");
        let b = noop(2, 0, "0.000009");
        let c = noop(3, 0, "0.000005");
        let view = [a, b, c];
        let naive = miner_build_legacy(&view, LegacyMode::Naive, AgentId(9), 1, 10_000);
        let ids: Vec<TxId> = naive.payload.iter().map(|t| t.id).collect();
        assert_eq!(ids, vec![a.id, b.id, c.id]);

        let greedy = miner_build_legacy(&view, LegacyMode::Greedy, AgentId(9), 1, 10_000);
        let ids: Vec<TxId> = greedy.payload.iter().map(|t| t.id).collect();
        assert_eq!(ids, vec![b.id, c.id, a.id]);

        let empty = miner_build_legacy(&[], LegacyMode::Naive, AgentId(9), 1, 10_000);
        assert!(empty.payload.is_empty());
    }

    #[test]
    fn smoothed_rate_formula() {
        let fresh = InclusionStats::default();
        assert_eq!(fresh.smoothed_rate(), 0.5);
        let s = InclusionStats { received: 8, included: 5 };
        assert_eq!(s.smoothed_rate(), 0.6);
        assert_eq!(
            s.cmp_rate(&InclusionStats { received: 10, included: 5 }),
            std::cmp::Ordering::Greater
        );
    }
}
