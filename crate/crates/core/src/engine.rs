//! The deterministic round loop: users submit, transactions propagate,
//! searchers attack, builders build, relays filter, the proposer signs, the
//! block executes, and policy/stats update; all driven by independent
//! seeded random streams so a run is a pure function of (scenario, seed).
//!
//! Welfare loss is measured against a counterfactual re-run of the same
//! seed with every searcher strategy and builder self-dealing disabled.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::amm::{self, Pool};
use crate::chain::{
    execute_block, Block, Bundle, ChainState, Receipt, ReceiptStatus, Transaction, TxKind,
    GAS_SWAP,
};
use crate::events::{Channel, EventLog, EventRecord};
use crate::mempool::{MempoolNet, NetworkTopology, PrivateChannel, Tick};
use crate::metrics::{
    censorship_stats, MetricsReport, MevClass, MevEventKind, RoundRow, SanctionedSubmission,
    ValueFlows,
};
use crate::pbs::{
    builder_build_block, miner_build_legacy, proposer_select, relay_select, Bid, BuildInputs,
    BuilderPolicy, BuilderProfile, InclusionStats, RelayProfile,
};
use crate::policy::{
    collusion_decision, fee_escalator_auction, regulator_audit, CollusionChoice,
    DeterrenceThreshold, RegulatoryRegime, ReputationEvent, ReputationLedger,
};
use crate::scenario::{
    min_out_from_tolerance, ConfigError, DirectionConfig, FlowMode, Mode, Scenario,
};
use crate::strategies::{
    craft_backrun, craft_frontrun_copy, craft_sandwich, gas_auction_response, scan_opportunities,
    SearcherConfig, StrategyKind,
};
use crate::types::{AgentId, Asset, NodeId, PoolId, SwapDirection, SwapIntent, TokenAmount, TxId};

/// Everything a finished run hands back.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub events: EventLog,
    pub metrics: MetricsReport,
    pub final_state: ChainState,
    pub state_hash: u64,
}

/// Stable agent-id layout: users, searchers, builders, relays, proposer,
/// regulator; assigned in that order so logs and counterfactual re-runs
/// agree on every id.
#[derive(Debug, Clone)]
pub struct Roster {
    pub users: Vec<AgentId>,
    pub searchers: Vec<AgentId>,
    pub builders: Vec<AgentId>,
    pub relays: Vec<AgentId>,
    pub proposer: AgentId,
    pub regulator: AgentId,
}

impl Roster {
    fn from_scenario(sc: &Scenario) -> Roster {
        let mut next = 0u32;
        let mut take = |n: usize| -> Vec<AgentId> {
            let ids = (next..next + n as u32).map(AgentId).collect();
            next += n as u32;
            ids
        };
        let users = take(sc.users.count as usize);
        let searchers = take(sc.searchers.len());
        let builders = take(sc.builders.len());
        let relays = take(sc.relays.len());
        let proposer = AgentId(next);
        let regulator = AgentId(next + 1);
        Roster { users, searchers, builders, relays, proposer, regulator }
    }

    fn names(&self) -> Vec<(AgentId, String)> {
        let mut out = Vec::new();
        for (i, id) in self.users.iter().enumerate() {
            out.push((*id, format!("U{i}")));
        }
        for (i, id) in self.searchers.iter().enumerate() {
            out.push((*id, format!("S{i}")));
        }
        for (i, id) in self.builders.iter().enumerate() {
            out.push((*id, format!("B{i}")));
        }
        for (i, id) in self.relays.iter().enumerate() {
            out.push((*id, format!("R{i}")));
        }
        out.push((self.proposer, "P0".to_string()));
        out.push((self.regulator, "REG".to_string()));
        out
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Independent deterministic stream per subsystem, so disabling one set of
/// draws (e.g. searchers in the counterfactual run) never shifts another.
fn stream(seed: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a(label.as_bytes()))
}

fn draw_amount<R: Rng>(rng: &mut R, min: TokenAmount, max: TokenAmount) -> TokenAmount {
    let span = max.micros() - min.micros();
    if span == 0 {
        min
    } else {
        TokenAmount::from_micros(min.micros() + rng.gen_range(0..=span))
    }
}

/// What burned this transaction's gas, for waste classification.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum WasteTag {
    Spam,
    Escalation,
}

/// An extraction attempt awaiting settlement: once every own leg has a
/// receipt, the par net flow over successful legs is the realized profit.
#[derive(Clone, Debug)]
struct PendingAction {
    actor: AgentId,
    kind: MevEventKind,
    victim: Option<TxId>,
    estimate: TokenAmount,
    /// (tx id, amount_in in micros) per own leg.
    legs: Vec<(TxId, u64)>,
    settled: BTreeMap<TxId, Option<i128>>,
}

impl PendingAction {
    fn new(
        actor: AgentId,
        kind: MevEventKind,
        victim: Option<TxId>,
        estimate: TokenAmount,
        legs: Vec<(TxId, u64)>,
    ) -> Self {
        PendingAction { actor, kind, victim, estimate, legs, settled: BTreeMap::new() }
    }

    fn complete(&self) -> bool {
        self.legs.iter().all(|(id, _)| self.settled.contains_key(id))
    }

    fn realized(&self) -> Option<i128> {
        let nets: Vec<i128> = self.settled.values().flatten().copied().collect();
        if nets.is_empty() {
            None
        } else {
            Some(nets.iter().sum())
        }
    }
}

struct UserOrderMeta {
    user: AgentId,
    quote_at_submit: TokenAmount,
    routed_builder: Option<AgentId>,
    rebate_due: Option<(AgentId, TokenAmount)>,
}

#[derive(Clone, Copy)]
struct TxOutcome {
    status: ReceiptStatus,
    amount_out: TokenAmount,
    gas_paid: TokenAmount,
    included_round: Option<u32>,
}

struct Sim<'a> {
    sc: &'a Scenario,
    roster: Roster,
    topo: NetworkTopology,
    chain: ChainState,
    net: MempoolNet,
    channels: BTreeMap<AgentId, PrivateChannel>,
    builder_profiles: Vec<BuilderProfile>,
    relay_profiles: Vec<RelayProfile>,
    searcher_cfgs: Vec<SearcherConfig>,
    stats: BTreeMap<AgentId, InclusionStats>,
    reputation: ReputationLedger,
    regime: RegulatoryRegime,
    sanctioned: Vec<AgentId>,
    seqs: BTreeMap<AgentId, u32>,
    // independent rng streams
    rng_users: ChaCha8Rng,
    rng_routing: ChaCha8Rng,
    rng_tee: ChaCha8Rng,
    rng_audit: ChaCha8Rng,
    events: EventLog,
    // bookkeeping
    order_meta: BTreeMap<TxId, UserOrderMeta>,
    outcomes: BTreeMap<TxId, TxOutcome>,
    submit_round: BTreeMap<TxId, u32>,
    actions: Vec<PendingAction>,
    waste_tags: BTreeMap<TxId, WasteTag>,
    targeted: BTreeMap<AgentId, BTreeSet<TxId>>,
    pending_backlegs: BTreeMap<AgentId, Vec<Transaction>>,
    submitted_tx_ids: BTreeSet<TxId>,
    // metrics accumulators
    blocks_won: BTreeMap<AgentId, u64>,
    rows: Vec<RoundRow>,
    block_has_sanctioned: Vec<bool>,
    sanctioned_submissions: Vec<SanctionedSubmission>,
    colluding_rounds: u64,
    rebates_total: u64,
    penalties_total: u64,
    gas_waste_total: u64,
    mev_totals: BTreeMap<MevClass, i128>,
    initial_supply: (u128, u128),
}

impl<'a> Sim<'a> {
    fn new(sc: &'a Scenario) -> Result<Sim<'a>, ConfigError> {
        sc.validate()?;
        let roster = Roster::from_scenario(sc);
        let seed = sc.sim.seed;

        let mut topo = NetworkTopology::new(sc.network.nodes, sc.network.default_latency);
        for link in &sc.network.links {
            topo.set_latency(NodeId(link.from), NodeId(link.to), link.latency);
        }

        let mut chain = ChainState::default();
        for (i, p) in sc.pools.iter().enumerate() {
            let pool = Pool::new(PoolId(i as u32), p.reserve_x, p.reserve_y, p.fee_bps)
                .map_err(|e| ConfigError::new(format!("pool.{i}"), e.to_string()))?;
            chain.pools.insert(pool.id, pool);
        }

        let mut events = EventLog::default();
        events.push(EventRecord::Meta { key: "version".into(), value: "1".into() });
        events.push(EventRecord::Meta { key: "seed".into(), value: seed.to_string() });
        events.push(EventRecord::Meta {
            key: "mode".into(),
            value: match sc.sim.mode {
                Mode::Pbs => "pbs".into(),
                Mode::Legacy => "legacy".into(),
            },
        });
        events.push(EventRecord::Meta { key: "rounds".into(), value: sc.sim.rounds.to_string() });
        for (agent, name) in roster.names() {
            events.push(EventRecord::AgentInfo { agent, name });
        }
        for pool in chain.pools.values() {
            events.push(EventRecord::PoolInit {
                pool: pool.id,
                reserve_x: pool.reserve_x,
                reserve_y: pool.reserve_y,
                fee_bps: pool.fee_bps,
            });
        }

        let credit = |events: &mut EventLog,
                          chain: &mut ChainState,
                          agent: AgentId,
                          asset: Asset,
                          amount: TokenAmount| {
            if amount.is_zero() {
                return;
            }
            chain.credit(agent, asset, amount);
            events.push(EventRecord::BalanceInit { agent, asset, amount });
        };
        for user in &roster.users {
            credit(&mut events, &mut chain, *user, Asset::X, sc.users.initial_x);
            credit(&mut events, &mut chain, *user, Asset::Y, sc.users.initial_y);
        }
        let mut searcher_cfgs = Vec::new();
        for (i, s) in sc.searchers.iter().enumerate() {
            let agent = roster.searchers[i];
            let default_bal = TokenAmount::from_micros(s.budget.micros().saturating_mul(2));
            credit(&mut events, &mut chain, agent, Asset::X, s.initial_x.unwrap_or(default_bal));
            credit(&mut events, &mut chain, agent, Asset::Y, s.initial_y.unwrap_or(default_bal));
            searcher_cfgs.push(SearcherConfig {
                agent,
                watched_pools: s.watched_pools.iter().map(|p| PoolId(*p)).collect(),
                strategies: s.strategies.clone(),
                gas_bump: s.gas_bump,
                max_escalations: s.max_escalations,
                budget: s.budget,
            });
        }
        let mut builder_profiles = Vec::new();
        let mut channels = BTreeMap::new();
        let mut stats = BTreeMap::new();
        for (i, b) in sc.builders.iter().enumerate() {
            let agent = roster.builders[i];
            credit(&mut events, &mut chain, agent, Asset::X, b.initial_x);
            credit(&mut events, &mut chain, agent, Asset::Y, b.initial_y);
            builder_profiles.push(BuilderProfile {
                agent,
                node: NodeId(b.node),
                policy: b.policy,
                coalition: b.coalition,
                latency_advantage: b.latency_advantage,
                payment_fraction_bps: b.payment_fraction_bps,
                tee_bound: b.tee,
                self_deal_budget: b.self_deal_budget,
            });
            channels.insert(agent, PrivateChannel::new(agent, b.accepts_private_flow));
            stats.insert(
                agent,
                InclusionStats { received: b.prior_received, included: b.prior_included },
            );
        }
        let relay_profiles: Vec<RelayProfile> = sc
            .relays
            .iter()
            .enumerate()
            .map(|(i, r)| RelayProfile {
                agent: roster.relays[i],
                regulated: r.regulated,
                connected_builders: match &r.builders {
                    None => roster.builders.clone(),
                    Some(list) => list.iter().map(|b| roster.builders[*b as usize]).collect(),
                },
            })
            .collect();
        let sanctioned: Vec<AgentId> =
            sc.sanctions.users.iter().map(|u| roster.users[*u as usize]).collect();
        let regime = RegulatoryRegime {
            active: sc.policy.regulator_active,
            p_detect: sc.policy.p_detect,
            penalty: sc.policy.penalty,
        };

        let initial_supply = (chain.total_supply(Asset::X), chain.total_supply(Asset::Y));
        Ok(Sim {
            sc,
            roster,
            topo,
            chain,
            net: MempoolNet::new(),
            channels,
            builder_profiles,
            relay_profiles,
            searcher_cfgs,
            stats,
            reputation: ReputationLedger::new(),
            regime,
            sanctioned,
            seqs: BTreeMap::new(),
            rng_users: stream(seed, "users"),
            rng_routing: stream(seed, "routing"),
            rng_tee: stream(seed, "tee"),
            rng_audit: stream(seed, "audit"),
            events,
            order_meta: BTreeMap::new(),
            outcomes: BTreeMap::new(),
            submit_round: BTreeMap::new(),
            actions: Vec::new(),
            waste_tags: BTreeMap::new(),
            targeted: BTreeMap::new(),
            pending_backlegs: BTreeMap::new(),
            submitted_tx_ids: BTreeSet::new(),
            blocks_won: BTreeMap::new(),
            rows: Vec::new(),
            block_has_sanctioned: Vec::new(),
            sanctioned_submissions: Vec::new(),
            colluding_rounds: 0,
            rebates_total: 0,
            penalties_total: 0,
            gas_waste_total: 0,
            mev_totals: BTreeMap::new(),
            initial_supply,
        })
    }

    fn next_tx_id(&mut self, agent: AgentId) -> TxId {
        let seq = self.seqs.entry(agent).or_insert(0);
        let id = TxId::new(agent, *seq);
        *seq += 1;
        id
    }

    fn log_tx_submit(&mut self, round: u32, tick: Tick, tx: &Transaction, channel: Channel) {
        self.submitted_tx_ids.insert(tx.id);
        self.submit_round.insert(tx.id, round);
        self.events.push(EventRecord::TxSubmit { round, tick, tx: *tx, channel });
    }

    fn broadcast(&mut self, round: u32, tick: Tick, tx: Transaction, origin: NodeId) {
        self.net
            .broadcast_tx(&self.topo, tx, origin, tick)
            .expect("validated node");
        self.log_tx_submit(round, tick, &tx, Channel::Public(origin));
    }

    fn submit_bundle(&mut self, round: u32, tick: Tick, builder: AgentId, bundle: Bundle) {
        for tx in &bundle.txs {
            if !self.submitted_tx_ids.contains(&tx.id) {
                self.log_tx_submit(round, tick, tx, Channel::Private(builder));
            }
        }
        self.events.push(EventRecord::BundleSubmit {
            round,
            tick,
            builder,
            submitter: bundle.submitter,
            txs: bundle.tx_ids(),
        });
        self.channels
            .get_mut(&builder)
            .expect("builder channel")
            .submit_private_bundle(bundle, tick)
            .expect("accepts private flow");
    }

    fn route_builder(&mut self) -> AgentId {
        crate::pbs::route_order_flow(
            &self.stats,
            self.sc.routing.mode,
            Some(&self.reputation),
            self.sc.routing.gamma,
            &mut self.rng_routing,
        )
    }

    /// Users submit this round's orders: scripted ones first, then the
    /// stochastic arrival process, all at the round's first tick.
    fn user_arrivals(&mut self, round: u32) {
        let tick0 = round as Tick * self.sc.sim.ticks_per_round as Tick;
        let mut orders: Vec<(AgentId, SwapIntent, TokenAmount)> = Vec::new();

        for order in self.sc.users.scripted.iter().filter(|o| o.round == round) {
            let user = self.roster.users[order.user as usize];
            let pool = self.chain.pools[&PoolId(order.pool)];
            let direction = match order.direction {
                DirectionConfig::YForX => SwapDirection::YForX,
                DirectionConfig::XForY => SwapDirection::XForY,
                DirectionConfig::Random => {
                    if self.rng_users.gen::<bool>() {
                        SwapDirection::YForX
                    } else {
                        SwapDirection::XForY
                    }
                }
            };
            let quote = amm::quote_swap(&pool, direction, order.amount_in).unwrap_or(TokenAmount::ZERO);
            let min_out = order.min_out.unwrap_or_else(|| {
                min_out_from_tolerance(quote, self.sc.users.slippage_tolerance_bps)
            });
            let intent = SwapIntent::new(PoolId(order.pool), direction, order.amount_in, min_out)
                .expect("validated scripted order");
            orders.push((user, intent, order.gas_price));
        }

        let users = self.sc.users.clone();
        if users.count > 0 && users.swaps_per_round > 0 {
            for ui in 0..users.count {
                let user = self.roster.users[ui as usize];
                for _ in 0..users.swaps_per_round {
                    // Burn the stream draws even for skipped submissions so
                    // arrival randomness stays aligned across configs.
                    let submit = self.rng_users.gen::<f64>() < users.submit_probability;
                    let amount = draw_amount(&mut self.rng_users, users.amount_in_min, users.amount_in_max);
                    let gas_price =
                        draw_amount(&mut self.rng_users, users.gas_price_min, users.gas_price_max);
                    let direction = match users.direction {
                        DirectionConfig::YForX => SwapDirection::YForX,
                        DirectionConfig::XForY => SwapDirection::XForY,
                        DirectionConfig::Random => {
                            if self.rng_users.gen::<bool>() {
                                SwapDirection::YForX
                            } else {
                                SwapDirection::XForY
                            }
                        }
                    };
                    if !submit {
                        continue;
                    }
                    let pool = self.chain.pools[&PoolId(users.pool)];
                    let quote =
                        amm::quote_swap(&pool, direction, amount).unwrap_or(TokenAmount::ZERO);
                    let min_out = min_out_from_tolerance(quote, users.slippage_tolerance_bps);
                    let intent = SwapIntent::new(PoolId(users.pool), direction, amount, min_out)
                        .expect("amount_in positive by validation");
                    orders.push((user, intent, gas_price));
                }
            }
        }

        for (user, intent, gas_price) in orders {
            let id = self.next_tx_id(user);
            let tx = Transaction::new(id, user, TxKind::Swap(intent), gas_price, round);
            let pool = self.chain.pools[&intent.pool];
            let quote =
                amm::quote_swap(&pool, intent.direction, intent.amount_in).unwrap_or(TokenAmount::ZERO);

            if self.sanctioned.contains(&user) {
                self.sanctioned_submissions.push(SanctionedSubmission {
                    tx: id,
                    submitted_round: round,
                    included_round: None,
                });
            }

            // Routing draw happens for every exclusive-flow order, even when
            // the escalator overrides the destination, keeping the routing
            // stream aligned between actual and counterfactual runs.
            let routed = if self.sc.users.flow == FlowMode::Exclusive && !self.builder_profiles.is_empty()
            {
                Some(self.route_builder())
            } else {
                None
            };

            // Rebate auction: extractors bid their full estimated value for
            // the exclusive right to wrap this order.
            if self.sc.policy.escalator {
                let mut bids: BTreeMap<AgentId, TokenAmount> = BTreeMap::new();
                for cfg in &self.searcher_cfgs {
                    if !cfg.has(StrategyKind::Sandwich) || !cfg.watched_pools.contains(&intent.pool)
                    {
                        continue;
                    }
                    let front =
                        amm::optimal_frontrun_size(&pool, &intent, cfg.budget).unwrap_or(TokenAmount::ZERO);
                    if front.is_zero() {
                        continue;
                    }
                    let gross = amm::sandwich_profit(&pool, &intent, front).unwrap_or(0);
                    if gross > 0 {
                        bids.insert(cfg.agent, TokenAmount::from_micros(gross as u64));
                    }
                }
                let (winner, rebate) = fee_escalator_auction(&bids);
                self.events.push(EventRecord::EscalatorAward {
                    round,
                    order: id,
                    winner,
                    rebate,
                    bids: bids.len() as u32,
                });
                if let Some(winner) = winner {
                    let cfg =
                        self.searcher_cfgs.iter().find(|c| c.agent == winner).cloned().unwrap();
                    let leg_ids = (self.next_tx_id(winner), self.next_tx_id(winner));
                    let bundle = craft_sandwich(&tx, &pool, &cfg, leg_ids)
                        .expect("winner bid implies a profitable size");
                    let legs = vec![
                        (bundle.txs[0].id, swap_amount_in(&bundle.txs[0])),
                        (bundle.txs[2].id, swap_amount_in(&bundle.txs[2])),
                    ];
                    self.actions.push(PendingAction::new(
                        winner,
                        MevEventKind::SearcherSandwich,
                        Some(id),
                        rebate,
                        legs,
                    ));
                    let builder = routed.unwrap_or_else(|| self.route_builder());
                    self.order_meta.insert(
                        id,
                        UserOrderMeta {
                            user,
                            quote_at_submit: quote,
                            routed_builder: Some(builder),
                            rebate_due: Some((winner, rebate)),
                        },
                    );
                    self.stats.entry(builder).or_default().received += 1;
                    self.submit_bundle(round, tick0, builder, bundle);
                    continue;
                }
            }

            self.order_meta.insert(
                id,
                UserOrderMeta {
                    user,
                    quote_at_submit: quote,
                    routed_builder: routed,
                    rebate_due: None,
                },
            );
            match routed {
                Some(builder) => {
                    self.stats.entry(builder).or_default().received += 1;
                    let bundle = Bundle::new(vec![tx], user).expect("single tx");
                    self.submit_bundle(round, tick0, builder, bundle);
                }
                None => {
                    self.broadcast(round, tick0, tx, NodeId(self.sc.users.node));
                }
            }
        }
    }

    /// Searchers scan their node views at the end of the round's propagation
    /// window and act on every fresh opportunity.
    fn searchers_act(&mut self, round: u32) {
        let tick = round as Tick * self.sc.sim.ticks_per_round as Tick
            + (self.sc.sim.ticks_per_round - 1) as Tick;
        let pools = self.chain.pools.clone();

        // Collect per-searcher plans first (immutable snapshots), then apply
        // in agent-id order.
        #[derive(Clone)]
        enum Plan {
            Sandwich { victim: Transaction },
            CopyRace { victim: Transaction, competitors: Vec<usize> },
            BackRun { victim: Transaction, moved: PoolId, reference: PoolId },
            Arb { plan: crate::strategies::ArbPlan },
        }
        let mut plans: Vec<(usize, Plan)> = Vec::new();
        let mut copy_races: BTreeMap<TxId, Vec<usize>> = BTreeMap::new();

        for (si, cfg) in self.searcher_cfgs.iter().enumerate() {
            if cfg.strategies.is_empty() {
                continue;
            }
            let node = NodeId(self.sc.searchers[si].node);
            let view = self.net.node_view(node, tick, &self.chain.included);
            let targeted = self.targeted.entry(cfg.agent).or_default().clone();
            let fresh: Vec<Transaction> =
                view.into_iter().filter(|t| !targeted.contains(&t.id)).collect();
            let opportunities = scan_opportunities(&fresh, &pools, cfg);
            let mut victims_taken: BTreeSet<TxId> = BTreeSet::new();
            let mut arb_taken = false;
            for opp in opportunities {
                match opp.kind {
                    StrategyKind::Sandwich => {
                        let Some(vid) = opp.victim else { continue };
                        if !victims_taken.insert(vid) {
                            continue;
                        }
                        let victim = *fresh.iter().find(|t| t.id == vid).expect("from view");
                        plans.push((si, Plan::Sandwich { victim }));
                    }
                    StrategyKind::FrontRunCopy => {
                        let Some(vid) = opp.victim else { continue };
                        if !victims_taken.insert(vid) {
                            continue;
                        }
                        copy_races.entry(vid).or_default().push(si);
                    }
                    StrategyKind::BackRun => {
                        let Some(vid) = opp.victim else { continue };
                        if !victims_taken.insert(vid) {
                            continue;
                        }
                        let victim = *fresh.iter().find(|t| t.id == vid).expect("from view");
                        plans.push((si, Plan::BackRun {
                            victim,
                            moved: opp.pools[0],
                            reference: opp.pools[1],
                        }));
                    }
                    StrategyKind::CrossPoolArb => {
                        if arb_taken || self.has_open_action(cfg.agent, MevEventKind::SearcherCrossPoolArb) {
                            continue;
                        }
                        arb_taken = true;
                        let (Some(a), Some(b)) =
                            (pools.get(&opp.pools[0]), pools.get(&opp.pools[1]))
                        else {
                            continue;
                        };
                        if let Some(plan) =
                            crate::strategies::cross_pool_arbitrage(a, b, cfg.budget)
                        {
                            plans.push((si, Plan::Arb { plan }));
                        }
                    }
                }
            }
        }
        for (vid, competitors) in copy_races {
            // The race belongs to every competitor; execute it once.
            let si = competitors[0];
            let victim = *self.net.get(vid).expect("copy race victim");
            plans.push((si, Plan::CopyRace { victim, competitors }));
        }
        plans.sort_by_key(|(si, _)| *si);

        for (si, plan) in plans {
            let cfg = self.searcher_cfgs[si].clone();
            match plan {
                Plan::Sandwich { victim } => self.do_sandwich(round, tick, &cfg, victim, &pools),
                Plan::CopyRace { victim, competitors } => {
                    self.do_copy_race(round, tick, victim, &competitors, &pools)
                }
                Plan::BackRun { victim, moved, reference } => {
                    self.do_backrun(round, tick, &cfg, victim, moved, reference, &pools)
                }
                Plan::Arb { plan } => self.do_arb(round, tick, &cfg, plan),
            }
        }

        if self.sc.spam.copies > 0 {
            self.spam_copies(round, tick);
        }
    }

    /// The ordering-lottery counter-attack: when a shuffled builder defeats
    /// gas priority, a copy bot floods each victim with identical copies to
    /// raise the odds that one lands first. The copies' gas is pure waste.
    fn spam_copies(&mut self, round: u32, tick: Tick) {
        let copies = self.sc.spam.copies;
        let users: BTreeSet<AgentId> = self.roster.users.iter().copied().collect();
        for (si, cfg) in self.searcher_cfgs.clone().iter().enumerate() {
            if !cfg.has(StrategyKind::FrontRunCopy) {
                continue;
            }
            let node = NodeId(self.sc.searchers[si].node);
            let view = self.net.node_view(node, tick, &self.chain.included);
            for victim in view {
                if !users.contains(&victim.sender)
                    || !matches!(victim.kind, TxKind::Swap(_))
                    || self.targeted.entry(cfg.agent).or_default().contains(&victim.id)
                {
                    continue;
                }
                self.targeted.entry(cfg.agent).or_default().insert(victim.id);
                for _ in 0..copies {
                    let id = self.next_tx_id(cfg.agent);
                    let Ok(copy) = craft_frontrun_copy(&victim, cfg, id) else { break };
                    self.waste_tags.insert(copy.id, WasteTag::Spam);
                    self.broadcast(round, tick, copy, node);
                }
            }
        }
    }

    fn has_open_action(&self, actor: AgentId, kind: MevEventKind) -> bool {
        self.actions.iter().any(|a| a.actor == actor && a.kind == kind && !a.complete())
    }

    fn do_sandwich(
        &mut self,
        round: u32,
        tick: Tick,
        cfg: &SearcherConfig,
        victim: Transaction,
        pools: &BTreeMap<PoolId, Pool>,
    ) {
        let TxKind::Swap(intent) = victim.kind else { return };
        let pool = pools[&intent.pool];
        let leg_ids = (self.next_tx_id(cfg.agent), self.next_tx_id(cfg.agent));
        let Ok(bundle) = craft_sandwich(&victim, &pool, cfg, leg_ids) else { return };
        self.targeted.entry(cfg.agent).or_default().insert(victim.id);
        let estimate = amm::sandwich_profit(&pool, &intent, swap_amount(&bundle.txs[0]))
            .unwrap_or(0)
            .max(0) as u64;
        self.actions.push(PendingAction::new(
            cfg.agent,
            MevEventKind::SearcherSandwich,
            Some(victim.id),
            TokenAmount::from_micros(estimate),
            vec![
                (bundle.txs[0].id, swap_amount_in(&bundle.txs[0])),
                (bundle.txs[2].id, swap_amount_in(&bundle.txs[2])),
            ],
        ));
        let builder = self.route_builder();
        self.submit_bundle(round, tick, builder, bundle);
    }

    /// Priority-gas escalation between every searcher that spotted the same
    /// victim. Each new bid broadcasts a fresh copy+unload pair; stale pairs
    /// stay in the mempool and burn gas when they lose the race.
    fn do_copy_race(
        &mut self,
        round: u32,
        tick: Tick,
        victim: Transaction,
        competitors: &[usize],
        pools: &BTreeMap<PoolId, Pool>,
    ) {
        let TxKind::Swap(intent) = victim.kind else { return };
        let mut bid = victim.gas_price;
        let mut leader: Option<usize> = None;
        let mut escalations: BTreeMap<usize, u32> = BTreeMap::new();
        let mut live: Vec<usize> = competitors.to_vec();
        for &si in competitors {
            self.targeted
                .entry(self.searcher_cfgs[si].agent)
                .or_default()
                .insert(victim.id);
        }

        loop {
            let mut acted = false;
            for &si in &live.clone() {
                if leader == Some(si) {
                    continue;
                }
                let cfg = self.searcher_cfgs[si].clone();
                let used = escalations.entry(si).or_insert(0);
                if *used >= cfg.max_escalations {
                    continue;
                }
                // Valuation as a gas-price cap: total gas spend for the two
                // legs must stay inside the estimated prize.
                let Some((unload_pool, est)) = self.copy_prize(&cfg, &intent, pools) else {
                    continue;
                };
                let valuation =
                    TokenAmount::from_micros(est.micros() / (2 * GAS_SWAP as u64));
                let Some(next_bid) = gas_auction_response(bid, valuation, &cfg) else {
                    continue;
                };
                *used += 1;
                bid = next_bid;
                leader = Some(si);
                acted = true;
                self.broadcast_copy_pair(round, tick, &cfg, &victim, next_bid, unload_pool, pools);
            }
            live.retain(|si| escalations.get(si).copied().unwrap_or(0) < self.searcher_cfgs[*si].max_escalations);
            if !acted {
                break;
            }
        }
    }

    /// Best pool to unload a copy's loot on, with the gross prize estimate.
    fn copy_prize(
        &self,
        cfg: &SearcherConfig,
        intent: &SwapIntent,
        pools: &BTreeMap<PoolId, Pool>,
    ) -> Option<(PoolId, TokenAmount)> {
        let pool = pools.get(&intent.pool)?;
        let loot = amm::quote_swap(pool, intent.direction, intent.amount_in).ok()?;
        let mut best: Option<(PoolId, i128)> = None;
        for other in cfg.watched_pools.iter().filter(|p| **p != intent.pool) {
            let other_pool = pools.get(other)?;
            let back = amm::quote_swap(other_pool, intent.direction.opposite(), loot).ok()?;
            let profit = back.micros() as i128 - intent.amount_in.micros() as i128;
            if best.is_none_or(|(_, b)| profit > b) {
                best = Some((*other, profit));
            }
        }
        let (pool_id, profit) = best?;
        if profit <= 0 {
            return None;
        }
        Some((pool_id, TokenAmount::from_micros(profit as u64)))
    }

    #[allow(clippy::too_many_arguments)]
    fn broadcast_copy_pair(
        &mut self,
        round: u32,
        tick: Tick,
        cfg: &SearcherConfig,
        victim: &Transaction,
        gas_price: TokenAmount,
        unload_pool: PoolId,
        pools: &BTreeMap<PoolId, Pool>,
    ) {
        let TxKind::Swap(intent) = victim.kind else { return };
        let copy_id = self.next_tx_id(cfg.agent);
        let Ok(mut copy) = craft_frontrun_copy(victim, cfg, copy_id) else { return };
        copy.gas_price = gas_price;
        // Expected loot and unload proceeds on this snapshot; tight floors
        // make stale pairs revert instead of dumping inventory.
        let Ok(loot) = amm::quote_swap(&pools[&intent.pool], intent.direction, intent.amount_in)
        else {
            return;
        };
        let Ok(unload_out) =
            amm::quote_swap(&pools[&unload_pool], intent.direction.opposite(), loot)
        else {
            return;
        };
        let unload_id = self.next_tx_id(cfg.agent);
        let unload = Transaction::new(
            unload_id,
            cfg.agent,
            TxKind::Swap(
                SwapIntent::new(unload_pool, intent.direction.opposite(), loot, unload_out)
                    .expect("loot positive"),
            ),
            gas_price.saturating_sub(TokenAmount::from_micros(1)),
            round,
        );
        let node = NodeId(self.sc.searchers.iter().zip(&self.searcher_cfgs)
            .find(|(_, c)| c.agent == cfg.agent)
            .map(|(s, _)| s.node)
            .unwrap_or(0));
        self.waste_tags.insert(copy.id, WasteTag::Escalation);
        self.waste_tags.insert(unload.id, WasteTag::Escalation);
        self.actions.push(PendingAction::new(
            cfg.agent,
            MevEventKind::SearcherFrontrunCopy,
            Some(victim.id),
            TokenAmount::from_micros(
                (unload_out.micros() as i128 - intent.amount_in.micros() as i128).max(0) as u64,
            ),
            vec![(copy.id, intent.amount_in.micros()), (unload.id, loot.micros())],
        ));
        self.broadcast(round, tick, copy, node);
        self.broadcast(round, tick, unload, node);
    }

    #[allow(clippy::too_many_arguments)]
    fn do_backrun(
        &mut self,
        round: u32,
        tick: Tick,
        cfg: &SearcherConfig,
        victim: Transaction,
        moved: PoolId,
        reference: PoolId,
        pools: &BTreeMap<PoolId, Pool>,
    ) {
        let id = self.next_tx_id(cfg.agent);
        let Ok(tx) = craft_backrun(&victim, &pools[&moved], &pools[&reference], cfg, id) else {
            return;
        };
        self.targeted.entry(cfg.agent).or_default().insert(victim.id);
        let node = NodeId(
            self.sc.searchers.iter().zip(&self.searcher_cfgs)
                .find(|(_, c)| c.agent == cfg.agent)
                .map(|(s, _)| s.node)
                .unwrap_or(0),
        );
        self.actions.push(PendingAction::new(
            cfg.agent,
            MevEventKind::SearcherBackrun,
            Some(victim.id),
            TokenAmount::ZERO,
            vec![(tx.id, swap_amount_in(&tx))],
        ));
        self.broadcast(round, tick, tx, node);
    }

    fn do_arb(&mut self, round: u32, tick: Tick, cfg: &SearcherConfig, plan: crate::strategies::ArbPlan) {
        let node = NodeId(
            self.sc.searchers.iter().zip(&self.searcher_cfgs)
                .find(|(_, c)| c.agent == cfg.agent)
                .map(|(s, _)| s.node)
                .unwrap_or(0),
        );
        let gas_price = self
            .sc
            .searchers
            .iter()
            .zip(&self.searcher_cfgs)
            .find(|(_, c)| c.agent == cfg.agent)
            .map(|(s, _)| s.gas_price)
            .unwrap_or(TokenAmount::from_micros(10));
        let buy_id = self.next_tx_id(cfg.agent);
        let buy = Transaction::new(
            buy_id,
            cfg.agent,
            TxKind::Swap(
                SwapIntent::new(plan.buy_pool, SwapDirection::YForX, plan.amount_in, plan.acquired)
                    .expect("positive"),
            ),
            gas_price,
            round,
        );
        let sell_id = self.next_tx_id(cfg.agent);
        let sell = Transaction::new(
            sell_id,
            cfg.agent,
            TxKind::Swap(
                SwapIntent::new(plan.sell_pool, SwapDirection::XForY, plan.acquired, TokenAmount::ZERO)
                    .expect("positive"),
            ),
            gas_price.saturating_sub(TokenAmount::from_micros(1)),
            round,
        );
        self.actions.push(PendingAction::new(
            cfg.agent,
            MevEventKind::SearcherCrossPoolArb,
            None,
            plan.estimated_profit,
            vec![(buy.id, plan.amount_in.micros()), (sell.id, plan.acquired.micros())],
        ));
        self.broadcast(round, tick, buy, node);
        self.broadcast(round, tick, sell, node);
    }

    /// One coalition decision per round; colluding builders act honest when
    /// deterrence wins.
    fn coalition_colludes(&mut self, round: u32) -> BTreeMap<u32, bool> {
        let mut verdicts = BTreeMap::new();
        let coalitions: BTreeSet<u32> =
            self.builder_profiles.iter().filter_map(|b| b.coalition).collect();
        for coalition in coalitions {
            let h = self.sc.policy.honest_profit;
            let c = self.sc.policy.collusive_profit;
            let (choice, threshold) = match collusion_decision(h, c, &self.regime) {
                Ok(v) => v,
                // Collusion not even tempting: coalition behaves honest.
                Err(_) => (CollusionChoice::Honest, DeterrenceThreshold::Infinite),
            };
            let collude = choice == CollusionChoice::Collude;
            self.events.push(EventRecord::CollusionDecision {
                round,
                coalition,
                collude,
                threshold: match threshold {
                    DeterrenceThreshold::Finite(t) => Some(t),
                    DeterrenceThreshold::Infinite => None,
                },
            });
            verdicts.insert(coalition, collude);
        }
        verdicts
    }

    /// Builders build and bid, relays filter and forward, proposer picks.
    fn pbs_round(&mut self, round: u32, colluding: &BTreeMap<u32, bool>) -> (Block, AgentId, bool) {
        let tick = round as Tick * self.sc.sim.ticks_per_round as Tick
            + (self.sc.sim.ticks_per_round - 1) as Tick;
        let height = self.chain.height + 1;

        let mut bids: Vec<Bid> = Vec::new();
        let mut outcomes: BTreeMap<AgentId, crate::pbs::BuildOutcome> = BTreeMap::new();
        for profile in self.builder_profiles.clone() {
            // A colluding builder acts honest in deterred rounds.
            let mut effective = profile.clone();
            if profile.policy == BuilderPolicy::Colluding {
                let colludes =
                    profile.coalition.and_then(|c| colluding.get(&c)).copied().unwrap_or(false);
                if !colludes {
                    effective.policy = BuilderPolicy::Honest;
                    effective.coalition = None;
                }
            }
            let snapshot_tick = tick + profile.latency_advantage as Tick;
            let view = self.net.node_view(profile.node, snapshot_tick, &self.chain.included);
            let bundles = self.channels[&profile.agent].visible_at(tick, &self.chain.included);
            let inherited = self.pending_backlegs.remove(&profile.agent).unwrap_or_default();
            let next_seq = self.seqs.get(&profile.agent).copied().unwrap_or(0);
            let inputs = BuildInputs {
                view: &view,
                private_bundles: &bundles,
                pools: &self.chain.pools,
                sanctioned: &self.sanctioned,
                gas_limit: self.sc.sim.gas_limit,
                height,
                inherited_back_legs: &inherited,
                next_seq,
                tee_overhead_gas: self.sc.policy.tee_overhead_gas,
            };
            let outcome = builder_build_block(&effective, &inputs, &mut self.rng_tee);
            // Unchosen blocks still burn their sequence numbers, keeping
            // crafted ids unique and deterministic across rounds.
            if outcome.ids_consumed > 0 {
                *self.seqs.entry(profile.agent).or_insert(0) = next_seq + outcome.ids_consumed;
            }
            // Re-queue inherited legs if this builder loses; they are only
            // consumed when its block wins (handled below).
            if !inherited.is_empty() {
                self.pending_backlegs.insert(profile.agent, inherited.clone());
            }
            let mut block = outcome.block.clone();
            let bid_amount = outcome.estimated_profit.mul_bps(profile.payment_fraction_bps);
            block.bid = bid_amount;
            self.events.push(EventRecord::BidSubmitted {
                round,
                builder: profile.agent,
                amount: bid_amount,
            });
            bids.push(Bid { builder: profile.agent, block, amount: bid_amount });
            outcomes.insert(profile.agent, outcome);
        }

        let mut offers: Vec<Bid> = Vec::new();
        for relay in &self.relay_profiles {
            if let Some(best) = relay_select(&bids, relay, &self.sanctioned) {
                self.events.push(EventRecord::RelayOffer {
                    round,
                    relay: relay.agent,
                    builder: best.builder,
                    amount: best.amount,
                });
                offers.push(best.clone());
            }
        }

        let local = if self.sc.proposer.local_build {
            let view =
                self.net.node_view(NodeId(self.sc.proposer.node), tick, &self.chain.included);
            let block = miner_build_legacy(
                &view,
                self.sc.sim.legacy_mode,
                self.roster.proposer,
                height,
                self.sc.sim.gas_limit,
            );
            let profit = TokenAmount::from_micros(
                block
                    .payload
                    .iter()
                    .map(|t| t.gas_price.micros() as u128 * t.gas_used as u128)
                    .sum::<u128>() as u64,
            );
            Some((block, profit))
        } else {
            None
        };

        let block = match proposer_select(&offers, local) {
            Ok(block) => block,
            // Every offer filtered and no local fallback: an empty
            // proposer-built block keeps the one-block-per-round cadence.
            Err(_) => Block {
                height,
                builder: self.roster.proposer,
                payload: vec![],
                bundle_spans: vec![],
                bid: TokenAmount::ZERO,
                gas_limit: self.sc.sim.gas_limit,
            },
        };

        // Winner housekeeping: consume its inherited legs, register its
        // self-extraction, and schedule any deferred back leg to a partner.
        let mut winner_is_coalition = false;
        if let Some(outcome) = outcomes.get(&block.builder) {
            self.pending_backlegs.remove(&block.builder);
            let profile =
                self.builder_profiles.iter().find(|p| p.agent == block.builder).cloned().unwrap();
            winner_is_coalition = profile.coalition.is_some()
                && profile.policy == BuilderPolicy::Colluding;
            if let Some(se) = outcome.self_extraction {
                let front_tx =
                    outcome.block.payload.iter().find(|t| t.id == se.front).copied();
                let kind = if outcome.deferred_back_leg.is_some() {
                    MevEventKind::CoalitionInterblock
                } else {
                    MevEventKind::BuilderSelfSandwich
                };
                let mut legs = Vec::new();
                if let Some(front) = front_tx {
                    legs.push((front.id, swap_amount_in(&front)));
                }
                if let Some(back_id) = se.back {
                    if let Some(back) = outcome.block.payload.iter().find(|t| t.id == back_id) {
                        legs.push((back.id, swap_amount_in(back)));
                    }
                }
                if let Some(back) = outcome.deferred_back_leg {
                    legs.push((back.id, swap_amount_in(&back)));
                }
                if !legs.is_empty() {
                    self.actions.push(PendingAction::new(
                        block.builder,
                        kind,
                        Some(se.victim),
                        se.estimated_gain,
                        legs,
                    ));
                }
            }
            if let Some(back) = outcome.deferred_back_leg {
                if let Some(partner) = self
                    .builder_profiles
                    .iter()
                    .find(|p| p.agent != block.builder && p.coalition == profile.coalition)
                {
                    self.pending_backlegs.entry(partner.agent).or_default().push(back);
                }
            }
        }

        (block, self.roster.proposer, winner_is_coalition)
    }

    fn execute_round(&mut self, round: u32, block: Block, proposer: AgentId, colluding_block: bool) {
        // Self-contained log: any payload tx not yet logged was crafted by
        // the block producer.
        for tx in &block.payload {
            if !self.submitted_tx_ids.contains(&tx.id) {
                let mut logged = *tx;
                logged.gas_used = logged.kind.base_gas();
                self.log_tx_submit(round, round as Tick * self.sc.sim.ticks_per_round as Tick, &logged, Channel::Internal);
            }
        }
        self.events.push(EventRecord::BlockProposed {
            round,
            height: block.height,
            builder: block.builder,
            proposer,
            bid: block.bid,
            gas_limit: block.gas_limit,
            payload: block.payload.iter().map(|t| (t.id, t.gas_used)).collect(),
            spans: block.bundle_spans.clone(),
        });

        let (next, receipts) = execute_block(&self.chain, &block, Some(proposer))
            .expect("engine-built blocks satisfy invariants");
        self.chain = next;

        if self.roster.builders.contains(&block.builder) {
            *self.blocks_won.entry(block.builder).or_insert(0) += 1;
        }
        let has_sanctioned = crate::pbs::block_contains_sanctioned(&block, &self.sanctioned);
        self.block_has_sanctioned.push(has_sanctioned);

        let mut round_waste = 0u64;
        for receipt in &receipts {
            self.events.push(EventRecord::TxReceipt {
                round,
                tx: receipt.tx_id,
                status: receipt.status,
                amount_out: receipt.amount_out,
                gas_paid: receipt.gas_paid,
            });
            self.outcomes.insert(
                receipt.tx_id,
                TxOutcome {
                    status: receipt.status,
                    amount_out: receipt.amount_out,
                    gas_paid: receipt.gas_paid,
                    included_round: Some(round),
                },
            );
            for sub in &mut self.sanctioned_submissions {
                if sub.tx == receipt.tx_id && sub.included_round.is_none() {
                    sub.included_round = Some(round);
                }
            }
            // Waste: spam and stale escalation gas burns whatever the
            // status; any other reverted transaction burns its gas too.
            let waste_kind = match (self.waste_tags.get(&receipt.tx_id), receipt.status) {
                (Some(WasteTag::Spam), _) if !receipt.gas_paid.is_zero() => {
                    Some(MevEventKind::SpamCopyGas)
                }
                (Some(WasteTag::Escalation), ReceiptStatus::Reverted) => {
                    Some(MevEventKind::EscalationLossGas)
                }
                (None, ReceiptStatus::Reverted) => Some(MevEventKind::RevertedTxGas),
                _ => None,
            };
            if let Some(kind) = waste_kind {
                let actor = self
                    .net
                    .get(receipt.tx_id)
                    .map(|t| t.sender)
                    .or_else(|| block.payload.iter().find(|t| t.id == receipt.tx_id).map(|t| t.sender))
                    .unwrap_or(AgentId(0));
                self.events.push(EventRecord::GasWaste {
                    round,
                    kind: kind.label().to_string(),
                    actor,
                    tx: receipt.tx_id,
                    amount: receipt.gas_paid,
                });
                round_waste += receipt.gas_paid.micros();
                *self.mev_totals.entry(MevClass::Moloch).or_insert(0) +=
                    receipt.gas_paid.micros() as i128;
            }
        }
        self.gas_waste_total += round_waste;

        self.settle_actions(round, &receipts);
        self.settle_user_orders(round, &block, &receipts);
        self.policy_updates(round, &block, colluding_block);

        for channel in self.channels.values_mut() {
            channel.prune_included(&self.chain.included);
        }

        // Per-round metrics row (welfare merged later).
        let hhi = self.smoothed_hhi();
        let (monarch, mafia) = self.round_extraction(round);
        let compliant_blocks =
            self.block_has_sanctioned.iter().filter(|b| !**b).count() as f64;
        self.rows.push(RoundRow {
            round,
            hhi,
            mev_monarch: monarch,
            mev_mafia: mafia,
            mev_moloch: round_waste as i128,
            welfare_loss_cum: 0,
            compliant_fraction: compliant_blocks / self.block_has_sanctioned.len() as f64,
            gas_waste: round_waste,
        });
    }

    /// Extraction logged this round, by class (Moloch is tallied directly).
    fn round_extraction(&self, round: u32) -> (i128, i128) {
        let mut monarch = 0i128;
        let mut mafia = 0i128;
        for record in self.events.records.iter().rev() {
            match record {
                EventRecord::Extraction { round: r, class, amount, .. } if *r == round => {
                    match class {
                        MevClass::Monarch => monarch += amount,
                        MevClass::Mafia => mafia += amount,
                        MevClass::Moloch => {}
                    }
                }
                EventRecord::Extraction { round: r, .. } if *r < round => break,
                _ => {}
            }
        }
        (monarch, mafia)
    }

    /// Laplace-smoothed cumulative block-win shares, so the series starts
    /// diffuse and moves with the data instead of pinning to 1 after the
    /// first block.
    fn smoothed_hhi(&self) -> f64 {
        let builders = &self.roster.builders;
        if builders.is_empty() {
            return 1.0;
        }
        let total: u64 = self.blocks_won.values().sum();
        let denom = (total + builders.len() as u64) as f64;
        builders
            .iter()
            .map(|b| {
                let wins = self.blocks_won.get(b).copied().unwrap_or(0);
                let share = (wins + 1) as f64 / denom;
                share * share
            })
            .sum()
    }

    fn settle_actions(&mut self, round: u32, receipts: &[Receipt]) {
        let by_id: BTreeMap<TxId, &Receipt> = receipts.iter().map(|r| (r.tx_id, r)).collect();
        let mut emitted = Vec::new();
        for action in &mut self.actions {
            for (leg, amount_in) in action.legs.clone() {
                if action.settled.contains_key(&leg) {
                    continue;
                }
                if let Some(receipt) = by_id.get(&leg) {
                    let net = match receipt.status {
                        ReceiptStatus::Success => {
                            Some(receipt.amount_out.micros() as i128 - amount_in as i128)
                        }
                        _ => None,
                    };
                    action.settled.insert(leg, net);
                }
            }
            if action.complete() {
                if let Some(realized) = action.realized() {
                    emitted.push(EventRecord::Extraction {
                        round,
                        class: action.kind.class(),
                        kind: action.kind.label().to_string(),
                        actor: action.actor,
                        victim: action.victim,
                        amount: realized,
                        estimate: action.estimate,
                    });
                    let class = action.kind.class();
                    *self.mev_totals.entry(class).or_insert(0) += realized;
                }
            }
        }
        for record in emitted {
            self.events.push(record);
        }
        self.actions.retain(|a| !a.complete());
    }

    fn settle_user_orders(&mut self, round: u32, block: &Block, receipts: &[Receipt]) {
        let reputation_on = self.sc.policy.reputation;
        let threshold = self.sc.users.report_threshold_bps;
        for receipt in receipts {
            let Some(meta) = self.order_meta.get(&receipt.tx_id) else { continue };
            let user = meta.user;
            let quote = meta.quote_at_submit;
            let routed = meta.routed_builder;
            let rebate_due = meta.rebate_due;

            if let Some(builder) = routed {
                if matches!(receipt.status, ReceiptStatus::Success | ReceiptStatus::Reverted) {
                    self.stats.entry(builder).or_default().included += 1;
                }
            }
            if let (Some((extractor, rebate)), ReceiptStatus::Success) =
                (rebate_due, receipt.status)
            {
                if self.chain.transfer(extractor, user, Asset::Y, rebate) {
                    self.rebates_total += rebate.micros();
                    self.events.push(EventRecord::Rebate { round, user, extractor, amount: rebate });
                }
            }
            if reputation_on {
                let builder = block.builder;
                let _ = self
                    .reputation
                    .update(builder, ReputationEvent::Included { tx: receipt.tx_id });
                let suspicious = match receipt.status {
                    ReceiptStatus::Reverted => true,
                    ReceiptStatus::Success => match threshold {
                        Some(bps) if !quote.is_zero() => {
                            let floor = min_out_from_tolerance(quote, bps);
                            receipt.amount_out < floor
                        }
                        _ => false,
                    },
                    _ => false,
                };
                if suspicious && threshold.is_some()
                    && self
                        .reputation
                        .update(builder, ReputationEvent::UserReport { user, tx: receipt.tx_id })
                        .is_ok()
                    {
                        self.events.push(EventRecord::Report {
                            round,
                            user,
                            builder,
                            tx: receipt.tx_id,
                        });
                    }
            }
        }
    }

    fn policy_updates(&mut self, round: u32, block: &Block, colluding_block: bool) {
        if colluding_block && self.regime.active {
            let members: Vec<AgentId> = self
                .builder_profiles
                .iter()
                .filter(|p| p.policy == BuilderPolicy::Colluding)
                .map(|p| p.agent)
                .collect();
            let penalties =
                regulator_audit(&[block.height], &members, &self.regime, &mut self.rng_audit);
            for penalty in penalties {
                let available = self.chain.balance(penalty.builder, Asset::Y);
                let amount = penalty.amount.min(available);
                if self.chain.transfer(penalty.builder, self.roster.regulator, Asset::Y, amount) {
                    self.penalties_total += amount.micros();
                    self.events.push(EventRecord::Penalty {
                        round,
                        builder: penalty.builder,
                        amount,
                    });
                }
            }
        }
    }

    fn finish(mut self) -> RunOutput {
        let hash = crate::replay::state_hash(&self.chain);
        self.events.push(EventRecord::StateHash { hash });

        let final_supply =
            (self.chain.total_supply(Asset::X), self.chain.total_supply(Asset::Y));
        let supply_delta_x = final_supply.0 as i128 - self.initial_supply.0 as i128;
        let supply_delta_y = final_supply.1 as i128 - self.initial_supply.1 as i128;

        let censorship = if self.sanctioned.is_empty() {
            None
        } else {
            Some(censorship_stats(&self.block_has_sanctioned, &self.sanctioned_submissions))
        };

        let total_wins: u64 = self.blocks_won.values().sum();
        let final_shares: BTreeMap<AgentId, f64> = self
            .roster
            .builders
            .iter()
            .map(|b| {
                let wins = self.blocks_won.get(b).copied().unwrap_or(0);
                (*b, if total_wins == 0 { 0.0 } else { wins as f64 / total_wins as f64 })
            })
            .collect();

        let value_flows = self.value_flows();

        let metrics = MetricsReport {
            hhi_series: self.rows.iter().map(|r| r.hhi).collect(),
            rows: self.rows,
            mev_monarch_total: self.mev_totals.get(&MevClass::Monarch).copied().unwrap_or(0),
            mev_mafia_total: self.mev_totals.get(&MevClass::Mafia).copied().unwrap_or(0),
            mev_moloch_total: self.mev_totals.get(&MevClass::Moloch).copied().unwrap_or(0),
            per_user_welfare_loss: BTreeMap::new(),
            welfare_loss_total: 0,
            blocks_won: self.blocks_won,
            final_shares,
            censorship,
            colluding_rounds: self.colluding_rounds,
            rounds: self.sc.sim.rounds,
            gas_waste_total: self.gas_waste_total,
            rebates_total: self.rebates_total,
            penalties_total: self.penalties_total,
            unclassified_events: 0,
            value_flows,
            supply_delta_x,
            supply_delta_y,
        };

        RunOutput { events: self.events, metrics, final_state: self.chain, state_hash: hash }
    }

    /// Net par (X+Y) position change per agent group, pools included; the
    /// buckets sum to zero because execution only ever transfers value.
    fn value_flows(&self) -> ValueFlows {
        let mut flows = ValueFlows::default();
        let initial: BTreeMap<(AgentId, Asset), u64> = self
            .events
            .records
            .iter()
            .filter_map(|r| match r {
                EventRecord::BalanceInit { agent, asset, amount } => {
                    Some(((*agent, *asset), amount.micros()))
                }
                _ => None,
            })
            .collect();
        let net = |agent: AgentId| -> i128 {
            let now = self.chain.balance(agent, Asset::X).micros() as i128
                + self.chain.balance(agent, Asset::Y).micros() as i128;
            let before = initial.get(&(agent, Asset::X)).copied().unwrap_or(0) as i128
                + initial.get(&(agent, Asset::Y)).copied().unwrap_or(0) as i128;
            now - before
        };
        for user in &self.roster.users {
            flows.users_net += net(*user);
        }
        for searcher in &self.roster.searchers {
            flows.searchers_net += net(*searcher);
        }
        for builder in &self.roster.builders {
            flows.builders_net += net(*builder);
        }
        flows.proposer_net = net(self.roster.proposer);
        flows.regulator_net = net(self.roster.regulator);

        let initial_pools: i128 = self
            .events
            .records
            .iter()
            .filter_map(|r| match r {
                EventRecord::PoolInit { reserve_x, reserve_y, .. } => {
                    Some(reserve_x.micros() as i128 + reserve_y.micros() as i128)
                }
                _ => None,
            })
            .sum();
        let now_pools: i128 = self
            .chain
            .pools
            .values()
            .map(|p| p.reserve_x.micros() as i128 + p.reserve_y.micros() as i128)
            .sum();
        flows.pools_net = now_pools - initial_pools;
        flows
    }
}

fn swap_amount(tx: &Transaction) -> TokenAmount {
    match &tx.kind {
        TxKind::Swap(intent) => intent.amount_in,
        _ => TokenAmount::ZERO,
    }
}

fn swap_amount_in(tx: &Transaction) -> u64 {
    swap_amount(tx).micros()
}

/// Strips every adversarial behavior while leaving user arrivals, network,
/// pools, censorship, and seeds untouched; the welfare baseline.
fn sanitized(sc: &Scenario) -> Scenario {
    let mut clean = sc.clone();
    for searcher in &mut clean.searchers {
        searcher.strategies.clear();
    }
    clean.searchers.retain(|_| true);
    for builder in &mut clean.builders {
        if matches!(builder.policy, BuilderPolicy::SelfDealing | BuilderPolicy::Colluding) {
            builder.policy = BuilderPolicy::Honest;
            builder.coalition = None;
        }
    }
    clean.policy.escalator = false;
    clean.spam.copies = 0;
    clean
}

fn has_adversaries(sc: &Scenario) -> bool {
    sc.searchers.iter().any(|s| !s.strategies.is_empty())
        || sc
            .builders
            .iter()
            .any(|b| matches!(b.policy, BuilderPolicy::SelfDealing | BuilderPolicy::Colluding))
        || sc.policy.escalator
}

/// Runs the scenario, then (when adversaries are present) the sanitized
/// counterfactual under the same seed, and reports welfare loss per user:
/// counterfactual-out − actual-out per user swap, gas-only for reverted
/// victims.
pub fn run_scenario(sc: &Scenario) -> Result<RunOutput, ConfigError> {
    let sim = Sim::new(sc)?;
    let user_ids: BTreeSet<AgentId> = sim.roster.users.iter().copied().collect();
    let (mut output, order_rounds, actual_outcomes, user_orders) = sim.run_collecting(&user_ids);

    if has_adversaries(sc) && !user_orders.is_empty() {
        let clean = sanitized(sc);
        let cf_sim = Sim::new(&clean)?;
        let (_, _, cf_outcomes, _) = cf_sim.run_collecting(&user_ids);

        let mut per_user: BTreeMap<AgentId, i128> = BTreeMap::new();
        let mut per_round: BTreeMap<u32, i128> = BTreeMap::new();
        for tx in &user_orders {
            let user = AgentId((tx.0 >> 32) as u32);
            let actual = actual_outcomes.get(tx);
            let cf = cf_outcomes.get(tx);
            let (loss, round) = match (actual, cf) {
                (Some(a), Some(c)) => match (a.status, c.status) {
                    (ReceiptStatus::Success, ReceiptStatus::Success) => (
                        c.amount_out.micros() as i128 - a.amount_out.micros() as i128,
                        a.included_round,
                    ),
                    (ReceiptStatus::Reverted, _) => {
                        (a.gas_paid.micros() as i128, a.included_round)
                    }
                    _ => (0, a.included_round),
                },
                (Some(a), None) => match a.status {
                    ReceiptStatus::Reverted => (a.gas_paid.micros() as i128, a.included_round),
                    _ => (0, a.included_round),
                },
                _ => (0, None),
            };
            if loss != 0 {
                *per_user.entry(user).or_insert(0) += loss;
                let attributed = round.or_else(|| order_rounds.get(tx).copied()).unwrap_or(0);
                *per_round.entry(attributed).or_insert(0) += loss;
            }
        }
        let mut cum = 0i128;
        for row in &mut output.metrics.rows {
            cum += per_round.get(&row.round).copied().unwrap_or(0);
            row.welfare_loss_cum = cum;
        }
        output.metrics.welfare_loss_total = per_user.values().sum();
        output.metrics.per_user_welfare_loss = per_user;
    }

    Ok(output)
}

impl<'a> Sim<'a> {
    /// Runs to completion and also returns (submit rounds, outcomes, user
    /// swap ids) for welfare matching.
    fn run_collecting(
        self,
        users: &BTreeSet<AgentId>,
    ) -> (RunOutput, BTreeMap<TxId, u32>, BTreeMap<TxId, TxOutcome>, Vec<TxId>) {
        // Move bookkeeping maps out through clones taken at the end of run().
        struct Capture {
            submit_round: BTreeMap<TxId, u32>,
            outcomes: BTreeMap<TxId, TxOutcome>,
            user_orders: Vec<TxId>,
        }
        let mut capture = Capture {
            submit_round: BTreeMap::new(),
            outcomes: BTreeMap::new(),
            user_orders: Vec::new(),
        };
        let output = {
            let mut sim = self;
            for round in 0..sim.sc.sim.rounds {
                sim.user_arrivals(round);
                sim.searchers_act(round);
                let colluding = sim.coalition_colludes(round);
                let any = colluding.values().any(|c| *c);
                if any {
                    sim.colluding_rounds += 1;
                }
                let (block, proposer, winner_coalition) = match sim.sc.sim.mode {
                    Mode::Legacy => {
                        let tick = round as Tick * sim.sc.sim.ticks_per_round as Tick
                            + (sim.sc.sim.ticks_per_round - 1) as Tick;
                        let view = sim.net.node_view(
                            NodeId(sim.sc.proposer.node),
                            tick,
                            &sim.chain.included,
                        );
                        let block = miner_build_legacy(
                            &view,
                            sim.sc.sim.legacy_mode,
                            sim.roster.proposer,
                            sim.chain.height + 1,
                            sim.sc.sim.gas_limit,
                        );
                        (block, sim.roster.proposer, false)
                    }
                    Mode::Pbs => sim.pbs_round(round, &colluding),
                };
                sim.execute_round(round, block, proposer, winner_coalition && any);
            }
            capture.submit_round = sim.submit_round.clone();
            capture.outcomes = sim.outcomes.clone();
            capture.user_orders = sim
                .order_meta
                .keys()
                .filter(|id| users.contains(&AgentId((id.0 >> 32) as u32)))
                .copied()
                .collect();
            sim.finish()
        };
        (output, capture.submit_round, capture.outcomes, capture.user_orders)
    }
}

/// One sweep cell: parameter assignments plus a seed.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub index: usize,
    pub assignments: Vec<(String, String)>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub cell: SweepCell,
    pub metrics: MetricsReport,
    pub state_hash: u64,
}

/// Cross-product of parameter values × seeds, one independent run per cell,
/// executed in parallel (cells share nothing) and returned in cell order.
pub fn run_sweep(
    base: &Scenario,
    params: &[(String, Vec<String>)],
    seeds: u64,
) -> Result<Vec<SweepRow>, ConfigError> {
    let mut cells: Vec<SweepCell> = Vec::new();
    let mut combos: Vec<Vec<(String, String)>> = vec![vec![]];
    for (path, values) in params {
        let mut next = Vec::new();
        for combo in &combos {
            for value in values {
                let mut c = combo.clone();
                c.push((path.clone(), value.clone()));
                next.push(c);
            }
        }
        combos = next;
    }
    for combo in combos {
        for seed in 0..seeds.max(1) {
            cells.push(SweepCell {
                index: cells.len(),
                assignments: combo.clone(),
                seed: base.sim.seed + seed,
            });
        }
    }

    // Validate all cells up front so a bad path fails before any work runs.
    let mut prepared: Vec<(SweepCell, Scenario)> = Vec::new();
    for cell in cells {
        let mut sc = base.clone();
        for (path, value) in &cell.assignments {
            sc.set_param(path, value)?;
        }
        sc.sim.seed = cell.seed;
        prepared.push((cell, sc));
    }

    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let mut rows: Vec<Option<SweepRow>> = Vec::new();
    rows.resize_with(prepared.len(), || None);
    let jobs: Vec<(usize, &SweepCell, &Scenario)> =
        prepared.iter().map(|(cell, sc)| (cell.index, cell, sc)).collect();
    let next_job = std::sync::atomic::AtomicUsize::new(0);
    let results: std::sync::Mutex<Vec<(usize, SweepRow)>> = std::sync::Mutex::new(Vec::new());

    std::thread::scope(|scope| {
        for _ in 0..workers.min(jobs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next_job.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= jobs.len() {
                    break;
                }
                let (index, cell, sc) = &jobs[i];
                let output = run_scenario(sc).expect("cells validated before spawn");
                let row = SweepRow {
                    cell: (*cell).clone(),
                    metrics: output.metrics,
                    state_hash: output.state_hash,
                };
                results.lock().expect("sweep mutex").push((*index, row));
            });
        }
    });

    for (index, row) in results.into_inner().expect("sweep mutex") {
        rows[index] = Some(row);
    }
    Ok(rows.into_iter().map(|r| r.expect("every cell ran")).collect())
}
