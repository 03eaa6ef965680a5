//! Scenario configuration: a single TOML file describing the market, the
//! agents, and the policy regime. The same parser accepts both the
//! hand-edited and the machine-canonical form (`canonical_toml` re-emits a
//! normalized document that parses back identically).

use serde::{Deserialize, Serialize};

use crate::pbs::{BuilderPolicy, LegacyMode, RoutingMode};
use crate::strategies::StrategyKind;
use crate::types::{TokenAmount, SCALE};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("config error at {path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError { path: path.into(), message: message.into() }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Legacy,
    Pbs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub rounds: u32,
    #[serde(default = "default_ticks_per_round")]
    pub ticks_per_round: u32,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_gas_limit")]
    pub gas_limit: u64,
    #[serde(default = "default_legacy_mode")]
    pub legacy_mode: LegacyMode,
}

fn default_ticks_per_round() -> u32 {
    4
}
fn default_mode() -> Mode {
    Mode::Pbs
}
fn default_gas_limit() -> u64 {
    10_000
}
fn default_legacy_mode() -> LegacyMode {
    LegacyMode::Greedy
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default = "default_nodes")]
    pub nodes: u32,
    #[serde(default = "default_latency")]
    pub default_latency: u32,
    #[serde(default, rename = "link")]
    pub links: Vec<LinkConfig>,
}

fn default_nodes() -> u32 {
    4
}
fn default_latency() -> u32 {
    1
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig { nodes: default_nodes(), default_latency: default_latency(), links: vec![] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub from: u32,
    pub to: u32,
    pub latency: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolConfig {
    pub reserve_x: TokenAmount,
    pub reserve_y: TokenAmount,
    #[serde(default)]
    pub fee_bps: u16,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowMode {
    /// Orders broadcast to the public mempool.
    Public,
    /// Orders routed privately to one builder (exclusive order flow).
    Exclusive,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionConfig {
    YForX,
    XForY,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UsersConfig {
    #[serde(default)]
    pub count: u32,
    #[serde(default)]
    pub node: u32,
    #[serde(default = "default_flow")]
    pub flow: FlowMode,
    #[serde(default = "default_one")]
    pub swaps_per_round: u32,
    #[serde(default = "default_prob_one")]
    pub submit_probability: f64,
    #[serde(default = "default_amount_min")]
    pub amount_in_min: TokenAmount,
    #[serde(default = "default_amount_max")]
    pub amount_in_max: TokenAmount,
    /// min_out = quote × (1 − tolerance); 10000 bps accepts anything.
    #[serde(default = "default_tolerance")]
    pub slippage_tolerance_bps: u16,
    #[serde(default = "default_gas_min")]
    pub gas_price_min: TokenAmount,
    #[serde(default = "default_gas_max")]
    pub gas_price_max: TokenAmount,
    #[serde(default = "default_direction")]
    pub direction: DirectionConfig,
    #[serde(default)]
    pub pool: u32,
    #[serde(default = "default_user_balance")]
    pub initial_x: TokenAmount,
    #[serde(default = "default_user_balance")]
    pub initial_y: TokenAmount,
    /// File a reputation report when realized slippage exceeds this; absent
    /// means users never report.
    #[serde(default)]
    pub report_threshold_bps: Option<u16>,
    #[serde(default, rename = "order")]
    pub scripted: Vec<ScriptedOrder>,
}

fn default_flow() -> FlowMode {
    FlowMode::Public
}
fn default_one() -> u32 {
    1
}
fn default_prob_one() -> f64 {
    1.0
}
fn default_amount_min() -> TokenAmount {
    TokenAmount::from_tokens(10)
}
fn default_amount_max() -> TokenAmount {
    TokenAmount::from_tokens(100)
}
fn default_tolerance() -> u16 {
    10_000
}
fn default_gas_min() -> TokenAmount {
    TokenAmount::from_micros(10)
}
fn default_gas_max() -> TokenAmount {
    TokenAmount::from_micros(20)
}
fn default_direction() -> DirectionConfig {
    DirectionConfig::YForX
}
fn default_user_balance() -> TokenAmount {
    TokenAmount::from_tokens(10_000)
}

impl Default for UsersConfig {
    fn default() -> Self {
        toml::from_str("").expect("all users fields have defaults")
    }
}

/// An exact, deterministic user order for scripted scenarios.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedOrder {
    pub round: u32,
    #[serde(default)]
    pub user: u32,
    #[serde(default)]
    pub pool: u32,
    #[serde(default = "default_scripted_direction")]
    pub direction: DirectionConfig,
    pub amount_in: TokenAmount,
    /// Explicit floor; absent means "derive from slippage tolerance".
    #[serde(default)]
    pub min_out: Option<TokenAmount>,
    #[serde(default = "default_gas_min")]
    pub gas_price: TokenAmount,
}

fn default_scripted_direction() -> DirectionConfig {
    DirectionConfig::YForX
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearcherTomlConfig {
    #[serde(default)]
    pub node: u32,
    pub strategies: Vec<StrategyKind>,
    #[serde(default = "default_watched")]
    pub watched_pools: Vec<u32>,
    #[serde(default = "default_budget")]
    pub budget: TokenAmount,
    #[serde(default = "default_gas_bump")]
    pub gas_bump: TokenAmount,
    #[serde(default = "default_escalations")]
    pub max_escalations: u32,
    #[serde(default = "default_gas_min")]
    pub gas_price: TokenAmount,
    #[serde(default)]
    pub initial_x: Option<TokenAmount>,
    #[serde(default)]
    pub initial_y: Option<TokenAmount>,
}

fn default_watched() -> Vec<u32> {
    vec![0]
}
fn default_budget() -> TokenAmount {
    TokenAmount::from_tokens(1_000)
}
fn default_gas_bump() -> TokenAmount {
    TokenAmount::from_micros(5)
}
fn default_escalations() -> u32 {
    6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuilderTomlConfig {
    #[serde(default)]
    pub node: u32,
    #[serde(default = "default_policy")]
    pub policy: BuilderPolicy,
    #[serde(default)]
    pub coalition: Option<u32>,
    #[serde(default)]
    pub latency_advantage: u32,
    #[serde(default = "default_payment_bps")]
    pub payment_fraction_bps: u16,
    #[serde(default)]
    pub tee: bool,
    #[serde(default = "default_self_deal_budget")]
    pub self_deal_budget: TokenAmount,
    #[serde(default = "default_builder_balance")]
    pub initial_x: TokenAmount,
    #[serde(default = "default_builder_balance")]
    pub initial_y: TokenAmount,
    /// Synthetic prior order-flow counters, seeding the smoothed inclusion
    /// rate away from the fresh-builder 1/2.
    #[serde(default)]
    pub prior_received: u64,
    #[serde(default)]
    pub prior_included: u64,
    #[serde(default = "default_true")]
    pub accepts_private_flow: bool,
}

fn default_policy() -> BuilderPolicy {
    BuilderPolicy::Honest
}
fn default_payment_bps() -> u16 {
    9_000
}
fn default_self_deal_budget() -> TokenAmount {
    TokenAmount::from_tokens(1_000)
}
fn default_builder_balance() -> TokenAmount {
    TokenAmount::from_tokens(100_000)
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelayTomlConfig {
    #[serde(default)]
    pub regulated: bool,
    /// Builder indices; absent means connected to all.
    #[serde(default)]
    pub builders: Option<Vec<u32>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[derive(Default)]
pub struct ProposerConfig {
    #[serde(default)]
    pub node: u32,
    /// Fall back to a locally built block when it beats all offers.
    #[serde(default)]
    pub local_build: bool,
}


#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoutingConfig {
    #[serde(default = "default_routing_mode")]
    pub mode: RoutingMode,
    #[serde(default = "default_gamma")]
    pub gamma: u32,
}

fn default_routing_mode() -> RoutingMode {
    RoutingMode::Rate
}
fn default_gamma() -> u32 {
    2
}

impl Default for RoutingConfig {
    fn default() -> Self {
        RoutingConfig { mode: default_routing_mode(), gamma: default_gamma() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    #[serde(default)]
    pub regulator_active: bool,
    #[serde(default)]
    pub p_detect: f64,
    #[serde(default)]
    pub penalty: TokenAmount,
    /// Per-round payoffs of the coalition game; the decision rule compares
    /// them against expected penalties.
    #[serde(default)]
    pub honest_profit: TokenAmount,
    #[serde(default)]
    pub collusive_profit: TokenAmount,
    #[serde(default = "default_tee_overhead")]
    pub tee_overhead_gas: u32,
    #[serde(default)]
    pub escalator: bool,
    #[serde(default)]
    pub reputation: bool,
}

fn default_tee_overhead() -> u32 {
    20
}

impl Default for PolicyConfig {
    fn default() -> Self {
        toml::from_str("").expect("all policy fields have defaults")
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SanctionsConfig {
    /// Indices into the user list.
    #[serde(default)]
    pub users: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpamConfig {
    /// Ordering-lottery copies a front-run searcher submits per victim when
    /// a shuffled builder defeats gas-priority ordering.
    #[serde(default)]
    pub copies: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub sim: SimConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default, rename = "pool")]
    pub pools: Vec<PoolConfig>,
    #[serde(default)]
    pub users: UsersConfig,
    #[serde(default, rename = "searcher")]
    pub searchers: Vec<SearcherTomlConfig>,
    #[serde(default, rename = "builder")]
    pub builders: Vec<BuilderTomlConfig>,
    #[serde(default, rename = "relay")]
    pub relays: Vec<RelayTomlConfig>,
    #[serde(default)]
    pub proposer: ProposerConfig,
    #[serde(default)]
    pub routing: RoutingConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub sanctions: SanctionsConfig,
    #[serde(default)]
    pub spam: SpamConfig,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario, ConfigError> {
        let scenario: Scenario = toml::from_str(text)
            .map_err(|e| ConfigError::new(toml_error_path(&e), e.message().to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &std::path::Path) -> Result<Scenario, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new(path.display().to_string(), e.to_string()))?;
        Scenario::from_toml(&text)
    }

    /// The normalized machine form: a TOML document with every field
    /// explicit, guaranteed to parse back to the identical scenario.
    pub fn canonical_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn err(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
            ConfigError::new(path, message)
        }
        if self.sim.rounds == 0 {
            return Err(err("sim.rounds", "must be positive"));
        }
        if self.sim.ticks_per_round == 0 {
            return Err(err("sim.ticks_per_round", "must be positive"));
        }
        if self.network.nodes == 0 {
            return Err(err("network.nodes", "must be positive"));
        }
        for (i, link) in self.network.links.iter().enumerate() {
            if link.from >= self.network.nodes || link.to >= self.network.nodes {
                return Err(err(format!("network.link.{i}"), "endpoint out of range"));
            }
            if link.from == link.to && link.latency != 0 {
                return Err(err(format!("network.link.{i}"), "self-latency must be zero"));
            }
        }
        for (i, pool) in self.pools.iter().enumerate() {
            if pool.reserve_x.is_zero() || pool.reserve_y.is_zero() {
                return Err(err(format!("pool.{i}"), "reserves must be positive"));
            }
            if pool.fee_bps > 1000 {
                return Err(err(format!("pool.{i}.fee_bps"), "must be in [0, 1000]"));
            }
        }
        let pool_arity = self.pools.len() as u32;
        let node_arity = self.network.nodes;
        if self.users.count > 0 {
            if self.users.pool >= pool_arity {
                return Err(err("users.pool", "unknown pool"));
            }
            if self.users.node >= node_arity {
                return Err(err("users.node", "unknown node"));
            }
            if self.users.amount_in_min > self.users.amount_in_max {
                return Err(err("users.amount_in_min", "exceeds amount_in_max"));
            }
            if self.users.amount_in_min.is_zero() {
                return Err(err("users.amount_in_min", "must be positive"));
            }
            if self.users.gas_price_min > self.users.gas_price_max {
                return Err(err("users.gas_price_min", "exceeds gas_price_max"));
            }
            if self.users.gas_price_min.micros() < 2 {
                return Err(err("users.gas_price_min", "must be at least 0.000002"));
            }
            if !(0.0..=1.0).contains(&self.users.submit_probability) {
                return Err(err("users.submit_probability", "must be in [0, 1]"));
            }
            if self.users.slippage_tolerance_bps > 10_000 {
                return Err(err("users.slippage_tolerance_bps", "must be ≤ 10000"));
            }
        }
        for (i, order) in self.users.scripted.iter().enumerate() {
            if order.user >= self.users.count {
                return Err(err(format!("users.order.{i}.user"), "unknown user"));
            }
            if order.pool >= pool_arity {
                return Err(err(format!("users.order.{i}.pool"), "unknown pool"));
            }
            if order.round >= self.sim.rounds {
                return Err(err(format!("users.order.{i}.round"), "beyond sim.rounds"));
            }
            if order.amount_in.is_zero() {
                return Err(err(format!("users.order.{i}.amount_in"), "must be positive"));
            }
        }
        for (i, s) in self.searchers.iter().enumerate() {
            if s.node >= node_arity {
                return Err(err(format!("searcher.{i}.node"), "unknown node"));
            }
            for p in &s.watched_pools {
                if *p >= pool_arity {
                    return Err(err(format!("searcher.{i}.watched_pools"), "unknown pool"));
                }
            }
            // Empty strategies are allowed: an inert searcher keeps agent
            // ids stable for counterfactual re-runs.
            if s.gas_bump.is_zero() {
                return Err(err(format!("searcher.{i}.gas_bump"), "must be positive"));
            }
        }
        for (i, b) in self.builders.iter().enumerate() {
            if b.node >= node_arity {
                return Err(err(format!("builder.{i}.node"), "unknown node"));
            }
            if b.payment_fraction_bps > 10_000 {
                return Err(err(format!("builder.{i}.payment_fraction_bps"), "must be ≤ 10000"));
            }
            match (b.policy, b.coalition) {
                (BuilderPolicy::Colluding, None) => {
                    return Err(err(format!("builder.{i}.coalition"), "colluding builder needs one"));
                }
                (p, Some(_)) if p != BuilderPolicy::Colluding => {
                    return Err(err(
                        format!("builder.{i}.coalition"),
                        "only colluding builders join coalitions",
                    ));
                }
                _ => {}
            }
            if b.prior_included > b.prior_received {
                return Err(err(format!("builder.{i}.prior_included"), "exceeds prior_received"));
            }
        }
        if self.sim.mode == Mode::Pbs {
            if self.builders.is_empty() {
                return Err(err("builder", "pbs mode needs at least one builder"));
            }
            if self.relays.is_empty() && !self.proposer.local_build {
                return Err(err("relay", "pbs mode needs a relay or proposer.local_build"));
            }
            // Every builder must be reachable through some relay.
            for (bi, _) in self.builders.iter().enumerate() {
                let covered = self.relays.iter().any(|r| match &r.builders {
                    None => true,
                    Some(list) => list.contains(&(bi as u32)),
                });
                if !covered && !self.relays.is_empty() {
                    return Err(err(format!("builder.{bi}"), "not connected to any relay"));
                }
            }
        }
        for (i, r) in self.relays.iter().enumerate() {
            if let Some(list) = &r.builders {
                for b in list {
                    if *b as usize >= self.builders.len() {
                        return Err(err(format!("relay.{i}.builders"), "unknown builder"));
                    }
                }
            }
        }
        if self.proposer.node >= node_arity {
            return Err(err("proposer.node", "unknown node"));
        }
        for (i, u) in self.sanctions.users.iter().enumerate() {
            if *u >= self.users.count {
                return Err(err(format!("sanctions.users.{i}"), "unknown user"));
            }
        }
        if !(0.0..=1.0).contains(&self.policy.p_detect) {
            return Err(err("policy.p_detect", "must be in [0, 1]"));
        }
        if self.routing.gamma > 6 {
            return Err(err("routing.gamma", "must be ≤ 6"));
        }
        Ok(())
    }

    /// Applies one sweep assignment, e.g. `policy.penalty = "14"`. Paths
    /// cover the parameters experiments sweep; unknown paths are an error
    /// carrying the offending path.
    pub fn set_param(&mut self, path: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |msg: &str| ConfigError::new(path.to_string(), msg.to_string());
        let parse_amount =
            |v: &str| v.parse::<TokenAmount>().map_err(|e| ConfigError::new(path, e.to_string()));
        match path {
            "sim.rounds" => self.sim.rounds = value.parse().map_err(|_| bad("bad u32"))?,
            "sim.seed" => self.sim.seed = value.parse().map_err(|_| bad("bad u64"))?,
            "sim.gas_limit" => self.sim.gas_limit = value.parse().map_err(|_| bad("bad u64"))?,
            "sim.ticks_per_round" => {
                self.sim.ticks_per_round = value.parse().map_err(|_| bad("bad u32"))?
            }
            "sim.mode" => {
                self.sim.mode = match value {
                    "pbs" => Mode::Pbs,
                    "legacy" => Mode::Legacy,
                    _ => return Err(bad("expected pbs|legacy")),
                }
            }
            "sim.legacy_mode" => {
                self.sim.legacy_mode = match value {
                    "naive" => LegacyMode::Naive,
                    "greedy" => LegacyMode::Greedy,
                    _ => return Err(bad("expected naive|greedy")),
                }
            }
            "routing.mode" => {
                self.routing.mode = match value {
                    "rate" => RoutingMode::Rate,
                    "uniform" => RoutingMode::Uniform,
                    "reputation" => RoutingMode::Reputation,
                    _ => return Err(bad("expected rate|uniform|reputation")),
                }
            }
            "routing.gamma" => self.routing.gamma = value.parse().map_err(|_| bad("bad u32"))?,
            "policy.penalty" => self.policy.penalty = parse_amount(value)?,
            "policy.p_detect" => self.policy.p_detect = value.parse().map_err(|_| bad("bad f64"))?,
            "policy.regulator_active" => {
                self.policy.regulator_active = value.parse().map_err(|_| bad("bad bool"))?
            }
            "policy.honest_profit" => self.policy.honest_profit = parse_amount(value)?,
            "policy.collusive_profit" => self.policy.collusive_profit = parse_amount(value)?,
            "policy.escalator" => {
                self.policy.escalator = value.parse().map_err(|_| bad("bad bool"))?
            }
            "policy.reputation" => {
                self.policy.reputation = value.parse().map_err(|_| bad("bad bool"))?
            }
            "policy.tee_overhead_gas" => {
                self.policy.tee_overhead_gas = value.parse().map_err(|_| bad("bad u32"))?
            }
            "users.count" => self.users.count = value.parse().map_err(|_| bad("bad u32"))?,
            "users.swaps_per_round" => {
                self.users.swaps_per_round = value.parse().map_err(|_| bad("bad u32"))?
            }
            "users.submit_probability" => {
                self.users.submit_probability = value.parse().map_err(|_| bad("bad f64"))?
            }
            "users.slippage_tolerance_bps" => {
                self.users.slippage_tolerance_bps = value.parse().map_err(|_| bad("bad u16"))?
            }
            "users.flow" => {
                self.users.flow = match value {
                    "public" => FlowMode::Public,
                    "exclusive" => FlowMode::Exclusive,
                    _ => return Err(bad("expected public|exclusive")),
                }
            }
            "network.default_latency" => {
                self.network.default_latency = value.parse().map_err(|_| bad("bad u32"))?
            }
            "spam.copies" => self.spam.copies = value.parse().map_err(|_| bad("bad u32"))?,
            other => {
                // Indexed paths: pool.N.fee_bps, builder.N.policy, ...
                let parts: Vec<&str> = other.split('.').collect();
                match parts.as_slice() {
                    ["pool", idx, "fee_bps"] => {
                        let idx: usize = idx.parse().map_err(|_| bad("bad index"))?;
                        let pool =
                            self.pools.get_mut(idx).ok_or_else(|| bad("pool index out of range"))?;
                        pool.fee_bps = value.parse().map_err(|_| bad("bad u16"))?;
                    }
                    ["builder", idx, "latency_advantage"] => {
                        let idx: usize = idx.parse().map_err(|_| bad("bad index"))?;
                        let builder = self
                            .builders
                            .get_mut(idx)
                            .ok_or_else(|| bad("builder index out of range"))?;
                        builder.latency_advantage = value.parse().map_err(|_| bad("bad u32"))?;
                    }
                    ["builder", idx, "tee"] => {
                        let idx: usize = idx.parse().map_err(|_| bad("bad index"))?;
                        let builder = self
                            .builders
                            .get_mut(idx)
                            .ok_or_else(|| bad("builder index out of range"))?;
                        builder.tee = value.parse().map_err(|_| bad("bad bool"))?;
                    }
                    _ => return Err(bad("unknown parameter path")),
                }
            }
        }
        self.validate()
    }
}

fn toml_error_path(e: &toml::de::Error) -> String {
    // toml's spans don't name the field; the message usually does.
    e.span().map(|s| format!("byte {}..{}", s.start, s.end)).unwrap_or_else(|| "<root>".into())
}

/// Effective minimum output for a user order given a quote and tolerance.
pub fn min_out_from_tolerance(quote: TokenAmount, tolerance_bps: u16) -> TokenAmount {
    let keep = 10_000 - tolerance_bps.min(10_000);
    TokenAmount::from_micros((quote.micros() as u128 * keep as u128 / 10_000) as u64)
}

/// Scales a token price drawn on the micro grid; helper shared by arrival
/// sampling so scenario code and tests agree on granularity.
pub fn micros_between(rng_draw: u64, min: TokenAmount, max: TokenAmount) -> TokenAmount {
    debug_assert!(min <= max);
    let span = max.micros() - min.micros();
    if span == 0 {
        return min;
    }
    TokenAmount::from_micros(min.micros() + rng_draw % (span + 1))
}

pub const _SCALE_SANITY: u64 = SCALE;
