//! Deterministic agent-based simulation of the MEV supply chain on a
//! stylized blockchain: a public mempool with per-node propagation latency,
//! private bundle channels, searcher bots attacking constant-product AMM
//! pools, a builder/relay/proposer block market, and a policy toolkit
//! (collusion deterrence, enforced random ordering, reputation routing,
//! rebate auctions, sanctions filtering).
//!
//! Everything is integer fixed-point (millionths, floor rounding) and every
//! random draw comes from a seeded generator, so a run is a pure function of
//! its scenario file and seed.

pub mod amm;
pub mod chain;
pub mod engine;
pub mod events;
pub mod mempool;
pub mod metrics;
pub mod pbs;
pub mod policy;
pub mod replay;
pub mod scenario;
pub mod strategies;
pub mod types;

pub use types::{AgentId, Asset, NodeId, PoolId, SwapDirection, SwapIntent, TxId};
