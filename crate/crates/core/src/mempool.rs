//! Transaction propagation with per-node latency, so nodes hold divergent
//! mempool views, plus the private bundle channel that bypasses the public
//! mempool entirely.
//!
//! Time is discrete: integer ticks subdivide rounds, one block per round.

use std::collections::{BTreeMap, BTreeSet};

use crate::chain::{Bundle, Transaction};
use crate::types::{AgentId, NodeId, TxId};

pub type Tick = u64;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NetError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("builder {0} does not accept private flow")]
    BuilderRejectsPrivateFlow(AgentId),
}

/// Full-mesh topology with a latency matrix in ticks. Self-latency is zero
/// and every link is finite, so delivery is guaranteed.
#[derive(Debug, Clone)]
pub struct NetworkTopology {
    pub nodes: u32,
    pub default_latency: u32,
    overrides: BTreeMap<(NodeId, NodeId), u32>,
}

impl NetworkTopology {
    pub fn new(nodes: u32, default_latency: u32) -> Self {
        NetworkTopology { nodes: nodes.max(1), default_latency, overrides: BTreeMap::new() }
    }

    pub fn set_latency(&mut self, from: NodeId, to: NodeId, ticks: u32) {
        self.overrides.insert((from, to), ticks);
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node.0 < self.nodes
    }

    pub fn latency(&self, from: NodeId, to: NodeId) -> u32 {
        if from == to {
            return 0;
        }
        self.overrides.get(&(from, to)).copied().unwrap_or(self.default_latency)
    }

    pub fn max_latency(&self) -> u32 {
        self.overrides
            .values()
            .copied()
            .chain(std::iter::once(self.default_latency))
            .max()
            .unwrap_or(0)
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes).map(NodeId)
    }
}

/// The public mempool: per-node arrival schedules. A tx shows up at node `n`
/// exactly at `origin tick + latency(origin, n)`.
#[derive(Debug, Clone, Default)]
pub struct MempoolNet {
    txs: BTreeMap<TxId, Transaction>,
    arrivals: BTreeMap<NodeId, BTreeMap<TxId, Tick>>,
}

impl MempoolNet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Broadcasts a tx from `origin` at `tick`; returns the delivery
    /// schedule (node, first-visible tick) for every node.
    pub fn broadcast_tx(
        &mut self,
        topology: &NetworkTopology,
        tx: Transaction,
        origin: NodeId,
        tick: Tick,
    ) -> Result<Vec<(NodeId, Tick)>, NetError> {
        if !topology.contains(origin) {
            return Err(NetError::UnknownNode(origin));
        }
        let mut schedule = Vec::with_capacity(topology.nodes as usize);
        for node in topology.node_ids() {
            let at = tick + topology.latency(origin, node) as Tick;
            self.arrivals.entry(node).or_default().insert(tx.id, at);
            schedule.push((node, at));
        }
        self.txs.insert(tx.id, tx);
        Ok(schedule)
    }

    /// Everything visible at `node` by `tick` and not yet included on chain,
    /// ordered by (arrival tick, tx id).
    pub fn node_view(
        &self,
        node: NodeId,
        tick: Tick,
        included: &BTreeSet<TxId>,
    ) -> Vec<Transaction> {
        let Some(arrivals) = self.arrivals.get(&node) else {
            return Vec::new();
        };
        let mut visible: Vec<(Tick, TxId)> = arrivals
            .iter()
            .filter(|(id, at)| **at <= tick && !included.contains(*id))
            .map(|(id, at)| (*at, *id))
            .collect();
        visible.sort();
        visible.into_iter().map(|(_, id)| self.txs[&id]).collect()
    }

    pub fn get(&self, id: TxId) -> Option<&Transaction> {
        self.txs.get(&id)
    }
}

/// One builder's private bundle queue. Contents are reachable only through
/// `visible_at`/`prune_included`, which the block-building path owns; no
/// public-mempool view can observe them.
#[derive(Debug, Clone)]
pub struct PrivateChannel {
    pub builder: AgentId,
    accepts_private_flow: bool,
    queue: Vec<(Bundle, Tick)>,
}

impl PrivateChannel {
    pub fn new(builder: AgentId, accepts_private_flow: bool) -> Self {
        PrivateChannel { builder, accepts_private_flow, queue: Vec::new() }
    }

    pub fn submit_private_bundle(&mut self, bundle: Bundle, tick: Tick) -> Result<(), NetError> {
        if !self.accepts_private_flow {
            return Err(NetError::BuilderRejectsPrivateFlow(self.builder));
        }
        self.queue.push((bundle, tick));
        Ok(())
    }

    /// Bundles submitted at or before `tick`, in submission order, skipping
    /// any whose transactions already landed on chain.
    pub fn visible_at(&self, tick: Tick, included: &BTreeSet<TxId>) -> Vec<Bundle> {
        self.queue
            .iter()
            .filter(|(b, at)| *at <= tick && !b.txs.iter().any(|t| included.contains(&t.id)))
            .map(|(b, _)| b.clone())
            .collect()
    }

    /// Drops queued bundles whose transactions have been included.
    pub fn prune_included(&mut self, included: &BTreeSet<TxId>) {
        self.queue.retain(|(b, _)| !b.txs.iter().any(|t| included.contains(&t.id)));
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::TxKind;
    use crate::types::TokenAmount;

    fn tx(id: u32) -> Transaction {
        Transaction::new(
            TxId::new(AgentId(1), id),
            AgentId(1),
            TxKind::Noop,
            TokenAmount::from_micros(10),
            0,
        )
    }

    #[test]
    fn delivery_follows_latency() {
        let mut topo = NetworkTopology::new(3, 1);
        topo.set_latency(NodeId(0), NodeId(2), 5);
        let mut net = MempoolNet::new();
        let schedule = net.broadcast_tx(&topo, tx(0), NodeId(0), 10).unwrap();
        assert_eq!(schedule, vec![(NodeId(0), 10), (NodeId(1), 11), (NodeId(2), 15)]);

        let none = BTreeSet::new();
        assert_eq!(net.node_view(NodeId(2), 14, &none).len(), 0);
        assert_eq!(net.node_view(NodeId(2), 15, &none).len(), 1);
        assert_eq!(net.node_view(NodeId(1), 11, &none).len(), 1);
    }

    #[test]
    fn different_latencies_give_different_first_visible_ticks() {
        let mut topo = NetworkTopology::new(3, 1);
        topo.set_latency(NodeId(0), NodeId(1), 1);
        topo.set_latency(NodeId(0), NodeId(2), 5);
        let mut net = MempoolNet::new();
        net.broadcast_tx(&topo, tx(0), NodeId(0), 0).unwrap();
        let none = BTreeSet::new();
        let first_visible = |node: NodeId| {
            (0..10).find(|t| !net.node_view(node, *t, &none).is_empty()).unwrap()
        };
        assert_ne!(first_visible(NodeId(1)), first_visible(NodeId(2)));
    }

    #[test]
    fn zero_latency_gives_identical_views() {
        let topo = NetworkTopology::new(4, 0);
        let mut net = MempoolNet::new();
        for i in 0..5 {
            net.broadcast_tx(&topo, tx(i), NodeId(i % 4), i as Tick).unwrap();
        }
        let none = BTreeSet::new();
        for t in 0..6 {
            let reference = net.node_view(NodeId(0), t, &none);
            for n in 1..4 {
                assert_eq!(net.node_view(NodeId(n), t, &none), reference, "tick {t} node {n}");
            }
        }
    }

    #[test]
    fn unknown_origin_rejected() {
        let topo = NetworkTopology::new(2, 1);
        let mut net = MempoolNet::new();
        assert_eq!(
            net.broadcast_tx(&topo, tx(0), NodeId(7), 0),
            Err(NetError::UnknownNode(NodeId(7)))
        );
    }

    #[test]
    fn view_orders_by_arrival_then_id() {
        let topo = NetworkTopology::new(1, 0);
        let mut net = MempoolNet::new();
        net.broadcast_tx(&topo, tx(2), NodeId(0), 3).unwrap();
        net.broadcast_tx(&topo, tx(1), NodeId(0), 1).unwrap();
        net.broadcast_tx(&topo, tx(0), NodeId(0), 3).unwrap();
        let none = BTreeSet::new();
        let view = net.node_view(NodeId(0), 5, &none);
        let ids: Vec<u32> = view.iter().map(|t| (t.id.0 & 0xffff_ffff) as u32).collect();
        assert_eq!(ids, vec![1, 0, 2], "arrival order, id tie-break");
    }

    #[test]
    fn empty_view_without_arrivals() {
        let net = MempoolNet::new();
        assert!(net.node_view(NodeId(0), 100, &BTreeSet::new()).is_empty());
    }

    #[test]
    fn view_is_monotone_until_inclusion() {
        let topo = NetworkTopology::new(2, 2);
        let mut net = MempoolNet::new();
        for i in 0..6 {
            net.broadcast_tx(&topo, tx(i), NodeId(0), i as Tick).unwrap();
        }
        let none = BTreeSet::new();
        for t in 0..8 {
            let now: BTreeSet<TxId> =
                net.node_view(NodeId(1), t, &none).iter().map(|x| x.id).collect();
            let later: BTreeSet<TxId> =
                net.node_view(NodeId(1), t + 1, &none).iter().map(|x| x.id).collect();
            assert!(now.is_subset(&later), "view shrank between {t} and {}", t + 1);
        }
    }

    #[test]
    fn views_converge_after_max_latency() {
        let mut topo = NetworkTopology::new(3, 2);
        topo.set_latency(NodeId(0), NodeId(2), 7);
        let mut net = MempoolNet::new();
        let mut last_submit = 0;
        for i in 0..4 {
            net.broadcast_tx(&topo, tx(i), NodeId(i % 3), i as Tick).unwrap();
            last_submit = i as Tick;
        }
        let horizon = last_submit + topo.max_latency() as Tick;
        let none = BTreeSet::new();
        let reference: BTreeSet<TxId> =
            net.node_view(NodeId(0), horizon, &none).iter().map(|t| t.id).collect();
        for n in topo.node_ids() {
            let view: BTreeSet<TxId> =
                net.node_view(n, horizon, &none).iter().map(|t| t.id).collect();
            assert_eq!(view, reference, "node {n} had not converged");
        }
    }

    #[test]
    fn included_txs_leave_the_view() {
        let topo = NetworkTopology::new(1, 0);
        let mut net = MempoolNet::new();
        net.broadcast_tx(&topo, tx(0), NodeId(0), 0).unwrap();
        net.broadcast_tx(&topo, tx(1), NodeId(0), 0).unwrap();
        let mut included = BTreeSet::new();
        included.insert(TxId::new(AgentId(1), 0));
        let view = net.node_view(NodeId(0), 1, &included);
        assert_eq!(view.len(), 1);
        assert_eq!(view[0].id, TxId::new(AgentId(1), 1));
    }

    #[test]
    fn private_bundles_never_reach_node_views() {
        let topo = NetworkTopology::new(2, 1);
        let net = MempoolNet::new();
        let mut channel = PrivateChannel::new(AgentId(5), true);
        let bundle = Bundle::new(vec![tx(9)], AgentId(1)).unwrap();
        channel.submit_private_bundle(bundle.clone(), 3).unwrap();

        let none = BTreeSet::new();
        for n in topo.node_ids() {
            assert!(net.node_view(n, 100, &none).is_empty());
        }
        assert_eq!(channel.visible_at(2, &none).len(), 0, "not visible before submit tick");
        assert_eq!(channel.visible_at(3, &none), vec![bundle]);
    }

    #[test]
    fn builder_can_reject_private_flow() {
        let mut channel = PrivateChannel::new(AgentId(5), false);
        let bundle = Bundle::new(vec![tx(0)], AgentId(1)).unwrap();
        assert_eq!(
            channel.submit_private_bundle(bundle, 0),
            Err(NetError::BuilderRejectsPrivateFlow(AgentId(5)))
        );
    }

    #[test]
    fn same_bundle_to_two_builders_enqueues_independently() {
        let mut a = PrivateChannel::new(AgentId(5), true);
        let mut b = PrivateChannel::new(AgentId(6), true);
        let bundle = Bundle::new(vec![tx(0)], AgentId(1)).unwrap();
        a.submit_private_bundle(bundle.clone(), 0).unwrap();
        b.submit_private_bundle(bundle, 0).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(b.len(), 1);
    }
}
