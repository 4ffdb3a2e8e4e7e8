//! Static topologies of simulated nodes connected by FIFO links.
//!
//! Nodes are stepped round-robin on one thread; after each round every
//! outbox is drained into the peer inboxes, so a fixed configuration always
//! yields the same message trace.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::NodeConfig;
use super::node::{Node, NodeError, NodeStep};
use crate::memory::Cell;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub time_us: u64,
    pub src: Cell,
    pub dst: Cell,
    pub value: Cell,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    /// Node 0 talks to every other node.
    Star,
    /// Every node talks to every other node.
    Mesh,
}

pub struct Network {
    pub nodes: Vec<Node>,
    pub trace: Vec<Message>,
    /// Messages addressed to nodes that are not part of the network.
    pub dropped: Vec<Message>,
    index: BTreeMap<Cell, usize>,
}

impl Network {
    pub fn new(configs: Vec<NodeConfig>) -> Result<Self, NodeError> {
        let nodes = configs.into_iter().map(Node::new).collect::<Result<Vec<_>, _>>()?;
        let index = nodes.iter().enumerate().map(|(i, n)| (n.id(), i)).collect();
        Ok(Network { nodes, trace: Vec::new(), dropped: Vec::new(), index })
    }

    /// `n` nodes with ids `0..n` wired per `topo`, all sharing `base`.
    pub fn with_topology(n: usize, topo: Topology, base: &NodeConfig) -> Result<Self, NodeError> {
        let ids: Vec<Cell> = (0..n as Cell).collect();
        let configs = ids
            .iter()
            .map(|&id| {
                let peers = match topo {
                    Topology::Star if id == 0 => ids[1..].to_vec(),
                    Topology::Star => vec![0],
                    Topology::Mesh => ids.iter().copied().filter(|&p| p != id).collect(),
                };
                NodeConfig { node_id: id, peers, ..base.clone() }
            })
            .collect();
        Self::new(configs)
    }

    pub fn node(&self, id: Cell) -> Option<&Node> {
        self.index.get(&id).map(|&i| &self.nodes[i])
    }

    pub fn node_mut(&mut self, id: Cell) -> Option<&mut Node> {
        self.index.get(&id).map(|&i| &mut self.nodes[i])
    }

    /// Move queued cells from every outbox to the destination inbox.
    pub fn deliver(&mut self) -> usize {
        let mut moved = Vec::new();
        for n in &mut self.nodes {
            if !n.is_powered() {
                continue;
            }
            let src = n.id();
            let now = n.now_us();
            let dsts: Vec<Cell> = n.vm.links.outbox.keys().copied().collect();
            for dst in dsts {
                for value in n.vm.links.drain_outbox(dst) {
                    moved.push(Message { time_us: now, src, dst, value });
                }
            }
        }
        for m in &moved {
            match self.index.get(&m.dst) {
                Some(&i) => {
                    let n = &mut self.nodes[i];
                    n.vm.advance_to_us(m.time_us);
                    n.vm.links.deliver(m.src, m.value);
                }
                None => self.dropped.push(*m),
            }
        }
        let k = moved.len();
        self.trace.extend(moved);
        k
    }

    /// One round: every node steps once, then links deliver. Returns the
    /// step result of each node.
    pub fn round(&mut self) -> Vec<NodeStep> {
        let steps = self.nodes.iter_mut().map(Node::step).collect();
        self.deliver();
        steps
    }

    /// Run rounds until every node is done, dead, or blocked with nothing in
    /// flight, or `max_rounds` is reached.
    pub fn run(&mut self, max_rounds: usize) -> usize {
        for r in 0..max_rounds {
            let steps = self.round();
            let quiet = steps.iter().all(|s| matches!(s, NodeStep::Done | NodeStep::Dead | NodeStep::Blocked));
            let pending = self.nodes.iter().any(|n| n.vm.links.inbox.values().any(|q| !q.is_empty()));
            if quiet && !pending {
                return r + 1;
            }
        }
        max_rounds
    }
}
