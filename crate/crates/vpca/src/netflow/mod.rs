//! The auxiliary flow network: maximizing net-flow into a set of sink
//! vertices computes the optimum of the relaxed capacity allocation problem,
//! which makes the relaxed placement objective submodular and evaluable by a
//! combinatorial max-flow instead of an LP.

mod basic;
mod maxflow;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::RwLock;

use crate::model::{format_quantity, FlowId, Instance, ModelError, NodeId, NodeSet};
use crate::EPS_CAP;

use maxflow::Residual;

#[derive(Debug, thiserror::Error)]
pub enum NetflowError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("flow violates s-V flow conditions: {0}")]
    InvalidFlow(String),
    #[error("internal invariant breach: {0}")]
    Internal(String),
}

/// Vertex of the auxiliary graph: source, one vertex per flow, a primed
/// vertex per node, and a sink vertex per node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Vertex {
    Source,
    Flow(FlowId),
    Primed(NodeId),
    Sink(NodeId),
}

#[derive(Clone, Debug)]
pub struct NetEdge {
    pub from: Vertex,
    pub to: Vertex,
    pub capacity: f64,
}

/// A computed maximum net-flow: the value and one flow per network edge
/// (parallel to [`FlowNetwork::edges`]).
#[derive(Clone, Debug)]
pub struct NetFlow {
    pub value: f64,
    pub edge_flow: Vec<f64>,
}

#[derive(Clone, Copy)]
enum Engine {
    PushRelabel,
    Augmenting,
}

/// The auxiliary directed graph. Edges are stored in a fixed order: source
/// to flow-vertices, flow-vertices to primed node-vertices (one per path
/// membership), then primed to sink vertices.
#[derive(Clone, Debug)]
pub struct FlowNetwork {
    num_flows: usize,
    num_nodes: usize,
    edges: Vec<NetEdge>,
    /// `(flow, node)` pair for each flow-to-primed edge, parallel to the
    /// middle section of `edges`.
    l2_pairs: Vec<(FlowId, NodeId)>,
}

impl FlowNetwork {
    /// Construct the network for an instance; no flow is routed yet.
    pub fn build(instance: &Instance) -> FlowNetwork {
        let num_flows = instance.flow_count();
        let num_nodes = instance.node_count();
        let mut edges = Vec::new();
        let mut l2_pairs = Vec::new();
        for flow in instance.flows() {
            edges.push(NetEdge {
                from: Vertex::Source,
                to: Vertex::Flow(flow.id),
                capacity: flow.rate,
            });
        }
        for flow in instance.flows() {
            for v in flow.sorted_path() {
                edges.push(NetEdge {
                    from: Vertex::Flow(flow.id),
                    to: Vertex::Primed(v),
                    capacity: flow.rate,
                });
                l2_pairs.push((flow.id, v));
            }
        }
        for node in instance.nodes() {
            edges.push(NetEdge {
                from: Vertex::Primed(node.id),
                to: Vertex::Sink(node.id),
                capacity: node.capacity,
            });
        }
        FlowNetwork { num_flows, num_nodes, edges, l2_pairs }
    }

    pub fn edges(&self) -> &[NetEdge] {
        &self.edges
    }

    /// Vertex count of the graph itself (source + flows + primed + sinks).
    pub fn vertex_count(&self) -> usize {
        1 + self.num_flows + 2 * self.num_nodes
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    fn vertex_index(&self, v: Vertex) -> usize {
        match v {
            Vertex::Source => 0,
            Vertex::Flow(f) => 1 + f.index(),
            Vertex::Primed(n) => 1 + self.num_flows + n.index(),
            Vertex::Sink(n) => 1 + self.num_flows + self.num_nodes + n.index(),
        }
    }

    fn check_sinks(&self, sinks: &NodeSet) -> Result<(), NetflowError> {
        if sinks.universe() != self.num_nodes {
            return Err(ModelError::UniverseMismatch {
                set: sinks.universe(),
                instance: self.num_nodes,
            }
            .into());
        }
        Ok(())
    }

    /// Maximum total net-flow into the sinks `selected`, computed by FIFO
    /// push-relabel through an artificial super-sink attached to them.
    pub fn max_net_flow(&self, selected: &NodeSet) -> Result<NetFlow, NetflowError> {
        self.solve(selected, None, Engine::PushRelabel)
    }

    /// Same computation by BFS augmenting paths; kept as an independent
    /// oracle for cross-checks.
    pub fn max_net_flow_augmenting(&self, selected: &NodeSet) -> Result<NetFlow, NetflowError> {
        self.solve(selected, None, Engine::Augmenting)
    }

    /// Maximum net-flow with only the given flows allowed to route traffic.
    pub(crate) fn max_net_flow_restricted(
        &self,
        selected: &NodeSet,
        allowed: &[bool],
    ) -> Result<NetFlow, NetflowError> {
        self.solve(selected, Some(allowed), Engine::PushRelabel)
    }

    fn solve(
        &self,
        selected: &NodeSet,
        allowed: Option<&[bool]>,
        engine: Engine,
    ) -> Result<NetFlow, NetflowError> {
        self.check_sinks(selected)?;
        if selected.is_empty() {
            return Ok(NetFlow { value: 0.0, edge_flow: vec![0.0; self.edges.len()] });
        }
        let n = self.vertex_count() + 1;
        let super_sink = n - 1;
        let mut residual = Residual::new(n);
        let mut forward = Vec::with_capacity(self.edges.len());
        for edge in &self.edges {
            let skip = match (allowed, edge.from, edge.to) {
                (Some(ok), _, Vertex::Flow(f)) => !ok[f.index()],
                (Some(ok), Vertex::Flow(f), _) => !ok[f.index()],
                _ => false,
            };
            if skip {
                forward.push(None);
            } else {
                forward.push(Some(residual.add_edge(
                    self.vertex_index(edge.from),
                    self.vertex_index(edge.to),
                    edge.capacity,
                )));
            }
        }
        for v in selected.iter() {
            // The sink's only in-edge has capacity c_v, so c_v never binds here.
            let cap = self.edges[self.num_flows + self.l2_pairs.len() + v.index()].capacity;
            residual.add_edge(self.vertex_index(Vertex::Sink(v)), super_sink, cap);
        }
        let value = match engine {
            Engine::PushRelabel => residual.max_flow_push_relabel(0, super_sink),
            Engine::Augmenting => residual.max_flow_edmonds_karp(0, super_sink),
        };
        let edge_flow = forward
            .iter()
            .map(|f| f.map(|id| residual.flow(id)).unwrap_or(0.0))
            .collect();
        Ok(NetFlow { value, edge_flow })
    }

    /// Check the s-V flow conditions for `edge_flow` with sinks `selected`:
    /// capacities respected, conservation at flow and primed vertices,
    /// non-positive net at the source, non-negative net at sinks, and no
    /// flow into sinks outside the selected set.
    pub fn verify_flow(&self, selected: &NodeSet, edge_flow: &[f64]) -> Result<(), NetflowError> {
        self.check_sinks(selected)?;
        if edge_flow.len() != self.edges.len() {
            return Err(NetflowError::InvalidFlow(format!(
                "expected {} edge flows, got {}",
                self.edges.len(),
                edge_flow.len()
            )));
        }
        let mut net = vec![0.0; self.vertex_count()];
        for (edge, &phi) in self.edges.iter().zip(edge_flow) {
            if !(phi >= -EPS_CAP) || phi > edge.capacity + EPS_CAP {
                return Err(NetflowError::InvalidFlow(format!(
                    "edge {:?} -> {:?} carries {phi} outside [0, {}]",
                    edge.from, edge.to, edge.capacity
                )));
            }
            net[self.vertex_index(edge.to)] += phi;
            net[self.vertex_index(edge.from)] -= phi;
        }
        for flow_id in 0..self.num_flows {
            let v = 1 + flow_id;
            if net[v].abs() > EPS_CAP {
                return Err(NetflowError::InvalidFlow(format!(
                    "flow vertex f{flow_id} has nonzero net flow {}",
                    net[v]
                )));
            }
        }
        for node in 0..self.num_nodes {
            let v = 1 + self.num_flows + node;
            if net[v].abs() > EPS_CAP {
                return Err(NetflowError::InvalidFlow(format!(
                    "primed vertex n{node}' has nonzero net flow {}",
                    net[v]
                )));
            }
        }
        if net[0] > EPS_CAP {
            return Err(NetflowError::InvalidFlow(format!(
                "source has positive net inflow {}",
                net[0]
            )));
        }
        for node in 0..self.num_nodes {
            let v = 1 + self.num_flows + self.num_nodes + node;
            if net[v] < -EPS_CAP {
                return Err(NetflowError::InvalidFlow(format!(
                    "sink n{node} has negative net flow {}",
                    net[v]
                )));
            }
            if !selected.contains(NodeId(node as u32)) && net[v] > EPS_CAP {
                return Err(NetflowError::InvalidFlow(format!(
                    "flow enters unselected sink n{node}"
                )));
            }
        }
        Ok(())
    }

    /// Per-(flow, node) rates carried by `edge_flow`, keeping only entries on
    /// selected nodes and above arithmetic dust.
    pub(crate) fn assignment_entries(
        &self,
        selected: &NodeSet,
        edge_flow: &[f64],
    ) -> Vec<((FlowId, NodeId), f64)> {
        let base = self.num_flows;
        self.l2_pairs
            .iter()
            .enumerate()
            .filter(|&(_, &(_, v))| selected.contains(v))
            .map(|(i, &(f, v))| ((f, v), edge_flow[base + i]))
            .filter(|&(_, rate)| rate > 1e-12)
            .collect()
    }

    /// Graphviz rendering with capacities as edge labels.
    pub fn to_dot(&self) -> String {
        fn name(v: Vertex) -> String {
            match v {
                Vertex::Source => "s".to_string(),
                Vertex::Flow(f) => format!("f{f}"),
                Vertex::Primed(n) => format!("n{n}'"),
                Vertex::Sink(n) => format!("n{n}"),
            }
        }
        let mut out = String::from("digraph Z {\n  rankdir=LR;\n");
        for edge in &self.edges {
            let _ = writeln!(
                out,
                "  \"{}\" -> \"{}\" [label=\"{}\"];",
                name(edge.from),
                name(edge.to),
                format_quantity(edge.capacity)
            );
        }
        out.push_str("}\n");
        out
    }
}

pub use basic::extract_basic_assignment;

/// Memoizing evaluator for the relaxed allocation optimum `R3`.
///
/// Values are computed by push-relabel on the instance's network and cached
/// per node set; concurrent evaluation of distinct sets is safe, and results
/// do not depend on evaluation order.
pub struct R3Evaluator<'a> {
    instance: &'a Instance,
    network: FlowNetwork,
    memo: RwLock<HashMap<NodeSet, f64>>,
    runs: AtomicUsize,
}

impl<'a> R3Evaluator<'a> {
    pub fn new(instance: &'a Instance) -> Self {
        R3Evaluator {
            instance,
            network: FlowNetwork::build(instance),
            memo: RwLock::new(HashMap::new()),
            runs: AtomicUsize::new(0),
        }
    }

    pub fn instance(&self) -> &'a Instance {
        self.instance
    }

    pub fn network(&self) -> &FlowNetwork {
        &self.network
    }

    /// Optimum of the relaxed allocation problem for the given node set.
    pub fn r3(&self, selected: &NodeSet) -> Result<f64, NetflowError> {
        self.network.check_sinks(selected)?;
        if let Some(&v) = self.memo.read().unwrap().get(selected) {
            return Ok(v);
        }
        let value = self.network.max_net_flow(selected)?.value;
        self.runs.fetch_add(1, Ordering::Relaxed);
        self.memo.write().unwrap().insert(selected.clone(), value);
        Ok(value)
    }

    /// Number of max-flow computations performed (cache misses).
    pub fn evaluations(&self) -> usize {
        self.runs.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testutil::{fig1, set};
    use crate::model::{generate_random, GeneratorParams};

    #[test]
    fn fig1_network_shape() {
        let inst = fig1(2.0);
        let net = FlowNetwork::build(&inst);
        assert_eq!(net.vertex_count(), 10);
        assert_eq!(net.edges().len(), 12);
        let l3: Vec<f64> = net.edges()[9..].iter().map(|e| e.capacity).collect();
        assert_eq!(l3, vec![3.0, 3.0, 3.0]);
    }

    #[test]
    fn zero_flow_instance_network() {
        let inst = Instance::parse("budget 1\nnode a cost 1 capacity 2\nnode b cost 1 capacity 2\n").unwrap();
        let net = FlowNetwork::build(&inst);
        assert_eq!(net.vertex_count(), 1 + 0 + 4);
        assert_eq!(net.edges().len(), 2);
    }

    #[test]
    fn edge_count_formula_on_random_instance() {
        let inst = generate_random(
            &GeneratorParams {
                num_nodes: 6,
                num_flows: 10,
                max_path_len: 4,
                rate_range: (1.0, 5.0),
                capacity_range: (5.0, 20.0),
                cost_range: (1.0, 3.0),
                budget_fraction: 0.5,
            },
            1,
        )
        .unwrap();
        let net = FlowNetwork::build(&inst);
        let path_total: usize = inst.flows().iter().map(|f| f.path.len()).sum();
        assert_eq!(net.edges().len(), inst.flow_count() + path_total + inst.node_count());
        assert_eq!(net.vertex_count(), 1 + inst.flow_count() + 2 * inst.node_count());
    }

    #[test]
    fn net_flow_values_on_fig1() {
        let inst = fig1(2.0);
        let net = FlowNetwork::build(&inst);
        // One selected node of capacity 3 serves two offered flows of rate 2.
        let out = net.max_net_flow(&set(&inst, &[2])).unwrap();
        assert!((out.value - 3.0).abs() < 1e-9, "got {}", out.value);
        net.verify_flow(&set(&inst, &[2]), &out.edge_flow).unwrap();
        // Two adjacent nodes absorb all demand.
        let out = net.max_net_flow(&set(&inst, &[1, 2])).unwrap();
        assert!((out.value - 6.0).abs() < 1e-9);
        // No sinks, no flow.
        let out = net.max_net_flow(&set(&inst, &[])).unwrap();
        assert_eq!(out.value, 0.0);
    }

    #[test]
    fn r3_memoizes_and_matches_examples() {
        let inst = fig1(2.0);
        let eval = R3Evaluator::new(&inst);
        assert!((eval.r3(&set(&inst, &[1])).unwrap() - 3.0).abs() < 1e-9);
        assert!((eval.r3(&set(&inst, &[0, 1, 2])).unwrap() - 6.0).abs() < 1e-9);
        assert_eq!(eval.r3(&set(&inst, &[])).unwrap(), 0.0);
        let before = eval.evaluations();
        eval.r3(&set(&inst, &[1])).unwrap();
        assert_eq!(eval.evaluations(), before);
    }

    #[test]
    fn singleton_r3_matches_closed_form() {
        // For a single selected node the optimum is min(capacity, offered rate).
        let params = GeneratorParams {
            num_nodes: 5,
            num_flows: 8,
            max_path_len: 3,
            rate_range: (1.0, 4.0),
            capacity_range: (4.0, 9.0),
            cost_range: (1.0, 2.0),
            budget_fraction: 1.0,
        };
        for seed in 0..50 {
            let inst = generate_random(&params, seed).unwrap();
            let eval = R3Evaluator::new(&inst);
            for node in inst.nodes() {
                let offered: f64 = inst
                    .flows()
                    .iter()
                    .filter(|f| f.path.contains(&node.id))
                    .map(|f| f.rate)
                    .sum();
                let expected = node.capacity.min(offered);
                let got = eval.r3(&set(&inst, &[node.id.0])).unwrap();
                assert!(
                    (got - expected).abs() < 1e-9,
                    "seed {seed} node {}: r3 {got} vs closed form {expected}",
                    node.name
                );
            }
        }
    }

    #[test]
    fn engines_agree_on_random_networks() {
        let params = GeneratorParams {
            num_nodes: 6,
            num_flows: 8,
            max_path_len: 4,
            rate_range: (0.5, 5.0),
            capacity_range: (5.0, 12.0),
            cost_range: (1.0, 2.0),
            budget_fraction: 1.0,
        };
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for seed in 0..100 {
            let inst = generate_random(&params, seed).unwrap();
            let net = FlowNetwork::build(&inst);
            let mut sel = NodeSet::empty(inst.node_count());
            for v in 0..inst.node_count() {
                if rng.gen_bool(0.5) {
                    sel.insert(NodeId(v as u32)).unwrap();
                }
            }
            let a = net.max_net_flow(&sel).unwrap().value;
            let b = net.max_net_flow_augmenting(&sel).unwrap().value;
            assert!((a - b).abs() < 1e-6, "seed {seed}: push-relabel {a} vs augmenting {b}");
        }
    }

    #[test]
    fn r3_bounds_hold() {
        let inst = fig1(2.0);
        let eval = R3Evaluator::new(&inst);
        for ids in [vec![], vec![0], vec![0, 1], vec![0, 1, 2]] {
            let sel = set(&inst, &ids);
            let covered = inst.flows_covered(&sel).unwrap();
            let demand: f64 = covered.iter().map(|&f| inst.flow(f).rate).sum();
            let cap: f64 = sel.iter().map(|v| inst.node(v).capacity).sum();
            let value = eval.r3(&sel).unwrap();
            assert!(value >= -1e-12 && value <= demand.min(cap) + 1e-9);
        }
    }

    #[test]
    fn dot_dump_names_vertices() {
        let inst = fig1(2.0);
        let dot = FlowNetwork::build(&inst).to_dot();
        assert!(dot.contains("\"s\" -> \"f0\" [label=\"2\"]"));
        assert!(dot.contains("\"n0'\" -> \"n0\" [label=\"3\"]"));
    }

    #[test]
    fn unknown_universe_rejected() {
        let inst = fig1(2.0);
        let net = FlowNetwork::build(&inst);
        let wrong = NodeSet::empty(5);
        assert!(net.max_net_flow(&wrong).is_err());
    }
}
