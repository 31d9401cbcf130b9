//! Domain types: network nodes, flows, instances, assignments and solutions,
//! plus the instance file format, a seeded instance generator, and the
//! virtual-node (per-server) expansion.

mod expand;
mod generate;
mod parse;

pub use expand::{expand_servers, ServerSpec};
pub use generate::{generate_random, GeneratorParams};

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;

use crate::EPS_CAP;

/// Dense node identifier, `0..V` within an instance.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

/// Dense flow identifier, `0..F` within an instance.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl FlowId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Debug for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "f{}", self.0)
    }
}

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A candidate node: deployment cost and processing capacity.
#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub name: String,
    pub cost: f64,
    pub capacity: f64,
}

/// A traffic flow: rate and the candidate nodes on its (fixed) path.
#[derive(Clone, Debug, PartialEq)]
pub struct Flow {
    pub id: FlowId,
    pub name: String,
    pub rate: f64,
    pub path: Vec<NodeId>,
}

impl Flow {
    /// Path node ids in ascending order. The path is a candidate set; order
    /// only matters for serialization.
    pub fn sorted_path(&self) -> Vec<NodeId> {
        let mut p = self.path.clone();
        p.sort_unstable();
        p
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: {message}")]
    Semantic { line: usize, message: String },
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("node set universe {set} does not match instance node count {instance}")]
    UniverseMismatch { set: usize, instance: usize },
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("invalid server expansion: {0}")]
    InvalidExpansion(String),
}

/// A validated problem instance: nodes, flows with fixed paths, and a budget.
///
/// Immutable after construction; the constructor checks every invariant,
/// including the standing assumption that the largest flow rate does not
/// exceed the smallest node capacity.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    nodes: Vec<Node>,
    flows: Vec<Flow>,
    budget: f64,
}

fn check_finite(value: f64, what: &str) -> Result<(), ModelError> {
    if !value.is_finite() {
        return Err(ModelError::Invalid(format!("{what} must be finite, got {value}")));
    }
    Ok(())
}

impl Instance {
    pub fn new(nodes: Vec<Node>, flows: Vec<Flow>, budget: f64) -> Result<Self, ModelError> {
        check_finite(budget, "budget")?;
        if budget < 0.0 {
            return Err(ModelError::Invalid(format!("budget must be >= 0, got {budget}")));
        }
        let mut names = BTreeSet::new();
        for (i, node) in nodes.iter().enumerate() {
            if node.id.index() != i {
                return Err(ModelError::Invalid(format!(
                    "node ids must be dense: expected {} at position {i}, got {}",
                    i, node.id
                )));
            }
            check_finite(node.cost, "node cost")?;
            check_finite(node.capacity, "node capacity")?;
            if node.cost < 0.0 {
                return Err(ModelError::Invalid(format!(
                    "node {} has negative cost {}",
                    node.name, node.cost
                )));
            }
            if node.capacity < 0.0 {
                return Err(ModelError::Invalid(format!(
                    "node {} has negative capacity {}",
                    node.name, node.capacity
                )));
            }
            if !names.insert(node.name.clone()) {
                return Err(ModelError::Invalid(format!("duplicate node name {}", node.name)));
            }
        }
        let mut flow_names = BTreeSet::new();
        for (i, flow) in flows.iter().enumerate() {
            if flow.id.index() != i {
                return Err(ModelError::Invalid(format!(
                    "flow ids must be dense: expected {} at position {i}, got {}",
                    i, flow.id
                )));
            }
            check_finite(flow.rate, "flow rate")?;
            if flow.rate <= 0.0 {
                return Err(ModelError::Invalid(format!(
                    "flow {} must have positive rate, got {}",
                    flow.name, flow.rate
                )));
            }
            if flow.path.is_empty() {
                return Err(ModelError::Invalid(format!("flow {} has an empty path", flow.name)));
            }
            let mut seen = BTreeSet::new();
            for &v in &flow.path {
                if v.index() >= nodes.len() {
                    return Err(ModelError::UnknownNode(v));
                }
                if !seen.insert(v) {
                    return Err(ModelError::Invalid(format!(
                        "flow {} repeats node {} on its path",
                        flow.name,
                        nodes[v.index()].name
                    )));
                }
            }
            if !flow_names.insert(flow.name.clone()) {
                return Err(ModelError::Invalid(format!("duplicate flow name {}", flow.name)));
            }
        }
        // Standing assumption: max flow rate <= min node capacity.
        if let (Some(max_rate), Some(min_cap)) = (
            flows.iter().map(|f| f.rate).reduce(f64::max),
            nodes.iter().map(|n| n.capacity).reduce(f64::min),
        ) {
            if max_rate > min_cap {
                return Err(ModelError::Invalid(format!(
                    "flow rate {max_rate} exceeds smallest node capacity {min_cap}"
                )));
            }
        }
        Ok(Instance { nodes, flows, budget })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn flows(&self) -> &[Flow] {
        &self.flows
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn flow_count(&self) -> usize {
        self.flows.len()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }

    pub fn flow(&self, id: FlowId) -> &Flow {
        &self.flows[id.index()]
    }

    /// Sum of all flow rates (the upper bound on any objective).
    pub fn total_rate(&self) -> f64 {
        self.flows.iter().map(|f| f.rate).sum()
    }

    /// Non-fatal observations about the instance (e.g. it has no flows).
    /// Flows that can never be processed are carried, not rejected.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.flows.is_empty() {
            out.push("instance has no flows; every objective is zero".to_string());
        }
        out
    }

    /// All flow ids whose path intersects `selected`.
    pub fn flows_covered(&self, selected: &NodeSet) -> Result<BTreeSet<FlowId>, ModelError> {
        self.check_universe(selected)?;
        Ok(self
            .flows
            .iter()
            .filter(|f| f.path.iter().any(|&v| selected.contains(v)))
            .map(|f| f.id)
            .collect())
    }

    pub(crate) fn check_universe(&self, set: &NodeSet) -> Result<(), ModelError> {
        if set.universe() != self.node_count() {
            return Err(ModelError::UniverseMismatch {
                set: set.universe(),
                instance: self.node_count(),
            });
        }
        Ok(())
    }

    /// Copy with a different budget.
    pub fn with_budget(&self, budget: f64) -> Result<Instance, ModelError> {
        Instance::new(self.nodes.clone(), self.flows.clone(), budget)
    }

    /// Copy with every node cost replaced by `cost`.
    pub fn with_uniform_cost(&self, cost: f64) -> Result<Instance, ModelError> {
        let nodes = self
            .nodes
            .iter()
            .map(|n| Node { cost, ..n.clone() })
            .collect();
        Instance::new(nodes, self.flows.clone(), self.budget)
    }

    /// Copy with every node capacity replaced by `capacity`.
    pub fn with_uniform_capacity(&self, capacity: f64) -> Result<Instance, ModelError> {
        let nodes = self
            .nodes
            .iter()
            .map(|n| Node { capacity, ..n.clone() })
            .collect();
        Instance::new(nodes, self.flows.clone(), self.budget)
    }

    /// Copy keeping `count` flows sampled uniformly without replacement,
    /// reindexed densely in original order. Deterministic for a fixed seed.
    pub fn subsample_flows(&self, count: usize, seed: u64) -> Result<Instance, ModelError> {
        use rand::seq::index::sample;
        use rand::SeedableRng;
        if count > self.flows.len() {
            return Err(ModelError::Invalid(format!(
                "cannot sample {count} of {} flows",
                self.flows.len()
            )));
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut picked: Vec<usize> = sample(&mut rng, self.flows.len(), count).into_vec();
        picked.sort_unstable();
        let flows = picked
            .iter()
            .enumerate()
            .map(|(i, &orig)| Flow {
                id: FlowId(i as u32),
                ..self.flows[orig].clone()
            })
            .collect();
        Instance::new(self.nodes.clone(), flows, self.budget)
    }
}

/// A set of node ids over a fixed universe `0..universe`, stored as a bitset.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct NodeSet {
    universe: usize,
    words: Vec<u64>,
}

impl NodeSet {
    pub fn empty(universe: usize) -> Self {
        NodeSet {
            universe,
            words: vec![0; universe.div_ceil(64)],
        }
    }

    pub fn full(universe: usize) -> Self {
        let mut s = Self::empty(universe);
        for i in 0..universe {
            s.insert_unchecked(NodeId(i as u32));
        }
        s
    }

    pub fn from_ids<I>(universe: usize, ids: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = NodeId>,
    {
        let mut s = Self::empty(universe);
        for id in ids {
            s.insert(id)?;
        }
        Ok(s)
    }

    pub fn insert(&mut self, id: NodeId) -> Result<(), ModelError> {
        if id.index() >= self.universe {
            return Err(ModelError::UnknownNode(id));
        }
        self.insert_unchecked(id);
        Ok(())
    }

    pub(crate) fn insert_unchecked(&mut self, id: NodeId) {
        self.words[id.index() / 64] |= 1 << (id.index() % 64);
    }

    pub fn remove(&mut self, id: NodeId) {
        if id.index() < self.universe {
            self.words[id.index() / 64] &= !(1 << (id.index() % 64));
        }
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id.index() < self.universe && self.words[id.index() / 64] & (1 << (id.index() % 64)) != 0
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.universe)
            .map(|i| NodeId(i as u32))
            .filter(move |&id| self.contains(id))
    }

    pub fn with(&self, id: NodeId) -> Result<NodeSet, ModelError> {
        let mut s = self.clone();
        s.insert(id)?;
        Ok(s)
    }

    pub fn is_subset(&self, other: &NodeSet) -> bool {
        self.universe == other.universe
            && self
                .words
                .iter()
                .zip(&other.words)
                .all(|(a, b)| a & !b == 0)
    }
}

impl fmt::Debug for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Sparse flow-to-node rate assignment: `(flow, node) -> allocated rate`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Assignment {
    entries: BTreeMap<(FlowId, NodeId), f64>,
}

impl Assignment {
    pub fn empty() -> Self {
        Assignment::default()
    }

    /// Build and validate against the instance: entries non-negative, only on
    /// path nodes, node loads within capacity and flow totals within rate
    /// (both up to `EPS_CAP`).
    pub fn new<I>(instance: &Instance, entries: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = ((FlowId, NodeId), f64)>,
    {
        let mut map = BTreeMap::new();
        for ((f, v), rate) in entries {
            if rate == 0.0 {
                continue;
            }
            if map.insert((f, v), rate).is_some() {
                return Err(ModelError::Invalid(format!("duplicate assignment entry ({f:?}, {v:?})")));
            }
        }
        let a = Assignment { entries: map };
        a.validate(instance)?;
        Ok(a)
    }

    pub(crate) fn from_map(entries: BTreeMap<(FlowId, NodeId), f64>) -> Self {
        Assignment { entries }
    }

    pub fn validate(&self, instance: &Instance) -> Result<(), ModelError> {
        let mut loads = vec![0.0; instance.node_count()];
        let mut totals = vec![0.0; instance.flow_count()];
        for (&(f, v), &rate) in &self.entries {
            if f.index() >= instance.flow_count() {
                return Err(ModelError::Invalid(format!("assignment references unknown flow {f:?}")));
            }
            if v.index() >= instance.node_count() {
                return Err(ModelError::UnknownNode(v));
            }
            if !(rate >= 0.0) || !rate.is_finite() {
                return Err(ModelError::Invalid(format!(
                    "assignment entry ({f:?}, {v:?}) has invalid rate {rate}"
                )));
            }
            if !instance.flow(f).path.contains(&v) {
                return Err(ModelError::Invalid(format!(
                    "flow {} assigned to node {} not on its path",
                    instance.flow(f).name,
                    instance.node(v).name
                )));
            }
            loads[v.index()] += rate;
            totals[f.index()] += rate;
        }
        for (i, &load) in loads.iter().enumerate() {
            let cap = instance.nodes[i].capacity;
            if load > cap + EPS_CAP {
                return Err(ModelError::Invalid(format!(
                    "node {} load {load} exceeds capacity {cap}",
                    instance.nodes[i].name
                )));
            }
        }
        for (i, &total) in totals.iter().enumerate() {
            let rate = instance.flows[i].rate;
            if total > rate + EPS_CAP {
                return Err(ModelError::Invalid(format!(
                    "flow {} total {total} exceeds rate {rate}",
                    instance.flows[i].name
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, f: FlowId, v: NodeId) -> f64 {
        self.entries.get(&(f, v)).copied().unwrap_or(0.0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (FlowId, NodeId, f64)> + '_ {
        self.entries.iter().map(|(&(f, v), &r)| (f, v, r))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn flow_total(&self, f: FlowId) -> f64 {
        self.entries
            .range((f, NodeId(0))..=(f, NodeId(u32::MAX)))
            .map(|(_, &r)| r)
            .sum()
    }

    pub fn node_load(&self, v: NodeId) -> f64 {
        self.entries
            .iter()
            .filter(|(&(_, n), _)| n == v)
            .map(|(_, &r)| r)
            .sum()
    }

    /// Total assigned traffic across all entries.
    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }
}

/// A selected node set with its total deployment cost.
#[derive(Clone, Debug, PartialEq)]
pub struct Placement {
    pub selected: NodeSet,
    pub total_cost: f64,
}

impl Placement {
    pub fn new(instance: &Instance, selected: NodeSet) -> Result<Self, ModelError> {
        instance.check_universe(&selected)?;
        let total_cost = selected.iter().map(|v| instance.node(v).cost).sum();
        Ok(Placement { selected, total_cost })
    }

    pub fn empty(instance: &Instance) -> Self {
        Placement {
            selected: NodeSet::empty(instance.node_count()),
            total_cost: 0.0,
        }
    }
}

/// A full solution: placement, assignment, the fully processed flows, and the
/// objective (total rate of fully processed flows).
#[derive(Clone, Debug)]
pub struct Solution {
    pub placement: Placement,
    pub assignment: Assignment,
    pub fully_processed: BTreeSet<FlowId>,
    pub objective: f64,
}

impl Solution {
    pub fn empty(instance: &Instance) -> Self {
        Solution {
            placement: Placement::empty(instance),
            assignment: Assignment::empty(),
            fully_processed: BTreeSet::new(),
            objective: 0.0,
        }
    }
}

/// Format a quantity with up to nine fractional digits, no trailing zeros.
pub fn format_quantity(value: f64) -> String {
    let mut s = format!("{value:.9}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".to_string();
    }
    s
}
