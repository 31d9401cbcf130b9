//! Max-flow-based capacity allocation.
//!
//! Phase I rounds a basic fractional optimum: singleton nodes are resolved
//! by either dropping their lone fraction or committing the flow wholly
//! (evicting temporary assignments), and when no singleton exists the
//! fractions along two maximal paths out of a pivot node are perturbed with
//! alternating coefficients until one hits 0 or 1. Node loads and the total
//! assigned traffic are invariant under every perturbation; every step
//! removes at least one support edge. Phase II splits leftover flows across
//! remaining capacity.

use std::collections::{BTreeMap, BTreeSet};

use super::{build_solution, split_across, AllocationError};
use crate::model::{FlowId, Instance, NodeId, NodeSet, Solution};
use crate::netflow::{extract_basic_assignment, FlowNetwork};
use crate::EPS_CAP;

/// Hard bound on drift the conservation checks tolerate per perturbation.
const DRIFT_EPS: f64 = 1e-9;

/// Counters and worst-case drifts observed while rounding; the verification
/// suite asserts on these.
#[derive(Clone, Debug, Default)]
pub struct McaStats {
    /// Value of the basic fractional optimum that was rounded.
    pub relaxed_value: f64,
    pub step1_count: usize,
    pub step2_count: usize,
    /// Worst per-node load change across all perturbations (before snaps).
    pub max_load_drift: f64,
    /// Worst per-flow total change across all perturbations, counting the
    /// two path-end flows as one canceling pair.
    pub max_total_drift: f64,
    /// Worst total-value change across all perturbations.
    pub max_value_drift: f64,
    /// Worst Step-1 value loss beyond half the touched node's load.
    pub max_step1_loss_excess: f64,
}

pub fn mca(instance: &Instance, selected: &NodeSet) -> Result<Solution, AllocationError> {
    mca_with_stats(instance, selected).map(|(s, _)| s)
}

pub fn mca_with_stats(
    instance: &Instance,
    selected: &NodeSet,
) -> Result<(Solution, McaStats), AllocationError> {
    instance.check_universe(selected)?;
    let mut stats = McaStats::default();
    if selected.is_empty() {
        return Ok((Solution::empty(instance), stats));
    }

    let network = FlowNetwork::build(instance);
    let outcome = network.max_net_flow(selected)?;
    let basic = extract_basic_assignment(&network, instance, selected, &outcome.edge_flow)?;
    stats.relaxed_value = basic.total();

    let mut state = Rounding::new(instance, selected, &basic);

    // Phase I: clear all fractional support.
    loop {
        while let Some(v) = state.find_singleton() {
            state.step1(v, &mut stats)?;
        }
        if state.support_edges() == 0 {
            break;
        }
        state.step2(&mut stats)?;
    }

    // Phase II: split still-unassigned covered flows over what is left.
    let mut remaining: Vec<f64> = instance
        .nodes()
        .iter()
        .map(|n| n.capacity - state.full_load[n.id.index()])
        .collect();
    for (v, &r) in remaining.iter().enumerate() {
        if r < -DRIFT_EPS {
            return Err(AllocationError::InvariantBreach(format!(
                "negative remaining capacity {r} at node n{v}"
            )));
        }
    }
    let mut entries: BTreeMap<(FlowId, NodeId), f64> = BTreeMap::new();
    let mut fully: BTreeSet<FlowId> = BTreeSet::new();
    for (f, assigned) in state.assigned.iter().enumerate() {
        if let Some(v) = assigned {
            let f = FlowId(f as u32);
            entries.insert((f, *v), instance.flow(f).rate);
            fully.insert(f);
        }
    }
    for f in instance.flows_covered(selected)? {
        if !fully.contains(&f) && split_across(instance, selected, &mut remaining, &mut entries, f) {
            fully.insert(f);
        }
    }

    let solution = build_solution(instance, selected, entries, fully)?;
    if solution.objective < stats.relaxed_value / 2.0 - 1e-6 {
        return Err(AllocationError::InvariantBreach(format!(
            "rounded objective {} fell below half the relaxed optimum {}",
            solution.objective, stats.relaxed_value
        )));
    }
    Ok((solution, stats))
}

/// Alternating node/flow path in the support forest: `nodes[0]` is the
/// pivot; edge `2i` enters `flows[i]` from `nodes[i]`, edge `2i+1` leaves it
/// toward `nodes[i+1]`. Maximal paths always end at a flow because no
/// singleton node exists when one is built.
struct AltPath {
    nodes: Vec<NodeId>,
    flows: Vec<FlowId>,
}

struct Rounding<'a> {
    instance: &'a Instance,
    num_nodes: usize,
    y: Vec<f64>,
    flow_adj: Vec<BTreeSet<NodeId>>,
    node_adj: Vec<BTreeSet<FlowId>>,
    assigned: Vec<Option<NodeId>>,
    full_at: Vec<BTreeSet<FlowId>>,
    full_load: Vec<f64>,
    frac_load: Vec<f64>,
}

impl<'a> Rounding<'a> {
    fn new(instance: &'a Instance, _selected: &NodeSet, basic: &crate::model::Assignment) -> Self {
        let num_nodes = instance.node_count();
        let num_flows = instance.flow_count();
        let mut state = Rounding {
            instance,
            num_nodes,
            y: vec![0.0; num_flows * num_nodes],
            flow_adj: vec![BTreeSet::new(); num_flows],
            node_adj: vec![BTreeSet::new(); num_nodes],
            assigned: vec![None; num_flows],
            full_at: vec![BTreeSet::new(); num_nodes],
            full_load: vec![0.0; num_nodes],
            frac_load: vec![0.0; num_nodes],
        };
        let mut full = Vec::new();
        for (f, v, rate) in basic.entries() {
            let y = rate / instance.flow(f).rate;
            if y >= 1.0 - EPS_CAP {
                full.push((f, v));
            } else if y > EPS_CAP {
                state.add_edge(f, v, y);
            }
        }
        // Temporary whole-flow assignments; drops any dust fractions of the
        // same flow.
        for (f, v) in full {
            state.assign_full(f, v);
        }
        state
    }

    fn rate(&self, f: FlowId) -> f64 {
        self.instance.flow(f).rate
    }

    fn y_at(&self, f: FlowId, v: NodeId) -> f64 {
        self.y[f.index() * self.num_nodes + v.index()]
    }

    fn add_edge(&mut self, f: FlowId, v: NodeId, y: f64) {
        self.y[f.index() * self.num_nodes + v.index()] = y;
        self.flow_adj[f.index()].insert(v);
        self.node_adj[v.index()].insert(f);
        self.frac_load[v.index()] += self.rate(f) * y;
    }

    /// Removes a support edge and returns the rate it carried.
    fn remove_edge(&mut self, f: FlowId, v: NodeId) -> f64 {
        let idx = f.index() * self.num_nodes + v.index();
        let carried = self.rate(f) * self.y[idx];
        self.y[idx] = 0.0;
        self.flow_adj[f.index()].remove(&v);
        self.node_adj[v.index()].remove(&f);
        self.frac_load[v.index()] -= carried;
        carried
    }

    /// Commit flow `f` wholly to node `v`, canceling its other fractions.
    fn assign_full(&mut self, f: FlowId, v: NodeId) {
        for u in self.flow_adj[f.index()].clone() {
            self.remove_edge(f, u);
        }
        self.assigned[f.index()] = Some(v);
        self.full_at[v.index()].insert(f);
        self.full_load[v.index()] += self.rate(f);
    }

    fn frac_total(&self, f: FlowId) -> f64 {
        self.rate(f) * self.flow_adj[f.index()].iter().map(|&v| self.y_at(f, v)).sum::<f64>()
    }

    fn flow_value(&self, f: FlowId) -> f64 {
        if self.assigned[f.index()].is_some() {
            self.rate(f)
        } else {
            self.frac_total(f)
        }
    }

    fn node_load(&self, v: NodeId) -> f64 {
        self.full_load[v.index()] + self.frac_load[v.index()]
    }

    fn total_value(&self) -> f64 {
        (0..self.assigned.len()).map(|f| self.flow_value(FlowId(f as u32))).sum()
    }

    fn support_edges(&self) -> usize {
        self.flow_adj.iter().map(|s| s.len()).sum()
    }

    fn find_singleton(&self) -> Option<NodeId> {
        (0..self.num_nodes)
            .map(|v| NodeId(v as u32))
            .find(|v| self.node_adj[v.index()].len() == 1)
    }

    fn step1(&mut self, v: NodeId, stats: &mut McaStats) -> Result<(), AllocationError> {
        let f = *self.node_adj[v.index()].iter().next().expect("singleton has one flow");
        let carried = self.rate(f) * self.y_at(f, v);
        let prior = self.full_load[v.index()];
        let load = prior + carried;
        let loss = if prior >= carried {
            // Enough fully assigned traffic already sits here; drop the
            // fraction. The loss is at most half the node's load.
            self.remove_edge(f, v)
        } else {
            // Evict the temporary whole-flow assignments and commit f here;
            // feasible because no rate exceeds any capacity.
            let evicted: Vec<FlowId> = self.full_at[v.index()].iter().copied().collect();
            for g in evicted {
                self.assigned[g.index()] = None;
                self.full_at[v.index()].remove(&g);
            }
            self.full_load[v.index()] = 0.0;
            let fractions = self.frac_total(f);
            self.assign_full(f, v);
            prior + fractions - self.rate(f)
        };
        stats.step1_count += 1;
        let excess = loss - load / 2.0;
        stats.max_step1_loss_excess = stats.max_step1_loss_excess.max(excess);
        if excess > DRIFT_EPS {
            return Err(AllocationError::InvariantBreach(format!(
                "singleton rounding at {v:?} lost {loss}, above half its load {load}"
            )));
        }
        let cap = self.instance.node(v).capacity;
        if self.node_load(v) > cap + DRIFT_EPS {
            return Err(AllocationError::InvariantBreach(format!(
                "node {v:?} overloaded after singleton rounding: {} > {cap}",
                self.node_load(v)
            )));
        }
        Ok(())
    }

    /// Longest alternating continuation starting at `f`, having arrived via
    /// node `via`: flows include `f`, nodes are those after it. Ties go to
    /// the lowest-id branch.
    fn suffix_from_flow(&self, f: FlowId, via: NodeId) -> (Vec<FlowId>, Vec<NodeId>) {
        let mut best: Option<(Vec<FlowId>, Vec<NodeId>)> = None;
        for &u in &self.flow_adj[f.index()] {
            if u == via {
                continue;
            }
            if let Some((flows, nodes)) = self.suffix_from_node(u, f) {
                if best.as_ref().map_or(true, |(b, _)| flows.len() > b.len()) {
                    best = Some((flows, nodes));
                }
            }
        }
        match best {
            None => (vec![f], Vec::new()),
            Some((flows, nodes)) => {
                let mut all_flows = Vec::with_capacity(flows.len() + 1);
                all_flows.push(f);
                all_flows.extend(flows);
                (all_flows, nodes)
            }
        }
    }

    /// Longest continuation through node `u` (included), or None when the
    /// node has no onward flow edge.
    fn suffix_from_node(&self, u: NodeId, via: FlowId) -> Option<(Vec<FlowId>, Vec<NodeId>)> {
        let mut best: Option<(Vec<FlowId>, Vec<NodeId>)> = None;
        for &g in &self.node_adj[u.index()] {
            if g == via {
                continue;
            }
            let (flows, nodes) = self.suffix_from_flow(g, u);
            if best.as_ref().map_or(true, |(b, _)| flows.len() > b.len()) {
                best = Some((flows, nodes));
            }
        }
        best.map(|(flows, nodes)| {
            let mut all_nodes = Vec::with_capacity(nodes.len() + 1);
            all_nodes.push(u);
            all_nodes.extend(nodes);
            (flows, all_nodes)
        })
    }

    fn longest_path(&self, pivot: NodeId, first: FlowId) -> AltPath {
        let (flows, tail_nodes) = self.suffix_from_flow(first, pivot);
        let mut nodes = Vec::with_capacity(tail_nodes.len() + 1);
        nodes.push(pivot);
        nodes.extend(tail_nodes);
        debug_assert_eq!(nodes.len(), flows.len());
        AltPath { nodes, flows }
    }

    /// Perturbation coefficients in y-space for one path; `sign` is +1 for
    /// the first path and -1 for the second, `mu` the rate of the first
    /// path's last flow.
    fn coefficients(&self, path: &AltPath, sign: f64, mu: f64) -> Vec<(FlowId, NodeId, f64)> {
        let mut out = Vec::with_capacity(2 * path.flows.len());
        for i in 0..path.flows.len() {
            let f = path.flows[i];
            let scale = mu / self.rate(f);
            out.push((f, path.nodes[i], sign * scale));
            if i + 1 < path.nodes.len() {
                out.push((f, path.nodes[i + 1], -sign * scale));
            }
        }
        out
    }

    fn step2(&mut self, stats: &mut McaStats) -> Result<(), AllocationError> {
        let pivot = (0..self.num_nodes)
            .map(|v| NodeId(v as u32))
            .find(|v| self.node_adj[v.index()].len() >= 2)
            .ok_or_else(|| {
                AllocationError::InvariantBreach("no pivot node with degree >= 2".into())
            })?;
        let mut seeds = self.node_adj[pivot.index()].iter().copied();
        let first = seeds.next().expect("degree >= 2");
        let second = seeds.next().expect("degree >= 2");
        let p1 = self.longest_path(pivot, first);
        let p2 = self.longest_path(pivot, second);
        let mu = self.rate(*p1.flows.last().expect("path has a flow"));

        let mut deltas = self.coefficients(&p1, 1.0, mu);
        deltas.extend(self.coefficients(&p2, -1.0, mu));

        let mut eps = f64::INFINITY;
        for &(f, v, coeff) in &deltas {
            let y = self.y_at(f, v);
            let room = if coeff > 0.0 { (1.0 - y) / coeff } else { y / -coeff };
            eps = eps.min(room);
        }
        if !(eps.is_finite() && eps > 0.0) {
            return Err(AllocationError::InvariantBreach(format!(
                "degenerate perturbation step size {eps}"
            )));
        }

        let touched_nodes: BTreeSet<NodeId> =
            p1.nodes.iter().chain(p2.nodes.iter()).copied().collect();
        let touched_flows: BTreeSet<FlowId> =
            p1.flows.iter().chain(p2.flows.iter()).copied().collect();
        let loads_before: BTreeMap<NodeId, f64> =
            touched_nodes.iter().map(|&v| (v, self.node_load(v))).collect();
        let totals_before: BTreeMap<FlowId, f64> =
            touched_flows.iter().map(|&f| (f, self.flow_value(f))).collect();
        let value_before = self.total_value();
        let edges_before = self.support_edges();

        for &(f, v, coeff) in &deltas {
            let idx = f.index() * self.num_nodes + v.index();
            let delta = coeff * eps;
            self.y[idx] += delta;
            self.frac_load[v.index()] += self.rate(f) * delta;
        }

        // Conservation checks before boundary snapping: loads and interior
        // flow totals are invariant; the two path ends shift by amounts that
        // cancel; the total assigned traffic is unchanged.
        let end1 = *p1.flows.last().unwrap();
        let end2 = *p2.flows.last().unwrap();
        for (&v, &before) in &loads_before {
            let drift = (self.node_load(v) - before).abs();
            stats.max_load_drift = stats.max_load_drift.max(drift);
            if drift > DRIFT_EPS {
                return Err(AllocationError::InvariantBreach(format!(
                    "perturbation changed load of {v:?} by {drift}"
                )));
            }
        }
        let mut end_shift = 0.0;
        for (&f, &before) in &totals_before {
            let delta = self.flow_value(f) - before;
            if f == end1 || f == end2 {
                end_shift += delta;
            } else {
                stats.max_total_drift = stats.max_total_drift.max(delta.abs());
                if delta.abs() > DRIFT_EPS {
                    return Err(AllocationError::InvariantBreach(format!(
                        "perturbation changed interior flow {f:?} total by {delta}"
                    )));
                }
            }
        }
        stats.max_total_drift = stats.max_total_drift.max(end_shift.abs());
        if end_shift.abs() > DRIFT_EPS {
            return Err(AllocationError::InvariantBreach(format!(
                "path-end flow totals shifted by a nonzero net {end_shift}"
            )));
        }
        let value_drift = (self.total_value() - value_before).abs();
        stats.max_value_drift = stats.max_value_drift.max(value_drift);
        if value_drift > DRIFT_EPS {
            return Err(AllocationError::InvariantBreach(format!(
                "perturbation changed total assigned traffic by {value_drift}"
            )));
        }

        // Snap edges that reached a bound; at least one must have.
        let mut hit_zero = Vec::new();
        let mut hit_one = Vec::new();
        for &(f, v, _) in &deltas {
            let y = self.y_at(f, v);
            if y <= EPS_CAP {
                hit_zero.push((f, v));
            } else if y >= 1.0 - EPS_CAP {
                hit_one.push((f, v));
            }
        }
        for (f, v) in hit_zero {
            self.remove_edge(f, v);
        }
        for (f, v) in hit_one {
            if self.assigned[f.index()].is_none() {
                self.assign_full(f, v);
            }
        }

        if self.support_edges() >= edges_before {
            return Err(AllocationError::InvariantBreach(
                "perturbation removed no support edge".into(),
            ));
        }
        if !self.support_is_forest() {
            return Err(AllocationError::InvariantBreach(
                "support contains a cycle after perturbation".into(),
            ));
        }
        stats.step2_count += 1;
        Ok(())
    }

    /// Independent acyclicity check over the current support.
    fn support_is_forest(&self) -> bool {
        let num_flows = self.flow_adj.len();
        let total = num_flows + self.num_nodes;
        let mut parent: Vec<usize> = (0..total).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (f, partners) in self.flow_adj.iter().enumerate() {
            for &v in partners {
                let a = find(&mut parent, f);
                let b = find(&mut parent, num_flows + v.index());
                if a == b {
                    return false;
                }
                parent[a] = b;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testutil::{fig1, set};
    use crate::model::{Flow, Instance, Node};
    use crate::netflow::R3Evaluator;

    #[test]
    fn fig1_pair_recovers_all_traffic() {
        let inst = fig1(2.0);
        let sel = set(&inst, &[1, 2]);
        let (solution, stats) = mca_with_stats(&inst, &sel).unwrap();
        assert!((stats.relaxed_value - 6.0).abs() < 1e-9);
        assert_eq!(solution.fully_processed.len(), 3);
        assert!((solution.objective - 6.0).abs() < 1e-9);
        assert!(solution.objective >= stats.relaxed_value / 2.0 - 1e-6);
    }

    #[test]
    fn empty_selection_gives_empty_solution() {
        let inst = fig1(2.0);
        let solution = mca(&inst, &set(&inst, &[])).unwrap();
        assert_eq!(solution.objective, 0.0);
        assert!(solution.assignment.is_empty());
    }

    #[test]
    fn single_node_two_flows_keeps_one() {
        // One node of capacity 3 offered two rate-2 flows: the relaxed
        // optimum is 3, rounding keeps exactly one flow.
        let nodes = vec![Node { id: NodeId(0), name: "n0".into(), cost: 1.0, capacity: 3.0 }];
        let flows: Vec<Flow> = (0..2)
            .map(|i| Flow { id: FlowId(i), name: format!("f{i}"), rate: 2.0, path: vec![NodeId(0)] })
            .collect();
        let inst = Instance::new(nodes, flows, 1.0).unwrap();
        let sel = set(&inst, &[0]);
        let (solution, stats) = mca_with_stats(&inst, &sel).unwrap();
        assert!((stats.relaxed_value - 3.0).abs() < 1e-9);
        assert_eq!(solution.fully_processed.len(), 1);
        assert!((solution.objective - 2.0).abs() < 1e-9);
        assert!(solution.objective >= 0.5 * 3.0 - 1e-6);
    }

    #[test]
    fn rounded_value_beats_half_relaxed_on_random_instances() {
        use crate::model::{generate_random, GeneratorParams};
        let params = GeneratorParams {
            num_nodes: 5,
            num_flows: 10,
            max_path_len: 3,
            rate_range: (1.0, 6.0),
            capacity_range: (6.0, 14.0),
            cost_range: (1.0, 1.0),
            budget_fraction: 1.0,
        };
        for seed in 0..60 {
            let inst = generate_random(&params, seed).unwrap();
            let eval = R3Evaluator::new(&inst);
            let ids: Vec<u32> = (0..5).filter(|i| (seed >> i) & 1 == 0).collect();
            let sel = set(&inst, &ids);
            let (solution, stats) = mca_with_stats(&inst, &sel).unwrap();
            let r3 = eval.r3(&sel).unwrap();
            assert!((stats.relaxed_value - r3).abs() < 1e-6, "seed {seed}");
            assert!(
                solution.objective >= r3 / 2.0 - 1e-6,
                "seed {seed}: {} < {}/2",
                solution.objective,
                r3
            );
            // The output only contains fully processed flows at full rate.
            for &f in &solution.fully_processed {
                let total = solution.assignment.flow_total(f);
                assert!((total - inst.flow(f).rate).abs() <= EPS_CAP + 1e-9);
            }
            for (f, _, _) in solution.assignment.entries() {
                assert!(solution.fully_processed.contains(&f));
            }
        }
    }
}
