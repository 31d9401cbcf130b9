//! Turn an optimal net-flow into a basic optimal assignment: cancel cycles in
//! the fractional support until it is a forest, keeping the total value and
//! all node loads unchanged.

use std::collections::BTreeMap;

use super::{FlowNetwork, NetflowError};
use crate::model::{Assignment, FlowId, Instance, NodeId, NodeSet};

/// Arithmetic dust threshold for snapping an entry to its bounds.
const SNAP_EPS: f64 = 1e-12;

/// Extract the assignment carried by `edge_flow` and cancel fractional
/// cycles so the support of strictly fractional entries is acyclic. The
/// total assigned value is preserved (cycle canceling shifts equal amounts
/// of rate with alternating signs, so loads and flow totals are invariant).
pub fn extract_basic_assignment(
    network: &FlowNetwork,
    instance: &Instance,
    selected: &NodeSet,
    edge_flow: &[f64],
) -> Result<Assignment, NetflowError> {
    instance.check_universe(selected).map_err(NetflowError::Model)?;
    network.verify_flow(selected, edge_flow)?;

    let mut entries: BTreeMap<(FlowId, NodeId), f64> = BTreeMap::new();
    for ((f, v), rate) in network.assignment_entries(selected, edge_flow) {
        let rate = snap(rate, instance.flow(f).rate);
        if rate > 0.0 {
            entries.insert((f, v), rate);
        }
    }
    let value_before: f64 = entries.values().sum();

    // Vertices of the bipartite support: flows are 0..F, nodes F..F+V.
    let num_flows = instance.flow_count();
    let encode_node = |v: NodeId| num_flows + v.index();

    loop {
        let fractional: Vec<(FlowId, NodeId)> = entries
            .iter()
            .filter(|(&(f, _), &rate)| rate < instance.flow(f).rate)
            .map(|(&k, _)| k)
            .collect();

        let Some(cycle) = find_cycle(num_flows + instance.node_count(), &fractional, encode_node)
        else {
            break;
        };

        // Alternate +delta / -delta around the cycle; the largest feasible
        // delta pins at least one entry to 0 or to the full flow rate.
        let mut delta = f64::INFINITY;
        for (i, &(f, v)) in cycle.iter().enumerate() {
            let rate = entries[&(f, v)];
            let slack = if i % 2 == 0 { instance.flow(f).rate - rate } else { rate };
            delta = delta.min(slack);
        }
        debug_assert!(delta > 0.0, "cycle over strictly fractional entries has positive slack");
        for (i, &(f, v)) in cycle.iter().enumerate() {
            let rate = entries.get_mut(&(f, v)).unwrap();
            *rate += if i % 2 == 0 { delta } else { -delta };
            let snapped = snap(*rate, instance.flow(f).rate);
            if snapped == 0.0 {
                entries.remove(&(f, v));
            } else {
                *rate = snapped;
            }
        }
    }

    let value_after: f64 = entries.values().sum();
    if (value_after - value_before).abs() > 1e-9 {
        return Err(NetflowError::Internal(format!(
            "cycle canceling changed the assignment value: {value_before} -> {value_after}"
        )));
    }
    let assignment = Assignment::from_map(entries);
    assignment.validate(instance).map_err(NetflowError::Model)?;
    Ok(assignment)
}

fn snap(rate: f64, full: f64) -> f64 {
    if rate <= SNAP_EPS {
        0.0
    } else if rate >= full - SNAP_EPS {
        full
    } else {
        rate
    }
}

/// Find one cycle in the bipartite support, as the list of its edges in
/// order. Uses union-find to locate a closing edge, then BFS through the
/// accepted tree edges for the path between its endpoints.
fn find_cycle(
    vertex_count: usize,
    edges: &[(FlowId, NodeId)],
    encode_node: impl Fn(NodeId) -> usize,
) -> Option<Vec<(FlowId, NodeId)>> {
    let mut parent: Vec<usize> = (0..vertex_count).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }

    let mut tree: Vec<(FlowId, NodeId)> = Vec::new();
    let mut closing = None;
    for &(f, v) in edges {
        let a = find(&mut parent, f.index());
        let b = find(&mut parent, encode_node(v));
        if a == b {
            closing = Some((f, v));
            break;
        }
        parent[a] = b;
        tree.push((f, v));
    }
    let (cf, cv) = closing?;

    // BFS from the closing edge's flow endpoint to its node endpoint.
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); vertex_count]; // (neighbor, edge idx)
    for (i, &(f, v)) in tree.iter().enumerate() {
        adj[f.index()].push((encode_node(v), i));
        adj[encode_node(v)].push((f.index(), i));
    }
    let start = cf.index();
    let goal = encode_node(cv);
    let mut via: Vec<Option<(usize, usize)>> = vec![None; vertex_count]; // (prev vertex, edge idx)
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        if u == goal {
            break;
        }
        for &(w, e) in &adj[u] {
            if w != start && via[w].is_none() {
                via[w] = Some((u, e));
                queue.push_back(w);
            }
        }
    }

    // Walk back from the node endpoint; the path plus the closing edge is
    // the cycle. Edges are emitted so they alternate sign correctly: the
    // path starts at a flow vertex and has odd length.
    let mut path_edges = Vec::new();
    let mut at = goal;
    while at != start {
        let (prev, e) = via[at].expect("closing edge endpoints are connected in the tree");
        path_edges.push(tree[e]);
        at = prev;
    }
    path_edges.reverse();
    path_edges.push((cf, cv));
    Some(path_edges)
}
