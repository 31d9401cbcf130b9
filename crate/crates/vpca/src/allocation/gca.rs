//! Greedy capacity allocation: whole-flow first fit in nonincreasing rate
//! order, then split the leftovers.

use std::collections::{BTreeMap, BTreeSet};

use super::{build_solution, split_across, AllocationError};
use crate::model::{FlowId, Instance, NodeId, NodeSet, Solution};
use crate::EPS_CAP;

/// Structural facts recorded while rounding, used by the verification suite.
#[derive(Clone, Debug, Default)]
pub struct GcaStats {
    /// All selected nodes share one capacity and every covered flow
    /// traverses at least two selected nodes.
    pub assumption1: bool,
    /// Half-capacity checks performed after the first-fit phase.
    pub lemma7_checks: usize,
    /// Pairwise two-thirds checks performed at the end.
    pub lemma8_checks: usize,
}

pub fn gca(instance: &Instance, selected: &NodeSet) -> Result<Solution, AllocationError> {
    gca_with_stats(instance, selected).map(|(s, _)| s)
}

pub fn gca_with_stats(
    instance: &Instance,
    selected: &NodeSet,
) -> Result<(Solution, GcaStats), AllocationError> {
    instance.check_universe(selected)?;
    let mut stats = GcaStats::default();
    if selected.is_empty() {
        return Ok((Solution::empty(instance), stats));
    }

    let mut covered: Vec<FlowId> = instance.flows_covered(selected)?.into_iter().collect();
    covered.sort_by(|&a, &b| {
        instance
            .flow(b)
            .rate
            .partial_cmp(&instance.flow(a).rate)
            .unwrap()
            .then(a.cmp(&b))
    });

    let selected_path = |f: FlowId| -> Vec<NodeId> {
        let mut p: Vec<NodeId> = instance
            .flow(f)
            .path
            .iter()
            .copied()
            .filter(|&v| selected.contains(v))
            .collect();
        p.sort_unstable();
        p
    };

    let mut remaining: Vec<f64> = instance.nodes().iter().map(|n| n.capacity).collect();
    let mut entries: BTreeMap<(FlowId, NodeId), f64> = BTreeMap::new();
    let mut assigned: BTreeSet<FlowId> = BTreeSet::new();

    // Phase I: assign each flow wholly to the first selected path node that
    // still fits it.
    for &f in &covered {
        let rate = instance.flow(f).rate;
        for v in selected_path(f) {
            if remaining[v.index()] >= rate - EPS_CAP {
                entries.insert((f, v), rate);
                remaining[v.index()] -= rate;
                assigned.insert(f);
                break;
            }
        }
    }

    // Any node on the path of a flow the first-fit pass could not place must
    // already carry at least half its capacity.
    for &f in &covered {
        if assigned.contains(&f) {
            continue;
        }
        for v in selected_path(f) {
            let node = instance.node(v);
            let load = node.capacity - remaining[v.index()];
            stats.lemma7_checks += 1;
            if load < node.capacity / 2.0 - 1e-9 {
                return Err(AllocationError::InvariantBreach(format!(
                    "node {v:?} on unassigned flow {f:?} carries {load} < half of {}",
                    node.capacity
                )));
            }
        }
    }

    // Phase II: split still-unassigned flows across their selected path
    // nodes, in the same sorted order.
    for &f in &covered {
        if assigned.contains(&f) {
            continue;
        }
        if split_across(instance, selected, &mut remaining, &mut entries, f) {
            assigned.insert(f);
        }
    }

    // Under uniform selected capacities with every covered flow crossing at
    // least two selected nodes, any flow still unassigned pins every pair of
    // its candidate nodes at two thirds of their joint capacity.
    let caps: Vec<f64> = selected.iter().map(|v| instance.node(v).capacity).collect();
    let uniform = caps.windows(2).all(|w| (w[0] - w[1]).abs() <= EPS_CAP);
    let two_plus = covered.iter().all(|&f| selected_path(f).len() >= 2);
    stats.assumption1 = uniform && two_plus && !covered.is_empty();
    if stats.assumption1 {
        for &f in &covered {
            if assigned.contains(&f) {
                continue;
            }
            let path = selected_path(f);
            for (i, &u) in path.iter().enumerate() {
                for &v in &path[i + 1..] {
                    let cap = instance.node(u).capacity + instance.node(v).capacity;
                    let load = cap - remaining[u.index()] - remaining[v.index()];
                    stats.lemma8_checks += 1;
                    if load < 2.0 / 3.0 * cap - 1e-9 {
                        return Err(AllocationError::InvariantBreach(format!(
                            "pair ({u:?}, {v:?}) on unassigned flow {f:?} carries {load} < 2/3 of {cap}"
                        )));
                    }
                }
            }
        }
    }

    let solution = build_solution(instance, selected, entries, assigned)?;
    Ok((solution, stats))
}
