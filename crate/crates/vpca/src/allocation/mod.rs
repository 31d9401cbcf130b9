//! Capacity allocation: turn a placement into fully processed flows.
//!
//! Two rounding algorithms are provided. The max-flow-based one rounds a
//! basic fractional optimum and guarantees at least half the relaxed
//! optimum; the greedy one sorts flows by rate and guarantees a third (two
//! fifths when all selected nodes share one capacity and every covered flow
//! traverses at least two of them).

mod gca;
mod mca;

pub use gca::{gca, gca_with_stats, GcaStats};
pub use mca::{mca, mca_with_stats, McaStats};

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{
    Assignment, FlowId, Instance, ModelError, NodeId, NodeSet, Placement, Solution,
};
use crate::netflow::NetflowError;
use crate::EPS_CAP;

#[derive(Debug, thiserror::Error)]
pub enum AllocationError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Netflow(#[from] NetflowError),
    #[error("assignment constraint violation: {0}")]
    ConstraintViolation(String),
    #[error("internal invariant breach: {0}")]
    InvariantBreach(String),
}

/// Check an assignment against an instance and a selected set: model
/// invariants plus zero allocation outside the selected nodes.
fn check_assignment(
    instance: &Instance,
    selected: &NodeSet,
    assignment: &Assignment,
) -> Result<(), AllocationError> {
    instance.check_universe(selected)?;
    assignment
        .validate(instance)
        .map_err(|e| AllocationError::ConstraintViolation(e.to_string()))?;
    for (f, v, rate) in assignment.entries() {
        if rate > EPS_CAP && !selected.contains(v) {
            return Err(AllocationError::ConstraintViolation(format!(
                "flow {f:?} assigns {rate} to unselected node {v:?}"
            )));
        }
    }
    Ok(())
}

/// Total rate of fully processed flows and their ids: a flow counts when its
/// allocation on selected path nodes reaches its rate within tolerance.
pub fn evaluate_j1(
    instance: &Instance,
    selected: &NodeSet,
    assignment: &Assignment,
) -> Result<(f64, BTreeSet<FlowId>), AllocationError> {
    check_assignment(instance, selected, assignment)?;
    let mut fully = BTreeSet::new();
    let mut objective = 0.0;
    for flow in instance.flows() {
        let on_selected: f64 = flow
            .path
            .iter()
            .filter(|&&v| selected.contains(v))
            .map(|&v| assignment.get(flow.id, v))
            .sum();
        if on_selected >= flow.rate - EPS_CAP {
            fully.insert(flow.id);
            objective += flow.rate;
        }
    }
    Ok((objective, fully))
}

/// Relaxed objective: all assigned traffic counts, processed or not.
pub fn evaluate_r1(
    instance: &Instance,
    selected: &NodeSet,
    assignment: &Assignment,
) -> Result<f64, AllocationError> {
    check_assignment(instance, selected, assignment)?;
    Ok(assignment.total())
}

/// Assemble and sanity-check a solution produced by a rounding algorithm.
fn build_solution(
    instance: &Instance,
    selected: &NodeSet,
    entries: BTreeMap<(FlowId, NodeId), f64>,
    fully_processed: BTreeSet<FlowId>,
) -> Result<Solution, AllocationError> {
    let assignment = Assignment::from_map(entries);
    assignment
        .validate(instance)
        .map_err(|e| AllocationError::InvariantBreach(format!("rounded assignment invalid: {e}")))?;
    let objective = fully_processed.iter().map(|&f| instance.flow(f).rate).sum();
    Ok(Solution {
        placement: Placement::new(instance, selected.clone())?,
        assignment,
        fully_processed,
        objective,
    })
}

/// Split `flow` across the remaining capacities of its selected path nodes
/// in ascending id order, if they suffice. Returns true when assigned.
fn split_across(
    instance: &Instance,
    selected: &NodeSet,
    remaining: &mut [f64],
    entries: &mut BTreeMap<(FlowId, NodeId), f64>,
    flow_id: FlowId,
) -> bool {
    let flow = instance.flow(flow_id);
    let candidates: Vec<NodeId> = {
        let mut c: Vec<NodeId> = flow.path.iter().copied().filter(|&v| selected.contains(v)).collect();
        c.sort_unstable();
        c
    };
    let available: f64 = candidates.iter().map(|v| remaining[v.index()].max(0.0)).sum();
    if available < flow.rate - EPS_CAP {
        return false;
    }
    let mut need = flow.rate;
    for v in candidates {
        if need <= EPS_CAP {
            break;
        }
        let take = remaining[v.index()].max(0.0).min(need);
        if take > EPS_CAP {
            entries.insert((flow_id, v), take);
            remaining[v.index()] -= take;
            need -= take;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testutil::{fig1, set};

    #[test]
    fn j1_counts_only_fully_processed() {
        let inst = fig1(2.0);
        let sel = set(&inst, &[2]);
        // f2 fully on v3, f3 partially.
        let assignment = Assignment::new(
            &inst,
            [((FlowId(1), NodeId(2)), 2.0), ((FlowId(2), NodeId(2)), 1.0)],
        )
        .unwrap();
        let (objective, fully) = evaluate_j1(&inst, &sel, &assignment).unwrap();
        assert_eq!(objective, 2.0);
        assert_eq!(fully, [FlowId(1)].into_iter().collect());
        let r1 = evaluate_r1(&inst, &sel, &assignment).unwrap();
        assert_eq!(r1, 3.0);
        assert!(r1 >= objective);
    }

    #[test]
    fn empty_assignment_scores_zero() {
        let inst = fig1(2.0);
        let sel = set(&inst, &[2]);
        let (objective, fully) = evaluate_j1(&inst, &sel, &Assignment::empty()).unwrap();
        assert_eq!(objective, 0.0);
        assert!(fully.is_empty());
        assert_eq!(evaluate_r1(&inst, &sel, &Assignment::empty()).unwrap(), 0.0);
    }

    #[test]
    fn allocation_outside_selection_is_rejected() {
        let inst = fig1(2.0);
        let sel = set(&inst, &[2]);
        let assignment = Assignment::new(&inst, [((FlowId(0), NodeId(0)), 1.0)]).unwrap();
        let err = evaluate_j1(&inst, &sel, &assignment).unwrap_err();
        assert!(matches!(err, AllocationError::ConstraintViolation(_)));
    }
}
