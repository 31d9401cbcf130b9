//! Brute-force exact solvers at desk scale: ground truth for the
//! approximation-ratio suites and the CLI's optimal baseline.
//!
//! The allocation optimum is found by branch-and-bound over subsets of
//! covered flows, testing each candidate subset for simultaneous full
//! assignment with a max-flow feasibility check (infeasibility is monotone
//! under adding flows, which makes the pruning exact). The joint optimum
//! enumerates budget-feasible node sets in lexicographic order on top.

use std::collections::BTreeSet;

use crate::model::{
    Assignment, FlowId, Instance, ModelError, NodeId, NodeSet, Placement, Solution,
};
use crate::netflow::{FlowNetwork, NetflowError};
use crate::EPS_CAP;

#[derive(Debug, thiserror::Error)]
pub enum ExactError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Netflow(#[from] NetflowError),
    #[error("{what} count {actual} exceeds the exact-solver limit {limit}")]
    LimitExceeded { what: &'static str, limit: usize, actual: usize },
}

/// Size guards for the exponential oracles.
#[derive(Clone, Copy, Debug)]
pub struct ExactLimits {
    pub max_nodes: usize,
    pub max_covered_flows: usize,
}

impl Default for ExactLimits {
    fn default() -> Self {
        ExactLimits { max_nodes: 12, max_covered_flows: 20 }
    }
}

/// True iff every flow in `flow_subset` can be fully assigned to `selected`
/// simultaneously: the restricted maximum net-flow must carry the whole
/// subset demand.
pub fn feasible_full_set(
    instance: &Instance,
    selected: &NodeSet,
    flow_subset: &BTreeSet<FlowId>,
) -> Result<bool, ExactError> {
    let network = FlowNetwork::build(instance);
    let mut allowed = vec![false; instance.flow_count()];
    for &f in flow_subset {
        allowed[f.index()] = true;
    }
    let demand: f64 = flow_subset.iter().map(|&f| instance.flow(f).rate).sum();
    feasible(&network, instance, selected, &allowed, demand)
}

fn feasible(
    network: &FlowNetwork,
    _instance: &Instance,
    selected: &NodeSet,
    allowed: &[bool],
    demand: f64,
) -> Result<bool, ExactError> {
    if demand <= EPS_CAP {
        return Ok(true);
    }
    let value = network.max_net_flow_restricted(selected, allowed)?.value;
    Ok(value >= demand - 1e-9)
}

/// Optimal capacity allocation for a fixed node set: the heaviest subset of
/// covered flows that fits simultaneously, with a witnessing assignment.
pub fn exact_allocation(
    instance: &Instance,
    selected: &NodeSet,
    limits: &ExactLimits,
) -> Result<Solution, ExactError> {
    instance.check_universe(selected)?;
    let covered = instance.flows_covered(selected)?;
    if covered.len() > limits.max_covered_flows {
        return Err(ExactError::LimitExceeded {
            what: "covered flow",
            limit: limits.max_covered_flows,
            actual: covered.len(),
        });
    }
    let network = FlowNetwork::build(instance);
    let (value, chosen) = best_flow_subset(&network, instance, selected, &covered)?;
    solution_for_subset(&network, instance, selected, &chosen, value)
}

/// Branch and bound over flow subsets in nonincreasing-rate order. Returns
/// the best total rate and the flows achieving it (first-found on ties,
/// which the deterministic order makes stable).
fn best_flow_subset(
    network: &FlowNetwork,
    instance: &Instance,
    selected: &NodeSet,
    covered: &BTreeSet<FlowId>,
) -> Result<(f64, Vec<FlowId>), ExactError> {
    let mut order: Vec<FlowId> = covered.iter().copied().collect();
    order.sort_by(|&a, &b| {
        instance
            .flow(b)
            .rate
            .partial_cmp(&instance.flow(a).rate)
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut suffix = vec![0.0; order.len() + 1];
    for i in (0..order.len()).rev() {
        suffix[i] = suffix[i + 1] + instance.flow(order[i]).rate;
    }

    // Everything fits: done without searching.
    let mut allowed = vec![false; instance.flow_count()];
    for &f in &order {
        allowed[f.index()] = true;
    }
    if feasible(network, instance, selected, &allowed, suffix[0])? {
        return Ok((suffix[0], order));
    }
    allowed.iter_mut().for_each(|a| *a = false);

    struct Search<'a> {
        network: &'a FlowNetwork,
        instance: &'a Instance,
        selected: &'a NodeSet,
        order: &'a [FlowId],
        suffix: &'a [f64],
        allowed: Vec<bool>,
        chosen: Vec<FlowId>,
        best_value: f64,
        best_set: Vec<FlowId>,
    }

    impl Search<'_> {
        fn run(&mut self, depth: usize, current: f64) -> Result<(), ExactError> {
            if current > self.best_value + 1e-9 {
                self.best_value = current;
                self.best_set = self.chosen.clone();
            }
            if depth == self.order.len() || current + self.suffix[depth] <= self.best_value + 1e-9 {
                return Ok(());
            }
            let f = self.order[depth];
            let rate = self.instance.flow(f).rate;
            self.allowed[f.index()] = true;
            // Supersets of an infeasible set stay infeasible, so an include
            // branch that fails closes for good.
            if feasible(self.network, self.instance, self.selected, &self.allowed, current + rate)? {
                self.chosen.push(f);
                self.run(depth + 1, current + rate)?;
                self.chosen.pop();
            }
            self.allowed[f.index()] = false;
            self.run(depth + 1, current)
        }
    }

    let mut search = Search {
        network,
        instance,
        selected,
        order: &order,
        suffix: &suffix,
        allowed,
        chosen: Vec::new(),
        best_value: 0.0,
        best_set: Vec::new(),
    };
    search.run(0, 0.0)?;
    Ok((search.best_value, search.best_set))
}

fn solution_for_subset(
    network: &FlowNetwork,
    instance: &Instance,
    selected: &NodeSet,
    chosen: &[FlowId],
    value: f64,
) -> Result<Solution, ExactError> {
    let mut allowed = vec![false; instance.flow_count()];
    for &f in chosen {
        allowed[f.index()] = true;
    }
    let outcome = network.max_net_flow_restricted(selected, &allowed)?;
    let entries = network.assignment_entries(selected, &outcome.edge_flow);
    let assignment = Assignment::new(instance, entries)?;
    Ok(Solution {
        placement: Placement::new(instance, selected.clone())?,
        assignment,
        fully_processed: chosen.iter().copied().collect(),
        objective: value,
    })
}

/// Optimal joint placement and allocation by exhaustive enumeration of
/// budget-feasible node sets; the lexicographically smallest set wins ties.
pub fn exact_vpca(instance: &Instance, limits: &ExactLimits) -> Result<Solution, ExactError> {
    if instance.node_count() > limits.max_nodes {
        return Err(ExactError::LimitExceeded {
            what: "node",
            limit: limits.max_nodes,
            actual: instance.node_count(),
        });
    }
    let network = FlowNetwork::build(instance);
    let v = instance.node_count();

    struct Search<'a> {
        network: &'a FlowNetwork,
        instance: &'a Instance,
        limits: &'a ExactLimits,
        best_value: f64,
        best_set: Option<NodeSet>,
    }

    impl Search<'_> {
        fn visit(&mut self, set: &mut NodeSet, cost: f64, last: Option<usize>) -> Result<(), ExactError> {
            let covered = self.instance.flows_covered(set)?;
            if covered.len() > self.limits.max_covered_flows {
                return Err(ExactError::LimitExceeded {
                    what: "covered flow",
                    limit: self.limits.max_covered_flows,
                    actual: covered.len(),
                });
            }
            // Cheap upper bound; skipping the evaluation cannot hide a
            // strictly better set.
            let demand: f64 = covered.iter().map(|&f| self.instance.flow(f).rate).sum();
            let capacity: f64 = set.iter().map(|n| self.instance.node(n).capacity).sum();
            if demand.min(capacity) > self.best_value - 1e-9 {
                let (value, _) = best_flow_subset(self.network, self.instance, set, &covered)?;
                // Enumeration is lexicographic, so keeping the first
                // incumbent on ties realizes the lowest-lex rule.
                if self.best_set.is_none() || value > self.best_value + 1e-9 {
                    self.best_value = value;
                    self.best_set = Some(set.clone());
                }
            }
            let start = last.map_or(0, |l| l + 1);
            for next in start..self.instance.node_count() {
                let node = self.instance.node(NodeId(next as u32));
                if cost + node.cost <= self.instance.budget() + EPS_CAP {
                    set.insert_unchecked(NodeId(next as u32));
                    self.visit(set, cost + node.cost, Some(next))?;
                    set.remove(NodeId(next as u32));
                }
            }
            Ok(())
        }
    }

    let mut search = Search {
        network: &network,
        instance,
        limits,
        best_value: 0.0,
        best_set: None,
    };
    search.visit(&mut NodeSet::empty(v), 0.0, None)?;
    let best_set = search.best_set.unwrap_or_else(|| NodeSet::empty(v));
    exact_allocation(instance, &best_set, limits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testutil::{fig1, set};
    use crate::netflow::R3Evaluator;

    fn limits() -> ExactLimits {
        ExactLimits::default()
    }

    #[test]
    fn fig1_ground_truth_values() {
        let inst = fig1(2.0);
        let j3_v3 = exact_allocation(&inst, &set(&inst, &[2]), &limits()).unwrap();
        assert_eq!(j3_v3.objective, 2.0);
        let j3_v2 = exact_allocation(&inst, &set(&inst, &[1]), &limits()).unwrap();
        assert_eq!(j3_v2.objective, 2.0);
        let j3_pair = exact_allocation(&inst, &set(&inst, &[1, 2]), &limits()).unwrap();
        assert_eq!(j3_pair.objective, 6.0);
        let j3_empty = exact_allocation(&inst, &set(&inst, &[]), &limits()).unwrap();
        assert_eq!(j3_empty.objective, 0.0);
        // The marginal of adding v3 to {v2} beats its marginal over the
        // empty set: the unrelaxed objective is not submodular.
        assert!(j3_pair.objective - j3_v2.objective > j3_v3.objective - j3_empty.objective);
    }

    #[test]
    fn feasibility_matches_capacity_reasoning() {
        let inst = fig1(2.0);
        // Both covered flows together need 4 > 3.
        let both: BTreeSet<FlowId> = [FlowId(1), FlowId(2)].into_iter().collect();
        assert!(!feasible_full_set(&inst, &set(&inst, &[2]), &both).unwrap());
        assert!(feasible_full_set(&inst, &set(&inst, &[2]), &BTreeSet::new()).unwrap());
        let all: BTreeSet<FlowId> = (0..3).map(FlowId).collect();
        assert!(feasible_full_set(&inst, &set(&inst, &[1, 2]), &all).unwrap());
    }

    #[test]
    fn joint_optimum_on_fig1() {
        let inst = fig1(2.0);
        let best = exact_vpca(&inst, &limits()).unwrap();
        assert_eq!(best.objective, 6.0);
        assert_eq!(best.placement.selected.len(), 2);
        // Lexicographically smallest among the optimal pairs.
        assert_eq!(best.placement.selected, set(&inst, &[0, 1]));

        let zero = exact_vpca(&inst.with_budget(0.0).unwrap(), &limits()).unwrap();
        assert_eq!(zero.objective, 0.0);

        // Slack budget reduces to allocating over all nodes.
        let slack = exact_vpca(&inst.with_budget(100.0).unwrap(), &limits()).unwrap();
        let all = exact_allocation(&inst, &set(&inst, &[0, 1, 2]), &limits()).unwrap();
        assert_eq!(slack.objective, all.objective);
    }

    #[test]
    fn allocation_is_bounded_by_relaxed_optimum() {
        use crate::model::{generate_random, GeneratorParams};
        let params = GeneratorParams {
            num_nodes: 5,
            num_flows: 8,
            max_path_len: 3,
            rate_range: (1.0, 5.0),
            capacity_range: (5.0, 10.0),
            cost_range: (1.0, 2.0),
            budget_fraction: 0.6,
        };
        for seed in 0..40 {
            let inst = generate_random(&params, seed).unwrap();
            let eval = R3Evaluator::new(&inst);
            let ids: Vec<u32> = (0..5).filter(|i| (seed >> i) & 1 == 1).collect();
            let sel = set(&inst, &ids);
            let exact = exact_allocation(&inst, &sel, &limits()).unwrap();
            let relaxed = eval.r3(&sel).unwrap();
            assert!(
                exact.objective <= relaxed + 1e-9,
                "seed {seed}: exact {} above relaxed {relaxed}",
                exact.objective
            );
            // The witness assignment fully processes exactly the chosen flows.
            let (j1, fully) =
                crate::allocation::evaluate_j1(&inst, &sel, &exact.assignment).unwrap();
            assert!((j1 - exact.objective).abs() < 1e-9, "seed {seed}");
            assert_eq!(fully, exact.fully_processed, "seed {seed}");
        }
    }

    #[test]
    fn pruned_search_matches_unpruned_enumeration() {
        use crate::model::{generate_random, GeneratorParams};
        let params = GeneratorParams {
            num_nodes: 4,
            num_flows: 9,
            max_path_len: 3,
            rate_range: (1.0, 5.0),
            capacity_range: (5.0, 9.0),
            cost_range: (1.0, 1.0),
            budget_fraction: 0.75,
        };
        for seed in 0..25 {
            let inst = generate_random(&params, seed).unwrap();
            let sel = set(&inst, &[0, 2]);
            let pruned = exact_allocation(&inst, &sel, &limits()).unwrap();
            // Unpruned reference: test every subset of covered flows.
            let covered: Vec<FlowId> = inst.flows_covered(&sel).unwrap().into_iter().collect();
            let mut best = 0.0f64;
            for mask in 0u32..(1 << covered.len()) {
                let subset: BTreeSet<FlowId> = covered
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask >> i & 1 == 1)
                    .map(|(_, &f)| f)
                    .collect();
                if feasible_full_set(&inst, &sel, &subset).unwrap() {
                    let value: f64 = subset.iter().map(|&f| inst.flow(f).rate).sum();
                    best = best.max(value);
                }
            }
            assert!(
                (pruned.objective - best).abs() < 1e-9,
                "seed {seed}: pruned {} vs enumerated {best}",
                pruned.objective
            );
        }
    }

    #[test]
    fn monotone_in_budget_and_capacity() {
        use crate::model::{generate_random, GeneratorParams};
        let params = GeneratorParams {
            num_nodes: 4,
            num_flows: 6,
            max_path_len: 3,
            rate_range: (1.0, 4.0),
            capacity_range: (4.0, 8.0),
            cost_range: (1.0, 3.0),
            budget_fraction: 0.4,
        };
        for seed in 0..15 {
            let inst = generate_random(&params, seed).unwrap();
            let base = exact_vpca(&inst, &limits()).unwrap().objective;
            let richer = exact_vpca(&inst.with_budget(inst.budget() + 2.0).unwrap(), &limits())
                .unwrap()
                .objective;
            assert!(richer >= base - 1e-9, "seed {seed}: budget monotonicity");
            let roomier = exact_vpca(&inst.with_uniform_capacity(9.0).unwrap(), &limits())
                .unwrap()
                .objective;
            assert!(roomier >= base - 1e-9, "seed {seed}: capacity monotonicity");
        }
    }

    #[test]
    fn limits_are_enforced() {
        let inst = fig1(2.0);
        let tight = ExactLimits { max_nodes: 2, max_covered_flows: 20 };
        assert!(matches!(exact_vpca(&inst, &tight), Err(ExactError::LimitExceeded { .. })));
        let tight = ExactLimits { max_nodes: 12, max_covered_flows: 1 };
        assert!(matches!(
            exact_allocation(&inst, &set(&inst, &[0, 1]), &tight),
            Err(ExactError::LimitExceeded { .. })
        ));
    }
}
