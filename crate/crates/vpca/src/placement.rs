//! Budget-constrained VNF-node selection maximizing the relaxed allocation
//! optimum: submodular greedy for uniform costs, enumeration-based greedy
//! for heterogeneous costs, and the traffic-volume baseline.

use rayon::prelude::*;

use crate::model::{Instance, ModelError, NodeId, NodeSet, Placement};
use crate::netflow::{NetflowError, R3Evaluator};
use crate::EPS_CAP;

#[derive(Debug, thiserror::Error)]
pub enum PlacementError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Netflow(#[from] NetflowError),
    #[error("node costs are not uniform: {0}")]
    NonUniformCosts(String),
    #[error("node cost must be positive for the cardinality reduction, got {0}")]
    NonPositiveCost(f64),
    #[error("instance has {nodes} nodes, above the enumeration limit {limit}")]
    TooLargeForEnumeration { nodes: usize, limit: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlacementMode {
    /// Submodular greedy; requires uniform node costs.
    Sg,
    /// Enumeration-based greedy for heterogeneous costs.
    Eg,
    /// Highest traversing traffic volume baseline.
    Vol,
    /// Sg when costs are uniform, Eg otherwise (ratio greedy past the
    /// enumeration size limit).
    Auto,
}

#[derive(Clone, Copy, Debug)]
pub enum TieBreak {
    LowestId,
    Seeded(u64),
}

#[derive(Clone, Copy, Debug)]
pub struct PlacementConfig {
    pub mode: PlacementMode,
    /// Largest node count for which Eg's cubic enumeration is attempted.
    pub eg_size_limit: usize,
    pub tie_break: TieBreak,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        PlacementConfig { mode: PlacementMode::Auto, eg_size_limit: 12, tie_break: TieBreak::LowestId }
    }
}

/// Which algorithm actually produced a placement.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlacementMethod {
    Sg,
    Eg,
    /// Greedy by marginal-gain-per-cost; used past the enumeration limit.
    /// Carries no approximation certificate.
    RatioGreedy,
    Vol,
}

/// Dispatch on the configured mode. Returns the placement and the method
/// that produced it.
pub fn place(
    instance: &Instance,
    oracle: &R3Evaluator,
    config: &PlacementConfig,
) -> Result<(Placement, PlacementMethod), PlacementError> {
    match config.mode {
        PlacementMode::Sg => Ok((sg_place(instance, oracle, config)?, PlacementMethod::Sg)),
        PlacementMode::Eg => Ok((eg_place(instance, oracle, config)?, PlacementMethod::Eg)),
        PlacementMode::Vol => Ok((vol_place(instance, config)?, PlacementMethod::Vol)),
        PlacementMode::Auto => {
            if uniform_cost(instance).is_some() {
                Ok((sg_place(instance, oracle, config)?, PlacementMethod::Sg))
            } else if instance.node_count() <= config.eg_size_limit {
                Ok((eg_place(instance, oracle, config)?, PlacementMethod::Eg))
            } else {
                Ok((ratio_greedy_place(instance, oracle, config)?, PlacementMethod::RatioGreedy))
            }
        }
    }
}

fn uniform_cost(instance: &Instance) -> Option<f64> {
    let first = instance.nodes().first()?.cost;
    instance
        .nodes()
        .iter()
        .all(|n| (n.cost - first).abs() <= EPS_CAP)
        .then_some(first)
}

/// Deterministic tie-break among candidates whose keys are within `EPS_CAP`
/// of the best: lowest id, or a seeded uniform pick.
fn break_tie(candidates: &[(NodeId, f64)], best: f64, tie: TieBreak, round: u64) -> NodeId {
    let tied: Vec<NodeId> = candidates
        .iter()
        .filter(|(_, value)| best - value <= EPS_CAP)
        .map(|&(id, _)| id)
        .collect();
    match tie {
        TieBreak::LowestId => tied[0],
        TieBreak::Seeded(seed) => {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ round.wrapping_mul(0x9e3779b97f4a7c15));
            tied[rng.gen_range(0..tied.len())]
        }
    }
}

/// Submodular greedy for uniform costs: the budget reduces to a cardinality
/// bound `k = floor(B / b)`; each round adds the node with the largest
/// marginal contribution to the relaxed optimum, stopping early once no
/// marginal exceeds the tolerance.
pub fn sg_place(
    instance: &Instance,
    oracle: &R3Evaluator,
    config: &PlacementConfig,
) -> Result<Placement, PlacementError> {
    let b = uniform_cost(instance).ok_or_else(|| {
        PlacementError::NonUniformCosts("submodular greedy requires equal node costs".into())
    })?;
    if instance.node_count() > 0 && b <= 0.0 {
        return Err(PlacementError::NonPositiveCost(b));
    }
    let k = if instance.node_count() == 0 {
        0
    } else {
        (((instance.budget() / b) + 1e-12).floor() as usize).min(instance.node_count())
    };

    let mut selected = NodeSet::empty(instance.node_count());
    let mut current = 0.0;
    for round in 0..k {
        let candidates = marginals(instance, oracle, &selected, current)?;
        let Some(best) = candidates.iter().map(|&(_, m)| m).reduce(f64::max) else {
            break;
        };
        if best <= EPS_CAP {
            break;
        }
        let pick = break_tie(&candidates, best, config.tie_break, round as u64);
        selected.insert(pick)?;
        current = oracle.r3(&selected)?;
    }
    Ok(Placement::new(instance, selected)?)
}

/// Marginal contribution of every unselected node, in id order.
fn marginals(
    instance: &Instance,
    oracle: &R3Evaluator,
    selected: &NodeSet,
    current: f64,
) -> Result<Vec<(NodeId, f64)>, PlacementError> {
    let candidates: Vec<NodeId> = instance
        .nodes()
        .iter()
        .map(|n| n.id)
        .filter(|&v| !selected.contains(v))
        .collect();
    let results: Vec<Result<(NodeId, f64), PlacementError>> = candidates
        .par_iter()
        .map(|&v| {
            let value = oracle.r3(&selected.with(v)?)?;
            Ok((v, value - current))
        })
        .collect();
    results.into_iter().collect()
}

/// Enumeration-based greedy for heterogeneous costs. Phase I takes the best
/// feasible subset of cardinality at most two; Phase II augments every
/// feasible 3-subset greedily by marginal gain per unit cost; the better of
/// the two wins.
pub fn eg_place(
    instance: &Instance,
    oracle: &R3Evaluator,
    config: &PlacementConfig,
) -> Result<Placement, PlacementError> {
    let v = instance.node_count();
    if v > config.eg_size_limit {
        return Err(PlacementError::TooLargeForEnumeration { nodes: v, limit: config.eg_size_limit });
    }
    let budget = instance.budget();
    let cost = |id: NodeId| instance.node(id).cost;

    fn consider(set: NodeSet, value: f64, best: &mut Option<(NodeSet, f64)>) {
        let better = match best {
            None => true,
            Some((_, incumbent)) => value > *incumbent + EPS_CAP,
        };
        if better {
            *best = Some((set, value));
        }
    }

    let mut phase1: Option<(NodeSet, f64)> = None;
    consider(NodeSet::empty(v), 0.0, &mut phase1);
    for i in 0..v {
        let a = NodeId(i as u32);
        if cost(a) > budget + EPS_CAP {
            continue;
        }
        let set = NodeSet::from_ids(v, [a])?;
        consider(set.clone(), oracle.r3(&set)?, &mut phase1);
        for j in (i + 1)..v {
            let b = NodeId(j as u32);
            if cost(a) + cost(b) > budget + EPS_CAP {
                continue;
            }
            let set = NodeSet::from_ids(v, [a, b])?;
            consider(set.clone(), oracle.r3(&set)?, &mut phase1);
        }
    }

    let mut phase2: Option<(NodeSet, f64)> = None;
    let mut triples: Vec<NodeSet> = Vec::new();
    for i in 0..v {
        for j in (i + 1)..v {
            for l in (j + 1)..v {
                let ids = [NodeId(i as u32), NodeId(j as u32), NodeId(l as u32)];
                let total: f64 = ids.iter().map(|&x| cost(x)).sum();
                if total <= budget + EPS_CAP {
                    triples.push(NodeSet::from_ids(v, ids)?);
                }
            }
        }
    }
    let augmented: Vec<Result<(NodeSet, f64), PlacementError>> = triples
        .into_par_iter()
        .map(|seed| augment_by_ratio(instance, oracle, seed))
        .collect();
    for result in augmented {
        let (set, value) = result?;
        consider(set, value, &mut phase2);
    }

    let best = match (phase1, phase2) {
        (Some((s1, v1)), Some((s2, v2))) => {
            if v2 > v1 + EPS_CAP {
                s2
            } else {
                s1
            }
        }
        (Some((s, _)), None) | (None, Some((s, _))) => s,
        (None, None) => NodeSet::empty(v),
    };
    Ok(Placement::new(instance, best)?)
}

/// Greedily extend `set` with affordable nodes by marginal gain per unit
/// cost, skipping zero marginals; lowest id wins equal ratios.
fn augment_by_ratio(
    instance: &Instance,
    oracle: &R3Evaluator,
    mut set: NodeSet,
) -> Result<(NodeSet, f64), PlacementError> {
    let budget = instance.budget();
    let mut spent: f64 = set.iter().map(|id| instance.node(id).cost).sum();
    let mut current = oracle.r3(&set)?;
    loop {
        let mut best: Option<(NodeId, f64)> = None;
        for node in instance.nodes() {
            if set.contains(node.id) || spent + node.cost > budget + EPS_CAP {
                continue;
            }
            let marginal = oracle.r3(&set.with(node.id)?)? - current;
            if marginal <= EPS_CAP {
                continue;
            }
            let ratio = if node.cost > 0.0 { marginal / node.cost } else { f64::INFINITY };
            if best.map_or(true, |(_, r)| ratio > r + EPS_CAP) {
                best = Some((node.id, ratio));
            }
        }
        let Some((pick, _)) = best else {
            return Ok((set, current));
        };
        spent += instance.node(pick).cost;
        set.insert(pick)?;
        current = oracle.r3(&set)?;
    }
}

/// Uncertified fallback for heterogeneous costs past the enumeration limit:
/// plain greedy by marginal gain per unit cost from the empty set.
pub fn ratio_greedy_place(
    instance: &Instance,
    oracle: &R3Evaluator,
    _config: &PlacementConfig,
) -> Result<Placement, PlacementError> {
    let (set, _) = augment_by_ratio(instance, oracle, NodeSet::empty(instance.node_count()))?;
    Ok(Placement::new(instance, set)?)
}

/// Baseline: nodes in descending order of traversing traffic volume, added
/// while the budget permits, skipping unaffordable nodes.
pub fn vol_place(instance: &Instance, _config: &PlacementConfig) -> Result<Placement, PlacementError> {
    let mut volumes: Vec<(NodeId, f64)> = instance
        .nodes()
        .iter()
        .map(|n| {
            let volume = instance
                .flows()
                .iter()
                .filter(|f| f.path.contains(&n.id))
                .map(|f| f.rate)
                .sum();
            (n.id, volume)
        })
        .collect();
    volumes.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));

    let mut selected = NodeSet::empty(instance.node_count());
    let mut spent = 0.0;
    for (id, _) in volumes {
        let cost = instance.node(id).cost;
        if spent + cost <= instance.budget() + EPS_CAP {
            selected.insert(id)?;
            spent += cost;
        }
    }
    Ok(Placement::new(instance, selected)?)
}
