//! Seeded random instance generator for benchmark sweeps.

use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Flow, FlowId, Instance, ModelError, Node, NodeId};

/// Parameters for [`generate_random`]. Ranges are inclusive.
#[derive(Clone, Debug)]
pub struct GeneratorParams {
    pub num_nodes: usize,
    pub num_flows: usize,
    pub max_path_len: usize,
    pub rate_range: (f64, f64),
    pub capacity_range: (f64, f64),
    pub cost_range: (f64, f64),
    /// Budget as a fraction of the total node cost, rounded down.
    pub budget_fraction: f64,
}

/// Quantities are sampled on a 1e-6 grid so serialized instances re-parse to
/// equal values.
const GRID: f64 = 1e6;

fn grid_range(range: (f64, f64), what: &str) -> Result<(i64, i64), ModelError> {
    let (lo, hi) = range;
    if !lo.is_finite() || !hi.is_finite() || lo > hi {
        return Err(ModelError::InvalidParams(format!("{what} range [{lo}, {hi}] is empty")));
    }
    let lo_g = (lo * GRID).ceil() as i64;
    let hi_g = (hi * GRID).floor() as i64;
    if lo_g > hi_g {
        return Err(ModelError::InvalidParams(format!(
            "{what} range [{lo}, {hi}] contains no representable value"
        )));
    }
    Ok((lo_g, hi_g))
}

fn sample_grid(rng: &mut ChaCha8Rng, (lo, hi): (i64, i64)) -> f64 {
    rng.gen_range(lo..=hi) as f64 / GRID
}

/// Build a random valid instance. Deterministic for a fixed seed: the same
/// parameters and seed always produce a byte-identical serialization.
pub fn generate_random(params: &GeneratorParams, seed: u64) -> Result<Instance, ModelError> {
    if params.num_nodes == 0 {
        return Err(ModelError::InvalidParams("at least one node is required".into()));
    }
    if params.num_flows > 0 && params.max_path_len == 0 {
        return Err(ModelError::InvalidParams("max_path_len must be at least 1".into()));
    }
    let rate = grid_range(params.rate_range, "rate")?;
    let capacity = grid_range(params.capacity_range, "capacity")?;
    let cost = grid_range(params.cost_range, "cost")?;
    if rate.0 <= 0 {
        return Err(ModelError::InvalidParams("rates must be positive".into()));
    }
    if capacity.0 < rate.1 {
        return Err(ModelError::InvalidParams(
            "minimum capacity must be at least the maximum rate".into(),
        ));
    }
    if !(params.budget_fraction.is_finite() && params.budget_fraction >= 0.0) {
        return Err(ModelError::InvalidParams(format!(
            "budget_fraction must be non-negative, got {}",
            params.budget_fraction
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes: Vec<Node> = (0..params.num_nodes)
        .map(|i| Node {
            id: NodeId(i as u32),
            name: format!("n{i}"),
            cost: sample_grid(&mut rng, cost),
            capacity: sample_grid(&mut rng, capacity),
        })
        .collect();

    let max_len = params.max_path_len.min(params.num_nodes);
    let flows: Vec<Flow> = (0..params.num_flows)
        .map(|i| {
            let len = rng.gen_range(1..=max_len);
            let path = sample(&mut rng, params.num_nodes, len)
                .into_iter()
                .map(|j| NodeId(j as u32))
                .collect();
            Flow {
                id: FlowId(i as u32),
                name: format!("f{i}"),
                rate: sample_grid(&mut rng, rate),
                path,
            }
        })
        .collect();

    let total_cost: f64 = nodes.iter().map(|n| n.cost).sum();
    let budget = (params.budget_fraction * total_cost).floor();
    Instance::new(nodes, flows, budget)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(nodes: usize, flows: usize) -> GeneratorParams {
        GeneratorParams {
            num_nodes: nodes,
            num_flows: flows,
            max_path_len: 5,
            rate_range: (1.0, 100.0),
            capacity_range: (100.0, 1000.0),
            cost_range: (100.0, 100.0),
            budget_fraction: 0.5,
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let p = GeneratorParams {
            num_nodes: 3,
            num_flows: 3,
            max_path_len: 2,
            rate_range: (2.0, 2.0),
            capacity_range: (3.0, 3.0),
            cost_range: (1.0, 1.0),
            budget_fraction: 1.0,
        };
        let a = generate_random(&p, 7).unwrap();
        let b = generate_random(&p, 7).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        assert_eq!(a.node_count(), 3);
        assert_eq!(a.budget(), 3.0);
        let c = generate_random(&p, 8).unwrap();
        assert_ne!(a.to_text(), c.to_text());
    }

    #[test]
    fn empty_instance_rejected() {
        let err = generate_random(&params(0, 0), 1).unwrap_err();
        assert!(matches!(err, ModelError::InvalidParams(_)));
    }

    #[test]
    fn infeasible_ranges_rejected() {
        let mut p = params(3, 3);
        p.capacity_range = (50.0, 60.0); // below the max rate of 100
        assert!(generate_random(&p, 1).is_err());
        let mut p = params(3, 3);
        p.rate_range = (10.0, 5.0);
        assert!(generate_random(&p, 1).is_err());
    }

    #[test]
    fn sweep_scale_instance_validates() {
        let inst = generate_random(&params(12, 144), 1).unwrap();
        assert_eq!(inst.node_count(), 12);
        assert_eq!(inst.flow_count(), 144);
        // Re-parse of the serialization reproduces the instance exactly.
        let again = Instance::parse(&inst.to_text()).unwrap();
        assert_eq!(inst, again);
    }

    #[test]
    fn generated_instances_validate_across_seeds() {
        let p = params(8, 20);
        for seed in 0..1000 {
            let inst = generate_random(&p, seed).unwrap();
            assert_eq!(inst.node_count(), 8);
            let max_rate = inst.flows().iter().map(|f| f.rate).fold(0.0, f64::max);
            let min_cap = inst.nodes().iter().map(|n| n.capacity).fold(f64::MAX, f64::min);
            assert!(max_rate <= min_cap);
        }
    }
}
