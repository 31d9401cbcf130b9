//! Virtual-node expansion: replace each node by a set of per-server virtual
//! nodes so that placement also optimizes how much capacity to buy per site.

use super::{Flow, FlowId, Instance, ModelError, Node, NodeId};

/// Per-node server description for [`expand_servers`].
#[derive(Clone, Copy, Debug)]
pub struct ServerSpec {
    /// Number of servers the node can host (`A_v`), at least 1.
    pub count: usize,
    /// Cost of one server.
    pub cost: f64,
    /// Processing capacity of one server.
    pub capacity: f64,
}

/// Replace node `v` by `specs[v].count` virtual nodes named `name#k`, each
/// with the given per-server cost and capacity, and rewrite every flow path
/// in place so each node is replaced by its virtual nodes. The budget is
/// unchanged.
pub fn expand_servers(instance: &Instance, specs: &[ServerSpec]) -> Result<Instance, ModelError> {
    if specs.len() != instance.node_count() {
        return Err(ModelError::InvalidExpansion(format!(
            "expected {} server specs, got {}",
            instance.node_count(),
            specs.len()
        )));
    }
    let max_rate = instance.flows().iter().map(|f| f.rate).fold(0.0, f64::max);
    for (node, spec) in instance.nodes().iter().zip(specs) {
        if spec.count == 0 {
            return Err(ModelError::InvalidExpansion(format!(
                "node {} must host at least one server",
                node.name
            )));
        }
        if spec.capacity < max_rate {
            return Err(ModelError::InvalidExpansion(format!(
                "server capacity {} at node {} is below the largest flow rate {max_rate}",
                spec.capacity, node.name
            )));
        }
    }

    let mut virtual_ids: Vec<Vec<NodeId>> = Vec::with_capacity(instance.node_count());
    let mut nodes = Vec::new();
    for (node, spec) in instance.nodes().iter().zip(specs) {
        let mut ids = Vec::with_capacity(spec.count);
        for k in 0..spec.count {
            let id = NodeId(nodes.len() as u32);
            ids.push(id);
            nodes.push(Node {
                id,
                name: format!("{}#{k}", node.name),
                cost: spec.cost,
                capacity: spec.capacity,
            });
        }
        virtual_ids.push(ids);
    }

    let flows = instance
        .flows()
        .iter()
        .map(|flow| Flow {
            id: FlowId(flow.id.0),
            name: flow.name.clone(),
            rate: flow.rate,
            path: flow
                .path
                .iter()
                .flat_map(|v| virtual_ids[v.index()].iter().copied())
                .collect(),
        })
        .collect();

    Instance::new(nodes, flows, instance.budget())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testutil::fig1;

    #[test]
    fn ten_servers_per_node() {
        // Rates (2) are below the per-server capacity, so the expansion is legal.
        let inst = fig1(2.0);
        let specs = vec![ServerSpec { count: 10, cost: 25.0, capacity: 250.0 }; 3];
        let expanded = expand_servers(&inst, &specs).unwrap();
        assert_eq!(expanded.node_count(), 30);
        for flow in expanded.flows() {
            assert_eq!(flow.path.len(), 20);
        }
        assert_eq!(expanded.node(NodeId(10)).name, "v2#0");
    }

    #[test]
    fn identity_expansion_is_isomorphic() {
        let inst = fig1(2.0);
        let specs: Vec<ServerSpec> = inst
            .nodes()
            .iter()
            .map(|n| ServerSpec { count: 1, cost: n.cost, capacity: n.capacity })
            .collect();
        let expanded = expand_servers(&inst, &specs).unwrap();
        assert_eq!(expanded.node_count(), inst.node_count());
        assert_eq!(expanded.budget(), inst.budget());
        for (orig, new) in inst.nodes().iter().zip(expanded.nodes()) {
            assert_eq!(new.name, format!("{}#0", orig.name));
            assert_eq!(new.cost, orig.cost);
            assert_eq!(new.capacity, orig.capacity);
        }
        for (orig, new) in inst.flows().iter().zip(expanded.flows()) {
            assert_eq!(orig.path, new.path);
        }
    }

    #[test]
    fn cost_arithmetic_checks_out() {
        let nodes = vec![
            Node { id: NodeId(0), name: "a".into(), cost: 3.0, capacity: 5.0 },
            Node { id: NodeId(1), name: "b".into(), cost: 7.0, capacity: 5.0 },
        ];
        let inst = Instance::new(nodes, vec![], 10.0).unwrap();
        let specs = vec![
            ServerSpec { count: 2, cost: 3.0, capacity: 5.0 },
            ServerSpec { count: 3, cost: 7.0, capacity: 5.0 },
        ];
        let expanded = expand_servers(&inst, &specs).unwrap();
        assert_eq!(expanded.node_count(), 5);
        let total: f64 = expanded.nodes().iter().map(|n| n.cost).sum();
        assert_eq!(total, 2.0 * 3.0 + 3.0 * 7.0);
    }

    #[test]
    fn undersized_servers_rejected() {
        let inst = fig1(2.0);
        let specs = vec![ServerSpec { count: 2, cost: 1.0, capacity: 1.0 }; 3];
        let err = expand_servers(&inst, &specs).unwrap_err();
        assert!(matches!(err, ModelError::InvalidExpansion(_)));
    }
}
