//! Joint VNF-node placement and capacity allocation (VPCA).
//!
//! Given a network with per-node deployment costs and processing capacities,
//! a set of flows with fixed paths, and a deployment budget, select a set of
//! VNF-nodes and allocate their capacities to maximize the total rate of
//! fully processed flows. The library implements the relax-then-round
//! framework: the relaxed placement objective is evaluated by a maximum
//! net-flow computation ([`netflow`]), maximized greedily under the budget
//! ([`placement`]), and the fractional optimum is rounded into fully
//! processed flows ([`allocation`]). Brute-force oracles at desk scale live
//! in [`exact`].

pub mod allocation;
pub mod exact;
pub mod model;
pub mod netflow;
pub mod placement;

/// Absolute tolerance for all feasibility comparisons, in rate units.
pub const EPS_CAP: f64 = 1e-9;
