//! Ground plane and groundedness queries for 3D lattices.

use std::ops::Range;

use super::graph::{build_connectivity_graph, ConnectivityGraph};
use super::{AgentId, CellPos, Configuration, Dim, EnvBounds};
use crate::error::{Error, Result};

/// In-bounds cells with `z = 0`, lexicographic.
pub fn ground_plane_cells(bounds: &EnvBounds) -> Result<Vec<CellPos>> {
    if bounds.dim() != Dim::Three {
        return Err(Error::domain("the ground plane only exists in 3D"));
    }
    let (min, max) = (bounds.min(), bounds.max());
    let mut out = Vec::new();
    for x in min.x()..=max.x() {
        for y in min.y()..=max.y() {
            out.push(CellPos::xyz(x, y, 0));
        }
    }
    Ok(out)
}

/// The configuration graph extended with the ground plane.
///
/// Agent nodes come first in agent order (the excluded agent, if any, has no
/// node), followed by the ground cells in lexicographic order.
#[derive(Clone, Debug)]
pub struct AugmentedGraph {
    pub graph: ConnectivityGraph,
    pub agent_nodes: Vec<Option<usize>>,
    pub ground_nodes: Range<usize>,
}

pub fn ground_augmented_graph(
    config: &Configuration,
    bounds: &EnvBounds,
    excluded: Option<AgentId>,
) -> Result<AugmentedGraph> {
    let ground = ground_plane_cells(bounds)?;
    let mut cells = Vec::with_capacity(config.len() + ground.len());
    let mut agent_nodes = Vec::with_capacity(config.len());
    for (id, p) in config.positions().iter().enumerate() {
        if Some(id) == excluded {
            agent_nodes.push(None);
        } else {
            agent_nodes.push(Some(cells.len()));
            cells.push(*p);
        }
    }
    let start = cells.len();
    cells.extend(ground);
    let graph = build_connectivity_graph(&cells)?;
    let end = cells.len();
    Ok(AugmentedGraph { graph, agent_nodes, ground_nodes: start..end })
}

/// Whether a path on the ground-augmented graph (without `excluded`) leads
/// from `agent` to some ground-plane cell.
pub fn is_grounded(
    agent: AgentId,
    config: &Configuration,
    bounds: &EnvBounds,
    excluded: Option<AgentId>,
) -> Result<bool> {
    config.position(agent)?;
    if excluded == Some(agent) {
        return Err(Error::domain(format!("agent {agent} cannot be both queried and excluded")));
    }
    let aug = ground_augmented_graph(config, bounds, excluded)?;
    let start = aug.agent_nodes[agent].expect("non-excluded agent has a node");
    let n = aug.graph.node_count();
    let mut seen = vec![false; n];
    seen[start] = true;
    let mut stack = vec![start];
    while let Some(v) = stack.pop() {
        if aug.ground_nodes.contains(&v) {
            return Ok(true);
        }
        for &w in aug.graph.neighbors(v) {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    Ok(false)
}

/// Every agent is grounded (no exclusion).
pub fn is_configuration_grounded(config: &Configuration, bounds: &EnvBounds) -> Result<bool> {
    let aug = ground_augmented_graph(config, bounds, None)?;
    let n = aug.graph.node_count();
    let mut seen = vec![false; n];
    let mut stack: Vec<usize> = aug.ground_nodes.clone().collect();
    for &g in &stack {
        seen[g] = true;
    }
    while let Some(v) = stack.pop() {
        for &w in aug.graph.neighbors(v) {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    Ok(aug.agent_nodes.iter().flatten().all(|&v| seen[v]))
}

/// Per-agent groundedness with `excluded` removed, computed by flooding the
/// occupied cells from the layer `z = 1` (every such cell touches the ground
/// plane). The excluded agent reports `false`.
///
/// Equivalent to calling [`is_grounded`] for every agent, in a single
/// `O(N)` pass and without materialising the ground plane.
pub fn grounded_agents(config: &Configuration, excluded: Option<AgentId>) -> Vec<bool> {
    let mut grounded = vec![false; config.len()];
    let mut stack = Vec::new();
    for (id, p) in config.positions().iter().enumerate() {
        if Some(id) != excluded && p.z() == 1 {
            grounded[id] = true;
            stack.push(id);
        }
    }
    while let Some(id) = stack.pop() {
        let p = config.positions()[id];
        for n in p.axis_neighbors(Dim::Three) {
            if let Some(j) = config.agent_at(&n) {
                if Some(j) != excluded && !grounded[j] {
                    grounded[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    grounded
}
