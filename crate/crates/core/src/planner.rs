//! Deterministic reconfiguration planners.
//!
//! * 2D: greedy agent/target pairing with single-agent A* legs.
//! * 3D to layer: repeatedly move a non-articulation cube from above the
//!   bottom layer down to `z = 1`.
//! * 3D to 3D: flatten the initial configuration, rearrange the flat layer,
//!   then play the flattening of the target backwards.
//!
//! Every step of a returned plan is a move in the mover's restricted action
//! set at that point, so a plan doubles as a positive-probability path of the
//! learning chain.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};

use serde_json::{json, Value};
use thiserror::Error;

use crate::game::{restricted_action_set, TargetConfiguration};
use crate::lattice::{
    articulation_points, grounded_agents, is_configuration_grounded, AgentId, CellPos,
    Configuration, ConnectivityGraph, Dim, EnvBounds, Motion,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("no path for agent {agent} to {cell}")]
    NoPath { agent: AgentId, cell: CellPos },
    #[error("invariant violated: no mobile agent above the bottom layer in {dump}")]
    NoMobileAgent { dump: String },
    #[error("the bottom layer holds {capacity} cells but there are {agents} agents")]
    LayerCapacity { capacity: usize, agents: usize },
    #[error("{phase} phase failed: {source}")]
    Phase {
        phase: &'static str,
        #[source]
        source: Box<PlanError>,
    },
    #[error("invalid planner input: {0}")]
    Invalid(String),
    #[error("plan step {step} is not legal: {reason}")]
    Replay { step: usize, reason: String },
}

impl PlanError {
    fn in_phase(self, phase: &'static str) -> PlanError {
        PlanError::Phase { phase, source: Box::new(self) }
    }
}

impl From<crate::error::Error> for PlanError {
    fn from(e: crate::error::Error) -> Self {
        PlanError::Invalid(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlanStep {
    pub agent: AgentId,
    pub from: CellPos,
    pub to: CellPos,
}

/// An ordered list of single-agent primitive motions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MotionPlan {
    pub dim: Dim,
    pub steps: Vec<PlanStep>,
}

impl MotionPlan {
    pub fn new(dim: Dim) -> Self {
        MotionPlan { dim, steps: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `[{"agent": 0, "from": [..], "to": [..]}, ...]`
    pub fn to_json(&self) -> Value {
        Value::Array(
            self.steps
                .iter()
                .map(|s| json!({"agent": s.agent, "from": s.from.coords(self.dim), "to": s.to.coords(self.dim)}))
                .collect(),
        )
    }

    /// Applies the plan, checking that every step is a legal restricted
    /// action and, in 3D, that every intermediate configuration is grounded.
    pub fn replay(&self, initial: &Configuration, bounds: &EnvBounds) -> Result<Configuration, PlanError> {
        let mut state = initial.clone();
        for (i, s) in self.steps.iter().enumerate() {
            let fail = |reason: String| PlanError::Replay { step: i, reason };
            if state.agent_at(&s.from) != Some(s.agent) {
                return Err(fail(format!("agent {} is not at {}", s.agent, s.from)));
            }
            let legal = restricted_action_set(s.agent, &state, bounds)?;
            if !legal.contains_move(&s.to) {
                return Err(fail(format!("{} -> {} is not in the action set", s.from, s.to)));
            }
            state.move_agent(s.agent, s.to)?;
            if state.dim() == Dim::Three && !is_configuration_grounded(&state, bounds)? {
                return Err(fail("configuration became ungrounded".into()));
            }
        }
        Ok(state)
    }

    /// Replays the plan and checks that it ends on the target cells.
    pub fn validate(
        &self,
        initial: &Configuration,
        target: &TargetConfiguration,
        bounds: &EnvBounds,
    ) -> Result<Configuration, PlanError> {
        let end = self.replay(initial, bounds)?;
        let mut want = target.cells().to_vec();
        want.sort();
        if end.sorted_cells() != want {
            return Err(PlanError::Replay { step: self.len(), reason: "plan does not end on the target".into() });
        }
        Ok(end)
    }

    /// Appends a move of whichever agent sits on `from`, applying it.
    fn push_cell_move(&mut self, state: &mut Configuration, from: CellPos, to: CellPos) -> Result<(), PlanError> {
        let agent = state
            .agent_at(&from)
            .ok_or_else(|| PlanError::Invalid(format!("no agent at {from}")))?;
        state.move_agent(agent, to)?;
        self.steps.push(PlanStep { agent, from, to });
        Ok(())
    }
}

/// Unit-cost A* over lattice cells. Ties are broken by the smallest cell.
fn astar<N, G, H>(start: CellPos, mut neighbors: N, is_goal: G, heuristic: H) -> Option<Vec<CellPos>>
where
    N: FnMut(CellPos) -> Vec<CellPos>,
    G: Fn(&CellPos) -> bool,
    H: Fn(&CellPos) -> u32,
{
    let mut open = BinaryHeap::new();
    let mut best: HashMap<CellPos, u32> = HashMap::from([(start, 0)]);
    let mut parent: HashMap<CellPos, CellPos> = HashMap::new();
    let mut closed: HashSet<CellPos> = HashSet::new();
    open.push(Reverse((heuristic(&start), 0u32, start)));
    while let Some(Reverse((_, g, cell))) = open.pop() {
        if !closed.insert(cell) {
            continue;
        }
        if is_goal(&cell) {
            let mut path = vec![cell];
            let mut cur = cell;
            while let Some(&p) = parent.get(&cur) {
                path.push(p);
                cur = p;
            }
            path.reverse();
            return Some(path);
        }
        for next in neighbors(cell) {
            let ng = g + 1;
            if closed.contains(&next) || best.get(&next).is_some_and(|&b| b <= ng) {
                continue;
            }
            best.insert(next, ng);
            parent.insert(next, cell);
            open.push(Reverse((ng + heuristic(&next), ng, next)));
        }
    }
    None
}

/// Fewest primitive motions between two cells in free space: a corner motion
/// covers two coordinates at once.
fn motion_distance(a: &CellPos, b: &CellPos) -> u32 {
    a.linf(b).max(a.l1(b).div_ceil(2))
}

/// Shortest single-agent path under the sliding/corner motion model that
/// avoids `blocked`. The path includes both endpoints.
pub fn astar_path(
    start: CellPos,
    goal: CellPos,
    blocked: &HashSet<CellPos>,
    bounds: &EnvBounds,
) -> Option<Vec<CellPos>> {
    if !bounds.is_agent_cell(&start) || !bounds.is_agent_cell(&goal) || blocked.contains(&goal) {
        return None;
    }
    let dim = bounds.dim();
    astar(
        start,
        |c| {
            Motion::all(dim)
                .iter()
                .map(|m| c.offset(m.delta))
                .filter(|n| bounds.is_agent_cell(n) && !blocked.contains(n))
                .collect()
        },
        |c| *c == goal,
        |c| motion_distance(c, &goal),
    )
}

fn occupied_except(state: &Configuration, agent: AgentId) -> HashSet<CellPos> {
    state
        .positions()
        .iter()
        .enumerate()
        .filter(|(id, _)| *id != agent)
        .map(|(_, p)| *p)
        .collect()
}

/// Moves the occupant of `path[0]` to the free cell at the end of `path`,
/// shifting any agents sitting on the path one slot forward. Afterwards the
/// occupied set differs only by `path[0]` -> `path[last]`.
fn push_along(plan: &mut MotionPlan, state: &mut Configuration, path: &[CellPos]) -> Result<(), PlanError> {
    let occupied: Vec<usize> = (0..path.len() - 1).filter(|&i| state.is_occupied(&path[i])).collect();
    let mut stop = path.len() - 1;
    for &start in occupied.iter().rev() {
        for i in start..stop {
            plan.push_cell_move(state, path[i], path[i + 1])?;
        }
        stop = start;
    }
    Ok(())
}

/// Greedy 2D reconfiguration: repeatedly take the closest (off-target agent,
/// unfilled target cell) pair and route the agent with A* around the others.
///
/// If every pair is walled in by other agents, the closest pair is served by
/// pushing a chain of agents through the wall instead.
pub fn plan_2d(
    initial: &Configuration,
    target: &TargetConfiguration,
    bounds: &EnvBounds,
) -> Result<MotionPlan, PlanError> {
    if initial.dim() != Dim::Two || bounds.dim() != Dim::Two {
        return Err(PlanError::Invalid("plan_2d needs a 2D configuration".into()));
    }
    target.check_against(bounds, initial.len())?;
    initial.check_within(bounds)?;
    let mut state = initial.clone();
    let mut plan = MotionPlan::new(Dim::Two);
    loop {
        let unfilled: Vec<CellPos> = target.cells().iter().filter(|c| !state.is_occupied(c)).copied().collect();
        if unfilled.is_empty() {
            return Ok(plan);
        }
        let mut pairs: Vec<(u32, AgentId, CellPos)> = Vec::new();
        for (agent, pos) in state.positions().iter().enumerate() {
            if target.contains(pos) {
                continue;
            }
            pairs.extend(unfilled.iter().map(|c| (pos.l1(c), agent, *c)));
        }
        pairs.sort();

        let routed = pairs.iter().find_map(|&(_, agent, cell)| {
            let from = state.positions()[agent];
            astar_path(from, cell, &occupied_except(&state, agent), bounds)
        });
        let path = match routed {
            Some(path) => path,
            None => {
                let &(_, agent, cell) = pairs.first().expect("an unfilled cell implies an off-target agent");
                let from = state.positions()[agent];
                astar_path(from, cell, &HashSet::new(), bounds).ok_or(PlanError::NoPath { agent, cell })?
            }
        };
        push_along(&mut plan, &mut state, &path)?;
    }
}

/// The flattening graph: agents above the bottom layer plus one node standing
/// for the whole bottom layer. Returns the graph and the agent of each upper
/// node; the bottom-layer node is the last one.
fn collapsed_graph(config: &Configuration) -> (ConnectivityGraph, Vec<AgentId>) {
    let upper: Vec<AgentId> = (0..config.len()).filter(|&id| config.positions()[id].z() > 1).collect();
    let node_of: HashMap<AgentId, usize> = upper.iter().enumerate().map(|(n, &id)| (id, n)).collect();
    let ground = upper.len();
    let mut edges = Vec::new();
    for (n, &id) in upper.iter().enumerate() {
        for nb in config.positions()[id].axis_neighbors(Dim::Three) {
            match config.agent_at(&nb) {
                Some(j) if config.positions()[j].z() == 1 => edges.push((n, ground)),
                Some(j) => edges.push((n, node_of[&j])),
                None => {}
            }
        }
    }
    let graph = ConnectivityGraph::from_edges(upper.len() + 1, &edges).expect("edges reference known nodes");
    (graph, upper)
}

fn mobile_upper_agents(config: &Configuration, bounds: &EnvBounds) -> Result<Vec<AgentId>, PlanError> {
    if config.dim() != Dim::Three {
        return Err(PlanError::Invalid("flattening needs a 3D configuration".into()));
    }
    let (graph, upper) = collapsed_graph(config);
    if upper.is_empty() {
        return Err(PlanError::Invalid("no agent above the bottom layer".into()));
    }
    let cut: BTreeSet<usize> = articulation_points(&graph);
    let mut out = Vec::new();
    for (node, &id) in upper.iter().enumerate() {
        if !cut.contains(&node) && restricted_action_set(id, config, bounds)?.is_mobile() {
            out.push(id);
        }
    }
    Ok(out)
}

fn dump(config: &Configuration) -> String {
    let cells: Vec<String> = config.positions().iter().map(|p| p.to_string()).collect();
    format!("[{}]", cells.join(", "))
}

/// Smallest-id agent above `z = 1` that is not an articulation point of the
/// flattening graph and can move.
pub fn find_mobile_agent(config: &Configuration, bounds: &EnvBounds) -> Result<AgentId, PlanError> {
    mobile_upper_agents(config, bounds)?
        .first()
        .copied()
        .ok_or_else(|| PlanError::NoMobileAgent { dump: dump(config) })
}

/// Route for one agent to a free bottom-layer cell, other agents fixed.
fn route_down(config: &Configuration, agent: AgentId, bounds: &EnvBounds) -> Option<Vec<CellPos>> {
    let grounded = grounded_agents(config, Some(agent));
    let supported = |c: &CellPos| {
        c.z() == 1
            || c.axis_neighbors(Dim::Three)
                .filter_map(|n| config.agent_at(&n))
                .any(|j| j != agent && grounded[j])
    };
    let start = config.positions()[agent];
    astar(
        start,
        |c| {
            Motion::all(Dim::Three)
                .iter()
                .map(|m| c.offset(m.delta))
                .filter(|n| {
                    bounds.is_agent_cell(n)
                        && config.agent_at(n).is_none_or(|j| j == agent)
                        && supported(n)
                })
                .collect()
        },
        |c| c.z() == 1 && *c != start,
        |c| (c.z() - 1).max(0) as u32,
    )
}

/// Moves every agent down to the bottom layer, one mobile agent at a time.
/// Returns the plan and the resulting flat configuration.
pub fn flatten_3d(initial: &Configuration, bounds: &EnvBounds) -> Result<(MotionPlan, Configuration), PlanError> {
    if initial.dim() != Dim::Three || bounds.dim() != Dim::Three {
        return Err(PlanError::Invalid("flatten_3d needs a 3D configuration".into()));
    }
    initial.check_within(bounds)?;
    if !is_configuration_grounded(initial, bounds)? {
        return Err(PlanError::Invalid("configuration is not grounded".into()));
    }
    let capacity = bounds.bottom_layer_capacity();
    if capacity < initial.len() {
        return Err(PlanError::LayerCapacity { capacity, agents: initial.len() });
    }
    let mut state = initial.clone();
    let mut plan = MotionPlan::new(Dim::Three);
    while state.positions().iter().any(|p| p.z() > 1) {
        let candidates = mobile_upper_agents(&state, bounds)?;
        let routed = candidates.iter().find_map(|&id| route_down(&state, id, bounds).map(|p| (id, p)));
        let (agent, path) = match routed {
            Some(r) => r,
            None if candidates.is_empty() => return Err(PlanError::NoMobileAgent { dump: dump(&state) }),
            None => {
                let agent = candidates[0];
                let cell = state.positions()[agent];
                return Err(PlanError::NoPath { agent, cell });
            }
        };
        for w in path.windows(2) {
            plan.steps.push(PlanStep { agent, from: w[0], to: w[1] });
            state.move_agent(agent, w[1])?;
        }
    }
    Ok((plan, state))
}

fn to_layer(config: &Configuration) -> Configuration {
    Configuration::new(Dim::Two, config.positions().iter().map(|p| CellPos::xy(p.x(), p.y())).collect())
        .expect("distinct cells of one layer stay distinct")
}

/// Reconfigures one grounded 3D configuration into another through a flat
/// intermediate on the bottom layer.
pub fn plan_3d(
    initial: &Configuration,
    target: &TargetConfiguration,
    bounds: &EnvBounds,
) -> Result<MotionPlan, PlanError> {
    if initial.dim() != Dim::Three || bounds.dim() != Dim::Three {
        return Err(PlanError::Invalid("plan_3d needs a 3D configuration".into()));
    }
    target.check_against(bounds, initial.len())?;
    let mut want = target.cells().to_vec();
    want.sort();
    if initial.sorted_cells() == want {
        return Ok(MotionPlan::new(Dim::Three));
    }

    let (down, flat_initial) = flatten_3d(initial, bounds).map_err(|e| e.in_phase("flatten-initial"))?;
    let (target_down, flat_target) =
        flatten_3d(&target.as_configuration(), bounds).map_err(|e| e.in_phase("flatten-target"))?;

    let (min, max) = (bounds.min(), bounds.max());
    let layer_bounds = EnvBounds::new(Dim::Two, CellPos::xy(min.x(), min.y()), CellPos::xy(max.x(), max.y()))?;
    let layer_target = TargetConfiguration::from_configuration(&to_layer(&flat_target));
    let layer = plan_2d(&to_layer(&flat_initial), &layer_target, &layer_bounds).map_err(|e| e.in_phase("layer"))?;

    let mut plan = down;
    let mut state = flat_initial;
    let lift = |p: CellPos| CellPos::xyz(p.x(), p.y(), 1);
    for s in &layer.steps {
        plan.push_cell_move(&mut state, lift(s.from), lift(s.to)).map_err(|e| e.in_phase("layer"))?;
    }
    for s in target_down.steps.iter().rev() {
        plan.push_cell_move(&mut state, s.to, s.from).map_err(|e| e.in_phase("unflatten-target"))?;
    }
    Ok(plan)
}

/// Dispatches on dimension.
pub fn plan(
    initial: &Configuration,
    target: &TargetConfiguration,
    bounds: &EnvBounds,
) -> Result<MotionPlan, PlanError> {
    match initial.dim() {
        Dim::Two => plan_2d(initial, target, bounds),
        Dim::Three => plan_3d(initial, target, bounds),
    }
}
