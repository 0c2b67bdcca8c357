//! The constrained potential game: target configuration, utilities, the
//! global potential and restricted action sets.

use std::collections::{BTreeMap, HashSet};

use crate::error::{Error, Result};
use crate::lattice::{
    candidate_motions, grounded_agents, is_configuration_grounded, AgentId, CellPos,
    Configuration, Dim, EnvBounds,
};

/// The cells the agents should cover, one per agent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TargetConfiguration {
    dim: Dim,
    cells: Vec<CellPos>,
    members: HashSet<CellPos>,
}

impl TargetConfiguration {
    pub fn new(dim: Dim, cells: Vec<CellPos>) -> Result<Self> {
        let mut members = HashSet::with_capacity(cells.len());
        for c in &cells {
            if dim == Dim::Two && c.z() != 0 {
                return Err(Error::domain(format!("2D target cell {c} has nonzero z")));
            }
            if !members.insert(*c) {
                return Err(Error::domain(format!("duplicate target cell {c}")));
            }
        }
        Ok(TargetConfiguration { dim, cells, members })
    }

    pub fn from_configuration(config: &Configuration) -> Self {
        TargetConfiguration::new(config.dim(), config.positions().to_vec())
            .expect("configuration cells are distinct")
    }

    /// Size must match the agent count, every cell must be an agent cell and
    /// a 3D target must itself be grounded.
    pub fn check_against(&self, bounds: &EnvBounds, agents: usize) -> Result<()> {
        if self.cells.len() != agents {
            return Err(Error::domain(format!(
                "target has {} cells for {agents} agents",
                self.cells.len()
            )));
        }
        let as_config = self.as_configuration();
        as_config.check_within(bounds)?;
        if self.dim == Dim::Three && !is_configuration_grounded(&as_config, bounds)? {
            return Err(Error::domain("target configuration is not grounded"));
        }
        Ok(())
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn cells(&self) -> &[CellPos] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, cell: &CellPos) -> bool {
        self.members.contains(cell)
    }

    /// The target cells as a configuration, agent `i` on `cells[i]`.
    pub fn as_configuration(&self) -> Configuration {
        Configuration::new(self.dim, self.cells.clone()).expect("target cells are distinct")
    }
}

/// Minimum L1 distance from `pos` to a target cell.
pub fn dist_to_target(pos: &CellPos, target: &TargetConfiguration) -> Result<u32> {
    if target.is_empty() {
        return Err(Error::domain("distance to an empty target is undefined"));
    }
    if target.contains(pos) {
        return Ok(0);
    }
    Ok(target.cells.iter().map(|c| pos.l1(c)).min().expect("non-empty"))
}

/// `1 / (dist + 1)`, kept as the distance so it stays exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Utility {
    pub distance: u32,
}

impl Utility {
    pub fn value(&self) -> f64 {
        1.0 / (self.distance as f64 + 1.0)
    }

    pub fn is_max(&self) -> bool {
        self.distance == 0
    }
}

pub fn utility(agent: AgentId, config: &Configuration, target: &TargetConfiguration) -> Result<Utility> {
    let pos = config.position(agent)?;
    Ok(Utility { distance: dist_to_target(&pos, target)? })
}

/// The global potential held exactly as a histogram of agent distances:
/// `counts[d]` agents sit at distance `d`, each contributing `1 / (d + 1)`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExactPotential {
    counts: Vec<u64>,
}

impl ExactPotential {
    pub fn of(config: &Configuration, target: &TargetConfiguration) -> Result<Self> {
        let mut p = ExactPotential::default();
        for pos in config.positions() {
            p.add(dist_to_target(pos, target)?, 1);
        }
        Ok(p)
    }

    fn add(&mut self, distance: u32, by: i64) {
        let d = distance as usize;
        if self.counts.len() <= d {
            self.counts.resize(d + 1, 0);
        }
        let next = self.counts[d] as i64 + by;
        assert!(next >= 0, "potential histogram went negative");
        self.counts[d] = next as u64;
        while self.counts.last() == Some(&0) {
            self.counts.pop();
        }
    }

    pub fn agents(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `Φ = N` exactly: every agent covers a target cell.
    pub fn is_maximal(&self) -> bool {
        self.counts.len() <= 1
    }

    pub fn value(&self) -> f64 {
        self.counts
            .iter()
            .enumerate()
            .map(|(d, &c)| c as f64 / (d as f64 + 1.0))
            .sum()
    }

    /// `after - self` as an exact delta.
    pub fn delta_to(&self, after: &ExactPotential) -> PotentialDelta {
        let mut terms = BTreeMap::new();
        let len = self.counts.len().max(after.counts.len());
        for d in 0..len {
            let a = after.counts.get(d).copied().unwrap_or(0) as i64;
            let b = self.counts.get(d).copied().unwrap_or(0) as i64;
            if a != b {
                terms.insert(d as u32, a - b);
            }
        }
        PotentialDelta { terms }
    }

    pub fn apply(&mut self, delta: &PotentialDelta) {
        for (&d, &c) in &delta.terms {
            self.add(d, c);
        }
    }
}

/// An exact difference of potentials: `Σ coeff / (d + 1)` over the terms.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PotentialDelta {
    terms: BTreeMap<u32, i64>,
}

impl PotentialDelta {
    /// `U(to) - U(from)` of a single agent.
    pub fn unilateral(from: Utility, to: Utility) -> Self {
        let mut terms = BTreeMap::new();
        if from.distance != to.distance {
            terms.insert(from.distance, -1);
            terms.insert(to.distance, 1);
        }
        PotentialDelta { terms }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Rounds the exact value to `f64`, summing by ascending distance. Equal
    /// deltas always round to the same float.
    pub fn to_f64(&self) -> f64 {
        self.terms
            .iter()
            .map(|(&d, &c)| c as f64 / (d as f64 + 1.0))
            .fold(0.0, |acc, t| acc + t)
    }
}

/// `Φ` as a float. Use [`ExactPotential`] for comparisons.
pub fn potential(config: &Configuration, target: &TargetConfiguration) -> Result<f64> {
    Ok(ExactPotential::of(config, target)?.value())
}

/// The moves available to one agent in the current configuration.
///
/// `moves` never contains the agent's own cell. In 3D an agent that may not
/// move is `stay_only`: its action set is `{current position}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RestrictedActionSet {
    pub agent: AgentId,
    pub origin: CellPos,
    pub moves: Vec<CellPos>,
    pub stay_only: bool,
}

impl RestrictedActionSet {
    pub fn is_mobile(&self) -> bool {
        !self.moves.is_empty()
    }

    /// Number of proposable moves, `|R_k|`.
    pub fn len(&self) -> usize {
        self.moves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }

    pub fn contains_move(&self, to: &CellPos) -> bool {
        self.moves.contains(to)
    }

    /// The action set itself: the moves, or the stay action when blocked in
    /// 3D.
    pub fn actions(&self) -> Vec<CellPos> {
        if self.stay_only {
            vec![self.origin]
        } else {
            self.moves.clone()
        }
    }
}

/// 2D: every free sliding or corner destination.
///
/// 3D: the agent may move only if each of its face neighbours stays grounded
/// without it, and then only to destinations where it is itself grounded
/// after the move. Otherwise it may only stay.
pub fn restricted_action_set(
    agent: AgentId,
    config: &Configuration,
    bounds: &EnvBounds,
) -> Result<RestrictedActionSet> {
    let origin = config.position(agent)?;
    let candidates = candidate_motions(agent, config, bounds)?;
    if config.dim() == Dim::Two {
        return Ok(RestrictedActionSet { agent, origin, moves: candidates, stay_only: false });
    }

    let blocked = RestrictedActionSet { agent, origin, moves: Vec::new(), stay_only: true };
    let grounded = grounded_agents(config, Some(agent));
    let neighbors_safe = origin
        .axis_neighbors(Dim::Three)
        .filter_map(|n| config.agent_at(&n))
        .all(|j| grounded[j]);
    if !neighbors_safe {
        return Ok(blocked);
    }
    let supported = |c: &CellPos| {
        c.z() == 1
            || c.axis_neighbors(Dim::Three)
                .filter_map(|n| config.agent_at(&n))
                .any(|j| j != agent && grounded[j])
    };
    let moves: Vec<CellPos> = candidates.into_iter().filter(|c| supported(c)).collect();
    if moves.is_empty() {
        return Ok(blocked);
    }
    Ok(RestrictedActionSet { agent, origin, moves, stay_only: false })
}

/// `U_i(to) - U_i(from)` for a unilateral move, exact.
pub fn unilateral_delta_exact(
    agent: AgentId,
    from: CellPos,
    to: CellPos,
    config: &Configuration,
    target: &TargetConfiguration,
) -> Result<PotentialDelta> {
    let at = config.position(agent)?;
    if at != from {
        return Err(Error::domain(format!("agent {agent} is at {at}, not {from}")));
    }
    if let Some(other) = config.agent_at(&to) {
        if other != agent {
            return Err(Error::domain(format!("destination {to} holds agent {other}")));
        }
    }
    let before = Utility { distance: dist_to_target(&from, target)? };
    let after = Utility { distance: dist_to_target(&to, target)? };
    Ok(PotentialDelta::unilateral(before, after))
}

/// `U_i(to) - U_i(from)`; equal to the change of `Φ` under the same move.
pub fn unilateral_delta(
    agent: AgentId,
    from: CellPos,
    to: CellPos,
    config: &Configuration,
    target: &TargetConfiguration,
) -> Result<f64> {
    Ok(unilateral_delta_exact(agent, from, to, config, target)?.to_f64())
}
