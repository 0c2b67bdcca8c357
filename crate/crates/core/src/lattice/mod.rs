//! Lattice geometry: cells, primitive motions, environment bounds and
//! configurations of labeled cube agents.
//!
//! Cells are stored as three integer coordinates. Two-dimensional lattices
//! keep `z = 0` everywhere and only ever move along `x` and `y`.

mod graph;
mod ground;

pub use graph::{articulation_points, build_connectivity_graph, connected_components, ConnectivityGraph};
pub use ground::{
    ground_augmented_graph, ground_plane_cells, grounded_agents, is_configuration_grounded,
    is_grounded, AugmentedGraph,
};

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of an agent inside a [`Configuration`] (0-based).
pub type AgentId = usize;

/// Lattice dimensionality.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dim {
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "3")]
    Three,
}

impl Dim {
    pub fn new(value: u8) -> Result<Self> {
        match value {
            2 => Ok(Dim::Two),
            3 => Ok(Dim::Three),
            other => Err(Error::domain(format!("dimension must be 2 or 3, got {other}"))),
        }
    }

    pub fn value(self) -> usize {
        match self {
            Dim::Two => 2,
            Dim::Three => 3,
        }
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// An integer lattice coordinate. Ordering is lexicographic in `(x, y, z)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellPos(pub [i32; 3]);

impl CellPos {
    pub const fn xy(x: i32, y: i32) -> Self {
        CellPos([x, y, 0])
    }

    pub const fn xyz(x: i32, y: i32, z: i32) -> Self {
        CellPos([x, y, z])
    }

    /// Builds a cell from a coordinate slice whose length must match `dim`.
    pub fn from_coords(dim: Dim, coords: &[i64]) -> Result<Self> {
        if coords.len() != dim.value() {
            return Err(Error::domain(format!(
                "coordinate {coords:?} has length {}, expected {}",
                coords.len(),
                dim.value()
            )));
        }
        let mut out = [0i32; 3];
        for (slot, &c) in out.iter_mut().zip(coords) {
            *slot = i32::try_from(c)
                .map_err(|_| Error::domain(format!("coordinate {c} out of range")))?;
        }
        Ok(CellPos(out))
    }

    pub fn coords(&self, dim: Dim) -> Vec<i64> {
        self.0[..dim.value()].iter().map(|&c| c as i64).collect()
    }

    pub fn x(&self) -> i32 {
        self.0[0]
    }

    pub fn y(&self) -> i32 {
        self.0[1]
    }

    pub fn z(&self) -> i32 {
        self.0[2]
    }

    pub fn offset(&self, delta: [i32; 3]) -> CellPos {
        CellPos([self.0[0] + delta[0], self.0[1] + delta[1], self.0[2] + delta[2]])
    }

    pub fn l1(&self, other: &CellPos) -> u32 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| a.abs_diff(*b))
            .sum()
    }

    pub fn linf(&self, other: &CellPos) -> u32 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| a.abs_diff(*b))
            .max()
            .unwrap_or(0)
    }

    /// The `2d` cells at L1 distance one.
    pub fn axis_neighbors(&self, dim: Dim) -> impl Iterator<Item = CellPos> + use<> {
        let here = *self;
        AXIS_DELTAS[..2 * dim.value()].iter().map(move |d| here.offset(*d))
    }
}

impl fmt::Display for CellPos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.0[0], self.0[1], self.0[2])
    }
}

const AXIS_DELTAS: [[i32; 3]; 6] = [
    [1, 0, 0],
    [-1, 0, 0],
    [0, 1, 0],
    [0, -1, 0],
    [0, 0, 1],
    [0, 0, -1],
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MotionKind {
    Sliding,
    Corner,
}

/// A primitive cube motion. Sliding motions change one coordinate by one,
/// corner motions change two coordinates by one each. Signs are free.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Motion {
    pub delta: [i32; 3],
    pub kind: MotionKind,
}

impl Motion {
    pub fn new(delta: [i32; 3]) -> Result<Self> {
        let nonzero: Vec<i32> = delta.iter().copied().filter(|c| *c != 0).collect();
        let kind = match nonzero.as_slice() {
            [a] if a.abs() == 1 => MotionKind::Sliding,
            [a, b] if a.abs() == 1 && b.abs() == 1 => MotionKind::Corner,
            _ => return Err(Error::domain(format!("{delta:?} is not a primitive motion"))),
        };
        Ok(Motion { delta, kind })
    }

    /// Every primitive motion of the lattice: 8 in 2D, 18 in 3D.
    /// Sliding motions come first, then corner motions.
    pub fn all(dim: Dim) -> &'static [Motion] {
        match dim {
            Dim::Two => &MOTIONS_2D,
            Dim::Three => &MOTIONS_3D,
        }
    }

    pub fn from_cells(from: &CellPos, to: &CellPos) -> Option<Motion> {
        let d = [to.0[0] - from.0[0], to.0[1] - from.0[1], to.0[2] - from.0[2]];
        Motion::new(d).ok()
    }

    pub fn l1(&self) -> u32 {
        self.delta.iter().map(|c| c.unsigned_abs()).sum()
    }
}

const fn slide(delta: [i32; 3]) -> Motion {
    Motion { delta, kind: MotionKind::Sliding }
}

const fn corner(delta: [i32; 3]) -> Motion {
    Motion { delta, kind: MotionKind::Corner }
}

static MOTIONS_2D: [Motion; 8] = [
    slide([1, 0, 0]),
    slide([-1, 0, 0]),
    slide([0, 1, 0]),
    slide([0, -1, 0]),
    corner([1, 1, 0]),
    corner([1, -1, 0]),
    corner([-1, 1, 0]),
    corner([-1, -1, 0]),
];

static MOTIONS_3D: [Motion; 18] = [
    slide([1, 0, 0]),
    slide([-1, 0, 0]),
    slide([0, 1, 0]),
    slide([0, -1, 0]),
    slide([0, 0, 1]),
    slide([0, 0, -1]),
    corner([1, 1, 0]),
    corner([1, -1, 0]),
    corner([-1, 1, 0]),
    corner([-1, -1, 0]),
    corner([1, 0, 1]),
    corner([1, 0, -1]),
    corner([-1, 0, 1]),
    corner([-1, 0, -1]),
    corner([0, 1, 1]),
    corner([0, 1, -1]),
    corner([0, -1, 1]),
    corner([0, -1, -1]),
];

/// Finite axis-aligned environment box (inclusive on both ends).
///
/// In 3D the box must start at `z = 0`: that layer is the ground plane and
/// agents only ever occupy `z >= 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnvBounds {
    dim: Dim,
    min: CellPos,
    max: CellPos,
}

impl EnvBounds {
    pub fn new(dim: Dim, min: CellPos, max: CellPos) -> Result<Self> {
        if (0..3).any(|k| min.0[k] > max.0[k]) {
            return Err(Error::domain(format!("bounds min {min} exceeds max {max}")));
        }
        match dim {
            Dim::Two if min.z() != 0 || max.z() != 0 => {
                return Err(Error::domain("2D bounds must have z = 0"));
            }
            Dim::Three if min.z() != 0 => {
                return Err(Error::domain("3D bounds must start at the ground plane z = 0"));
            }
            _ => {}
        }
        Ok(EnvBounds { dim, min, max })
    }

    /// `[0, width) x [0, height)` in 2D.
    pub fn grid_2d(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::domain("grid sides must be positive"));
        }
        EnvBounds::new(Dim::Two, CellPos::xy(0, 0), CellPos::xy(width as i32 - 1, height as i32 - 1))
    }

    /// `[0, width) x [0, depth)` with agent layers `z = 1..=layers` above the
    /// ground plane.
    pub fn grid_3d(width: u32, depth: u32, layers: u32) -> Result<Self> {
        if width == 0 || depth == 0 || layers == 0 {
            return Err(Error::domain("grid sides must be positive"));
        }
        EnvBounds::new(
            Dim::Three,
            CellPos::xyz(0, 0, 0),
            CellPos::xyz(width as i32 - 1, depth as i32 - 1, layers as i32),
        )
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn min(&self) -> CellPos {
        self.min
    }

    pub fn max(&self) -> CellPos {
        self.max
    }

    pub fn contains(&self, p: &CellPos) -> bool {
        (0..3).all(|k| self.min.0[k] <= p.0[k] && p.0[k] <= self.max.0[k])
    }

    /// In bounds and, in 3D, above the ground plane.
    pub fn is_agent_cell(&self, p: &CellPos) -> bool {
        self.contains(p) && (self.dim == Dim::Two || p.z() >= 1)
    }

    /// All cells agents may occupy, in lexicographic order.
    pub fn agent_cells(&self) -> Vec<CellPos> {
        let z_lo = if self.dim == Dim::Three { 1 } else { 0 };
        let mut out = Vec::new();
        for x in self.min.x()..=self.max.x() {
            for y in self.min.y()..=self.max.y() {
                for z in z_lo..=self.max.z() {
                    out.push(CellPos([x, y, z]));
                }
            }
        }
        out
    }

    /// Number of cells in the layer directly above the ground plane (3D) or
    /// in the whole grid (2D).
    pub fn bottom_layer_capacity(&self) -> usize {
        let w = (self.max.x() - self.min.x() + 1) as usize;
        let h = (self.max.y() - self.min.y() + 1) as usize;
        if self.dim == Dim::Three && self.max.z() < 1 {
            0
        } else {
            w * h
        }
    }
}

/// Positions of `N` labeled agents. The agent id is the index into the
/// position list; positions are pairwise distinct.
#[derive(Clone, Debug)]
pub struct Configuration {
    dim: Dim,
    positions: Vec<CellPos>,
    occupancy: HashMap<CellPos, AgentId>,
}

impl PartialEq for Configuration {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.positions == other.positions
    }
}

impl Eq for Configuration {}

impl std::hash::Hash for Configuration {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.dim.hash(state);
        self.positions.hash(state);
    }
}

impl Configuration {
    pub fn new(dim: Dim, positions: Vec<CellPos>) -> Result<Self> {
        let mut occupancy = HashMap::with_capacity(positions.len());
        for (id, p) in positions.iter().enumerate() {
            if dim == Dim::Two && p.z() != 0 {
                return Err(Error::domain(format!("2D cell {p} has nonzero z")));
            }
            if let Some(prev) = occupancy.insert(*p, id) {
                return Err(Error::domain(format!(
                    "agents {prev} and {id} share cell {p}"
                )));
            }
        }
        Ok(Configuration { dim, positions, occupancy })
    }

    /// Checks that every agent sits on a cell agents may occupy.
    pub fn check_within(&self, bounds: &EnvBounds) -> Result<()> {
        if bounds.dim() != self.dim {
            return Err(Error::domain("configuration and bounds dimensions differ"));
        }
        match self.positions.iter().position(|p| !bounds.is_agent_cell(p)) {
            Some(id) => Err(Error::domain(format!(
                "agent {id} at {} is outside the agent cells of the environment",
                self.positions[id]
            ))),
            None => Ok(()),
        }
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[CellPos] {
        &self.positions
    }

    pub fn position(&self, agent: AgentId) -> Result<CellPos> {
        self.positions
            .get(agent)
            .copied()
            .ok_or_else(|| Error::domain(format!("unknown agent id {agent}")))
    }

    pub fn agent_at(&self, cell: &CellPos) -> Option<AgentId> {
        self.occupancy.get(cell).copied()
    }

    pub fn is_occupied(&self, cell: &CellPos) -> bool {
        self.occupancy.contains_key(cell)
    }

    /// Moves `agent` to an unoccupied cell.
    pub fn move_agent(&mut self, agent: AgentId, to: CellPos) -> Result<()> {
        let from = self.position(agent)?;
        if from == to {
            return Ok(());
        }
        if let Some(other) = self.agent_at(&to) {
            return Err(Error::domain(format!("cell {to} already holds agent {other}")));
        }
        self.occupancy.remove(&from);
        self.occupancy.insert(to, agent);
        self.positions[agent] = to;
        Ok(())
    }

    pub fn with_move(&self, agent: AgentId, to: CellPos) -> Result<Configuration> {
        let mut next = self.clone();
        next.move_agent(agent, to)?;
        Ok(next)
    }

    /// Occupied cells in lexicographic order, ignoring labels.
    pub fn sorted_cells(&self) -> Vec<CellPos> {
        let mut cells = self.positions.clone();
        cells.sort();
        cells
    }
}

/// Cells reachable from the agent's position by one sliding or corner
/// motion: in bounds (agent cells only) and not held by another agent.
pub fn candidate_motions(
    agent: AgentId,
    config: &Configuration,
    bounds: &EnvBounds,
) -> Result<Vec<CellPos>> {
    let from = config.position(agent)?;
    Ok(Motion::all(config.dim())
        .iter()
        .map(|m| from.offset(m.delta))
        .filter(|c| bounds.is_agent_cell(c) && !config.is_occupied(c))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open_2d() -> EnvBounds {
        EnvBounds::new(Dim::Two, CellPos::xy(-10, -10), CellPos::xy(10, 10)).unwrap()
    }

    #[test]
    fn motion_tables_have_expected_sizes() {
        assert_eq!(Motion::all(Dim::Two).len(), 8);
        assert_eq!(Motion::all(Dim::Three).len(), 18);
        for dim in [Dim::Two, Dim::Three] {
            for m in Motion::all(dim) {
                let rebuilt = Motion::new(m.delta).unwrap();
                assert_eq!(rebuilt.kind, m.kind);
                let expected = if m.kind == MotionKind::Sliding { 1 } else { 2 };
                assert_eq!(m.l1(), expected);
            }
        }
    }

    #[test]
    fn motion_rejects_non_primitive() {
        assert!(Motion::new([0, 0, 0]).is_err());
        assert!(Motion::new([2, 0, 0]).is_err());
        assert!(Motion::new([1, 1, 1]).is_err());
        assert_eq!(Motion::new([-1, 0, 1]).unwrap().kind, MotionKind::Corner);
    }

    #[test]
    fn lone_agent_has_eight_motions() {
        let c = Configuration::new(Dim::Two, vec![CellPos::xy(0, 0)]).unwrap();
        let m = candidate_motions(0, &c, &open_2d()).unwrap();
        assert_eq!(m.len(), 8);
        assert!(!m.contains(&CellPos::xy(0, 0)));
    }

    #[test]
    fn occupied_cell_is_excluded() {
        let c = Configuration::new(Dim::Two, vec![CellPos::xy(0, 0), CellPos::xy(1, 0)]).unwrap();
        let m = candidate_motions(0, &c, &open_2d()).unwrap();
        assert_eq!(m.len(), 7);
        assert!(!m.contains(&CellPos::xy(1, 0)));
    }

    #[test]
    fn bounds_clip_motions() {
        let b = EnvBounds::grid_2d(3, 3).unwrap();
        let c = Configuration::new(Dim::Two, vec![CellPos::xy(0, 0)]).unwrap();
        let mut m = candidate_motions(0, &c, &b).unwrap();
        m.sort();
        assert_eq!(m, vec![CellPos::xy(0, 1), CellPos::xy(1, 0), CellPos::xy(1, 1)]);
    }

    #[test]
    fn unknown_agent_is_an_error() {
        let c = Configuration::new(Dim::Two, vec![CellPos::xy(0, 0)]).unwrap();
        assert!(candidate_motions(3, &c, &open_2d()).is_err());
    }

    #[test]
    fn configuration_rejects_duplicates() {
        let err = Configuration::new(Dim::Two, vec![CellPos::xy(0, 0), CellPos::xy(0, 0)]);
        assert!(err.is_err());
    }

    #[test]
    fn three_d_motions_never_enter_ground_plane() {
        let b = EnvBounds::grid_3d(3, 3, 3).unwrap();
        let c = Configuration::new(Dim::Three, vec![CellPos::xyz(1, 1, 1)]).unwrap();
        let m = candidate_motions(0, &c, &b).unwrap();
        assert!(m.iter().all(|p| p.z() >= 1));
        // 18 motions minus the 5 that go down to z = 0.
        assert_eq!(m.len(), 13);
    }

    #[test]
    fn bounds_validation() {
        assert!(EnvBounds::new(Dim::Three, CellPos::xyz(0, 0, 1), CellPos::xyz(2, 2, 3)).is_err());
        assert!(EnvBounds::new(Dim::Two, CellPos::xy(2, 0), CellPos::xy(1, 0)).is_err());
        let b = EnvBounds::grid_3d(3, 3, 2).unwrap();
        assert_eq!(b.agent_cells().len(), 18);
        assert_eq!(b.bottom_layer_capacity(), 9);
    }
}
