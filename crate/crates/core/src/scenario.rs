//! Scenarios: environment, initial and target configuration plus learning
//! parameters, with a JSON file format and a random generator.
//!
//! ```json
//! {"name": "...", "dim": 2, "bounds": {"min": [0, 0], "max": [9, 9]},
//!  "initial": [[0, 0], ...], "target": [[5, 5], ...],
//!  "params": {"tau": 0.001, "seed": 1, "max_steps": 1000000, "mode": "global"}}
//! ```

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::IteratorRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::TargetConfiguration;
use crate::lattice::{is_configuration_grounded, CellPos, Configuration, Dim, EnvBounds};
use crate::learning::{seeded_rng, LearningParams};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("malformed-json: {0}")]
    MalformedJson(String),
    #[error("dimension-mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid-bounds: {0}")]
    InvalidBounds(String),
    #[error("duplicate-cell: {which} lists {cell} more than once")]
    DuplicateCell { which: &'static str, cell: CellPos },
    #[error("out-of-bounds: {which} cell {cell} is not an agent cell of the environment")]
    OutOfBounds { which: &'static str, cell: CellPos },
    #[error("ungrounded: the {which} configuration is not grounded")]
    Ungrounded { which: &'static str },
    #[error("target-size: target has {target} cells for {agents} agents")]
    TargetSize { target: usize, agents: usize },
    #[error("layer-capacity: the bottom layer holds {capacity} cells for {agents} agents")]
    LayerCapacity { capacity: usize, agents: usize },
    #[error("no-agents: a scenario needs at least one agent")]
    NoAgents,
    #[error("invalid-params: {0}")]
    InvalidParams(String),
    #[error("io: {0}")]
    Io(std::io::Error),
}

impl From<std::io::Error> for ScenarioError {
    fn from(e: std::io::Error) -> Self {
        ScenarioError::Io(e)
    }
}

impl ScenarioError {
    /// Stable machine-readable code naming the violated invariant.
    pub fn code(&self) -> &'static str {
        match self {
            ScenarioError::MalformedJson(_) => "malformed-json",
            ScenarioError::DimensionMismatch(_) => "dimension-mismatch",
            ScenarioError::InvalidBounds(_) => "invalid-bounds",
            ScenarioError::DuplicateCell { .. } => "duplicate-cell",
            ScenarioError::OutOfBounds { .. } => "out-of-bounds",
            ScenarioError::Ungrounded { .. } => "ungrounded",
            ScenarioError::TargetSize { .. } => "target-size",
            ScenarioError::LayerCapacity { .. } => "layer-capacity",
            ScenarioError::NoAgents => "no-agents",
            ScenarioError::InvalidParams(_) => "invalid-params",
            ScenarioError::Io(_) => "io",
        }
    }
}

/// A fully validated reconfiguration problem.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    name: String,
    bounds: EnvBounds,
    initial: Configuration,
    target: TargetConfiguration,
    params: LearningParams,
}

fn check_cells(
    which: &'static str,
    cells: &[CellPos],
    bounds: &EnvBounds,
) -> Result<(), ScenarioError> {
    let mut seen = HashSet::with_capacity(cells.len());
    for c in cells {
        if !seen.insert(*c) {
            return Err(ScenarioError::DuplicateCell { which, cell: *c });
        }
    }
    if let Some(c) = cells.iter().find(|c| !bounds.is_agent_cell(c)) {
        return Err(ScenarioError::OutOfBounds { which, cell: *c });
    }
    Ok(())
}

impl Scenario {
    pub fn new(
        name: impl Into<String>,
        bounds: EnvBounds,
        initial: Configuration,
        target: TargetConfiguration,
        params: LearningParams,
    ) -> Result<Self, ScenarioError> {
        let dim = bounds.dim();
        if initial.dim() != dim || target.dim() != dim {
            return Err(ScenarioError::DimensionMismatch(format!(
                "bounds are {dim}D, initial {}D, target {}D",
                initial.dim(),
                target.dim()
            )));
        }
        if initial.is_empty() {
            return Err(ScenarioError::NoAgents);
        }
        check_cells("initial", initial.positions(), &bounds)?;
        check_cells("target", target.cells(), &bounds)?;
        if target.len() != initial.len() {
            return Err(ScenarioError::TargetSize { target: target.len(), agents: initial.len() });
        }
        if dim == Dim::Three {
            let grounded = |c: &Configuration| {
                is_configuration_grounded(c, &bounds).map_err(|e| ScenarioError::InvalidBounds(e.to_string()))
            };
            if !grounded(&initial)? {
                return Err(ScenarioError::Ungrounded { which: "initial" });
            }
            if !grounded(&target.as_configuration())? {
                return Err(ScenarioError::Ungrounded { which: "target" });
            }
            let capacity = bounds.bottom_layer_capacity();
            if capacity < initial.len() {
                return Err(ScenarioError::LayerCapacity { capacity, agents: initial.len() });
            }
        }
        params.validate().map_err(|e| ScenarioError::InvalidParams(e.to_string()))?;
        Ok(Scenario { name: name.into(), bounds, initial, target, params })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> Dim {
        self.bounds.dim()
    }

    pub fn bounds(&self) -> &EnvBounds {
        &self.bounds
    }

    pub fn initial(&self) -> &Configuration {
        &self.initial
    }

    pub fn target(&self) -> &TargetConfiguration {
        &self.target
    }

    pub fn params(&self) -> &LearningParams {
        &self.params
    }

    pub fn agents(&self) -> usize {
        self.initial.len()
    }

    pub fn with_params(mut self, params: LearningParams) -> Result<Self, ScenarioError> {
        params.validate().map_err(|e| ScenarioError::InvalidParams(e.to_string()))?;
        self.params = params;
        Ok(self)
    }

    pub fn from_json_str(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile =
            serde_json::from_str(text).map_err(|e| ScenarioError::MalformedJson(e.to_string()))?;
        file.into_scenario()
    }

    /// Canonical JSON: fixed key order, pretty-printed, trailing newline.
    /// Canonical file form: one cell per line, small objects inline.
    pub fn to_json_string(&self) -> String {
        let f = ScenarioFile::from(self);
        fn json<T: Serialize>(v: &T) -> String {
            serde_json::to_string(v).expect("plain values serialize")
        }
        let point = |c: &[i64]| format!("[{}]", c.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", "));
        let cells = |cs: &[Vec<i64>]| {
            let rows: Vec<String> = cs.iter().map(|c| format!("    {}", point(c))).collect();
            format!("[\n{}\n  ]", rows.join(",\n"))
        };
        let p = &f.params;
        format!(
            "{{\n  \"name\": {},\n  \"dim\": {},\n  \"bounds\": {{\"min\": {}, \"max\": {}}},\n  \"initial\": {},\n  \"target\": {},\n  \"params\": {{\"tau\": {}, \"seed\": {}, \"max_steps\": {}, \"mode\": {}}}\n}}\n",
            json(&f.name),
            f.dim,
            point(&f.bounds.min),
            point(&f.bounds.max),
            cells(&f.initial),
            cells(&f.target),
            json(&p.tau),
            p.seed,
            p.max_steps,
            json(&p.mode),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        Scenario::from_json_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsFile {
    min: Vec<i64>,
    max: Vec<i64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    dim: u8,
    bounds: BoundsFile,
    initial: Vec<Vec<i64>>,
    target: Vec<Vec<i64>>,
    params: LearningParams,
}

impl From<&Scenario> for ScenarioFile {
    fn from(s: &Scenario) -> Self {
        let dim = s.dim();
        ScenarioFile {
            name: s.name.clone(),
            dim: dim.value() as u8,
            bounds: BoundsFile { min: s.bounds.min().coords(dim), max: s.bounds.max().coords(dim) },
            initial: s.initial.positions().iter().map(|p| p.coords(dim)).collect(),
            target: s.target.cells().iter().map(|p| p.coords(dim)).collect(),
            params: s.params,
        }
    }
}

impl ScenarioFile {
    fn into_scenario(self) -> Result<Scenario, ScenarioError> {
        let dim = Dim::new(self.dim).map_err(|e| ScenarioError::DimensionMismatch(e.to_string()))?;
        let cell = |coords: &[i64]| {
            CellPos::from_coords(dim, coords).map_err(|e| ScenarioError::DimensionMismatch(e.to_string()))
        };
        let min = cell(&self.bounds.min)?;
        let max = cell(&self.bounds.max)?;
        let bounds =
            EnvBounds::new(dim, min, max).map_err(|e| ScenarioError::InvalidBounds(e.to_string()))?;
        let initial: Vec<CellPos> = self.initial.iter().map(|c| cell(c)).collect::<Result<_, _>>()?;
        let target: Vec<CellPos> = self.target.iter().map(|c| cell(c)).collect::<Result<_, _>>()?;
        check_cells("initial", &initial, &bounds)?;
        check_cells("target", &target, &bounds)?;
        let initial = Configuration::new(dim, initial).expect("cells checked");
        let target = TargetConfiguration::new(dim, target).expect("cells checked");
        Scenario::new(self.name, bounds, initial, target, self.params)
    }
}

/// The four reconfiguration types: shape dimensionality of the initial and
/// the target configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScenarioKind {
    TwoToTwo,
    TwoToThree,
    ThreeToTwo,
    ThreeToThree,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [
        ScenarioKind::TwoToTwo,
        ScenarioKind::TwoToThree,
        ScenarioKind::ThreeToTwo,
        ScenarioKind::ThreeToThree,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ScenarioKind::TwoToTwo => "2Dto2D",
            ScenarioKind::TwoToThree => "2Dto3D",
            ScenarioKind::ThreeToTwo => "3Dto2D",
            ScenarioKind::ThreeToThree => "3Dto3D",
        }
    }

    /// `2Dto2D` runs on a planar lattice; the others need a 3D lattice, with
    /// flat shapes on the layer `z = 1`.
    pub fn lattice_dim(self) -> Dim {
        match self {
            ScenarioKind::TwoToTwo => Dim::Two,
            _ => Dim::Three,
        }
    }

    fn shapes_are_solid(self) -> (bool, bool) {
        match self {
            ScenarioKind::TwoToTwo => (false, false),
            ScenarioKind::TwoToThree => (false, true),
            ScenarioKind::ThreeToTwo => (true, false),
            ScenarioKind::ThreeToThree => (true, true),
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ScenarioKind {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        match norm.as_str() {
            "2dto2d" | "2d2d" => Ok(ScenarioKind::TwoToTwo),
            "2dto3d" | "2d3d" => Ok(ScenarioKind::TwoToThree),
            "3dto2d" | "3d2d" => Ok(ScenarioKind::ThreeToTwo),
            "3dto3d" | "3d3d" => Ok(ScenarioKind::ThreeToThree),
            _ => Err(ScenarioError::InvalidParams(format!("unknown scenario kind {s:?}"))),
        }
    }
}

/// Translation of the target relative to the initial shape, along `x`.
pub const TARGET_X_OFFSET: i32 = 10;
const MARGIN: i32 = 2;

/// Random connected shape of `n` cells grown from the origin. Flat shapes
/// grow in the plane (`z = 0` for 2D lattices, `z = 1` for 3D); solid shapes
/// grow upward from `z = 1`, so every cell is grounded.
fn grow_shape<R: Rng>(n: usize, dim: Dim, solid: bool, rng: &mut R) -> Vec<CellPos> {
    let base_z = if dim == Dim::Three { 1 } else { 0 };
    let seed = CellPos::xyz(0, 0, base_z);
    let mut cells = vec![seed];
    let mut members: HashSet<CellPos> = HashSet::from([seed]);
    while cells.len() < n {
        let mut frontier: Vec<CellPos> = Vec::new();
        for c in &cells {
            for nb in c.axis_neighbors(Dim::Three) {
                let ok = if solid { nb.z() >= 1 } else { nb.z() == base_z };
                if ok && !members.contains(&nb) && !frontier.contains(&nb) {
                    frontier.push(nb);
                }
            }
        }
        frontier.sort();
        let pick = *frontier.iter().choose(rng).expect("frontier of a finite shape is non-empty");
        members.insert(pick);
        cells.push(pick);
    }
    cells
}

fn shift_to_origin(cells: &mut [CellPos]) {
    let min_x = cells.iter().map(|c| c.x()).min().unwrap_or(0);
    let min_y = cells.iter().map(|c| c.y()).min().unwrap_or(0);
    for c in cells.iter_mut() {
        *c = CellPos::xyz(c.x() - min_x, c.y() - min_y, c.z());
    }
}

/// Random valid scenario of the given kind. The target shape is shifted by
/// [`TARGET_X_OFFSET`] along `x`; the environment is the bounding box of both
/// shapes plus a small margin.
pub fn generate_scenario(kind: ScenarioKind, n_agents: usize, seed: u64) -> Result<Scenario, ScenarioError> {
    if n_agents == 0 {
        return Err(ScenarioError::NoAgents);
    }
    let dim = kind.lattice_dim();
    let (solid_initial, solid_target) = kind.shapes_are_solid();
    let mut rng = seeded_rng(seed);
    let mut initial = grow_shape(n_agents, dim, solid_initial, &mut rng);
    let mut target = grow_shape(n_agents, dim, solid_target, &mut rng);
    shift_to_origin(&mut initial);
    shift_to_origin(&mut target);
    for c in &mut target {
        *c = c.offset([TARGET_X_OFFSET, 0, 0]);
    }

    let all = initial.iter().chain(target.iter());
    let max_x = all.clone().map(|c| c.x()).max().unwrap_or(0);
    let max_y = all.clone().map(|c| c.y()).max().unwrap_or(0);
    let max_z = all.map(|c| c.z()).max().unwrap_or(0);
    let bounds = match dim {
        Dim::Two => EnvBounds::new(dim, CellPos::xy(-MARGIN, -MARGIN), CellPos::xy(max_x + MARGIN, max_y + MARGIN)),
        Dim::Three => EnvBounds::new(
            dim,
            CellPos::xyz(-MARGIN, -MARGIN, 0),
            CellPos::xyz(max_x + MARGIN, max_y + MARGIN, max_z + MARGIN),
        ),
    }
    .map_err(|e| ScenarioError::InvalidBounds(e.to_string()))?;

    let params = LearningParams { seed, ..LearningParams::default() };
    Scenario::new(
        format!("{}-n{}-s{}", kind.label(), n_agents, seed),
        bounds,
        Configuration::new(dim, initial).expect("grown shape has distinct cells"),
        TargetConfiguration::new(dim, target).expect("grown shape has distinct cells"),
        params,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"name": "tiny", "dim": 2, "bounds": {"min": [0, 0], "max": [3, 3]},
        "initial": [[0, 0], [1, 0]], "target": [[3, 3], [2, 3]],
        "params": {"tau": 0.5, "seed": 4, "max_steps": 100, "mode": "local"}}"#;

    #[test]
    fn loads_minimal_scenario() {
        let s = Scenario::from_json_str(MINIMAL).unwrap();
        assert_eq!(s.agents(), 2);
        assert_eq!(s.dim(), Dim::Two);
        assert_eq!(s.params().mode, crate::learning::Mode::Local);
    }

    #[test]
    fn error_codes_are_distinct() {
        let cases = [
            ("{not json", "malformed-json"),
            (&MINIMAL.replace("[1, 0]], \"target\"", "[0, 0]], \"target\""), "duplicate-cell"),
            (&MINIMAL.replace("[[3, 3], [2, 3]]", "[[3, 3]]"), "target-size"),
            (&MINIMAL.replace("[[0, 0], [1, 0]]", "[[0, 0, 1], [1, 0, 1]]"), "dimension-mismatch"),
            (&MINIMAL.replace("[2, 3]]", "[9, 9]]"), "out-of-bounds"),
            (&MINIMAL.replace("\"tau\": 0.5", "\"tau\": -1.0"), "invalid-params"),
        ];
        for (text, code) in cases {
            let err = Scenario::from_json_str(text).unwrap_err();
            assert_eq!(err.code(), code, "{err}");
        }
    }

    #[test]
    fn floating_cube_is_ungrounded() {
        let text = r#"{"name": "float", "dim": 3, "bounds": {"min": [0, 0, 0], "max": [3, 3, 3]},
            "initial": [[0, 0, 1], [2, 2, 3]], "target": [[0, 0, 1], [1, 0, 1]],
            "params": {"tau": 0.5, "seed": 4, "max_steps": 100, "mode": "global"}}"#;
        assert_eq!(Scenario::from_json_str(text).unwrap_err().code(), "ungrounded");
        let ground = text.replace("[2, 2, 3]", "[2, 2, 0]");
        assert_eq!(Scenario::from_json_str(&ground).unwrap_err().code(), "out-of-bounds");
    }

    #[test]
    fn canonical_round_trip_is_byte_identical() {
        let s = Scenario::from_json_str(MINIMAL).unwrap();
        let canonical = s.to_json_string();
        let again = Scenario::from_json_str(&canonical).unwrap().to_json_string();
        assert_eq!(canonical, again);
        let g = generate_scenario(ScenarioKind::ThreeToThree, 7, 3).unwrap();
        let text = g.to_json_string();
        assert_eq!(Scenario::from_json_str(&text).unwrap().to_json_string(), text);
    }

    #[test]
    fn generator_is_reproducible_and_valid() {
        for kind in ScenarioKind::ALL {
            for n in [1, 10, 20] {
                let a = generate_scenario(kind, n, 1).unwrap();
                let b = generate_scenario(kind, n, 1).unwrap();
                assert_eq!(a, b);
                assert_eq!(a.agents(), n);
                assert_eq!(a.dim(), kind.lattice_dim());
                let min_init = a.initial().positions().iter().map(|c| c.x()).min().unwrap();
                let min_tgt = a.target().cells().iter().map(|c| c.x()).min().unwrap();
                assert_eq!(min_tgt - min_init, TARGET_X_OFFSET);
            }
        }
    }

    #[test]
    fn flat_shapes_in_3d_sit_on_the_bottom_layer() {
        let s = generate_scenario(ScenarioKind::TwoToThree, 12, 8).unwrap();
        assert!(s.initial().positions().iter().all(|c| c.z() == 1));
        let s = generate_scenario(ScenarioKind::ThreeToTwo, 12, 8).unwrap();
        assert!(s.target().cells().iter().all(|c| c.z() == 1));
    }

    #[test]
    fn single_agent_three_d() {
        let s = generate_scenario(ScenarioKind::ThreeToThree, 1, 5).unwrap();
        assert_eq!(s.initial().positions(), &[CellPos::xyz(0, 0, 1)]);
        assert_eq!(s.target().cells(), &[CellPos::xyz(TARGET_X_OFFSET, 0, 1)]);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("2Dto2D".parse::<ScenarioKind>().unwrap(), ScenarioKind::TwoToTwo);
        assert_eq!("3d-to-2d".parse::<ScenarioKind>().unwrap(), ScenarioKind::ThreeToTwo);
        assert!("4Dto2D".parse::<ScenarioKind>().is_err());
    }
}
