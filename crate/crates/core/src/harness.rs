//! Experiment orchestration: runs with trace and curve files, oracle checks
//! and parameter sweeps.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::game::TargetConfiguration;
use crate::lattice::{CellPos, Dim, EnvBounds};
use crate::learning::{run_observed, LearningParams, StepRecord};
use crate::oracle::{
    detailed_balance_residual, enumerate_states, exact_transition_matrix, gibbs_distribution,
    stationary_distribution, sup_distance, OracleDump, OracleError, StateSpace, TransitionMatrix,
    DEFAULT_STATE_CAP,
};
use crate::scenario::{generate_scenario, Scenario, ScenarioError, ScenarioKind};

/// Curve samples are kept for every step up to this index, then every
/// [`CURVE_STRIDE`]th step.
pub const CURVE_DENSE_STEPS: u64 = 10_000;
pub const CURVE_STRIDE: u64 = 100;

pub const ORACLE_SUP_TOLERANCE: f64 = 1e-8;
pub const ORACLE_BALANCE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Model(#[from] crate::error::Error),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("bad bounds {0:?}: expected WxH or WxDxL with positive sizes")]
    Bounds(String),
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsSummary {
    pub converged: bool,
    pub steps_to_converge: Option<u64>,
    pub steps: u64,
    pub final_potential: f64,
    pub potential_curve: Vec<(u64, f64)>,
}

fn keep_sample(step: u64) -> bool {
    step <= CURVE_DENSE_STEPS || step.is_multiple_of(CURVE_STRIDE)
}

#[derive(Serialize)]
struct ProposalOut {
    from: Vec<i64>,
    to: Vec<i64>,
    q_fwd: f64,
    q_rev: f64,
    delta_phi: f64,
    accept_prob: f64,
}

#[derive(Serialize)]
struct RecordOut {
    step: u64,
    agent: usize,
    proposal: Option<ProposalOut>,
    accepted: bool,
    potential_after: f64,
}

impl RecordOut {
    fn new(r: &StepRecord, dim: Dim) -> Self {
        RecordOut {
            step: r.step,
            agent: r.agent,
            proposal: r.proposal.map(|p| ProposalOut {
                from: p.from.coords(dim),
                to: p.to.coords(dim),
                q_fwd: p.q_fwd,
                q_rev: p.q_rev,
                delta_phi: p.delta_phi,
                accept_prob: p.accept_prob,
            }),
            accepted: r.accepted,
            potential_after: r.potential_after,
        }
    }
}

#[derive(Serialize)]
struct TraceFile<'a> {
    scenario: &'a str,
    params: LearningParams,
    /// `"accepted"` or `"all"`
    records_kept: &'static str,
    steps: u64,
    converged_at: Option<u64>,
    initial_potential: f64,
    final_potential: f64,
    final_state: Vec<Vec<i64>>,
    records: Vec<RecordOut>,
}

#[derive(Clone, Debug, Default)]
pub struct ExperimentOutput {
    /// Directory for `trace.json`, `curve.csv` and `summary.json`.
    pub dir: Option<PathBuf>,
    /// Keep every step in the trace instead of accepted moves only.
    pub full_trace: bool,
}

/// Runs the learning rule and returns its summary, writing files when an
/// output directory is given.
pub fn run_experiment(scenario: &Scenario, params: &LearningParams, output: &ExperimentOutput) -> Result<MetricsSummary> {
    let dim = scenario.dim();
    let want_records = output.dir.is_some();
    let mut records = Vec::new();
    let mut curve = Vec::new();
    let outcome = run_observed(scenario, params, |r, _| {
        if keep_sample(r.step) {
            curve.push((r.step, r.potential_after));
        }
        if want_records && (output.full_trace || r.accepted) {
            records.push(RecordOut::new(r, dim));
        }
    })?;
    curve.insert(0, (0, outcome.initial_potential));
    if curve.last().map(|(s, _)| *s) != Some(outcome.steps) {
        curve.push((outcome.steps, outcome.final_potential));
    }
    let summary = MetricsSummary {
        converged: outcome.converged_at.is_some(),
        steps_to_converge: outcome.converged_at,
        steps: outcome.steps,
        final_potential: outcome.final_potential,
        potential_curve: curve,
    };

    if let Some(dir) = &output.dir {
        fs::create_dir_all(dir)?;
        let trace = TraceFile {
            scenario: scenario.name(),
            params: *params,
            records_kept: if output.full_trace { "all" } else { "accepted" },
            steps: outcome.steps,
            converged_at: outcome.converged_at,
            initial_potential: outcome.initial_potential,
            final_potential: outcome.final_potential,
            final_state: outcome.final_state.positions().iter().map(|p| p.coords(dim)).collect(),
            records,
        };
        let mut w = BufWriter::new(fs::File::create(dir.join("trace.json"))?);
        serde_json::to_writer(&mut w, &trace)?;
        w.write_all(b"\n")?;
        w.flush()?;
        write_curve(&dir.join("curve.csv"), &summary.potential_curve)?;
        let brief = serde_json::json!({
            "scenario": scenario.name(),
            "converged": summary.converged,
            "steps_to_converge": summary.steps_to_converge,
            "steps": summary.steps,
            "final_potential": summary.final_potential,
        });
        fs::write(dir.join("summary.json"), format!("{}\n", serde_json::to_string_pretty(&brief)?))?;
    }
    Ok(summary)
}

fn write_curve(path: &Path, curve: &[(u64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "potential"])?;
    for (step, phi) in curve {
        w.write_record([step.to_string(), phi.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Result of comparing the exact stationary law with the Gibbs law.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleReport {
    pub pass: bool,
    pub n_states: usize,
    pub tau: f64,
    pub sup_deviation: Option<f64>,
    pub db_residual: Option<f64>,
    pub failure: Option<String>,
}

/// Target used by oracle checks: the first `n` cells of the bottom layer in
/// lexicographic order.
pub fn oracle_target(n_agents: usize, bounds: &EnvBounds) -> Result<TargetConfiguration> {
    let bottom = match bounds.dim() {
        Dim::Two => bounds.min().z(),
        Dim::Three => 1,
    };
    let cells: Vec<CellPos> = bounds.agent_cells().into_iter().filter(|c| c.z() == bottom).take(n_agents).collect();
    if cells.len() < n_agents {
        return Err(OracleError::Model(format!("bottom layer cannot hold {n_agents} target cells")).into());
    }
    Ok(TargetConfiguration::new(bounds.dim(), cells)?)
}

/// Compares the stationary vector of `matrix` with `gibbs`.
pub fn oracle_report(matrix: &TransitionMatrix, gibbs: &[f64], tau: f64) -> OracleReport {
    let n_states = matrix.size();
    match stationary_distribution(matrix) {
        Ok(pi) => {
            let sup = sup_distance(&pi, gibbs);
            let db = detailed_balance_residual(matrix, gibbs);
            let pass = sup <= ORACLE_SUP_TOLERANCE && db <= ORACLE_BALANCE_TOLERANCE;
            let failure = (!pass).then(|| format!("sup deviation {sup:e}, detailed-balance residual {db:e}"));
            OracleReport { pass, n_states, tau, sup_deviation: Some(sup), db_residual: Some(db), failure }
        }
        Err(e) => OracleReport {
            pass: false,
            n_states,
            tau,
            sup_deviation: None,
            db_residual: None,
            failure: Some(e.to_string()),
        },
    }
}

pub struct OracleRun {
    pub report: OracleReport,
    pub space: StateSpace,
    pub matrix: TransitionMatrix,
    pub gibbs: Vec<f64>,
}

impl OracleRun {
    pub fn dump(&self) -> Result<OracleDump> {
        let pi = stationary_distribution(&self.matrix)?;
        Ok(OracleDump::new(&self.space, &self.matrix, pi, self.gibbs.clone(), self.report.tau))
    }
}

pub fn run_oracle_check(n_agents: usize, bounds: &EnvBounds, tau: f64) -> Result<OracleRun> {
    let space = enumerate_states(n_agents, bounds, DEFAULT_STATE_CAP)?;
    let target = oracle_target(n_agents, bounds)?;
    let matrix = exact_transition_matrix(&space, &target, bounds, tau)?;
    let gibbs = gibbs_distribution(&space, &target, tau)?;
    let report = oracle_report(&matrix, &gibbs, tau);
    Ok(OracleRun { report, space, matrix, gibbs })
}

/// `"WxH"` for a planar grid, `"WxDxL"` for `L` agent layers above the
/// ground plane.
pub fn parse_bounds(text: &str) -> Result<EnvBounds> {
    let bad = || HarnessError::Bounds(text.to_string());
    let parts: Vec<u32> = text
        .split(['x', 'X'])
        .map(|p| p.trim().parse::<u32>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    if parts.contains(&0) {
        return Err(bad());
    }
    match parts[..] {
        [w, h] => Ok(EnvBounds::grid_2d(w, h)?),
        [w, d, l] => Ok(EnvBounds::grid_3d(w, d, l)?),
        _ => Err(bad()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub kind: String,
    pub n_agents: usize,
    pub seed: u64,
    pub converged: bool,
    /// Steps to convergence, or the spent budget otherwise.
    pub steps: u64,
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub kinds: Vec<ScenarioKind>,
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub tau: f64,
    pub max_steps: u64,
    pub mode: crate::learning::Mode,
}

/// Runs every (kind, size, seed) cell in parallel. Rows come back in grid
/// order. With `out_dir`, each cell writes into its own subdirectory and the
/// summary goes to `sweep.csv`.
pub fn sweep(spec: &SweepSpec, out_dir: Option<&Path>) -> Result<Vec<SweepRow>> {
    let cells: Vec<(ScenarioKind, usize, u64)> = spec
        .kinds
        .iter()
        .flat_map(|&k| spec.sizes.iter().flat_map(move |&n| spec.seeds.iter().map(move |&s| (k, n, s))))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(kind, n, seed)| {
            let scenario = generate_scenario(kind, n, seed)?;
            let params = LearningParams { tau: spec.tau, seed, max_steps: spec.max_steps, mode: spec.mode };
            let output = ExperimentOutput {
                dir: out_dir.map(|d| d.join(format!("{}_n{}_s{}", kind.label(), n, seed))),
                full_trace: false,
            };
            let summary = run_experiment(&scenario, &params, &output)?;
            Ok(SweepRow {
                kind: kind.label().to_string(),
                n_agents: n,
                seed,
                converged: summary.converged,
                steps: summary.steps_to_converge.unwrap_or(summary.steps),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        write_sweep_csv(&dir.join("sweep.csv"), &rows)?;
    }
    Ok(rows)
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
