//! Exact Markov-chain view of the learning rule on tiny instances.
//!
//! Enumerates every labeled placement, builds the dense transition matrix
//! the global rule induces, and compares its stationary vector with the
//! Gibbs distribution `∝ exp(Φ/τ)`.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::game::{restricted_action_set, ExactPotential, TargetConfiguration};
use crate::lattice::{is_configuration_grounded, CellPos, Configuration, Dim, EnvBounds};
use crate::learning::evaluate_global;

pub const DEFAULT_STATE_CAP: usize = 20_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("state space would hold about {estimate} states, above the cap of {cap}")]
    TooLarge { estimate: u128, cap: usize },
    #[error("chain is reducible: {}", format_pairs(.pairs))]
    Reducible { pairs: Vec<(usize, usize)> },
    #[error("power iteration stalled with residual {residual:e}")]
    NotConverged { residual: f64 },
    #[error("{0}")]
    Model(String),
}

fn format_pairs(pairs: &[(usize, usize)]) -> String {
    let shown: Vec<String> = pairs.iter().take(8).map(|(a, b)| format!("{a} -/-> {b}")).collect();
    format!("{}{}", shown.join(", "), if pairs.len() > 8 { ", ..." } else { "" })
}

impl From<crate::error::Error> for OracleError {
    fn from(e: crate::error::Error) -> Self {
        OracleError::Model(e.to_string())
    }
}

/// All labeled placements of `N` agents on the agent cells (grounded ones
/// only in 3D), in lexicographic order of the cell index tuples.
#[derive(Clone, Debug)]
pub struct StateSpace {
    states: Vec<Configuration>,
    index: HashMap<Configuration, usize>,
}

impl StateSpace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Configuration] {
        &self.states
    }

    pub fn index_of(&self, config: &Configuration) -> Option<usize> {
        self.index.get(config).copied()
    }
}

fn falling_factorial(n: usize, k: usize) -> u128 {
    (0..k).map(|i| n.saturating_sub(i) as u128).product()
}

pub fn enumerate_states(n_agents: usize, bounds: &EnvBounds, cap: usize) -> Result<StateSpace, OracleError> {
    let cells = bounds.agent_cells();
    let estimate = falling_factorial(cells.len(), n_agents);
    if n_agents == 0 || n_agents > cells.len() || estimate > cap as u128 {
        if estimate > cap as u128 {
            return Err(OracleError::TooLarge { estimate, cap });
        }
        return Err(OracleError::Model(format!("{n_agents} agents do not fit {} cells", cells.len())));
    }
    let dim = bounds.dim();
    let mut states = Vec::new();
    let mut chosen: Vec<usize> = Vec::with_capacity(n_agents);
    let mut used = vec![false; cells.len()];
    fn rec(
        cells: &[CellPos],
        k: usize,
        dim: Dim,
        bounds: &EnvBounds,
        chosen: &mut Vec<usize>,
        used: &mut [bool],
        out: &mut Vec<Configuration>,
    ) -> Result<(), OracleError> {
        if chosen.len() == k {
            let config = Configuration::new(dim, chosen.iter().map(|&i| cells[i]).collect())?;
            if dim == Dim::Two || is_configuration_grounded(&config, bounds)? {
                out.push(config);
            }
            return Ok(());
        }
        for i in 0..cells.len() {
            if !used[i] {
                used[i] = true;
                chosen.push(i);
                rec(cells, k, dim, bounds, chosen, used, out)?;
                chosen.pop();
                used[i] = false;
            }
        }
        Ok(())
    }
    rec(&cells, n_agents, dim, bounds, &mut chosen, &mut used, &mut states)?;
    let index = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    Ok(StateSpace { states, index })
}

/// Dense row-stochastic matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    n: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    /// Wraps a square row-major matrix; rows must be stochastic.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, OracleError> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(OracleError::Model(format!("row {i} has {} entries, expected {n}", row.len())));
            }
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| *p < 0.0) || (sum - 1.0).abs() > 1e-12 {
                return Err(OracleError::Model(format!("row {i} is not stochastic (sum {sum})")));
            }
            data.extend(row);
        }
        Ok(TransitionMatrix { n, data })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    /// `v P`
    pub fn left_multiply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(self.row(i)) {
                *o += vi * p;
            }
        }
        out
    }
}

/// Transition matrix of the global learning rule: agent with probability
/// `1/N`, move with probability `1/|R|`, acceptance `α`; the diagonal takes
/// the remaining mass.
pub fn exact_transition_matrix(
    space: &StateSpace,
    target: &TargetConfiguration,
    bounds: &EnvBounds,
    tau: f64,
) -> Result<TransitionMatrix, OracleError> {
    let n = space.len();
    let mut data = vec![0.0; n * n];
    for (i, state) in space.states().iter().enumerate() {
        let agents = state.len() as f64;
        let row = &mut data[i * n..(i + 1) * n];
        for agent in 0..state.len() {
            let forward = restricted_action_set(agent, state, bounds)?;
            for &to in &forward.moves {
                let (proposal, _) = evaluate_global(state, &forward, to, bounds, target, tau)?;
                let next = state.with_move(agent, to)?;
                let j = space
                    .index_of(&next)
                    .ok_or_else(|| OracleError::Model(format!("move from state {i} leaves the state space")))?;
                row[j] += proposal.q_fwd / agents * proposal.accept_prob;
            }
        }
        let off: f64 = row.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, p)| *p).sum();
        row[i] = 1.0 - off;
    }
    Ok(TransitionMatrix { n, data })
}

fn reachable(m: &TransitionMatrix, from: usize, forward: bool) -> Vec<bool> {
    let mut seen = vec![false; m.size()];
    seen[from] = true;
    let mut stack = vec![from];
    while let Some(v) = stack.pop() {
        for (w, flag) in seen.iter_mut().enumerate() {
            let p = if forward { m.get(v, w) } else { m.get(w, v) };
            if p > 0.0 && !*flag {
                *flag = true;
                stack.push(w);
            }
        }
    }
    seen
}

/// Pairs `(i, j)` with `j` unreachable from `i`, relative to state 0. Empty
/// when the nonzero pattern is strongly connected.
pub fn unreachable_pairs(m: &TransitionMatrix) -> Vec<(usize, usize)> {
    if m.size() == 0 {
        return Vec::new();
    }
    let fwd = reachable(m, 0, true);
    let bwd = reachable(m, 0, false);
    let mut pairs: Vec<(usize, usize)> = (0..m.size()).filter(|&j| !fwd[j]).map(|j| (0, j)).collect();
    pairs.extend((0..m.size()).filter(|&i| !bwd[i]).map(|i| (i, 0)));
    pairs
}

/// Unique stationary vector of an irreducible chain, by power iteration on
/// the lazy chain `(P + I) / 2` from the uniform vector.
pub fn stationary_distribution(m: &TransitionMatrix) -> Result<Vec<f64>, OracleError> {
    let pairs = unreachable_pairs(m);
    if !pairs.is_empty() {
        return Err(OracleError::Reducible { pairs });
    }
    let n = m.size();
    let mut pi = vec![1.0 / n as f64; n];
    const MAX_ITERS: usize = 2_000_000;
    for _ in 0..MAX_ITERS {
        let moved = m.left_multiply(&pi);
        let mut next: Vec<f64> = pi.iter().zip(&moved).map(|(a, b)| 0.5 * (a + b)).collect();
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|p| *p /= total);
        let change = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        pi = next;
        if change < 1e-15 {
            break;
        }
    }
    let residual = stationary_residual(m, &pi);
    if residual > 1e-10 {
        return Err(OracleError::NotConverged { residual });
    }
    Ok(pi)
}

/// `‖πP − π‖∞`
pub fn stationary_residual(m: &TransitionMatrix, pi: &[f64]) -> f64 {
    m.left_multiply(pi).iter().zip(pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// `exp(Φ/τ)` normalised, with the maximum potential shifted out.
pub fn gibbs_distribution(space: &StateSpace, target: &TargetConfiguration, tau: f64) -> Result<Vec<f64>, OracleError> {
    let phis: Vec<f64> = space
        .states()
        .iter()
        .map(|s| ExactPotential::of(s, target).map(|p| p.value()))
        .collect::<Result<_, _>>()?;
    Ok(softmax(&phis, tau))
}

pub(crate) fn softmax(phis: &[f64], tau: f64) -> Vec<f64> {
    let top = phis.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = phis.iter().map(|p| ((p - top) / tau).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// `max |π_i p_ij − π_j p_ji|` over all pairs.
pub fn detailed_balance_residual(m: &TransitionMatrix, pi: &[f64]) -> f64 {
    let n = m.size();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max((pi[i] * m.get(i, j) - pi[j] * m.get(j, i)).abs());
        }
    }
    worst
}

pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Everything the oracle computed, for offline inspection.
#[derive(Clone, Debug, Serialize)]
pub struct OracleDump {
    pub tau: f64,
    pub states: Vec<Vec<Vec<i64>>>,
    pub matrix: Vec<Vec<f64>>,
    pub pi_exact: Vec<f64>,
    pub pi_gibbs: Vec<f64>,
}

impl OracleDump {
    pub fn new(space: &StateSpace, m: &TransitionMatrix, pi_exact: Vec<f64>, pi_gibbs: Vec<f64>, tau: f64) -> Self {
        let states = space
            .states()
            .iter()
            .map(|s| s.positions().iter().map(|p| p.coords(s.dim())).collect())
            .collect();
        OracleDump { tau, states, matrix: m.rows(), pi_exact, pi_gibbs }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: u32) -> EnvBounds {
        EnvBounds::grid_2d(n, 1).unwrap()
    }

    fn target_at(x: i32) -> TargetConfiguration {
        TargetConfiguration::new(Dim::Two, vec![CellPos::xy(x, 0)]).unwrap()
    }

    #[test]
    fn state_counts() {
        assert_eq!(enumerate_states(1, &line(3), DEFAULT_STATE_CAP).unwrap().len(), 3);
        assert_eq!(enumerate_states(2, &EnvBounds::grid_2d(2, 2).unwrap(), DEFAULT_STATE_CAP).unwrap().len(), 12);
        assert_eq!(enumerate_states(2, &EnvBounds::grid_2d(3, 3).unwrap(), DEFAULT_STATE_CAP).unwrap().len(), 72);
        let err = enumerate_states(4, &EnvBounds::grid_2d(6, 6).unwrap(), DEFAULT_STATE_CAP).unwrap_err();
        assert!(matches!(err, OracleError::TooLarge { estimate: 1_413_720, .. }));
    }

    #[test]
    fn three_d_space_is_grounded_only() {
        let b = EnvBounds::grid_3d(2, 1, 2).unwrap();
        let space = enumerate_states(1, &b, DEFAULT_STATE_CAP).unwrap();
        // Only the two bottom cells are grounded for a lone cube.
        assert_eq!(space.len(), 2);
    }

    #[test]
    fn two_cell_chain_in_closed_form() {
        let space = enumerate_states(1, &line(2), DEFAULT_STATE_CAP).unwrap();
        let m = exact_transition_matrix(&space, &target_at(0), &line(2), 1.0).unwrap();
        // Each cell has exactly one move, so q_fwd = q_rev = 1.
        let down = (-0.5f64).exp();
        assert!((m.get(0, 1) - down).abs() < 1e-15);
        assert!((m.get(0, 0) - (1.0 - down)).abs() < 1e-15);
        assert_eq!(m.get(1, 0), 1.0);
        assert_eq!(m.get(1, 1), 0.0);

        let pi = stationary_distribution(&m).unwrap();
        let gibbs = gibbs_distribution(&space, &target_at(0), 1.0).unwrap();
        let e1 = 1.0f64.exp();
        let e05 = 0.5f64.exp();
        let closed = [e1 / (e1 + e05), e05 / (e1 + e05)];
        assert!((closed[0] - 0.6225).abs() < 1e-4);
        assert!(sup_distance(&gibbs, &closed) < 1e-15);
        assert!(sup_distance(&pi, &closed) < 1e-12);
    }

    #[test]
    fn identity_is_reducible() {
        let m = TransitionMatrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        match stationary_distribution(&m) {
            Err(OracleError::Reducible { pairs }) => assert_eq!(pairs, vec![(0, 1), (1, 0)]),
            other => panic!("expected reducible, got {other:?}"),
        }
    }

    #[test]
    fn symmetric_two_state_chain() {
        let m = TransitionMatrix::from_rows(vec![vec![0.7, 0.3], vec![0.3, 0.7]]).unwrap();
        let pi = stationary_distribution(&m).unwrap();
        assert!(sup_distance(&pi, &[0.5, 0.5]) < 1e-14);
    }

    #[test]
    fn blocked_state_gets_identity_row() {
        // Two agents filling a 1x2 strip: nobody can move.
        let b = line(2);
        let space = enumerate_states(2, &b, DEFAULT_STATE_CAP).unwrap();
        let t = TargetConfiguration::new(Dim::Two, vec![CellPos::xy(0, 0), CellPos::xy(1, 0)]).unwrap();
        let m = exact_transition_matrix(&space, &t, &b, 1.0).unwrap();
        assert_eq!(m.rows(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn rows_are_stochastic_and_gibbs_balances() {
        let b = EnvBounds::grid_2d(3, 2).unwrap();
        let t = TargetConfiguration::new(Dim::Two, vec![CellPos::xy(0, 0), CellPos::xy(2, 1)]).unwrap();
        let space = enumerate_states(2, &b, DEFAULT_STATE_CAP).unwrap();
        let m = exact_transition_matrix(&space, &t, &b, 0.7).unwrap();
        for i in 0..m.size() {
            let s: f64 = m.row(i).iter().sum();
            assert!((s - 1.0).abs() <= 1e-12);
            assert!(m.row(i).iter().all(|p| *p >= 0.0));
        }
        let gibbs = gibbs_distribution(&space, &t, 0.7).unwrap();
        assert!(detailed_balance_residual(&m, &gibbs) <= 1e-12);
        let pi = stationary_distribution(&m).unwrap();
        assert!(sup_distance(&pi, &gibbs) <= 1e-8);
    }

    #[test]
    fn uniform_gibbs_when_potentials_tie() {
        let p = softmax(&[0.3, 0.3, 0.3], 0.01);
        assert!(p.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
        let cold = softmax(&[1.0, 0.5], 1e-3);
        assert_eq!(cold[0], 1.0);
        assert!(cold[1] > 0.0 && cold[1] < 1e-200);
    }
}
