//! Metropolis-Hastings learning over configurations.
//!
//! A transition picks an agent `k`, proposes one of its restricted moves
//! uniformly (`q_fwd = 1/|R_k(x)|`), and accepts with
//!
//! ```text
//! α = min{1, (q_rev / q_fwd) · exp((Φ(x') − Φ(x)) / τ)}
//! ```
//!
//! where `q_rev = 1/|R_k(x')|` is the probability of proposing the way back.
//! The stationary law of the induced chain is the Gibbs distribution
//! `∝ exp(Φ/τ)`.
//!
//! The global rule evaluates `Φ` over the whole configuration. The local rule
//! uses only the active agent's own utility change and action-set sizes;
//! because the game is an exact potential game both rules produce the same
//! `α` bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{
    dist_to_target, restricted_action_set, ExactPotential, PotentialDelta, RestrictedActionSet,
    TargetConfiguration, Utility,
};
use crate::lattice::{AgentId, CellPos, Configuration, EnvBounds};
use crate::scenario::Scenario;

/// Seedable, portable generator used by every stochastic routine.
pub type EngineRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> EngineRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Global,
    Local,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "global" => Ok(Mode::Global),
            "local" => Ok(Mode::Local),
            other => Err(Error::domain(format!("unknown mode {other:?} (expected global|local)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningParams {
    pub tau: f64,
    pub seed: u64,
    pub max_steps: u64,
    pub mode: Mode,
}

impl Default for LearningParams {
    fn default() -> Self {
        LearningParams { tau: 0.001, seed: 0, max_steps: 1_000_000, mode: Mode::Global }
    }
}

impl LearningParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Temperature(self.tau));
        }
        Ok(())
    }
}

/// A proposed single-agent move with its Metropolis-Hastings quantities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Proposal {
    pub agent: AgentId,
    pub from: CellPos,
    pub to: CellPos,
    /// `1 / |R_k(x)|`
    pub q_fwd: f64,
    /// `1 / |R_k(x')|`, evaluated in the post-move configuration.
    pub q_rev: f64,
    pub delta_phi: f64,
    pub accept_prob: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Proposed {
    Move(Proposal),
    /// The chosen agent has no move; the chain stays put.
    SelfLoop { agent: AgentId },
}

/// `min{1, (q_rev/q_fwd) · exp(delta_phi/tau)}`. The exponent is clipped to
/// `±700` so it never overflows.
pub fn acceptance_probability(delta_phi: f64, q_fwd: f64, q_rev: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Temperature(tau));
    }
    if !(q_fwd > 0.0 && q_fwd <= 1.0 && q_rev > 0.0 && q_rev <= 1.0) {
        return Err(Error::domain(format!(
            "proposal probabilities must lie in (0, 1], got {q_fwd} and {q_rev}"
        )));
    }
    let exponent = (delta_phi / tau).clamp(-700.0, 700.0);
    let alpha = (q_rev / q_fwd) * exponent.exp();
    Ok(if alpha >= 1.0 { 1.0 } else { alpha.max(0.0) })
}

fn reverse_set(
    config: &Configuration,
    agent: AgentId,
    to: CellPos,
    bounds: &EnvBounds,
) -> Result<(Configuration, RestrictedActionSet)> {
    let next = config.with_move(agent, to)?;
    let rev = restricted_action_set(agent, &next, bounds)?;
    if !rev.is_mobile() {
        return Err(Error::domain(format!(
            "move of agent {agent} to {to} cannot be reversed; the configuration is invalid"
        )));
    }
    Ok((next, rev))
}

/// Global rule: the acceptance uses `Φ(x') − Φ(x)` recomputed over the whole
/// configuration. Also returns the exact post-move potential.
pub fn evaluate_global(
    config: &Configuration,
    forward: &RestrictedActionSet,
    to: CellPos,
    bounds: &EnvBounds,
    target: &TargetConfiguration,
    tau: f64,
) -> Result<(Proposal, ExactPotential)> {
    let agent = forward.agent;
    if !forward.contains_move(&to) {
        return Err(Error::domain(format!("{to} is not in the action set of agent {agent}")));
    }
    let (next, rev) = reverse_set(config, agent, to, bounds)?;
    let before = ExactPotential::of(config, target)?;
    let after = ExactPotential::of(&next, target)?;
    let delta_phi = before.delta_to(&after).to_f64();
    let q_fwd = 1.0 / forward.len() as f64;
    let q_rev = 1.0 / rev.len() as f64;
    let accept_prob = acceptance_probability(delta_phi, q_fwd, q_rev, tau)?;
    Ok((
        Proposal { agent, from: forward.origin, to, q_fwd, q_rev, delta_phi, accept_prob },
        after,
    ))
}

/// Local rule: the acceptance uses only `U_k(a') − U_k(a)` and the sizes
/// `|R_k|`, `|R_k'|` of the active agent's own action sets.
pub fn evaluate_local(
    config: &Configuration,
    forward: &RestrictedActionSet,
    to: CellPos,
    bounds: &EnvBounds,
    target: &TargetConfiguration,
    tau: f64,
) -> Result<Proposal> {
    let agent = forward.agent;
    if !forward.contains_move(&to) {
        return Err(Error::domain(format!("{to} is not in the action set of agent {agent}")));
    }
    let (_, rev) = reverse_set(config, agent, to, bounds)?;
    let here = Utility { distance: dist_to_target(&forward.origin, target)? };
    let there = Utility { distance: dist_to_target(&to, target)? };
    let delta_u = PotentialDelta::unilateral(here, there).to_f64();
    let (size_here, size_there) = (forward.len(), rev.len());
    let accept_prob =
        acceptance_probability(delta_u, 1.0 / size_here as f64, 1.0 / size_there as f64, tau)?;
    Ok(Proposal {
        agent,
        from: forward.origin,
        to,
        q_fwd: 1.0 / size_here as f64,
        q_rev: 1.0 / size_there as f64,
        delta_phi: delta_u,
        accept_prob,
    })
}

/// Picks an agent uniformly, then one of its moves uniformly.
pub fn propose<R: Rng>(
    config: &Configuration,
    target: &TargetConfiguration,
    bounds: &EnvBounds,
    tau: f64,
    rng: &mut R,
) -> Result<Proposed> {
    let agent = rng.random_range(0..config.len());
    propose_for(agent, config, target, bounds, tau, rng, false)
}

fn propose_for<R: Rng>(
    agent: AgentId,
    config: &Configuration,
    target: &TargetConfiguration,
    bounds: &EnvBounds,
    tau: f64,
    rng: &mut R,
    local: bool,
) -> Result<Proposed> {
    let forward = restricted_action_set(agent, config, bounds)?;
    if !forward.is_mobile() {
        return Ok(Proposed::SelfLoop { agent });
    }
    let to = forward.moves[rng.random_range(0..forward.len())];
    let proposal = if local {
        evaluate_local(config, &forward, to, bounds, target, tau)?
    } else {
        evaluate_global(config, &forward, to, bounds, target, tau)?.0
    };
    Ok(Proposed::Move(proposal))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    /// 1-based index of the transition.
    pub step: u64,
    pub agent: AgentId,
    pub proposal: Option<Proposal>,
    pub accepted: bool,
    pub potential_after: f64,
}

/// Runs one chain. The state is only changed through accepted moves.
pub struct Engine<'s> {
    scenario: &'s Scenario,
    params: LearningParams,
    state: Configuration,
    potential: ExactPotential,
    rng: EngineRng,
    steps: u64,
}

impl<'s> Engine<'s> {
    pub fn new(scenario: &'s Scenario, params: LearningParams) -> Result<Self> {
        params.validate()?;
        let state = scenario.initial().clone();
        let potential = ExactPotential::of(&state, scenario.target())?;
        Ok(Engine { scenario, params, state, potential, rng: seeded_rng(params.seed), steps: 0 })
    }

    pub fn state(&self) -> &Configuration {
        &self.state
    }

    pub fn potential(&self) -> &ExactPotential {
        &self.potential
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn is_converged(&self) -> bool {
        self.potential.is_maximal()
    }

    /// One transition with the agent chosen by the engine, following the
    /// configured mode.
    pub fn tick(&mut self) -> Result<StepRecord> {
        match self.params.mode {
            Mode::Global => self.step(),
            Mode::Local => {
                // Superposed unit-rate clocks: the next tick belongs to a
                // uniformly random agent.
                let agent = self.rng.random_range(0..self.state.len());
                self.step_local(agent)
            }
        }
    }

    /// Global rule transition.
    pub fn step(&mut self) -> Result<StepRecord> {
        let proposed = propose(
            &self.state,
            self.scenario.target(),
            self.scenario.bounds(),
            self.params.tau,
            &mut self.rng,
        )?;
        self.finish(proposed)
    }

    /// Local rule transition of an agent whose clock ticked.
    pub fn step_local(&mut self, agent: AgentId) -> Result<StepRecord> {
        self.state.position(agent)?;
        let proposed = propose_for(
            agent,
            &self.state,
            self.scenario.target(),
            self.scenario.bounds(),
            self.params.tau,
            &mut self.rng,
            true,
        )?;
        self.finish(proposed)
    }

    fn finish(&mut self, proposed: Proposed) -> Result<StepRecord> {
        self.steps += 1;
        let (agent, proposal, accepted) = match proposed {
            Proposed::SelfLoop { agent } => (agent, None, false),
            Proposed::Move(p) => {
                let accepted = p.accept_prob >= 1.0 || self.rng.random::<f64>() < p.accept_prob;
                if accepted {
                    let target = self.scenario.target();
                    let delta = PotentialDelta::unilateral(
                        Utility { distance: dist_to_target(&p.from, target)? },
                        Utility { distance: dist_to_target(&p.to, target)? },
                    );
                    self.state.move_agent(p.agent, p.to)?;
                    self.potential.apply(&delta);
                }
                (p.agent, Some(p), accepted)
            }
        };
        Ok(StepRecord {
            step: self.steps,
            agent,
            proposal,
            accepted,
            potential_after: self.potential.value(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub steps: u64,
    pub converged_at: Option<u64>,
    pub initial_potential: f64,
    pub final_potential: f64,
    pub final_state: Configuration,
}

/// Runs until `Φ = N` or the step budget is spent, handing every record and
/// the post-step state to `observer`.
pub fn run_observed<F>(scenario: &Scenario, params: &LearningParams, mut observer: F) -> Result<RunOutcome>
where
    F: FnMut(&StepRecord, &Configuration),
{
    let mut engine = Engine::new(scenario, *params)?;
    let initial_potential = engine.potential().value();
    let mut converged_at = engine.is_converged().then_some(0);
    while converged_at.is_none() && engine.steps() < params.max_steps {
        let record = engine.tick()?;
        observer(&record, engine.state());
        if record.accepted && engine.is_converged() {
            converged_at = Some(record.step);
        }
    }
    Ok(RunOutcome {
        steps: engine.steps(),
        converged_at,
        initial_potential,
        final_potential: engine.potential().value(),
        final_state: engine.state().clone(),
    })
}

/// Full per-step record of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub scenario_name: String,
    pub params: LearningParams,
    pub records: Vec<StepRecord>,
    pub outcome: RunOutcome,
}

impl Trace {
    pub fn converged_at(&self) -> Option<u64> {
        self.outcome.converged_at
    }
}

pub fn run(scenario: &Scenario, params: &LearningParams) -> Result<Trace> {
    let mut records = Vec::new();
    let outcome = run_observed(scenario, params, |r, _| records.push(*r))?;
    Ok(Trace { scenario_name: scenario.name().to_string(), params: *params, records, outcome })
}
