//! Self-reconfiguration of lattice cube modules as a potential game, with a
//! Metropolis-Hastings learning rule, a constructive planner and an exact
//! Markov-chain oracle for tiny instances.

pub mod error;
pub mod game;
pub mod harness;
pub mod lattice;
pub mod learning;
pub mod oracle;
pub mod planner;
pub mod scenario;

pub use error::{Error, Result};
pub use game::{
    dist_to_target, potential, restricted_action_set, utility, ExactPotential, PotentialDelta, RestrictedActionSet,
    TargetConfiguration, Utility,
};
pub use harness::{run_experiment, run_oracle_check, sweep, ExperimentOutput, MetricsSummary, OracleReport};
pub use lattice::{AgentId, CellPos, Configuration, Dim, EnvBounds, Motion, MotionKind};
pub use learning::{acceptance_probability, run, Engine, LearningParams, Mode, Proposal, StepRecord, Trace};
pub use planner::{plan, MotionPlan, PlanError, PlanStep};
pub use scenario::{generate_scenario, Scenario, ScenarioError, ScenarioKind};
