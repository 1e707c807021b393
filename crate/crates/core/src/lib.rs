//! Distributed constrained optimization with consensus tracking of coupled
//! constraint functions.
//!
//! Each agent owns a private decision vector, a local convex cost and a
//! compact local feasible set. Agents are coupled only through a handful of
//! global inequality constraints written as sums of per-agent contributions.
//! The solver replaces the hard constraints with a squared-hinge penalty and
//! lets every agent run a projected stochastic gradient step, using a local
//! estimate of the (average) constraint values in place of the true ones.
//! The estimates are mixed with a doubly stochastic weight matrix, so agents
//! only ever exchange constraint estimates, never decision variables.
//!
//! Module map:
//!
//! * [`problem`]: agents, feasible sets, penalized objective.
//! * [`projection`]: Euclidean projection onto boxes and simplex blocks.
//! * [`consensus`]: weight-matrix validation and the estimate update.
//! * [`optimizer`]: step schedules, noise, limiter, the main loop and traces.
//! * [`oracle`]: centralized projected-gradient reference solver.
//! * [`scenario`]: the 5G access/core delay-budget instance and a
//!   multi-domain routing instance.
//! * [`game`]: the associated state-based potential game and an empirical
//!   stationary Nash equilibrium probe.
//! * [`verify`]: finite-difference, convexity and projection property checks.
//! * [`parallel`]: sequential / rayon execution switch.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod consensus;
pub mod error;
pub mod game;
pub mod optimizer;
pub mod oracle;
pub mod parallel;
pub mod problem;
pub mod projection;
pub mod rng;
pub mod scenario;
pub mod verify;

pub use consensus::{update_estimates, WeightMatrix};
pub use error::{Error, Result};
pub use game::{AgentAction, Game, GameState, NashProbeOptions, NashReport};
pub use optimizer::{
    apply_fictitious_budgets, compute_update_direction, run, run_seeds, run_with, step,
    IterationRecord, IterationTrace, LimiterConfig, NoiseModel, RunConfig, StepSchedule,
};
pub use oracle::{solve_centralized, OracleOptions, OracleSolution};
pub use parallel::Execution;
pub use problem::{
    AgentModel, AgentSpec, ClosureModel, DecisionState, FeasibleSet, Jacobian, KpiSpec,
    ProblemSpec, SimplexBlock,
};
