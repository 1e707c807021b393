//! State-based potential game associated with the penalized problem.
//!
//! State `x = (y, e)`. An action of agent `i` changes its decision by `dy_i`
//! and forwards estimate mass `f_{i->j}` to neighbours `j`. Transition:
//!
//! ```text
//! y'_i = y_i + dy_i
//! e'_i = e_i + g_i(y'_i) - g_i(y_i) + sum_j f_{j->i} - sum_j f_{i->j}
//! ```
//!
//! Nodal cost `J_i = phi_i(y'_i) + mu/2 sum_{j in {i} u N_i} ||[e'_j]_+||^2`
//! and potential `Phi_mu = sum_i phi_i(y'_i) + mu/2 sum_i ||[e'_i]_+||^2`.
//! With every `e_i = g(y)/N` the potential equals the penalized objective
//! with the same `mu`.

use rand::Rng;

use crate::consensus::WeightMatrix;
use crate::error::{Error, Result};
use crate::parallel::Execution;
use crate::problem::{positive_part, ProblemSpec};
use crate::rng::{self, tag};

const ADMISSIBLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct GameState {
    pub y: Vec<Vec<f64>>,
    pub e: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentAction {
    pub y_delta: Vec<f64>,
    /// `(j, f_{i->j})` pairs; `j` must be a neighbour of `i`.
    pub e_forward: Vec<(usize, Vec<f64>)>,
}

impl AgentAction {
    pub fn null(dim: usize) -> Self {
        AgentAction {
            y_delta: vec![0.0; dim],
            e_forward: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Game {
    pub problem: ProblemSpec,
    pub w: WeightMatrix,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NashProbeOptions {
    pub epsilon: f64,
    pub probes: usize,
    pub radius: f64,
    /// Per-component bound on forwarded estimates; defaults to `radius`.
    pub transfer_cap: Option<f64>,
    pub seed: u64,
}

impl Default for NashProbeOptions {
    fn default() -> Self {
        NashProbeOptions {
            epsilon: 1e-6,
            probes: 1000,
            radius: 1e-3,
            transfer_cap: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct AgentProbeReport {
    pub agent: usize,
    pub baseline_cost: f64,
    pub violations: usize,
    /// Largest `J_i(x, 0) - J_i(x, probe)` seen; positive means improvement.
    pub worst_improvement: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct NashReport {
    pub epsilon: f64,
    pub radius: f64,
    pub transfer_cap: f64,
    pub probes_per_agent: usize,
    pub agents: Vec<AgentProbeReport>,
    /// Probing is local: a clean report is evidence, not a proof.
    pub scope: String,
}

impl NashReport {
    pub fn is_equilibrium(&self) -> bool {
        self.agents.iter().all(|a| a.violations == 0)
    }
}

fn hinge_sq(e: &[f64]) -> f64 {
    e.iter().map(|&v| positive_part(v).powi(2)).sum()
}

impl Game {
    pub fn new(problem: ProblemSpec, w: WeightMatrix, mu: f64) -> Result<Self> {
        if w.size() != problem.num_agents() {
            return Err(Error::dim("weight matrix", problem.num_agents(), w.size()));
        }
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::param("game.mu", format!("must be >= 0, got {mu}")));
        }
        Ok(Game { problem, w, mu })
    }

    /// `x = (y, g(y)/N)` with every estimate at the exact average.
    pub fn consensus_state(&self, y: &[Vec<f64>]) -> Result<GameState> {
        let g = self.problem.evaluate_global_constraints(y)?;
        let n = self.problem.num_agents() as f64;
        let avg: Vec<f64> = g.iter().map(|v| v / n).collect();
        Ok(GameState {
            y: y.to_vec(),
            e: vec![avg; self.problem.num_agents()],
        })
    }

    pub fn null_profile(&self) -> Vec<AgentAction> {
        self.problem.agents().iter().map(|a| AgentAction::null(a.dim())).collect()
    }

    pub fn transition(&self, state: &GameState, actions: &[AgentAction]) -> Result<GameState> {
        let n = self.problem.num_agents();
        let k = self.problem.num_constraints();
        self.problem.check_point(&state.y)?;
        if actions.len() != n {
            return Err(Error::dim("action profile", n, actions.len()));
        }
        if state.e.len() != n || state.e.iter().any(|e| e.len() != k) {
            return Err(Error::dim("estimate list", n, state.e.len()));
        }
        let mut y = Vec::with_capacity(n);
        let mut e = state.e.clone();
        for (i, (agent, act)) in self.problem.agents().iter().zip(actions).enumerate() {
            let inadmissible = |reason: String| Error::InadmissibleAction { agent: i, reason };
            if act.y_delta.len() != agent.dim() {
                return Err(inadmissible(format!(
                    "decision change has length {}, expected {}",
                    act.y_delta.len(),
                    agent.dim()
                )));
            }
            let next: Vec<f64> = state.y[i].iter().zip(&act.y_delta).map(|(a, b)| a + b).collect();
            if !agent.feasible_set.contains(&next, ADMISSIBLE_TOL) {
                return Err(inadmissible("decision leaves the local feasible set".into()));
            }
            let g_old = agent.contribution(&state.y[i]);
            let g_new = agent.contribution(&next);
            for ((acc, a), b) in e[i].iter_mut().zip(&g_new).zip(&g_old) {
                *acc += a - b;
            }
            y.push(next);
        }
        for (i, act) in actions.iter().enumerate() {
            for (j, amount) in &act.e_forward {
                let j = *j;
                if j >= n || j == i || self.w.get(i, j) <= 0.0 {
                    return Err(Error::InadmissibleAction {
                        agent: i,
                        reason: format!("agent {j} is not a neighbour"),
                    });
                }
                if amount.len() != k {
                    return Err(Error::InadmissibleAction {
                        agent: i,
                        reason: format!("forwarded estimate has length {}, expected {k}", amount.len()),
                    });
                }
                for c in 0..k {
                    e[i][c] -= amount[c];
                    e[j][c] += amount[c];
                }
            }
        }
        Ok(GameState { y, e })
    }

    fn nodal_cost_of(&self, next: &GameState, i: usize) -> f64 {
        let penalty: f64 = (0..self.problem.num_agents())
            .filter(|&j| j == i || self.w.get(i, j) > 0.0)
            .map(|j| hinge_sq(&next.e[j]))
            .sum();
        self.problem.agent(i).objective(&next.y[i]) + 0.5 * self.mu * penalty
    }

    fn potential_of(&self, next: &GameState) -> f64 {
        let phi = self.problem.objective_sum(&next.y);
        phi + 0.5 * self.mu * next.e.iter().map(|e| hinge_sq(e)).sum::<f64>()
    }

    pub fn nodal_cost(&self, state: &GameState, actions: &[AgentAction], i: usize) -> Result<f64> {
        if i >= self.problem.num_agents() {
            return Err(Error::param("agent", format!("index {i} out of range")));
        }
        Ok(self.nodal_cost_of(&self.transition(state, actions)?, i))
    }

    pub fn potential(&self, state: &GameState, actions: &[AgentAction]) -> Result<f64> {
        Ok(self.potential_of(&self.transition(state, actions)?))
    }

    fn random_probe(&self, state: &GameState, i: usize, radius: f64, cap: f64, p: usize, seed: u64) -> Result<AgentAction> {
        let mut rng = rng::stream(seed, &[tag::PROBE, i as u64, p as u64]);
        let agent = self.problem.agent(i);
        let dir: Vec<f64> = (0..agent.dim()).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = if norm > 0.0 { radius * rng.random::<f64>() / norm } else { 0.0 };
        let trial: Vec<f64> = state.y[i].iter().zip(&dir).map(|(y, d)| y + scale * d).collect();
        let target = agent.feasible_set.project(&trial)?;
        let y_delta = target.iter().zip(&state.y[i]).map(|(a, b)| a - b).collect();
        let k = self.problem.num_constraints();
        let e_forward = self
            .w
            .neighbors(i)
            .map(|j| (j, (0..k).map(|_| cap * (2.0 * rng.random::<f64>() - 1.0)).collect()))
            .collect();
        Ok(AgentAction { y_delta, e_forward })
    }

    /// Probes random admissible unilateral deviations at `x = (y, g(y)/N)`
    /// and counts those lowering the deviator's nodal cost by more than
    /// `epsilon`.
    pub fn verify_stationary_nash(
        &self,
        y: &[Vec<f64>],
        opts: &NashProbeOptions,
        exec: Execution,
    ) -> Result<NashReport> {
        if !(opts.radius >= 0.0) || !(opts.epsilon >= 0.0) {
            return Err(Error::param("probe", "radius and epsilon must be >= 0"));
        }
        let cap = opts.transfer_cap.unwrap_or(opts.radius);
        let state = self.consensus_state(y)?;
        let null = self.null_profile();
        let mut agents = Vec::with_capacity(self.problem.num_agents());
        for i in 0..self.problem.num_agents() {
            let baseline = self.nodal_cost(&state, &null, i)?;
            let costs = exec.map_range(opts.probes, |p| -> Result<f64> {
                let mut profile = null.clone();
                profile[i] = self.random_probe(&state, i, opts.radius, cap, p, opts.seed)?;
                self.nodal_cost(&state, &profile, i)
            });
            let mut violations = 0;
            let mut worst = f64::NEG_INFINITY;
            for c in costs {
                let improvement = baseline - c?;
                worst = worst.max(improvement);
                if improvement > opts.epsilon {
                    violations += 1;
                }
            }
            agents.push(AgentProbeReport {
                agent: i,
                baseline_cost: baseline,
                violations,
                worst_improvement: if opts.probes == 0 { 0.0 } else { worst },
            });
        }
        Ok(NashReport {
            epsilon: opts.epsilon,
            radius: opts.radius,
            transfer_cap: cap,
            probes_per_agent: opts.probes,
            agents,
            scope: format!(
                "local probes only: decision changes within radius {} and estimate transfers within {} per component",
                opts.radius, cap
            ),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{AgentSpec, ClosureModel, FeasibleSet, Jacobian};
    use std::sync::Arc;

    /// Agents with `phi = y^2`, `g_i = y - 1` on `[-3, 3]`.
    fn toy(n: usize) -> Game {
        let agents = (0..n)
            .map(|i| {
                let model = ClosureModel::new(
                    1,
                    1,
                    |y| y[0] * y[0],
                    |y| vec![2.0 * y[0]],
                    |y| vec![y[0]],
                    |_| Jacobian::from_rows(vec![vec![1.0]], 1).unwrap(),
                );
                AgentSpec::new(i, Arc::new(model), FeasibleSet::boxed(vec![-3.0], vec![3.0]).unwrap(), vec![-1.0]).unwrap()
            })
            .collect();
        let problem = ProblemSpec::new(agents, 1).unwrap();
        let w = WeightMatrix::validate(&[
            vec![0.5, 0.5, 0.0],
            vec![0.5, 0.0, 0.5],
            vec![0.0, 0.5, 0.5],
        ])
        .unwrap();
        Game::new(problem, w, 4.0).unwrap()
    }

    fn state() -> GameState {
        GameState {
            y: vec![vec![1.0], vec![2.0], vec![-1.0]],
            e: vec![vec![0.5], vec![-0.25], vec![2.0]],
        }
    }

    #[test]
    fn null_profile_is_a_fixed_point() {
        let g = toy(3);
        let s = state();
        assert_eq!(g.transition(&s, &g.null_profile()).unwrap(), s);
    }

    #[test]
    fn single_transfer_moves_mass() {
        let g = toy(3);
        let mut acts = g.null_profile();
        acts[0].e_forward.push((1, vec![0.3]));
        let next = g.transition(&state(), &acts).unwrap();
        assert!((next.e[0][0] - 0.2).abs() < 1e-15);
        assert!((next.e[1][0] - 0.05).abs() < 1e-15);
        assert_eq!(next.e[2], vec![2.0]);
    }

    #[test]
    fn transfers_only_to_neighbours() {
        let g = toy(3);
        let mut acts = g.null_profile();
        acts[0].e_forward.push((2, vec![0.3]));
        assert!(matches!(g.transition(&state(), &acts), Err(Error::InadmissibleAction { agent: 0, .. })));
        let mut acts = g.null_profile();
        acts[1].y_delta = vec![5.0];
        assert!(matches!(g.transition(&state(), &acts), Err(Error::InadmissibleAction { agent: 1, .. })));
    }

    #[test]
    fn nodal_cost_without_violation_is_local_cost() {
        let g = toy(3);
        let s = GameState {
            y: vec![vec![0.5], vec![-1.0], vec![0.0]],
            e: vec![vec![-1.0]; 3],
        };
        let j = g.nodal_cost(&s, &g.null_profile(), 0).unwrap();
        assert_eq!(j, 0.25);
    }

    #[test]
    fn nodal_cost_ignores_non_neighbours() {
        let g = toy(3);
        let mut s = state();
        let before = g.nodal_cost(&s, &g.null_profile(), 0).unwrap();
        s.e[2] = vec![100.0];
        let after = g.nodal_cost(&s, &g.null_profile(), 0).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn potential_matches_penalized_objective_at_consensus() {
        let g = toy(3);
        let y = vec![vec![1.5], vec![0.7], vec![2.0]];
        let s = g.consensus_state(&y).unwrap();
        let pot = g.potential(&s, &g.null_profile()).unwrap();
        let phi = g.problem.evaluate_penalized_objective(&y, g.mu).unwrap();
        assert!((pot - phi).abs() < 1e-12 * phi.abs().max(1.0));
    }

    #[test]
    fn zero_radius_probes_find_nothing() {
        let g = toy(3);
        let y = vec![vec![2.5], vec![-2.0], vec![1.0]];
        let opts = NashProbeOptions {
            radius: 0.0,
            probes: 50,
            ..NashProbeOptions::default()
        };
        let report = g.verify_stationary_nash(&y, &opts, Execution::Sequential).unwrap();
        assert!(report.is_equilibrium());
        assert!(report.agents.iter().all(|a| a.worst_improvement == 0.0));
    }

    #[test]
    fn probes_detect_a_non_optimal_point() {
        let g = toy(3);
        let y = vec![vec![2.5], vec![-2.0], vec![1.0]];
        let report = g.verify_stationary_nash(&y, &NashProbeOptions::default(), Execution::Sequential).unwrap();
        assert!(!report.is_equilibrium());
    }
}
