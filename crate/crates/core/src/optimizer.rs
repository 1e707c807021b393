//! The distributed penalty algorithm.
//!
//! Per round, every agent `i` (all reading the round-`t` snapshot):
//!
//! 1. draws its noise sample and forms
//!    `U_i = -grad phi_i(y_i) - mu * sum_k grad g_ik(y_i) [e_ik]_+ + V_i`;
//! 2. clamps the masked coordinates of `gamma_t U_i` to `[-bound, bound]`;
//! 3. projects `y_i + gamma_t U_i` onto its local set;
//! 4. mixes estimates with `W` and adds the change of its own contribution.
//!
//! The algorithm runs on the *fictitious* problem whose budget offsets are
//! scaled by `tau`; traces also report the true-budget constraint values.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::consensus::{update_estimates, WeightMatrix};
use crate::error::{Error, Result};
use crate::parallel::Execution;
use crate::problem::{positive_part, AgentSpec, DecisionState, ProblemSpec};
use crate::rng::{self, tag};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    /// `gamma_t = min(cap, (t + 1)^-exponent)`.
    Polynomial { cap: f64, exponent: f64 },
    Constant { gamma: f64 },
}

impl StepSchedule {
    pub fn polynomial(cap: f64, exponent: f64) -> Result<Self> {
        let s = StepSchedule::Polynomial { cap, exponent };
        s.validate()?;
        Ok(s)
    }

    /// Constant steps only give convergence to a neighbourhood of the optimum.
    pub fn constant(gamma: f64) -> Result<Self> {
        let s = StepSchedule::Constant { gamma };
        s.validate()?;
        log::warn!(
            "constant step size {gamma}: almost-sure convergence is not guaranteed, \
             iterates settle in a neighbourhood of the optimal set"
        );
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StepSchedule::Polynomial { cap, exponent } => {
                if !(cap > 0.0 && cap.is_finite()) {
                    return Err(Error::param("schedule.cap", format!("must be positive, got {cap}")));
                }
                // sum gamma = inf and sum gamma^2 < inf
                if !(exponent > 0.5 && exponent <= 1.0) {
                    return Err(Error::param(
                        "schedule.exponent",
                        format!("must lie in (0.5, 1], got {exponent}"),
                    ));
                }
                Ok(())
            }
            StepSchedule::Constant { gamma } => {
                if !(gamma > 0.0 && gamma.is_finite()) {
                    return Err(Error::param("schedule.gamma", format!("must be positive, got {gamma}")));
                }
                Ok(())
            }
        }
    }

    pub fn step_size(&self, t: u64) -> f64 {
        match *self {
            StepSchedule::Polynomial { cap, exponent } => cap.min(((t + 1) as f64).powf(-exponent)),
            StepSchedule::Constant { gamma } => gamma,
        }
    }
}

/// Zero-mean perturbation added to each agent's update direction.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    None,
    /// `V_ij ~ U[-sigma |d phi_i / d y_ij|, +sigma |d phi_i / d y_ij|]`.
    UniformGradientProportional { sigma: f64 },
    /// `V_ij ~ U[-h_ij, h_ij]`, one half-width vector per agent.
    UniformBounded { half_width: Vec<Vec<f64>> },
}

impl NoiseModel {
    pub fn validate(&self, problem: &ProblemSpec) -> Result<()> {
        match self {
            NoiseModel::None => Ok(()),
            NoiseModel::UniformGradientProportional { sigma } => {
                if !(*sigma >= 0.0 && sigma.is_finite()) {
                    return Err(Error::param("noise.sigma", format!("must be >= 0, got {sigma}")));
                }
                Ok(())
            }
            NoiseModel::UniformBounded { half_width } => {
                if half_width.len() != problem.num_agents() {
                    return Err(Error::dim("noise.half_width", problem.num_agents(), half_width.len()));
                }
                for (i, (h, a)) in half_width.iter().zip(problem.agents()).enumerate() {
                    if h.len() != a.dim() {
                        return Err(Error::dim(format!("noise.half_width[{i}]"), a.dim(), h.len()));
                    }
                    if h.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                        return Err(Error::param("noise.half_width", "entries must be finite and >= 0"));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, agent: usize, grad_phi: &[f64], rng: &mut R) -> Vec<f64> {
        let uniform = |rng: &mut R, h: f64| {
            if h == 0.0 {
                0.0
            } else {
                h * (2.0 * rng.random::<f64>() - 1.0)
            }
        };
        match self {
            NoiseModel::None => vec![0.0; grad_phi.len()],
            NoiseModel::UniformGradientProportional { sigma } => grad_phi
                .iter()
                .map(|g| uniform(rng, sigma * g.abs()))
                .collect(),
            NoiseModel::UniformBounded { half_width } => half_width[agent]
                .iter()
                .map(|&h| uniform(rng, h))
                .collect(),
        }
    }
}

/// Symmetric clamp on selected coordinates of `gamma_t U_i`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LimiterConfig {
    pub enabled: bool,
    pub mask: Vec<Vec<bool>>,
    pub bound: f64,
}

impl LimiterConfig {
    pub fn disabled() -> Self {
        LimiterConfig {
            enabled: false,
            mask: Vec::new(),
            bound: f64::INFINITY,
        }
    }

    pub fn new(mask: Vec<Vec<bool>>, bound: f64) -> Result<Self> {
        if !(bound > 0.0) {
            return Err(Error::param("limiter.bound", format!("must be positive, got {bound}")));
        }
        Ok(LimiterConfig {
            enabled: true,
            mask,
            bound,
        })
    }

    pub fn validate(&self, problem: &ProblemSpec) -> Result<()> {
        if !self.enabled {
            return Ok(());
        }
        if !(self.bound > 0.0) {
            return Err(Error::param("limiter.bound", format!("must be positive, got {}", self.bound)));
        }
        if self.mask.len() != problem.num_agents() {
            return Err(Error::dim("limiter.mask", problem.num_agents(), self.mask.len()));
        }
        for (i, (m, a)) in self.mask.iter().zip(problem.agents()).enumerate() {
            if m.len() != a.dim() {
                return Err(Error::dim(format!("limiter.mask[{i}]"), a.dim(), m.len()));
            }
        }
        Ok(())
    }

    pub fn apply(&self, agent: usize, increment: &mut [f64]) {
        if !self.enabled {
            return;
        }
        for (v, &masked) in increment.iter_mut().zip(&self.mask[agent]) {
            if masked {
                *v = v.clamp(-self.bound, self.bound);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunConfig {
    pub mu: f64,
    pub schedule: StepSchedule,
    pub noise: NoiseModel,
    pub limiter: LimiterConfig,
    /// Fictitious budget factor `tau` in `(0, 1]`.
    pub fictitious_factor: f64,
    pub iterations: u64,
    pub seed: u64,
}

impl RunConfig {
    pub fn validate(&self, problem: &ProblemSpec) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::param("run.mu", format!("must be positive, got {}", self.mu)));
        }
        check_tau(self.fictitious_factor)?;
        self.schedule.validate()?;
        self.noise.validate(problem)?;
        self.limiter.validate(problem)
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::param("run.tau", format!("must lie in (0, 1], got {tau}")));
    }
    Ok(())
}

/// Target budgets `tau * D`.
pub fn apply_fictitious_budgets(budgets: &[f64], tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    Ok(budgets.iter().map(|d| tau * d).collect())
}

/// Problem seen by the agents: every budget offset scaled by `tau`.
pub fn fictitious_problem(problem: &ProblemSpec, tau: f64) -> Result<ProblemSpec> {
    check_tau(tau)?;
    Ok(problem.with_scaled_offsets(tau))
}

fn direction_from_parts(
    grad_phi: &[f64],
    agent: &AgentSpec,
    y_i: &[f64],
    e_i: &[f64],
    mu: f64,
    noise: &[f64],
) -> Vec<f64> {
    let weights: Vec<f64> = e_i.iter().map(|&e| mu * positive_part(e)).collect();
    let penalty = agent.jacobian(y_i).weighted_row_sum(&weights);
    grad_phi
        .iter()
        .zip(&penalty)
        .zip(noise)
        .map(|((g, p), v)| -g - p + v)
        .collect()
}

/// `U_i = -grad phi_i(y_i) - mu sum_k grad g_ik(y_i) [e_ik]_+ + noise`.
pub fn compute_update_direction(
    agent: &AgentSpec,
    y_i: &[f64],
    e_i: &[f64],
    mu: f64,
    noise_sample: &[f64],
) -> Vec<f64> {
    let grad = agent.objective_gradient(y_i);
    direction_from_parts(&grad, agent, y_i, e_i, mu, noise_sample)
}

/// Per-agent noise stream for round `t`.
pub fn noise_rng(seed: u64, agent: usize, t: u64) -> ChaCha8Rng {
    rng::stream(seed, &[tag::NOISE, agent as u64, t])
}

/// Result of one round, with the limited increments `gamma_t U_i` before
/// projection kept for inspection.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: DecisionState,
    pub increments: Vec<Vec<f64>>,
}

/// One synchronous round on `problem` (the problem the agents optimize,
/// i.e. already carrying fictitious budgets if any).
pub fn step_detailed(
    problem: &ProblemSpec,
    state: &DecisionState,
    w: &WeightMatrix,
    cfg: &RunConfig,
    exec: Execution,
) -> Result<StepOutcome> {
    problem.check_point(&state.y)?;
    let n = problem.num_agents();
    if w.size() != n {
        return Err(Error::dim("weight matrix", n, w.size()));
    }
    let gamma = cfg.schedule.step_size(state.t);

    let local: Vec<Result<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)>> = exec.map_range(n, |i| {
        let agent = problem.agent(i);
        let y_i = &state.y[i];
        let grad = agent.objective_gradient(y_i);
        let mut rng = noise_rng(cfg.seed, i, state.t);
        let noise = cfg.noise.sample(i, &grad, &mut rng);
        let u = direction_from_parts(&grad, agent, y_i, &state.e[i], cfg.mu, &noise);
        let mut increment: Vec<f64> = u.iter().map(|v| gamma * v).collect();
        cfg.limiter.apply(i, &mut increment);
        let trial: Vec<f64> = y_i.iter().zip(&increment).map(|(a, b)| a + b).collect();
        let y_next = agent.feasible_set.project(&trial)?;
        let g_old = agent.contribution(y_i);
        let g_new = agent.contribution(&y_next);
        Ok((y_next, increment, g_old, g_new))
    });

    let mut y = Vec::with_capacity(n);
    let mut increments = Vec::with_capacity(n);
    let mut g_old = Vec::with_capacity(n);
    let mut g_new = Vec::with_capacity(n);
    for r in local {
        let (yi, inc, go, gn) = r?;
        y.push(yi);
        increments.push(inc);
        g_old.push(go);
        g_new.push(gn);
    }
    let e = update_estimates(w, &state.e, &g_new, &g_old)?;
    Ok(StepOutcome {
        state: DecisionState { y, e, t: state.t + 1 },
        increments,
    })
}

pub fn step(
    problem: &ProblemSpec,
    state: &DecisionState,
    w: &WeightMatrix,
    cfg: &RunConfig,
    exec: Execution,
) -> Result<DecisionState> {
    step_detailed(problem, state, w, cfg, exec).map(|o| o.state)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct IterationRecord {
    pub t: u64,
    /// Step size applied when leaving iteration `t`.
    pub gamma: f64,
    pub phi_true: f64,
    pub phi_fictitious: f64,
    pub g_true: Vec<f64>,
    /// Constraint values against the fictitious budgets, the quantity the
    /// estimates track.
    pub g_fictitious: Vec<f64>,
    pub estimates: Vec<Vec<f64>>,
    pub kpis: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct IterationTrace {
    pub constraint_labels: Vec<String>,
    pub kpi_names: Vec<String>,
    pub records: Vec<IterationRecord>,
    pub final_state: DecisionState,
}

impl IterationTrace {
    /// Mean of `phi_true` over records `t` in `from..=to` (clipped to the trace).
    pub fn mean_phi(&self, from: usize, to: usize) -> Option<f64> {
        let to = to.min(self.records.len().checked_sub(1)?);
        if from > to {
            return None;
        }
        let slice = &self.records[from..=to];
        Some(slice.iter().map(|r| r.phi_true).sum::<f64>() / slice.len() as f64)
    }

    pub fn last(&self) -> &IterationRecord {
        self.records.last().expect("trace always holds the initial record")
    }
}

fn record(
    truth: &ProblemSpec,
    alg: &ProblemSpec,
    state: &DecisionState,
    cfg: &RunConfig,
) -> Result<IterationRecord> {
    let g_true = truth.evaluate_global_constraints(&state.y)?;
    let g_fict = alg.evaluate_global_constraints(&state.y)?;
    let phi_sum = truth.objective_sum(&state.y);
    Ok(IterationRecord {
        t: state.t,
        gamma: cfg.schedule.step_size(state.t),
        phi_true: phi_sum + truth.penalty(&g_true, cfg.mu),
        phi_fictitious: phi_sum + alg.penalty(&g_fict, cfg.mu),
        g_true,
        g_fictitious: g_fict,
        estimates: state.e.clone(),
        kpis: truth.evaluate_kpis(&state.y),
    })
}

/// Runs `cfg.iterations` rounds from `initial_y` (projected if infeasible).
pub fn run(
    problem: &ProblemSpec,
    w: &WeightMatrix,
    cfg: &RunConfig,
    initial_y: &[Vec<f64>],
) -> Result<IterationTrace> {
    run_with(problem, w, cfg, initial_y, Execution::Sequential)
}

pub fn run_with(
    problem: &ProblemSpec,
    w: &WeightMatrix,
    cfg: &RunConfig,
    initial_y: &[Vec<f64>],
    exec: Execution,
) -> Result<IterationTrace> {
    cfg.validate(problem)?;
    let alg = fictitious_problem(problem, cfg.fictitious_factor)?;
    let mut state = DecisionState::initial(&alg, initial_y)?;
    let mut records = Vec::with_capacity(cfg.iterations as usize + 1);
    records.push(record(problem, &alg, &state, cfg)?);
    for _ in 0..cfg.iterations {
        state = step(&alg, &state, w, cfg, exec)?;
        records.push(record(problem, &alg, &state, cfg)?);
    }
    Ok(IterationTrace {
        constraint_labels: problem.labels().to_vec(),
        kpi_names: problem.kpis().map(|k| k.names.clone()).unwrap_or_default(),
        records,
        final_state: state,
    })
}

/// Independent runs for several seeds; `init` maps a seed to the starting
/// point. Seeds are spread over the pool, each run itself is sequential.
pub fn run_seeds<F>(
    problem: &ProblemSpec,
    w: &WeightMatrix,
    cfg: &RunConfig,
    seeds: &[u64],
    init: F,
    exec: Execution,
) -> Vec<Result<IterationTrace>>
where
    F: Fn(u64) -> Vec<Vec<f64>> + Sync + Send,
{
    exec.map(seeds, |&seed| {
        let cfg = RunConfig { seed, ..cfg.clone() };
        run(problem, w, &cfg, &init(seed))
    })
}
