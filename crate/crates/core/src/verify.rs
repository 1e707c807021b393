//! Numerical self-checks: finite differences, midpoint convexity and the
//! projection properties. Used by the test suites and by the CLI `verify`
//! command.

use rand::Rng;

use crate::problem::{AgentSpec, FeasibleSet};

/// Central-difference step, scaled by `max(1, |x_j|)`.
pub const FD_STEP: f64 = 1e-6;

pub fn central_difference<F: Fn(&[f64]) -> f64>(f: F, x: &[f64]) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|j| {
            let h = FD_STEP * x[j].abs().max(1.0);
            probe[j] = x[j] + h;
            let up = f(&probe);
            probe[j] = x[j] - h;
            let down = f(&probe);
            probe[j] = x[j];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `||a - b||_inf / ||a||_inf`, with the denominator floored at `1e-12`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        / scale
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GradientCheck {
    pub objective: f64,
    /// Worst row of the constraint Jacobian; rows that are identically zero
    /// in both the analytic and numeric versions count as exact.
    pub constraints: f64,
}

impl GradientCheck {
    pub fn worst(&self) -> f64 {
        self.objective.max(self.constraints)
    }
}

pub fn check_agent_gradients(agent: &AgentSpec, x: &[f64]) -> GradientCheck {
    let objective = relative_error(
        &agent.objective_gradient(x),
        &central_difference(|z| agent.objective(z), x),
    );
    let jac = agent.jacobian(x);
    let constraints = (0..jac.rows())
        .map(|k| {
            let numeric = central_difference(|z| agent.contribution(z)[k], x);
            let analytic = jac.row(k);
            if analytic.iter().chain(&numeric).all(|v| *v == 0.0) {
                0.0
            } else {
                relative_error(analytic, &numeric)
            }
        })
        .fold(0.0, f64::max);
    GradientCheck {
        objective,
        constraints,
    }
}

/// `f((a+b)/2) - (f(a) + f(b))/2`; positive values violate convexity.
pub fn midpoint_gap<F: Fn(&[f64]) -> f64>(f: F, a: &[f64], b: &[f64]) -> f64 {
    let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
    f(&mid) - 0.5 * (f(a) + f(b))
}

/// Largest relative midpoint gap of the agent's cost and each constraint
/// contribution over `pairs` random feasible pairs.
pub fn worst_midpoint_gap<R: Rng + ?Sized>(agent: &AgentSpec, pairs: usize, rng: &mut R) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    let k = agent.model.num_constraints();
    for _ in 0..pairs {
        let a = agent.feasible_set.sample(rng);
        let b = agent.feasible_set.sample(rng);
        let mut record = |f: &dyn Fn(&[f64]) -> f64| {
            let scale = f(&a).abs().max(f(&b).abs()).max(1.0);
            worst = worst.max(midpoint_gap(f, &a, &b) / scale);
        };
        record(&|z| agent.objective(z));
        for c in 0..k {
            record(&|z| agent.contribution(z)[c]);
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ProjectionCheck {
    /// `||P(P(x)) - P(x)||`.
    pub idempotence: f64,
    /// `||P(x) - P(z)|| - ||x - z||`, should be `<= 0`.
    pub expansion: f64,
    /// `max_w <x - P(x), w - P(x)>` over sampled `w`, should be `<= 0`.
    pub variational: f64,
    pub feasible: bool,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn check_projection<R: Rng + ?Sized>(
    set: &FeasibleSet,
    x: &[f64],
    z: &[f64],
    samples: usize,
    rng: &mut R,
) -> crate::Result<ProjectionCheck> {
    let px = set.project(x)?;
    let ppx = set.project(&px)?;
    let pz = set.project(z)?;
    let mut variational = f64::NEG_INFINITY;
    for _ in 0..samples {
        let w = set.sample(rng);
        let ip: f64 = x
            .iter()
            .zip(&px)
            .zip(&w)
            .map(|((xi, pi), wi)| (xi - pi) * (wi - pi))
            .sum();
        variational = variational.max(ip);
    }
    Ok(ProjectionCheck {
        idempotence: dist(&px, &ppx),
        expansion: dist(&px, &pz) - dist(x, z),
        variational,
        feasible: set.contains(&px, 1e-12),
    })
}

/// KKT residual of `p = P(x)` onto `{p >= 0, sum p = target}`: every
/// positive `p_j` must share the multiplier `x_j - p_j`, and zero entries
/// must not exceed it.
pub fn simplex_kkt_residual(x: &[f64], p: &[f64], target: f64) -> f64 {
    let active: Vec<f64> = x.iter().zip(p).filter(|(_, pj)| **pj > 0.0).map(|(xj, pj)| xj - pj).collect();
    let Some(&first) = active.first() else {
        return f64::INFINITY;
    };
    let lambda = active.iter().sum::<f64>() / active.len() as f64;
    let spread = active.iter().fold(0.0f64, |m, v| m.max((v - first).abs()));
    let slack = x
        .iter()
        .zip(p)
        .filter(|(_, pj)| **pj == 0.0)
        .fold(0.0f64, |m, (xj, _)| m.max(xj - lambda));
    let sum = (p.iter().sum::<f64>() - target).abs();
    let negative = p.iter().fold(0.0f64, |m, v| m.max(-v));
    spread.max(slack).max(sum).max(negative)
}
