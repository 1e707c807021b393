//! Centralized reference solver for the penalized problem.
//!
//! Projected gradient descent on `Phi` over the product of the local sets,
//! with a monotone Armijo backtracking search along the projection arc.
//! The first trial step of every search is the Barzilai-Borwein step of the
//! previous pair of iterates, which matters a lot at large `mu` where the
//! penalty makes the problem badly conditioned.
//!
//! Plain projected gradient still crawls once the iterate is close: links
//! that carry almost no traffic sit at the bandwidth floor with enormous
//! curvature. Every few iterations a Newton step is therefore tried on the
//! face of the feasible set the iterate currently lies on (finite-difference
//! Hessian of the exact gradient, restricted to free directions). It goes
//! through the same Armijo test, so iterates stay monotone.

use crate::error::{Error, Result};
use crate::parallel::Execution;
use crate::problem::{FeasibleSet, ProblemSpec};
use crate::rng::{self, tag};

const ARMIJO_SLOPE: f64 = 1e-4;
const SHRINK: f64 = 0.5;
const CERTIFICATE_ETA: f64 = 1e-6;
const MIN_STEP: f64 = 1e-30;
const NEWTON_EVERY: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            tol: 1e-9,
            max_iters: 200_000,
            restarts: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RestartReport {
    pub phi: f64,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct OracleSolution {
    pub y_star: Vec<Vec<f64>>,
    pub phi_star: f64,
    /// Whether the returned restart met both stopping tests.
    pub converged: bool,
    /// Projected-gradient residual at `y_star`.
    pub residual: f64,
    pub restarts: Vec<RestartReport>,
}

impl OracleSolution {
    /// Largest relative spread of `Phi` over the converged restarts.
    pub fn restart_spread(&self) -> f64 {
        let phis: Vec<f64> = self.restarts.iter().filter(|r| r.converged).map(|r| r.phi).collect();
        if phis.len() < 2 {
            return 0.0;
        }
        let lo = phis.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = phis.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (hi - lo) / lo.abs().max(1.0)
    }
}

fn norm(v: &[Vec<f64>]) -> f64 {
    v.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| x * y).sum()
}

fn sub(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect())
        .collect()
}

fn axpy(y: &[Vec<f64>], alpha: f64, d: &[Vec<f64>]) -> Vec<Vec<f64>> {
    y.iter()
        .zip(d)
        .map(|(x, g)| x.iter().zip(g).map(|(p, q)| p + alpha * q).collect())
        .collect()
}

/// `||P(y - eta grad Phi(y)) - y|| / eta` with `eta = 1e-6`.
pub fn certificate_residual(problem: &ProblemSpec, y: &[Vec<f64>], mu: f64) -> Result<f64> {
    let grad = problem.penalized_gradient(y, mu)?;
    let z = problem.project_all(&axpy(y, -CERTIFICATE_ETA, &grad))?;
    Ok(norm(&sub(&z, y)) / CERTIFICATE_ETA)
}

/// Sparse direction `(agent, [(coordinate, coefficient)])`.
type Direction = (usize, Vec<(usize, f64)>);

/// Directions spanning the face of `set` that contains `x`: free box
/// coordinates, and differences of positive coordinates within a simplex block.
fn face_directions(set: &FeasibleSet, x: &[f64], offset: usize, out: &mut Vec<Vec<(usize, f64)>>) {
    match set {
        FeasibleSet::Box { lower, upper } => {
            for j in 0..x.len() {
                if x[j] > lower[j] && x[j] < upper[j] {
                    out.push(vec![(offset + j, 1.0)]);
                }
            }
        }
        FeasibleSet::SimplexBlocks { blocks, .. } => {
            for b in blocks {
                let free: Vec<usize> = b.range.clone().filter(|&j| x[j] > 0.0).collect();
                for &j in free.iter().skip(1) {
                    out.push(vec![(offset + free[0], 1.0), (offset + j, -1.0)]);
                }
            }
        }
        FeasibleSet::Product(children) => {
            let mut start = 0;
            for c in children {
                let d = c.dim();
                face_directions(c, &x[start..start + d], offset + start, out);
                start += d;
            }
        }
    }
}

fn along(y: &[Vec<f64>], dir: &Direction, t: f64) -> Vec<Vec<f64>> {
    let mut z = y.to_vec();
    for &(j, c) in &dir.1 {
        z[dir.0][j] += t * c;
    }
    z
}

fn dir_dot(dir: &Direction, v: &[Vec<f64>]) -> f64 {
    dir.1.iter().map(|&(j, c)| c * v[dir.0][j]).sum()
}

/// Cholesky solve of `a x = b`; `None` unless `a` is positive definite.
fn cholesky_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let m = b.len();
    let mut l = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..=i {
            let s: f64 = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut z = vec![0.0; m];
    for i in 0..m {
        z[i] = (b[i] - (0..i).map(|k| l[i][k] * z[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; m];
    for i in (0..m).rev() {
        x[i] = (z[i] - (i + 1..m).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    Some(x)
}

/// One safeguarded Newton step on the current face; `None` if no descent
/// step passing the Armijo test was found.
fn newton_step(
    problem: &ProblemSpec,
    mu: f64,
    y: &[Vec<f64>],
    phi: f64,
    grad: &[Vec<f64>],
) -> Result<Option<(Vec<Vec<f64>>, f64)>> {
    let mut dirs: Vec<Direction> = Vec::new();
    for (i, agent) in problem.agents().iter().enumerate() {
        let mut local = Vec::new();
        face_directions(&agent.feasible_set, &y[i], 0, &mut local);
        dirs.extend(local.into_iter().map(|d| (i, d)));
    }
    let m = dirs.len();
    if m == 0 {
        return Ok(None);
    }
    let g_r: Vec<f64> = dirs.iter().map(|d| dir_dot(d, grad)).collect();
    let mut h = vec![vec![0.0; m]; m];
    for (b, db) in dirs.iter().enumerate() {
        let scale = db.1.iter().map(|&(j, _)| y[db.0][j].abs()).fold(1.0, f64::max);
        let step = 1e-7 * scale;
        let up = problem.penalized_gradient(&along(y, db, step), mu)?;
        let down = problem.penalized_gradient(&along(y, db, -step), mu)?;
        for (a, da) in dirs.iter().enumerate() {
            h[a][b] = (dir_dot(da, &up) - dir_dot(da, &down)) / (2.0 * step);
        }
    }
    if h.iter().flatten().any(|v| !v.is_finite()) {
        return Ok(None);
    }
    for a in 0..m {
        for b in 0..a {
            let s = 0.5 * (h[a][b] + h[b][a]);
            h[a][b] = s;
            h[b][a] = s;
        }
    }
    let rhs: Vec<f64> = g_r.iter().map(|v| -v).collect();
    let diag = (0..m).map(|a| h[a][a].abs()).fold(0.0, f64::max).max(1e-300);
    let mut shift = 0.0;
    let p = loop {
        let shifted: Vec<Vec<f64>> = (0..m)
            .map(|a| (0..m).map(|b| h[a][b] + if a == b { shift } else { 0.0 }).collect())
            .collect();
        if let Some(p) = cholesky_solve(&shifted, &rhs) {
            break p;
        }
        shift = if shift == 0.0 { 1e-10 * diag } else { shift * 100.0 };
        if shift > diag * 1e6 {
            return Ok(None);
        }
    };
    let mut delta: Vec<Vec<f64>> = y.iter().map(|v| vec![0.0; v.len()]).collect();
    for (d, pa) in dirs.iter().zip(&p) {
        for &(j, c) in &d.1 {
            delta[d.0][j] += pa * c;
        }
    }
    let mut t = 1.0;
    for _ in 0..40 {
        let z = problem.project_all(&axpy(y, t, &delta))?;
        let slope = dot(grad, &sub(&z, y));
        if slope < 0.0 {
            let phi_z = problem.evaluate_penalized_objective(&z, mu)?;
            if phi_z <= phi + ARMIJO_SLOPE * slope {
                return Ok(Some((z, phi_z)));
            }
        }
        t *= SHRINK;
    }
    Ok(None)
}

/// Single projected-gradient descent from `start`; returns the final point,
/// its value and the run report. Iterates never increase `Phi`.
pub fn descend(
    problem: &ProblemSpec,
    mu: f64,
    start: &[Vec<f64>],
    tol: f64,
    max_iters: usize,
) -> Result<(Vec<Vec<f64>>, f64, RestartReport)> {
    let mut y = problem.project_all(start)?;
    let mut phi = problem.evaluate_penalized_objective(&y, mu)?;
    let mut grad = problem.penalized_gradient(&y, mu)?;
    let gnorm = norm(&grad);
    let mut alpha = if gnorm > 0.0 { 1.0 / gnorm } else { 1.0 };
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iters {
        iterations += 1;
        let (z, phi_z) = loop {
            let z = problem.project_all(&axpy(&y, -alpha, &grad))?;
            let d = sub(&z, &y);
            let phi_z = problem.evaluate_penalized_objective(&z, mu)?;
            if phi_z <= phi + ARMIJO_SLOPE * dot(&grad, &d) {
                break (z, phi_z);
            }
            alpha *= SHRINK;
            if alpha < MIN_STEP {
                break (y.clone(), phi);
            }
        };
        if alpha < MIN_STEP {
            // Line search exhausted: nothing left to gain at this precision.
            converged = certificate_residual(problem, &y, mu)? <= 10.0 * tol;
            break;
        }
        let s = sub(&z, &y);
        let step = norm(&s);
        let grad_z = problem.penalized_gradient(&z, mu)?;
        let yk = sub(&grad_z, &grad);
        let sy = dot(&s, &yk);
        alpha = if sy > 0.0 { (dot(&s, &s) / sy).clamp(1e-12, 1e12) } else { (alpha * 2.0).min(1e12) };
        y = z;
        phi = phi_z;
        grad = grad_z;
        let mut step = step;
        if iterations % NEWTON_EVERY == 0 {
            if let Some((zn, phi_n)) = newton_step(problem, mu, &y, phi, &grad)? {
                step = norm(&sub(&zn, &y));
                y = zn;
                phi = phi_n;
                grad = problem.penalized_gradient(&y, mu)?;
            }
        }
        if step / norm(&y).max(1.0) < tol && certificate_residual(problem, &y, mu)? <= 10.0 * tol {
            converged = true;
            break;
        }
    }
    let residual = certificate_residual(problem, &y, mu)?;
    Ok((
        y,
        phi,
        RestartReport {
            phi,
            converged,
            iterations,
            residual,
        },
    ))
}

/// Best of `opts.restarts` descents from random feasible starts.
pub fn solve_centralized(
    problem: &ProblemSpec,
    mu: f64,
    opts: &OracleOptions,
    exec: Execution,
) -> Result<OracleSolution> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::param("oracle.mu", format!("must be >= 0, got {mu}")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::param("oracle.tol", format!("must be positive, got {}", opts.tol)));
    }
    if opts.restarts == 0 {
        return Err(Error::param("oracle.restarts", "must be >= 1"));
    }
    let runs = exec.map_range(opts.restarts, |r| {
        let mut rng = rng::stream(opts.seed, &[tag::ORACLE, r as u64]);
        let start = problem.sample_feasible(&mut rng);
        descend(problem, mu, &start, opts.tol, opts.max_iters)
    });
    let runs: Vec<_> = runs.into_iter().collect::<Result<_>>()?;
    // Prefer converged runs, then lowest value; ties keep the first restart.
    let best = runs
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            b.2.converged
                .cmp(&a.2.converged)
                .then(a.1.total_cmp(&b.1))
        })
        .map(|(i, _)| i)
        .expect("at least one restart");
    let restarts = runs.iter().map(|r| r.2.clone()).collect();
    let (y_star, phi_star, report) = runs.into_iter().nth(best).expect("index in range");
    Ok(OracleSolution {
        y_star,
        phi_star,
        converged: report.converged,
        residual: report.residual,
        restarts,
    })
}
