//! Invariant checks shared by the `verify` command and the acceptance
//! harness. Each check reports the measured worst case next to its
//! tolerance.

use e2e_qos::optimizer::fictitious_problem;
use e2e_qos::rng;
use e2e_qos::verify::{check_agent_gradients, check_projection, simplex_kkt_residual};
use e2e_qos::{
    solve_centralized, Execution, FeasibleSet, Game, IterationTrace, NashProbeOptions, NashReport,
    OracleSolution, ProblemSpec,
};
use rand::Rng;
use serde::Serialize;

const VERIFY: u64 = 0x766572696679;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    /// Passes when `measured <= tolerance`.
    pub fn at_most(name: impl Into<String>, measured: f64, tolerance: f64, detail: impl Into<String>) -> Check {
        Check {
            name: name.into(),
            measured,
            tolerance,
            passed: measured <= tolerance,
            detail: detail.into(),
        }
    }

    pub fn flag(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Check {
        Check {
            name: name.into(),
            measured: if passed { 0.0 } else { 1.0 },
            tolerance: 0.0,
            passed,
            detail: detail.into(),
        }
    }
}

/// Worst `|mean_i e_ik - g_k / N|` over every record, with `g` the
/// constraint values the estimates track.
pub fn mean_preservation_error(trace: &IterationTrace) -> f64 {
    let mut worst = 0.0f64;
    for r in &trace.records {
        let n = r.estimates.len() as f64;
        for (k, g) in r.g_fictitious.iter().enumerate() {
            let mean = r.estimates.iter().map(|e| e[k]).sum::<f64>() / n;
            worst = worst.max((mean - g / n).abs());
        }
    }
    worst
}

/// Largest relative finite-difference error of cost and constraint
/// gradients over `points` random feasible points per agent.
pub fn gradient_error(problem: &ProblemSpec, points: usize, seed: u64) -> f64 {
    let mut worst = 0.0f64;
    for (i, agent) in problem.agents().iter().enumerate() {
        let mut r = rng::stream(seed, &[VERIFY, 1, i as u64]);
        for _ in 0..points {
            let x = agent.feasible_set.sample(&mut r);
            worst = worst.max(check_agent_gradients(agent, &x).worst());
        }
    }
    worst
}

fn simplex_blocks(set: &FeasibleSet, offset: usize, out: &mut Vec<(std::ops::Range<usize>, f64)>) {
    match set {
        FeasibleSet::Box { .. } => {}
        FeasibleSet::SimplexBlocks { blocks, .. } => {
            out.extend(blocks.iter().map(|b| (b.range.start + offset..b.range.end + offset, b.target)));
        }
        FeasibleSet::Product(children) => {
            let mut at = offset;
            for c in children {
                simplex_blocks(c, at, out);
                at += c.dim();
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct ProjectionWorst {
    pub idempotence: f64,
    pub expansion: f64,
    pub variational: f64,
    pub simplex_kkt: f64,
    pub infeasible: usize,
}

/// Projection properties for every agent's set at `points` random outside
/// points, perturbed on the scale of the set.
pub fn projection_worst(problem: &ProblemSpec, points: usize, seed: u64) -> e2e_qos::Result<ProjectionWorst> {
    let mut w = ProjectionWorst::default();
    for (i, agent) in problem.agents().iter().enumerate() {
        let set = &agent.feasible_set;
        let mut blocks = Vec::new();
        simplex_blocks(set, 0, &mut blocks);
        let mut r = rng::stream(seed, &[VERIFY, 2, i as u64]);
        for _ in 0..points {
            let a = set.sample(&mut r);
            let b = set.sample(&mut r);
            let spread = |base: &[f64], r: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
                base.iter()
                    .map(|v| v + (v.abs().max(1.0)) * 4.0 * (r.random::<f64>() - 0.5))
                    .collect()
            };
            let x = spread(&a, &mut r);
            let z = spread(&b, &mut r);
            let c = check_projection(set, &x, &z, 20, &mut r)?;
            // Inner products scale with the squared size of the set.
            let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            w.idempotence = w.idempotence.max(c.idempotence);
            w.expansion = w.expansion.max(c.expansion);
            w.variational = w.variational.max(c.variational / (scale * scale));
            if !c.feasible {
                w.infeasible += 1;
            }
            let px = set.project(&x)?;
            for (range, target) in &blocks {
                w.simplex_kkt = w
                    .simplex_kkt
                    .max(simplex_kkt_residual(&x[range.clone()], &px[range.clone()], *target) / target.max(1.0));
            }
        }
    }
    Ok(w)
}

pub fn projection_checks(problem: &ProblemSpec, points: usize, seed: u64) -> e2e_qos::Result<Vec<Check>> {
    let p = projection_worst(problem, points, seed)?;
    let tol = 1e-9;
    Ok(vec![
        Check::at_most("projection idempotence", p.idempotence, tol, ""),
        Check::at_most("projection nonexpansive", p.expansion, tol, "||P(x)-P(z)|| - ||x-z||"),
        Check::at_most("projection variational inequality", p.variational, tol, "relative to the point scale"),
        Check::at_most("simplex projection KKT", p.simplex_kkt, tol, ""),
        Check::flag("projection lands in the set", p.infeasible == 0, format!("{} misses", p.infeasible)),
    ])
}

#[derive(Debug, Clone, Serialize)]
pub struct NashCheck {
    pub at_optimum: NashReport,
    pub perturbed: NashReport,
}

/// Probes `y_star` and a point a tenth of the way towards a random feasible
/// point, which should not be an equilibrium.
pub fn nash_probe(
    problem: &ProblemSpec,
    w: &e2e_qos::WeightMatrix,
    game_mu: f64,
    y_star: &[Vec<f64>],
    opts: &NashProbeOptions,
    exec: Execution,
) -> e2e_qos::Result<NashCheck> {
    let game = Game::new(problem.clone(), w.clone(), game_mu)?;
    let at_optimum = game.verify_stationary_nash(y_star, opts, exec)?;
    let mut r = rng::stream(opts.seed, &[VERIFY, 3]);
    let other = problem.sample_feasible(&mut r);
    let shifted: Vec<Vec<f64>> = y_star
        .iter()
        .zip(&other)
        .map(|(a, b)| a.iter().zip(b).map(|(x, z)| x + 0.1 * (z - x)).collect())
        .collect();
    let perturbed = game.verify_stationary_nash(&shifted, opts, exec)?;
    Ok(NashCheck { at_optimum, perturbed })
}

pub fn nash_checks(n: &NashCheck) -> Vec<Check> {
    let worst = |r: &NashReport| r.agents.iter().map(|a| a.worst_improvement).fold(f64::NEG_INFINITY, f64::max);
    let violations = |r: &NashReport| r.agents.iter().map(|a| a.violations).sum::<usize>();
    vec![
        Check::at_most(
            "no profitable probe at the optimum",
            worst(&n.at_optimum),
            n.at_optimum.epsilon,
            format!("{} violations", violations(&n.at_optimum)),
        ),
        Check::flag(
            "probe finds a deviation off the optimum",
            !n.perturbed.is_equilibrium(),
            format!("{} violations", violations(&n.perturbed)),
        ),
    ]
}

pub struct SuiteInputs<'a> {
    pub problem: &'a ProblemSpec,
    pub trace: &'a IterationTrace,
    pub tau: f64,
    pub points: usize,
    pub seed: u64,
}

/// Mean preservation, gradients (of the true and the fictitious problem,
/// which differ only in constants) and projections.
pub fn identity_checks(inp: &SuiteInputs) -> e2e_qos::Result<Vec<Check>> {
    let alg = fictitious_problem(inp.problem, inp.tau)?;
    let mut checks = vec![Check::at_most(
        "estimate mean preservation",
        mean_preservation_error(inp.trace),
        1e-9,
        format!("{} rounds", inp.trace.records.len() - 1),
    )];
    checks.push(Check::at_most(
        "finite-difference gradients",
        gradient_error(&alg, inp.points, inp.seed),
        1e-5,
        format!("{} points per agent", inp.points),
    ));
    checks.extend(projection_checks(inp.problem, inp.points, inp.seed)?);
    Ok(checks)
}

pub fn oracle(problem: &ProblemSpec, mu: f64, opts: &e2e_qos::OracleOptions, exec: Execution) -> e2e_qos::Result<OracleSolution> {
    solve_centralized(problem, mu, opts, exec)
}
