#![allow(dead_code)]

use std::sync::Arc;

use rand::Rng;

use e2e_qos::scenario::fiveg::FiveGParams;
use e2e_qos::{AgentSpec, ClosureModel, FeasibleSet, Jacobian, ProblemSpec};

/// Two agents, `phi_i = (y_i - c_i)^2`, one shared constraint
/// `y_1 + y_2 <= 1` split as `g_i = y_i - 1/2`, boxes `[lo, hi]`.
pub fn toy(c: [f64; 2], lo: f64, hi: f64) -> ProblemSpec {
    let agents = (0..2)
        .map(|i| {
            let ci = c[i];
            let model = ClosureModel::new(
                1,
                1,
                move |y| (y[0] - ci).powi(2),
                move |y| vec![2.0 * (y[0] - ci)],
                |y| vec![y[0]],
                |_| Jacobian::from_rows(vec![vec![1.0]], 1).unwrap(),
            );
            AgentSpec::new(i, Arc::new(model), FeasibleSet::boxed(vec![lo], vec![hi]).unwrap(), vec![-0.5]).unwrap()
        })
        .collect();
    ProblemSpec::new(agents, 1).unwrap()
}

/// Closed-form minimizer of the toy penalized objective when the
/// constraint is violated and no box bound is active:
/// `y_i = c_i - (mu/4)(s - 1)` with `s = (c_1 + c_2 + mu/2) / (1 + mu/2)`.
pub fn toy_optimum(c: [f64; 2], mu: f64) -> ([f64; 2], f64) {
    let s = (c[0] + c[1] + mu / 2.0) / (1.0 + mu / 2.0);
    let y = [c[0] - mu / 4.0 * (s - 1.0), c[1] - mu / 4.0 * (s - 1.0)];
    let phi = (y[0] - c[0]).powi(2) + (y[1] - c[1]).powi(2) + mu / 4.0 * (s - 1.0).max(0.0).powi(2);
    (y, phi)
}

/// Interior 5G point: routing in `[0.05, 0.95]`, bandwidth in `[5, cap]`.
pub fn interior_5g<R: Rng>(params: &FiveGParams, rng: &mut R) -> Vec<Vec<f64>> {
    let mut cn = vec![0.0; 2];
    for b in &mut cn {
        *b = 5.0 + (params.cn_cap() - 5.0) * rng.random::<f64>();
    }
    let mut y = vec![cn];
    for i in 0..2 {
        let mut an = vec![0.0; 6];
        for s in 0..2 {
            let r = 0.05 + 0.9 * rng.random::<f64>();
            an[2 * s] = r;
            an[2 * s + 1] = 1.0 - r;
        }
        for l in 0..2 {
            an[4 + l] = 5.0 + (params.an_caps()[i] - 5.0) * rng.random::<f64>();
        }
        y.push(an);
    }
    y
}
