use std::sync::Arc;

use e2e_qos::game::{AgentAction, Game, GameState, NashProbeOptions};
use e2e_qos::rng;
use e2e_qos::scenario::fiveg::{self, FiveGParams};
use e2e_qos::*;
use proptest::prelude::*;

/// Three agents on a path 0 - 1 - 2 with two quadratic-cost coordinates each
/// and two linear constraints.
fn path_game(mu: f64) -> Game {
    let coeffs = [[1.0, -0.5], [0.3, 0.8], [-0.7, 0.2]];
    let agents = (0..3)
        .map(|i| {
            let a = coeffs[i];
            let model = ClosureModel::new(
                2,
                2,
                move |y| (y[0] - a[0]).powi(2) + 2.0 * (y[1] - a[1]).powi(2),
                move |y| vec![2.0 * (y[0] - a[0]), 4.0 * (y[1] - a[1])],
                move |y| vec![y[0] + a[1] * y[1], y[1] - a[0] * y[0]],
                move |_| Jacobian::from_rows(vec![vec![1.0, a[1]], vec![-a[0], 1.0]], 2).unwrap(),
            );
            AgentSpec::new(i, Arc::new(model), FeasibleSet::boxed(vec![-2.0; 2], vec![2.0; 2]).unwrap(), vec![-0.3, 0.1])
                .unwrap()
        })
        .collect();
    let problem = ProblemSpec::new(agents, 2).unwrap();
    let w = WeightMatrix::validate(&[
        vec![0.6, 0.4, 0.0],
        vec![0.4, 0.2, 0.4],
        vec![0.0, 0.4, 0.6],
    ])
    .unwrap();
    Game::new(problem, w, mu).unwrap()
}

fn coord() -> impl Strategy<Value = f64> {
    -1.5f64..1.5
}

fn small() -> impl Strategy<Value = f64> {
    -0.4f64..0.4
}

fn action(i: usize, dy: [f64; 2], fwd: [f64; 2], game: &Game) -> AgentAction {
    AgentAction {
        y_delta: dy.to_vec(),
        e_forward: game.w.neighbors(i).map(|j| (j, fwd.to_vec())).collect(),
    }
}

proptest! {
    #[test]
    fn unilateral_changes_move_cost_and_potential_equally(
        y in prop::collection::vec(prop::collection::vec(coord(), 2), 3),
        e in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 3),
        profile in prop::collection::vec((small(), small(), small(), small()), 3),
        deviation in (small(), small(), small(), small()),
        i in 0usize..3,
    ) {
        let game = path_game(5.0);
        let state = GameState { y, e };
        let base: Vec<AgentAction> = profile
            .iter()
            .enumerate()
            .map(|(j, p)| action(j, [p.0, p.1], [p.2, p.3], &game))
            .collect();
        let mut changed = base.clone();
        changed[i] = action(i, [deviation.0, deviation.1], [deviation.2, deviation.3], &game);
        let dj = game.nodal_cost(&state, &changed, i).unwrap() - game.nodal_cost(&state, &base, i).unwrap();
        let dphi = game.potential(&state, &changed).unwrap() - game.potential(&state, &base).unwrap();
        prop_assert!((dj - dphi).abs() <= 1e-9, "dJ {} vs dPhi {}", dj, dphi);
    }

    #[test]
    fn estimate_minus_contribution_sum_is_conserved(
        y in prop::collection::vec(prop::collection::vec(coord(), 2), 3),
        e in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 3),
        profile in prop::collection::vec((small(), small(), small(), small()), 3),
    ) {
        let game = path_game(5.0);
        let state = GameState { y, e };
        let acts: Vec<AgentAction> = profile
            .iter()
            .enumerate()
            .map(|(j, p)| action(j, [p.0, p.1], [p.2, p.3], &game))
            .collect();
        let next = game.transition(&state, &acts).unwrap();
        let p = &game.problem;
        let before = p.evaluate_global_constraints(&state.y).unwrap();
        let after = p.evaluate_global_constraints(&next.y).unwrap();
        for k in 0..2 {
            let s0: f64 = state.e.iter().map(|v| v[k]).sum::<f64>() - before[k];
            let s1: f64 = next.e.iter().map(|v| v[k]).sum::<f64>() - after[k];
            prop_assert!((s0 - s1).abs() <= 1e-12);
        }
    }
}

#[test]
fn potential_at_consensus_equals_the_penalized_objective_on_5g() {
    let problem = fiveg::build_problem(&FiveGParams::default()).unwrap();
    let mut r = rng::stream(31, &[]);
    let game = Game::new(problem.clone(), fiveg::default_weight_matrix(), 2e4).unwrap();
    for _ in 0..20 {
        let y = problem.sample_feasible(&mut r);
        let state = game.consensus_state(&y).unwrap();
        let pot = game.potential(&state, &game.null_profile()).unwrap();
        let phi = problem.evaluate_penalized_objective(&y, 2e4).unwrap();
        assert!((pot - phi).abs() <= 1e-9 * phi.abs(), "{pot} vs {phi}");
    }
}

#[test]
fn oracle_optimum_is_a_probed_stationary_equilibrium() {
    let problem = fiveg::build_problem(&FiveGParams::default()).unwrap();
    let sol = solve_centralized(&problem, 2e4, &OracleOptions::default(), Execution::Parallel).unwrap();
    let game = Game::new(problem, fiveg::default_weight_matrix(), 2e4).unwrap();
    let report = game.verify_stationary_nash(&sol.y_star, &NashProbeOptions::default(), Execution::Parallel).unwrap();
    assert!(report.is_equilibrium(), "{report:?}");

    // Negative control: shift CN bandwidths off the optimum.
    let mut y = sol.y_star.clone();
    y[0][0] *= 1.2;
    y[0][1] *= 0.9;
    let report = game.verify_stationary_nash(&y, &NashProbeOptions::default(), Execution::Parallel).unwrap();
    assert!(!report.is_equilibrium());
    assert!(report.agents[0].violations > 0);
}
