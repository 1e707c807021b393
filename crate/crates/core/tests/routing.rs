use e2e_qos::optimizer::NoiseModel;
use e2e_qos::rng;
use e2e_qos::scenario::routing::*;
use e2e_qos::*;

fn link(c: f64) -> Link {
    Link { capacity: c, upsilon: 1.0 }
}

/// Agent 0 carries class-0 traffic on links 0/1 and class-1 traffic on
/// links 0/1/2; the class-0 budget can only be met by pushing class-1
/// traffic onto link 2, away from the cost-optimal even split.
fn rerouting() -> RoutingScenario {
    RoutingScenario {
        a: 2.0,
        budgets: vec![0.3, 10.0],
        agents: vec![
            Domain {
                links: vec![link(10.0), link(10.0), link(10.0)],
                flows: vec![
                    LocalFlow { class: 0, demand: 6.0, routes: vec![vec![0], vec![1]] },
                    LocalFlow { class: 1, demand: 9.0, routes: vec![vec![0], vec![1], vec![2]] },
                ],
            },
            Domain {
                links: vec![link(10.0), link(10.0)],
                flows: vec![LocalFlow { class: 0, demand: 6.0, routes: vec![vec![0], vec![1]] }],
            },
        ],
        e2e_flows: vec![EndToEndFlow { class: 0, agents: vec![0, 1] }],
    }
}

fn noise_free(mu: f64, iterations: u64) -> RunConfig {
    RunConfig {
        mu,
        schedule: StepSchedule::polynomial(0.1, 0.6).unwrap(),
        noise: NoiseModel::None,
        limiter: LimiterConfig::disabled(),
        fictitious_factor: 1.0,
        iterations,
        seed: 0,
    }
}

fn pair() -> WeightMatrix {
    WeightMatrix::validate(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap()
}

fn skewed_start(p: &ProblemSpec) -> Vec<Vec<f64>> {
    p.agents()
        .iter()
        .map(|a| {
            let mut x = vec![0.0; a.dim()];
            x[0] = 100.0;
            a.feasible_set.project(&x).unwrap()
        })
        .collect()
}

#[test]
fn identical_parallel_routes_split_evenly() {
    let sc = RoutingScenario {
        a: 2.0,
        budgets: vec![10.0],
        agents: vec![Domain {
            links: vec![link(5.0), link(5.0)],
            flows: vec![LocalFlow { class: 0, demand: 4.0, routes: vec![vec![0], vec![1]] }],
        }],
        e2e_flows: vec![EndToEndFlow { class: 0, agents: vec![0] }],
    };
    let p = build_routing_problem(&sc).unwrap();
    let sol = solve_centralized(&p, 10.0, &OracleOptions::default(), Execution::Sequential).unwrap();
    assert!((sol.y_star[0][0] - 2.0).abs() < 1e-7 && (sol.y_star[0][1] - 2.0).abs() < 1e-7);
}

#[test]
fn hand_written_cost_and_constraints() {
    let sc = two_domain_chain(0.9);
    let p = build_routing_problem(&sc).unwrap();
    let y = vec![vec![2.5, 3.5], vec![1.0, 5.0]];
    // Agent 0: loads 2.5 / 3.5 on capacities 10 / 5; agent 1: 1 / 5 on 8 / 8.
    let d0 = [(2.5f64 / 10.0).powi(2), (3.5f64 / 5.0).powi(2)];
    let d1 = [(1.0f64 / 8.0).powi(2), (5.0f64 / 8.0).powi(2)];
    let cost = 2.5 * d0[0] + 3.5 * d0[1] + 1.0 * d1[0] + 5.0 * d1[1];
    let g = d0[0].max(d0[1]) + d1[0].max(d1[1]) - 0.9;
    assert!((p.objective_sum(&y) - cost).abs() <= 1e-12);
    let got = p.evaluate_global_constraints(&y).unwrap();
    assert!((got[0] - g).abs() <= 1e-12);
    let mu = 7.0;
    let phi = cost + mu / 4.0 * g.max(0.0).powi(2);
    assert!((p.evaluate_penalized_objective(&y, mu).unwrap() - phi).abs() <= 1e-12);
}

#[test]
fn subgradient_matches_one_sided_differences_off_ties() {
    let sc = rerouting();
    let model = domain_model(&sc, 0).unwrap();
    let p = build_routing_problem(&sc).unwrap();
    let set = &p.agent(0).feasible_set;
    let mut rng = rng::stream(21, &[]);
    let mut checked = 0;
    while checked < 100 {
        let x = set.sample(&mut rng);
        let loads = [x[0] + x[2], x[1] + x[3]];
        if (loads[0] - loads[1]).abs() < 0.1 {
            continue;
        }
        let (v, grad) = model.max_delay_contribution(0, &x);
        for j in 0..x.len() {
            let h = 1e-7 * x[j].abs().max(1.0);
            let mut up = x.clone();
            up[j] += h;
            let fd = (model.max_delay_contribution(0, &up).0 - v) / h;
            let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            assert!((fd - grad[j]).abs() <= 1e-5 * scale, "coordinate {j}: {fd} vs {}", grad[j]);
        }
        checked += 1;
    }
}

#[test]
fn distributed_run_matches_the_oracle_on_the_chain() {
    let p = build_routing_problem(&two_domain_chain(1.0)).unwrap();
    let sol = solve_centralized(&p, 100.0, &OracleOptions::default(), Execution::Sequential).unwrap();
    assert!(sol.converged);
    let trace = run(&p, &pair(), &noise_free(100.0, 10_000), &skewed_start(&p)).unwrap();
    let rel = (trace.last().phi_true - sol.phi_star).abs() / sol.phi_star;
    assert!(rel <= 1e-3, "relative gap {rel}");
}

#[test]
fn tight_budget_forces_rerouting() {
    let sc = rerouting();
    let p = build_routing_problem(&sc).unwrap();
    // Without the budget, all three agent-0 links carry 5 and agent 1 splits
    // 3 / 3: the end-to-end delay would be 0.25 + 0.09 = 0.34 > 0.3.
    let free = vec![vec![2.5, 2.5, 2.5, 2.5, 5.0], vec![3.0, 3.0]];
    assert!(p.evaluate_global_constraints(&free).unwrap()[0] > 0.02);
    let trace = run(&p, &pair(), &noise_free(1e3, 10_000), &skewed_start(&p)).unwrap();
    let last = trace.last();
    assert!(last.g_true[0] <= 0.02, "e2e excess {}", last.g_true[0]);
    assert!(trace.final_state.y[0][4] > 5.0, "class-1 traffic on link 2: {}", trace.final_state.y[0][4]);
}

#[test]
fn demand_is_conserved_and_ties_stay_stable() {
    let p = build_routing_problem(&rerouting()).unwrap();
    let w = pair();
    // Same penalty as the chain comparison; at 1e3 the first rounds
    // overshoot while the estimates catch up (Phi peaks near 19 from 10.8)
    // before settling.
    let cfg = noise_free(100.0, 0);
    // Even split: links 0 and 1 tie exactly.
    let y0 = vec![vec![3.0, 3.0, 3.0, 3.0, 3.0], vec![3.0, 3.0]];
    let mut state = DecisionState::initial(&p, &y0).unwrap();
    let phi0 = p.evaluate_penalized_objective(&state.y, cfg.mu).unwrap();
    for _ in 0..10_000 {
        state = step(&p, &state, &w, &cfg, Execution::Sequential).unwrap();
        let y = &state.y;
        assert!((y[0][0] + y[0][1] - 6.0).abs() <= 1e-12);
        assert!((y[0][2] + y[0][3] + y[0][4] - 9.0).abs() <= 1e-12);
        assert!((y[1][0] + y[1][1] - 6.0).abs() <= 1e-12);
        let phi = p.evaluate_penalized_objective(y, cfg.mu).unwrap();
        assert!(phi <= phi0 + 1.0, "phi {phi} vs initial {phi0}");
    }
}
