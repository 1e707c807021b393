//! Multi-domain traffic splitting with end-to-end class delay budgets.
//!
//! Every agent (domain) owns some links and splits each of its local flows
//! over a fixed set of routes. The decision of an agent is the vector of
//! absolute route rates, flow by flow, with each flow's rates summing to its
//! demand. Link delay is `upsilon * (load / capacity)^a` on the total load.
//!
//! Agent cost: `sum_l load_l * delay_l`. Agent contribution for class `s`:
//! the largest summed link delay over its class-`s` routes. One global
//! constraint per end-to-end flow: the sum of those maxima over the agents
//! the flow crosses, minus the class budget.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::problem::{AgentModel, AgentSpec, FeasibleSet, Jacobian, ProblemSpec, SimplexBlock};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Link {
    pub capacity: f64,
    #[serde(default = "one")]
    pub upsilon: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalFlow {
    pub class: usize,
    pub demand: f64,
    /// Each route is a list of link indices of the owning agent.
    pub routes: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub links: Vec<Link>,
    pub flows: Vec<LocalFlow>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndToEndFlow {
    pub class: usize,
    /// Agents crossed by the flow, in path order.
    pub agents: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoutingScenario {
    /// Delay exponent.
    pub a: f64,
    /// `budgets[s]`: end-to-end delay budget of class `s`.
    pub budgets: Vec<f64>,
    pub agents: Vec<Domain>,
    pub e2e_flows: Vec<EndToEndFlow>,
}

impl RoutingScenario {
    pub fn num_classes(&self) -> usize {
        self.budgets.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        if !(self.a >= 1.0 && self.a.is_finite()) {
            return bad(format!("delay exponent must be >= 1, got {}", self.a));
        }
        if self.budgets.is_empty() {
            return bad("at least one class budget is required".into());
        }
        if let Some(d) = self.budgets.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return bad(format!("class budgets must be positive, got {d}"));
        }
        if self.agents.is_empty() {
            return bad("no agents".into());
        }
        for (a, dom) in self.agents.iter().enumerate() {
            for (l, link) in dom.links.iter().enumerate() {
                if !(link.capacity > 0.0 && link.capacity.is_finite()) {
                    return bad(format!("agent {a} link {l}: capacity must be positive"));
                }
                if !(link.upsilon > 0.0 && link.upsilon.is_finite()) {
                    return bad(format!("agent {a} link {l}: upsilon must be positive"));
                }
            }
            if dom.flows.is_empty() {
                return bad(format!("agent {a} has no local flows"));
            }
            for (b, flow) in dom.flows.iter().enumerate() {
                if flow.class >= self.num_classes() {
                    return bad(format!("agent {a} flow {b}: unknown class {}", flow.class));
                }
                // Simplex blocks need a positive target.
                if !(flow.demand > 0.0 && flow.demand.is_finite()) {
                    return bad(format!("agent {a} flow {b}: demand must be positive"));
                }
                if flow.routes.is_empty() {
                    return bad(format!("agent {a} flow {b} has no route"));
                }
                for (r, route) in flow.routes.iter().enumerate() {
                    if route.is_empty() {
                        return bad(format!("agent {a} flow {b} route {r} is empty"));
                    }
                    if let Some(l) = route.iter().find(|&&l| l >= dom.links.len()) {
                        return bad(format!("agent {a} flow {b} route {r}: unknown link {l}"));
                    }
                }
            }
        }
        if self.e2e_flows.is_empty() {
            return bad("no end-to-end flows".into());
        }
        for (f, flow) in self.e2e_flows.iter().enumerate() {
            if flow.class >= self.num_classes() {
                return bad(format!("e2e flow {f}: unknown class {}", flow.class));
            }
            if flow.agents.is_empty() {
                return bad(format!("e2e flow {f} crosses no agent"));
            }
            for (p, &a) in flow.agents.iter().enumerate() {
                if a >= self.agents.len() {
                    return bad(format!("e2e flow {f}: unknown agent {a}"));
                }
                if flow.agents[..p].contains(&a) {
                    return bad(format!("e2e flow {f} crosses agent {a} twice"));
                }
            }
        }
        Ok(())
    }
}

/// Per-agent model; rows of the constraint vector follow `e2e_flows`.
#[derive(Debug, Clone)]
pub struct DomainModel {
    domain: Domain,
    a: f64,
    dim: usize,
    /// Start offset of each local flow's route block.
    offsets: Vec<usize>,
    /// Class of each global constraint when this agent is on the path.
    rows: Vec<Option<usize>>,
}

impl DomainModel {
    fn new(scenario: &RoutingScenario, agent: usize) -> Self {
        let domain = scenario.agents[agent].clone();
        let mut offsets = Vec::with_capacity(domain.flows.len());
        let mut dim = 0;
        for flow in &domain.flows {
            offsets.push(dim);
            dim += flow.routes.len();
        }
        let rows = scenario
            .e2e_flows
            .iter()
            .map(|f| f.agents.contains(&agent).then_some(f.class))
            .collect();
        DomainModel {
            domain,
            a: scenario.a,
            dim,
            offsets,
            rows,
        }
    }

    fn loads(&self, x: &[f64]) -> Vec<f64> {
        let mut load = vec![0.0; self.domain.links.len()];
        for (flow, &off) in self.domain.flows.iter().zip(&self.offsets) {
            for (r, route) in flow.routes.iter().enumerate() {
                for &l in route {
                    load[l] += x[off + r];
                }
            }
        }
        load
    }

    /// Delay and its derivative with respect to the load, per link.
    fn link_delays(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let load = self.loads(x);
        let mut d = Vec::with_capacity(load.len());
        let mut dd = Vec::with_capacity(load.len());
        for (link, &q) in self.domain.links.iter().zip(&load) {
            let u = q.max(0.0) / link.capacity;
            d.push(link.upsilon * u.powf(self.a));
            dd.push(link.upsilon * self.a * u.powf(self.a - 1.0) / link.capacity);
        }
        (load, d, dd)
    }

    /// `(value, subgradient)` of the class-`s` maximum route delay; the
    /// lowest route index (flow order, then route order) wins ties.
    /// Agents without a class-`s` route contribute zero.
    pub fn max_delay_contribution(&self, class: usize, x: &[f64]) -> (f64, Vec<f64>) {
        let (_, d, dd) = self.link_delays(x);
        let mut best: Option<(f64, &Vec<usize>)> = None;
        for flow in self.domain.flows.iter().filter(|f| f.class == class) {
            for route in &flow.routes {
                let v: f64 = route.iter().map(|&l| d[l]).sum();
                if best.is_none_or(|(bv, _)| v > bv) {
                    best = Some((v, route));
                }
            }
        }
        let mut grad = vec![0.0; self.dim];
        let Some((value, route)) = best else {
            return (0.0, grad);
        };
        // d(route delay)/d x_{b,r} = sum over links shared by both routes.
        for (flow, &off) in self.domain.flows.iter().zip(&self.offsets) {
            for (r, other) in flow.routes.iter().enumerate() {
                grad[off + r] = route
                    .iter()
                    .map(|&l| dd[l] * other.iter().filter(|&&m| m == l).count() as f64)
                    .sum();
            }
        }
        (value, grad)
    }

    pub fn blocks(&self) -> Vec<SimplexBlock> {
        self.domain
            .flows
            .iter()
            .zip(&self.offsets)
            .map(|(f, &off)| SimplexBlock {
                range: off..off + f.routes.len(),
                target: f.demand,
            })
            .collect()
    }
}

impl AgentModel for DomainModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn num_constraints(&self) -> usize {
        self.rows.len()
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let (load, d, _) = self.link_delays(x);
        load.iter().zip(&d).map(|(q, v)| q * v).sum()
    }

    fn objective_gradient(&self, x: &[f64]) -> Vec<f64> {
        let (load, d, dd) = self.link_delays(x);
        let marginal: Vec<f64> = (0..load.len()).map(|l| d[l] + load[l] * dd[l]).collect();
        let mut grad = vec![0.0; self.dim];
        for (flow, &off) in self.domain.flows.iter().zip(&self.offsets) {
            for (r, route) in flow.routes.iter().enumerate() {
                grad[off + r] = route.iter().map(|&l| marginal[l]).sum();
            }
        }
        grad
    }

    fn constraints(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.map_or(0.0, |s| self.max_delay_contribution(s, x).0))
            .collect()
    }

    fn constraint_jacobian(&self, x: &[f64]) -> Jacobian {
        let mut jac = Jacobian::zeros(self.rows.len(), self.dim);
        for (k, row) in self.rows.iter().enumerate() {
            if let Some(s) = row {
                jac.row_mut(k).copy_from_slice(&self.max_delay_contribution(*s, x).1);
            }
        }
        jac
    }
}

/// One agent per domain and one constraint per end-to-end flow. The class
/// budget is carried by the first agent on the flow's path.
pub fn build_routing_problem(scenario: &RoutingScenario) -> Result<ProblemSpec> {
    scenario.validate()?;
    let k = scenario.e2e_flows.len();
    let mut agents = Vec::with_capacity(scenario.agents.len());
    for a in 0..scenario.agents.len() {
        let model = DomainModel::new(scenario, a);
        let set = FeasibleSet::simplex_blocks(model.dim, model.blocks())?;
        let offsets = scenario
            .e2e_flows
            .iter()
            .map(|f| if f.agents[0] == a { -scenario.budgets[f.class] } else { 0.0 })
            .collect();
        agents.push(AgentSpec::new(a, Arc::new(model), set, offsets)?);
    }
    let labels = (1..=k).map(|f| format!("g_{f}")).collect();
    ProblemSpec::new(agents, k)?.with_labels(labels)
}

/// Model of agent `agent`, for direct access to the max-delay contribution.
pub fn domain_model(scenario: &RoutingScenario, agent: usize) -> Result<DomainModel> {
    scenario.validate()?;
    if agent >= scenario.agents.len() {
        return Err(Error::InvalidScenario(format!("unknown agent {agent}")));
    }
    Ok(DomainModel::new(scenario, agent))
}

/// Two domains in a chain, each with two single-link routes for one class-0
/// flow; one end-to-end flow crosses both.
pub fn two_domain_chain(budget: f64) -> RoutingScenario {
    let domain = |c1: f64, c2: f64, demand: f64| Domain {
        links: vec![
            Link { capacity: c1, upsilon: 1.0 },
            Link { capacity: c2, upsilon: 1.0 },
        ],
        flows: vec![LocalFlow {
            class: 0,
            demand,
            routes: vec![vec![0], vec![1]],
        }],
    };
    RoutingScenario {
        a: 2.0,
        budgets: vec![budget],
        agents: vec![domain(10.0, 5.0, 6.0), domain(8.0, 8.0, 6.0)],
        e2e_flows: vec![EndToEndFlow { class: 0, agents: vec![0, 1] }],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(routes: Vec<Vec<usize>>, links: Vec<Link>) -> RoutingScenario {
        RoutingScenario {
            a: 2.0,
            budgets: vec![1.0],
            agents: vec![Domain {
                links,
                flows: vec![LocalFlow { class: 0, demand: 4.0, routes }],
            }],
            e2e_flows: vec![EndToEndFlow { class: 0, agents: vec![0] }],
        }
    }

    #[test]
    fn one_route_equals_its_delay_sum() {
        let s = single(
            vec![vec![0, 1]],
            vec![Link { capacity: 8.0, upsilon: 1.0 }, Link { capacity: 4.0, upsilon: 0.5 }],
        );
        let m = domain_model(&s, 0).unwrap();
        let (v, _) = m.max_delay_contribution(0, &[4.0]);
        let expected = (4.0f64 / 8.0).powi(2) + 0.5 * (4.0f64 / 4.0).powi(2);
        assert!((v - expected).abs() < 1e-15);
    }

    #[test]
    fn max_picks_the_slower_route() {
        // Both links at utilization 1, so route delays are the upsilons.
        let s = single(
            vec![vec![0], vec![1]],
            vec![Link { capacity: 2.0, upsilon: 0.3 }, Link { capacity: 2.0, upsilon: 0.5 }],
        );
        let m = domain_model(&s, 0).unwrap();
        let (v, g) = m.max_delay_contribution(0, &[2.0, 2.0]);
        assert!((v - 0.5).abs() < 1e-15);
        assert_eq!(g[0], 0.0);
        assert!(g[1] > 0.0);
    }

    #[test]
    fn ties_use_the_lowest_route() {
        let s = single(
            vec![vec![0], vec![1]],
            vec![Link { capacity: 2.0, upsilon: 1.0 }, Link { capacity: 2.0, upsilon: 1.0 }],
        );
        let m = domain_model(&s, 0).unwrap();
        let (_, g) = m.max_delay_contribution(0, &[2.0, 2.0]);
        assert!(g[0] > 0.0);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn missing_class_contributes_zero() {
        let s = two_domain_chain(1.0);
        let m = domain_model(&s, 0).unwrap();
        let (v, g) = m.max_delay_contribution(3, &[3.0, 3.0]);
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn validation_errors() {
        let mut s = two_domain_chain(1.0);
        s.agents[0].flows[0].routes.clear();
        assert!(matches!(build_routing_problem(&s), Err(Error::InvalidScenario(m)) if m.contains("no route")));
        let mut s = two_domain_chain(1.0);
        s.agents[1].links[0].capacity = 0.0;
        assert!(build_routing_problem(&s).is_err());
        let mut s = two_domain_chain(1.0);
        s.agents[0].flows[0].routes[1] = vec![7];
        assert!(build_routing_problem(&s).is_err());
        let mut s = two_domain_chain(1.0);
        s.e2e_flows[0].agents = vec![0, 0];
        assert!(build_routing_problem(&s).is_err());
        let mut s = two_domain_chain(1.0);
        s.agents[0].flows[0].demand = -1.0;
        assert!(build_routing_problem(&s).is_err());
    }

    #[test]
    fn budget_sits_with_the_first_agent() {
        let p = build_routing_problem(&two_domain_chain(0.9)).unwrap();
        assert_eq!(p.agent(0).offsets, vec![-0.9]);
        assert_eq!(p.agent(1).offsets, vec![0.0]);
        assert_eq!(p.agent(0).dim(), 2);
    }
}
