//! Access/core network delay-budget instance: one core network (CN) and two
//! access networks (AN 1, AN 2), two traffic classes, two links per AN.
//!
//! Agent order is (CN, AN1, AN2). Constraint `(i, s)` (AN `i`, class `s`,
//! both 1-based) sits at index `2(i-1) + (s-1)`.
//!
//! AN decision layout: `(r_11, r_21, r_12, r_22, b_1, b_2)` where `r_ls` is the
//! fraction of class `s` sent over link `l`; so `r_ls` lives at `2(s-1) + (l-1)`.
//! CN decision: `(b_1, b_2)`, one bandwidth per class.

use std::sync::Arc;

use rand::Rng;

use crate::consensus::WeightMatrix;
use crate::error::{Error, Result};
use crate::optimizer::{LimiterConfig, NoiseModel, RunConfig, StepSchedule};
use crate::problem::{AgentModel, AgentSpec, FeasibleSet, Jacobian, KpiSpec, ProblemSpec, SimplexBlock};

pub const NUM_CONSTRAINTS: usize = 4;
pub const KPI_NAMES: [&str; 4] = ["d_e2e_11", "d_e2e_12", "d_e2e_21", "d_e2e_22"];

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiveGParams {
    pub upsilon: [f64; 2],
    /// `kappa_an[i][l]`.
    pub kappa_an: [[f64; 2]; 2],
    pub kappa_cn: [f64; 2],
    pub a: f64,
    pub k: f64,
    /// `beta_an[i][s]`.
    pub beta_an: [[f64; 2]; 2],
    pub beta_cn: [f64; 2],
    /// `flows[i][s]`: class-`s` rate destined for AN `i`.
    pub flows: [[f64; 2]; 2],
    pub budgets: [f64; 2],
    pub b_min: f64,
    /// Bandwidth caps are this multiple of the total flow the agent carries.
    pub cap_factor: f64,
}

impl Default for FiveGParams {
    fn default() -> Self {
        FiveGParams {
            upsilon: [1.0, 0.8],
            kappa_an: [[4.0, 5.0], [7.0, 9.0]],
            kappa_cn: [4.0, 6.0],
            a: 2.5,
            k: 1.1,
            beta_an: [[40.0, 10.0], [40.0, 10.0]],
            beta_cn: [40.0, 10.0],
            flows: [[40.0, 20.0], [50.0, 30.0]],
            budgets: [0.7, 0.5],
            b_min: 1e-3,
            cap_factor: 4.0,
        }
    }
}

impl FiveGParams {
    pub fn validate(&self) -> Result<()> {
        let positive: [(&str, &[f64]); 9] = [
            ("upsilon", &self.upsilon),
            ("kappa_an", self.kappa_an.as_flattened()),
            ("kappa_cn", &self.kappa_cn),
            ("beta_an", self.beta_an.as_flattened()),
            ("beta_cn", &self.beta_cn),
            ("flows", self.flows.as_flattened()),
            ("budgets", &self.budgets),
            ("b_min", std::slice::from_ref(&self.b_min)),
            ("cap_factor", std::slice::from_ref(&self.cap_factor)),
        ];
        for (name, values) in positive {
            if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                return Err(Error::param(format!("fiveg.{name}"), format!("must be positive, got {v}")));
            }
        }
        if !(self.a >= 1.0 && self.a.is_finite()) {
            return Err(Error::param("fiveg.a", format!("must be >= 1, got {}", self.a)));
        }
        if !(self.k >= 1.0 && self.k.is_finite()) {
            return Err(Error::param("fiveg.k", format!("must be >= 1, got {}", self.k)));
        }
        if !(self.cap_factor > 1.0) {
            return Err(Error::param("fiveg.cap_factor", "caps must exceed the carried flow"));
        }
        for cap in self.an_caps().into_iter().chain([self.cn_cap()]) {
            if cap <= self.b_min {
                return Err(Error::param("fiveg.b_min", format!("must be below every cap ({cap})")));
            }
        }
        Ok(())
    }

    /// `F^i = F^i_1 + F^i_2`.
    pub fn an_total(&self, i: usize) -> f64 {
        self.flows[i][0] + self.flows[i][1]
    }

    /// Per-class CN rates `F_s = F^1_s + F^2_s`.
    pub fn cn_flows(&self) -> [f64; 2] {
        [self.flows[0][0] + self.flows[1][0], self.flows[0][1] + self.flows[1][1]]
    }

    /// `F^T`.
    pub fn total_flow(&self) -> f64 {
        self.an_total(0) + self.an_total(1)
    }

    pub fn an_caps(&self) -> [f64; 2] {
        [self.cap_factor * self.an_total(0), self.cap_factor * self.an_total(1)]
    }

    pub fn cn_cap(&self) -> f64 {
        self.cap_factor * self.total_flow()
    }
}

/// `upsilon * (f / b)^a`.
pub fn link_delay(f: f64, b: f64, upsilon: f64, a: f64) -> Result<f64> {
    if !(b > 0.0) {
        return Err(Error::param("bandwidth", format!("must be positive, got {b}")));
    }
    if !(f >= 0.0) {
        return Err(Error::param("rate", format!("must be >= 0, got {f}")));
    }
    Ok(upsilon * (f / b).powf(a))
}

fn delay(f: f64, b: f64, upsilon: f64, a: f64) -> f64 {
    upsilon * (f / b).powf(a)
}

/// Partial derivatives of `upsilon (f/b)^a` with respect to `f` and `b`.
fn delay_partials(f: f64, b: f64, upsilon: f64, a: f64) -> (f64, f64) {
    let d_f = upsilon * a * (f / b).powf(a - 1.0) / b;
    (d_f, -d_f * f / b)
}

#[derive(Debug, Clone)]
struct AccessModel {
    index: usize,
    upsilon: [f64; 2],
    kappa: [f64; 2],
    beta: [f64; 2],
    flows: [f64; 2],
    a: f64,
    k: f64,
}

fn r_at(l: usize, s: usize) -> usize {
    2 * s + l
}

impl AccessModel {
    fn link_state(&self, y: &[f64], l: usize) -> (f64, f64, f64, f64) {
        let f: f64 = (0..2).map(|s| y[r_at(l, s)] * self.flows[s]).sum();
        let b = y[4 + l];
        let d = delay(f, b, self.upsilon[l], self.a);
        let (d_f, d_b) = delay_partials(f, b, self.upsilon[l], self.a);
        (f, d, d_f, d_b)
    }
}

impl AgentModel for AccessModel {
    fn dim(&self) -> usize {
        6
    }

    fn num_constraints(&self) -> usize {
        NUM_CONSTRAINTS
    }

    fn objective(&self, y: &[f64]) -> f64 {
        (0..2)
            .map(|l| {
                let (_, d, _, _) = self.link_state(y, l);
                let weighted: f64 = (0..2).map(|s| self.beta[s] * y[r_at(l, s)] * self.flows[s]).sum();
                self.kappa[l] * y[4 + l].powf(self.k) + weighted * d
            })
            .sum()
    }

    fn objective_gradient(&self, y: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; 6];
        for l in 0..2 {
            let (_, d, d_f, d_b) = self.link_state(y, l);
            let weighted: f64 = (0..2).map(|s| self.beta[s] * y[r_at(l, s)] * self.flows[s]).sum();
            for s in 0..2 {
                g[r_at(l, s)] = self.beta[s] * self.flows[s] * d + weighted * d_f * self.flows[s];
            }
            let b = y[4 + l];
            g[4 + l] = self.kappa[l] * self.k * b.powf(self.k - 1.0) + weighted * d_b;
        }
        g
    }

    fn constraints(&self, y: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; NUM_CONSTRAINTS];
        for l in 0..2 {
            let (_, d, _, _) = self.link_state(y, l);
            for s in 0..2 {
                g[2 * self.index + s] += y[r_at(l, s)] * d;
            }
        }
        g
    }

    fn constraint_jacobian(&self, y: &[f64]) -> Jacobian {
        let mut jac = Jacobian::zeros(NUM_CONSTRAINTS, 6);
        for l in 0..2 {
            let (_, d, d_f, d_b) = self.link_state(y, l);
            for s in 0..2 {
                let row = 2 * self.index + s;
                let r = y[r_at(l, s)];
                for s2 in 0..2 {
                    let own = if s2 == s { d } else { 0.0 };
                    jac.set(row, r_at(l, s2), own + r * d_f * self.flows[s2]);
                }
                jac.set(row, 4 + l, r * d_b);
            }
        }
        jac
    }
}

#[derive(Debug, Clone)]
struct CoreModel {
    kappa: [f64; 2],
    beta: [f64; 2],
    flows: [f64; 2],
    a: f64,
    k: f64,
}

impl AgentModel for CoreModel {
    fn dim(&self) -> usize {
        2
    }

    fn num_constraints(&self) -> usize {
        NUM_CONSTRAINTS
    }

    fn objective(&self, y: &[f64]) -> f64 {
        (0..2)
            .map(|s| {
                self.kappa[s] * y[s].powf(self.k)
                    + self.beta[s] * self.flows[s] * delay(self.flows[s], y[s], 1.0, self.a)
            })
            .sum()
    }

    fn objective_gradient(&self, y: &[f64]) -> Vec<f64> {
        (0..2)
            .map(|s| {
                let (_, d_b) = delay_partials(self.flows[s], y[s], 1.0, self.a);
                self.kappa[s] * self.k * y[s].powf(self.k - 1.0) + self.beta[s] * self.flows[s] * d_b
            })
            .collect()
    }

    fn constraints(&self, y: &[f64]) -> Vec<f64> {
        let d = [delay(self.flows[0], y[0], 1.0, self.a), delay(self.flows[1], y[1], 1.0, self.a)];
        vec![d[0], d[1], d[0], d[1]]
    }

    fn constraint_jacobian(&self, y: &[f64]) -> Jacobian {
        let mut jac = Jacobian::zeros(NUM_CONSTRAINTS, 2);
        for s in 0..2 {
            let (_, d_b) = delay_partials(self.flows[s], y[s], 1.0, self.a);
            jac.set(s, s, d_b);
            jac.set(2 + s, s, d_b);
        }
        jac
    }
}

fn cn_agent(params: &FiveGParams) -> Result<AgentSpec> {
    let model = CoreModel {
        kappa: params.kappa_cn,
        beta: params.beta_cn,
        flows: params.cn_flows(),
        a: params.a,
        k: params.k,
    };
    let cap = params.cn_cap();
    AgentSpec::new(
        0,
        Arc::new(model),
        FeasibleSet::boxed(vec![params.b_min; 2], vec![cap; 2])?,
        vec![0.0; NUM_CONSTRAINTS],
    )
}

fn an_agent(params: &FiveGParams, i: usize) -> Result<AgentSpec> {
    let model = AccessModel {
        index: i,
        upsilon: params.upsilon,
        kappa: params.kappa_an[i],
        beta: params.beta_an[i],
        flows: params.flows[i],
        a: params.a,
        k: params.k,
    };
    let cap = params.an_caps()[i];
    let set = FeasibleSet::product(vec![
        FeasibleSet::simplex_blocks(
            4,
            vec![
                SimplexBlock { range: 0..2, target: 1.0 },
                SimplexBlock { range: 2..4, target: 1.0 },
            ],
        )?,
        FeasibleSet::boxed(vec![params.b_min; 2], vec![cap; 2])?,
    ])?;
    // The AN carries its own budgets so the CN term is identical across the
    // two constraints of a class.
    let mut offsets = vec![0.0; NUM_CONSTRAINTS];
    offsets[2 * i] = -params.budgets[0];
    offsets[2 * i + 1] = -params.budgets[1];
    AgentSpec::new(i + 1, Arc::new(model), set, offsets)
}

/// Three-agent problem with the realized E2E delays attached as KPIs.
pub fn build_problem(params: &FiveGParams) -> Result<ProblemSpec> {
    params.validate()?;
    let agents = vec![cn_agent(params)?, an_agent(params, 0)?, an_agent(params, 1)?];
    let kpi_params = params.clone();
    let kpis = KpiSpec {
        names: KPI_NAMES.iter().map(|s| s.to_string()).collect(),
        eval: Arc::new(move |y| realized_e2e_delay(&kpi_params, y).to_vec()),
    };
    Ok(ProblemSpec::new(agents, NUM_CONSTRAINTS)?.with_kpis(kpis))
}

/// Average E2E delay of class `s` traffic destined for AN `i`:
/// `(1/F^i_s) sum_l f^i_ls d^i_l + d^c_s`, indexed like the constraints.
pub fn realized_e2e_delay(params: &FiveGParams, y: &[Vec<f64>]) -> [f64; 4] {
    let g = global_delay_constraints(params, y);
    [
        g[0] + params.budgets[0],
        g[1] + params.budgets[1],
        g[2] + params.budgets[0],
        g[3] + params.budgets[1],
    ]
}

/// The four global constraints evaluated in one place, straight from the
/// definitions and independently of the per-agent split.
pub fn global_delay_constraints(params: &FiveGParams, y: &[Vec<f64>]) -> [f64; 4] {
    let f_cn = params.cn_flows();
    let mut out = [0.0; 4];
    for i in 0..2 {
        let an = &y[i + 1];
        for s in 0..2 {
            let mut through_an = 0.0;
            for l in 0..2 {
                let link_rate = an[r_at(l, 0)] * params.flows[i][0] + an[r_at(l, 1)] * params.flows[i][1];
                let d_link = params.upsilon[l] * (link_rate / an[4 + l]).powf(params.a);
                let f_ls = an[r_at(l, s)] * params.flows[i][s];
                through_an += f_ls * d_link;
            }
            let d_core = (f_cn[s] / y[0][s]).powf(params.a);
            out[2 * i + s] = through_an / params.flows[i][s] + d_core - params.budgets[s];
        }
    }
    out
}

/// Structured view of a 5G decision profile.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FiveGDecision {
    pub cn: [f64; 2],
    pub an: [[f64; 6]; 2],
}

impl FiveGDecision {
    pub fn to_vectors(&self) -> Vec<Vec<f64>> {
        vec![self.cn.to_vec(), self.an[0].to_vec(), self.an[1].to_vec()]
    }

    pub fn from_vectors(y: &[Vec<f64>]) -> Result<Self> {
        if y.len() != 3 {
            return Err(Error::dim("5G decision list", 3, y.len()));
        }
        let cn: [f64; 2] = y[0].as_slice().try_into().map_err(|_| Error::dim("CN decision", 2, y[0].len()))?;
        let mut an = [[0.0; 6]; 2];
        for i in 0..2 {
            an[i] = y[i + 1]
                .as_slice()
                .try_into()
                .map_err(|_| Error::dim(format!("AN {} decision", i + 1), 6, y[i + 1].len()))?;
        }
        Ok(FiveGDecision { cn, an })
    }

    /// `r^i_{l,s}` with 1-based `i`, `l`, `s`.
    pub fn routing(&self, i: usize, l: usize, s: usize) -> f64 {
        self.an[i - 1][r_at(l - 1, s - 1)]
    }
}

/// Routing fractions at 0.5, `B_s ~ U(0, 2F^T)` (lifted to `b_min`),
/// `B^i_l ~ U(F^i, 2F^i)`, drawn in the order CN, AN1, AN2.
pub fn default_initialization<R: Rng + ?Sized>(params: &FiveGParams, rng: &mut R) -> FiveGDecision {
    let ft = params.total_flow();
    let mut cn = [0.0; 2];
    for b in &mut cn {
        *b = (2.0 * ft * rng.random::<f64>()).max(params.b_min);
    }
    let mut an = [[0.5; 6]; 2];
    for (i, y) in an.iter_mut().enumerate() {
        let fi = params.an_total(i);
        for l in 0..2 {
            y[4 + l] = fi + fi * rng.random::<f64>();
        }
    }
    FiveGDecision { cn, an }
}

pub fn default_weight_matrix() -> WeightMatrix {
    WeightMatrix::validate(&[
        vec![0.75, 0.125, 0.125],
        vec![0.125, 0.875, 0.0],
        vec![0.125, 0.0, 0.875],
    ])
    .expect("bundled matrix is doubly stochastic and connected")
}

/// Limiter on the AN routing fractions only.
pub fn limiter_mask() -> Vec<Vec<bool>> {
    let an = vec![true, true, true, true, false, false];
    vec![vec![false, false], an.clone(), an]
}

/// Bundled 5G run settings: `mu = 2e4`, `tau = 0.6`, `sigma = 0.75`,
/// `gamma_t = min(0.1, (t+1)^-0.6)`, limiter 0.01, 1000 iterations.
pub fn default_run_config(seed: u64) -> RunConfig {
    RunConfig {
        mu: 2e4,
        schedule: StepSchedule::Polynomial { cap: 0.1, exponent: 0.6 },
        noise: NoiseModel::UniformGradientProportional { sigma: 0.75 },
        limiter: LimiterConfig {
            enabled: true,
            mask: limiter_mask(),
            bound: 0.01,
        },
        fictitious_factor: 0.6,
        iterations: 1000,
        seed,
    }
}
