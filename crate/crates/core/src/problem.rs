//! Problem model: agents with separable objectives, local feasible sets and
//! additive contributions to `K` global inequality constraints
//! `g(y) = sum_i g_i(y_i) <= 0`.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::projection;

/// `[x]_+`. The kink at zero maps to zero for both value and slope.
#[inline]
pub fn positive_part(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Dense row-major `K x dim` matrix; row `k` is the gradient of the `k`-th
/// constraint contribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Jacobian {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Jacobian {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, cols: usize) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::dim("jacobian row", cols, row.len()));
            }
            data.extend(row);
        }
        Ok(Jacobian {
            rows: n,
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.cols..(k + 1) * self.cols]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.cols..(k + 1) * self.cols]
    }

    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.data[k * self.cols + j]
    }

    pub fn set(&mut self, k: usize, j: usize, v: f64) {
        self.data[k * self.cols + j] = v;
    }

    /// `sum_k weights[k] * row(k)`.
    pub fn weighted_row_sum(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (k, &w) in weights.iter().enumerate().take(self.rows) {
            if w == 0.0 {
                continue;
            }
            for (o, &g) in out.iter_mut().zip(self.row(k)) {
                *o += w * g;
            }
        }
        out
    }
}

/// Local data of one agent: cost, cost gradient, constraint contributions and
/// their Jacobian. Contributions returned here exclude the constant budget
/// share, which lives in [`AgentSpec::offsets`].
pub trait AgentModel: Send + Sync {
    fn dim(&self) -> usize;
    fn num_constraints(&self) -> usize;
    fn objective(&self, y: &[f64]) -> f64;
    fn objective_gradient(&self, y: &[f64]) -> Vec<f64>;
    fn constraints(&self, y: &[f64]) -> Vec<f64>;
    fn constraint_jacobian(&self, y: &[f64]) -> Jacobian;
}

type ScalarFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type VectorFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type JacobianFn = dyn Fn(&[f64]) -> Jacobian + Send + Sync;

/// An [`AgentModel`] assembled from closures; handy for small test problems.
#[derive(Clone)]
pub struct ClosureModel {
    dim: usize,
    num_constraints: usize,
    objective: Arc<ScalarFn>,
    gradient: Arc<VectorFn>,
    constraints: Arc<VectorFn>,
    jacobian: Arc<JacobianFn>,
}

impl ClosureModel {
    pub fn new(
        dim: usize,
        num_constraints: usize,
        objective: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        constraints: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        jacobian: impl Fn(&[f64]) -> Jacobian + Send + Sync + 'static,
    ) -> Self {
        ClosureModel {
            dim,
            num_constraints,
            objective: Arc::new(objective),
            gradient: Arc::new(gradient),
            constraints: Arc::new(constraints),
            jacobian: Arc::new(jacobian),
        }
    }
}

impl AgentModel for ClosureModel {
    fn dim(&self) -> usize {
        self.dim
    }
    fn num_constraints(&self) -> usize {
        self.num_constraints
    }
    fn objective(&self, y: &[f64]) -> f64 {
        (self.objective)(y)
    }
    fn objective_gradient(&self, y: &[f64]) -> Vec<f64> {
        (self.gradient)(y)
    }
    fn constraints(&self, y: &[f64]) -> Vec<f64> {
        (self.constraints)(y)
    }
    fn constraint_jacobian(&self, y: &[f64]) -> Jacobian {
        (self.jacobian)(y)
    }
}

/// A group of consecutive coordinates constrained to be nonnegative and to
/// sum to `target`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SimplexBlock {
    pub range: Range<usize>,
    pub target: f64,
}

/// Compact convex local feasible sets supported by the projection.
#[derive(Debug, Clone, PartialEq)]
pub enum FeasibleSet {
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    /// Disjoint simplex blocks that together cover `0..dim`.
    SimplexBlocks {
        dim: usize,
        blocks: Vec<SimplexBlock>,
    },
    /// Children laid out on consecutive coordinate ranges, in order.
    Product(Vec<FeasibleSet>),
}

impl FeasibleSet {
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let set = FeasibleSet::Box { lower, upper };
        set.validate()?;
        Ok(set)
    }

    pub fn simplex(dim: usize, target: f64) -> Result<Self> {
        Self::simplex_blocks(
            dim,
            vec![SimplexBlock {
                range: 0..dim,
                target,
            }],
        )
    }

    pub fn simplex_blocks(dim: usize, blocks: Vec<SimplexBlock>) -> Result<Self> {
        let set = FeasibleSet::SimplexBlocks { dim, blocks };
        set.validate()?;
        Ok(set)
    }

    pub fn product(children: Vec<FeasibleSet>) -> Result<Self> {
        let set = FeasibleSet::Product(children);
        set.validate()?;
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        match self {
            FeasibleSet::Box { lower, .. } => lower.len(),
            FeasibleSet::SimplexBlocks { dim, .. } => *dim,
            FeasibleSet::Product(children) => children.iter().map(FeasibleSet::dim).sum(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FeasibleSet::Box { lower, upper } => {
                if lower.len() != upper.len() {
                    return Err(Error::dim("box bounds", lower.len(), upper.len()));
                }
                if lower.is_empty() {
                    return Err(Error::InvalidSet("box has dimension 0".into()));
                }
                for (j, (&lo, &hi)) in lower.iter().zip(upper).enumerate() {
                    if !lo.is_finite() || !hi.is_finite() {
                        return Err(Error::InvalidSet(format!(
                            "box bound {j} is not finite ({lo}, {hi})"
                        )));
                    }
                    if lo > hi {
                        return Err(Error::InvalidSet(format!(
                            "box coordinate {j} has lower {lo} > upper {hi}"
                        )));
                    }
                }
                Ok(())
            }
            FeasibleSet::SimplexBlocks { dim, blocks } => {
                if *dim == 0 {
                    return Err(Error::InvalidSet("simplex set has dimension 0".into()));
                }
                let mut covered = vec![false; *dim];
                for block in blocks {
                    if !(block.target.is_finite() && block.target > 0.0) {
                        return Err(Error::InvalidSet(format!(
                            "simplex target {} must be positive",
                            block.target
                        )));
                    }
                    if block.range.is_empty() || block.range.end > *dim {
                        return Err(Error::InvalidSet(format!(
                            "simplex block {:?} out of 0..{dim}",
                            block.range
                        )));
                    }
                    for j in block.range.clone() {
                        if covered[j] {
                            return Err(Error::InvalidSet(format!(
                                "simplex blocks overlap at coordinate {j}"
                            )));
                        }
                        covered[j] = true;
                    }
                }
                if let Some(j) = covered.iter().position(|c| !c) {
                    return Err(Error::InvalidSet(format!(
                        "coordinate {j} is not covered by any simplex block"
                    )));
                }
                Ok(())
            }
            FeasibleSet::Product(children) => {
                if children.is_empty() {
                    return Err(Error::InvalidSet("empty product".into()));
                }
                children.iter().try_for_each(FeasibleSet::validate)
            }
        }
    }

    /// Membership up to `tol` (absolute, per bound or per block sum).
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match self {
            FeasibleSet::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(&v, (&lo, &hi))| v >= lo - tol && v <= hi + tol),
            FeasibleSet::SimplexBlocks { blocks, .. } => blocks.iter().all(|b| {
                let part = &x[b.range.clone()];
                part.iter().all(|&v| v >= -tol)
                    && (part.iter().sum::<f64>() - b.target).abs() <= tol * part.len().max(1) as f64
            }),
            FeasibleSet::Product(children) => {
                let mut offset = 0;
                children.iter().all(|c| {
                    let d = c.dim();
                    let ok = c.contains(&x[offset..offset + d], tol);
                    offset += d;
                    ok
                })
            }
        }
    }

    /// Uniform draw: uniform on boxes, flat Dirichlet on simplex blocks.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            FeasibleSet::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(&lo, &hi)| lo + (hi - lo) * rng.random::<f64>())
                .collect(),
            FeasibleSet::SimplexBlocks { dim, blocks } => {
                let mut x = vec![0.0; *dim];
                for b in blocks {
                    let mut total = 0.0;
                    for j in b.range.clone() {
                        // Exp(1) draws normalized give a flat Dirichlet.
                        let u: f64 = rng.random::<f64>();
                        x[j] = -(1.0 - u).ln();
                        total += x[j];
                    }
                    for j in b.range.clone() {
                        x[j] *= b.target / total;
                    }
                }
                x
            }
            FeasibleSet::Product(children) => {
                children.iter().flat_map(|c| c.sample(rng)).collect()
            }
        }
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        projection::project(self, x)
    }
}

/// Scenario-level key performance indicators reported alongside the trace.
#[derive(Clone)]
pub struct KpiSpec {
    pub names: Vec<String>,
    pub eval: Arc<dyn Fn(&[Vec<f64>]) -> Vec<f64> + Send + Sync>,
}

impl fmt::Debug for KpiSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KpiSpec").field("names", &self.names).finish()
    }
}

#[derive(Clone)]
pub struct AgentSpec {
    pub id: usize,
    pub model: Arc<dyn AgentModel>,
    pub feasible_set: FeasibleSet,
    /// Constant part of `g_i`, e.g. a delay budget attributed to this agent.
    pub offsets: Vec<f64>,
}

impl fmt::Debug for AgentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AgentSpec")
            .field("id", &self.id)
            .field("dim", &self.model.dim())
            .field("feasible_set", &self.feasible_set)
            .field("offsets", &self.offsets)
            .finish()
    }
}

impl AgentSpec {
    pub fn new(
        id: usize,
        model: Arc<dyn AgentModel>,
        feasible_set: FeasibleSet,
        offsets: Vec<f64>,
    ) -> Result<Self> {
        let spec = AgentSpec {
            id,
            model,
            feasible_set,
            offsets,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        let dim = self.model.dim();
        if dim == 0 {
            return Err(Error::param(format!("agent[{}].dim", self.id), "must be >= 1"));
        }
        self.feasible_set.validate()?;
        if self.feasible_set.dim() != dim {
            return Err(Error::dim(
                format!("agent {} feasible set", self.id),
                dim,
                self.feasible_set.dim(),
            ));
        }
        if self.offsets.len() != self.model.num_constraints() {
            return Err(Error::dim(
                format!("agent {} constraint offsets", self.id),
                self.model.num_constraints(),
                self.offsets.len(),
            ));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn objective(&self, y: &[f64]) -> f64 {
        self.model.objective(y)
    }

    pub fn objective_gradient(&self, y: &[f64]) -> Vec<f64> {
        self.model.objective_gradient(y)
    }

    /// Full contribution `g_i(y_i)`, constant offsets included.
    pub fn contribution(&self, y: &[f64]) -> Vec<f64> {
        let mut g = self.model.constraints(y);
        for (v, c) in g.iter_mut().zip(&self.offsets) {
            *v += c;
        }
        g
    }

    pub fn jacobian(&self, y: &[f64]) -> Jacobian {
        self.model.constraint_jacobian(y)
    }
}

#[derive(Clone, Debug)]
pub struct ProblemSpec {
    agents: Vec<AgentSpec>,
    num_constraints: usize,
    labels: Vec<String>,
    kpis: Option<KpiSpec>,
}

impl ProblemSpec {
    pub fn new(agents: Vec<AgentSpec>, num_constraints: usize) -> Result<Self> {
        if agents.is_empty() {
            return Err(Error::param("agents", "need at least one agent"));
        }
        for (i, a) in agents.iter().enumerate() {
            a.validate()?;
            if a.model.num_constraints() != num_constraints {
                return Err(Error::dim(
                    format!("agent {i} constraint count"),
                    num_constraints,
                    a.model.num_constraints(),
                ));
            }
        }
        let labels = (1..=num_constraints).map(|k| format!("g_{k}")).collect();
        Ok(ProblemSpec {
            agents,
            num_constraints,
            labels,
            kpis: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.num_constraints {
            return Err(Error::dim("constraint labels", self.num_constraints, labels.len()));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn with_kpis(mut self, kpis: KpiSpec) -> Self {
        self.kpis = Some(kpis);
        self
    }

    pub fn agents(&self) -> &[AgentSpec] {
        &self.agents
    }

    pub fn agent(&self, i: usize) -> &AgentSpec {
        &self.agents[i]
    }

    /// Number of agents `N`.
    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    /// Number of global constraints `K`.
    pub fn num_constraints(&self) -> usize {
        self.num_constraints
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn kpis(&self) -> Option<&KpiSpec> {
        self.kpis.as_ref()
    }

    pub fn evaluate_kpis(&self, y: &[Vec<f64>]) -> Vec<f64> {
        self.kpis.as_ref().map(|k| (k.eval)(y)).unwrap_or_default()
    }

    pub fn check_point(&self, y: &[Vec<f64>]) -> Result<()> {
        if y.len() != self.agents.len() {
            return Err(Error::dim("decision list", self.agents.len(), y.len()));
        }
        for (i, (a, yi)) in self.agents.iter().zip(y).enumerate() {
            if yi.len() != a.dim() {
                return Err(Error::dim(format!("decision of agent {i}"), a.dim(), yi.len()));
            }
        }
        Ok(())
    }

    pub fn contributions(&self, y: &[Vec<f64>]) -> Vec<Vec<f64>> {
        self.agents
            .iter()
            .zip(y)
            .map(|(a, yi)| a.contribution(yi))
            .collect()
    }

    /// `g(y) = sum_i g_i(y_i)`, summed in agent order.
    pub fn evaluate_global_constraints(&self, y: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.check_point(y)?;
        let mut g = vec![0.0; self.num_constraints];
        for gi in self.contributions(y) {
            for (acc, v) in g.iter_mut().zip(gi) {
                *acc += v;
            }
        }
        Ok(g)
    }

    pub fn objective_sum(&self, y: &[Vec<f64>]) -> f64 {
        self.agents.iter().zip(y).map(|(a, yi)| a.objective(yi)).sum()
    }

    /// `(mu / 2N) * sum_k [g_k]_+^2`.
    pub fn penalty(&self, g: &[f64], mu: f64) -> f64 {
        let n = self.agents.len() as f64;
        mu / (2.0 * n) * g.iter().map(|&v| positive_part(v).powi(2)).sum::<f64>()
    }

    /// `Phi(y) = sum_i phi_i(y_i) + (mu / 2N) sum_k [g_k(y)]_+^2`.
    pub fn evaluate_penalized_objective(&self, y: &[Vec<f64>], mu: f64) -> Result<f64> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::param("mu", format!("must be a finite nonnegative number, got {mu}")));
        }
        let g = self.evaluate_global_constraints(y)?;
        Ok(self.objective_sum(y) + self.penalty(&g, mu))
    }

    /// Exact gradient of `Phi` with respect to every agent block.
    pub fn penalized_gradient(&self, y: &[Vec<f64>], mu: f64) -> Result<Vec<Vec<f64>>> {
        let g = self.evaluate_global_constraints(y)?;
        let n = self.agents.len() as f64;
        let weights: Vec<f64> = g.iter().map(|&v| mu / n * positive_part(v)).collect();
        Ok(self
            .agents
            .iter()
            .zip(y)
            .map(|(a, yi)| {
                let mut grad = a.objective_gradient(yi);
                let pen = a.jacobian(yi).weighted_row_sum(&weights);
                for (gj, pj) in grad.iter_mut().zip(pen) {
                    *gj += pj;
                }
                grad
            })
            .collect())
    }

    /// Copy of the problem with every constant offset scaled by `tau`.
    pub fn with_scaled_offsets(&self, tau: f64) -> ProblemSpec {
        let mut out = self.clone();
        for a in &mut out.agents {
            for c in &mut a.offsets {
                *c *= tau;
            }
        }
        out
    }

    pub fn project_all(&self, y: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.check_point(y)?;
        self.agents
            .iter()
            .zip(y)
            .map(|(a, yi)| a.feasible_set.project(yi))
            .collect()
    }

    pub fn sample_feasible<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Vec<f64>> {
        self.agents
            .iter()
            .map(|a| a.feasible_set.sample(rng))
            .collect()
    }
}

/// Decisions `y_i(t)` and constraint estimates `e_i(t)` of all agents.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionState {
    pub y: Vec<Vec<f64>>,
    pub e: Vec<Vec<f64>>,
    pub t: u64,
}

impl DecisionState {
    /// Projects `y0` onto the local sets and sets `e_i(0) = g_i(y_i(0))`.
    pub fn initial(problem: &ProblemSpec, y0: &[Vec<f64>]) -> Result<Self> {
        let y = problem.project_all(y0)?;
        let e = problem.contributions(&y);
        Ok(DecisionState { y, e, t: 0 })
    }

    /// `(1/N) sum_i e_i`.
    pub fn estimate_average(&self) -> Vec<f64> {
        let n = self.e.len() as f64;
        let k = self.e.first().map_or(0, Vec::len);
        let mut avg = vec![0.0; k];
        for ei in &self.e {
            for (a, v) in avg.iter_mut().zip(ei) {
                *a += v;
            }
        }
        avg.iter_mut().for_each(|a| *a /= n);
        avg
    }
}
