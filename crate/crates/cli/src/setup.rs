//! Turns resolved settings into a problem, weight matrix, run config and
//! starting points.

use e2e_qos::rng::{self, tag};
use e2e_qos::scenario::fiveg::{self, FiveGParams};
use e2e_qos::scenario::routing;
use e2e_qos::{LimiterConfig, ProblemSpec, RunConfig, WeightMatrix};

use crate::config::{ConfigError, InitKind, ScenarioConfig, Settings};

#[derive(Debug, Clone)]
pub struct Prepared {
    pub problem: ProblemSpec,
    pub w: WeightMatrix,
    pub run: RunConfig,
    pub init: InitKind,
    pub fiveg: Option<FiveGParams>,
}

impl Prepared {
    pub fn new(settings: &Settings) -> Result<Prepared, ConfigError> {
        let (problem, fiveg, mask) = match &settings.scenario {
            ScenarioConfig::FiveG(params) => {
                (fiveg::build_problem(params)?, Some(params.clone()), fiveg::limiter_mask())
            }
            ScenarioConfig::Routing(sc) => {
                let p = routing::build_routing_problem(sc)?;
                let mask = p.agents().iter().map(|a| vec![true; a.dim()]).collect();
                (p, None, mask)
            }
        };
        let w = match &settings.weights {
            Some(rows) => WeightMatrix::validate(rows)?,
            None if fiveg.is_some() => fiveg::default_weight_matrix(),
            None => WeightMatrix::uniform(problem.num_agents()),
        };
        if w.size() != problem.num_agents() {
            return Err(ConfigError::Key {
                key: "weights.rows".into(),
                msg: format!("{} agents but a {}x{} matrix", problem.num_agents(), w.size(), w.size()),
            });
        }
        let limiter = if settings.limiter_enabled {
            LimiterConfig::new(mask, settings.limiter_bound)?
        } else {
            LimiterConfig::disabled()
        };
        let run = RunConfig {
            limiter,
            ..settings.run.clone()
        };
        run.validate(&problem)?;
        Ok(Prepared {
            problem,
            w,
            run,
            init: settings.init,
            fiveg,
        })
    }

    pub fn with_seed(&self, seed: u64) -> RunConfig {
        RunConfig { seed, ..self.run.clone() }
    }

    /// Starting point for `seed`; the draw is independent of the noise
    /// streams of the same seed.
    pub fn initial(&self, seed: u64) -> Vec<Vec<f64>> {
        let mut r = rng::stream(seed, &[tag::INIT]);
        match (self.init, &self.fiveg) {
            (InitKind::Standard, Some(params)) => fiveg::default_initialization(params, &mut r).to_vectors(),
            (InitKind::Sample, _) | (InitKind::Standard, None) => self.problem.sample_feasible(&mut r),
            (InitKind::Even, _) => self
                .problem
                .agents()
                .iter()
                .map(|a| a.feasible_set.project(&vec![0.0; a.dim()]).expect("dimension matches"))
                .collect(),
        }
    }
}
