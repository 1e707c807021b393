//! Flat dotted-key configuration.
//!
//! A config file is TOML; nested tables and dotted keys are flattened to
//! `section.name` keys before interpretation, so `[run] mu = 1` and
//! `run.mu = 1` mean the same thing. `--set key=value` overrides use the same
//! key space and TOML value syntax. Every key must be consumed, otherwise the
//! first unknown key is reported by name.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use e2e_qos::optimizer::NoiseModel;
use e2e_qos::scenario::fiveg::FiveGParams;
use e2e_qos::scenario::routing::{self, RoutingScenario};
use e2e_qos::{LimiterConfig, NashProbeOptions, OracleOptions, RunConfig, StepSchedule};
use toml::Value;

pub const BUILTIN_PREFIX: &str = "builtin:";

const BUILTINS: [(&str, &str); 2] = [
    ("paper_5g", include_str!("../configs/paper_5g.toml")),
    ("routing_chain", include_str!("../configs/routing_chain.toml")),
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTINS.iter().map(|(n, _)| *n)
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown builtin config `{0}`")]
    UnknownBuiltin(String),
    #[error("malformed config: {0}")]
    Syntax(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: {msg}")]
    Key { key: String, msg: String },
    #[error(transparent)]
    Model(#[from] e2e_qos::Error),
}

fn key_err(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Key {
        key: key.to_string(),
        msg: msg.into(),
    }
}

pub type FlatConfig = BTreeMap<String, Value>;

fn flatten(prefix: &str, table: toml::Table, out: &mut FlatConfig) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other);
            }
        }
    }
}

pub fn parse_flat(text: &str) -> Result<FlatConfig, ConfigError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
    let mut out = FlatConfig::new();
    flatten("", table, &mut out);
    Ok(out)
}

/// Reads `builtin:<name>` or a file path. Returns the flat keys and the
/// directory relative paths inside the config resolve against.
pub fn load(source: &str) -> Result<(FlatConfig, PathBuf), ConfigError> {
    if let Some(name) = source.strip_prefix(BUILTIN_PREFIX) {
        let text = BUILTINS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| ConfigError::UnknownBuiltin(name.to_string()))?;
        return Ok((parse_flat(text)?, PathBuf::from(".")));
    }
    let path = Path::new(source);
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    Ok((parse_flat(&text)?, dir))
}

/// Applies `key=value` overrides; bare words that are not valid TOML values
/// are taken as strings.
pub fn apply_overrides(cfg: &mut FlatConfig, overrides: &[String]) -> Result<(), ConfigError> {
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax(format!("override `{item}` is not key=value")))?;
        let key = key.trim();
        let raw = raw.trim();
        let value = match parse_flat(&format!("v = {raw}")) {
            Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.to_string())),
            Err(_) => Value::String(raw.to_string()),
        };
        cfg.insert(key.to_string(), value);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioConfig {
    FiveG(FiveGParams),
    Routing(RoutingScenario),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    /// Random bandwidths around the carried flow, even routing (5G only).
    Standard,
    /// Uniform draw from each agent's feasible set.
    Sample,
    /// Projection of the origin: even splits on simplex blocks, lower
    /// bounds on boxes.
    Even,
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub scenario: ScenarioConfig,
    pub run: RunConfig,
    /// Limiter bound; the mask comes from the scenario.
    pub limiter_enabled: bool,
    pub limiter_bound: f64,
    pub init: InitKind,
    pub weights: Option<Vec<Vec<f64>>>,
    pub oracle: OracleOptions,
    pub game_mu: f64,
    pub nash: NashProbeOptions,
    pub verify_points: usize,
    pub compare_seeds: Vec<u64>,
    pub compare_window: usize,
    /// The resolved key set, echoed into run summaries.
    pub echo: FlatConfig,
}

struct Reader {
    map: FlatConfig,
}

impl Reader {
    fn take(&mut self, key: &str) -> Option<Value> {
        self.map.remove(key)
    }

    fn f64(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some(Value::Float(v)) => Ok(v),
            Some(Value::Integer(v)) => Ok(v as f64),
            Some(other) => Err(key_err(key, format!("expected a number, got {other}"))),
        }
    }

    fn opt_f64(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        if self.map.contains_key(key) {
            self.f64(key, 0.0).map(Some)
        } else {
            Ok(None)
        }
    }

    fn u64(&mut self, key: &str, default: u64) -> Result<u64, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some(Value::Integer(v)) if v >= 0 => Ok(v as u64),
            Some(other) => Err(key_err(key, format!("expected a non-negative integer, got {other}"))),
        }
    }

    fn bool(&mut self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(b),
            Some(other) => Err(key_err(key, format!("expected true or false, got {other}"))),
        }
    }

    fn string(&mut self, key: &str, default: &str) -> Result<String, ConfigError> {
        match self.take(key) {
            None => Ok(default.to_string()),
            Some(Value::String(s)) => Ok(s),
            Some(other) => Err(key_err(key, format!("expected a string, got {other}"))),
        }
    }

    fn typed<T: serde::de::DeserializeOwned>(&mut self, key: &str) -> Result<Option<T>, ConfigError> {
        self.take(key)
            .map(|v| v.try_into().map_err(|e: toml::de::Error| key_err(key, e.message().to_string())))
            .transpose()
    }

    /// Removes every `prefix.*` key, returning the suffixes.
    fn section(&mut self, prefix: &str) -> Vec<(String, Value)> {
        let p = format!("{prefix}.");
        let keys: Vec<String> = self.map.keys().filter(|k| k.starts_with(&p)).cloned().collect();
        keys.into_iter()
            .map(|k| {
                let v = self.map.remove(&k).expect("key listed above");
                (k[p.len()..].to_string(), v)
            })
            .collect()
    }
}

fn fiveg_params(entries: Vec<(String, Value)>) -> Result<FiveGParams, ConfigError> {
    let mut table = match Value::try_from(FiveGParams::default()) {
        Ok(Value::Table(t)) => t,
        _ => unreachable!("parameter struct serializes to a table"),
    };
    for (name, value) in entries {
        let key = format!("fiveg.{name}");
        if !table.contains_key(&name) {
            return Err(ConfigError::UnknownKey(key));
        }
        // Check each field on its own so the error names it.
        let mut probe = table.clone();
        probe.insert(name.clone(), value.clone());
        probe
            .clone()
            .try_into::<FiveGParams>()
            .map_err(|e| key_err(&key, e.message().to_string()))?;
        table.insert(name, value);
    }
    let params: FiveGParams = table.try_into().map_err(|e| key_err("fiveg", e.message().to_string()))?;
    params.validate()?;
    Ok(params)
}

fn routing_scenario(r: &mut Reader, base: &Path) -> Result<RoutingScenario, ConfigError> {
    let file = r.take("routing.file");
    let preset = r.string("routing.preset", "two_domain_chain")?;
    let budget = r.f64("routing.budget", 1.0)?;
    let scenario = match file {
        Some(Value::String(f)) => {
            let path = base.join(&f);
            let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Io { path, source })?;
            toml::from_str::<RoutingScenario>(&text).map_err(|e| key_err("routing.file", e.message().to_string()))?
        }
        Some(other) => return Err(key_err("routing.file", format!("expected a path, got {other}"))),
        None => match preset.as_str() {
            "two_domain_chain" => routing::two_domain_chain(budget),
            other => return Err(key_err("routing.preset", format!("unknown preset `{other}`"))),
        },
    };
    scenario.validate()?;
    Ok(scenario)
}

impl Settings {
    pub fn from_flat(map: FlatConfig, base: &Path) -> Result<Settings, ConfigError> {
        let echo = map.clone();
        let mut r = Reader { map };

        let kind = r.string("scenario", "fiveg")?;
        let fiveg_entries = r.section("fiveg");
        let scenario = match kind.as_str() {
            "fiveg" => ScenarioConfig::FiveG(fiveg_params(fiveg_entries)?),
            "routing" => {
                if let Some((k, _)) = fiveg_entries.first() {
                    return Err(key_err(&format!("fiveg.{k}"), "only valid with scenario = \"fiveg\""));
                }
                ScenarioConfig::Routing(routing_scenario(&mut r, base)?)
            }
            other => return Err(key_err("scenario", format!("expected \"fiveg\" or \"routing\", got \"{other}\""))),
        };

        let schedule = match r.string("schedule.kind", "polynomial")?.as_str() {
            "polynomial" => {
                StepSchedule::polynomial(r.f64("schedule.cap", 0.1)?, r.f64("schedule.exponent", 0.6)?)?
            }
            "constant" => StepSchedule::constant(r.f64("schedule.gamma", 0.01)?)?,
            other => return Err(key_err("schedule.kind", format!("unknown schedule `{other}`"))),
        };
        let noise = match r.string("noise.kind", "uniform_gradient_proportional")?.as_str() {
            "none" => NoiseModel::None,
            "uniform_gradient_proportional" => NoiseModel::UniformGradientProportional {
                sigma: r.f64("noise.sigma", 0.75)?,
            },
            "uniform_bounded" => NoiseModel::UniformBounded {
                half_width: r
                    .typed("noise.half_width")?
                    .ok_or_else(|| key_err("noise.half_width", "required for uniform_bounded noise"))?,
            },
            other => return Err(key_err("noise.kind", format!("unknown noise model `{other}`"))),
        };
        let limiter_enabled = r.bool("limiter.enabled", true)?;
        let limiter_bound = r.f64("limiter.bound", 0.01)?;
        let mu = r.f64("run.mu", 2e4)?;
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(key_err("run.mu", format!("must be positive, got {mu}")));
        }
        let run = RunConfig {
            mu,
            schedule,
            noise,
            limiter: LimiterConfig::disabled(),
            fictitious_factor: r.f64("run.tau", 0.6)?,
            iterations: r.u64("run.iterations", 1000)?,
            seed: r.u64("run.seed", 0)?,
        };

        if !(run.fictitious_factor > 0.0 && run.fictitious_factor <= 1.0) {
            return Err(key_err("run.tau", format!("must lie in (0, 1], got {}", run.fictitious_factor)));
        }

        let default_init = match scenario {
            ScenarioConfig::FiveG(_) => "standard",
            ScenarioConfig::Routing(_) => "even",
        };
        let init = match r.string("init.kind", default_init)?.as_str() {
            "standard" if matches!(scenario, ScenarioConfig::FiveG(_)) => InitKind::Standard,
            "standard" => return Err(key_err("init.kind", "\"standard\" initialization only exists for the 5G scenario")),
            "sample" => InitKind::Sample,
            "even" => InitKind::Even,
            other => return Err(key_err("init.kind", format!("unknown initialization `{other}`"))),
        };
        let weights = r.typed("weights.rows")?;

        let od = OracleOptions::default();
        let oracle = OracleOptions {
            tol: r.f64("oracle.tol", od.tol)?,
            max_iters: r.u64("oracle.max_iters", od.max_iters as u64)? as usize,
            restarts: r.u64("oracle.restarts", od.restarts as u64)? as usize,
            seed: r.u64("oracle.seed", od.seed)?,
        };
        let game_mu = r.f64("game.mu", mu)?;
        let nd = NashProbeOptions::default();
        let nash = NashProbeOptions {
            epsilon: r.f64("nash.epsilon", nd.epsilon)?,
            probes: r.u64("nash.probes", nd.probes as u64)? as usize,
            radius: r.f64("nash.radius", nd.radius)?,
            transfer_cap: r.opt_f64("nash.transfer_cap")?,
            seed: r.u64("nash.seed", nd.seed)?,
        };
        let verify_points = r.u64("verify.points", 100)? as usize;
        let compare_seeds = r.typed::<Vec<u64>>("compare.seeds")?.unwrap_or_else(|| (0..10).collect());
        if compare_seeds.is_empty() {
            return Err(key_err("compare.seeds", "needs at least one seed"));
        }
        let compare_window = r.u64("compare.window", 50)? as usize;
        if compare_window == 0 {
            return Err(key_err("compare.window", "must be positive"));
        }

        if let Some(key) = r.map.keys().next() {
            return Err(ConfigError::UnknownKey(key.clone()));
        }
        Ok(Settings {
            scenario,
            run,
            limiter_enabled,
            limiter_bound,
            init,
            weights,
            oracle,
            game_mu,
            nash,
            verify_points,
            compare_seeds,
            compare_window,
            echo,
        })
    }

    /// Loads `source`, applies overrides and interprets the result.
    pub fn resolve(source: &str, overrides: &[String]) -> Result<Settings, ConfigError> {
        let (mut map, base) = load(source)?;
        apply_overrides(&mut map, overrides)?;
        Settings::from_flat(map, &base)
    }
}
