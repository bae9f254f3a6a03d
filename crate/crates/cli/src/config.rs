//! Flat `section.key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is
//! validated; problems are reported together with the dotted path of the
//! offending field.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use spider_core::sfo::{Mode, StepOption};
use spider_core::ssp::NcBackend;

use crate::error::HarnessError;

/// Algorithms known to the harness, by their command-line names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    SpiderSfo,
    SpiderSfoPlus,
    SpiderSzo,
    Sgd,
    Svrg,
    Gd,
    Ngd,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::SpiderSfo,
        Algorithm::SpiderSfoPlus,
        Algorithm::SpiderSzo,
        Algorithm::Sgd,
        Algorithm::Svrg,
        Algorithm::Gd,
        Algorithm::Ngd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::SpiderSfo => "spider-sfo",
            Algorithm::SpiderSfoPlus => "spider-sfo-plus",
            Algorithm::SpiderSzo => "spider-szo",
            Algorithm::Sgd => "sgd",
            Algorithm::Svrg => "svrg",
            Algorithm::Gd => "gd",
            Algorithm::Ngd => "ngd",
        }
    }

    /// Zeroth-order methods report function evaluations as their cost.
    pub fn uses_values(self) -> bool {
        self == Algorithm::SpiderSzo
    }

    fn allowed_keys(self) -> &'static [&'static str] {
        match self {
            Algorithm::SpiderSfo => &["option", "n0"],
            Algorithm::SpiderSfoPlus => &["n0", "delta", "nc_backend"],
            Algorithm::SpiderSzo => &["n0", "mu_override"],
            Algorithm::Sgd => &["step", "batch", "iterations"],
            Algorithm::Svrg => &["step", "batch", "epoch_len", "iterations"],
            Algorithm::Gd | Algorithm::Ngd => &["step", "iterations"],
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Algorithm::ALL.iter().map(|a| a.name()).collect();
                format!("unknown algorithm '{s}' (expected one of {})", names.join(", "))
            })
    }
}

/// Per-algorithm settings; unset fields fall back to the theory schedules.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgoConfig {
    pub algorithm: Algorithm,
    pub option: StepOption,
    pub n0: f64,
    pub delta: Option<f64>,
    pub nc_backend: NcBackend,
    pub mu_override: Option<f64>,
    pub step: Option<f64>,
    pub batch: Option<usize>,
    pub epoch_len: Option<usize>,
    pub iterations: Option<usize>,
}

impl AlgoConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            option: StepOption::Clipped,
            n0: 1.0,
            delta: None,
            nc_backend: NcBackend::Oja,
            mu_override: None,
            step: None,
            batch: None,
            epoch_len: None,
            iterations: None,
        }
    }
}

/// How the variance bound handed to the parameter rules is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaSource {
    /// Whatever the problem declares.
    Declared,
    /// Largest component-gradient spread over random points near `x0`.
    Measured { radius: f64 },
    Fixed(f64),
}

/// Which SFO counter fills the `sfo_cost` column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostConvention {
    /// Both gradients of an advance pair are counted.
    Pairs,
    /// An advance pair counts once.
    Samples,
}

/// Problem family and its construction parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub name: String,
    pub d: usize,
    pub n: usize,
    pub seed: u64,
    /// Chain length of the hard instance.
    pub chain_len: usize,
    /// Target accuracy the hard instance is scaled for.
    pub instance_eps: f64,
    /// Every coordinate of the start point.
    pub x0_fill: f64,
}

/// Overrides of the constants read from the problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantsConfig {
    pub lipschitz: Option<f64>,
    pub sigma: SigmaSource,
    pub gap: Option<f64>,
    pub rho: Option<f64>,
}

/// Which referee quantities are written to the traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefereeConfig {
    pub f_value: bool,
    pub grad_norm: bool,
    pub eigen: bool,
}

/// A full sweep: every algorithm at every accuracy for every seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub constants: ConstantsConfig,
    pub algorithms: Vec<AlgoConfig>,
    pub mode: Mode,
    pub eps: Vec<f64>,
    pub seeds: usize,
    pub seed_base: u64,
    pub p_fail: f64,
    pub workers: usize,
    pub cost_convention: CostConvention,
    pub output_dir: PathBuf,
    pub referee: RefereeConfig,
    /// Effective settings that determine the results, one `key = value`
    /// per line in key order.
    canonical: String,
}

fn config_err(field: impl Into<String>, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        field: field.into(),
        message: message.into(),
    }
}

fn parse_value<T: FromStr>(field: &str, raw: &str) -> Result<T, HarnessError>
where
    T::Err: fmt::Display,
{
    raw.parse::<T>()
        .map_err(|e| config_err(field, format!("cannot parse '{raw}': {e}")))
}

fn parse_bool(field: &str, raw: &str) -> Result<bool, HarnessError> {
    match raw {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(config_err(field, format!("expected a boolean, got '{raw}'"))),
    }
}

fn parse_list<T: FromStr>(field: &str, raw: &str) -> Result<Vec<T>, HarnessError>
where
    T::Err: fmt::Display,
{
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(field, s))
        .collect()
}

/// Parses `key = value` lines into a map, rejecting duplicates.
fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, HarnessError> {
    let mut pairs = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| config_err(format!("line {}", lineno + 1), format!("expected 'key = value', got '{line}'")))?;
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(config_err(format!("line {}", lineno + 1), "empty key"));
        }
        if pairs.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(config_err(key, "duplicate key"));
        }
    }
    Ok(pairs)
}

const TOP_LEVEL_KEYS: [&str; 24] = [
    "problem.name",
    "problem.d",
    "problem.n",
    "problem.seed",
    "problem.chain_len",
    "problem.instance_eps",
    "problem.x0_fill",
    "constants.lipschitz",
    "constants.sigma",
    "constants.sigma_radius",
    "constants.gap",
    "constants.rho",
    "run.algorithms",
    "run.mode",
    "run.eps",
    "run.seeds",
    "run.seed_base",
    "run.p_fail",
    "run.workers",
    "run.cost_convention",
    "output.dir",
    "referee.f_value",
    "referee.grad_norm",
    "referee.eigen",
];

/// Reads pairs out of the map, remembering which keys were consumed.
struct Reader {
    pairs: BTreeMap<String, String>,
}

impl Reader {
    fn get(&self, key: &str) -> Option<&str> {
        self.pairs.get(key).map(String::as_str)
    }

    fn required(&self, key: &str) -> Result<&str, HarnessError> {
        self.get(key).ok_or_else(|| config_err(key, "missing required key"))
    }

    fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, HarnessError>
    where
        T::Err: fmt::Display,
    {
        self.get(key).map(|raw| parse_value(key, raw)).transpose()
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T, HarnessError>
    where
        T::Err: fmt::Display,
    {
        Ok(self.opt(key)?.unwrap_or(default))
    }

    fn flag(&self, key: &str, default: bool) -> Result<bool, HarnessError> {
        self.get(key).map_or(Ok(default), |raw| parse_bool(key, raw))
    }
}

fn positive(field: &str, value: f64) -> Result<f64, HarnessError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(config_err(field, format!("must be positive and finite, got {value}")))
    }
}

impl ExperimentConfig {
    /// Parses and validates a configuration text.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let r = Reader {
            pairs: parse_pairs(text)?,
        };
        for key in r.pairs.keys() {
            if TOP_LEVEL_KEYS.contains(&key.as_str()) {
                continue;
            }
            let Some(rest) = key.strip_prefix("algo.") else {
                return Err(config_err(key.as_str(), "unknown key"));
            };
            let (name, field) = rest
                .rsplit_once('.')
                .ok_or_else(|| config_err(key.as_str(), "expected algo.<name>.<field>"))?;
            let algo: Algorithm = name.parse().map_err(|e: String| config_err(key.as_str(), e))?;
            if !algo.allowed_keys().contains(&field) {
                return Err(config_err(
                    key.as_str(),
                    format!("unknown field for {algo} (allowed: {})", algo.allowed_keys().join(", ")),
                ));
            }
        }

        let problem = ProblemConfig {
            name: r.required("problem.name")?.to_string(),
            d: r.or("problem.d", 0)?,
            n: r.or("problem.n", 0)?,
            seed: r.or("problem.seed", 0)?,
            chain_len: r.or("problem.chain_len", 4)?,
            instance_eps: positive("problem.instance_eps", r.or("problem.instance_eps", 0.1)?)?,
            x0_fill: r.or("problem.x0_fill", 0.0)?,
        };
        if problem.d == 0 {
            return Err(config_err("problem.d", "missing or zero dimension"));
        }
        if problem.n == 0 {
            return Err(config_err("problem.n", "missing or zero component count"));
        }

        let sigma = match r.get("constants.sigma") {
            None | Some("declared") => SigmaSource::Declared,
            Some("measured") => SigmaSource::Measured {
                radius: positive("constants.sigma_radius", r.or("constants.sigma_radius", 1.0)?)?,
            },
            Some(raw) => {
                let v: f64 = parse_value("constants.sigma", raw)?;
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(config_err("constants.sigma", format!("must be non-negative, got {v}")));
                }
                SigmaSource::Fixed(v)
            }
        };
        let check_opt = |key: &str| -> Result<Option<f64>, HarnessError> {
            r.opt::<f64>(key)?.map(|v| positive(key, v)).transpose()
        };
        let constants = ConstantsConfig {
            lipschitz: check_opt("constants.lipschitz")?,
            sigma,
            gap: check_opt("constants.gap")?,
            rho: check_opt("constants.rho")?,
        };

        let names: Vec<Algorithm> = r
            .required("run.algorithms")?
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e: String| config_err("run.algorithms", e)))
            .collect::<Result<_, _>>()?;
        if names.is_empty() {
            return Err(config_err("run.algorithms", "no algorithms listed"));
        }
        let mut algorithms = Vec::new();
        for (pos, &algo) in names.iter().enumerate() {
            if names[..pos].contains(&algo) {
                return Err(config_err("run.algorithms", format!("{algo} listed twice")));
            }
            algorithms.push(read_algo(&r, algo)?);
        }

        let eps: Vec<f64> = parse_list("run.eps", r.required("run.eps")?)?;
        if eps.is_empty() {
            return Err(config_err("run.eps", "empty accuracy grid"));
        }
        if eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(config_err("run.eps", "accuracies must be positive"));
        }
        if eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(config_err("run.eps", "accuracies must be strictly decreasing"));
        }
        let seeds: usize = r.or("run.seeds", 1)?;
        if seeds == 0 {
            return Err(config_err("run.seeds", "need at least one seed"));
        }
        let p_fail: f64 = r.or("run.p_fail", 0.1)?;
        if !(p_fail > 0.0 && p_fail < 1.0) {
            return Err(config_err("run.p_fail", format!("must lie in (0, 1), got {p_fail}")));
        }
        let workers: usize = r.or("run.workers", 1)?;
        if workers == 0 {
            return Err(config_err("run.workers", "need at least one worker"));
        }
        let cost_convention = match r.get("run.cost_convention").unwrap_or("pairs") {
            "pairs" => CostConvention::Pairs,
            "samples" => CostConvention::Samples,
            other => {
                return Err(config_err(
                    "run.cost_convention",
                    format!("expected 'pairs' or 'samples', got '{other}'"),
                ))
            }
        };
        let referee = RefereeConfig {
            f_value: r.flag("referee.f_value", true)?,
            grad_norm: r.flag("referee.grad_norm", true)?,
            eigen: r.flag("referee.eigen", false)?,
        };

        let mut cfg = Self {
            problem,
            constants,
            algorithms,
            mode: parse_value("run.mode", r.get("run.mode").unwrap_or("finite-sum"))?,
            eps,
            seeds,
            seed_base: r.or("run.seed_base", 0)?,
            p_fail,
            workers,
            cost_convention,
            output_dir: PathBuf::from(r.get("output.dir").unwrap_or("spider-out")),
            referee,
            canonical: String::new(),
        };
        cfg.refresh_canonical();
        Ok(cfg)
    }

    /// Replaces the seed base, as done by the `SPIDER_SEED` variable.
    pub fn set_seed_base(&mut self, seed_base: u64) {
        self.seed_base = seed_base;
        self.refresh_canonical();
    }

    /// Settings that affect results, in a stable text form. The output
    /// directory and worker count are excluded.
    pub fn canonical(&self) -> &str {
        &self.canonical
    }

    fn refresh_canonical(&mut self) {
        let mut m = BTreeMap::new();
        let p = &self.problem;
        m.insert("problem.name".to_string(), p.name.clone());
        m.insert("problem.d".into(), p.d.to_string());
        m.insert("problem.n".into(), p.n.to_string());
        m.insert("problem.seed".into(), p.seed.to_string());
        m.insert("problem.chain_len".into(), p.chain_len.to_string());
        m.insert("problem.instance_eps".into(), p.instance_eps.to_string());
        m.insert("problem.x0_fill".into(), p.x0_fill.to_string());
        let c = &self.constants;
        let show = |v: Option<f64>| v.map_or("declared".to_string(), |v| v.to_string());
        m.insert("constants.lipschitz".into(), show(c.lipschitz));
        m.insert(
            "constants.sigma".into(),
            match c.sigma {
                SigmaSource::Declared => "declared".into(),
                SigmaSource::Measured { radius } => format!("measured(radius={radius})"),
                SigmaSource::Fixed(v) => v.to_string(),
            },
        );
        m.insert("constants.gap".into(), show(c.gap));
        m.insert("constants.rho".into(), show(c.rho));
        let names: Vec<&str> = self.algorithms.iter().map(|a| a.algorithm.name()).collect();
        m.insert("run.algorithms".into(), names.join(","));
        for a in &self.algorithms {
            m.insert(format!("algo.{}", a.algorithm), format!("{a:?}"));
        }
        m.insert("run.mode".into(), self.mode.as_str().into());
        let eps: Vec<String> = self.eps.iter().map(|e| e.to_string()).collect();
        m.insert("run.eps".into(), eps.join(","));
        m.insert("run.seeds".into(), self.seeds.to_string());
        m.insert("run.seed_base".into(), self.seed_base.to_string());
        m.insert("run.p_fail".into(), self.p_fail.to_string());
        m.insert("run.cost_convention".into(), format!("{:?}", self.cost_convention));
        m.insert("referee".into(), format!("{:?}", self.referee));
        self.canonical = m.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    }
}

fn read_algo(r: &Reader, algo: Algorithm) -> Result<AlgoConfig, HarnessError> {
    let key = |field: &str| format!("algo.{algo}.{field}");
    let mut a = AlgoConfig::new(algo);
    if let Some(i) = r.opt::<u8>(&key("option"))? {
        a.option = StepOption::from_index(i).map_err(|e| config_err(key("option"), e.to_string()))?;
    }
    if let Some(n0) = r.opt::<f64>(&key("n0"))? {
        a.n0 = positive(&key("n0"), n0)?;
    }
    a.delta = r.opt::<f64>(&key("delta"))?.map(|v| positive(&key("delta"), v)).transpose()?;
    if let Some(raw) = r.get(&key("nc_backend")) {
        a.nc_backend = parse_value(&key("nc_backend"), raw)?;
    }
    a.mu_override = r
        .opt::<f64>(&key("mu_override"))?
        .map(|v| positive(&key("mu_override"), v))
        .transpose()?;
    a.step = r.opt::<f64>(&key("step"))?.map(|v| positive(&key("step"), v)).transpose()?;
    a.batch = r.opt(&key("batch"))?;
    a.epoch_len = r.opt(&key("epoch_len"))?;
    a.iterations = r.opt(&key("iterations"))?;
    for (field, v) in [("batch", a.batch), ("epoch_len", a.epoch_len), ("iterations", a.iterations)] {
        if v == Some(0) {
            return Err(config_err(key(field), "must be at least 1"));
        }
    }
    Ok(a)
}
