//! Turns configuration sections into a problem, a start point and constants.

use spider_core::problems::{empirical_sigma, make_suite, HardInstance, HardInstanceSpec};
use spider_core::sfo::ProblemConstants;
use spider_core::{Problem, SpiderError};

use crate::config::{ConstantsConfig, ProblemConfig, SigmaSource};
use crate::error::HarnessError;

/// Name of the scaled chain construction in `problem.name`.
pub const HARD_INSTANCE: &str = "hard-instance";

pub fn build_problem(cfg: &ProblemConfig) -> Result<Box<dyn Problem>, HarnessError> {
    let built: Result<Box<dyn Problem>, SpiderError> = if cfg.name == HARD_INSTANCE {
        let spec = HardInstanceSpec {
            eps: cfg.instance_eps,
            ..HardInstanceSpec::new(cfg.chain_len, cfg.n, cfg.d, cfg.seed)
        };
        HardInstance::new(spec).map(|h| Box::new(h) as Box<dyn Problem>)
    } else {
        make_suite(&cfg.name, cfg.d, cfg.n, cfg.seed)
    };
    built.map_err(|e| HarnessError::Config {
        field: match e {
            SpiderError::UnknownSuite(_) => "problem.name".into(),
            _ => "problem.d".into(),
        },
        message: e.to_string(),
    })
}

pub fn start_point(cfg: &ProblemConfig) -> Vec<f64> {
    vec![cfg.x0_fill; cfg.d]
}

/// Problem constants with the configured overrides applied.
pub fn resolve_constants(
    problem: &dyn Problem,
    x0: &[f64],
    cfg: &ConstantsConfig,
) -> Result<ProblemConstants, HarnessError> {
    let meta = problem.meta();
    let gap = match cfg.gap {
        Some(g) => g,
        None => {
            let lower = meta.f_lower.or(meta.f_star).ok_or_else(|| HarnessError::Config {
                field: "constants.gap".into(),
                message: format!("{} declares no lower bound; set the gap explicitly", problem.name()),
            })?;
            (problem.full_value(x0) - lower).max(f64::MIN_POSITIVE)
        }
    };
    let sigma = match cfg.sigma {
        SigmaSource::Declared => meta.sigma,
        SigmaSource::Measured { radius } => Some(empirical_sigma(problem, x0, radius, 64, 0)),
        SigmaSource::Fixed(s) => Some(s),
    };
    Ok(ProblemConstants {
        lipschitz: cfg.lipschitz.unwrap_or(meta.lipschitz),
        sigma,
        gap,
        hessian_lipschitz: cfg.rho.or(meta.hessian_lipschitz),
        n: problem.n(),
    })
}
