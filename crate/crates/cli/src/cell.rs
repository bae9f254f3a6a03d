//! One optimizer run: an algorithm at one accuracy and one seed.

use spider_core::baselines::{run_gd, run_ngd, run_sgd, run_svrg, BaselineParams};
use spider_core::sfo::{derive_params, run_sfo, Mode, ProblemConstants};
use spider_core::ssp::{derive_params_ssp, run_sfo_plus};
use spider_core::szo::{derive_params_szo, run_szo};
use spider_core::{Problem, Result, RunTrace, TraceOptions, ValuesOnly};

use crate::config::{AlgoConfig, Algorithm};

/// Everything a run needs besides the algorithm, accuracy and seed.
#[derive(Clone, Copy)]
pub struct CellContext<'a> {
    pub problem: &'a dyn Problem,
    pub constants: &'a ProblemConstants,
    pub x0: &'a [f64],
    pub mode: Mode,
    pub p_fail: f64,
    pub opts: TraceOptions,
}

fn with_overrides(mut b: BaselineParams, algo: &AlgoConfig) -> BaselineParams {
    if let Some(step) = algo.step {
        b.step = step;
    }
    if let Some(batch) = algo.batch {
        b.batch = batch;
    }
    if let Some(epoch_len) = algo.epoch_len {
        b.epoch_len = epoch_len;
    }
    if let Some(iterations) = algo.iterations {
        b.iterations = iterations;
    }
    b
}

/// Derives the algorithm's parameters for `eps` and runs it from the start
/// point.
pub fn run_cell(ctx: &CellContext<'_>, algo: &AlgoConfig, eps: f64, seed: u64) -> Result<RunTrace> {
    let CellContext {
        problem,
        constants: c,
        x0,
        mode,
        p_fail,
        opts,
    } = *ctx;
    match algo.algorithm {
        Algorithm::SpiderSfo => {
            let params = derive_params(eps, c, algo.n0, mode, p_fail)?;
            run_sfo(problem, &params, algo.option, x0, seed, opts)
        }
        Algorithm::SpiderSfoPlus => {
            let params = derive_params_ssp(eps, c, algo.n0, mode, p_fail, algo.delta)?;
            run_sfo_plus(problem, &params, algo.nc_backend, x0, seed, opts)
        }
        Algorithm::SpiderSzo => {
            let params = derive_params_szo(eps, c, problem.dim(), algo.n0, mode, algo.mu_override)?;
            run_szo(&ValuesOnly(problem), &params, x0, seed, opts, Some(problem))
        }
        Algorithm::Sgd => {
            let b = with_overrides(BaselineParams::sgd_theory(eps, c, mode)?, algo);
            run_sgd(problem, &b, x0, seed, opts)
        }
        Algorithm::Svrg => {
            let b = BaselineParams {
                mode,
                ..BaselineParams::svrg_theory(eps, c)
            };
            run_svrg(problem, &with_overrides(b, algo), x0, seed, opts)
        }
        Algorithm::Gd => run_gd(problem, &with_overrides(BaselineParams::gd_theory(eps, c), algo), x0, opts),
        Algorithm::Ngd => run_ngd(problem, &with_overrides(BaselineParams::ngd_theory(eps, c), algo), x0, opts),
    }
}
