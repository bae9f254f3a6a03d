//! Reference optimizers sharing the problem and ledger interfaces.

use crate::error::{Result, SpiderError};
use crate::ledger::CostLedger;
use crate::problem::Problem;
use crate::rng::{stream_rng, uniform_index, STREAM_OUTPUT, STREAM_SAMPLING};
use crate::sfo::{ceil_size, Mode, ProblemConstants};
use crate::trace::{Event, Recorder, RunTrace, Status, TraceOptions};
use crate::vecops;

/// Step and budget settings of a baseline run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineParams {
    pub step: f64,
    pub batch: usize,
    /// Inner iterations per snapshot (SVRG only).
    pub epoch_len: usize,
    pub iterations: usize,
    pub mode: Mode,
    /// Full-gradient methods stop once `|grad f| <= stop_tol`.
    pub stop_tol: Option<f64>,
}

fn validate(p: &BaselineParams, n: usize) -> Result<()> {
    if !(p.step > 0.0 && p.step.is_finite()) {
        return Err(SpiderError::InvalidParam {
            name: "step",
            reason: format!("must be positive, got {}", p.step),
        });
    }
    if p.batch == 0 || p.epoch_len == 0 {
        return Err(SpiderError::EmptyBatch);
    }
    if p.mode == Mode::FiniteSum && p.batch > n {
        return Err(SpiderError::InvalidParam {
            name: "batch",
            reason: format!("batch {} exceeds n = {n}", p.batch),
        });
    }
    Ok(())
}

impl BaselineParams {
    /// Constant step `min(eps^2 / (2 L sigma^2), 1/L)`, batch 1 and
    /// `ceil(4 Delta / (step eps^2))` iterations, so the cost grows like
    /// `eps^-4`.
    pub fn sgd_theory(eps: f64, c: &ProblemConstants, mode: Mode) -> Result<Self> {
        let sigma = c.sigma.ok_or(SpiderError::MissingConstant("sigma"))?;
        let l = c.lipschitz;
        let step = if sigma > 0.0 {
            (eps * eps / (2.0 * l * sigma * sigma)).min(1.0 / l)
        } else {
            1.0 / l
        };
        Ok(Self {
            step,
            batch: 1,
            epoch_len: 1,
            iterations: ceil_size(4.0 * c.gap / (step * eps * eps)),
            mode,
            stop_tol: None,
        })
    }

    /// Step `1 / (3 L n^(2/3))`, one snapshot per `n` inner steps.
    pub fn svrg_theory(eps: f64, c: &ProblemConstants) -> Self {
        let nf = c.n as f64;
        let step = 1.0 / (3.0 * c.lipschitz * nf.powf(2.0 / 3.0));
        Self {
            step,
            batch: 1,
            epoch_len: c.n.max(1),
            iterations: ceil_size(4.0 * c.gap / (step * eps * eps)),
            mode: Mode::FiniteSum,
            stop_tol: None,
        }
    }

    /// Step `1/L`, `ceil(2 L Delta / eps^2)` iterations, stop at `eps`.
    pub fn gd_theory(eps: f64, c: &ProblemConstants) -> Self {
        Self {
            step: 1.0 / c.lipschitz,
            batch: c.n.max(1),
            epoch_len: 1,
            iterations: ceil_size(2.0 * c.lipschitz * c.gap / (eps * eps)),
            mode: Mode::FiniteSum,
            stop_tol: Some(eps),
        }
    }

    /// Steps of length `eps / L`, `ceil(2 L Delta / eps^2)` iterations,
    /// stop at `eps`.
    pub fn ngd_theory(eps: f64, c: &ProblemConstants) -> Self {
        Self {
            step: eps / c.lipschitz,
            ..Self::gd_theory(eps, c)
        }
    }
}

fn check_x0(problem: &dyn Problem, x0: &[f64]) -> Result<()> {
    if x0.len() != problem.dim() {
        return Err(SpiderError::Dimension {
            expected: problem.dim(),
            got: x0.len(),
        });
    }
    Ok(())
}

/// Mini-batch SGD with a constant step, returning a uniformly drawn iterate.
pub fn run_sgd(
    problem: &dyn Problem,
    params: &BaselineParams,
    x0: &[f64],
    seed: u64,
    opts: TraceOptions,
) -> Result<RunTrace> {
    check_x0(problem, x0)?;
    validate(params, problem.n())?;
    let mut rng = stream_rng(seed, STREAM_SAMPLING);
    let out_idx = uniform_index(&mut stream_rng(seed, STREAM_OUTPUT), params.iterations);
    let mut ledger = CostLedger::new();
    let mut rec = Recorder::new(opts, problem);
    let mut x = x0.to_vec();
    let mut chosen = None;
    let n = problem.n();
    let b = params.batch as u64;
    for k in 0..params.iterations {
        let idx: Vec<usize> = (0..params.batch).map(|_| uniform_index(&mut rng, n)).collect();
        let g = problem.batch_grad(&idx, &x);
        ledger.charge_sfo(b, b);
        rec.record(k, &x, &g, &ledger, Event::Advance);
        if k == out_idx {
            chosen = Some(x.clone());
        }
        vecops::axpy(-params.step, &g, &mut x);
    }
    Ok(rec.finish(Status::Completed, chosen.unwrap_or(x), ledger, params.iterations, Some(out_idx)))
}

/// Control-variate direction `grad f_i(x) - grad f_i(snapshot) + snapshot_grad`.
pub fn svrg_direction(problem: &dyn Problem, i: usize, x: &[f64], snapshot: &[f64], snapshot_grad: &[f64]) -> Vec<f64> {
    let mut g = snapshot_grad.to_vec();
    problem.add_grad(i, x, 1.0, &mut g);
    problem.add_grad(i, snapshot, -1.0, &mut g);
    g
}

/// SVRG: a full gradient at each snapshot, then `epoch_len` control-variate
/// steps. Finite-sum only.
pub fn run_svrg(
    problem: &dyn Problem,
    params: &BaselineParams,
    x0: &[f64],
    seed: u64,
    opts: TraceOptions,
) -> Result<RunTrace> {
    if params.mode != Mode::FiniteSum {
        return Err(SpiderError::OnlineUnsupported);
    }
    check_x0(problem, x0)?;
    validate(params, problem.n())?;
    let mut rng = stream_rng(seed, STREAM_SAMPLING);
    let out_idx = uniform_index(&mut stream_rng(seed, STREAM_OUTPUT), params.iterations);
    let mut ledger = CostLedger::new();
    let mut rec = Recorder::new(opts, problem);
    let n = problem.n();
    let mut x = x0.to_vec();
    let mut chosen = None;
    let mut snapshot = x.clone();
    let mut snap_grad = Vec::new();
    let b = params.batch as u64;
    for k in 0..params.iterations {
        let event = if k % params.epoch_len == 0 {
            snapshot.copy_from_slice(&x);
            snap_grad = problem.full_grad(&x);
            ledger.charge_sfo(n as u64, n as u64);
            Event::Reset
        } else {
            Event::Advance
        };
        let mut g = vec![0.0; x.len()];
        for _ in 0..params.batch {
            let i = uniform_index(&mut rng, n);
            vecops::axpy(1.0 / b as f64, &svrg_direction(problem, i, &x, &snapshot, &snap_grad), &mut g);
        }
        ledger.charge_sfo(2 * b, 2 * b);
        rec.record(k, &x, &g, &ledger, event);
        if k == out_idx {
            chosen = Some(x.clone());
        }
        vecops::axpy(-params.step, &g, &mut x);
    }
    Ok(rec.finish(Status::Completed, chosen.unwrap_or(x), ledger, params.iterations, Some(out_idx)))
}

fn run_full_gradient(
    problem: &dyn Problem,
    params: &BaselineParams,
    x0: &[f64],
    normalized: bool,
    opts: TraceOptions,
) -> Result<RunTrace> {
    check_x0(problem, x0)?;
    let mut ledger = CostLedger::new();
    let mut rec = Recorder::new(opts, problem);
    let n = problem.n() as u64;
    let mut x = x0.to_vec();
    for k in 0..params.iterations {
        let g = problem.full_grad(&x);
        ledger.charge_sfo(n, n);
        rec.record(k, &x, &g, &ledger, Event::Reset);
        let gn = vecops::norm(&g);
        if params.stop_tol.is_some_and(|t| gn <= t) {
            rec.record(k, &x, &g, &ledger, Event::Stop);
            return Ok(rec.finish(Status::Stopped, x, ledger, k + 1, None));
        }
        let s = if normalized { params.step / gn } else { params.step };
        vecops::axpy(-s, &g, &mut x);
    }
    let status = if params.stop_tol.is_some() {
        Status::Exhausted
    } else {
        Status::Completed
    };
    Ok(rec.finish(status, x, ledger, params.iterations, None))
}

/// Full gradient descent with a constant step.
pub fn run_gd(problem: &dyn Problem, params: &BaselineParams, x0: &[f64], opts: TraceOptions) -> Result<RunTrace> {
    run_full_gradient(problem, params, x0, false, opts)
}

/// Full-gradient normalized descent with step length `params.step`.
pub fn run_ngd(problem: &dyn Problem, params: &BaselineParams, x0: &[f64], opts: TraceOptions) -> Result<RunTrace> {
    run_full_gradient(problem, params, x0, true, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::Quadratic;

    fn two_component() -> Quadratic {
        Quadratic::new(vec![vec![1.0], vec![3.0]], vec![vec![0.0], vec![0.0]])
    }

    #[test]
    fn svrg_direction_reduces_variance_on_two_components() {
        let p = two_component();
        let snap_grad = p.full_grad(&[1.0]);
        let truth = p.full_grad(&[1.5])[0];
        let var = |dirs: [f64; 2]| dirs.iter().map(|g| (g - truth).powi(2)).sum::<f64>() / 2.0;
        let svrg = [0, 1].map(|i| svrg_direction(&p, i, &[1.5], &[1.0], &snap_grad)[0]);
        let sgd = [0, 1].map(|i| p.grad(i, &[1.5])[0]);
        assert_eq!(svrg, [2.5, 3.5]);
        assert!((var(svrg) - 0.25).abs() < 1e-15);
        assert!((var(sgd) - 2.25).abs() < 1e-15);
    }

    #[test]
    fn svrg_rejects_online_mode() {
        let p = two_component();
        let mut params = BaselineParams::gd_theory(0.1, &ProblemConstants {
            lipschitz: 1.0,
            sigma: None,
            gap: 1.0,
            hessian_lipschitz: None,
            n: 2,
        });
        params.batch = 1;
        params.mode = Mode::Online;
        assert_eq!(
            run_svrg(&p, &params, &[0.0], 0, TraceOptions::quiet()),
            Err(SpiderError::OnlineUnsupported)
        );
    }
}
