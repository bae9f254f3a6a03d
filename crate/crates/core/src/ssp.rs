//! Second-order optimizer: negative-curvature search interleaved with
//! estimate-preserving descent blocks.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Result, SpiderError};
use crate::estimator::SpiderState;
use crate::ledger::CostLedger;
use crate::problem::Problem;
use crate::rng::{
    rademacher, random_unit, stream_rng, uniform_index, SpiderRng, STREAM_NCS_BASE, STREAM_SAMPLING, STREAM_SIGNS,
};
use crate::sfo::{self, AlgoParams, Mode, ProblemConstants};
use crate::trace::{Event, Recorder, RunTrace, Status, TraceOptions};
use crate::vecops;

/// Largest dimension for which a dense Hessian is built.
pub const DENSE_CAP: usize = 512;

/// Backend used by [`nc_search`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NcBackend {
    /// Stochastic power iteration on finite-difference Hessian-vector products.
    Oja,
    /// Dense eigendecomposition of the mean Hessian.
    Exact,
}

impl std::str::FromStr for NcBackend {
    type Err = SpiderError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oja" => Ok(NcBackend::Oja),
            "exact" => Ok(NcBackend::Exact),
            _ => Err(SpiderError::InvalidParam {
                name: "nc-backend",
                reason: format!("expected `oja` or `exact`, got `{s}`"),
            }),
        }
    }
}

/// Result of a negative-curvature search.
#[derive(Debug, Clone, PartialEq)]
pub enum NcsOutcome {
    /// No sufficiently negative direction was found.
    Bot,
    /// Unit direction with strongly negative curvature.
    Direction(Vec<f64>),
}

/// Parameters of the second-order optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct SspParams {
    /// First-order parameters (batch sizes, epoch, step length, mode).
    pub base: AlgoParams,
    /// Curvature tolerance.
    pub delta: f64,
    pub rho: f64,
    /// Mini-steps per block.
    pub inner_steps: usize,
    /// Maximum number of outer blocks.
    pub outer_blocks: usize,
    /// Stopping threshold scale for first-order blocks.
    pub eps_tilde: f64,
    /// Failure probability handed to each curvature search.
    pub ncs_fail_prob: f64,
}

impl SspParams {
    /// Iteration cap `outer_blocks * inner_steps`.
    pub fn iteration_cap(&self) -> usize {
        self.outer_blocks * self.inner_steps
    }

    /// Sign-averaged decrease guaranteed by one second-order block.
    pub fn expected_decrease(&self) -> f64 {
        self.delta.powi(3) / (3.0 * self.rho * self.rho)
    }
}

/// Derives second-order parameters. `delta` defaults to `sqrt(rho eps)`.
pub fn derive_params_ssp(
    eps: f64,
    constants: &ProblemConstants,
    n0: f64,
    mode: Mode,
    p: f64,
    delta: Option<f64>,
) -> Result<SspParams> {
    let rho = constants
        .hessian_lipschitz
        .filter(|r| *r > 0.0)
        .ok_or(SpiderError::MissingConstant("rho"))?;
    let base = sfo::derive_params(eps, constants, n0, mode, p)?;
    let l = constants.lipschitz;
    let delta = delta.unwrap_or((rho * eps).sqrt());
    if !(delta > 0.0 && delta <= l) {
        return Err(SpiderError::InvalidParam {
            name: "delta",
            reason: format!("{delta} outside (0, L = {l}]"),
        });
    }
    let gap = constants.gap;
    let inner_raw = delta * l * n0 / (rho * eps);
    let inner_steps = sfo::ceil_tol(inner_raw).max(1.0) as usize;
    let m = sfo::floor_tol((3.0 * rho * rho * gap / delta.powi(3)).max(4.0 * gap * rho / (delta * eps)));
    let outer_blocks = 4 * m as usize + 4;
    let factor = match mode {
        Mode::Online => 10.0,
        Mode::FiniteSum => 16.0,
    };
    let eps_tilde = factor * eps * (256.0 * (m + 1.0) * inner_raw + 64.0).ln();
    Ok(SspParams {
        base,
        delta,
        rho,
        inner_steps,
        outer_blocks,
        eps_tilde,
        ncs_fail_prob: 1.0 / (16.0 * outer_blocks as f64),
    })
}

/// Dense mean Hessian at `x`, from analytic Hessian-vector products when
/// available and central differences of the full gradient otherwise.
pub fn dense_hessian(problem: &dyn Problem, x: &[f64]) -> Result<DMatrix<f64>> {
    let d = problem.dim();
    if d > DENSE_CAP {
        return Err(SpiderError::DenseCap { dim: d, cap: DENSE_CAP });
    }
    let n = problem.n();
    let mut h = DMatrix::zeros(d, d);
    let mut e = vec![0.0; d];
    let analytic = problem.hvp(0, x, &e).is_some();
    for j in 0..d {
        e[j] = 1.0;
        let col: Vec<f64> = if analytic {
            let mut acc = vec![0.0; d];
            for i in 0..n {
                let hv = problem.hvp(i, x, &e).expect("hvp availability is uniform");
                vecops::axpy(1.0 / n as f64, &hv, &mut acc);
            }
            acc
        } else {
            let step = 1e-5 * (1.0 + x[j].abs());
            let mut xp = x.to_vec();
            xp[j] += step;
            let mut xm = x.to_vec();
            xm[j] -= step;
            vecops::sub(&problem.full_grad(&xp), &problem.full_grad(&xm))
                .into_iter()
                .map(|g| g / (2.0 * step))
                .collect()
        };
        e[j] = 0.0;
        for r in 0..d {
            h[(r, j)] = col[r];
        }
    }
    // symmetrise away finite-difference noise
    Ok((&h + h.transpose()) * 0.5)
}

/// Smallest eigenvalue of the mean Hessian at `x` with a unit eigenvector.
pub fn eigen_referee(problem: &dyn Problem, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let h = dense_hessian(problem, x)?;
    let eig = SymmetricEigen::new(h);
    let (idx, lambda) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, &l)| if l < best.1 { (i, l) } else { best });
    let v: Vec<f64> = eig.eigenvectors.column(idx).iter().cloned().collect();
    Ok((lambda, v))
}

/// `w^T (hess f_i(x)) w` through a gradient difference along `w`.
fn curvature_sample(problem: &dyn Problem, i: usize, x: &[f64], xw: &[f64], w: &[f64], a: f64) -> f64 {
    let mut g = problem.grad(i, xw);
    vecops::axpy(-1.0, &problem.grad(i, x), &mut g);
    vecops::dot(&g, w) / a
}

/// Searches for a direction of curvature at most `-delta`, certifying
/// `lambda_min >= -2 delta` when none is returned. Each guarantee holds with
/// probability at least `1 - p`.
///
/// The stochastic backend runs power iteration on `I - H/(2L)` with
/// minibatched finite-difference Hessian-vector products, then estimates the
/// Rayleigh quotient of the result with enough samples to resolve it to
/// `delta/4` and compares it to `-1.5 delta`.
pub fn nc_search(
    problem: &dyn Problem,
    x: &[f64],
    delta: f64,
    p: f64,
    backend: NcBackend,
    seed: u64,
    ledger: &mut CostLedger,
) -> Result<NcsOutcome> {
    let l = problem.meta().lipschitz;
    if !(delta > 0.0 && p > 0.0 && p < 1.0) {
        return Err(SpiderError::InvalidParam {
            name: "delta/p",
            reason: format!("need delta > 0 and p in (0, 1), got {delta}, {p}"),
        });
    }
    let threshold = -1.5 * delta;
    match backend {
        NcBackend::Exact => {
            let (lambda, v) = eigen_referee(problem, x)?;
            let d = problem.dim() as u64;
            ledger.charge_hvp(problem.n() as u64 * d);
            Ok(if lambda <= threshold {
                NcsOutcome::Direction(v)
            } else {
                NcsOutcome::Bot
            })
        }
        NcBackend::Oja => {
            let mut rng = stream_rng(seed, 0);
            let d = problem.dim();
            let n = problem.n();
            let a = delta / (8.0 * l);
            let lr = 1.0 / (2.0 * l);
            let iters = (8.0 * (l / delta) * (4.0 * d as f64 / p).ln()).ceil() as usize;
            const MINIBATCH: usize = 4;
            let mut w = random_unit(&mut rng, d);
            let mut xw = vec![0.0; d];
            let mut hw = vec![0.0; d];
            for _ in 0..iters {
                xw.copy_from_slice(x);
                vecops::axpy(a, &w, &mut xw);
                hw.iter_mut().for_each(|h| *h = 0.0);
                let c = 1.0 / (a * MINIBATCH as f64);
                for _ in 0..MINIBATCH {
                    let i = uniform_index(&mut rng, n);
                    problem.add_grad(i, &xw, c, &mut hw);
                    problem.add_grad(i, x, -c, &mut hw);
                }
                ledger.charge_sfo(2 * MINIBATCH as u64, 2 * MINIBATCH as u64);
                vecops::axpy(-lr, &hw, &mut w);
                let nw = vecops::norm(&w);
                if nw <= 1e-300 || !nw.is_finite() {
                    w = random_unit(&mut rng, d);
                } else {
                    vecops::scale(&mut w, 1.0 / nw);
                }
            }
            xw.copy_from_slice(x);
            vecops::axpy(a, &w, &mut xw);
            let estimate = certify_curvature(problem, x, &xw, &w, a, delta, p, &mut rng, ledger);
            Ok(if estimate <= threshold {
                NcsOutcome::Direction(w)
            } else {
                NcsOutcome::Bot
            })
        }
    }
}

/// Estimate of `w^T H w` accurate to `delta/4` with probability `1 - p`.
#[allow(clippy::too_many_arguments)]
fn certify_curvature(
    problem: &dyn Problem,
    x: &[f64],
    xw: &[f64],
    w: &[f64],
    a: f64,
    delta: f64,
    p: f64,
    rng: &mut SpiderRng,
    ledger: &mut CostLedger,
) -> f64 {
    let n = problem.n();
    let l = problem.meta().lipschitz;
    let tol = delta / 4.0;
    let log_term = (2.0 / p).ln();
    const PILOT: usize = 64;
    let exact = |ledger: &mut CostLedger| {
        ledger.charge_sfo(2 * n as u64, 2 * n as u64);
        (0..n).map(|i| curvature_sample(problem, i, x, xw, w, a)).sum::<f64>() / n as f64
    };
    if n <= PILOT {
        return exact(ledger);
    }
    let pilot: Vec<f64> = (0..PILOT)
        .map(|_| curvature_sample(problem, uniform_index(rng, n), x, xw, w, a))
        .collect();
    ledger.charge_sfo(2 * PILOT as u64, 2 * PILOT as u64);
    let mean = pilot.iter().sum::<f64>() / PILOT as f64;
    let var = pilot.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (PILOT - 1) as f64;
    let range = 2.0 * l;
    let m = (2.0 * var * log_term / (tol * tol) + 2.0 * range * log_term / (3.0 * tol)).ceil() as usize;
    if m >= n {
        return exact(ledger);
    }
    let m = m.max(1);
    ledger.charge_sfo(2 * m as u64, 2 * m as u64);
    (0..m)
        .map(|_| curvature_sample(problem, uniform_index(rng, n), x, xw, w, a))
        .sum::<f64>()
        / m as f64
}

/// Position of the optimizer between blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Cursor {
    pub x: Vec<f64>,
    /// Global iteration index of `x`.
    pub k: usize,
    /// Estimate carried across blocks; `None` before the first refresh.
    pub state: Option<SpiderState>,
}

impl Cursor {
    pub fn start(x0: &[f64]) -> Self {
        Self {
            x: x0.to_vec(),
            k: 0,
            state: None,
        }
    }
}

/// Outcome of a first-order block.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockResult {
    Stopped(Cursor),
    Continue(Cursor),
}

/// Second-order block with an explicit sign: `inner_steps` mini-steps of
/// length `eta` along `-sign * w1`, refreshing the estimate at each one.
#[allow(clippy::too_many_arguments)]
pub fn second_order_block_signed(
    problem: &dyn Problem,
    cursor: Cursor,
    w1: &[f64],
    sign: f64,
    params: &SspParams,
    rng: &mut SpiderRng,
    ledger: &mut CostLedger,
) -> Result<Cursor> {
    second_order_inner(problem, cursor, w1, sign, params, rng, ledger, None)
}

/// Second-order block drawing its sign from `sign_rng`.
pub fn second_order_block(
    problem: &dyn Problem,
    cursor: Cursor,
    w1: &[f64],
    params: &SspParams,
    sign_rng: &mut SpiderRng,
    rng: &mut SpiderRng,
    ledger: &mut CostLedger,
) -> Result<Cursor> {
    let sign = rademacher(sign_rng);
    second_order_inner(problem, cursor, w1, sign, params, rng, ledger, None)
}

#[allow(clippy::too_many_arguments)]
fn second_order_inner(
    problem: &dyn Problem,
    mut cur: Cursor,
    w1: &[f64],
    sign: f64,
    params: &SspParams,
    rng: &mut SpiderRng,
    ledger: &mut CostLedger,
    mut rec: Option<&mut Recorder>,
) -> Result<Cursor> {
    let step = sign * params.base.eta;
    for _ in 0..params.inner_steps {
        let (s, event) = sfo::refresh(problem, cur.state.as_ref(), &cur.x, cur.k, &params.base, rng, ledger)?;
        if let Some(r) = rec.as_deref_mut() {
            r.record(cur.k, &cur.x, &s.v, ledger, event);
        }
        vecops::axpy(-step, w1, &mut cur.x);
        cur.state = Some(s);
        cur.k += 1;
    }
    Ok(cur)
}

/// Up to `inner_steps` normalized steps, stopping once `|v| <= 2 eps_tilde`.
pub fn first_order_block(
    problem: &dyn Problem,
    cursor: Cursor,
    params: &SspParams,
    rng: &mut SpiderRng,
    ledger: &mut CostLedger,
) -> Result<BlockResult> {
    first_order_inner(problem, cursor, params, rng, ledger, None)
}

fn first_order_inner(
    problem: &dyn Problem,
    mut cur: Cursor,
    params: &SspParams,
    rng: &mut SpiderRng,
    ledger: &mut CostLedger,
    mut rec: Option<&mut Recorder>,
) -> Result<BlockResult> {
    for _ in 0..params.inner_steps {
        let (s, event) = sfo::refresh(problem, cur.state.as_ref(), &cur.x, cur.k, &params.base, rng, ledger)?;
        if let Some(r) = rec.as_deref_mut() {
            r.record(cur.k, &cur.x, &s.v, ledger, event);
        }
        if vecops::norm(&s.v) <= 2.0 * params.eps_tilde {
            if let Some(r) = rec.as_deref_mut() {
                r.record(cur.k, &cur.x, &s.v, ledger, Event::Stop);
            }
            cur.state = Some(s);
            return Ok(BlockResult::Stopped(cur));
        }
        cur.x = sfo::step_option1(&cur.x, &s.v, params.base.eta);
        cur.state = Some(s);
        cur.k += 1;
    }
    Ok(BlockResult::Continue(cur))
}

/// Runs the second-order optimizer from `x0`.
pub fn run_sfo_plus(
    problem: &dyn Problem,
    params: &SspParams,
    backend: NcBackend,
    x0: &[f64],
    seed: u64,
    opts: TraceOptions,
) -> Result<RunTrace> {
    if x0.len() != problem.dim() {
        return Err(SpiderError::Dimension {
            expected: problem.dim(),
            got: x0.len(),
        });
    }
    let mut rng = stream_rng(seed, STREAM_SAMPLING);
    let mut signs = stream_rng(seed, STREAM_SIGNS);
    let mut ledger = CostLedger::new();
    let mut rec = Recorder::new(opts, problem);
    let mut cur = Cursor::start(x0);
    let ncs_seed = |j: usize| {
        // distinct derived seed per search, independent of the sampling stream
        let mut r = stream_rng(seed, STREAM_NCS_BASE + j as u64);
        rand::Rng::random::<u64>(&mut r)
    };
    for j in 0..params.outer_blocks {
        let outcome = nc_search(
            problem,
            &cur.x,
            params.delta,
            params.ncs_fail_prob,
            backend,
            ncs_seed(j),
            &mut ledger,
        )?;
        let v_now = cur.state.as_ref().map(|s| s.v.clone()).unwrap_or_else(|| vec![0.0; x0.len()]);
        rec.record(cur.k, &cur.x, &v_now, &ledger, Event::Ncs);
        cur = match outcome {
            NcsOutcome::Direction(w1) => {
                let sign = rademacher(&mut signs);
                second_order_inner(problem, cur, &w1, sign, params, &mut rng, &mut ledger, Some(&mut rec))?
            }
            NcsOutcome::Bot => match first_order_inner(problem, cur, params, &mut rng, &mut ledger, Some(&mut rec))? {
                BlockResult::Stopped(c) => {
                    let iters = c.k + 1;
                    return Ok(rec.finish(Status::Stopped, c.x, ledger, iters, None));
                }
                BlockResult::Continue(c) => c,
            },
        };
    }
    let iters = cur.k;
    Ok(rec.finish(Status::Exhausted, cur.x, ledger, iters, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::Quadratic;

    fn constants(l: f64, rho: f64, gap: f64) -> ProblemConstants {
        ProblemConstants {
            lipschitz: l,
            sigma: Some(1.0),
            gap,
            hessian_lipschitz: Some(rho),
            n: 100,
        }
    }

    #[test]
    fn block_counts_example() {
        let p = derive_params_ssp(0.04, &constants(1.0, 1.0, 1.0), 1.0, Mode::Online, 0.1, None).unwrap();
        assert!((p.delta - 0.2).abs() < 1e-15);
        assert_eq!(p.inner_steps, 5);
        assert_eq!(p.outer_blocks, 2004);
        assert_eq!(p.iteration_cap(), 2004 * 5);
        let want = 10.0 * 0.04 * (256.0 * 501.0 * 5.0 + 64.0f64).ln();
        assert!((p.eps_tilde - want).abs() < 1e-9);
    }

    #[test]
    fn missing_rho_is_an_error() {
        let mut c = constants(1.0, 1.0, 1.0);
        c.hessian_lipschitz = None;
        assert_eq!(
            derive_params_ssp(0.04, &c, 1.0, Mode::Online, 0.1, None),
            Err(SpiderError::MissingConstant("rho"))
        );
    }

    #[test]
    fn eigen_referee_on_diagonal_hessians() {
        let id = Quadratic::new(vec![vec![1.0; 3]], vec![vec![0.0; 3]]);
        let (l, v) = eigen_referee(&id, &[0.2, 0.3, 0.4]).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
        assert!((vecops::norm(&v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_backend_on_convex_problem_returns_bot() {
        let id = Quadratic::new(vec![vec![1.0; 3]], vec![vec![0.0; 3]]);
        let mut ledger = CostLedger::new();
        let out = nc_search(&id, &[1.0, 0.0, 0.0], 0.5, 0.1, NcBackend::Exact, 0, &mut ledger).unwrap();
        assert_eq!(out, NcsOutcome::Bot);
        assert_eq!(ledger.hvp, 3);
    }
}
