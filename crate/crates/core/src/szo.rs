//! Zeroth-order optimizer: coordinate difference quotients open each epoch
//! and two-point Gaussian differences advance the estimate.
//!
//! Every optimizer entry point takes a [`ValueOracle`], which has no gradient
//! method, so the optimizer path cannot touch gradients. A [`Problem`] may be
//! passed separately as a referee for trace columns.

use rayon::prelude::*;

use crate::error::{Result, SpiderError};
use crate::estimator::{McEstimate, SpiderState};
use crate::ledger::CostLedger;
use crate::problem::{Problem, ValueOracle};
use crate::rng::{gaussian_vec, stream_rng, uniform_index, SpiderRng, STREAM_OUTPUT, STREAM_REPLAY_BASE, STREAM_SAMPLING};
use crate::sfo::{self, clipped_step_size, Mode, ProblemConstants};
use crate::trace::{Event, Recorder, RunTrace, Status, TraceOptions};
use crate::vecops;

/// Derived parameters of the zeroth-order optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct SzoParams {
    pub eps: f64,
    pub constants: ProblemConstants,
    pub dim: usize,
    pub n0: f64,
    pub mode: Mode,
    /// Smoothing radius.
    pub mu: f64,
    /// Samples shared by all coordinates in an online reset; `None` means
    /// exact difference quotients of `f`.
    pub reset_per_coord: Option<usize>,
    /// Pairs `(i, u)` per advance.
    pub s2: usize,
    pub q: usize,
    pub budget: usize,
}

impl SzoParams {
    /// Function evaluations charged by one reset.
    pub fn reset_cost(&self) -> u64 {
        let per = self.reset_per_coord.unwrap_or(self.constants.n) as u64;
        2 * self.dim as u64 * per
    }

    /// Function evaluations charged by one advance.
    pub fn advance_cost(&self) -> u64 {
        4 * self.s2 as u64
    }

    /// Exact evaluation count of an `iterations`-long run.
    pub fn izo_closed_form(&self, iterations: usize) -> u64 {
        let resets = iterations.div_ceil(self.q) as u64;
        resets * self.reset_cost() + (iterations as u64 - resets) * self.advance_cost()
    }

    /// Upper bound on the finite-sum evaluation count obtained by bounding
    /// every ceiling by its argument plus one.
    pub fn finite_sum_izo_bound(&self) -> f64 {
        let c = &self.constants;
        let d = self.dim as f64;
        let rn = (c.n as f64).sqrt();
        let lgd = c.lipschitz * c.gap * rn / (self.eps * self.eps);
        (48.0 * d + 16.0 * (2.0 * d + 9.0)) * lgd
            + 2.0 * d * c.n as f64
            + 4.0 * (2.0 * d + 9.0) * rn / self.n0
            + 12.0 * d * rn / self.n0
    }
}

/// Default smoothing radius `min(eps / (2 sqrt6 L sqrt d), eps / (sqrt6 n0 L (d+6)^1.5))`.
pub fn default_mu(eps: f64, lipschitz: f64, d: usize, n0: f64) -> f64 {
    let s6 = 6f64.sqrt();
    let d = d as f64;
    (eps / (2.0 * s6 * lipschitz * d.sqrt())).min(eps / (s6 * n0 * lipschitz * (d + 6.0).powf(1.5)))
}

/// `(mu / 2) L (d + 3)^1.5`, the distance between the gradients of `f` and
/// of its Gaussian smoothing.
pub fn smoothing_bias_bound(mu: f64, lipschitz: f64, d: usize) -> f64 {
    0.5 * mu * lipschitz * (d as f64 + 3.0).powf(1.5)
}

/// Bound on the second moment of one two-point differential between points
/// `dx` apart.
pub fn pair_second_moment_bound(lipschitz: f64, d: usize, mu: f64, dx: f64) -> f64 {
    let d = d as f64;
    let l2 = lipschitz * lipschitz;
    2.0 * (d + 4.0) * l2 * dx * dx + 2.0 * mu * mu * (d + 6.0).powi(3) * l2
}

/// Derives batch sizes, epoch length, smoothing radius and budget.
/// `mu_override` replaces the default radius.
pub fn derive_params_szo(
    eps: f64,
    constants: &ProblemConstants,
    dim: usize,
    n0: f64,
    mode: Mode,
    mu_override: Option<f64>,
) -> Result<SzoParams> {
    sfo::check_common(eps, constants, 0.5)?;
    if dim == 0 {
        return Err(SpiderError::InvalidParam {
            name: "d",
            reason: "dimension must be positive".into(),
        });
    }
    let c = *constants;
    let df = dim as f64;
    let (reset_per_coord, s2, q) = match mode {
        Mode::Online => {
            let sigma = c.sigma.ok_or(SpiderError::MissingConstant("sigma"))?;
            sfo::check_range("n0", n0, 1.0, 30.0 * (2.0 * df + 9.0) * sigma / eps)?;
            let s1 = sfo::ceil_size(96.0 * df * sigma * sigma / (eps * eps));
            (
                Some(s1.div_ceil(dim).max(1)),
                sfo::ceil_size(30.0 * (2.0 * df + 9.0) * sigma / (eps * n0)),
                sfo::ceil_size(5.0 * n0 * sigma / eps),
            )
        }
        Mode::FiniteSum => {
            let rn = (c.n as f64).sqrt();
            sfo::check_range("n0", n0, 1.0, rn / 6.0)?;
            (
                None,
                sfo::ceil_size((2.0 * df + 9.0) * rn / n0),
                sfo::ceil_size(n0 * rn / 6.0),
            )
        }
    };
    let mu = mu_override.unwrap_or_else(|| default_mu(eps, c.lipschitz, dim, n0));
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(SpiderError::InvalidParam {
            name: "mu",
            reason: format!("smoothing radius must be positive, got {mu}"),
        });
    }
    Ok(SzoParams {
        eps,
        constants: c,
        dim,
        n0,
        mode,
        mu,
        reset_per_coord,
        s2,
        q,
        budget: sfo::base_count(eps, &c, n0) as usize + 1,
    })
}

/// Online per-coordinate sample count `max(1, ceil(S1 / d))` from a raw
/// reset size.
pub fn per_coordinate(s1: usize, d: usize) -> usize {
    s1.div_ceil(d).max(1)
}

/// Forward-difference estimate of the gradient at `x`.
///
/// With `per_coord = Some(s)` one batch of `s` indices is shared by all
/// coordinates; with `None` the full function is differenced.
#[allow(clippy::too_many_arguments)]
pub fn coord_reset(
    oracle: &dyn ValueOracle,
    x: &[f64],
    mu: f64,
    per_coord: Option<usize>,
    q: usize,
    k: usize,
    rng: &mut SpiderRng,
    ledger: &mut CostLedger,
) -> Result<SpiderState> {
    let d = oracle.dim();
    if x.len() != d {
        return Err(SpiderError::Dimension { expected: d, got: x.len() });
    }
    let indices: Vec<usize> = match per_coord {
        Some(0) => return Err(SpiderError::EmptyBatch),
        Some(s) => (0..s).map(|_| uniform_index(rng, oracle.n())).collect(),
        None => (0..oracle.n()).collect(),
    };
    let w = 1.0 / indices.len() as f64;
    let mut probe = x.to_vec();
    let mut v = vec![0.0; d];
    for j in 0..d {
        probe[j] = x[j] + mu;
        let mut acc = 0.0;
        for &i in &indices {
            acc += oracle.value(i, &probe) - oracle.value(i, x);
        }
        probe[j] = x[j];
        v[j] = w * acc / mu;
    }
    ledger.charge_izo(2 * d as u64 * indices.len() as u64);
    Ok(SpiderState {
        v,
        x_prev: x.to_vec(),
        epoch_pos: 0,
        k,
        q,
    })
}

/// Advances the estimate with `s2` pairs. Each pair draws its component
/// index first and then a fresh standard Gaussian direction.
pub fn gaussian_pair_advance(
    oracle: &dyn ValueOracle,
    state: &SpiderState,
    x_new: &[f64],
    mu: f64,
    s2: usize,
    rng: &mut SpiderRng,
    ledger: &mut CostLedger,
) -> Result<SpiderState> {
    let d = oracle.dim();
    if x_new.len() != d {
        return Err(SpiderError::Dimension { expected: d, got: x_new.len() });
    }
    if s2 == 0 {
        return Err(SpiderError::EmptyBatch);
    }
    if state.epoch_pos + 1 >= state.q {
        return Err(SpiderError::EpochExhausted {
            epoch_pos: state.epoch_pos,
            q: state.q,
        });
    }
    let mut v = state.v.clone();
    let mut a = vec![0.0; d];
    let mut b = vec![0.0; d];
    for _ in 0..s2 {
        let i = uniform_index(rng, oracle.n());
        let u = gaussian_vec(rng, d);
        for j in 0..d {
            a[j] = x_new[j] + mu * u[j];
            b[j] = state.x_prev[j] + mu * u[j];
        }
        let diff = (oracle.value(i, &a) - oracle.value(i, x_new)) - (oracle.value(i, &b) - oracle.value(i, &state.x_prev));
        vecops::axpy(diff / (mu * s2 as f64), &u, &mut v);
    }
    ledger.charge_izo(4 * s2 as u64);
    Ok(SpiderState {
        v,
        x_prev: x_new.to_vec(),
        epoch_pos: state.epoch_pos + 1,
        k: state.k + 1,
        q: state.q,
    })
}

/// Runs the zeroth-order optimizer from `x0` with clipped steps and a
/// uniformly drawn output iterate.
pub fn run_szo(
    oracle: &dyn ValueOracle,
    params: &SzoParams,
    x0: &[f64],
    seed: u64,
    opts: TraceOptions,
    referee: Option<&dyn Problem>,
) -> Result<RunTrace> {
    if x0.len() != oracle.dim() || params.dim != oracle.dim() {
        return Err(SpiderError::Dimension {
            expected: oracle.dim(),
            got: x0.len(),
        });
    }
    let mut rng = stream_rng(seed, STREAM_SAMPLING);
    let mut ledger = CostLedger::new();
    let mut rec = Recorder::value_only(opts, oracle, referee);
    let out_idx = uniform_index(&mut stream_rng(seed, STREAM_OUTPUT), params.budget);
    let l = params.constants.lipschitz;
    let mut x = x0.to_vec();
    let mut chosen = None;
    let mut state: Option<SpiderState> = None;
    for k in 0..params.budget {
        let (s, event) = match &state {
            Some(s) if k % params.q != 0 => (
                gaussian_pair_advance(oracle, s, &x, params.mu, params.s2, &mut rng, &mut ledger)?,
                Event::Advance,
            ),
            _ => (
                coord_reset(oracle, &x, params.mu, params.reset_per_coord, params.q, k, &mut rng, &mut ledger)?,
                Event::Reset,
            ),
        };
        rec.record(k, &x, &s.v, &ledger, event);
        if k == out_idx {
            chosen = Some(x.clone());
        }
        let eta = clipped_step_size(vecops::norm(&s.v), params.eps, l, params.n0);
        vecops::axpy(-eta, &s.v, &mut x);
        state = Some(s);
    }
    Ok(rec.finish(
        Status::Completed,
        chosen.expect("output index lies inside the budget"),
        ledger,
        params.budget,
        Some(out_idx),
    ))
}

/// Monte-Carlo mean of a vector with the standard error of its mean.
#[derive(Debug, Clone, PartialEq)]
pub struct McVector {
    pub mean: Vec<f64>,
    /// `sqrt(trace(Cov) / trials)`: root-mean-square error of `mean`.
    pub std_err: f64,
}

/// Estimates the gradient of the Gaussian smoothing of `f` at `x` from
/// `trials` two-point differences of the full function.
pub fn smoothed_grad_referee(oracle: &dyn ValueOracle, x: &[f64], mu: f64, trials: usize, seed: u64) -> McVector {
    assert!(trials >= 1 && mu > 0.0);
    let d = x.len();
    let fx = oracle.full_value(x);
    const CHUNK: usize = 256;
    let chunks = trials.div_ceil(CHUNK);
    let partial: Vec<(Vec<f64>, Vec<f64>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, STREAM_REPLAY_BASE + c as u64);
            let mut sum = vec![0.0; d];
            let mut sq = vec![0.0; d];
            let mut probe = vec![0.0; d];
            for _ in 0..CHUNK.min(trials - c * CHUNK) {
                let u = gaussian_vec(&mut rng, d);
                for j in 0..d {
                    probe[j] = x[j] + mu * u[j];
                }
                let s = (oracle.full_value(&probe) - fx) / mu;
                for j in 0..d {
                    let g = s * u[j];
                    sum[j] += g;
                    sq[j] += g * g;
                }
            }
            (sum, sq)
        })
        .collect();
    let mut sum = vec![0.0; d];
    let mut sq = vec![0.0; d];
    for (s, q) in &partial {
        vecops::axpy(1.0, s, &mut sum);
        vecops::axpy(1.0, q, &mut sq);
    }
    let m = trials as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / m).collect();
    let var_total: f64 = if trials > 1 {
        sq.iter().zip(&mean).map(|(q, mu_j)| (q - m * mu_j * mu_j) / (m - 1.0)).sum()
    } else {
        0.0
    };
    McVector {
        mean,
        std_err: (var_total.max(0.0) / m).sqrt(),
    }
}

/// Monte-Carlo estimate of `E[(f(x + mu u) - f(x))^2 |u|^2 / mu^2]`.
pub fn two_point_second_moment(oracle: &dyn ValueOracle, x: &[f64], mu: f64, trials: usize, seed: u64) -> McEstimate {
    let d = x.len();
    let fx = oracle.full_value(x);
    let mut rng = stream_rng(seed, STREAM_REPLAY_BASE);
    let samples: Vec<f64> = (0..trials)
        .map(|_| {
            let u = gaussian_vec(&mut rng, d);
            let probe: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + mu * b).collect();
            let s = (oracle.full_value(&probe) - fx) / mu;
            s * s * vecops::norm_sq(&u)
        })
        .collect();
    McEstimate::from_samples(&samples)
}
