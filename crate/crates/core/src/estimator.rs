//! The running gradient estimate: periodic resets plus sampled differential
//! advances, together with Monte-Carlo and exhaustive referees for its error.

use rayon::prelude::*;

use crate::error::{Result, SpiderError};
use crate::ledger::CostLedger;
use crate::problem::Problem;
use crate::rng::{stream_rng, uniform_index, SpiderRng, STREAM_REPLAY_BASE};
use crate::vecops;

/// How an epoch-opening reset gathers gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResetBatch {
    /// Exact mean over all `n` components.
    Full,
    /// Mean over this many indices drawn with replacement.
    Sample(usize),
}

impl ResetBatch {
    /// Gradient evaluations one reset costs.
    pub fn cost(&self, n: usize) -> u64 {
        match *self {
            ResetBatch::Full => n as u64,
            ResetBatch::Sample(s) => s as u64,
        }
    }
}

/// Multiset of component indices drawn uniformly with replacement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleBatch {
    pub indices: Vec<usize>,
}

impl SampleBatch {
    pub fn draw(rng: &mut SpiderRng, n: usize, size: usize) -> Result<Self> {
        if size == 0 {
            return Err(SpiderError::EmptyBatch);
        }
        Ok(Self {
            indices: (0..size).map(|_| uniform_index(rng, n)).collect(),
        })
    }

    pub fn size(&self) -> usize {
        self.indices.len()
    }
}

/// Estimate `v` of the gradient at `x_prev`, with its epoch bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct SpiderState {
    pub v: Vec<f64>,
    pub x_prev: Vec<f64>,
    /// Advances since the last reset, always below `q`.
    pub epoch_pos: usize,
    /// Global iteration index of `x_prev`.
    pub k: usize,
    /// Epoch length.
    pub q: usize,
}

fn check_dim(problem: &dyn Problem, x: &[f64]) -> Result<()> {
    if x.len() != problem.dim() {
        return Err(SpiderError::Dimension {
            expected: problem.dim(),
            got: x.len(),
        });
    }
    Ok(())
}

fn check_q(q: usize) -> Result<()> {
    if q == 0 {
        return Err(SpiderError::InvalidParam {
            name: "q",
            reason: "epoch length must be at least 1".into(),
        });
    }
    Ok(())
}

/// Opens an epoch at `x` (iteration `k`).
pub fn reset(
    problem: &dyn Problem,
    x: &[f64],
    batch: ResetBatch,
    q: usize,
    k: usize,
    rng: &mut SpiderRng,
    ledger: &mut CostLedger,
) -> Result<SpiderState> {
    check_dim(problem, x)?;
    let sample = match batch {
        ResetBatch::Full => None,
        ResetBatch::Sample(s) => Some(SampleBatch::draw(rng, problem.n(), s)?),
    };
    reset_with_batch(problem, x, sample.as_ref(), q, k, ledger)
}

/// [`reset`] with a pre-drawn batch; `None` means the full data set.
pub fn reset_with_batch(
    problem: &dyn Problem,
    x: &[f64],
    batch: Option<&SampleBatch>,
    q: usize,
    k: usize,
    ledger: &mut CostLedger,
) -> Result<SpiderState> {
    check_dim(problem, x)?;
    check_q(q)?;
    let v = match batch {
        None => {
            let n = problem.n() as u64;
            ledger.charge_sfo(n, n);
            problem.full_grad(x)
        }
        Some(b) => {
            if b.size() == 0 {
                return Err(SpiderError::EmptyBatch);
            }
            let s = b.size() as u64;
            ledger.charge_sfo(s, s);
            problem.batch_grad(&b.indices, x)
        }
    };
    Ok(SpiderState {
        v,
        x_prev: x.to_vec(),
        epoch_pos: 0,
        k,
        q,
    })
}

/// Moves the estimate from `state.x_prev` to `x_new` with `s2` fresh samples.
pub fn advance(
    problem: &dyn Problem,
    state: &SpiderState,
    x_new: &[f64],
    s2: usize,
    rng: &mut SpiderRng,
    ledger: &mut CostLedger,
) -> Result<SpiderState> {
    check_dim(problem, x_new)?;
    check_epoch(state)?;
    let batch = SampleBatch::draw(rng, problem.n(), s2)?;
    advance_with_batch(problem, state, x_new, &batch, ledger)
}

fn check_epoch(state: &SpiderState) -> Result<()> {
    if state.epoch_pos + 1 >= state.q {
        return Err(SpiderError::EpochExhausted {
            epoch_pos: state.epoch_pos,
            q: state.q,
        });
    }
    Ok(())
}

/// [`advance`] with a pre-drawn batch.
pub fn advance_with_batch(
    problem: &dyn Problem,
    state: &SpiderState,
    x_new: &[f64],
    batch: &SampleBatch,
    ledger: &mut CostLedger,
) -> Result<SpiderState> {
    check_dim(problem, x_new)?;
    check_epoch(state)?;
    if batch.size() == 0 {
        return Err(SpiderError::EmptyBatch);
    }
    let w = 1.0 / batch.size() as f64;
    let mut diff = vec![0.0; x_new.len()];
    let mut term = vec![0.0; x_new.len()];
    for &i in &batch.indices {
        term.iter_mut().for_each(|t| *t = 0.0);
        problem.add_grad(i, x_new, 1.0, &mut term);
        problem.add_grad(i, &state.x_prev, -1.0, &mut term);
        vecops::axpy(w, &term, &mut diff);
    }
    let mut v = state.v.clone();
    vecops::axpy(1.0, &diff, &mut v);
    let s = batch.size() as u64;
    ledger.charge_sfo(2 * s, s);
    Ok(SpiderState {
        v,
        x_prev: x_new.to_vec(),
        epoch_pos: state.epoch_pos + 1,
        k: state.k + 1,
        q: state.q,
    })
}

/// Reset-or-advance schedule used when replaying the estimator along a fixed
/// path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorSchedule {
    pub reset: ResetBatch,
    pub s2: usize,
    pub q: usize,
}

/// Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let m = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / m;
        let var = if samples.len() > 1 {
            samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            std_err: (var / m).sqrt(),
        }
    }
}

/// Checks that consecutive points are at most `bound` apart.
pub fn check_displacements(trajectory: &[Vec<f64>], bound: f64) -> Result<()> {
    for (step, w) in trajectory.windows(2).enumerate() {
        let distance = vecops::dist(&w[0], &w[1]);
        if distance > bound * (1.0 + 1e-12) {
            return Err(SpiderError::DisplacementViolation {
                step: step + 1,
                distance,
                bound,
            });
        }
    }
    Ok(())
}

/// Replays the estimator along `trajectory` once and returns its final
/// squared error against the exact gradient.
pub fn replay_error(
    problem: &dyn Problem,
    trajectory: &[Vec<f64>],
    schedule: &EstimatorSchedule,
    rng: &mut SpiderRng,
) -> Result<f64> {
    let mut ledger = CostLedger::new();
    let mut state = reset(problem, &trajectory[0], schedule.reset, schedule.q, 0, rng, &mut ledger)?;
    for (k, x) in trajectory.iter().enumerate().skip(1) {
        state = if k % schedule.q == 0 {
            reset(problem, x, schedule.reset, schedule.q, k, rng, &mut ledger)?
        } else {
            advance(problem, &state, x, schedule.s2, rng, &mut ledger)?
        };
    }
    let last = trajectory.last().expect("non-empty trajectory");
    Ok(vecops::dist_sq(&state.v, &problem.full_grad(last)))
}

/// Monte-Carlo estimate of `E|v - grad f|^2` at the last trajectory point.
///
/// Replays run in parallel, each on its own random stream derived from
/// `seed`, so the result does not depend on the thread count.
pub fn mc_error_second_moment(
    problem: &dyn Problem,
    trajectory: &[Vec<f64>],
    schedule: &EstimatorSchedule,
    displacement_bound: f64,
    trials: usize,
    seed: u64,
) -> Result<McEstimate> {
    if trajectory.is_empty() || trials == 0 {
        return Err(SpiderError::InvalidParam {
            name: "trials",
            reason: "need a non-empty trajectory and at least one trial".into(),
        });
    }
    check_displacements(trajectory, displacement_bound)?;
    let errors = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, STREAM_REPLAY_BASE + t as u64);
            replay_error(problem, trajectory, schedule, &mut rng)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(McEstimate::from_samples(&errors))
}

/// Default bound on the number of enumerated sample paths.
pub const ENUMERATION_CAP: u64 = 20_000_000;

/// Exact `E|v_K - grad f(x_K)|^2` for an estimator that starts exact at
/// `trajectory[0]` and advances through the remaining points, step `k`
/// drawing `sizes[k-1]` samples. Every ordered sample path is visited.
pub fn enumerate_variance_oracle(
    problem: &dyn Problem,
    trajectory: &[Vec<f64>],
    sizes: &[usize],
    cap: u64,
) -> Result<f64> {
    let steps = trajectory.len().saturating_sub(1);
    if sizes.len() != steps {
        return Err(SpiderError::InvalidParam {
            name: "sizes",
            reason: format!("need one batch size per step ({steps}), got {}", sizes.len()),
        });
    }
    if sizes.contains(&0) {
        return Err(SpiderError::EmptyBatch);
    }
    let n = problem.n();
    let total: usize = sizes.iter().sum();
    let paths = (n as f64).powi(total as i32);
    if paths > cap as f64 {
        return Err(SpiderError::EnumerationCap { paths, cap });
    }
    // the estimator error is the sum of per-step differential errors
    let step_outcomes: Vec<Vec<Vec<f64>>> = (0..steps)
        .map(|k| differential_outcomes(problem, &trajectory[k], &trajectory[k + 1], sizes[k]))
        .collect();
    let d = problem.dim();
    let mut acc = 0.0;
    let mut err = vec![0.0; d];
    enumerate_paths(&step_outcomes, 0, &mut err, &mut acc);
    let v0_err = 0.0;
    Ok(v0_err + acc / paths)
}

fn enumerate_paths(steps: &[Vec<Vec<f64>>], k: usize, err: &mut Vec<f64>, acc: &mut f64) {
    if k == steps.len() {
        *acc += vecops::norm_sq(err);
        return;
    }
    for outcome in &steps[k] {
        vecops::axpy(1.0, outcome, err);
        enumerate_paths(steps, k + 1, err, acc);
        vecops::axpy(-1.0, outcome, err);
    }
}

/// Error `xi - (grad f(x_new) - grad f(x_prev))` for every ordered sample
/// of size `s`, in lexicographic order.
fn differential_outcomes(problem: &dyn Problem, x_prev: &[f64], x_new: &[f64], s: usize) -> Vec<Vec<f64>> {
    let n = problem.n();
    let d = problem.dim();
    let mut truth = problem.full_grad(x_new);
    vecops::axpy(-1.0, &problem.full_grad(x_prev), &mut truth);
    let diffs: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut g = problem.grad(i, x_new);
            vecops::axpy(-1.0, &problem.grad(i, x_prev), &mut g);
            g
        })
        .collect();
    let count = n.pow(s as u32);
    (0..count)
        .map(|mut code| {
            let mut xi = vec![0.0; d];
            for _ in 0..s {
                vecops::axpy(1.0 / s as f64, &diffs[code % n], &mut xi);
                code /= n;
            }
            vecops::axpy(-1.0, &truth, &mut xi);
            xi
        })
        .collect()
}

/// Sum over steps of the exact per-step differential error variance.
pub fn telescoped_variance(problem: &dyn Problem, trajectory: &[Vec<f64>], sizes: &[usize]) -> Result<f64> {
    let steps = trajectory.len().saturating_sub(1);
    if sizes.len() != steps {
        return Err(SpiderError::InvalidParam {
            name: "sizes",
            reason: format!("need one batch size per step ({steps}), got {}", sizes.len()),
        });
    }
    if sizes.contains(&0) {
        return Err(SpiderError::EmptyBatch);
    }
    Ok((0..steps)
        .map(|k| {
            let outs = differential_outcomes(problem, &trajectory[k], &trajectory[k + 1], sizes[k]);
            outs.iter().map(|o| vecops::norm_sq(o)).sum::<f64>() / outs.len() as f64
        })
        .sum())
}
