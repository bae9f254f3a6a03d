//! Post-processing helpers: log-log cost fits, binomial frequency checks and
//! the verify-and-restart wrapper.

use statrs::distribution::{Binomial, DiscreteCDF};

use crate::error::{Result, SpiderError};
use crate::ledger::CostLedger;
use crate::problem::Problem;
use crate::rng::{stream_rng, uniform_index};
use crate::trace::{RunTrace, Status};
use crate::vecops;

/// Least-squares fit of `log(cost)` against `log(1/eps)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Fits `log cost = intercept + slope * log(1/eps)` over `(eps, cost)` pairs.
pub fn scaling_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 3 {
        return Err(SpiderError::Degenerate(format!(
            "need at least 3 eps points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(e, c)| !(e > 0.0 && c > 0.0)) {
        return Err(SpiderError::Degenerate("eps and cost must be positive".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| -p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= 1e-300 {
        return Err(SpiderError::Degenerate("all eps values coincide".into()));
    }
    if syy <= 1e-24 * (1.0 + my * my) {
        return Err(SpiderError::Degenerate("cost series is constant".into()));
    }
    let slope = sxy / sxx;
    Ok(SlopeFit {
        slope,
        intercept: my - slope * mx,
        r2: sxy * sxy / (sxx * syy),
    })
}

/// `P(X <= k)` for `X ~ Binomial(trials, p)`.
pub fn binomial_cdf(k: u64, trials: u64, p: f64) -> f64 {
    Binomial::new(p, trials).expect("valid binomial parameters").cdf(k)
}

/// One-sided check that an observed success count is consistent with a
/// success rate of at least `target`: passes unless the count is so low
/// that `P(X <= successes | target) < alpha`.
pub fn rate_at_least(successes: u64, trials: u64, target: f64, alpha: f64) -> bool {
    binomial_cdf(successes, trials, target) >= alpha
}

/// One-sided check that an observed failure count is consistent with a
/// failure rate of at most `target`.
pub fn rate_at_most(failures: u64, trials: u64, target: f64, alpha: f64) -> bool {
    if failures == 0 {
        return true;
    }
    1.0 - binomial_cdf(failures - 1, trials, target) >= alpha
}

/// How the restart wrapper checks a candidate point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verifier {
    /// Exact full gradient, charged `n` evaluations.
    Exact,
    /// Mean of this many sampled component gradients.
    Sampled(usize),
}

impl Verifier {
    /// Gradient-norm estimate at `x`, charged to `ledger`.
    pub fn estimate(&self, problem: &dyn Problem, x: &[f64], seed: u64, ledger: &mut CostLedger) -> f64 {
        match *self {
            Verifier::Exact => {
                let n = problem.n() as u64;
                ledger.charge_sfo(n, n);
                problem.grad_norm(x)
            }
            Verifier::Sampled(m) => {
                let m = m.max(1);
                let mut rng = stream_rng(seed, 0);
                let idx: Vec<usize> = (0..m).map(|_| uniform_index(&mut rng, problem.n())).collect();
                ledger.charge_sfo(m as u64, m as u64);
                vecops::norm(&problem.batch_grad(&idx, x))
            }
        }
    }
}

/// Verification threshold in units of `eps`: by Markov's inequality an
/// output with `E|grad f| <= 5 eps` passes `|grad f| <= 15 eps` with
/// probability at least 2/3.
pub const VERIFY_FACTOR: f64 = 15.0;

/// Attempt budget `max(1, ceil(log2(1/p)))`.
pub fn restart_budget(p: f64) -> usize {
    ((1.0 / p).log2().ceil() as usize).max(1)
}

/// Reruns `attempt(i)` until `verify(x)` is at most `threshold` or the
/// budget for failure probability `p` runs out.
///
/// The returned trace carries the accepted (or last) attempt's rows and
/// point, the summed ledger of all attempts, and the attempt count. The
/// status is [`Status::Failed`] when no attempt was accepted.
pub fn verify_and_restart<A, V>(mut attempt: A, mut verify: V, threshold: f64, p: f64) -> Result<RunTrace>
where
    A: FnMut(usize) -> Result<RunTrace>,
    V: FnMut(usize, &[f64], &mut CostLedger) -> f64,
{
    let budget = restart_budget(p);
    let mut total = CostLedger::new();
    let mut last = None;
    for i in 0..budget {
        let mut trace = attempt(i)?;
        total += trace.ledger;
        let est = verify(i, &trace.x_out, &mut total);
        trace.attempts = i + 1;
        if est <= threshold {
            trace.ledger = total;
            return Ok(trace);
        }
        last = Some(trace);
    }
    let mut trace = last.expect("budget is at least one attempt");
    trace.ledger = total;
    trace.status = Status::Failed;
    Ok(trace)
}
