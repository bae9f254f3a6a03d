//! First-order optimizer driven by the path-integrated estimate.
//!
//! Two step rules are available. [`StepOption::Normalized`] takes steps of
//! fixed length and stops as soon as the estimate is small.
//! [`StepOption::Clipped`] scales the step down for large estimates, runs a
//! fixed budget and returns a uniformly drawn iterate.

use crate::error::{Result, SpiderError};
use crate::estimator::{self, ResetBatch, SpiderState};
use crate::ledger::CostLedger;
use crate::problem::Problem;
use crate::rng::{stream_rng, uniform_index, STREAM_OUTPUT, STREAM_SAMPLING};
use crate::trace::{Event, Recorder, RunTrace, Status, TraceOptions};
use crate::vecops;

/// Sampling regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Resets use a sampled batch; `n` may be huge or unknown.
    Online,
    /// Resets use the exact full gradient.
    FiniteSum,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Online => "online",
            Mode::FiniteSum => "finite-sum",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = SpiderError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "online" => Ok(Mode::Online),
            "finite-sum" | "finite_sum" | "finitesum" => Ok(Mode::FiniteSum),
            _ => Err(SpiderError::InvalidParam {
                name: "mode",
                reason: format!("expected `online` or `finite-sum`, got `{s}`"),
            }),
        }
    }
}

/// Step rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StepOption {
    /// Fixed-length normalized steps with an early stop (option 1).
    Normalized,
    /// Length-capped steps, fixed budget, uniform output (option 2).
    Clipped,
}

impl StepOption {
    pub fn from_index(i: u8) -> Result<Self> {
        match i {
            1 => Ok(StepOption::Normalized),
            2 => Ok(StepOption::Clipped),
            _ => Err(SpiderError::InvalidParam {
                name: "option",
                reason: format!("expected 1 or 2, got {i}"),
            }),
        }
    }
}

/// Problem constants consumed by the parameter rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemConstants {
    pub lipschitz: f64,
    pub sigma: Option<f64>,
    /// Initial optimality gap `f(x0) - inf f` (or an upper bound on it).
    pub gap: f64,
    pub hessian_lipschitz: Option<f64>,
    pub n: usize,
}

impl ProblemConstants {
    /// Reads `L`, `sigma` and the Hessian-Lipschitz constant from the
    /// problem metadata and sets the gap to `f(x0) - f_lower`.
    pub fn from_problem(problem: &dyn Problem, x0: &[f64]) -> Result<Self> {
        let meta = problem.meta();
        let lower = meta
            .f_lower
            .or(meta.f_star)
            .ok_or(SpiderError::MissingConstant("f_lower"))?;
        Ok(Self {
            lipschitz: meta.lipschitz,
            sigma: meta.sigma,
            gap: (problem.full_value(x0) - lower).max(f64::MIN_POSITIVE),
            hessian_lipschitz: meta.hessian_lipschitz,
            n: problem.n(),
        })
    }
}

/// Fully derived run parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgoParams {
    pub eps: f64,
    /// Stopping threshold scale: the normalized rule stops at `|v| <= 2 eps_tilde`.
    pub eps_tilde: f64,
    pub constants: ProblemConstants,
    pub n0: f64,
    pub mode: Mode,
    pub fail_prob: f64,
    pub reset: ResetBatch,
    pub s2: usize,
    pub q: usize,
    /// Normalized step length `eps / (L n0)`.
    pub eta: f64,
    /// Iteration budget `floor(4 L Delta n0 / eps^2) + 1`.
    pub budget: usize,
}

impl AlgoParams {
    /// Budget used by the step rule: one more iteration for the normalized
    /// rule's high-probability guarantee.
    pub fn budget_for(&self, option: StepOption) -> usize {
        match option {
            StepOption::Normalized => self.budget + 1,
            StepOption::Clipped => self.budget,
        }
    }

    /// Largest displacement any accepted step may make.
    pub fn max_step(&self) -> f64 {
        self.eta
    }

    /// Closed-form total cost of a clipped-rule run under the convention in
    /// which each advance costs `S2`.
    pub fn sample_cost_bound(&self) -> f64 {
        let c = &self.constants;
        let (l, gap, eps, n0) = (c.lipschitz, c.gap, self.eps, self.n0);
        match self.mode {
            Mode::Online => {
                let s = c.sigma.unwrap_or(0.0);
                16.0 * l * gap * s / eps.powi(3) + 2.0 * s * s / eps.powi(2) + 4.0 * s / (n0 * eps)
            }
            Mode::FiniteSum => {
                let rn = (c.n as f64).sqrt();
                c.n as f64 + 8.0 * l * gap * rn / eps.powi(2) + 2.0 * rn / n0
            }
        }
    }

    /// Exact ledger totals `(sfo, sfo_samples)` of an `iterations`-long run that
    /// never stops early.
    pub fn ledger_closed_form(&self, iterations: usize) -> (u64, u64) {
        let resets = iterations.div_ceil(self.q) as u64;
        let advances = iterations as u64 - resets;
        let r = self.reset.cost(self.constants.n);
        let s2 = self.s2 as u64;
        (resets * r + 2 * advances * s2, resets * r + advances * s2)
    }
}

const ROUND_TOL: f64 = 1e-9;

/// `floor` that treats values within a relative `1e-9` of an integer as
/// that integer.
pub fn floor_tol(x: f64) -> f64 {
    (x + ROUND_TOL * x.abs().max(1.0)).floor()
}

/// `ceil` with the same tolerance as [`floor_tol`].
pub fn ceil_tol(x: f64) -> f64 {
    (x - ROUND_TOL * x.abs().max(1.0)).ceil()
}

pub(crate) fn ceil_size(x: f64) -> usize {
    ceil_tol(x).max(1.0) as usize
}

pub(crate) fn check_range(name: &'static str, value: f64, lo: f64, hi: f64) -> Result<()> {
    let tol = ROUND_TOL * hi.abs().max(1.0);
    if !(value >= lo - tol && value <= hi + tol) {
        return Err(SpiderError::InvalidParam {
            name,
            reason: format!("{value} outside [{lo}, {hi}]"),
        });
    }
    Ok(())
}

pub(crate) fn check_common(eps: f64, c: &ProblemConstants, p: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(SpiderError::InvalidParam {
            name: "eps",
            reason: format!("must be positive, got {eps}"),
        });
    }
    if !(c.lipschitz > 0.0 && c.gap > 0.0) {
        return Err(SpiderError::InvalidParam {
            name: "constants",
            reason: "L and Delta must be positive".into(),
        });
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(SpiderError::InvalidParam {
            name: "p",
            reason: format!("failure probability must lie in (0, 1), got {p}"),
        });
    }
    Ok(())
}

/// `floor(4 L Delta n0 / eps^2)`.
pub(crate) fn base_count(eps: f64, c: &ProblemConstants, n0: f64) -> f64 {
    floor_tol(4.0 * c.lipschitz * c.gap * n0 / (eps * eps))
}

/// Derives batch sizes, epoch length, step size, budget and threshold.
pub fn derive_params(eps: f64, constants: &ProblemConstants, n0: f64, mode: Mode, p: f64) -> Result<AlgoParams> {
    check_common(eps, constants, p)?;
    let c = *constants;
    let (reset, s2, q) = match mode {
        Mode::Online => {
            let sigma = c.sigma.ok_or(SpiderError::MissingConstant("sigma"))?;
            check_range("n0", n0, 1.0, 2.0 * sigma / eps)?;
            (
                ResetBatch::Sample(ceil_size(2.0 * sigma * sigma / (eps * eps))),
                ceil_size(2.0 * sigma / (eps * n0)),
                ceil_size(sigma * n0 / eps),
            )
        }
        Mode::FiniteSum => {
            if c.n == 0 {
                return Err(SpiderError::InvalidParam {
                    name: "n",
                    reason: "finite-sum mode needs n >= 1".into(),
                });
            }
            let rn = (c.n as f64).sqrt();
            check_range("n0", n0, 1.0, rn)?;
            (ResetBatch::Full, ceil_size(rn / n0), ceil_size(n0 * rn))
        }
    };
    let base = base_count(eps, &c, n0);
    let factor = match mode {
        Mode::Online => 10.0,
        Mode::FiniteSum => 16.0,
    };
    let eps_tilde = factor * eps * ((4.0 * base + 12.0) / p).ln();
    Ok(AlgoParams {
        eps,
        eps_tilde,
        constants: c,
        n0,
        mode,
        fail_prob: p,
        reset,
        s2,
        q,
        eta: eps / (c.lipschitz * n0),
        budget: base as usize + 1,
    })
}

/// `x - eta * v / |v|`.
///
/// # Panics
/// When `v` is zero; the stopping rule must run first.
pub fn step_option1(x: &[f64], v: &[f64], eta: f64) -> Vec<f64> {
    let nv = vecops::norm(v);
    assert!(nv > 0.0, "normalized step with a zero estimate");
    let mut out = x.to_vec();
    vecops::axpy(-eta / nv, v, &mut out);
    out
}

/// Step size `min(eps / (L n0 |v|), 1 / (2 L n0))`.
pub fn clipped_step_size(v_norm: f64, eps: f64, lipschitz: f64, n0: f64) -> f64 {
    let cap = 1.0 / (2.0 * lipschitz * n0);
    if v_norm > 0.0 {
        (eps / (lipschitz * n0 * v_norm)).min(cap)
    } else {
        cap
    }
}

/// `x - eta_k v` with the clipped step size.
pub fn step_option2(x: &[f64], v: &[f64], eps: f64, lipschitz: f64, n0: f64) -> Vec<f64> {
    let eta = clipped_step_size(vecops::norm(v), eps, lipschitz, n0);
    let mut out = x.to_vec();
    vecops::axpy(-eta, v, &mut out);
    out
}

/// Refreshes the estimate at `x` for iteration `k`: reset on epoch
/// boundaries, advance otherwise.
pub(crate) fn refresh(
    problem: &dyn Problem,
    state: Option<&SpiderState>,
    x: &[f64],
    k: usize,
    params: &AlgoParams,
    rng: &mut crate::rng::SpiderRng,
    ledger: &mut CostLedger,
) -> Result<(SpiderState, Event)> {
    match state {
        Some(s) if !k.is_multiple_of(params.q) => Ok((
            estimator::advance(problem, s, x, params.s2, rng, ledger)?,
            Event::Advance,
        )),
        _ => Ok((
            estimator::reset(problem, x, params.reset, params.q, k, rng, ledger)?,
            Event::Reset,
        )),
    }
}

/// Runs the optimizer from `x0`.
pub fn run_sfo(
    problem: &dyn Problem,
    params: &AlgoParams,
    option: StepOption,
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
    let mut ledger = CostLedger::new();
    let mut rec = Recorder::new(opts, problem);
    let budget = params.budget_for(option);
    let output_index = match option {
        StepOption::Clipped => Some(uniform_index(&mut stream_rng(seed, STREAM_OUTPUT), budget)),
        StepOption::Normalized => None,
    };
    let mut x = x0.to_vec();
    let mut chosen = None;
    let mut state: Option<SpiderState> = None;
    let c = &params.constants;
    for k in 0..budget {
        let (s, event) = refresh(problem, state.as_ref(), &x, k, params, &mut rng, &mut ledger)?;
        rec.record(k, &x, &s.v, &ledger, event);
        match option {
            StepOption::Normalized => {
                if vecops::norm(&s.v) <= 2.0 * params.eps_tilde {
                    rec.record(k, &x, &s.v, &ledger, Event::Stop);
                    return Ok(rec.finish(Status::Stopped, x, ledger, k + 1, None));
                }
                x = step_option1(&x, &s.v, params.eta);
            }
            StepOption::Clipped => {
                if Some(k) == output_index {
                    chosen = Some(x.clone());
                }
                x = step_option2(&x, &s.v, params.eps, c.lipschitz, params.n0);
            }
        }
        state = Some(s);
    }
    Ok(match option {
        StepOption::Normalized => rec.finish(Status::Exhausted, x, ledger, budget, None),
        StepOption::Clipped => rec.finish(
            Status::Completed,
            chosen.expect("output index lies inside the budget"),
            ledger,
            budget,
            output_index,
        ),
    })
}
