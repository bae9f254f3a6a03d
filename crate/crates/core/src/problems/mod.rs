//! Benchmark problems and oracle-consistency referees.

mod hard;
mod logistic;
mod quadratic;
mod saddle;

pub use hard::{
    chain_grad, chain_value, clamp_jacobian_apply, clamp_map, phi, phi_prime, psi, psi_prime,
    HardInstance, HardInstanceSpec, CHAIN_LIPSCHITZ,
};
pub use logistic::NonconvexLogistic;
pub use quadratic::{Quadratic, QuadraticSpec};
pub use saddle::{SaddleQuartic, SaddleSpec};

use rand::Rng;

use crate::error::{Result, SpiderError};
use crate::problem::Problem;
use crate::rng::{gaussian_vec, stream_rng};
use crate::vecops;

/// Names accepted by [`make_suite`].
pub const SUITE_NAMES: [&str; 3] = ["quadratic", "nonconvex-logistic", "saddle-quartic"];

/// Builds a suite problem with default shape parameters.
pub fn make_suite(name: &str, d: usize, n: usize, seed: u64) -> Result<Box<dyn Problem>> {
    if d == 0 || n == 0 {
        return Err(SpiderError::InvalidParam {
            name: "d/n",
            reason: "dimension and component count must be positive".into(),
        });
    }
    match name {
        "quadratic" => Ok(Box::new(Quadratic::random(&QuadraticSpec::new(d, n, seed)))),
        "nonconvex-logistic" => Ok(Box::new(NonconvexLogistic::random(d, n, seed))),
        "saddle-quartic" => Ok(Box::new(SaddleQuartic::random(&SaddleSpec::new(d, n, seed)))),
        other => Err(SpiderError::UnknownSuite(other.to_string())),
    }
}

/// Outcome of [`finite_difference_referee`].
#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    /// Largest relative error `|g - fd| / max(1, |g|)` over all checks.
    pub max_rel_error: f64,
    /// `(point, component)` pairs whose error exceeded the tolerance.
    pub flagged: Vec<(usize, usize)>,
}

/// Compares analytic component gradients against central differences of
/// the component values.
pub fn finite_difference_referee(
    problem: &dyn Problem,
    points: &[Vec<f64>],
    h: f64,
    tolerance: f64,
) -> FdReport {
    assert!(h > 0.0);
    let d = problem.dim();
    let mut report = FdReport {
        max_rel_error: 0.0,
        flagged: Vec::new(),
    };
    let mut probe = vec![0.0; d];
    for (p, x) in points.iter().enumerate() {
        for i in 0..problem.n() {
            let g = problem.grad(i, x);
            let mut err_sq = 0.0;
            probe.copy_from_slice(x);
            for j in 0..d {
                probe[j] = x[j] + h;
                let fp = problem.value(i, &probe);
                probe[j] = x[j] - h;
                let fm = problem.value(i, &probe);
                probe[j] = x[j];
                err_sq += ((fp - fm) / (2.0 * h) - g[j]).powi(2);
            }
            let rel = err_sq.sqrt() / vecops::norm(&g).max(1.0);
            report.max_rel_error = report.max_rel_error.max(rel);
            if rel > tolerance {
                report.flagged.push((p, i));
            }
        }
    }
    report
}

/// Largest observed ratio `sqrt(mean_i |grad f_i(x) - grad f_i(y)|^2) / |x - y|`
/// over random pairs inside the ball of radius `radius` around `center`.
pub fn empirical_lipschitz(
    problem: &dyn Problem,
    center: &[f64],
    radius: f64,
    pairs: usize,
    seed: u64,
) -> f64 {
    let mut rng = stream_rng(seed, 7);
    let n = problem.n();
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let x = random_in_ball(&mut rng, center, radius);
        let y = random_in_ball(&mut rng, center, radius);
        let ms: f64 = (0..n)
            .map(|i| vecops::dist_sq(&problem.grad(i, &x), &problem.grad(i, &y)))
            .sum::<f64>()
            / n as f64;
        let dxy = vecops::dist(&x, &y);
        if dxy > 0.0 {
            worst = worst.max(ms.sqrt() / dxy);
        }
    }
    worst
}

/// `mean_i |grad f_i(x) - grad f(x)|^2`.
pub fn gradient_variance(problem: &dyn Problem, x: &[f64]) -> f64 {
    let full = problem.full_grad(x);
    let n = problem.n();
    (0..n)
        .map(|i| vecops::dist_sq(&problem.grad(i, x), &full))
        .sum::<f64>()
        / n as f64
}

/// Largest [`gradient_variance`] over random points in a ball, as a standard
/// deviation.
pub fn empirical_sigma(
    problem: &dyn Problem,
    center: &[f64],
    radius: f64,
    points: usize,
    seed: u64,
) -> f64 {
    let mut rng = stream_rng(seed, 8);
    (0..points)
        .map(|_| gradient_variance(problem, &random_in_ball(&mut rng, center, radius)))
        .fold(0.0_f64, f64::max)
        .sqrt()
}

/// Uniform draw from the Euclidean ball of radius `radius` around `center`.
pub fn random_in_ball<R: Rng + ?Sized>(rng: &mut R, center: &[f64], radius: f64) -> Vec<f64> {
    let d = center.len();
    let mut u = gaussian_vec(rng, d);
    let nrm = vecops::norm(&u).max(1e-300);
    let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
    vecops::scale(&mut u, r / nrm);
    vecops::axpy(1.0, center, &mut u);
    u
}
