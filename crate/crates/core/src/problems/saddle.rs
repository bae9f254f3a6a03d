//! Quadratic-plus-quartic landscapes with a strict saddle at the origin.

use crate::problem::{Problem, ProblemMeta};
use crate::rng::{gaussian_vec, stream_rng};
use crate::vecops;

/// `f_i(x) = 1/2 x^T H_i x + (b/4) sum_j x_j^4`.
///
/// The mean of the `H_i` is the diagonal matrix `mean_curvature`, so the
/// Hessian of `f` at the origin is exactly that diagonal. Constants in
/// [`ProblemMeta`] hold on the sup-norm box of radius [`Self::box_radius`],
/// which contains every minimiser.
#[derive(Debug, Clone)]
pub struct SaddleQuartic {
    mean_curvature: Vec<f64>,
    /// Dense row-major `d x d` matrices.
    hessians: Vec<Vec<f64>>,
    quartic: f64,
    box_radius: f64,
    meta: ProblemMeta,
}

/// Parameters for [`SaddleQuartic::random`].
#[derive(Debug, Clone)]
pub struct SaddleSpec {
    pub d: usize,
    pub n: usize,
    pub seed: u64,
    /// Magnitude of the single negative eigenvalue at the origin.
    pub negative_curvature: f64,
    /// Quartic coefficient `b`.
    pub quartic: f64,
    /// Frobenius scale of the centred component perturbations.
    pub perturbation: f64,
}

impl SaddleSpec {
    pub fn new(d: usize, n: usize, seed: u64) -> Self {
        Self {
            d,
            n,
            seed,
            negative_curvature: 2.0,
            quartic: 0.25,
            perturbation: 0.1,
        }
    }
}

impl SaddleQuartic {
    /// Builds the problem from a mean diagonal and centred symmetric
    /// perturbations drawn from `seed`.
    pub fn new(mean_curvature: Vec<f64>, quartic: f64, n: usize, perturbation: f64, seed: u64) -> Self {
        let d = mean_curvature.len();
        assert!(d >= 1 && n >= 1 && quartic > 0.0 && perturbation >= 0.0);
        let mut rng = stream_rng(seed, 0);
        let mut pert: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let g = gaussian_vec(&mut rng, d * d);
                let mut m = vec![0.0; d * d];
                for r in 0..d {
                    for c in 0..d {
                        m[r * d + c] = 0.5 * (g[r * d + c] + g[c * d + r]);
                    }
                }
                m
            })
            .collect();
        if n == 1 {
            pert[0].iter_mut().for_each(|v| *v = 0.0);
        } else {
            let mut mean = vec![0.0; d * d];
            for m in &pert {
                vecops::axpy(1.0 / n as f64, m, &mut mean);
            }
            let mut rms = 0.0;
            for m in pert.iter_mut() {
                vecops::axpy(-1.0, &mean, m);
                rms += vecops::norm_sq(m);
            }
            let rms = (rms / n as f64).sqrt();
            if rms > 0.0 {
                for m in pert.iter_mut() {
                    vecops::scale(m, perturbation / rms);
                }
            }
        }
        let hessians: Vec<Vec<f64>> = pert
            .into_iter()
            .map(|mut m| {
                for j in 0..d {
                    m[j * d + j] += mean_curvature[j];
                }
                m
            })
            .collect();

        let most_negative = mean_curvature.iter().cloned().fold(0.0_f64, f64::min);
        let box_radius = 1.25 * (-most_negative / quartic).sqrt().max(0.8);
        let nf = n as f64;
        // |grad f_i(x) - grad f_i(y)| <= (|H_i| + 3 b r^2) |x - y| on the box
        let lipschitz = (hessians
            .iter()
            .map(|h| (frobenius(h) + 3.0 * quartic * box_radius * box_radius).powi(2))
            .sum::<f64>()
            / nf)
            .sqrt();
        // deviation (H_i - H) x, bounded by |H_i - H|_F * r sqrt(d)
        let dev = (hessians
            .iter()
            .map(|h| {
                let mut s = 0.0;
                for r in 0..d {
                    for c in 0..d {
                        let mean = if r == c { mean_curvature[r] } else { 0.0 };
                        s += (h[r * d + c] - mean).powi(2);
                    }
                }
                s
            })
            .sum::<f64>()
            / nf)
            .sqrt();
        let f_star: f64 = mean_curvature
            .iter()
            .filter(|h| **h < 0.0)
            .map(|h| -h * h / (4.0 * quartic))
            .sum();
        Self {
            mean_curvature,
            hessians,
            quartic,
            box_radius,
            meta: ProblemMeta {
                lipschitz,
                sigma: Some(dev * box_radius * (d as f64).sqrt()),
                hessian_lipschitz: Some(6.0 * quartic * box_radius),
                f_star: Some(f_star),
                f_lower: Some(f_star),
            },
        }
    }

    /// Suite instance: positive curvatures spread over `[0.5, 1.5]`, the last
    /// coordinate carries curvature `-negative_curvature`.
    pub fn random(spec: &SaddleSpec) -> Self {
        let d = spec.d;
        assert!(d >= 1);
        let mut curv: Vec<f64> = (0..d.saturating_sub(1))
            .map(|j| {
                if d == 2 {
                    1.0
                } else {
                    0.5 + j as f64 / (d - 2) as f64
                }
            })
            .collect();
        curv.push(-spec.negative_curvature);
        Self::new(curv, spec.quartic, spec.n, spec.perturbation, spec.seed)
    }

    pub fn mean_curvature(&self) -> &[f64] {
        &self.mean_curvature
    }

    pub fn quartic(&self) -> f64 {
        self.quartic
    }

    /// Sup-norm radius of the region where the declared constants hold.
    pub fn box_radius(&self) -> f64 {
        self.box_radius
    }

    /// Smallest eigenvalue of the Hessian of `f` at the origin.
    pub fn lambda_min_at_origin(&self) -> f64 {
        self.mean_curvature.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// All global minimisers of `f` (finitely many, sign patterns on the
    /// negatively curved coordinates).
    pub fn minimizers(&self) -> Vec<Vec<f64>> {
        let neg: Vec<usize> = (0..self.mean_curvature.len())
            .filter(|&j| self.mean_curvature[j] < 0.0)
            .collect();
        (0..1usize << neg.len())
            .map(|mask| {
                let mut x = vec![0.0; self.mean_curvature.len()];
                for (bit, &j) in neg.iter().enumerate() {
                    let mag = (-self.mean_curvature[j] / self.quartic).sqrt();
                    x[j] = if mask >> bit & 1 == 1 { mag } else { -mag };
                }
                x
            })
            .collect()
    }
}

fn frobenius(m: &[f64]) -> f64 {
    vecops::norm(m)
}

impl Problem for SaddleQuartic {
    fn name(&self) -> &str {
        "saddle-quartic"
    }
    fn n(&self) -> usize {
        self.hessians.len()
    }
    fn dim(&self) -> usize {
        self.mean_curvature.len()
    }
    fn meta(&self) -> &ProblemMeta {
        &self.meta
    }

    fn value(&self, i: usize, x: &[f64]) -> f64 {
        let d = x.len();
        let h = &self.hessians[i];
        let mut quad = 0.0;
        for r in 0..d {
            quad += x[r] * vecops::dot(&h[r * d..(r + 1) * d], x);
        }
        0.5 * quad + 0.25 * self.quartic * x.iter().map(|t| t.powi(4)).sum::<f64>()
    }

    fn add_grad(&self, i: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        let d = x.len();
        let h = &self.hessians[i];
        for r in 0..d {
            out[r] += scale * (vecops::dot(&h[r * d..(r + 1) * d], x) + self.quartic * x[r].powi(3));
        }
    }

    fn hvp(&self, i: usize, x: &[f64], u: &[f64]) -> Option<Vec<f64>> {
        let d = x.len();
        let h = &self.hessians[i];
        Some(
            (0..d)
                .map(|r| vecops::dot(&h[r * d..(r + 1) * d], u) + 3.0 * self.quartic * x[r] * x[r] * u[r])
                .collect(),
        )
    }

    fn full_grad(&self, x: &[f64]) -> Vec<f64> {
        // perturbations average to zero, so only the diagonal survives
        x.iter()
            .zip(&self.mean_curvature)
            .map(|(t, h)| h * t + self.quartic * t.powi(3))
            .collect()
    }

    fn full_value(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.mean_curvature)
            .map(|(t, h)| 0.5 * h * t * t + 0.25 * self.quartic * t.powi(4))
            .sum()
    }
}
