//! Diagonal finite-sum quadratics `f_i(x) = 1/2 (x - c_i)^T A_i (x - c_i)`.

use rand::Rng;

use crate::problem::{Problem, ProblemMeta};
use crate::rng::{gaussian_vec, stream_rng};
use crate::vecops;

/// Finite-sum quadratic with diagonal, positive semidefinite `A_i`.
///
/// The declared `sigma` bounds the gradient variance on the Euclidean ball
/// `|x - x*| <= sigma_radius` around the minimiser.
#[derive(Debug, Clone)]
pub struct Quadratic {
    diag: Vec<Vec<f64>>,
    centers: Vec<Vec<f64>>,
    mean_diag: Vec<f64>,
    minimizer: Vec<f64>,
    sigma_radius: f64,
    meta: ProblemMeta,
}

/// Parameters of the random quadratic suite.
#[derive(Debug, Clone)]
pub struct QuadraticSpec {
    pub d: usize,
    pub n: usize,
    pub seed: u64,
    /// Relative spread of the per-component curvatures around their mean.
    pub curvature_spread: f64,
    /// `f(0) - f*`.
    pub gap: f64,
    /// Target for the declared variance bound.
    pub sigma: f64,
}

impl QuadraticSpec {
    pub fn new(d: usize, n: usize, seed: u64) -> Self {
        Self {
            d,
            n,
            seed,
            curvature_spread: 0.3,
            gap: 0.5,
            sigma: 1.0,
        }
    }
}

impl Quadratic {
    /// Builds the problem from explicit diagonals and centres.
    pub fn new(diag: Vec<Vec<f64>>, centers: Vec<Vec<f64>>) -> Self {
        assert!(!diag.is_empty(), "need at least one component");
        assert_eq!(diag.len(), centers.len());
        let d = diag[0].len();
        let n = diag.len();
        assert!(diag.iter().chain(centers.iter()).all(|v| v.len() == d));
        assert!(
            diag.iter().flatten().all(|&a| a >= 0.0),
            "curvatures must be non-negative"
        );
        let nf = n as f64;
        let mean_diag: Vec<f64> = (0..d)
            .map(|j| diag.iter().map(|a| a[j]).sum::<f64>() / nf)
            .collect();
        // grad f(x) = Abar x - m, with m = mean_i A_i c_i
        let minimizer: Vec<f64> = (0..d)
            .map(|j| {
                let m = (0..n).map(|i| diag[i][j] * centers[i][j]).sum::<f64>() / nf;
                if mean_diag[j] > 0.0 {
                    m / mean_diag[j]
                } else {
                    0.0
                }
            })
            .collect();
        let lipschitz = (0..d)
            .map(|j| diag.iter().map(|a| a[j] * a[j]).sum::<f64>() / nf)
            .fold(0.0_f64, f64::max)
            .sqrt();
        let mut q = Self {
            diag,
            centers,
            mean_diag,
            minimizer,
            sigma_radius: 0.0,
            meta: ProblemMeta {
                lipschitz,
                hessian_lipschitz: Some(0.0),
                ..Default::default()
            },
        };
        let f_star = q.full_value(&q.minimizer.clone());
        let radius = 2.0 * vecops::norm(&q.minimizer) + 1.0;
        q.meta.f_star = Some(f_star);
        q.meta.f_lower = Some(f_star);
        q.sigma_radius = radius;
        q.meta.sigma = Some(q.sigma_bound(radius));
        q
    }

    /// Random suite instance; see [`QuadraticSpec`].
    pub fn random(spec: &QuadraticSpec) -> Self {
        let QuadraticSpec { d, n, seed, .. } = *spec;
        assert!(d >= 1 && n >= 1);
        let mut rng = stream_rng(seed, 0);
        let base: Vec<f64> = (0..d)
            .map(|j| {
                if d == 1 {
                    1.0
                } else {
                    0.5 + 0.5 * j as f64 / (d - 1) as f64
                }
            })
            .collect();
        let mut diag: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                base.iter()
                    .map(|&b| b * (1.0 + spec.curvature_spread * (2.0 * rng.random::<f64>() - 1.0)))
                    .collect()
            })
            .collect();
        // centre the spread so mean_i a_ij equals the base curvature
        for j in 0..d {
            let mean = diag.iter().map(|a| a[j]).sum::<f64>() / n as f64;
            for a in diag.iter_mut() {
                a[j] = (a[j] * base[j] / mean).max(0.0);
            }
        }

        // common centre scaled so that f(0) - f* = gap
        let mut cbar = gaussian_vec(&mut rng, d);
        let curv: f64 = cbar.iter().zip(&base).map(|(c, b)| b * c * c).sum();
        vecops::scale(&mut cbar, (2.0 * spec.gap / curv).sqrt());

        // per-component offsets with mean_i A_i z_i = 0, so x* = cbar exactly
        let mut offsets: Vec<Vec<f64>> = (0..n).map(|_| gaussian_vec(&mut rng, d)).collect();
        for j in 0..d {
            let num: f64 = (0..n).map(|i| diag[i][j] * offsets[i][j]).sum();
            let den: f64 = (0..n).map(|i| diag[i][j] * diag[i][j]).sum();
            if den > 0.0 {
                for i in 0..n {
                    offsets[i][j] -= diag[i][j] * num / den;
                }
            }
        }

        let radius = 2.0 * vecops::norm(&cbar) + 1.0;
        let spread_term = radius * curvature_deviation(&diag, &base);
        let offset_var: f64 = (0..n)
            .map(|i| (0..d).map(|j| (diag[i][j] * offsets[i][j]).powi(2)).sum::<f64>())
            .sum::<f64>()
            / n as f64;
        let room = spec.sigma - spread_term;
        let s = if n == 1 || offset_var == 0.0 || room <= 0.0 {
            0.0
        } else {
            room / offset_var.sqrt()
        };
        let centers: Vec<Vec<f64>> = offsets
            .iter()
            .map(|z| cbar.iter().zip(z).map(|(c, zi)| c + s * zi).collect())
            .collect();
        Self::new(diag, centers)
    }

    pub fn minimizer(&self) -> &[f64] {
        &self.minimizer
    }

    /// Radius of the ball around the minimiser on which `meta.sigma` holds.
    pub fn sigma_radius(&self) -> f64 {
        self.sigma_radius
    }

    pub fn mean_curvature(&self) -> &[f64] {
        &self.mean_diag
    }

    /// Upper bound on `sqrt(mean_i |grad f_i(x) - grad f(x)|^2)` over
    /// `|x - x*| <= radius`.
    ///
    /// The deviation is affine in `x`: `D_i (x - x*) + e_i`, so by Minkowski
    /// the root-mean-square is at most `radius * max_j tau_j + rms(e)`.
    pub fn sigma_bound(&self, radius: f64) -> f64 {
        let n = self.diag.len() as f64;
        let at_min: f64 = self
            .diag
            .iter()
            .zip(&self.centers)
            .map(|(a, c)| {
                (0..a.len())
                    .map(|j| {
                        let g = a[j] * (self.minimizer[j] - c[j]);
                        g * g
                    })
                    .sum::<f64>()
            })
            .sum::<f64>()
            / n;
        radius * curvature_deviation(&self.diag, &self.mean_diag) + at_min.sqrt()
    }
}

fn curvature_deviation(diag: &[Vec<f64>], mean: &[f64]) -> f64 {
    let n = diag.len() as f64;
    (0..mean.len())
        .map(|j| diag.iter().map(|a| (a[j] - mean[j]).powi(2)).sum::<f64>() / n)
        .fold(0.0_f64, f64::max)
        .sqrt()
}

impl Problem for Quadratic {
    fn name(&self) -> &str {
        "quadratic"
    }
    fn n(&self) -> usize {
        self.diag.len()
    }
    fn dim(&self) -> usize {
        self.mean_diag.len()
    }
    fn meta(&self) -> &ProblemMeta {
        &self.meta
    }

    fn value(&self, i: usize, x: &[f64]) -> f64 {
        let a = &self.diag[i];
        let c = &self.centers[i];
        0.5 * (0..x.len()).map(|j| a[j] * (x[j] - c[j]).powi(2)).sum::<f64>()
    }

    fn add_grad(&self, i: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        let a = &self.diag[i];
        let c = &self.centers[i];
        for j in 0..x.len() {
            out[j] += scale * a[j] * (x[j] - c[j]);
        }
    }

    fn hvp(&self, i: usize, _x: &[f64], u: &[f64]) -> Option<Vec<f64>> {
        Some(self.diag[i].iter().zip(u).map(|(a, ui)| a * ui).collect())
    }

    fn full_grad(&self, x: &[f64]) -> Vec<f64> {
        // closed form, avoids n passes
        (0..x.len())
            .map(|j| self.mean_diag[j] * (x[j] - self.minimizer[j]))
            .collect()
    }
}
