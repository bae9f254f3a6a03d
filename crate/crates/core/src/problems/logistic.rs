//! Binary logistic loss with a bounded non-convex regulariser.

use rand::Rng;

use crate::problem::{Problem, ProblemMeta};
use crate::rng::{gaussian_vec, stream_rng};
use crate::vecops;

/// `f_i(x) = log(1 + exp(-y_i a_i^T x)) + lambda * sum_j x_j^2 / (1 + x_j^2)`
/// over synthetic features and labels.
#[derive(Debug, Clone)]
pub struct NonconvexLogistic {
    features: Vec<Vec<f64>>,
    labels: Vec<f64>,
    lambda: f64,
    meta: ProblemMeta,
}

impl NonconvexLogistic {
    /// Builds from explicit data. Labels must be `+1` or `-1`.
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<f64>, lambda: f64) -> Self {
        assert!(!features.is_empty() && features.len() == labels.len());
        assert!(labels.iter().all(|y| *y == 1.0 || *y == -1.0));
        assert!(lambda >= 0.0);
        let n = features.len() as f64;
        let sq_norms: Vec<f64> = features.iter().map(|a| vecops::norm_sq(a)).collect();
        // component Hessians are bounded by |a_i|^2/4 (loss) plus 2 lambda (regulariser)
        let lipschitz = (sq_norms
            .iter()
            .map(|s| (s / 4.0 + 2.0 * lambda).powi(2))
            .sum::<f64>()
            / n)
            .sqrt();
        // the regulariser is shared, and each loss gradient has norm below |a_i|
        let sigma = (sq_norms.iter().sum::<f64>() / n).sqrt();
        Self {
            features,
            labels,
            lambda,
            meta: ProblemMeta {
                lipschitz,
                sigma: Some(sigma),
                hessian_lipschitz: None,
                f_star: None,
                f_lower: Some(0.0),
            },
        }
    }

    /// Gaussian features scaled by `1/sqrt(d)`, labels from a planted
    /// separator with 10% flips, `lambda = 0.1`.
    pub fn random(d: usize, n: usize, seed: u64) -> Self {
        assert!(d >= 1 && n >= 1);
        let mut rng = stream_rng(seed, 0);
        let planted = gaussian_vec(&mut rng, d);
        let s = 1.0 / (d as f64).sqrt();
        let mut features = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let mut a = gaussian_vec(&mut rng, d);
            vecops::scale(&mut a, s);
            let mut y = if vecops::dot(&a, &planted) >= 0.0 { 1.0 } else { -1.0 };
            if rng.random::<f64>() < 0.1 {
                y = -y;
            }
            features.push(a);
            labels.push(y);
        }
        Self::new(features, labels, 0.1)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn margin(&self, i: usize, x: &[f64]) -> f64 {
        self.labels[i] * vecops::dot(&self.features[i], x)
    }
}

/// `log(1 + exp(-m))` without overflow.
fn softplus_neg(m: f64) -> f64 {
    if m > 0.0 {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

/// `1 / (1 + exp(m))`.
fn sigmoid_neg(m: f64) -> f64 {
    if m > 0.0 {
        let e = (-m).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + m.exp())
    }
}

impl Problem for NonconvexLogistic {
    fn name(&self) -> &str {
        "nonconvex-logistic"
    }
    fn n(&self) -> usize {
        self.features.len()
    }
    fn dim(&self) -> usize {
        self.features[0].len()
    }
    fn meta(&self) -> &ProblemMeta {
        &self.meta
    }

    fn value(&self, i: usize, x: &[f64]) -> f64 {
        let reg: f64 = x.iter().map(|t| t * t / (1.0 + t * t)).sum();
        softplus_neg(self.margin(i, x)) + self.lambda * reg
    }

    fn add_grad(&self, i: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        let coef = -self.labels[i] * sigmoid_neg(self.margin(i, x)) * scale;
        vecops::axpy(coef, &self.features[i], out);
        for (o, t) in out.iter_mut().zip(x) {
            let q = 1.0 + t * t;
            *o += scale * self.lambda * 2.0 * t / (q * q);
        }
    }

    fn hvp(&self, i: usize, x: &[f64], u: &[f64]) -> Option<Vec<f64>> {
        let a = &self.features[i];
        let s = sigmoid_neg(self.margin(i, x));
        let w = s * (1.0 - s) * vecops::dot(a, u);
        Some(
            x.iter()
                .zip(u)
                .zip(a)
                .map(|((t, ui), ai)| {
                    let q = 1.0 + t * t;
                    w * ai + self.lambda * (2.0 - 6.0 * t * t) / (q * q * q) * ui
                })
                .collect(),
        )
    }
}
