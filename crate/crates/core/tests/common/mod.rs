#![allow(dead_code)]

use spider_core::problems::Quadratic;
use spider_core::{Problem, ProblemMeta};

/// `f_i(x) = a_i . x`: constant component gradients, no Hessian.
pub struct Linear {
    pub slopes: Vec<Vec<f64>>,
    meta: ProblemMeta,
}

impl Linear {
    pub fn new(slopes: Vec<Vec<f64>>) -> Self {
        Self {
            slopes,
            meta: ProblemMeta {
                lipschitz: 1.0,
                sigma: None,
                hessian_lipschitz: Some(0.0),
                f_star: None,
                f_lower: None,
            },
        }
    }
}

impl Problem for Linear {
    fn name(&self) -> &str {
        "linear"
    }
    fn n(&self) -> usize {
        self.slopes.len()
    }
    fn dim(&self) -> usize {
        self.slopes[0].len()
    }
    fn meta(&self) -> &ProblemMeta {
        &self.meta
    }
    fn value(&self, i: usize, x: &[f64]) -> f64 {
        self.slopes[i].iter().zip(x).map(|(a, b)| a * b).sum()
    }
    fn add_grad(&self, i: usize, _x: &[f64], scale: f64, out: &mut [f64]) {
        for (o, a) in out.iter_mut().zip(&self.slopes[i]) {
            *o += scale * a;
        }
    }
}

/// `f_1 = x^2/2`, `f_2 = 3 x^2/2` on the real line.
pub fn two_component() -> Quadratic {
    Quadratic::new(vec![vec![1.0], vec![3.0]], vec![vec![0.0], vec![0.0]])
}

/// Gradient-descent path of `steps` normalized steps of length `len`.
pub fn normalized_path(p: &dyn Problem, x0: &[f64], steps: usize, len: f64) -> Vec<Vec<f64>> {
    let mut path = vec![x0.to_vec()];
    for _ in 0..steps {
        let x = path.last().unwrap().clone();
        let g = p.full_grad(&x);
        let gn = spider_core::vecops::norm(&g);
        let next: Vec<f64> = if gn > 0.0 {
            x.iter().zip(&g).map(|(a, b)| a - len * b / gn).collect()
        } else {
            x
        };
        path.push(next);
    }
    path
}
