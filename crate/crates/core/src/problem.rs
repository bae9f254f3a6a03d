//! Finite-sum oracle interfaces.
//!
//! A problem is `f(x) = (1/n) sum_i f_i(x)` over `R^d`. Problems are
//! immutable after construction and every oracle is a pure function, so a
//! single instance can be shared across concurrently running optimizers.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::vecops;

/// Analytic constants attached to a problem.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProblemMeta {
    /// Mean-square gradient-Lipschitz constant:
    /// `mean_i |grad f_i(x) - grad f_i(y)|^2 <= L^2 |x - y|^2`.
    pub lipschitz: f64,
    /// Bound on `mean_i |grad f_i(x) - grad f(x)|^2 <= sigma^2`, over the
    /// region the problem documents.
    pub sigma: Option<f64>,
    /// Hessian-Lipschitz constant of every component.
    pub hessian_lipschitz: Option<f64>,
    /// Known infimum of `f`.
    pub f_star: Option<f64>,
    /// A valid lower bound on `inf f` (equals `f_star` when that is known).
    pub f_lower: Option<f64>,
}

/// Component value and gradient oracles.
pub trait Problem: Send + Sync {
    fn name(&self) -> &str;
    /// Number of components `n`.
    fn n(&self) -> usize;
    /// Ambient dimension `d`.
    fn dim(&self) -> usize;
    fn meta(&self) -> &ProblemMeta;

    /// `f_i(x)`.
    fn value(&self, i: usize, x: &[f64]) -> f64;

    /// `out += scale * grad f_i(x)`.
    fn add_grad(&self, i: usize, x: &[f64], scale: f64, out: &mut [f64]);

    /// `hess f_i(x) u`, when the problem has an analytic form for it.
    fn hvp(&self, _i: usize, _x: &[f64], _u: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn grad(&self, i: usize, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.add_grad(i, x, 1.0, &mut g);
        g
    }

    fn full_value(&self, x: &[f64]) -> f64 {
        let n = self.n();
        (0..n).map(|i| self.value(i, x)).sum::<f64>() / n as f64
    }

    fn full_grad(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        let w = 1.0 / n as f64;
        let mut g = vec![0.0; self.dim()];
        for i in 0..n {
            self.add_grad(i, x, w, &mut g);
        }
        g
    }

    /// Mean gradient over a multiset of component indices.
    fn batch_grad(&self, indices: &[usize], x: &[f64]) -> Vec<f64> {
        let w = 1.0 / indices.len() as f64;
        let mut g = vec![0.0; self.dim()];
        for &i in indices {
            self.add_grad(i, x, w, &mut g);
        }
        g
    }

    fn grad_norm(&self, x: &[f64]) -> f64 {
        vecops::norm(&self.full_grad(x))
    }
}

/// Value-only view of a problem.
///
/// Zeroth-order optimizers take `&dyn ValueOracle`, so they have no path to
/// a gradient oracle. Gradients stay available to referees through the
/// underlying [`Problem`].
pub trait ValueOracle: Send + Sync {
    fn n(&self) -> usize;
    fn dim(&self) -> usize;
    fn meta(&self) -> &ProblemMeta;
    fn value(&self, i: usize, x: &[f64]) -> f64;

    fn full_value(&self, x: &[f64]) -> f64 {
        let n = self.n();
        (0..n).map(|i| self.value(i, x)).sum::<f64>() / n as f64
    }
}

impl<P: Problem + ?Sized> ValueOracle for P {
    fn n(&self) -> usize {
        Problem::n(self)
    }
    fn dim(&self) -> usize {
        Problem::dim(self)
    }
    fn meta(&self) -> &ProblemMeta {
        Problem::meta(self)
    }
    fn value(&self, i: usize, x: &[f64]) -> f64 {
        Problem::value(self, i, x)
    }
}

/// Value-only handle on a problem object, for callers that hold a
/// `&dyn Problem` and need a `&dyn ValueOracle`.
#[derive(Clone, Copy)]
pub struct ValuesOnly<'a>(pub &'a dyn Problem);

impl ValueOracle for ValuesOnly<'_> {
    fn n(&self) -> usize {
        self.0.n()
    }
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn meta(&self) -> &ProblemMeta {
        self.0.meta()
    }
    fn value(&self, i: usize, x: &[f64]) -> f64 {
        self.0.value(i, x)
    }
    fn full_value(&self, x: &[f64]) -> f64 {
        self.0.full_value(x)
    }
}

/// Wrapper that counts raw oracle calls with atomics.
///
/// Used by tests as an independent check of the explicit ledger charges.
pub struct CountingProblem<'a> {
    inner: &'a dyn Problem,
    grads: AtomicU64,
    values: AtomicU64,
}

impl<'a> CountingProblem<'a> {
    pub fn new(inner: &'a dyn Problem) -> Self {
        Self {
            inner,
            grads: AtomicU64::new(0),
            values: AtomicU64::new(0),
        }
    }

    pub fn grad_calls(&self) -> u64 {
        self.grads.load(Ordering::Relaxed)
    }

    pub fn value_calls(&self) -> u64 {
        self.values.load(Ordering::Relaxed)
    }
}

impl Problem for CountingProblem<'_> {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn n(&self) -> usize {
        self.inner.n()
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn meta(&self) -> &ProblemMeta {
        self.inner.meta()
    }
    fn value(&self, i: usize, x: &[f64]) -> f64 {
        self.values.fetch_add(1, Ordering::Relaxed);
        self.inner.value(i, x)
    }
    fn add_grad(&self, i: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        self.grads.fetch_add(1, Ordering::Relaxed);
        self.inner.add_grad(i, x, scale, out)
    }
    fn hvp(&self, i: usize, x: &[f64], u: &[f64]) -> Option<Vec<f64>> {
        self.inner.hvp(i, x, u)
    }
}
