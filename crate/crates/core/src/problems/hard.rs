//! Scaled zero-chain finite-sum instance.
//!
//! The unscaled chain `chain_value(y)` on `R^K` only lets each gradient query
//! reveal one new coordinate. The finite-sum problem hides one rotated and
//! clamped copy of it inside every component.

use nalgebra::DMatrix;
use statrs::function::erf::erfc;

use crate::error::{Result, SpiderError};
use crate::problem::{Problem, ProblemMeta};
use crate::rng::{gaussian_vec, stream_rng};
use crate::vecops;

/// Estimated gradient-Lipschitz constant of the clamped chain `z -> f~(z)`.
///
/// Produced by `examples/estimate_chain_lipschitz.rs` from the 2x2 block
/// bound (twice the largest block Hessian norm, plus the anchor and
/// regulariser terms), rounded up.
pub const CHAIN_LIPSCHITZ: f64 = 270.0;

const SQRT_E: f64 = 1.648_721_270_700_128_2;

/// Smooth step: zero on `x <= 1/2`, `exp(1 - 1/(2x - 1)^2)` beyond.
pub fn psi(x: f64) -> f64 {
    if x <= 0.5 {
        0.0
    } else {
        let t = 2.0 * x - 1.0;
        (1.0 - 1.0 / (t * t)).exp()
    }
}

pub fn psi_prime(x: f64) -> f64 {
    if x <= 0.5 {
        0.0
    } else {
        let t = 2.0 * x - 1.0;
        psi(x) * 4.0 / (t * t * t)
    }
}

/// `sqrt(e) * int_{-inf}^x exp(-t^2/2) dt`.
pub fn phi(x: f64) -> f64 {
    SQRT_E * (2.0 * std::f64::consts::PI).sqrt() * 0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn phi_prime(x: f64) -> f64 {
    SQRT_E * (-0.5 * x * x).exp()
}

/// The unscaled chain function on `R^K`.
pub fn chain_value(y: &[f64]) -> f64 {
    let mut f = -psi(1.0) * phi(y[0]);
    for i in 1..y.len() {
        f += psi(-y[i - 1]) * phi(-y[i]) - psi(y[i - 1]) * phi(y[i]);
    }
    f
}

/// Gradient of [`chain_value`].
pub fn chain_grad(y: &[f64]) -> Vec<f64> {
    let k = y.len();
    let mut g = vec![0.0; k];
    g[0] = -psi(1.0) * phi_prime(y[0]);
    for i in 1..k {
        let (a, b) = (y[i - 1], y[i]);
        g[i - 1] += -psi_prime(-a) * phi(-b) - psi_prime(a) * phi(b);
        g[i] += -psi(-a) * phi_prime(-b) - psi(a) * phi_prime(b);
    }
    g
}

/// Radial clamp `z / sqrt(1 + |z|^2 / R^2)`.
pub fn clamp_map(z: &[f64], radius: f64) -> Vec<f64> {
    let s = (1.0 + vecops::norm_sq(z) / (radius * radius)).sqrt();
    z.iter().map(|t| t / s).collect()
}

/// Transposed Jacobian of [`clamp_map`] applied to `u` (the Jacobian is
/// symmetric).
pub fn clamp_jacobian_apply(z: &[f64], radius: f64, u: &[f64]) -> Vec<f64> {
    let r2 = radius * radius;
    let s = (1.0 + vecops::norm_sq(z) / r2).sqrt();
    let zu = vecops::dot(z, u);
    let c = zu / (r2 * s * s * s);
    z.iter().zip(u).map(|(zi, ui)| ui / s - c * zi).collect()
}

/// Reproducible description of a hard instance.
#[derive(Debug, Clone, PartialEq)]
pub struct HardInstanceSpec {
    pub chain_len: usize,
    pub n: usize,
    pub d: usize,
    pub eps: f64,
    pub lipschitz: f64,
    pub gap: f64,
    /// Clamp radius; `None` selects `230 sqrt(K)`.
    pub radius: Option<f64>,
    pub seed: u64,
}

impl HardInstanceSpec {
    pub fn new(chain_len: usize, n: usize, d: usize, seed: u64) -> Self {
        Self {
            chain_len,
            n,
            d,
            eps: 0.1,
            lipschitz: 1.0,
            gap: 1.0,
            radius: None,
            seed,
        }
    }

    pub fn clamp_radius(&self) -> f64 {
        self.radius.unwrap_or(230.0 * (self.chain_len as f64).sqrt())
    }
}

/// `f_i(x) = scale * f~_i(C_i^T x / b)` with
/// `f~_i(z) = chain(B_i^T clamp(z)) + |z|^2 / 10`.
#[derive(Debug, Clone)]
pub struct HardInstance {
    spec: HardInstanceSpec,
    /// Per component, `K` columns of length `d/n`, stored column-major.
    chain_blocks: Vec<Vec<f64>>,
    /// Per component, `d/n` columns of length `d`, stored column-major.
    rotations: Vec<Vec<f64>>,
    scale: f64,
    arg_scale: f64,
    radius: f64,
    meta: ProblemMeta,
}

impl HardInstance {
    pub fn new(spec: HardInstanceSpec) -> Result<Self> {
        let HardInstanceSpec { chain_len: k, n, d, .. } = spec;
        if k == 0 || n == 0 || d == 0 || d % n != 0 {
            return Err(SpiderError::InvalidParam {
                name: "d",
                reason: format!("d={d} must be a positive multiple of n={n}"),
            });
        }
        let block = d / n;
        if block < n * k {
            return Err(SpiderError::InvalidParam {
                name: "d",
                reason: format!("d/n={block} must be at least n*K={}", n * k),
            });
        }
        if !(spec.eps > 0.0 && spec.lipschitz > 0.0 && spec.gap > 0.0) {
            return Err(SpiderError::InvalidParam {
                name: "eps/L/gap",
                reason: "scaling targets must be positive".into(),
            });
        }
        let mut rng = stream_rng(spec.seed, 0);
        let b_all = orthonormal_columns(block, n * k, &mut rng);
        let c_all = orthonormal_columns(d, d, &mut rng);
        let chain_blocks = (0..n)
            .map(|i| b_all.columns(i * k, k).iter().cloned().collect())
            .collect();
        let rotations = (0..n)
            .map(|i| c_all.columns(i * block, block).iter().cloned().collect())
            .collect();
        let l = CHAIN_LIPSCHITZ;
        let scale = l * (n as f64).sqrt() * spec.eps * spec.eps / spec.lipschitz;
        let arg_scale = l * spec.eps / spec.lipschitz;
        let radius = spec.clamp_radius();
        Ok(Self {
            chain_blocks,
            rotations,
            scale,
            arg_scale,
            radius,
            meta: ProblemMeta {
                lipschitz: spec.lipschitz,
                ..Default::default()
            },
            spec,
        })
    }

    pub fn spec(&self) -> &HardInstanceSpec {
        &self.spec
    }

    /// Upper bound on `f(0) - inf f` implied by the chain range bound.
    pub fn gap_bound(&self) -> f64 {
        self.scale * 12.0 * self.spec.chain_len as f64
    }

    pub fn block_dim(&self) -> usize {
        self.spec.d / self.spec.n
    }

    /// `B_i` as a `d/n x K` matrix.
    pub fn chain_block(&self, i: usize) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.block_dim(), self.spec.chain_len, &self.chain_blocks[i])
    }

    /// `C_i` as a `d x d/n` matrix.
    pub fn rotation(&self, i: usize) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.spec.d, self.block_dim(), &self.rotations[i])
    }

    /// Chain coordinates `B_i^T clamp(C_i^T x / b)` seen by component `i`.
    pub fn chain_coords(&self, i: usize, x: &[f64]) -> Vec<f64> {
        let z = self.local(i, x);
        self.project(i, &clamp_map(&z, self.radius))
    }

    fn local(&self, i: usize, x: &[f64]) -> Vec<f64> {
        let d = self.spec.d;
        self.rotations[i]
            .chunks_exact(d)
            .map(|col| vecops::dot(col, x) / self.arg_scale)
            .collect()
    }

    fn project(&self, i: usize, w: &[f64]) -> Vec<f64> {
        let m = self.block_dim();
        self.chain_blocks[i]
            .chunks_exact(m)
            .map(|col| vecops::dot(col, w))
            .collect()
    }

    /// Value of the unscaled component `f~_i` at local coordinates `z`.
    pub fn clamped_chain_value(&self, i: usize, z: &[f64]) -> f64 {
        let y = self.project(i, &clamp_map(z, self.radius));
        chain_value(&y) + vecops::norm_sq(z) / 10.0
    }

    /// Gradient of [`Self::clamped_chain_value`].
    pub fn clamped_chain_grad(&self, i: usize, z: &[f64]) -> Vec<f64> {
        let m = self.block_dim();
        let y = self.project(i, &clamp_map(z, self.radius));
        let gy = chain_grad(&y);
        let mut w = vec![0.0; m];
        for (col, g) in self.chain_blocks[i].chunks_exact(m).zip(&gy) {
            vecops::axpy(*g, col, &mut w);
        }
        let mut g = clamp_jacobian_apply(z, self.radius, &w);
        vecops::axpy(0.2, z, &mut g);
        g
    }
}

fn orthonormal_columns(rows: usize, cols: usize, rng: &mut crate::rng::SpiderRng) -> DMatrix<f64> {
    let g = gaussian_vec(rng, rows * cols);
    let q = DMatrix::from_column_slice(rows, cols, &g).qr().q();
    q.columns(0, cols).into_owned()
}

impl Problem for HardInstance {
    fn name(&self) -> &str {
        "hard-instance"
    }
    fn n(&self) -> usize {
        self.spec.n
    }
    fn dim(&self) -> usize {
        self.spec.d
    }
    fn meta(&self) -> &ProblemMeta {
        &self.meta
    }

    fn value(&self, i: usize, x: &[f64]) -> f64 {
        self.scale * self.clamped_chain_value(i, &self.local(i, x))
    }

    fn add_grad(&self, i: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        let gz = self.clamped_chain_grad(i, &self.local(i, x));
        let c = scale * self.scale / self.arg_scale;
        let d = self.spec.d;
        for (col, g) in self.rotations[i].chunks_exact(d).zip(&gz) {
            vecops::axpy(c * g, col, out);
        }
    }
}
