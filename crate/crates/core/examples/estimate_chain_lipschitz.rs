//! Estimates the gradient-Lipschitz constant of the clamped chain function
//! used by `HardInstance`.
//!
//! The chain's Hessian is a sum of overlapping 2x2 blocks coming from
//! `(a, b) -> psi(-a) phi(-b) - psi(a) phi(b)` plus a diagonal term from
//! `-psi(1) phi(y_1)`. Splitting the blocks into odd and even groups gives
//! two block-diagonal matrices, so the Hessian norm is at most twice the
//! largest block norm. The clamp and the `|z|^2 / 10` term add at most
//! `1/5` plus a curvature correction of order `sup |grad| / R`, which is
//! measured directly below by gradient differences on random pairs.
//!
//! Run with `cargo run --release --example estimate_chain_lipschitz`.

use rand::Rng;
use spider_core::problems::{chain_grad, HardInstance, HardInstanceSpec, CHAIN_LIPSCHITZ};
use spider_core::rng::{gaussian_vec, stream_rng};
use spider_core::vecops;

fn block_grad(a: f64, b: f64) -> [f64; 2] {
    // chain of length 2 minus its first-coordinate anchor term
    let g = chain_grad(&[a, b]);
    let anchor = chain_grad(&[a]);
    [g[0] - anchor[0], g[1]]
}

fn block_hessian_norm(a: f64, b: f64, h: f64) -> f64 {
    let ga = (block_grad(a + h, b), block_grad(a - h, b));
    let gb = (block_grad(a, b + h), block_grad(a, b - h));
    let haa = (ga.0[0] - ga.1[0]) / (2.0 * h);
    let hab = 0.5 * ((ga.0[1] - ga.1[1]) + (gb.0[0] - gb.1[0])) / (2.0 * h);
    let hbb = (gb.0[1] - gb.1[1]) / (2.0 * h);
    let mean = 0.5 * (haa + hbb);
    let rad = (0.25 * (haa - hbb).powi(2) + hab * hab).sqrt();
    (mean + rad).abs().max((mean - rad).abs())
}

fn main() {
    let h = 1e-6;
    let mut block_max: f64 = 0.0;
    let steps = 1200;
    for ia in 0..=steps {
        let a = -3.0 + 6.0 * ia as f64 / steps as f64;
        for ib in 0..=steps {
            let b = -6.0 + 12.0 * ib as f64 / steps as f64;
            block_max = block_max.max(block_hessian_norm(a, b, h));
        }
    }
    let mut anchor_max: f64 = 0.0;
    for i in 0..=20_000 {
        let y = -6.0 + 12.0 * i as f64 / 20_000.0;
        let d2 = (chain_grad(&[y + h])[0] - chain_grad(&[y - h])[0]) / (2.0 * h);
        anchor_max = anchor_max.max(d2.abs());
    }
    let analytic = 2.0 * block_max + anchor_max + 0.2;
    println!("max 2x2 block Hessian norm     : {block_max:.4}");
    println!("max anchor second derivative   : {anchor_max:.4}");
    println!("block bound 2*block+anchor+1/5 : {analytic:.4}");

    // direct check through the clamp on random nearby pairs
    let k = 8;
    let inst = HardInstance::new(HardInstanceSpec::new(k, 1, 8 * k, 3)).expect("valid spec");
    let mut rng = stream_rng(11, 0);
    let mut pair_max: f64 = 0.0;
    for _ in 0..200_000 {
        let scale = 3.0 * rng.random::<f64>();
        let mut z = gaussian_vec(&mut rng, inst.block_dim());
        vecops::scale(&mut z, scale);
        let mut dz = gaussian_vec(&mut rng, inst.block_dim());
        vecops::scale(&mut dz, 1e-4);
        let mut z2 = z.clone();
        vecops::axpy(1.0, &dz, &mut z2);
        let ratio = vecops::dist(&inst.clamped_chain_grad(0, &z), &inst.clamped_chain_grad(0, &z2)) / vecops::norm(&dz);
        pair_max = pair_max.max(ratio);
    }
    println!("max sampled gradient ratio     : {pair_max:.4}");
    println!("stored constant                : {CHAIN_LIPSCHITZ}");
}
