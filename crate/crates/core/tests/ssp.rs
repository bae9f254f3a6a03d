mod common;

use spider_core::problems::{Quadratic, SaddleQuartic, SaddleSpec};
use spider_core::rng::{stream_rng, STREAM_SIGNS};
use spider_core::sfo::{derive_params, Mode, ProblemConstants};
use spider_core::ssp::{
    derive_params_ssp, eigen_referee, first_order_block, nc_search, run_sfo_plus, second_order_block,
    second_order_block_signed, BlockResult, Cursor, NcBackend, NcsOutcome, SspParams,
};
use spider_core::{vecops, CostLedger, Event, Problem, Status, TraceOptions};

/// Saddle with a negligible quartic term, so it is quadratic near the origin.
fn near_quadratic(diag: Vec<f64>) -> SaddleQuartic {
    SaddleQuartic::new(diag, 1e-12, 1, 0.0, 0)
}

fn manual_params(inner: usize, eta: f64, q: usize, eps_tilde: f64) -> SspParams {
    let c = ProblemConstants {
        lipschitz: 1.0,
        sigma: Some(1.0),
        gap: 1.0,
        hessian_lipschitz: Some(1.0),
        n: 1,
    };
    let mut base = derive_params(0.1, &c, 1.0, Mode::FiniteSum, 0.1).unwrap();
    base.eta = eta;
    base.q = q;
    SspParams {
        base,
        delta: 0.5,
        rho: 1.0,
        inner_steps: inner,
        outer_blocks: 10,
        eps_tilde,
        ncs_fail_prob: 0.01,
    }
}

#[test]
fn oja_search_examples() {
    let identity = Quadratic::new(vec![vec![1.0; 3]], vec![vec![0.0; 3]]);
    let mut ledger = CostLedger::new();
    for seed in 0..5 {
        let out = nc_search(&identity, &[0.3, 0.1, -2.0], 0.5, 0.05, NcBackend::Oja, seed, &mut ledger).unwrap();
        assert_eq!(out, NcsOutcome::Bot);
    }
    assert!(ledger.sfo > 0);

    let saddle = near_quadratic(vec![1.0, -1.0]);
    for seed in 0..5 {
        match nc_search(&saddle, &[0.0, 0.0], 0.5, 0.05, NcBackend::Oja, seed, &mut ledger).unwrap() {
            NcsOutcome::Direction(w) => {
                assert!((vecops::norm(&w) - 1.0).abs() < 1e-10);
                assert!(w[1].abs() >= 0.625f64.sqrt(), "{w:?}");
            }
            NcsOutcome::Bot => panic!("missed the negative direction"),
        }
    }

    let shallow = near_quadratic(vec![1.0, -0.1]);
    for seed in 0..5 {
        assert_eq!(
            nc_search(&shallow, &[0.0, 0.0], 0.5, 0.05, NcBackend::Oja, seed, &mut ledger).unwrap(),
            NcsOutcome::Bot
        );
    }
}

#[test]
fn exact_backend_examples() {
    let mut ledger = CostLedger::new();
    let saddle = near_quadratic(vec![1.0, -1.0]);
    match nc_search(&saddle, &[0.0, 0.0], 0.5, 0.05, NcBackend::Exact, 0, &mut ledger).unwrap() {
        NcsOutcome::Direction(w) => assert!((w[1].abs() - 1.0).abs() < 1e-12),
        NcsOutcome::Bot => panic!("missed the negative direction"),
    }
    assert_eq!(ledger.hvp, 2);
}

#[test]
fn eigen_referee_examples() {
    let p = near_quadratic(vec![1.0, -1.0]);
    let (l, v) = eigen_referee(&p, &[0.0, 0.0]).unwrap();
    assert!((l + 1.0).abs() < 1e-9);
    assert!((v[1].abs() - 1.0).abs() < 1e-9);

    let s = SaddleQuartic::random(&SaddleSpec::new(8, 64, 3));
    let (l, _) = eigen_referee(&s, &[0.0; 8]).unwrap();
    assert!((l - s.lambda_min_at_origin()).abs() < 1e-8);

    // no analytic Hessian-vector product: differences of the mean gradient
    let lin = common::Linear::new(vec![vec![1.0, 2.0]]);
    let (l, _) = eigen_referee(&lin, &[0.5, 0.5]).unwrap();
    assert!(l.abs() < 1e-8);
}

#[test]
fn single_mini_step_moves_by_eta() {
    let p = near_quadratic(vec![1.0, -1.0]);
    let params = manual_params(1, 0.05, 4, 0.0);
    let w1 = [0.6, 0.8];
    for sign in [1.0, -1.0] {
        let mut ledger = CostLedger::new();
        let cur = second_order_block_signed(&p, Cursor::start(&[0.0, 0.0]), &w1, sign, &params, &mut stream_rng(0, 0), &mut ledger)
            .unwrap();
        assert!((cur.x[0] + sign * 0.03).abs() < 1e-15 && (cur.x[1] + sign * 0.04).abs() < 1e-15);
        assert_eq!(cur.k, 1);
    }
}

#[test]
fn quadratic_saddle_decreases_by_half_travel_squared() {
    let p = near_quadratic(vec![1.0, -1.0]);
    let params = manual_params(8, 0.025, 3, 0.0);
    let travel = 8.0 * 0.025;
    for sign in [1.0, -1.0] {
        let mut ledger = CostLedger::new();
        let cur = second_order_block_signed(&p, Cursor::start(&[0.0, 0.0]), &[0.0, 1.0], sign, &params, &mut stream_rng(0, 0), &mut ledger)
            .unwrap();
        let drop = p.full_value(&[0.0, 0.0]) - p.full_value(&cur.x);
        assert!((drop - travel * travel / 2.0).abs() < 1e-10);
    }
}

#[test]
fn second_order_block_keeps_the_epoch_schedule() {
    let p = SaddleQuartic::random(&SaddleSpec::new(3, 10, 0));
    let params = manual_params(7, 0.01, 3, 0.0);
    let mut ledger = CostLedger::new();
    let mut rng = stream_rng(1, 0);
    let mut signs = stream_rng(1, STREAM_SIGNS);
    let cur = second_order_block(&p, Cursor::start(&[0.0; 3]), &[0.0, 0.0, 1.0], &params, &mut signs, &mut rng, &mut ledger)
        .unwrap();
    // k = 0, 3, 6 reset (n each); the other four steps advance
    assert_eq!(ledger.sfo, 3 * 10 + 4 * 2 * params.base.s2 as u64);
    let state = cur.state.clone().unwrap();
    assert_eq!((state.k, state.epoch_pos), (6, 0));
    // the block continues the estimate instead of re-resetting
    let cur = second_order_block(&p, cur, &[0.0, 0.0, 1.0], &params, &mut signs, &mut rng, &mut ledger).unwrap();
    assert_eq!(cur.k, 14);
    assert_eq!(ledger.sfo, 5 * 10 + 9 * 2 * params.base.s2 as u64);
}

#[test]
fn sign_average_of_displacement_vanishes() {
    let lin = common::Linear::new(vec![vec![1.0, -1.0]]);
    let params = manual_params(5, 0.1, 2, 0.0);
    let w1 = [0.6, 0.8];
    let mut mean = vec![0.0; 2];
    for sign in [1.0, -1.0] {
        let cur = second_order_block_signed(&lin, Cursor::start(&[1.0, 1.0]), &w1, sign, &params, &mut stream_rng(0, 0), &mut CostLedger::new())
            .unwrap();
        vecops::axpy(0.5, &vecops::sub(&cur.x, &[1.0, 1.0]), &mut mean);
    }
    assert!(vecops::norm(&mean) < 1e-15);
}

#[test]
fn first_order_block_behaviour() {
    let q = Quadratic::new(vec![vec![1.0, 2.0]; 2], vec![vec![0.0, 0.0]; 2]);
    let params = manual_params(5, 0.01, 10, 1e-3);
    let mut ledger = CostLedger::new();
    match first_order_block(&q, Cursor::start(&[0.0, 0.0]), &params, &mut stream_rng(0, 0), &mut ledger).unwrap() {
        BlockResult::Stopped(c) => assert_eq!((c.k, c.x.clone()), (0, vec![0.0, 0.0])),
        BlockResult::Continue(_) => panic!("zero estimate must stop"),
    }
    let start = Cursor::start(&[1.0, 1.0]);
    match first_order_block(&q, start, &params, &mut stream_rng(0, 0), &mut ledger).unwrap() {
        BlockResult::Continue(c) => {
            assert_eq!(c.k, 5);
            // five steps of length eta, all towards the origin
            assert!(vecops::dist(&c.x, &[1.0, 1.0]) <= 5.0 * 0.01 + 1e-12);
            assert!(vecops::norm(&c.x) < 2f64.sqrt());
        }
        BlockResult::Stopped(_) => panic!("large gradient must not stop"),
    }
}

#[test]
fn convex_problem_never_takes_second_order_blocks() {
    let q = Quadratic::new(vec![vec![1.0, 2.0]; 4], vec![vec![1.0, -1.0]; 4]);
    let c = ProblemConstants {
        lipschitz: 2.0,
        sigma: Some(0.0),
        gap: q.full_value(&[0.0, 0.0]),
        hessian_lipschitz: Some(1.0),
        n: 4,
    };
    let params = derive_params_ssp(0.1, &c, 1.0, Mode::FiniteSum, 0.1, None).unwrap();
    let t = run_sfo_plus(&q, &params, NcBackend::Exact, &[0.0, 0.0], 0, TraceOptions::rows_only()).unwrap();
    assert_eq!(t.status, Status::Stopped);
    // each block is preceded by an Ncs row; with only first-order blocks the
    // iterations between searches are at most inner_steps
    let ncs_rows: Vec<usize> = t.rows.iter().filter(|r| r.event == Event::Ncs).map(|r| r.k).collect();
    for w in ncs_rows.windows(2) {
        assert_eq!(w[1] - w[0], params.inner_steps);
    }
}

#[test]
fn saddle_start_escapes_along_the_negative_direction() {
    let p = SaddleQuartic::random(&SaddleSpec::new(4, 16, 2));
    let x0 = [0.0; 4];
    let c = ProblemConstants::from_problem(&p, &x0).unwrap();
    let params = derive_params_ssp(0.04, &c, 1.0, Mode::FiniteSum, 0.1, None).unwrap();
    let mut decreased = 0;
    for seed in 0..10 {
        let t = run_sfo_plus(&p, &params, NcBackend::Oja, &x0, seed, TraceOptions::rows_only()).unwrap();
        // the first block after the search at the saddle must be second order:
        // it never checks the stop rule, so it runs inner_steps iterations
        let second = t.rows.iter().filter(|r| r.event == Event::Ncs).nth(1).map(|r| r.k);
        assert_eq!(second, Some(params.inner_steps));
        if p.full_value(&t.x_out) < p.full_value(&x0) {
            decreased += 1;
        }
    }
    assert!(decreased >= 5);
}

#[test]
fn ssp_runs_are_reproducible() {
    let p = SaddleQuartic::random(&SaddleSpec::new(3, 8, 1));
    let c = ProblemConstants::from_problem(&p, &[0.0; 3]).unwrap();
    let params = derive_params_ssp(0.05, &c, 1.0, Mode::FiniteSum, 0.1, None).unwrap();
    let a = run_sfo_plus(&p, &params, NcBackend::Oja, &[0.0; 3], 4, TraceOptions::full()).unwrap();
    let b = run_sfo_plus(&p, &params, NcBackend::Oja, &[0.0; 3], 4, TraceOptions::full()).unwrap();
    assert_eq!(a, b);
}
