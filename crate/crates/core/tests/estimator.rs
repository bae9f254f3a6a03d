mod common;

use common::{normalized_path, two_component, Linear};
use proptest::prelude::*;
use spider_core::estimator::{
    advance, advance_with_batch, enumerate_variance_oracle, mc_error_second_moment, reset, reset_with_batch,
    telescoped_variance, EstimatorSchedule, ResetBatch, SampleBatch, ENUMERATION_CAP,
};
use spider_core::problems::{Quadratic, QuadraticSpec};
use spider_core::rng::stream_rng;
use spider_core::sfo::{derive_params, Mode, ProblemConstants};
use spider_core::{CostLedger, CountingProblem, Problem};

#[test]
fn sampled_reset_on_constant_gradients_is_unbiased() {
    let p = Linear::new(vec![vec![1.0], vec![3.0]]);
    let mut ledger = CostLedger::new();
    let outcomes: Vec<f64> = (0..2)
        .map(|i| {
            let b = SampleBatch { indices: vec![i] };
            reset_with_batch(&p, &[0.4], Some(&b), 5, 0, &mut ledger).unwrap().v[0]
        })
        .collect();
    assert_eq!(outcomes, vec![1.0, 3.0]);
    assert_eq!((outcomes[0] + outcomes[1]) / 2.0, p.full_grad(&[0.4])[0]);
}

#[test]
fn online_reset_draws_two_sigma_sq_over_eps_sq_samples() {
    let c = ProblemConstants {
        lipschitz: 1.0,
        sigma: Some(1.0),
        gap: 1.0,
        hessian_lipschitz: None,
        n: 0,
    };
    let params = derive_params(0.1, &c, 1.0, Mode::Online, 0.1).unwrap();
    assert_eq!(params.reset, ResetBatch::Sample(200));
    let q = Quadratic::random(&QuadraticSpec::new(3, 10, 0));
    let mut ledger = CostLedger::new();
    reset(&q, &[0.0; 3], params.reset, params.q, 0, &mut stream_rng(0, 0), &mut ledger).unwrap();
    assert_eq!(ledger.sfo, 200);
}

#[test]
fn full_reset_matches_exact_gradient() {
    let q = Quadratic::random(&QuadraticSpec::new(6, 33, 4));
    let x = [0.3, -0.1, 0.0, 2.0, 1.0, -1.0];
    let mut ledger = CostLedger::new();
    let s = reset(&q, &x, ResetBatch::Full, 4, 0, &mut stream_rng(0, 0), &mut ledger).unwrap();
    let exact = q.full_grad(&x);
    for (a, b) in s.v.iter().zip(&exact) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(ledger.sfo, 33);
}

#[test]
fn advance_leaves_estimate_unchanged_for_linear_components() {
    let p = Linear::new(vec![vec![1.0, -2.0], vec![3.0, 0.5], vec![0.0, 4.0]]);
    let mut rng = stream_rng(3, 0);
    let mut ledger = CostLedger::new();
    let s0 = reset(&p, &[0.0, 0.0], ResetBatch::Sample(2), 10, 0, &mut rng, &mut ledger).unwrap();
    let s1 = advance(&p, &s0, &[5.0, -7.0], 3, &mut rng, &mut ledger).unwrap();
    assert_eq!(s1.v, s0.v);
    assert_eq!(s1.x_prev, vec![5.0, -7.0]);
    assert_eq!((s1.epoch_pos, s1.k), (1, 1));
}

#[test]
fn single_sample_advance_on_two_component_quadratic() {
    let p = two_component();
    let mut ledger = CostLedger::new();
    let s0 = reset(&p, &[0.0], ResetBatch::Full, 4, 0, &mut stream_rng(0, 0), &mut ledger).unwrap();
    let outcomes: Vec<f64> = (0..2)
        .map(|i| {
            advance_with_batch(&p, &s0, &[1.0], &SampleBatch { indices: vec![i] }, &mut ledger)
                .unwrap()
                .v[0]
        })
        .collect();
    assert_eq!(outcomes, vec![1.0, 3.0]);
    let truth = p.full_grad(&[1.0])[0];
    assert_eq!(truth, 2.0);
    let mse = outcomes.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / 2.0;
    assert_eq!(mse, 1.0);
}

#[test]
fn finite_sum_advance_batch_for_n_100() {
    let c = ProblemConstants {
        lipschitz: 1.0,
        sigma: None,
        gap: 1.0,
        hessian_lipschitz: None,
        n: 100,
    };
    assert_eq!(derive_params(0.1, &c, 1.0, Mode::FiniteSum, 0.1).unwrap().s2, 10);
}

#[test]
fn monte_carlo_agrees_with_enumeration_on_one_advance() {
    let p = two_component();
    let schedule = EstimatorSchedule {
        reset: ResetBatch::Full,
        s2: 1,
        q: 10,
    };
    let est = mc_error_second_moment(&p, &[vec![0.0], vec![1.0]], &schedule, 1.0, 20_000, 9).unwrap();
    assert!((est.mean - 1.0).abs() <= 3.0 * est.std_err, "{est:?}");
}

#[test]
fn monte_carlo_is_thread_count_independent() {
    let p = two_component();
    let schedule = EstimatorSchedule {
        reset: ResetBatch::Full,
        s2: 1,
        q: 10,
    };
    let traj = vec![vec![0.0], vec![0.5], vec![1.0]];
    let a = mc_error_second_moment(&p, &traj, &schedule, 1.0, 500, 1).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| mc_error_second_moment(&p, &traj, &schedule, 1.0, 500, 1).unwrap());
    assert_eq!(a, b);
}

#[test]
fn online_parameters_keep_error_below_eps_squared() {
    let q = Quadratic::random(&QuadraticSpec::new(4, 50, 2));
    let eps = 0.2;
    let x0 = vec![0.0; 4];
    let c = ProblemConstants::from_problem(&q, &x0).unwrap();
    let params = derive_params(eps, &c, 1.0, Mode::Online, 0.1).unwrap();
    let step = eps / c.lipschitz;
    let path = normalized_path(&q, &x0, params.q - 1, step);
    let schedule = EstimatorSchedule {
        reset: params.reset,
        s2: params.s2,
        q: params.q,
    };
    let est = mc_error_second_moment(&q, &path, &schedule, step, 4000, 5).unwrap();
    assert!(est.mean <= eps * eps + 3.0 * est.std_err, "{est:?} vs {}", eps * eps);
}

#[test]
fn enumeration_examples() {
    let p = two_component();
    let traj = vec![vec![0.0], vec![1.0]];
    assert_eq!(enumerate_variance_oracle(&p, &traj[..1], &[], ENUMERATION_CAP).unwrap(), 0.0);
    assert_eq!(enumerate_variance_oracle(&p, &traj, &[1], ENUMERATION_CAP).unwrap(), 1.0);
    assert_eq!(enumerate_variance_oracle(&p, &traj, &[2], ENUMERATION_CAP).unwrap(), 0.5);
}

#[test]
fn ledger_counts_match_raw_oracle_calls() {
    let q = Quadratic::random(&QuadraticSpec::new(3, 17, 1));
    let counted = CountingProblem::new(&q);
    let mut rng = stream_rng(0, 0);
    let mut ledger = CostLedger::new();
    let (r, t, s1, s2) = (3usize, 7usize, 5usize, 4usize);
    let mut x = vec![0.1, 0.2, 0.3];
    let mut resets = 0;
    let mut advances = 0;
    let mut state = None;
    for k in 0..(r * 3) {
        x[0] += 0.01;
        state = Some(match state {
            Some(s) if k % 3 != 0 && advances < t => {
                advances += 1;
                advance(&counted, &s, &x, s2, &mut rng, &mut ledger).unwrap()
            }
            _ => {
                resets += 1;
                reset(&counted, &x, ResetBatch::Sample(s1), 3, k, &mut rng, &mut ledger).unwrap()
            }
        });
    }
    assert_eq!(ledger.sfo, (resets * s1 + 2 * advances * s2) as u64);
    assert_eq!(ledger.sfo_samples, (resets * s1 + advances * s2) as u64);
    assert_eq!(counted.grad_calls(), ledger.sfo);

    let mut full = CostLedger::new();
    reset(&counted, &x, ResetBatch::Full, 3, 0, &mut rng, &mut full).unwrap();
    assert_eq!(full.sfo, 17);
}

fn small_quadratic() -> impl Strategy<Value = (Quadratic, Vec<Vec<f64>>, Vec<usize>)> {
    (1usize..=2, 2usize..=3, 1usize..=3).prop_flat_map(|(d, n, steps)| {
        (
            prop::collection::vec(prop::collection::vec(0.1f64..3.0, d), n),
            prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), n),
            prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), steps + 1),
            prop::collection::vec(1usize..=2, steps),
        )
            .prop_map(|(a, c, traj, sizes)| (Quadratic::new(a, c), traj, sizes))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn differential_is_unbiased_over_all_draws(
        (q, traj, _) in small_quadratic(),
        s in 1usize..=2,
    ) {
        let n = q.n();
        let d = q.dim();
        let (x_prev, x_new) = (&traj[0], &traj[1]);
        let mut mean = vec![0.0; d];
        let count = n.pow(s as u32);
        for code in 0..count {
            let mut c = code;
            let idx: Vec<usize> = (0..s).map(|_| { let i = c % n; c /= n; i }).collect();
            let a = q.batch_grad(&idx, x_new);
            let b = q.batch_grad(&idx, x_prev);
            for j in 0..d {
                mean[j] += (a[j] - b[j]) / count as f64;
            }
        }
        let gn = q.full_grad(x_new);
        let gp = q.full_grad(x_prev);
        for j in 0..d {
            prop_assert!((mean[j] - (gn[j] - gp[j])).abs() < 1e-12);
        }
    }

    #[test]
    fn enumeration_equals_telescoped_sum((q, traj, sizes) in small_quadratic()) {
        let e = enumerate_variance_oracle(&q, &traj, &sizes, ENUMERATION_CAP).unwrap();
        let t = telescoped_variance(&q, &traj, &sizes).unwrap();
        prop_assert!((e - t).abs() <= 1e-12 * t.abs().max(1e-300) || (e - t).abs() < 1e-15);
    }

    #[test]
    fn error_grows_at_most_linearly((q, traj, sizes) in small_quadratic()) {
        let l = q.meta().lipschitz;
        let s_min = *sizes.iter().min().unwrap() as f64;
        let eps1 = traj.windows(2).map(|w| spider_core::vecops::dist(&w[0], &w[1])).fold(0.0, f64::max);
        let k = sizes.len() as f64;
        let e = enumerate_variance_oracle(&q, &traj, &sizes, ENUMERATION_CAP).unwrap();
        prop_assert!(e <= k * l * l * eps1 * eps1 / s_min * (1.0 + 1e-12) + 1e-15);
    }
}
