#![allow(clippy::needless_range_loop)]

mod common;

use adpaad_core::classical::{run_classical, ClassicalRun};
use adpaad_core::timeseries::TimeSeries;
use adpaad_core::{Error, Parallelism};
use common::{brute_force, random_real_instance, w6};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn run(ts: &TimeSeries, n: usize, step: usize, q: usize, delta: f64) -> ClassicalRun {
    run_classical(ts, n, step, q, delta, Parallelism::Parallel).unwrap()
}

#[test]
fn w6_golden() {
    let r = run(&w6(), 4, 1, 2, 1.0);
    assert_eq!(
        r.paad.mu,
        vec![vec![1.5, 3.5], vec![2.5, 4.5], vec![3.5, 5.5]]
    );
    let s = &r.similarity.s;
    let r2 = 2f64.sqrt();
    assert!((s[0][1] - r2).abs() < 1e-12);
    assert!((s[1][2] - r2).abs() < 1e-12);
    assert!((s[0][2] - 2.0 * r2).abs() < 1e-12);
    for (h, want) in r.scores.h.iter().zip([1.125, 0.75, 1.125]) {
        assert!((h - want).abs() < 1e-12);
    }
    assert_eq!(r.scores.anomalies, vec![0, 2]);
    assert_eq!(r.similarity.c, 6.0);
    assert!((r.similarity.s_bar[0][1] - 1.0 / 12.0).abs() < 1e-15);
    assert!((r.similarity.s_bar[0][2] - 2.0 / 12.0).abs() < 1e-15);
}

#[test]
fn w6_thresholds() {
    assert_eq!(run(&w6(), 4, 1, 2, 0.0).scores.anomalies, vec![0, 1, 2]);
    assert!(run(&w6(), 4, 1, 2, 2.0).scores.anomalies.is_empty());
}

#[test]
fn identical_subsequences_have_no_scores() {
    let ts = TimeSeries::new(vec![2.0; 6]).unwrap();
    assert!(matches!(
        run_classical(&ts, 3, 1, 2, 1.0, Parallelism::Sequential),
        Err(Error::DegenerateScores)
    ));
}

#[test]
fn matches_brute_force_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    while checked < 200 {
        let inst = random_real_instance(&mut rng);
        let ts = TimeSeries::new(inst.x.clone()).unwrap();
        let Some(oracle) = brute_force(&inst.x, inst.n, inst.step, inst.q, 1.0) else {
            continue;
        };
        if oracle.h.len() < 2 {
            continue;
        }
        for par in [Parallelism::Sequential, Parallelism::Parallel] {
            let r = run_classical(&ts, inst.n, inst.step, inst.q, 1.0, par).unwrap();
            assert_eq!(r.paad.mu, oracle.mu);
            assert_eq!(r.similarity.s, oracle.s);
            assert_eq!(r.scores.h, oracle.h);
            assert_eq!(r.scores.anomalies, oracle.anomalies);
        }
        checked += 1;
    }
}

#[test]
fn operation_counts() {
    let r = run(&w6(), 4, 1, 2, 1.0);
    assert_eq!(r.ops.membership_tests, 3 * 2 * 4);
    assert_eq!(r.ops.similarity_terms, 3 * 3 * 2);
    assert_eq!(r.ops.score_terms, 9);
}

fn integer_series() -> impl Strategy<Value = (Vec<f64>, usize, usize)> {
    (2usize..=8).prop_flat_map(|n| {
        (
            prop::collection::vec(0i32..20, n + 1..=n + 10),
            Just(n),
            1usize..=n.min(4),
        )
            .prop_map(|(x, n, q)| (x.into_iter().map(f64::from).collect(), n, q))
    })
}

proptest! {
    #[test]
    fn scores_average_to_one((x, n, q) in integer_series()) {
        let ts = TimeSeries::new(x).unwrap();
        if let Ok(r) = run_classical(&ts, n, 1, q, 1.0, Parallelism::Sequential) {
            let k = r.scores.h.len() as f64;
            let sum: f64 = r.scores.h.iter().sum();
            prop_assert!((sum - k).abs() <= 1e-9 * k);
            prop_assert!(r.scores.h.iter().all(|&h| h >= 0.0));
        }
    }

    #[test]
    fn shift_and_scale_leave_scores_unchanged(
        (x, n, q) in integer_series(),
        shift in -50i32..50,
        scale_pow in 0u32..4,
    ) {
        let ts = TimeSeries::new(x).unwrap();
        let Ok(base) = run_classical(&ts, n, 1, q, 1.0, Parallelism::Sequential) else {
            return Ok(());
        };
        // An empty subsection reads as mean 0 whatever the offset of the
        // data, so only fully populated instances are shift invariant.
        prop_assume!(base.paad.empty.iter().flatten().all(|e| !e));
        let shifted = run_classical(&ts.shifted(f64::from(shift)), n, 1, q, 1.0, Parallelism::Sequential).unwrap();
        // Means of non-dyadic counts round differently after a shift, so
        // scores agree to round-off rather than bit for bit.
        for (a, b) in shifted.scores.h.iter().zip(&base.scores.h) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        let s = 2f64.powi(scale_pow as i32);
        let scaled = run_classical(&ts.scaled(s), n, 1, q, 1.0, Parallelism::Sequential).unwrap();
        prop_assert_eq!(&scaled.scores.h, &base.scores.h);
        for (a, b) in scaled.similarity.s.iter().flatten().zip(base.similarity.s.iter().flatten()) {
            prop_assert_eq!(*a, b * s);
        }
    }

    #[test]
    fn similarity_is_symmetric_with_zero_diagonal((x, n, q) in integer_series()) {
        let ts = TimeSeries::new(x).unwrap();
        if let Ok(r) = run_classical(&ts, n, 1, q, 1.0, Parallelism::Sequential) {
            let s = &r.similarity.s;
            for i in 0..s.len() {
                prop_assert_eq!(s[i][i], 0.0);
                for k in 0..s.len() {
                    prop_assert_eq!(s[i][k], s[k][i]);
                    prop_assert!((0.0..=1.0).contains(&r.similarity.s_bar[i][k]));
                }
            }
        }
    }
}
