//! Shared test helpers: an independent nested-loop evaluation of the
//! classical pipeline and random instance generators.

#![allow(dead_code, clippy::needless_range_loop)]

use adpaad_core::timeseries::TimeSeries;
use rand::Rng;

pub fn w6() -> TimeSeries {
    TimeSeries::new((1..=6).map(f64::from).collect()).unwrap()
}

pub struct BruteForce {
    pub mu: Vec<Vec<f64>>,
    pub s: Vec<Vec<f64>>,
    pub h: Vec<f64>,
    pub anomalies: Vec<usize>,
}

/// Direct evaluation of subsection means, Euclidean similarities and scores
/// with plain loops over the raw samples. Returns `None` when every
/// similarity is zero.
pub fn brute_force(x: &[f64], n: usize, step: usize, q: usize, delta: f64) -> Option<BruteForce> {
    let k = (x.len() - n) / step + 1;
    let mut mu = vec![vec![0.0; q]; k];
    for i in 0..k {
        let w = &x[i * step..i * step + n];
        let mut lo = w[0];
        let mut hi = w[0];
        for &v in w {
            if v < lo {
                lo = v;
            }
            if v > hi {
                hi = v;
            }
        }
        let mut a = vec![0.0; q + 1];
        for (t, slot) in a.iter_mut().enumerate() {
            *slot = lo + (t as f64 * (hi - lo)) / q as f64;
        }
        a[q] = hi;
        for t in 1..=q {
            let mut sum = 0.0;
            let mut cnt = 0usize;
            for &v in w {
                let inside = if t < q {
                    a[t - 1] <= v && v < a[t]
                } else {
                    a[t - 1] <= v && v <= a[t]
                };
                if inside {
                    sum += v;
                    cnt += 1;
                }
            }
            mu[i][t - 1] = if cnt == 0 { 0.0 } else { sum / cnt as f64 };
        }
    }
    let mut s = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            let mut acc = 0.0;
            for t in 0..q {
                acc += (mu[i][t] - mu[j][t]) * (mu[i][t] - mu[j][t]);
            }
            s[i][j] = acc.sqrt();
        }
    }
    let mut total = 0.0;
    for row in &s {
        for &v in row {
            total += v;
        }
    }
    if total <= 0.0 {
        return None;
    }
    let kf = k as f64;
    let mut h = Vec::with_capacity(k);
    for row in &s {
        let mut r = 0.0;
        for &v in row {
            r += v;
        }
        h.push((r / kf) / (total / (kf * kf)));
    }
    let anomalies = (0..k).filter(|&i| h[i] >= delta).collect();
    Some(BruteForce {
        mu,
        s,
        h,
        anomalies,
    })
}

/// A random instance for the classical equivalence check: real-valued
/// samples, `m <= 32`, `n <= 8`, `q <= 4`.
pub struct Instance {
    pub x: Vec<f64>,
    pub n: usize,
    pub step: usize,
    pub q: usize,
}

pub fn random_real_instance<R: Rng>(rng: &mut R) -> Instance {
    let n = rng.gen_range(1..=8);
    let q = rng.gen_range(1..=n.min(4));
    let m = rng.gen_range(n..=32);
    let step = rng.gen_range(1..=3);
    let x = (0..m)
        .map(|_| {
            if rng.gen_bool(0.3) {
                rng.gen_range(-5..=5) as f64
            } else {
                rng.gen_range(-10.0..10.0)
            }
        })
        .collect();
    Instance { x, n, step, q }
}

/// A random nonnegative integer-valued instance with `K <= 8`, `n <= 16`,
/// `q <= 4`. Integer samples keep subsection bounds at least `1/q` away
/// from any sample that does not sit exactly on them, so fixed-point
/// membership agrees with the floating-point reference.
pub fn random_integer_instance<R: Rng>(rng: &mut R) -> Instance {
    let n = rng.gen_range(4..=16);
    let q = rng.gen_range(2..=4);
    let k = rng.gen_range(2..=8);
    let step = rng.gen_range(1..=2);
    let m = n + (k - 1) * step;
    let hi = rng.gen_range(4..=20);
    let x = (0..m).map(|_| rng.gen_range(0..=hi) as f64).collect();
    Instance { x, n, step, q }
}

/// Like [`random_integer_instance`] but with a lifted block planted in a
/// low-amplitude background, so some subsequences stand out.
pub fn random_planted_instance<R: Rng>(rng: &mut R) -> Instance {
    let n = rng.gen_range(4..=16);
    let q = rng.gen_range(2..=4);
    let k = rng.gen_range(3..=8);
    let step = rng.gen_range(1..=2);
    let m = n + (k - 1) * step;
    let base = rng.gen_range(2..=6);
    let mut x: Vec<f64> = (0..m).map(|_| rng.gen_range(0..=base) as f64).collect();
    let len = rng.gen_range(1..=n / 2);
    let at = rng.gen_range(0..=m - len);
    let lift = rng.gen_range(8..=20) as f64;
    for v in &mut x[at..at + len] {
        *v += lift;
    }
    Instance { x, n, step, q }
}

/// Midpoint of the widest gap between consecutive sorted scores, and its
/// distance to the nearest score.
/// Without any gap the threshold is 1 with margin 0.
pub fn widest_gap_threshold(h: &[f64]) -> (f64, f64) {
    let mut s = h.to_vec();
    s.sort_by(f64::total_cmp);
    s.windows(2)
        .map(|w| (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0])))
        .fold((1.0, 0.0), |best, c| if c.1 > best.1 { c } else { best })
}
