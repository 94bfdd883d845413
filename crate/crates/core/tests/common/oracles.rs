//! Brute-force reference implementations used as test oracles.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

/// All-pairs concordance. `score(i, j)` compares the earlier subject i with j.
pub fn naive_concordance<F: Fn(usize, usize) -> f64>(times: &[f64], events: &[bool], score: F) -> Option<(f64, u64)> {
    let n = times.len();
    let mut pairs = 0u64;
    let mut conc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j && events[i] && times[i] < times[j] {
                pairs += 1;
                conc += score(i, j);
            }
        }
    }
    (pairs > 0).then(|| (conc / pairs as f64, pairs))
}

pub fn naive_harrell(risks: &[f64], times: &[f64], events: &[bool]) -> Option<(f64, u64)> {
    naive_concordance(times, events, |i, j| cmp_score(risks[j], risks[i]))
}

pub fn naive_antolini<S: Fn(usize, f64) -> f64>(surv: S, times: &[f64], events: &[bool]) -> Option<(f64, u64)> {
    naive_concordance(times, events, |i, j| cmp_score(surv(i, times[i]), surv(j, times[i])))
}

/// 1 if a < b, 0.5 on ties, else 0.
fn cmp_score(a: f64, b: f64) -> f64 {
    if a < b {
        1.0
    } else if a == b {
        0.5
    } else {
        0.0
    }
}

/// Observed, expected and variance tabulated per distinct event time.
pub fn logrank_oracle(ta: &[f64], ea: &[bool], tb: &[f64], eb: &[bool]) -> (f64, f64, f64) {
    let mut event_times: Vec<f64> = ta
        .iter()
        .zip(ea)
        .chain(tb.iter().zip(eb))
        .filter(|(_, &e)| e)
        .map(|(&t, _)| t)
        .collect();
    event_times.sort_by(f64::total_cmp);
    event_times.dedup();
    let (mut o, mut e, mut v) = (0.0, 0.0, 0.0);
    for &t in &event_times {
        let n_a = ta.iter().filter(|&&x| x >= t).count() as f64;
        let n_b = tb.iter().filter(|&&x| x >= t).count() as f64;
        let d_a = ta.iter().zip(ea).filter(|(&x, &ev)| ev && x == t).count() as f64;
        let d_b = tb.iter().zip(eb).filter(|(&x, &ev)| ev && x == t).count() as f64;
        let n = n_a + n_b;
        let d = d_a + d_b;
        o += d_a;
        e += d * n_a / n;
        if n > 1.0 {
            v += d * n_a * n_b * (n - d) / (n * n * (n - 1.0));
        }
    }
    (o, e, v)
}

fn normal_pdf(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Chi-square(1) survival function as `2 * int_{sqrt x}^{inf} phi(u) du`,
/// composite Simpson on a truncated interval.
pub fn chi2_sf_by_quadrature(x: f64) -> f64 {
    let a = x.sqrt();
    let b = a + 40.0;
    let m = 40_000;
    let h = (b - a) / m as f64;
    let mut s = normal_pdf(a) + normal_pdf(b);
    for k in 1..m {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * normal_pdf(a + k as f64 * h);
    }
    2.0 * s * h / 3.0
}

/// Row reduction over exact rationals.
pub fn rational_rank(rows: &[Vec<u8>]) -> usize {
    let mut m: Vec<Vec<BigRational>> = rows
        .iter()
        .map(|r| r.iter().map(|&v| BigRational::from_integer(BigInt::from(v))).collect())
        .collect();
    let cols = m.first().map_or(0, |r| r.len());
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..m.len()).find(|&r| !m[r][c].is_zero()) else {
            continue;
        };
        m.swap(rank, p);
        let pivot = m[rank][c].clone();
        for v in m[rank].iter_mut() {
            *v = &*v / &pivot;
        }
        for r in 0..m.len() {
            if r != rank && !m[r][c].is_zero() {
                let f = m[r][c].clone();
                for k in 0..cols {
                    let delta = &f * &m[rank][k];
                    m[r][k] = &m[r][k] - delta;
                }
            }
        }
        debug_assert!(m[rank][c].is_one());
        rank += 1;
    }
    rank
}

/// Kendall's tau-a over all pairs.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += ((a[i] - a[j]) * (b[i] - b[j])).signum();
        }
    }
    s / (n * (n - 1) / 2) as f64
}

/// Central differences of `f` around `x` with step `h`.
pub fn central_differences<F: FnMut(&[f64]) -> f64>(x: &[f64], h: f64, mut f: F) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|k| {
            p[k] = x[k] + h;
            let up = f(&p);
            p[k] = x[k] - h;
            let down = f(&p);
            p[k] = x[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest relative error with an absolute floor on the denominator.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
