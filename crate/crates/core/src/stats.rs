//! Classical survival statistics.
//!
//! Tie convention throughout: a subject censored at time t is still at risk
//! for events occurring at t.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Product-limit survival curve evaluated at the distinct event times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmCurve {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub n_events: Vec<usize>,
}

impl KmCurve {
    /// S(t) as a right-continuous step function; 1 before the first event.
    pub fn survival_at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            1.0
        } else {
            self.survival[k - 1]
        }
    }

    /// First event time with S(t) <= 0.5, if the curve gets there.
    pub fn median(&self) -> Option<f64> {
        self.times
            .iter()
            .zip(&self.survival)
            .find(|(_, &s)| s <= 0.5)
            .map(|(&t, _)| t)
    }

    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["time", "survival", "at_risk", "events"])?;
        for i in 0..self.times.len() {
            w.write_record(&[
                self.times[i].to_string(),
                self.survival[i].to_string(),
                self.at_risk[i].to_string(),
                self.n_events[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_lengths(times: &[f64], events: &[bool]) -> Result<()> {
    if times.len() != events.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            got: events.len(),
        });
    }
    Ok(())
}

fn sorted_order(times: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    order
}

pub fn kaplan_meier(times: &[f64], events: &[bool]) -> Result<KmCurve> {
    check_lengths(times, events)?;
    if times.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if times.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::InvalidArgument("times must be non-negative".into()));
    }
    let order = sorted_order(times);
    let mut curve = KmCurve {
        times: Vec::new(),
        survival: Vec::new(),
        at_risk: Vec::new(),
        n_events: Vec::new(),
    };
    let mut s = 1.0;
    let mut remaining = times.len();
    let mut k = 0;
    while k < order.len() {
        let t = times[order[k]];
        let mut d = 0;
        let mut m = 0;
        while k + m < order.len() && times[order[k + m]] == t {
            d += events[order[k + m]] as usize;
            m += 1;
        }
        if d > 0 {
            s *= (remaining - d) as f64 / remaining as f64;
            curve.times.push(t);
            curve.survival.push(s);
            curve.at_risk.push(remaining);
            curve.n_events.push(d);
        }
        remaining -= m;
        k += m;
    }
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRankResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub observed_a: f64,
    pub expected_a: f64,
}

/// Two-sample log-rank test with one degree of freedom.
///
/// Returns statistic 0 and p = 1 when the pooled hypergeometric variance
/// vanishes (no events, or every event time has a single-member risk set).
pub fn log_rank_test(a: (&[f64], &[bool]), b: (&[f64], &[bool])) -> Result<LogRankResult> {
    check_lengths(a.0, a.1)?;
    check_lengths(b.0, b.1)?;
    if a.0.is_empty() || b.0.is_empty() {
        return Err(Error::EmptyDataset);
    }
    // (time, event, in_a)
    let mut pooled: Vec<(f64, bool, bool)> = a
        .0
        .iter()
        .zip(a.1)
        .map(|(&t, &e)| (t, e, true))
        .chain(b.0.iter().zip(b.1).map(|(&t, &e)| (t, e, false)))
        .collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut at_risk_a = a.0.len() as f64;
    let mut at_risk_b = b.0.len() as f64;
    let (mut observed, mut expected, mut variance) = (0.0, 0.0, 0.0);
    let mut k = 0;
    while k < pooled.len() {
        let t = pooled[k].0;
        let (mut d_a, mut d, mut leave_a, mut leave_b) = (0.0, 0.0, 0.0, 0.0);
        while k < pooled.len() && pooled[k].0 == t {
            let (_, e, in_a) = pooled[k];
            if e {
                d += 1.0;
                if in_a {
                    d_a += 1.0;
                }
            }
            if in_a {
                leave_a += 1.0;
            } else {
                leave_b += 1.0;
            }
            k += 1;
        }
        if d > 0.0 {
            let n = at_risk_a + at_risk_b;
            observed += d_a;
            expected += d * at_risk_a / n;
            if n > 1.0 {
                variance += d * (at_risk_a / n) * (at_risk_b / n) * (n - d) / (n - 1.0);
            }
        }
        at_risk_a -= leave_a;
        at_risk_b -= leave_b;
    }
    let (statistic, p_value) = if variance > 0.0 {
        let s = (observed - expected).powi(2) / variance;
        (s, chi2_sf(s)?)
    } else {
        (0.0, 1.0)
    };
    Ok(LogRankResult {
        statistic,
        p_value,
        n_a: a.0.len(),
        n_b: b.0.len(),
        observed_a: observed,
        expected_a: expected,
    })
}

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Complementary error function for x >= 0.
///
/// Below 2.5 the all-positive series for erf is summed (no cancellation);
/// above it the classical continued fraction is evaluated by modified Lentz.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x == f64::INFINITY {
        return 0.0;
    }
    if x < 2.5 {
        // erf(x) = 2/sqrt(pi) e^{-x^2} sum_n 2^n x^{2n+1} / (2n+1)!!
        let x2 = x * x;
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        while term > sum * 1e-17 {
            n += 1.0;
            term *= 2.0 * x2 / (2.0 * n + 1.0);
            sum += term;
        }
        1.0 - 2.0 * FRAC_1_SQRT_PI * (-x2).exp() * sum
    } else {
        // erfc(x) = e^{-x^2}/sqrt(pi) / (x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
        let tiny = 1e-300;
        let mut f = x;
        let mut c = x;
        let mut d = 0.0;
        for n in 1..500 {
            let a = n as f64 / 2.0;
            d = x + a * d;
            if d.abs() < tiny {
                d = tiny;
            }
            c = x + a / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        FRAC_1_SQRT_PI * (-x * x).exp() / f
    }
}

/// Upper tail of the chi-square distribution with one degree of freedom.
pub fn chi2_sf(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "chi-square statistic must be non-negative, got {x}"
        )));
    }
    Ok(erfc((x / 2.0).sqrt()).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConcordanceMethod {
    Harrell,
    Antolini,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcordanceResult {
    pub value: f64,
    pub comparable_pairs: u64,
    /// Concordant pairs, ties counted one half.
    pub concordant: f64,
    pub method: ConcordanceMethod,
}

/// Walks comparable pairs (i, j): E_i = 1 and T_i < T_j.
fn concordance<F>(times: &[f64], events: &[bool], method: ConcordanceMethod, mut score: F) -> Result<ConcordanceResult>
where
    F: FnMut(usize, usize) -> f64,
{
    check_lengths(times, events)?;
    let order = sorted_order(times);
    let mut pairs = 0u64;
    let mut concordant = 0.0;
    let mut start_later = 0;
    for (pos, &i) in order.iter().enumerate() {
        if start_later <= pos {
            start_later = pos + 1;
        }
        while start_later < order.len() && times[order[start_later]] <= times[i] {
            start_later += 1;
        }
        if !events[i] {
            continue;
        }
        for &j in &order[start_later..] {
            pairs += 1;
            concordant += score(i, j);
        }
    }
    if pairs == 0 {
        return Err(Error::NoComparablePairs);
    }
    Ok(ConcordanceResult {
        value: concordant / pairs as f64,
        comparable_pairs: pairs,
        concordant,
        method,
    })
}

/// Harrell's C: higher risk should mean earlier event.
pub fn harrell_c(risks: &[f64], times: &[f64], events: &[bool]) -> Result<ConcordanceResult> {
    if risks.len() != times.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            got: risks.len(),
        });
    }
    concordance(times, events, ConcordanceMethod::Harrell, |i, j| {
        if risks[i] > risks[j] {
            1.0
        } else if risks[i] == risks[j] {
            0.5
        } else {
            0.0
        }
    })
}

/// Antolini's time-dependent concordance. `surv_at(subject, t)` is the
/// predicted survival probability of `subject` at time `t`; each comparable
/// pair is judged at the earlier subject's event time.
pub fn antolini_ctd<F>(surv_at: F, times: &[f64], events: &[bool]) -> Result<ConcordanceResult>
where
    F: Fn(usize, f64) -> f64,
{
    let mut cached: Option<(usize, f64)> = None;
    concordance(times, events, ConcordanceMethod::Antolini, |i, j| {
        let s_i = match cached {
            Some((k, s)) if k == i => s,
            _ => {
                let s = surv_at(i, times[i]);
                cached = Some((i, s));
                s
            }
        };
        let s_j = surv_at(j, times[i]);
        if s_i < s_j {
            1.0
        } else if s_i == s_j {
            0.5
        } else {
            0.0
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub resamples: usize,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap 95% interval.
///
/// Resample `r` draws from its own ChaCha stream `(seed, r)`, so the interval
/// is a pure function of the seed. Failed resamples are redrawn, up to
/// `10 * b` draws in total.
pub fn bootstrap_ci<F>(mut metric: F, n: usize, b: usize, seed: u64) -> Result<BootstrapCi>
where
    F: FnMut(&[usize]) -> Result<f64>,
{
    if b < 100 {
        return Err(Error::InvalidArgument(format!(
            "bootstrap needs at least 100 resamples, got {b}"
        )));
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let all: Vec<usize> = (0..n).collect();
    let point = metric(&all)?;
    let mut values = Vec::with_capacity(b);
    let mut idx = vec![0usize; n];
    let mut draw = 0u64;
    while values.len() < b {
        if draw >= 10 * b as u64 {
            return Err(Error::InvalidArgument(format!(
                "bootstrap metric failed too often ({} successes in {draw} draws)",
                values.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(draw);
        draw += 1;
        for slot in idx.iter_mut() {
            *slot = rng.gen_range(0..n);
        }
        if let Ok(v) = metric(&idx) {
            values.push(v);
        }
    }
    values.sort_by(f64::total_cmp);
    Ok(BootstrapCi {
        point,
        lower: quantile_sorted(&values, 0.025),
        upper: quantile_sorted(&values, 0.975),
        resamples: b,
    })
}
