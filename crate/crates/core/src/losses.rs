//! Survival losses on head outputs and the survival curves they imply.
//!
//! Continuous time: Cox negative log partial likelihood, Breslow ties,
//! risk sets restricted to the batch. Discrete time: per-bin PMF likelihood
//! plus a pairwise ranking penalty on cumulative incidence.

use serde::{Deserialize, Serialize};

use crate::stats::quantile_sorted;
use crate::{Error, Result};

/// Floor applied inside every logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub nll_component: f64,
    pub rank_component: f64,
    /// dL/d(head output), one row per subject.
    pub grad: Vec<Vec<f64>>,
    /// Comparable pairs seen by the ranking term (0 for the Cox loss).
    pub rank_pairs: usize,
}

fn check_batch(n: usize, times: &[f64], events: &[bool]) -> Result<()> {
    for len in [times.len(), events.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, got: len });
        }
    }
    Ok(())
}

/// Cox negative log partial likelihood averaged over events:
/// `-(1/D) sum_{E_i} [eta_i - log sum_{T_j >= T_i} exp(eta_j)]`.
pub fn cox_nll(log_risks: &[f64], times: &[f64], events: &[bool]) -> Result<LossValue> {
    let n = log_risks.len();
    check_batch(n, times, events)?;
    let n_events = events.iter().filter(|&&e| e).count();
    if n_events == 0 {
        return Err(Error::NoEvents);
    }
    if log_risks.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("log risks".into()));
    }
    let shift = log_risks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_risks.iter().map(|&e| (e - shift).exp()).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[b].total_cmp(&times[a]));

    // Descending pass: risk-set sums per tie group (group = run of equal times).
    let mut groups: Vec<(usize, usize, f64, usize)> = Vec::new(); // (start, end, risk sum, events)
    let mut risk_sum = 0.0;
    let mut loss = 0.0;
    let mut k = 0;
    while k < n {
        let start = k;
        let t = times[order[k]];
        let mut d = 0;
        while k < n && times[order[k]] == t {
            risk_sum += w[order[k]];
            d += events[order[k]] as usize;
            k += 1;
        }
        if d > 0 {
            let log_r = risk_sum.ln() + shift;
            for &i in &order[start..k] {
                if events[i] {
                    loss -= log_risks[i] - log_r;
                }
            }
        }
        groups.push((start, k, risk_sum, d));
    }

    // Ascending pass: subject j collects w_j / R_i from every event with T_i <= T_j.
    let mut grad = vec![vec![0.0]; n];
    let mut acc = 0.0;
    for &(start, end, risk, d) in groups.iter().rev() {
        acc += d as f64 / risk;
        for &j in &order[start..end] {
            grad[j][0] = (w[j] * acc - events[j] as u8 as f64) / n_events as f64;
        }
    }
    let nll = loss / n_events as f64;
    Ok(LossValue {
        total: nll,
        nll_component: nll,
        rank_component: 0.0,
        grad,
        rank_pairs: 0,
    })
}

/// Cut points splitting `[0, inf)` into K bins: bin k covers `[c_k, c_{k+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub cut_points: Vec<f64>,
}

impl TimeGrid {
    pub fn new(cut_points: Vec<f64>) -> Result<Self> {
        if cut_points.is_empty() || cut_points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("cut points must be non-empty and strictly increasing".into()));
        }
        Ok(Self { cut_points })
    }

    pub fn bins(&self) -> usize {
        self.cut_points.len() + 1
    }

    pub fn bin(&self, t: f64) -> usize {
        self.cut_points.partition_point(|&c| c <= t)
    }
}

/// Equal-count bins from quantiles of the observed event times. K is capped
/// at the number of distinct event times and shrinks when quantiles coincide.
pub fn make_time_grid(times: &[f64], events: &[bool], k: usize) -> Result<TimeGrid> {
    check_batch(times.len(), times, events)?;
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 bins, got {k}")));
    }
    let mut ev: Vec<f64> = times.iter().zip(events).filter(|(_, &e)| e).map(|(&t, _)| t).collect();
    ev.sort_by(f64::total_cmp);
    let mut distinct = ev.clone();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 distinct event times".into()));
    }
    let k = k.min(distinct.len());
    let mut cuts: Vec<f64> = (1..k).map(|j| quantile_sorted(&ev, j as f64 / k as f64)).collect();
    cuts.dedup();
    if cuts.len() == 1 && cuts[0] <= ev[0] {
        // all mass on the first event time: cut just above it instead
        cuts[0] = distinct[1];
    }
    TimeGrid::new(cuts)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Discrete-time likelihood plus ranking loss.
///
/// NLL (mean over subjects): `-log p[bin(T)]` for events and
/// `-log sum_{k > bin(T)} p[k]` for censored subjects. Ranking (mean over
/// pairs with `E_i = 1`, `T_i < T_j`): `exp(-(F_i - F_j) / sigma)` with
/// `F` the cumulative incidence at `bin(T_i)`, small once subject i's
/// incidence exceeds subject j's. `total = nll + alpha * rank`.
pub fn deephit_loss(
    logits: &[Vec<f64>],
    times: &[f64],
    events: &[bool],
    grid: &TimeGrid,
    alpha: f64,
    sigma: f64,
) -> Result<LossValue> {
    let n = logits.len();
    check_batch(n, times, events)?;
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(alpha >= 0.0) || !(sigma > 0.0) {
        return Err(Error::InvalidArgument("need alpha >= 0 and sigma > 0".into()));
    }
    let k = grid.bins();
    if let Some(bad) = logits.iter().find(|l| l.len() != k) {
        return Err(Error::DimensionMismatch { expected: k, got: bad.len() });
    }
    let probs: Vec<Vec<f64>> = logits.iter().map(|l| softmax(l)).collect();
    let bins: Vec<usize> = times.iter().map(|&t| grid.bin(t)).collect();
    let mut grad = vec![vec![0.0; k]; n];

    let mut nll = 0.0;
    for i in 0..n {
        let p = &probs[i];
        let b = bins[i];
        if events[i] {
            nll -= p[b].max(PROB_FLOOR).ln();
            if p[b] > PROB_FLOOR {
                for (m, g) in grad[i].iter_mut().enumerate() {
                    *g += (p[m] - (m == b) as u8 as f64) / n as f64;
                }
            }
        } else {
            let s: f64 = p[b + 1..].iter().sum();
            nll -= s.max(PROB_FLOOR).ln();
            if s > PROB_FLOOR {
                for (m, g) in grad[i].iter_mut().enumerate() {
                    let tail = if m > b { p[m] / s } else { 0.0 };
                    *g += (p[m] - tail) / n as f64;
                }
            }
        }
    }
    nll /= n as f64;

    // cumulative incidence F_x(b) for every subject and bin
    let cum: Vec<Vec<f64>> = probs
        .iter()
        .map(|p| {
            p.iter()
                .scan(0.0, |acc, &v| {
                    *acc += v;
                    Some(*acc)
                })
                .collect()
        })
        .collect();
    // dL/dF_x(b), accumulated over pairs
    let mut d_cum = vec![vec![0.0; k]; n];
    let mut rank = 0.0;
    let mut pairs = 0usize;
    if alpha > 0.0 {
        for i in (0..n).filter(|&i| events[i]) {
            let b = bins[i];
            for j in 0..n {
                if times[j] > times[i] {
                    let term = (-(cum[i][b] - cum[j][b]) / sigma).exp();
                    rank += term;
                    pairs += 1;
                    d_cum[i][b] -= term / sigma;
                    d_cum[j][b] += term / sigma;
                }
            }
        }
    }
    if pairs > 0 {
        rank /= pairs as f64;
        let scale = alpha / pairs as f64;
        for x in 0..n {
            for b in 0..k {
                let c = d_cum[x][b];
                if c == 0.0 {
                    continue;
                }
                // dF(b)/dlogit_m = p_m (1[m <= b] - F(b))
                for m in 0..k {
                    let ind = (m <= b) as u8 as f64;
                    grad[x][m] += scale * c * probs[x][m] * (ind - cum[x][b]);
                }
            }
        }
    }
    Ok(LossValue {
        total: nll + alpha * rank,
        nll_component: nll,
        rank_component: rank,
        grad,
        rank_pairs: pairs,
    })
}

/// Breslow estimate of the baseline cumulative hazard, a right-continuous
/// step function jumping at each distinct event time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineHazard {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl BaselineHazard {
    pub fn fit(log_risks: &[f64], times: &[f64], events: &[bool]) -> Result<Self> {
        check_batch(log_risks.len(), times, events)?;
        let n = times.len();
        let shift = log_risks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| times[b].total_cmp(&times[a]));
        let mut jumps = Vec::new();
        let mut risk = 0.0;
        let mut k = 0;
        while k < n {
            let t = times[order[k]];
            let mut d = 0usize;
            while k < n && times[order[k]] == t {
                risk += (log_risks[order[k]] - shift).exp();
                d += events[order[k]] as usize;
                k += 1;
            }
            if d > 0 {
                jumps.push((t, d as f64 / risk));
            }
        }
        jumps.reverse();
        let scale = (-shift).exp();
        let mut acc = 0.0;
        let (times, values) = jumps
            .into_iter()
            .map(|(t, h)| {
                acc += h;
                (t, acc * scale)
            })
            .unzip();
        Ok(Self { times, values })
    }

    pub fn at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            0.0
        } else {
            self.values[k - 1]
        }
    }
}

/// Per-subject survival curves implied by head outputs.
#[derive(Debug, Clone, PartialEq)]
pub enum SurvivalPrediction {
    Continuous { log_risks: Vec<f64>, baseline: BaselineHazard },
    Discrete { pmf: Vec<Vec<f64>>, grid: TimeGrid },
}

impl SurvivalPrediction {
    /// `S_i(t) = exp(-exp(eta_i) H0(t))`.
    pub fn continuous(log_risks: Vec<f64>, baseline: BaselineHazard) -> Self {
        SurvivalPrediction::Continuous { log_risks, baseline }
    }

    /// `S_i(t) = 1 - sum_{k <= bin(t)} p_i[k]` from per-subject logits.
    pub fn discrete(logits: &[Vec<f64>], grid: TimeGrid) -> Self {
        SurvivalPrediction::Discrete {
            pmf: logits.iter().map(|l| softmax(l)).collect(),
            grid,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SurvivalPrediction::Continuous { log_risks, .. } => log_risks.len(),
            SurvivalPrediction::Discrete { pmf, .. } => pmf.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn survival(&self, subject: usize, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument(format!("survival queried at negative time {t}")));
        }
        Ok(self.survival_at(subject, t))
    }

    /// Unchecked variant of [`Self::survival`] for non-negative `t`.
    pub fn survival_at(&self, subject: usize, t: f64) -> f64 {
        match self {
            SurvivalPrediction::Continuous { log_risks, baseline } => {
                let h = baseline.at(t);
                if h == 0.0 {
                    return 1.0;
                }
                (-(log_risks[subject].min(700.0)).exp() * h).exp()
            }
            SurvivalPrediction::Discrete { pmf, grid } => {
                let b = grid.bin(t);
                (1.0 - pmf[subject][..=b].iter().sum::<f64>()).clamp(0.0, 1.0)
            }
        }
    }

    /// Scalar risk for rank-based metrics: the log-risk, or for the discrete
    /// head the expected number of bins lost, `K - 1 - E[bin]`.
    pub fn risk_scores(&self) -> Vec<f64> {
        match self {
            SurvivalPrediction::Continuous { log_risks, .. } => log_risks.clone(),
            SurvivalPrediction::Discrete { pmf, .. } => pmf
                .iter()
                .map(|p| {
                    let k = p.len() as f64;
                    k - 1.0 - p.iter().enumerate().map(|(b, v)| b as f64 * v).sum::<f64>()
                })
                .collect(),
        }
    }
}
