//! Synthetic right-censored data from an exponential Cox model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SurvivalRecord};
use crate::stats::quantile_sorted;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskKind {
    Linear,
    Gaussian,
}

impl std::str::FromStr for RiskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(RiskKind::Linear),
            "gaussian" => Ok(RiskKind::Gaussian),
            other => Err(Error::InvalidArgument(format!("unknown risk '{other}' (expected linear|gaussian)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n: usize,
    pub d: usize,
    pub risk: RiskKind,
    pub r_max: f64,
    pub risk_sigma: f64,
    pub baseline_scale: f64,
    pub censoring_fraction: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 6000,
            d: 10,
            risk: RiskKind::Linear,
            r_max: 5.0,
            risk_sigma: 0.5,
            baseline_scale: 0.2,
            censoring_fraction: 0.5,
            seed: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.n == 0 {
            return bad("n must be positive");
        }
        if self.d < 2 {
            return bad("d must be at least 2");
        }
        if !(self.r_max > 0.0 && self.risk_sigma > 0.0 && self.baseline_scale > 0.0) {
            return bad("r_max, risk_sigma and baseline_scale must be positive");
        }
        if !(0.0..1.0).contains(&self.censoring_fraction) {
            return bad("censoring_fraction must lie in [0, 1)");
        }
        Ok(())
    }

    /// Log-hazard ratio `h(x)` for this configuration.
    pub fn risk(&self, x: &[f64]) -> f64 {
        match self.risk {
            RiskKind::Linear => risk_linear(x),
            RiskKind::Gaussian => risk_gaussian(x, self.r_max, self.risk_sigma),
        }
    }
}

pub fn risk_linear(x: &[f64]) -> f64 {
    x[0] + 2.0 * x[1]
}

pub fn risk_gaussian(x: &[f64], r_max: f64, sigma: f64) -> f64 {
    r_max.ln() * (-(x[0] * x[0] + x[1] * x[1]) / (2.0 * sigma * sigma)).exp()
}

/// Inverse-CDF draw of an exponential event time with rate `scale * exp(h)`.
pub fn draw_event_time<R: Rng>(rng: &mut R, scale: f64, h: f64) -> f64 {
    // 1 - U lies in (0, 1]; map it to (0, 1) by rejecting the endpoint
    let u = loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            break u;
        }
    };
    -u.ln() / (scale * h.exp())
}

/// Covariates uniform on `[-1, 1)^d`, exponential Cox event times, and
/// end-of-study censoring at the `(1 - censoring_fraction)` quantile of the
/// uncensored times.
pub fn simulate(cfg: &SimConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut xs = Vec::with_capacity(cfg.n);
    let mut t_star = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let x: Vec<f64> = (0..cfg.d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        t_star.push(draw_event_time(&mut rng, cfg.baseline_scale, cfg.risk(&x)));
        xs.push(x);
    }
    let mut sorted = t_star.clone();
    sorted.sort_by(f64::total_cmp);
    let cutoff = quantile_sorted(&sorted, 1.0 - cfg.censoring_fraction);
    let records: Vec<SurvivalRecord> = xs
        .into_iter()
        .zip(&t_star)
        .map(|(x, &t)| {
            if t > cutoff {
                SurvivalRecord::new(x, cutoff, false)
            } else {
                SurvivalRecord::new(x, t, true)
            }
        })
        .collect();
    if !records.iter().any(|r| r.event) {
        return Err(Error::NoEvents);
    }
    let names = (0..cfg.d).map(|j| format!("x{j}")).collect();
    Dataset::new(names, records)
}
