//! Linear Cox proportional hazards fitted by full-batch gradient descent.

use serde::{Deserialize, Serialize};

use crate::losses::cox_nll;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearCox {
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearCoxOptions {
    pub lr: f64,
    pub momentum: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LinearCoxOptions {
    fn default() -> Self {
        Self { lr: 0.5, momentum: 0.9, max_iter: 2000, tol: 1e-10 }
    }
}

impl LinearCox {
    pub fn fit(x: &[&[f64]], times: &[f64], events: &[bool], opts: LinearCoxOptions) -> Result<Self> {
        let d = x.first().map(|r| r.len()).ok_or(Error::EmptyDataset)?;
        let mut beta = vec![0.0; d];
        let mut velocity = vec![0.0; d];
        let mut prev = f64::INFINITY;
        for _ in 0..opts.max_iter {
            let model = LinearCox { coefficients: beta.clone() };
            let eta = model.predict(x)?;
            let loss = cox_nll(&eta, times, events)?;
            if !loss.total.is_finite() {
                return Err(Error::NonFinite("linear Cox loss".into()));
            }
            let mut g = vec![0.0; d];
            for (row, dl) in x.iter().zip(&loss.grad) {
                for (gj, xj) in g.iter_mut().zip(row.iter()) {
                    *gj += dl[0] * xj;
                }
            }
            for ((b, v), gj) in beta.iter_mut().zip(velocity.iter_mut()).zip(&g) {
                *v = opts.momentum * *v + gj;
                *b -= opts.lr * *v;
            }
            if (prev - loss.total).abs() < opts.tol {
                break;
            }
            prev = loss.total;
        }
        Ok(LinearCox { coefficients: beta })
    }

    pub fn predict(&self, x: &[&[f64]]) -> Result<Vec<f64>> {
        x.iter()
            .map(|row| {
                if row.len() != self.coefficients.len() {
                    return Err(Error::DimensionMismatch { expected: self.coefficients.len(), got: row.len() });
                }
                Ok(row.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum())
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{simulate, SimConfig};

    #[test]
    fn recovers_linear_coefficients() {
        let ds = simulate(&SimConfig { n: 3000, censoring_fraction: 0.0, ..Default::default() }).unwrap();
        let x = ds.covariates();
        let fit = LinearCox::fit(&x, &ds.times(), &ds.events(), LinearCoxOptions::default()).unwrap();
        assert!((fit.coefficients[0] - 1.0).abs() < 0.15, "{:?}", fit.coefficients);
        assert!((fit.coefficients[1] - 2.0).abs() < 0.15, "{:?}", fit.coefficients);
        assert!(fit.coefficients[2..].iter().all(|c| c.abs() < 0.15));
    }
}
