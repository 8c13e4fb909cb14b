//! WAIC and potential scale reduction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::ChainSamples;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waic {
    pub waic: f64,
    /// Log pointwise predictive density.
    pub lppd: f64,
    /// Effective number of parameters (sum of pointwise sample variances).
    pub p_waic: f64,
}

/// WAIC from an `S × n` matrix of pointwise log densities.
pub fn compute_waic(loglik: &[Vec<f64>]) -> Result<Waic> {
    let s = loglik.len();
    if s < 2 {
        return Err(Error::Config(format!(
            "WAIC needs at least two draws, got {s}"
        )));
    }
    let n = loglik[0].len();
    if loglik.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension("ragged log-likelihood matrix".into()));
    }
    let mut lppd = 0.0;
    let mut p_waic = 0.0;
    let mut col = vec![0.0; s];
    for i in 0..n {
        for (c, row) in col.iter_mut().zip(loglik) {
            *c = row[i];
        }
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite log density for observation {i}"
            )));
        }
        let sum_exp: f64 = col.iter().map(|v| (v - max).exp()).sum();
        lppd += max + (sum_exp / s as f64).ln();
        // Shifted by the first draw so that agreeing draws give exactly zero.
        let (sum, ssq) = col.iter().fold((0.0, 0.0), |(a, b), v| {
            let d = v - col[0];
            (a + d, b + d * d)
        });
        p_waic += ((ssq - sum * sum / s as f64) / (s - 1) as f64).max(0.0);
    }
    Ok(Waic {
        waic: -2.0 * (lppd - p_waic),
        lppd,
        p_waic,
    })
}

/// WAIC over the pooled draws of several chains.
pub fn waic_for_chains(chains: &[ChainSamples]) -> Result<Waic> {
    let rows: Vec<Vec<f64>> = chains
        .iter()
        .flat_map(|c| c.loglik.iter().cloned())
        .collect();
    compute_waic(&rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Psr {
    pub value: f64,
    /// Set when the within-chain variance is zero; `value` is then 1.
    pub degenerate: bool,
}

/// Potential scale reduction `sqrt((W + B/n) / W)` of one scalar, where `W`
/// is the mean within-chain sample variance and `B/n` the sample variance of
/// the chain means.
pub fn psr(chains: &[&[f64]]) -> Result<Psr> {
    let m = chains.len();
    if m < 2 {
        return Err(Error::Config("PSR needs at least two chains".into()));
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::Dimension("PSR chains differ in length".into()));
    }
    if n < 10 {
        return Err(Error::Config(format!(
            "PSR needs chains of length >= 10, got {n}"
        )));
    }
    let means: Vec<f64> = chains
        .iter()
        .map(|c| c.iter().sum::<f64>() / n as f64)
        .collect();
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1) as f64)
        .sum::<f64>()
        / m as f64;
    let grand = means.iter().sum::<f64>() / m as f64;
    let b_over_n = means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>() / (m - 1) as f64;
    if w <= 0.0 || !w.is_finite() {
        return Ok(Psr {
            value: 1.0,
            degenerate: true,
        });
    }
    Ok(Psr {
        value: ((w + b_over_n) / w).sqrt(),
        degenerate: false,
    })
}
