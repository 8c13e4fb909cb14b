//! Prior probabilities of interaction terms under Beta inclusion
//! probabilities.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorProbQuery {
    /// Interaction order.
    pub j: usize,
    pub p: usize,
    pub k: usize,
    pub m_shape: f64,
    pub gamma: f64,
}

impl PriorProbQuery {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.k == 0 || self.j == 0 || self.j > self.p {
            return Err(Error::Config(format!(
                "need 1 <= j <= p and k >= 1, got j = {}, p = {}, k = {}",
                self.j, self.p, self.k
            )));
        }
        if !(self.m_shape > 0.0
            && self.gamma > 0.0
            && self.m_shape.is_finite()
            && self.gamma.is_finite())
        {
            return Err(Error::Config("M and gamma must be positive".into()));
        }
        Ok(())
    }
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Prior probability, for one function, that its active set is exactly a
/// given set of `j` exposures: `B(j + M, p + gamma - j) / B(M, gamma)`.
pub fn prob_exact_set_in_function(j: usize, p: usize, m_shape: f64, gamma: f64) -> f64 {
    let (j, p) = (j as f64, p as f64);
    (ln_beta(j + m_shape, p + gamma - j) - ln_beta(m_shape, gamma)).exp()
}

/// Prior probability that no function has exactly a given set of `j`
/// exposures as its active set (ignoring the non-subset constraint).
pub fn prob_exact_set_absent(q: &PriorProbQuery) -> Result<f64> {
    q.validate()?;
    let base = prob_exact_set_in_function(q.j, q.p, q.m_shape, q.gamma);
    Ok((q.k as f64 * (-base).ln_1p()).exp())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotoneCheck {
    pub monotone: bool,
    /// `(j, probability)` for `j = 1..=p`, with `k = 1`.
    pub sequence: Vec<(usize, f64)>,
}

/// Whether the absence probability is nondecreasing in the interaction order.
pub fn shrinkage_is_monotone(p: usize, m_shape: f64, gamma: f64) -> Result<MonotoneCheck> {
    let sequence = (1..=p)
        .map(|j| {
            let q = PriorProbQuery {
                j,
                p,
                k: 1,
                m_shape,
                gamma,
            };
            prob_exact_set_absent(&q).map(|v| (j, v))
        })
        .collect::<Result<Vec<_>>>()?;
    // Compare in log space on the inclusion side to avoid rounding ties near 1.
    let logs: Vec<f64> = (1..=p)
        .map(|j| ln_beta(j as f64 + m_shape, (p - j) as f64 + gamma))
        .collect();
    let monotone = logs
        .windows(2)
        .all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
    Ok(MonotoneCheck { monotone, sequence })
}
