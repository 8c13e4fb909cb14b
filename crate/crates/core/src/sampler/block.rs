//! Conjugate Gaussian block for the coefficients of a group of functions.

use std::sync::Arc;

use nalgebra::{Cholesky, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::sampler::design::{DesignCache, Layout, XtMemo};
use crate::types::{ExposureSet, ZetaMatrix};

/// Posterior of stacked coefficients with slab `N(0, sigma2 * sigma_beta2 * I)`.
///
/// The precision is `A / sigma2` with `A = X^T X + I / sigma_beta2`, so the
/// factor of `A` is shared by every evaluation of the same block.
pub struct BlockPosterior {
    pub layout: Layout,
    pub sets: Vec<ExposureSet>,
    /// `log N(0; 0, prior) - log N(0; mean, posterior)`, the log marginal
    /// likelihood ratio against the empty block.
    pub log_ratio: f64,
    factor: Option<Arc<BlockFactor>>,
    sigma: f64,
    mean: DVector<f64>,
}

/// Cholesky factor of `X^T X + I / sigma_beta2` for one stacked block.
pub struct BlockFactor {
    pub chol: Cholesky<f64, Dyn>,
    pub log_det: f64,
}

impl BlockFactor {
    pub fn new(
        cache: &mut DesignCache,
        layout: &Layout,
        sets: &[ExposureSet],
        sigma_beta2: f64,
    ) -> Result<Self> {
        let mut a = cache.gram(layout);
        let ridge = 1.0 / sigma_beta2;
        for i in 0..layout.width {
            a[(i, i)] += ridge;
        }
        let subset = sets.iter().fold(ExposureSet::EMPTY, |a, s| a.union(*s));
        let chol = a.cholesky().ok_or(Error::NotPositiveDefinite { subset })?;
        let log_det = 2.0
            * chol
                .l_dirty()
                .diagonal()
                .iter()
                .map(|v| v.ln())
                .sum::<f64>();
        Ok(BlockFactor { chol, log_det })
    }
}

impl BlockPosterior {
    /// `sets` are the active sets in the block, `y_star` the partial residual
    /// with these functions removed.
    pub fn evaluate(
        cache: &mut DesignCache,
        sets: &[ExposureSet],
        y_star: &DVector<f64>,
        sigma2: f64,
        sigma_beta2: f64,
    ) -> Result<Self> {
        Self::evaluate_memo(cache, sets, y_star, sigma2, sigma_beta2, &mut XtMemo::new())
    }

    /// As [`BlockPosterior::evaluate`], reusing `X_t^T y_star` products from
    /// `memo`, which must only hold products with this `y_star`.
    pub fn evaluate_memo(
        cache: &mut DesignCache,
        sets: &[ExposureSet],
        y_star: &DVector<f64>,
        sigma2: f64,
        sigma_beta2: f64,
        memo: &mut XtMemo,
    ) -> Result<Self> {
        let layout = Layout::new(sets, cache.df());
        let q = layout.width;
        if q == 0 {
            return Ok(BlockPosterior {
                layout,
                sets: sets.to_vec(),
                log_ratio: 0.0,
                factor: None,
                sigma: sigma2.sqrt(),
                mean: DVector::zeros(0),
            });
        }
        let factor = cache.factor(&layout, sets, sigma_beta2)?;
        let c = cache.xt_vec_memo(&layout, y_star, memo);
        let mean = factor.chol.solve(&c);
        let log_ratio =
            -0.5 * q as f64 * sigma_beta2.ln() - 0.5 * factor.log_det + 0.5 * c.dot(&mean) / sigma2;
        if !log_ratio.is_finite() {
            let subset = sets.iter().fold(ExposureSet::EMPTY, |a, s| a.union(*s));
            return Err(Error::Numerical(format!(
                "non-finite block evidence for {subset}"
            )));
        }
        Ok(BlockPosterior {
            layout,
            sets: sets.to_vec(),
            log_ratio,
            factor: Some(factor),
            sigma: sigma2.sqrt(),
            mean,
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// One draw of the stacked coefficients.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let Some(f) = &self.factor else {
            return DVector::zeros(0);
        };
        let q = self.mean.len();
        let z = DVector::from_fn(q, |_, _| rng.sample::<f64, _>(StandardNormal));
        // Solve L^T x = z so that x has covariance A^{-1}; scale by sigma.
        let x = f
            .chol
            .l_dirty()
            .tr_solve_lower_triangular(&z)
            .expect("Cholesky factor has a positive diagonal");
        &self.mean + x * self.sigma
    }

    /// Splits a stacked draw into one coefficient vector per set.
    pub fn split(&self, stacked: &DVector<f64>) -> Vec<Vec<f64>> {
        self.layout
            .spans
            .iter()
            .map(|&(a, b)| stacked.as_slice()[a..b].to_vec())
            .collect()
    }
}

fn clamp_tau(t: f64) -> f64 {
    t.clamp(1e-300, 1.0 - 1e-16)
}

/// `ln(t / (1 - t))`, the prior log odds of one inclusion.
pub fn log_odds(t: f64) -> f64 {
    let t = clamp_tau(t);
    t.ln() - (1.0 - t).ln()
}

/// Log prior of the inclusion matrix given inclusion probabilities, counting
/// every entry of the matrix.
pub fn zeta_log_prior(zeta: &ZetaMatrix, tau: &[f64]) -> f64 {
    let p = zeta.p() as f64;
    zeta.active_sets()
        .iter()
        .zip(tau)
        .map(|(s, &t)| {
            let t = clamp_tau(t);
            let a = s.len() as f64;
            a * t.ln() + (p - a) * (1.0 - t).ln()
        })
        .sum()
}

pub fn block_key(zeta: &ZetaMatrix, functions: &[usize]) -> Vec<ExposureSet> {
    let mut sets: Vec<ExposureSet> = functions
        .iter()
        .map(|&h| zeta.active_set(h))
        .filter(|s| !s.is_empty())
        .collect();
    sets.sort_by_key(|s| s.bits());
    sets
}

/// Collapsed log posterior (up to a constant shared by the family) of a
/// candidate inclusion matrix: block evidence plus inclusion prior.
pub fn zeta_block_log_prob(
    cache: &mut DesignCache,
    candidate: &ZetaMatrix,
    block_functions: &[usize],
    y_star: &DVector<f64>,
    sigma2: f64,
    sigma_beta2: f64,
    tau: &[f64],
) -> Result<f64> {
    let key = block_key(candidate, block_functions);
    let post = BlockPosterior::evaluate(cache, &key, y_star, sigma2, sigma_beta2)?;
    Ok(post.log_ratio + zeta_log_prior(candidate, tau))
}
