//! Slab variance: Monte Carlo EM and the permutation lower bound.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basis::SplineSpec;
use crate::data::PreparedData;
use crate::error::{Error, Result};
use crate::sampler::{Chain, SamplerConfig};
use crate::summaries::inclusion_probabilities;
use crate::types::{ModelState, PriorConfig};

/// Running sums for one EM step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EmStats {
    /// Sum over draws of `sum(beta^2) / sigma2`.
    pub scaled_ssq: f64,
    /// Sum over draws of the number of nonzero coefficients.
    pub nonzero: f64,
    pub draws: usize,
}

impl EmStats {
    pub fn add(&mut self, state: &ModelState) {
        let ssq: f64 = state.beta.iter().flatten().map(|b| b * b).sum();
        self.scaled_ssq += ssq / state.sigma2;
        self.nonzero += state.active_coefficient_count() as f64;
        self.draws += 1;
    }

    /// `E[sum beta^2 / sigma2] / E[|beta|_0]`, or `None` if no coefficient
    /// was ever active.
    pub fn estimate(&self) -> Option<f64> {
        (self.nonzero > 0.0).then(|| self.scaled_ssq / self.nonzero)
    }
}

/// One EM update from a batch of draws; returns `current` when every draw is
/// the null model.
pub fn em_update_sigma_beta(draws: &[ModelState], current: f64) -> f64 {
    let mut stats = EmStats::default();
    draws.iter().for_each(|d| stats.add(d));
    stats.estimate().unwrap_or(current)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EbConfig {
    /// Iterations between EM updates.
    pub block_iters: usize,
    pub tolerance: f64,
    pub max_steps: usize,
    /// Starting value; the crude ridge estimate when absent.
    pub initial: Option<f64>,
}

impl Default for EbConfig {
    fn default() -> Self {
        EbConfig {
            block_iters: 200,
            tolerance: 1e-2,
            max_steps: 50,
            initial: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EbResult {
    pub value: f64,
    pub converged: bool,
    /// Value after each EM step, starting with the initial value.
    pub trace: Vec<f64>,
    pub violations: u64,
}

/// Crude slab-scale estimate: mean squared ridge coefficient of all main
/// effect basis columns on the covariate-adjusted outcome, divided by the
/// ridge residual variance.
pub fn crude_sigma_beta(data: &PreparedData, spec: &SplineSpec) -> Result<f64> {
    let n = data.n();
    let c = &data.c_design;
    let ctc = c.tr_mul(c) + DMatrix::identity(c.ncols(), c.ncols()) * 1e-8;
    let gamma = ctc
        .cholesky()
        .ok_or_else(|| Error::Numerical("covariate cross-product is singular".into()))?
        .solve(&c.tr_mul(&data.y));
    let r = &data.y - c * gamma;
    let blocks = spec.marginal_designs(&data.x_raw);
    let q: usize = blocks.iter().map(DMatrix::ncols).sum();
    let mut z = DMatrix::zeros(n, q);
    let mut off = 0;
    for b in &blocks {
        z.view_mut((0, off), (n, b.ncols())).copy_from(b);
        off += b.ncols();
    }
    let beta = (z.tr_mul(&z) + DMatrix::identity(q, q))
        .cholesky()
        .ok_or_else(|| Error::Numerical("ridge system is singular".into()))?
        .solve(&z.tr_mul(&r));
    let resid: DVector<f64> = &r - &z * &beta;
    let s2 = (resid.dot(&resid) / n as f64).max(1e-8);
    Ok((beta.dot(&beta) / q as f64 / s2).max(1e-8))
}

fn scan_config(base: &SamplerConfig, n_iter: usize) -> SamplerConfig {
    SamplerConfig {
        n_iter: n_iter.max(2),
        burn_in: 0,
        thin: 1,
        n_chains: 1,
        ..base.clone()
    }
}

/// Monte Carlo EM: a single chain updates the slab variance every
/// `block_iters` iterations after an initial block used as burn-in.
pub fn estimate_sigma_beta_eb(
    data: &PreparedData,
    spec: &SplineSpec,
    prior: &PriorConfig,
    config: &SamplerConfig,
    eb: &EbConfig,
) -> Result<EbResult> {
    if eb.block_iters == 0 || eb.max_steps == 0 || eb.tolerance.is_nan() || eb.tolerance <= 0.0 {
        return Err(Error::Config(
            "EB needs positive block length, steps and tolerance".into(),
        ));
    }
    let mut value = match eb.initial {
        Some(v) => v,
        None => crude_sigma_beta(data, spec)?,
    };
    let mut prior = prior.clone();
    prior.sigma_beta2 = value;
    let cfg = scan_config(config, eb.block_iters * (eb.max_steps + 1));
    let mut chain = Chain::new(data, spec, &prior, &cfg, 0)?;
    let mut trace = vec![value];
    let mut converged = false;
    chain.run_to(eb.block_iters)?;
    for _ in 0..eb.max_steps {
        let mut stats = EmStats::default();
        let start = chain.iteration();
        for _ in 0..eb.block_iters {
            chain.step().map_err(|e| Error::AtIteration {
                iteration: chain.iteration() + 1,
                source: Box::new(e),
            })?;
            stats.add(chain.state());
        }
        debug_assert_eq!(chain.iteration(), start + eb.block_iters);
        let Some(next) = stats.estimate() else {
            trace.push(value);
            continue;
        };
        let next = next.max(1e-12);
        let rel = (next - value).abs() / value;
        value = next;
        trace.push(value);
        chain.set_sigma_beta2(value);
        if rel < eb.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!("empirical Bayes slab variance did not converge; using the last value {value}");
    }
    Ok(EbResult {
        value,
        converged,
        trace,
        violations: chain.samples().violations,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "threshold")]
pub enum LowerBoundCriterion {
    /// Largest main-effect inclusion probability below the threshold.
    MainPipBelow(f64),
    /// Largest two-way inclusion probability below the threshold.
    TwowayPipBelow(f64),
}

impl LowerBoundCriterion {
    pub fn threshold(self) -> f64 {
        match self {
            LowerBoundCriterion::MainPipBelow(t) | LowerBoundCriterion::TwowayPipBelow(t) => t,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundConfig {
    /// Strictly decreasing candidate values; a default grid when empty.
    pub grid: Vec<f64>,
    pub short_iters: usize,
    pub tau_fixed: f64,
    pub criterion: LowerBoundCriterion,
    pub n_permutations: usize,
    /// Fraction of each short run discarded before computing the statistic.
    pub burn_fraction: f64,
    /// Evaluate every grid value instead of stopping at the first failure.
    pub full_curve: bool,
}

impl Default for LowerBoundConfig {
    fn default() -> Self {
        LowerBoundConfig {
            grid: Vec::new(),
            short_iters: 500,
            tau_fixed: 0.5,
            criterion: LowerBoundCriterion::MainPipBelow(0.25),
            n_permutations: 1,
            burn_fraction: 0.2,
            full_curve: false,
        }
    }
}

impl LowerBoundConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config(
                "lower-bound grid values must be positive".into(),
            ));
        }
        if self.grid.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config(
                "lower-bound grid must be strictly decreasing".into(),
            ));
        }
        let t = self.criterion.threshold();
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::Config(format!(
                "criterion threshold {t} outside (0,1)"
            )));
        }
        if !(self.tau_fixed > 0.0 && self.tau_fixed < 1.0) {
            return Err(Error::Config("tau_fixed must lie in (0,1)".into()));
        }
        if self.short_iters < 2 || self.n_permutations == 0 {
            return Err(Error::Config(
                "short_iters >= 2 and n_permutations >= 1 required".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.burn_fraction) {
            return Err(Error::Config("burn_fraction must lie in [0,1)".into()));
        }
        Ok(())
    }
}

/// Twenty values halving from ten times the larger of the crude estimate
/// and one.
pub fn default_grid(data: &PreparedData, spec: &SplineSpec) -> Result<Vec<f64>> {
    let head = 10.0 * crude_sigma_beta(data, spec)?.max(1.0);
    Ok((0..20).map(|i| head / 2f64.powi(i)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundResult {
    pub bound: f64,
    /// `(sigma_beta2, statistic)` for every evaluated grid value.
    pub curve: Vec<(f64, f64)>,
    /// False when even the largest grid value failed the criterion.
    pub met: bool,
    pub violations: u64,
}

/// Criterion statistic on one permuted dataset at one slab variance.
fn null_statistic(
    data: &PreparedData,
    spec: &SplineSpec,
    prior: &PriorConfig,
    cfg: &SamplerConfig,
    criterion: LowerBoundCriterion,
) -> Result<(f64, u64)> {
    let mut chain = Chain::new(data, spec, prior, cfg, 0)?;
    chain.run_to(cfg.n_iter)?;
    let samples = chain.finish();
    let draws: Vec<&ModelState> = samples.draws.iter().collect();
    let inc = inclusion_probabilities(&draws, &[])?;
    let stat = match criterion {
        LowerBoundCriterion::MainPipBelow(_) => inc.main_pip.iter().copied().fold(0.0, f64::max),
        LowerBoundCriterion::TwowayPipBelow(_) => {
            let p = inc.main_pip.len();
            let mut m: f64 = 0.0;
            for i in 0..p {
                for j in i + 1..p {
                    m = m.max(inc.pair_pip[i][j]);
                }
            }
            m
        }
    };
    Ok((stat, samples.violations))
}

/// Smallest grid value at which short runs on outcome-permuted data keep the
/// criterion statistic below its threshold. Grid values are scanned in
/// decreasing order.
pub fn permutation_lower_bound<R: Rng + ?Sized>(
    data: &PreparedData,
    spec: &SplineSpec,
    prior: &PriorConfig,
    config: &SamplerConfig,
    lb: &LowerBoundConfig,
    rng: &mut R,
) -> Result<LowerBoundResult> {
    lb.validate()?;
    let grid = if lb.grid.is_empty() {
        default_grid(data, spec)?
    } else {
        lb.grid.clone()
    };
    let permuted: Vec<PreparedData> = (0..lb.n_permutations)
        .map(|_| {
            let mut idx: Vec<usize> = (0..data.n()).collect();
            idx.shuffle(rng);
            data.with_outcome(DVector::from_iterator(
                data.n(),
                idx.iter().map(|&i| data.y[i]),
            ))
        })
        .collect();
    let burn = ((lb.short_iters as f64) * lb.burn_fraction).floor() as usize;
    let cfg = SamplerConfig {
        n_iter: lb.short_iters,
        burn_in: burn.min(lb.short_iters - 1),
        thin: 1,
        n_chains: 1,
        fixed_tau: Some(lb.tau_fixed),
        ..config.clone()
    };
    let threshold = lb.criterion.threshold();
    let mut curve = Vec::new();
    let mut violations = 0;
    for &v in &grid {
        let mut prior = prior.clone();
        prior.sigma_beta2 = v;
        let mut total = 0.0;
        for d in &permuted {
            let (s, viol) = null_statistic(d, spec, &prior, &cfg, lb.criterion)?;
            total += s;
            violations += viol;
        }
        let stat = total / permuted.len() as f64;
        curve.push((v, stat));
        if stat >= threshold && !lb.full_curve {
            break;
        }
    }
    // Smallest value of the leading run of grid values meeting the criterion.
    let bound = curve
        .iter()
        .take_while(|(_, s)| *s < threshold)
        .last()
        .map(|(v, _)| *v);
    let met = bound.is_some();
    let bound = match bound {
        Some(b) => b,
        None => {
            warn!("permutation criterion fails at every grid value; using the largest value");
            grid[0]
        }
    };
    Ok(LowerBoundResult {
        bound,
        curve,
        met,
        violations,
    })
}

pub fn final_sigma_beta(eb: f64, lb: f64) -> f64 {
    eb.max(lb)
}
