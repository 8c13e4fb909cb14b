//! End-to-end fit: basis, slab variance, chains, WAIC.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::SplineSpec;
use crate::data::PreparedData;
use crate::diagnostics::{waic_for_chains, Waic};
use crate::error::{Error, Result};
use crate::hyper::{
    estimate_sigma_beta_eb, final_sigma_beta, permutation_lower_bound, EbConfig, EbResult,
    LowerBoundConfig, LowerBoundResult,
};
use crate::sampler::{run_chains_resumable, ResumePoint, SamplerConfig};
use crate::types::{ChainSamples, PriorConfig};

/// How the slab variance of the final run is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum SlabVariance {
    /// Maximum of the empirical Bayes estimate and the permutation bound.
    Auto,
    /// Empirical Bayes estimate alone.
    EmpiricalBayes,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub df: usize,
    /// Prior hyperparameters; `sigma_beta2` is replaced according to `slab`.
    pub prior: PriorConfig,
    pub sampler: SamplerConfig,
    pub eb: EbConfig,
    pub lower_bound: LowerBoundConfig,
    pub slab: SlabVariance,
}

impl FitConfig {
    pub fn defaults_for(p: usize, df: usize) -> Self {
        FitConfig {
            df,
            prior: PriorConfig::defaults_for(p),
            sampler: SamplerConfig::default(),
            eb: EbConfig::default(),
            lower_bound: LowerBoundConfig::default(),
            slab: SlabVariance::Auto,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub df: usize,
    pub spec: SplineSpec,
    /// Prior used by the final chains.
    pub prior: PriorConfig,
    pub eb: Option<EbResult>,
    pub lower_bound: Option<LowerBoundResult>,
    pub chains: Vec<ChainSamples>,
    /// Final state of each chain, for extending the run.
    pub resume: Vec<ResumePoint>,
    pub waic: Waic,
}

impl FitResult {
    /// Invariant violations over the final chains and the tuning runs.
    pub fn violations(&self) -> u64 {
        self.chains.iter().map(|c| c.violations).sum::<u64>()
            + self.eb.as_ref().map_or(0, |e| e.violations)
            + self.lower_bound.as_ref().map_or(0, |l| l.violations)
    }
}

// Distinct seeds for the tuning runs so they never share a stream with the
// final chains.
const EB_SEED_OFFSET: u64 = 0x5eed_0000_0000_00eb;
const LB_SEED_OFFSET: u64 = 0x5eed_0000_0000_001b;

pub fn fit(data: &PreparedData, cfg: &FitConfig) -> Result<FitResult> {
    let spec = SplineSpec::fit(&data.x_raw, cfg.df)?;
    let mut prior = cfg.prior.clone();
    prior.validate()?;
    cfg.sampler.validate()?;
    let seed = cfg.sampler.rng_seed;

    let (eb, lower_bound) = match cfg.slab {
        SlabVariance::Fixed(v) => {
            prior.sigma_beta2 = v;
            (None, None)
        }
        SlabVariance::EmpiricalBayes | SlabVariance::Auto => {
            let eb_cfg = SamplerConfig {
                rng_seed: seed.wrapping_add(EB_SEED_OFFSET),
                ..cfg.sampler.clone()
            };
            let eb = estimate_sigma_beta_eb(data, &spec, &prior, &eb_cfg, &cfg.eb)?;
            let lb = if cfg.slab == SlabVariance::Auto {
                let lb_cfg = SamplerConfig {
                    rng_seed: seed.wrapping_add(LB_SEED_OFFSET),
                    ..cfg.sampler.clone()
                };
                let mut rng = ChaCha8Rng::seed_from_u64(lb_cfg.rng_seed);
                Some(permutation_lower_bound(
                    data,
                    &spec,
                    &prior,
                    &lb_cfg,
                    &cfg.lower_bound,
                    &mut rng,
                )?)
            } else {
                None
            };
            prior.sigma_beta2 = match &lb {
                Some(l) => final_sigma_beta(eb.value, l.bound),
                None => eb.value,
            };
            (Some(eb), lb)
        }
    };
    prior.validate()?;
    let (chains, resume): (Vec<_>, Vec<_>) =
        run_chains_resumable(data, &spec, &prior, &cfg.sampler)?
            .into_iter()
            .map(|c| c.into_parts())
            .unzip();
    let waic = waic_for_chains(&chains)?;
    Ok(FitResult {
        df: cfg.df,
        spec,
        prior,
        eb,
        lower_bound,
        chains,
        resume,
        waic,
    })
}

#[derive(Clone, Debug)]
pub struct SelectDfResult {
    pub chosen: usize,
    /// `(df, WAIC)` in grid order.
    pub table: Vec<(usize, Waic)>,
    pub fits: Vec<FitResult>,
}

impl SelectDfResult {
    pub fn chosen_fit(&self) -> &FitResult {
        self.fits
            .iter()
            .find(|f| f.df == self.chosen)
            .expect("chosen df has a fit")
    }
}

/// Fits every `df` in the grid and picks the smallest WAIC, ties going to
/// the smaller `df`.
pub fn select_df(data: &PreparedData, cfg: &FitConfig, d_grid: &[usize]) -> Result<SelectDfResult> {
    if d_grid.is_empty() {
        return Err(Error::Config("degrees-of-freedom grid is empty".into()));
    }
    let fits = d_grid
        .par_iter()
        .map(|&df| {
            let c = FitConfig { df, ..cfg.clone() };
            fit(data, &c).map_err(|e| Error::AtDegreesOfFreedom {
                df,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let table: Vec<(usize, Waic)> = fits.iter().map(|f| (f.df, f.waic)).collect();
    let chosen = table
        .iter()
        .min_by(|a, b| a.1.waic.total_cmp(&b.1.waic).then(a.0.cmp(&b.0)))
        .map(|(d, _)| *d)
        .expect("nonempty grid");
    Ok(SelectDfResult {
        chosen,
        table,
        fits,
    })
}
