//! Command settings: flags overlaid on an optional TOML config file.
//!
//! Every settings struct doubles as the config-file schema. Keys are the
//! field names below; a key set on the command line wins over the file.

use std::path::{Path, PathBuf};

use clap::Args;
use mixsel_core::data::PreparedData;
use mixsel_core::hyper::{EbConfig, LowerBoundConfig, LowerBoundCriterion};
use mixsel_core::sampler::{SamplerConfig, ZetaUpdateMode};
use mixsel_core::{FitConfig, PriorConfig, SlabVariance};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Reads `config` (if any) and overlays the keys set in `flags`.
pub fn resolve<T: Serialize + DeserializeOwned>(flags: &T, config: Option<&Path>) -> CliResult<T> {
    let cfg_err = |path: &Path, message: String| CliError::Config {
        path: path.to_path_buf(),
        message,
    };
    let mut table = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| cfg_err(path, e.to_string()))?;
            if path.extension().is_some_and(|e| e == "json") {
                manifest_settings(&text).map_err(|e| cfg_err(path, e))?
            } else {
                text.parse::<toml::Table>()
                    .map_err(|e| cfg_err(path, e.to_string()))?
            }
        }
        None => toml::Table::new(),
    };
    let overrides = toml::Table::try_from(flags).map_err(|e| CliError::Serialize(e.to_string()))?;
    table.extend(overrides);
    let origin = config.unwrap_or(Path::new("<flags>"));
    table
        .try_into()
        .map_err(|e: toml::de::Error| cfg_err(origin, e.message().to_string()))
}

/// The `settings` object of a run manifest, so a manifest can serve as a
/// config file.
fn manifest_settings(text: &str) -> Result<toml::Table, String> {
    let manifest: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let serde_json::Value::Object(settings) = &manifest["settings"] else {
        return Err("manifest has no `settings` object".into());
    };
    let present: serde_json::Map<String, serde_json::Value> = settings
        .iter()
        .filter(|(_, v)| !v.is_null())
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    toml::Table::deserialize(serde_json::Value::Object(present)).map_err(|e| e.to_string())
}

/// Resolved settings as a config file that reproduces the run.
pub fn to_toml<T: Serialize>(settings: &T) -> CliResult<String> {
    toml::to_string_pretty(settings).map_err(|e| CliError::Serialize(e.to_string()))
}

/// Data, model, sampler and tuning settings shared by `fit`, `select-df`
/// and `lower-bound`.
#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSettings {
    /// Delimited input file with a header row.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Field delimiter of the input file (default `,`).
    #[arg(long)]
    pub delimiter: Option<char>,
    /// Outcome column.
    #[arg(long)]
    pub outcome: Option<String>,
    /// Exposure columns, comma separated; default: every column that is
    /// neither the outcome nor a covariate.
    #[arg(long, value_delimiter = ',')]
    pub exposures: Option<Vec<String>>,
    /// Covariate columns, comma separated; default: none.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,

    /// Spline degrees of freedom per exposure (default 2).
    #[arg(long)]
    pub df: Option<usize>,
    /// Candidate degrees of freedom for `select-df` (default 1,2,3,4,5).
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<usize>>,

    /// Iterations per chain (default 10000).
    #[arg(long)]
    pub iters: Option<usize>,
    /// Discarded iterations per chain (default 2000).
    #[arg(long)]
    pub burnin: Option<usize>,
    /// Keep every `thin`-th iteration after burn-in (default 8).
    #[arg(long)]
    pub thin: Option<usize>,
    /// Number of chains (default 2).
    #[arg(long)]
    pub chains: Option<usize>,
    /// Base RNG seed (default 1).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Inclusion update: `mh` or `gibbs_scan` (default mh).
    #[arg(long)]
    pub mode: Option<ZetaUpdateMode>,
    /// Largest interaction order proposed by decomposition moves (default 4).
    #[arg(long)]
    pub subset_cap: Option<usize>,
    /// Family size above which Gibbs-scan falls back to MH (default 256).
    #[arg(long)]
    pub candidate_budget: Option<usize>,

    /// Number of functions (default min(p, 20)).
    #[arg(long)]
    pub k: Option<usize>,
    /// First Beta shape of the inclusion probabilities (default 3).
    #[arg(long = "M", id = "m_shape")]
    pub m_shape: Option<f64>,
    /// Second Beta shape (default p).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Inverse-gamma shape of the residual variance (default 0.001).
    #[arg(long)]
    pub a0: Option<f64>,
    /// Inverse-gamma rate of the residual variance (default 0.001).
    #[arg(long)]
    pub b0: Option<f64>,
    /// Prior variance of the covariate coefficients (default 1e6).
    #[arg(long)]
    pub beta_c_variance: Option<f64>,
    /// Slab variance: `auto` (max of empirical Bayes and the permutation
    /// bound), `eb`, or a positive number (default auto).
    #[arg(long)]
    pub slab: Option<String>,

    /// Iterations between empirical Bayes updates (default 200).
    #[arg(long)]
    pub eb_block_iters: Option<usize>,
    /// Relative convergence tolerance of empirical Bayes (default 0.01).
    #[arg(long)]
    pub eb_tolerance: Option<f64>,
    /// Maximum empirical Bayes updates (default 50).
    #[arg(long)]
    pub eb_max_steps: Option<usize>,

    /// Decreasing slab-variance grid for the permutation bound; default
    /// derived from the data.
    #[arg(long, value_delimiter = ',')]
    pub lb_grid: Option<Vec<f64>>,
    /// Iterations per short permutation run (default 500).
    #[arg(long)]
    pub lb_iters: Option<usize>,
    /// Bound statistic: `main` or `twoway` (default main).
    #[arg(long)]
    pub lb_criterion: Option<String>,
    /// Threshold of the bound statistic (default 0.25).
    #[arg(long)]
    pub lb_threshold: Option<f64>,
    /// Permutations averaged per grid value (default 1).
    #[arg(long)]
    pub lb_permutations: Option<usize>,
    /// Evaluate the whole grid instead of stopping at the first failure.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub lb_full_curve: Option<bool>,
}

impl ModelSettings {
    pub fn require_data(&self) -> CliResult<(&Path, &str)> {
        let data = self.data.as_deref().ok_or_else(|| {
            CliError::Usage("--data is required (flag or config key `data`)".into())
        })?;
        let outcome = self.outcome.as_deref().ok_or_else(|| {
            CliError::Usage("--outcome is required (flag or config key `outcome`)".into())
        })?;
        Ok((data, outcome))
    }

    /// Every setting made explicit, with defaults filled in for the
    /// loaded data. The slab-variance grid stays empty when derived from
    /// the data.
    pub fn resolved(&self, data: &PreparedData) -> ModelSettings {
        let prior = self.prior(data.p());
        let sampler = self.sampler();
        let eb = self.eb();
        let lb = LowerBoundConfig::default();
        ModelSettings {
            data: self.data.clone(),
            delimiter: Some(self.delimiter.unwrap_or(',')),
            outcome: self.outcome.clone(),
            exposures: Some(data.exposure_names.clone()),
            covariates: Some(data.covariate_names.clone()),
            df: Some(self.df()),
            grid: Some(self.df_grid()),
            iters: Some(sampler.n_iter),
            burnin: Some(sampler.burn_in),
            thin: Some(sampler.thin),
            chains: Some(sampler.n_chains),
            seed: Some(sampler.rng_seed),
            mode: Some(sampler.zeta_update_mode),
            subset_cap: Some(sampler.subset_cap),
            candidate_budget: Some(sampler.candidate_budget),
            k: Some(prior.k),
            m_shape: Some(prior.m_shape),
            gamma: Some(prior.gamma),
            a0: Some(prior.a0),
            b0: Some(prior.b0),
            beta_c_variance: Some(prior.beta_c_prior_variance),
            slab: Some(self.slab.clone().unwrap_or_else(|| "auto".into())),
            eb_block_iters: Some(eb.block_iters),
            eb_tolerance: Some(eb.tolerance),
            eb_max_steps: Some(eb.max_steps),
            lb_grid: self.lb_grid.clone(),
            lb_iters: Some(self.lb_iters.unwrap_or(lb.short_iters)),
            lb_criterion: Some(self.lb_criterion.clone().unwrap_or_else(|| "main".into())),
            lb_threshold: Some(self.lb_threshold.unwrap_or(lb.criterion.threshold())),
            lb_permutations: Some(self.lb_permutations.unwrap_or(lb.n_permutations)),
            lb_full_curve: Some(self.lb_full_curve.unwrap_or(lb.full_curve)),
        }
    }

    pub fn df(&self) -> usize {
        self.df.unwrap_or(2)
    }

    pub fn df_grid(&self) -> Vec<usize> {
        self.grid.clone().unwrap_or_else(|| vec![1, 2, 3, 4, 5])
    }

    pub fn slab(&self) -> CliResult<SlabVariance> {
        match self.slab.as_deref().unwrap_or("auto") {
            "auto" => Ok(SlabVariance::Auto),
            "eb" => Ok(SlabVariance::EmpiricalBayes),
            other => other
                .parse::<f64>()
                .ok()
                .filter(|v| *v > 0.0 && v.is_finite())
                .map(SlabVariance::Fixed)
                .ok_or_else(|| {
                    CliError::Usage(format!(
                        "--slab must be auto, eb or a positive number, got `{other}`"
                    ))
                }),
        }
    }

    pub fn sampler(&self) -> SamplerConfig {
        let d = SamplerConfig::default();
        SamplerConfig {
            n_iter: self.iters.unwrap_or(d.n_iter),
            burn_in: self.burnin.unwrap_or(d.burn_in),
            thin: self.thin.unwrap_or(d.thin),
            n_chains: self.chains.unwrap_or(d.n_chains),
            zeta_update_mode: self.mode.unwrap_or(d.zeta_update_mode),
            subset_cap: self.subset_cap.unwrap_or(d.subset_cap),
            rng_seed: self.seed.unwrap_or(d.rng_seed),
            candidate_budget: self.candidate_budget.unwrap_or(d.candidate_budget),
            ..d
        }
    }

    pub fn prior(&self, p: usize) -> PriorConfig {
        let d = PriorConfig::defaults_for(p);
        PriorConfig {
            m_shape: self.m_shape.unwrap_or(d.m_shape),
            gamma: self.gamma.unwrap_or(d.gamma),
            a0: self.a0.unwrap_or(d.a0),
            b0: self.b0.unwrap_or(d.b0),
            k: self.k.unwrap_or(d.k),
            beta_c_prior_variance: self.beta_c_variance.unwrap_or(d.beta_c_prior_variance),
            ..d
        }
    }

    pub fn lower_bound(&self) -> CliResult<LowerBoundConfig> {
        let d = LowerBoundConfig::default();
        let threshold = self.lb_threshold.unwrap_or(d.criterion.threshold());
        let criterion = match self.lb_criterion.as_deref().unwrap_or("main") {
            "main" => LowerBoundCriterion::MainPipBelow(threshold),
            "twoway" => LowerBoundCriterion::TwowayPipBelow(threshold),
            other => {
                return Err(CliError::Usage(format!(
                    "--lb-criterion must be main or twoway, got `{other}`"
                )))
            }
        };
        let cfg = LowerBoundConfig {
            grid: self.lb_grid.clone().unwrap_or_default(),
            short_iters: self.lb_iters.unwrap_or(d.short_iters),
            criterion,
            n_permutations: self.lb_permutations.unwrap_or(d.n_permutations),
            full_curve: self.lb_full_curve.unwrap_or(d.full_curve),
            ..d
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn eb(&self) -> EbConfig {
        let d = EbConfig::default();
        EbConfig {
            block_iters: self.eb_block_iters.unwrap_or(d.block_iters),
            tolerance: self.eb_tolerance.unwrap_or(d.tolerance),
            max_steps: self.eb_max_steps.unwrap_or(d.max_steps),
            ..d
        }
    }

    pub fn fit_config(&self, p: usize, df: usize) -> CliResult<FitConfig> {
        Ok(FitConfig {
            df,
            prior: self.prior(p),
            sampler: self.sampler(),
            eb: self.eb(),
            lower_bound: self.lower_bound()?,
            slab: self.slab()?,
        })
    }
}

#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSettings {
    /// polynomial_5_1, highdim_5_2, nonlinear_main_B3, null or
    /// corr_increase_B2.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Sample size (scenario default when absent).
    #[arg(long)]
    pub n: Option<usize>,
    /// Exposure count (highdim_5_2 only).
    #[arg(long)]
    pub p: Option<usize>,
    /// RNG seed (default 1).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummarizeSettings {
    /// Output directory of `fit` (or one `d<df>` directory of `select-df`).
    #[arg(long)]
    pub fit: Option<PathBuf>,
    /// Exposure pairs `target,co` for cross-sections; repeatable.
    #[arg(long = "cross-section")]
    pub cross_section: Option<Vec<String>>,
    /// Exposure pairs `a,b` for response surfaces; repeatable.
    #[arg(long)]
    pub surface: Option<Vec<String>>,
    /// Co-exposure quantiles of the cross-sections (default 0.1,0.5,0.9).
    #[arg(long, value_delimiter = ',')]
    pub quantiles: Option<Vec<f64>>,
    /// Grid points per axis (default 50).
    #[arg(long)]
    pub grid_size: Option<usize>,
    /// Exposure sets whose inclusion probability is reported, as
    /// comma-separated names; repeatable.
    #[arg(long)]
    pub set: Option<Vec<String>>,
    /// Delimited file of exposure rows at which to predict `f`.
    #[arg(long)]
    pub predict: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorProbSettings {
    /// Number of exposures.
    #[arg(long)]
    pub p: Option<usize>,
    /// Number of functions.
    #[arg(long)]
    pub k: Option<usize>,
    /// First Beta shape.
    #[arg(long = "M", id = "m_shape")]
    pub m_shape: Option<f64>,
    /// Second Beta shape.
    #[arg(long)]
    pub gamma: Option<f64>,
}
