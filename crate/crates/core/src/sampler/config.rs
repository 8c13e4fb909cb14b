use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How inclusion indicators are updated within a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ZetaUpdateMode {
    /// Metropolis-Hastings move to a uniformly chosen family member.
    #[default]
    Mh,
    /// Draw from the full family in proportion to the collapsed posterior.
    GibbsScan,
}

impl std::str::FromStr for ZetaUpdateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mh" => Ok(ZetaUpdateMode::Mh),
            "gibbs_scan" | "gibbs-scan" => Ok(ZetaUpdateMode::GibbsScan),
            other => Err(Error::Config(format!("unknown zeta update mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub n_chains: usize,
    pub zeta_update_mode: ZetaUpdateMode,
    /// Largest interaction order proposed by decomposition moves.
    pub subset_cap: usize,
    pub rng_seed: u64,
    /// Families larger than this fall back to an MH move in Gibbs-scan mode.
    pub candidate_budget: usize,
    /// Holds every inclusion probability fixed instead of sampling it.
    pub fixed_tau: Option<f64>,
    pub check_invariants: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_iter: 10_000,
            burn_in: 2_000,
            thin: 8,
            n_chains: 2,
            zeta_update_mode: ZetaUpdateMode::Mh,
            subset_cap: 4,
            rng_seed: 1,
            candidate_budget: 256,
            fixed_tau: None,
            check_invariants: true,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iter == 0 {
            return Err(Error::Config("n_iter must be positive".into()));
        }
        if self.burn_in >= self.n_iter {
            return Err(Error::Config(format!(
                "burn_in ({}) must be smaller than n_iter ({})",
                self.burn_in, self.n_iter
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.n_chains == 0 {
            return Err(Error::Config("n_chains must be at least 1".into()));
        }
        if self.subset_cap == 0 {
            return Err(Error::Config("subset_cap must be at least 1".into()));
        }
        if self.candidate_budget < 2 {
            return Err(Error::Config("candidate_budget must be at least 2".into()));
        }
        if let Some(t) = self.fixed_tau {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Config(format!("fixed tau {t} outside (0,1)")));
            }
        }
        Ok(())
    }

    /// Number of draws kept per chain.
    pub fn kept_draws(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }

    /// Whether the state after `completed` iterations is kept.
    pub fn keeps(&self, completed: usize) -> bool {
        completed > self.burn_in && (completed - self.burn_in).is_multiple_of(self.thin)
    }
}
