//! Shared data model: datasets, prior configuration, inclusion matrices and
//! sampler states.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of exposures an [`ExposureSet`] can address.
pub const MAX_EXPOSURES: usize = 128;

/// A subset of exposure indices (0-based), stored as a bitmask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(into = "Vec<usize>", try_from = "Vec<usize>")]
pub struct ExposureSet(u128);

impl ExposureSet {
    pub const EMPTY: ExposureSet = ExposureSet(0);

    pub fn singleton(j: usize) -> Self {
        debug_assert!(j < MAX_EXPOSURES);
        ExposureSet(1u128 << j)
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        indices
            .into_iter()
            .fold(ExposureSet::EMPTY, |s, j| s.with(j))
    }

    pub fn from_bits(bits: u128) -> Self {
        ExposureSet(bits)
    }

    pub fn bits(self) -> u128 {
        self.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, j: usize) -> bool {
        j < MAX_EXPOSURES && self.0 & (1u128 << j) != 0
    }

    #[must_use]
    pub fn with(self, j: usize) -> Self {
        ExposureSet(self.0 | (1u128 << j))
    }

    #[must_use]
    pub fn without(self, j: usize) -> Self {
        ExposureSet(self.0 & !(1u128 << j))
    }

    #[must_use]
    pub fn union(self, other: Self) -> Self {
        ExposureSet(self.0 | other.0)
    }

    pub fn is_subset_of(self, other: Self) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_proper_subset_of(self, other: Self) -> bool {
        self.is_subset_of(other) && self.0 != other.0
    }

    /// Indices in increasing order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let j = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(j)
            }
        })
    }

    pub fn to_vec(self) -> Vec<usize> {
        self.iter().collect()
    }

    /// All subsets (including the empty set and `self`), in no particular order.
    pub fn all_subsets(self) -> Vec<ExposureSet> {
        let members = self.to_vec();
        let mut out = Vec::with_capacity(1 << members.len());
        for mask in 0u64..(1u64 << members.len()) {
            let mut s = ExposureSet::EMPTY;
            for (bit, &j) in members.iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    s = s.with(j);
                }
            }
            out.push(s);
        }
        out
    }

    /// Nonempty subsets ordered by size, then lexicographically by their
    /// sorted member lists. This is the block order of a design.
    pub fn nonempty_subsets_ordered(self) -> Vec<ExposureSet> {
        let mut subsets: Vec<ExposureSet> = self
            .all_subsets()
            .into_iter()
            .filter(|s| !s.is_empty())
            .collect();
        subsets.sort_by(|a, b| {
            a.len()
                .cmp(&b.len())
                .then_with(|| a.to_vec().cmp(&b.to_vec()))
        });
        subsets
    }
}

impl From<ExposureSet> for Vec<usize> {
    fn from(s: ExposureSet) -> Self {
        s.to_vec()
    }
}

impl TryFrom<Vec<usize>> for ExposureSet {
    type Error = String;

    fn try_from(v: Vec<usize>) -> std::result::Result<Self, Self::Error> {
        if let Some(&j) = v.iter().find(|&&j| j >= MAX_EXPOSURES) {
            return Err(format!("exposure index {j} exceeds {MAX_EXPOSURES}"));
        }
        Ok(ExposureSet::from_indices(v))
    }
}

impl fmt::Debug for ExposureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl fmt::Display for ExposureSet {
    /// 1-based, e.g. `{2,3}`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, j) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", j + 1)?;
        }
        write!(f, "}}")
    }
}

/// Outcome, exposures and covariates for `n` subjects.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub y: Vec<f64>,
    /// n × p exposure matrix.
    pub x: DMatrix<f64>,
    /// n × m covariate matrix; `m` may be zero.
    pub c: DMatrix<f64>,
    pub exposure_names: Vec<String>,
    pub covariate_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset with generated labels `X1..Xp` and `C1..Cm`.
    pub fn new(y: Vec<f64>, x: DMatrix<f64>, c: DMatrix<f64>) -> Self {
        let exposure_names = (1..=x.ncols()).map(|j| format!("X{j}")).collect();
        let covariate_names = (1..=c.ncols()).map(|j| format!("C{j}")).collect();
        Dataset {
            y,
            x,
            c,
            exposure_names,
            covariate_names,
        }
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn m(&self) -> usize {
        self.c.ncols()
    }
}

/// Checks dimensions, finiteness and non-constant exposure columns.
pub fn validate_dataset(raw: Dataset) -> Result<Dataset> {
    let n = raw.y.len();
    if n == 0 {
        return Err(Error::Dimension("dataset has no observations".into()));
    }
    if raw.x.ncols() == 0 {
        return Err(Error::Dimension("dataset has no exposures".into()));
    }
    if raw.x.ncols() > MAX_EXPOSURES {
        return Err(Error::Dimension(format!(
            "{} exposures exceeds the supported maximum of {MAX_EXPOSURES}",
            raw.x.ncols()
        )));
    }
    if raw.x.nrows() != n {
        return Err(Error::Dimension(format!(
            "outcome has {n} rows but exposure matrix has {}",
            raw.x.nrows()
        )));
    }
    if raw.c.nrows() != n && raw.c.ncols() > 0 {
        return Err(Error::Dimension(format!(
            "outcome has {n} rows but covariate matrix has {}",
            raw.c.nrows()
        )));
    }
    if raw.exposure_names.len() != raw.x.ncols() || raw.covariate_names.len() != raw.c.ncols() {
        return Err(Error::Dimension(
            "column labels do not match matrix widths".into(),
        ));
    }
    if let Some(i) = raw.y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "outcome",
            row: i,
            col: 0,
        });
    }
    for (what, mat) in [("exposure", &raw.x), ("covariate", &raw.c)] {
        for col in 0..mat.ncols() {
            for row in 0..mat.nrows() {
                if !mat[(row, col)].is_finite() {
                    return Err(Error::NonFinite { what, row, col });
                }
            }
        }
    }
    for col in 0..raw.x.ncols() {
        let first = raw.x[(0, col)];
        if raw.x.column(col).iter().all(|&v| v == first) {
            return Err(Error::ConstantExposure {
                col,
                name: raw.exposure_names[col].clone(),
            });
        }
    }
    let mut ds = raw;
    if ds.c.nrows() != n {
        ds.c = DMatrix::zeros(n, 0);
    }
    Ok(ds)
}

/// Hyperparameters of the spike-and-slab prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    /// First Beta shape for the per-function inclusion probabilities.
    pub m_shape: f64,
    /// Second Beta shape; defaults to the number of exposures.
    pub gamma: f64,
    pub a0: f64,
    pub b0: f64,
    /// Number of functions in the decomposition.
    pub k: usize,
    /// Slab variance scale (slab covariance is `sigma2 * sigma_beta2 * I`).
    pub sigma_beta2: f64,
    pub beta_c_prior_variance: f64,
}

impl PriorConfig {
    pub const DEFAULT_M_SHAPE: f64 = 3.0;
    pub const DEFAULT_MAX_FUNCTIONS: usize = 20;

    /// Defaults for `p` exposures. `sigma_beta2` is a placeholder until the
    /// slab variance has been estimated.
    pub fn defaults_for(p: usize) -> Self {
        PriorConfig {
            m_shape: Self::DEFAULT_M_SHAPE,
            gamma: p as f64,
            a0: 0.001,
            b0: 0.001,
            k: p.clamp(1, Self::DEFAULT_MAX_FUNCTIONS),
            sigma_beta2: 1.0,
            beta_c_prior_variance: 1e6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("M", self.m_shape),
            ("gamma", self.gamma),
            ("a0", self.a0),
            ("b0", self.b0),
            ("sigma_beta2", self.sigma_beta2),
            ("beta_c_prior_variance", self.beta_c_prior_variance),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        Ok(())
    }
}

/// p × k binary inclusion matrix, stored column-wise as active sets.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ZetaMatrix {
    p: usize,
    sets: Vec<ExposureSet>,
}

impl ZetaMatrix {
    pub fn empty(p: usize, k: usize) -> Self {
        ZetaMatrix {
            p,
            sets: vec![ExposureSet::EMPTY; k],
        }
    }

    pub fn from_sets(p: usize, sets: Vec<ExposureSet>) -> Result<Self> {
        let limit = ExposureSet::from_indices(0..p);
        if let Some(s) = sets.iter().find(|s| !s.is_subset_of(limit)) {
            return Err(Error::Dimension(format!("active set {s} exceeds p = {p}")));
        }
        Ok(ZetaMatrix { p, sets })
    }

    /// Builds from a row-major p × k 0/1 table.
    pub fn from_entries(entries: &[Vec<u8>]) -> Result<Self> {
        let p = entries.len();
        let k = entries.first().map_or(0, Vec::len);
        let mut z = ZetaMatrix::empty(p, k);
        for (j, row) in entries.iter().enumerate() {
            if row.len() != k {
                return Err(Error::Dimension("ragged inclusion matrix".into()));
            }
            for (h, &v) in row.iter().enumerate() {
                match v {
                    0 => {}
                    1 => z.set(j, h, true),
                    other => {
                        return Err(Error::Dimension(format!(
                            "inclusion entry {other} is not binary"
                        )))
                    }
                }
            }
        }
        Ok(z)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.sets.len()
    }

    pub fn get(&self, j: usize, h: usize) -> bool {
        self.sets[h].contains(j)
    }

    pub fn set(&mut self, j: usize, h: usize, on: bool) {
        self.sets[h] = if on {
            self.sets[h].with(j)
        } else {
            self.sets[h].without(j)
        };
    }

    pub fn active_set(&self, h: usize) -> ExposureSet {
        self.sets[h]
    }

    pub fn set_active_set(&mut self, h: usize, s: ExposureSet) {
        self.sets[h] = s;
    }

    pub fn active_sets(&self) -> &[ExposureSet] {
        &self.sets
    }

    pub fn column_count(&self, h: usize) -> usize {
        self.sets[h].len()
    }

    pub fn is_null(&self) -> bool {
        self.sets.iter().all(|s| s.is_empty())
    }

    pub fn entries(&self) -> Vec<Vec<u8>> {
        (0..self.p)
            .map(|j| (0..self.k()).map(|h| u8::from(self.get(j, h))).collect())
            .collect()
    }
}

impl fmt::Debug for ZetaMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Zeta[")?;
        for (h, s) in self.sets.iter().enumerate() {
            if h > 0 {
                write!(f, " ")?;
            }
            write!(f, "{s}")?;
        }
        write!(f, "]")
    }
}

/// True iff no nonempty active set is contained in (or equal to) another.
pub fn check_zeta_constraint(zeta: &ZetaMatrix) -> bool {
    let sets = zeta.active_sets();
    for (h, a) in sets.iter().enumerate() {
        if a.is_empty() {
            continue;
        }
        for (m, b) in sets.iter().enumerate() {
            if h != m && a.is_subset_of(*b) {
                return false;
            }
        }
    }
    true
}

/// All sampled parameters at one iteration.
///
/// `beta[h]` is the stacked coefficient vector of function `h`: one block of
/// length `df^|S|` for every nonempty `S ⊆ A_h`, in
/// [`ExposureSet::nonempty_subsets_ordered`] order. Inactive functions hold
/// an empty vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub zeta: ZetaMatrix,
    pub df: usize,
    pub beta: Vec<Vec<f64>>,
    /// Intercept first, then one coefficient per covariate.
    pub beta_c: Vec<f64>,
    pub sigma2: f64,
    pub tau: Vec<f64>,
}

/// Number of coefficients for an active set under `df` basis functions per
/// exposure: `(df + 1)^|A| - 1`.
pub fn coefficient_count(set: ExposureSet, df: usize) -> usize {
    (df + 1).pow(set.len() as u32) - 1
}

impl ModelState {
    pub fn null(p: usize, k: usize, df: usize, m: usize) -> Self {
        ModelState {
            zeta: ZetaMatrix::empty(p, k),
            df,
            beta: vec![Vec::new(); k],
            beta_c: vec![0.0; m + 1],
            sigma2: 1.0,
            tau: vec![0.5; k],
        }
    }

    /// Coefficient block for `(h, subset)` or `None` if that block is inactive.
    pub fn beta_block(&self, h: usize, subset: ExposureSet) -> Option<&[f64]> {
        let active = self.zeta.active_set(h);
        if subset.is_empty() || !subset.is_subset_of(active) {
            return None;
        }
        let mut offset = 0;
        for s in active.nonempty_subsets_ordered() {
            let width = self.df.pow(s.len() as u32);
            if s == subset {
                return self.beta[h].get(offset..offset + width);
            }
            offset += width;
        }
        None
    }

    /// Number of nonzero-by-construction slab coefficients.
    pub fn active_coefficient_count(&self) -> usize {
        self.beta.iter().map(Vec::len).sum()
    }

    /// Checks the inclusion constraint, subset closure of coefficient blocks
    /// and parameter ranges.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if !check_zeta_constraint(&self.zeta) {
            return Err(format!("inclusion constraint violated: {:?}", self.zeta));
        }
        if self.beta.len() != self.zeta.k() || self.tau.len() != self.zeta.k() {
            return Err("per-function vectors do not match k".into());
        }
        for (h, b) in self.beta.iter().enumerate() {
            let expected = coefficient_count(self.zeta.active_set(h), self.df);
            if b.len() != expected {
                return Err(format!(
                    "function {h} holds {} coefficients, expected {expected}",
                    b.len()
                ));
            }
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(format!("sigma2 = {} is not positive", self.sigma2));
        }
        if let Some(t) = self.tau.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(format!("tau = {t} outside (0,1)"));
        }
        Ok(())
    }
}

/// Thinned post burn-in draws of one chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSamples {
    pub chain_id: usize,
    pub rng_seed: u64,
    pub draws: Vec<ModelState>,
    /// One row per draw, one column per observation.
    pub loglik: Vec<Vec<f64>>,
    /// Set when every function was simultaneously active at some iteration.
    pub saturated: bool,
    /// Invariant violations observed while sampling.
    pub violations: u64,
}

impl ChainSamples {
    pub fn check(&self) -> Result<()> {
        if self.loglik.len() != self.draws.len() {
            return Err(Error::Dimension(format!(
                "{} log-likelihood rows for {} draws",
                self.loglik.len(),
                self.draws.len()
            )));
        }
        if self.loglik.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite log-likelihood entry".into()));
        }
        Ok(())
    }
}
