//! Natural cubic spline bases per exposure and tensor-product interaction
//! designs.
//!
//! Each exposure is standardized, expanded in a natural cubic spline basis
//! with `df` columns (interior knots at equally spaced quantiles, boundary
//! knots at the observed range), centered, and linearly transformed so that
//! the columns are mutually uncorrelated with unit variance on the training
//! data. With `df = 1` this is just the standardized exposure. Interaction
//! blocks are elementwise products of the marginal columns.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::Standardizer;
use crate::error::{Error, Result};
use crate::types::ExposureSet;

/// Fitted marginal basis for a single exposure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalSpline {
    pub standardizer: Standardizer,
    /// Interior knots on the standardized scale, strictly increasing.
    pub interior_knots: Vec<f64>,
    /// Boundary knots on the standardized scale.
    pub boundary: (f64, f64),
    col_means: Vec<f64>,
    /// Row-major `df × df` map from centered raw columns to the final basis.
    transform: Vec<f64>,
    df: usize,
}

/// Type-7 sample quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn cube_plus(v: f64) -> f64 {
    if v > 0.0 {
        v * v * v
    } else {
        0.0
    }
}

impl MarginalSpline {
    /// Fits the basis for one exposure column. `col` is only used in errors.
    pub fn fit(x: &[f64], df: usize, col: usize) -> Result<Self> {
        if df == 0 {
            return Err(Error::Config(
                "degrees of freedom must be at least 1".into(),
            ));
        }
        if x.is_empty() || x.iter().all(|&v| v == x[0]) {
            return Err(Error::ConstantExposure {
                col,
                name: format!("column {col}"),
            });
        }
        let standardizer = Standardizer::fit(x.iter().copied());
        let z: Vec<f64> = x.iter().map(|&v| standardizer.apply(v)).collect();
        let mut sorted = z.clone();
        sorted.sort_by(f64::total_cmp);
        let boundary = (sorted[0], sorted[sorted.len() - 1]);
        let interior_knots: Vec<f64> = (1..df)
            .map(|i| quantile_sorted(&sorted, i as f64 / df as f64))
            .collect();
        let mut all = vec![boundary.0];
        all.extend(&interior_knots);
        all.push(boundary.1);
        if all.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::CoincidentKnots { col });
        }

        let mut spline = MarginalSpline {
            standardizer,
            interior_knots,
            boundary,
            col_means: vec![0.0; df],
            transform: identity(df),
            df,
        };
        let raw = spline.raw_basis(&z);
        let n = z.len() as f64;
        let col_means: Vec<f64> = (0..df).map(|c| raw.column(c).sum() / n).collect();
        let mut centered = raw;
        for (c, m) in col_means.iter().enumerate() {
            centered.column_mut(c).add_scalar_mut(-m);
        }
        let gram = centered.tr_mul(&centered) / n;
        let chol = gram.cholesky().ok_or(Error::CoincidentKnots { col })?;
        // B = R L^{-T} has identity sample covariance.
        let l_inv_t = chol
            .l()
            .solve_lower_triangular(&DMatrix::identity(df, df))
            .ok_or(Error::CoincidentKnots { col })?
            .transpose();
        spline.col_means = col_means;
        spline.transform = (0..df)
            .flat_map(|r| (0..df).map(move |c| (r, c)))
            .map(|(r, c)| l_inv_t[(r, c)])
            .collect();
        Ok(spline)
    }

    pub fn df(&self) -> usize {
        self.df
    }

    /// Knots on the original exposure scale (boundary, interior..., boundary).
    pub fn knots_original_scale(&self) -> Vec<f64> {
        let mut out = vec![self.standardizer.invert(self.boundary.0)];
        out.extend(
            self.interior_knots
                .iter()
                .map(|&k| self.standardizer.invert(k)),
        );
        out.push(self.standardizer.invert(self.boundary.1));
        out
    }

    /// Truncated-power natural spline columns on standardized inputs.
    fn raw_basis(&self, z: &[f64]) -> DMatrix<f64> {
        let df = self.df;
        let mut out = DMatrix::zeros(z.len(), df);
        let mut knots = vec![self.boundary.0];
        knots.extend(&self.interior_knots);
        knots.push(self.boundary.1);
        let kk = knots.len();
        let last = knots[kk - 1];
        let dk =
            |v: f64, k: usize| (cube_plus(v - knots[k]) - cube_plus(v - last)) / (last - knots[k]);
        for (i, &v) in z.iter().enumerate() {
            out[(i, 0)] = v;
            for k in 0..kk.saturating_sub(2) {
                out[(i, k + 1)] = dk(v, k) - dk(v, kk - 2);
            }
        }
        out
    }

    /// Evaluates the basis at exposure values on the original scale.
    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let z: Vec<f64> = x.iter().map(|&v| self.standardizer.apply(v)).collect();
        let mut raw = self.raw_basis(&z);
        for c in 0..self.df {
            raw.column_mut(c).add_scalar_mut(-self.col_means[c]);
        }
        let t = DMatrix::from_row_slice(self.df, self.df, &self.transform);
        raw * t
    }
}

fn identity(d: usize) -> Vec<f64> {
    (0..d * d)
        .map(|i| if i % (d + 1) == 0 { 1.0 } else { 0.0 })
        .collect()
}

/// Marginal basis of `x` with `d` columns, centered with unit-variance,
/// mutually uncorrelated columns.
pub fn natural_spline_basis(x: &[f64], d: usize) -> Result<DMatrix<f64>> {
    Ok(MarginalSpline::fit(x, d, 0)?.eval(x))
}

/// Per-exposure fitted bases sharing a common degrees of freedom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplineSpec {
    pub df: usize,
    pub marginals: Vec<MarginalSpline>,
}

impl SplineSpec {
    /// Fits one marginal basis per column of the raw exposure matrix.
    pub fn fit(x: &DMatrix<f64>, df: usize) -> Result<Self> {
        let marginals = (0..x.ncols())
            .map(|j| {
                let col: Vec<f64> = x.column(j).iter().copied().collect();
                MarginalSpline::fit(&col, df, j)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SplineSpec { df, marginals })
    }

    pub fn p(&self) -> usize {
        self.marginals.len()
    }

    /// Marginal design matrices (n × df) for every exposure of `x`.
    pub fn marginal_designs(&self, x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        self.marginals
            .iter()
            .enumerate()
            .map(|(j, m)| {
                let col: Vec<f64> = x.column(j).iter().copied().collect();
                m.eval(&col)
            })
            .collect()
    }

    /// One block per nonempty subset of `set`, evaluated at `x` (original scale).
    pub fn design_for_set(&self, set: ExposureSet, x: &DMatrix<f64>) -> Result<Vec<DesignBlock>> {
        if set.is_empty() {
            return Err(Error::Config(
                "design requested for an empty exposure set".into(),
            ));
        }
        let marginals: Vec<Option<DMatrix<f64>>> = (0..self.p())
            .map(|j| {
                set.contains(j).then(|| {
                    let col: Vec<f64> = x.column(j).iter().copied().collect();
                    self.marginals[j].eval(&col)
                })
            })
            .collect();
        design_from_marginals(set, |j| marginals[j].as_ref().expect("member basis"))
    }
}

/// Basis columns for one exposure subset.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignBlock {
    pub subset: ExposureSet,
    pub columns: DMatrix<f64>,
}

/// All products taking one column from each basis, in lexicographic order of
/// the per-basis column indices (first basis most significant).
pub fn tensor_product(bases: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let n = bases[0].nrows();
    let mut acc = bases[0].clone();
    for next in &bases[1..] {
        let (wa, wb) = (acc.ncols(), next.ncols());
        let mut out = DMatrix::zeros(n, wa * wb);
        for a in 0..wa {
            for b in 0..wb {
                let mut col = out.column_mut(a * wb + b);
                col.copy_from(&acc.column(a));
                col.component_mul_assign(&next.column(b));
            }
        }
        acc = out;
    }
    acc
}

/// Tensor block for `subset`, given the marginal bases of its members in
/// increasing exposure order.
pub fn tensor_block(subset: ExposureSet, bases: &[&DMatrix<f64>]) -> Result<DesignBlock> {
    if bases.is_empty() || subset.is_empty() {
        return Err(Error::Config("tensor block of an empty subset".into()));
    }
    if bases.len() != subset.len() {
        return Err(Error::Dimension(format!(
            "{} bases supplied for a subset of size {}",
            bases.len(),
            subset.len()
        )));
    }
    let n = bases[0].nrows();
    if bases.iter().any(|b| b.nrows() != n) {
        return Err(Error::Dimension(
            "bases disagree on the number of rows".into(),
        ));
    }
    Ok(DesignBlock {
        subset,
        columns: tensor_product(bases),
    })
}

/// Blocks for every nonempty subset of `set`, ordered by size then
/// lexicographically.
pub fn design_from_marginals<'a>(
    set: ExposureSet,
    marginal: impl Fn(usize) -> &'a DMatrix<f64>,
) -> Result<Vec<DesignBlock>> {
    set.nonempty_subsets_ordered()
        .into_iter()
        .map(|t| {
            let bases: Vec<&DMatrix<f64>> = t.iter().map(&marginal).collect();
            tensor_block(t, &bases)
        })
        .collect()
}
