//! Posterior inclusion probabilities and exposure-response summaries.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{quantile_sorted, tensor_product, SplineSpec};
use crate::diagnostics::{psr, Psr};
use crate::error::{Error, Result};
use crate::types::{ChainSamples, ExposureSet, ModelState};

/// All draws of several chains, in chain order.
pub fn pool_draws(chains: &[ChainSamples]) -> Vec<&ModelState> {
    chains.iter().flat_map(|c| c.draws.iter()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InclusionSummary {
    pub main_pip: Vec<f64>,
    /// Symmetric `p × p`, row-major; the diagonal equals `main_pip`.
    pub pair_pip: Vec<Vec<f64>>,
    /// Probability that some active set contains the queried set.
    pub set_pip: Vec<(ExposureSet, f64)>,
    /// Probability that some active set equals the queried set.
    pub exact_set_pip: Vec<(ExposureSet, f64)>,
}

pub fn inclusion_probabilities(
    draws: &[&ModelState],
    query_sets: &[ExposureSet],
) -> Result<InclusionSummary> {
    let first = draws
        .first()
        .ok_or_else(|| Error::Config("no posterior draws to summarize".into()))?;
    let p = first.zeta.p();
    let s = draws.len() as f64;
    let mut main = vec![0.0; p];
    let mut pair = vec![vec![0.0; p]; p];
    let mut sets = vec![0.0; query_sets.len()];
    let mut exact = vec![0.0; query_sets.len()];
    for d in draws {
        let active = d.zeta.active_sets();
        let mut together = vec![vec![false; p]; p];
        for a in active {
            let members = a.to_vec();
            for &i in &members {
                for &j in &members {
                    together[i][j] = true;
                }
            }
        }
        for i in 0..p {
            if together[i][i] {
                main[i] += 1.0;
            }
            for j in 0..p {
                if together[i][j] {
                    pair[i][j] += 1.0;
                }
            }
        }
        for (q, (sv, ev)) in query_sets.iter().zip(sets.iter_mut().zip(exact.iter_mut())) {
            if active.iter().any(|a| !a.is_empty() && q.is_subset_of(*a)) {
                *sv += 1.0;
            }
            if active.iter().any(|a| a == q) {
                *ev += 1.0;
            }
        }
    }
    Ok(InclusionSummary {
        main_pip: main.into_iter().map(|v| v / s).collect(),
        pair_pip: pair
            .into_iter()
            .map(|r| r.into_iter().map(|v| v / s).collect())
            .collect(),
        set_pip: query_sets
            .iter()
            .copied()
            .zip(sets.into_iter().map(|v| v / s))
            .collect(),
        exact_set_pip: query_sets
            .iter()
            .copied()
            .zip(exact.into_iter().map(|v| v / s))
            .collect(),
    })
}

/// Per-draw values of `f` at new exposure rows.
pub struct FEvaluator<'a> {
    spec: &'a SplineSpec,
    marginals: Vec<DMatrix<f64>>,
    blocks: HashMap<ExposureSet, DMatrix<f64>>,
}

impl<'a> FEvaluator<'a> {
    /// `x_new` is on the original exposure scale.
    pub fn new(spec: &'a SplineSpec, x_new: &DMatrix<f64>) -> Result<Self> {
        if x_new.ncols() != spec.p() {
            return Err(Error::Dimension(format!(
                "prediction rows have {} exposures, model has {}",
                x_new.ncols(),
                spec.p()
            )));
        }
        Ok(FEvaluator {
            spec,
            marginals: spec.marginal_designs(x_new),
            blocks: HashMap::new(),
        })
    }

    pub fn rows(&self) -> usize {
        self.marginals.first().map_or(0, DMatrix::nrows)
    }

    fn block(&mut self, t: ExposureSet) -> &DMatrix<f64> {
        let marginals = &self.marginals;
        self.blocks.entry(t).or_insert_with(|| {
            let bases: Vec<&DMatrix<f64>> = t.iter().map(|j| &marginals[j]).collect();
            tensor_product(&bases)
        })
    }

    /// `f` of one draw at every row.
    pub fn eval(&mut self, draw: &ModelState) -> Result<DVector<f64>> {
        if draw.df != self.spec.df {
            return Err(Error::Dimension(format!(
                "draw uses df = {} but the basis has df = {}",
                draw.df, self.spec.df
            )));
        }
        let mut f = DVector::zeros(self.rows());
        for (h, set) in draw.zeta.active_sets().iter().enumerate() {
            let mut offset = 0;
            for t in set.nonempty_subsets_ordered() {
                let x = self.block(t);
                let w = x.ncols();
                let coef = DVector::from_column_slice(&draw.beta[h][offset..offset + w]);
                f.gemv(1.0, x, &coef, 1.0);
                offset += w;
            }
        }
        Ok(f)
    }

    /// `S × rows` matrix of per-draw values.
    pub fn eval_all(&mut self, draws: &[&ModelState]) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(draws.len(), self.rows());
        for (s, d) in draws.iter().enumerate() {
            let f = self.eval(d)?;
            out.row_mut(s).copy_from(&f.transpose());
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Column-wise mean, sd and central 95% interval of an `S × q` matrix.
pub fn summarize_columns(values: &DMatrix<f64>) -> PointSummary {
    let s = values.nrows();
    let q = values.ncols();
    let mut out = PointSummary {
        mean: Vec::with_capacity(q),
        sd: Vec::with_capacity(q),
        lower: Vec::with_capacity(q),
        upper: Vec::with_capacity(q),
    };
    for c in 0..q {
        let mut col: Vec<f64> = values.column(c).iter().copied().collect();
        let mean = col.iter().sum::<f64>() / s as f64;
        let var = if s > 1 {
            col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (s - 1) as f64
        } else {
            0.0
        };
        col.sort_by(f64::total_cmp);
        out.mean.push(mean);
        out.sd.push(var.sqrt());
        out.lower.push(quantile_sorted(&col, 0.025));
        out.upper.push(quantile_sorted(&col, 0.975));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub summary: PointSummary,
    /// Rows with some exposure outside the training range.
    pub extrapolated: Vec<bool>,
}

fn ranges(x: &DMatrix<f64>) -> Vec<(f64, f64)> {
    (0..x.ncols())
        .map(|j| {
            let c = x.column(j);
            (c.min(), c.max())
        })
        .collect()
}

/// Posterior summaries of `f` at new exposure rows.
pub fn predict_f(
    draws: &[&ModelState],
    x_new: &DMatrix<f64>,
    spec: &SplineSpec,
    x_train: &DMatrix<f64>,
) -> Result<Prediction> {
    if draws.is_empty() {
        return Err(Error::Config("no posterior draws to summarize".into()));
    }
    let mut ev = FEvaluator::new(spec, x_new)?;
    let values = ev.eval_all(draws)?;
    let r = ranges(x_train);
    let extrapolated = (0..x_new.nrows())
        .map(|i| (0..x_new.ncols()).any(|j| x_new[(i, j)] < r[j].0 || x_new[(i, j)] > r[j].1))
        .collect();
    Ok(Prediction {
        summary: summarize_columns(&values),
        extrapolated,
    })
}

/// Fraction of rows whose central 95% interval covers the truth, after
/// centering each draw and the truth over the rows (the mean of `f` is not
/// identified separately from the intercept).
pub fn centered_coverage(values: &DMatrix<f64>, truth: &[f64]) -> f64 {
    let q = values.ncols();
    let mut centered = values.clone();
    for mut row in centered.row_iter_mut() {
        let m = row.sum() / q as f64;
        row.add_scalar_mut(-m);
    }
    let tm = truth.iter().sum::<f64>() / q as f64;
    let s = summarize_columns(&centered);
    let hits = (0..q)
        .filter(|&i| {
            let t = truth[i] - tm;
            s.lower[i] <= t && t <= s.upper[i]
        })
        .count();
    hits as f64 / q as f64
}

fn column_sorted(x: &DMatrix<f64>, j: usize) -> Vec<f64> {
    let mut v: Vec<f64> = x.column(j).iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Training medians of every exposure.
pub fn medians(x: &DMatrix<f64>) -> Vec<f64> {
    (0..x.ncols())
        .map(|j| quantile_sorted(&column_sorted(x, j), 0.5))
        .collect()
}

/// `size` equally spaced points over the training range of exposure `j`.
pub fn range_grid(x: &DMatrix<f64>, j: usize, size: usize) -> Vec<f64> {
    let c = x.column(j);
    let (lo, hi) = (c.min(), c.max());
    if size <= 1 {
        return vec![lo];
    }
    (0..size)
        .map(|i| lo + (hi - lo) * i as f64 / (size - 1) as f64)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub co_quantile: f64,
    pub co_value: f64,
    pub grid: Vec<f64>,
    pub summary: PointSummary,
}

pub const CROSS_SECTION_QUANTILES: [f64; 3] = [0.1, 0.5, 0.9];

/// Effect of exposure `target` over its range at fixed quantiles of
/// `co_exposure`, other exposures at their medians.
pub fn cross_section(
    draws: &[&ModelState],
    spec: &SplineSpec,
    x_train: &DMatrix<f64>,
    target: usize,
    co_exposure: usize,
    quantiles: &[f64],
    grid_size: usize,
) -> Result<Vec<Curve>> {
    let p = x_train.ncols();
    if target >= p || co_exposure >= p || target == co_exposure {
        return Err(Error::Config(format!(
            "cross-section needs two distinct exposures below {p}, got {target} and {co_exposure}"
        )));
    }
    let med = medians(x_train);
    let grid = range_grid(x_train, target, grid_size);
    let co_sorted = column_sorted(x_train, co_exposure);
    quantiles
        .iter()
        .map(|&q| {
            let co_value = quantile_sorted(&co_sorted, q);
            let x_new = DMatrix::from_fn(grid.len(), p, |i, j| {
                if j == target {
                    grid[i]
                } else if j == co_exposure {
                    co_value
                } else {
                    med[j]
                }
            });
            let mut ev = FEvaluator::new(spec, &x_new)?;
            let values = ev.eval_all(draws)?;
            Ok(Curve {
                co_quantile: q,
                co_value,
                grid: grid.clone(),
                summary: summarize_columns(&values),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub exposures: (usize, usize),
    pub grid_i: Vec<f64>,
    pub grid_j: Vec<f64>,
    /// Row-major over `grid_i` (slow) by `grid_j` (fast).
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// Observed `(x_i, x_j)` pairs for overlay.
    pub observed: Vec<(f64, f64)>,
}

/// Mean and sd of `f` over a rectangular grid of two exposures, the others
/// at their medians.
pub fn surface_2d(
    draws: &[&ModelState],
    spec: &SplineSpec,
    x_train: &DMatrix<f64>,
    exposures: (usize, usize),
    grid_i: &[f64],
    grid_j: &[f64],
) -> Result<Surface> {
    let (a, b) = exposures;
    let p = x_train.ncols();
    if a >= p || b >= p || a == b {
        return Err(Error::Config(format!(
            "surface needs two distinct exposures below {p}, got {a} and {b}"
        )));
    }
    let med = medians(x_train);
    let rows = grid_i.len() * grid_j.len();
    let x_new = DMatrix::from_fn(rows, p, |r, j| {
        if j == a {
            grid_i[r / grid_j.len()]
        } else if j == b {
            grid_j[r % grid_j.len()]
        } else {
            med[j]
        }
    });
    let mut ev = FEvaluator::new(spec, &x_new)?;
    let values = ev.eval_all(draws)?;
    let s = summarize_columns(&values);
    Ok(Surface {
        exposures,
        grid_i: grid_i.to_vec(),
        grid_j: grid_j.to_vec(),
        mean: s.mean,
        sd: s.sd,
        observed: (0..x_train.nrows())
            .map(|r| (x_train[(r, a)], x_train[(r, b)]))
            .collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsrTable {
    /// One entry per training observation, for `f(X_i)`.
    pub f: Vec<Psr>,
    pub beta_c: Vec<Psr>,
    pub sigma2: Psr,
}

impl PsrTable {
    /// Fraction of `f(X_i)` entries below `limit`.
    pub fn f_fraction_below(&self, limit: f64) -> f64 {
        self.f.iter().filter(|r| r.value < limit).count() as f64 / self.f.len().max(1) as f64
    }
}

/// PSR of `f(X_i)` at the training rows, the covariate coefficients and the
/// residual variance. Chains are truncated to the shortest length.
pub fn psr_table(
    chains: &[ChainSamples],
    spec: &SplineSpec,
    x_train: &DMatrix<f64>,
) -> Result<PsrTable> {
    let len = chains.iter().map(|c| c.draws.len()).min().unwrap_or(0);
    let mut ev = FEvaluator::new(spec, x_train)?;
    let f_per_chain: Vec<DMatrix<f64>> = chains
        .iter()
        .map(|c| {
            let d: Vec<&ModelState> = c.draws[..len].iter().collect();
            ev.eval_all(&d)
        })
        .collect::<Result<_>>()?;
    let f = (0..x_train.nrows())
        .map(|i| {
            let cols: Vec<Vec<f64>> = f_per_chain
                .iter()
                .map(|m| m.column(i).iter().copied().collect())
                .collect();
            let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
            psr(&refs)
        })
        .collect::<Result<Vec<_>>>()?;
    let scalar = |get: &dyn Fn(&ModelState) -> f64| -> Result<Psr> {
        let cols: Vec<Vec<f64>> = chains
            .iter()
            .map(|c| c.draws[..len].iter().map(get).collect())
            .collect();
        let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
        psr(&refs)
    };
    let m = chains
        .first()
        .and_then(|c| c.draws.first())
        .map_or(0, |d| d.beta_c.len());
    let beta_c = (0..m)
        .map(|l| scalar(&|d| d.beta_c[l]))
        .collect::<Result<Vec<_>>>()?;
    let sigma2 = scalar(&|d| d.sigma2)?;
    Ok(PsrTable { f, beta_c, sigma2 })
}
