//! Internal standardized view of a validated [`Dataset`].

use nalgebra::{DMatrix, DVector};

use crate::types::Dataset;

/// Mean/scale pair applied as `(v - center) / scale`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Standardizer {
    pub center: f64,
    pub scale: f64,
}

impl Standardizer {
    pub fn fit(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count().max(1) as f64;
        let center = values.clone().sum::<f64>() / n;
        let var = values.map(|v| (v - center).powi(2)).sum::<f64>() / n;
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        Standardizer { center, scale }
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.center) / self.scale
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.scale + self.center
    }
}

/// Standardized exposures and the covariate design with a leading intercept.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub y: DVector<f64>,
    /// Raw exposures, kept for reporting on the original scale.
    pub x_raw: DMatrix<f64>,
    /// n × (m + 1); column 0 is the intercept.
    pub c_design: DMatrix<f64>,
    pub covariate_scaling: Vec<Standardizer>,
    pub exposure_names: Vec<String>,
    pub covariate_names: Vec<String>,
}

impl PreparedData {
    /// Expects a dataset that already passed validation.
    pub fn new(ds: &Dataset) -> Self {
        let n = ds.n();
        let m = ds.m();
        let covariate_scaling: Vec<Standardizer> = (0..m)
            .map(|j| Standardizer::fit(ds.c.column(j).iter().copied()))
            .collect();
        let mut c_design = DMatrix::zeros(n, m + 1);
        c_design.column_mut(0).fill(1.0);
        for (j, s) in covariate_scaling.iter().enumerate() {
            for i in 0..n {
                c_design[(i, j + 1)] = s.apply(ds.c[(i, j)]);
            }
        }
        PreparedData {
            y: DVector::from_column_slice(&ds.y),
            x_raw: ds.x.clone(),
            c_design,
            covariate_scaling,
            exposure_names: ds.exposure_names.clone(),
            covariate_names: ds.covariate_names.clone(),
        }
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x_raw.ncols()
    }

    /// Covariates excluding the intercept.
    pub fn m(&self) -> usize {
        self.c_design.ncols() - 1
    }

    /// Copy with the outcome replaced (used for permutation runs).
    pub fn with_outcome(&self, y: DVector<f64>) -> Self {
        let mut out = self.clone();
        out.y = y;
        out
    }
}
