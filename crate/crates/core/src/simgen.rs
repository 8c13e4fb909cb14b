//! Synthetic data-generating processes used in simulation studies.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Dataset, ExposureSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// `0.7 X2 X3 + 0.6 X4^2 X5` with correlated exposures.
    Polynomial51,
    /// Sine/cosine interactions among uniform exposures.
    Highdim52,
    /// Nonlinear main effects only.
    NonlinearMainB3,
    /// No exposure effect.
    Null,
    /// The polynomial outcome with stronger exposure-covariate dependence.
    CorrIncreaseB2,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Polynomial51,
        Scenario::Highdim52,
        Scenario::NonlinearMainB3,
        Scenario::Null,
        Scenario::CorrIncreaseB2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Polynomial51 => "polynomial_5_1",
            Scenario::Highdim52 => "highdim_5_2",
            Scenario::NonlinearMainB3 => "nonlinear_main_B3",
            Scenario::Null => "null",
            Scenario::CorrIncreaseB2 => "corr_increase_B2",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownScenario(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub seed: u64,
    /// Pairwise correlation of the exposures given the covariates.
    pub correlation: f64,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario) -> Self {
        let (n, p, m) = match scenario {
            Scenario::Highdim52 => (10_000, 100, 1),
            _ => (200, 10, 10),
        };
        ScenarioSpec {
            scenario,
            n,
            p,
            m,
            seed: 1,
            correlation: 0.6,
        }
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn with_p(mut self, p: usize) -> Self {
        self.p = p;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(
                "scenario needs at least two observations".into(),
            ));
        }
        match self.scenario {
            Scenario::Highdim52 => {
                if self.p < 7 || self.m != 1 {
                    return Err(Error::Config(
                        "highdim_5_2 needs p >= 7 and one covariate".into(),
                    ));
                }
            }
            _ => {
                if self.p != 10 || self.m != 10 {
                    return Err(Error::Config(format!(
                        "{} is defined for p = 10 exposures and m = 10 covariates",
                        self.scenario
                    )));
                }
                if !(0.0..1.0).contains(&self.correlation) {
                    return Err(Error::Config("correlation must lie in [0, 1)".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SimulatedData {
    pub dataset: Dataset,
    /// Exposure part of the mean, `f(X_i)`.
    pub f_true: Vec<f64>,
    /// Active sets of the generating model (0-based indices).
    pub true_sets: Vec<ExposureSet>,
    pub beta_c: Vec<f64>,
}

/// Covariate coefficients of the polynomial-design scenarios.
pub const BETA_C: [f64; 10] = [0.2, 0.3, 0.0, 0.4, -0.2, -0.3, -0.1, -0.5, 0.3, 0.25];

/// Exposure means are `C * ALPHA`; rows index covariates, columns exposures.
pub const ALPHA: [[f64; 10]; 10] = [
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.1],
    [0.3, -0.2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.4, 0.2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, -0.3, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.6, 0.4, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, -0.1, -0.3, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, -0.3, -0.15, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.45, 0.1, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5, -0.2, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -0.2, 0.2],
];

/// Mean map for the increased-correlation scenario: the base map scaled by
/// 1.5, plus a third covariate for exposure `j` at row `(j + 2) mod 10`
/// with weight `±0.45`, alternating in sign.
pub fn alpha_corr_increase() -> [[f64; 10]; 10] {
    let mut a = ALPHA;
    for row in a.iter_mut() {
        for v in row.iter_mut() {
            *v *= 1.5;
        }
    }
    for j in 0..10 {
        a[(j + 2) % 10][j] = if j % 2 == 0 { 0.45 } else { -0.45 };
    }
    a
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// `f` of the polynomial-design scenarios at one exposure row.
pub fn true_f(scenario: Scenario, x: &[f64]) -> f64 {
    use std::f64::consts::PI;
    match scenario {
        Scenario::Polynomial51 | Scenario::CorrIncreaseB2 => {
            0.7 * x[1] * x[2] + 0.6 * x[3] * x[3] * x[4]
        }
        Scenario::NonlinearMainB3 => {
            0.8 * (PI * x[0]).sin() + 0.4 * (x[2] * x[2] - 0.5) + 0.2 * x[3].exp() + 0.6 * x[4]
        }
        Scenario::Null => 0.0,
        Scenario::Highdim52 => {
            2.5 * (PI * x[0] * x[1]).sin()
                + 1.5 * (PI * (x[2] * x[3] + x[4])).cos()
                + 2.0 * (x[5] - 0.5)
                + 2.5 * x[6]
        }
    }
}

pub fn true_sets(scenario: Scenario) -> Vec<ExposureSet> {
    let s = |v: &[usize]| ExposureSet::from_indices(v.iter().copied());
    match scenario {
        Scenario::Polynomial51 | Scenario::CorrIncreaseB2 => vec![s(&[1, 2]), s(&[3, 4])],
        Scenario::NonlinearMainB3 => vec![s(&[0]), s(&[2]), s(&[3]), s(&[4])],
        Scenario::Null => Vec::new(),
        Scenario::Highdim52 => vec![s(&[0, 1]), s(&[2, 3, 4]), s(&[5]), s(&[6])],
    }
}

/// Draws one dataset. Residual variance is 1 in every scenario.
pub fn generate<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<SimulatedData> {
    spec.validate()?;
    let (n, p, m) = (spec.n, spec.p, spec.m);
    let c = DMatrix::from_fn(n, m, |_, _| normal(rng));
    let (x, beta_c) = if spec.scenario == Scenario::Highdim52 {
        let unif = Uniform::new(0.0, 1.0).expect("valid range");
        (
            DMatrix::from_fn(n, p, |_, _| rng.sample(unif)),
            vec![0.0; m],
        )
    } else {
        let alpha = if spec.scenario == Scenario::CorrIncreaseB2 {
            alpha_corr_increase()
        } else {
            ALPHA
        };
        let alpha = DMatrix::from_fn(m, p, |r, col| alpha[r][col]);
        let shared = spec.correlation.sqrt();
        let own = (1.0 - spec.correlation).sqrt();
        let mut x = &c * alpha;
        for i in 0..n {
            let common = normal(rng);
            for j in 0..p {
                x[(i, j)] += shared * common + own * normal(rng);
            }
        }
        (x, BETA_C.to_vec())
    };
    let mut f_true = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut row = vec![0.0; p];
    for i in 0..n {
        for (j, v) in row.iter_mut().enumerate() {
            *v = x[(i, j)];
        }
        let f = true_f(spec.scenario, &row);
        let cb: f64 = (0..m).map(|l| c[(i, l)] * beta_c[l]).sum();
        f_true.push(f);
        y.push(f + cb + normal(rng));
    }
    Ok(SimulatedData {
        dataset: Dataset::new(y, x, c),
        f_true,
        true_sets: true_sets(spec.scenario),
        beta_c,
    })
}
