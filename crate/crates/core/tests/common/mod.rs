//! Shared fixtures: a two-exposure toy problem whose posterior over
//! inclusion matrices is computed by brute-force enumeration.
#![allow(clippy::needless_range_loop)]
#![allow(dead_code)]

use mixsel_core::basis::SplineSpec;
use mixsel_core::data::PreparedData;
use mixsel_core::{validate_dataset, Dataset, ExposureSet, PriorConfig, ZetaMatrix};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

pub struct Toy {
    pub data: PreparedData,
    pub spec: SplineSpec,
    pub prior: PriorConfig,
}

/// n = 50, p = 2, one covariate, linear signal in the first exposure and a
/// weaker product term.
pub fn toy(seed: u64) -> Toy {
    let n = 50;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut x = DMatrix::zeros(n, 2);
    let mut c = DMatrix::zeros(n, 1);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b, e) = (z(), z(), z());
        x[(i, 0)] = a;
        x[(i, 1)] = 0.3 * a + (1.0 - 0.09f64).sqrt() * b;
        c[(i, 0)] = e;
    }
    for i in 0..n {
        let (x1, x2) = (x[(i, 0)], x[(i, 1)]);
        y.push(0.5 + 0.35 * x1 + 0.2 * x1 * x2 + 0.3 * c[(i, 0)] + z());
    }
    let ds = validate_dataset(Dataset::new(y, x, c)).unwrap();
    let data = PreparedData::new(&ds);
    let spec = SplineSpec::fit(&data.x_raw, 1).unwrap();
    let prior = PriorConfig {
        m_shape: 3.0,
        gamma: 2.0,
        a0: 1.0,
        b0: 1.0,
        k: 2,
        sigma_beta2: 1.0,
        beta_c_prior_variance: 100.0,
    };
    Toy { data, spec, prior }
}

/// All `p × k` inclusion matrices whose nonempty active sets are pairwise
/// not nested.
pub fn enumerate_valid(p: usize, k: usize) -> Vec<ZetaMatrix> {
    let mut out = Vec::new();
    let per = 1u32 << p;
    for code in 0..per.pow(k as u32) {
        let sets: Vec<ExposureSet> = (0..k)
            .map(|h| {
                let bits = (code / per.pow(h as u32)) % per;
                ExposureSet::from_indices((0..p).filter(|j| bits >> j & 1 == 1))
            })
            .collect();
        let ok = (0..k).all(|a| {
            (0..k).all(|b| {
                a == b
                    || sets[a].is_empty()
                    || sets[b].is_empty()
                    || !sets[a].to_vec().iter().all(|j| sets[b].contains(*j))
            })
        });
        if ok {
            out.push(ZetaMatrix::from_sets(p, sets).unwrap());
        }
    }
    out
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Exposure design of `zeta`: every block of every active function.
pub fn design(toy: &Toy, zeta: &ZetaMatrix) -> DMatrix<f64> {
    let n = toy.data.n();
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for set in zeta.active_sets() {
        if set.is_empty() {
            continue;
        }
        for block in toy.spec.design_for_set(*set, &toy.data.x_raw).unwrap() {
            cols.extend(block.columns.column_iter().map(|c| c.into_owned()));
        }
    }
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// `log p(y | zeta)` with coefficients and inclusion probabilities
/// integrated analytically and the residual variance by quadrature.
pub fn log_evidence(toy: &Toy, zeta: &ZetaMatrix) -> f64 {
    let n = toy.data.n();
    let x = design(toy, zeta);
    let c = &toy.data.c_design;
    // Cov(y) = s2 * A + B with A = I + sb2 X X', B = vc C C'.
    let a = DMatrix::identity(n, n) + &x * x.transpose() * toy.prior.sigma_beta2;
    let b = c * c.transpose() * toy.prior.beta_c_prior_variance;
    let la = a.clone().cholesky().unwrap();
    let l = la.l();
    let linv = l.clone().try_inverse().unwrap();
    let m = &linv * b * linv.transpose();
    let eig = SymmetricEigen::new((&m + m.transpose()) * 0.5);
    let w = eig.eigenvectors.transpose() * (&linv * &toy.data.y);
    let log_det_a: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let (a0, b0) = (toy.prior.a0, toy.prior.b0);
    let (lo, hi, steps) = (-8.0, 6.0, 6000);
    let dt = (hi - lo) / steps as f64;
    let terms: Vec<f64> = (0..=steps)
        .map(|i| {
            let t = lo + dt * i as f64;
            let s2 = t.exp();
            let mut log_det = log_det_a;
            let mut quad = 0.0;
            for (lam, wi) in eig.eigenvalues.iter().zip(w.iter()) {
                let v = s2 + lam.max(0.0);
                log_det += v.ln();
                quad += wi * wi / v;
            }
            let loglik = -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + quad);
            // Inverse-gamma prior on s2 with the log-scale Jacobian.
            let log_prior = a0 * b0.ln() - ln_gamma(a0) - (a0 + 1.0) * t - b0 / s2 + t;
            let trap: f64 = if i == 0 || i == steps { 0.5 } else { 1.0 };
            loglik + log_prior + trap.ln()
        })
        .collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + dt.ln()
}

/// Log prior of `zeta` with the Beta inclusion probabilities integrated out.
pub fn log_zeta_prior(toy: &Toy, zeta: &ZetaMatrix) -> f64 {
    let p = zeta.p() as f64;
    let (m, g) = (toy.prior.m_shape, toy.prior.gamma);
    zeta.active_sets()
        .iter()
        .map(|s| {
            let a = s.len() as f64;
            ln_beta(m + a, g + p - a) - ln_beta(m, g)
        })
        .sum()
}

/// Normalized posterior over every valid inclusion matrix.
pub fn exact_posterior(toy: &Toy) -> Vec<(ZetaMatrix, f64)> {
    let states = enumerate_valid(toy.data.p(), toy.prior.k);
    let lw: Vec<f64> = states
        .iter()
        .map(|z| log_evidence(toy, z) + log_zeta_prior(toy, z))
        .collect();
    let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = lw.iter().map(|v| (v - max).exp()).sum();
    states
        .into_iter()
        .zip(lw)
        .map(|(z, v)| (z, (v - max).exp() / total))
        .collect()
}

/// Main-effect and pairwise inclusion probabilities of a distribution over
/// inclusion matrices.
pub fn pips(dist: &[(ZetaMatrix, f64)], p: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut main = vec![0.0; p];
    let mut pair = vec![vec![0.0; p]; p];
    for (z, w) in dist {
        for i in 0..p {
            if z.active_sets().iter().any(|s| s.contains(i)) {
                main[i] += w;
            }
            for j in 0..p {
                if z.active_sets()
                    .iter()
                    .any(|s| s.contains(i) && s.contains(j))
                {
                    pair[i][j] += w;
                }
            }
        }
    }
    (main, pair)
}

/// Empirical distribution of sampled inclusion matrices over `states`.
pub fn empirical(states: &[ZetaMatrix], draws: &[&ZetaMatrix]) -> Vec<(ZetaMatrix, f64)> {
    let n = draws.len() as f64;
    states
        .iter()
        .map(|s| {
            (
                s.clone(),
                draws.iter().filter(|d| **d == s).count() as f64 / n,
            )
        })
        .collect()
}

pub fn total_variation(a: &[(ZetaMatrix, f64)], b: &[(ZetaMatrix, f64)]) -> f64 {
    a.iter()
        .zip(b)
        .map(|((_, x), (_, y))| (x - y).abs())
        .sum::<f64>()
        / 2.0
}

/// Monte Carlo estimate and standard error of the probability that none of
/// `k` independent functions has active set exactly `{0, .., j-1}`, with
/// `tau ~ Beta(m, g)` and independent Bernoulli(tau) entries.
pub fn lemma_monte_carlo(
    j: usize,
    p: usize,
    k: usize,
    m: f64,
    g: f64,
    draws: usize,
    seed: u64,
) -> (f64, f64) {
    use rand::Rng;
    let beta = rand_distr::Beta::new(m, g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut absent = 0usize;
    for _ in 0..draws {
        let hit = (0..k).any(|_| {
            let tau: f64 = beta.sample(&mut rng);
            // Stop at the first entry that breaks the pattern.
            (0..p).all(|i| rng.random_bool(tau) == (i < j))
        });
        if !hit {
            absent += 1;
        }
    }
    let est = absent as f64 / draws as f64;
    (est, (est * (1.0 - est) / draws as f64).sqrt())
}
