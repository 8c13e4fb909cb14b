use mixsel_core::basis::SplineSpec;
use mixsel_core::sampler::block::*;
use mixsel_core::sampler::design::{DesignCache, Layout};
use mixsel_core::ExposureSet;
use nalgebra::DMatrix;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn setup() -> (DMatrix<f64>, DesignCache, SplineSpec) {
    let x = DMatrix::from_fn(60, 2, |i, j| ((i * (3 + j) * 17) % 59) as f64 / 10.0);
    let spec = SplineSpec::fit(&x, 2).unwrap();
    let cache = DesignCache::new(&spec, &x);
    (x, cache, spec)
}

#[test]
fn log_ratio_matches_dense_gaussian_marginal() {
    let (x, mut cache, spec) = setup();
    let set = ExposureSet::from_indices([0, 1]);
    let cols: Vec<_> = spec
        .design_for_set(set, &x)
        .unwrap()
        .into_iter()
        .flat_map(|b| {
            b.columns
                .column_iter()
                .map(|c| c.into_owned())
                .collect::<Vec<_>>()
        })
        .collect();
    let xm = DMatrix::from_columns(&cols);
    let y = DVector::from_fn(60, |i, _| (i as f64 * 0.3).sin());
    let (s2, sb2) = (0.7, 2.5);
    let post = BlockPosterior::evaluate(&mut cache, &[set], &y, s2, sb2).unwrap();
    // Oracle: log N(y; 0, s2 (I + sb2 X X^T)) - log N(y; 0, s2 I).
    let n = 60;
    let cov = (DMatrix::identity(n, n) + &xm * xm.transpose() * sb2) * s2;
    let ch = cov.clone().cholesky().unwrap();
    let logdet: f64 = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let quad = y.dot(&ch.solve(&y));
    let marg = -0.5 * logdet - 0.5 * quad;
    let null = -0.5 * n as f64 * s2.ln() - 0.5 * y.dot(&y) / s2;
    assert!((post.log_ratio - (marg - null)).abs() < 1e-8);
}

#[test]
fn draws_have_posterior_moments() {
    let (_, mut cache, _) = setup();
    let set = ExposureSet::singleton(0);
    let y = DVector::from_fn(60, |i, _| (i as f64 * 0.1).cos());
    let post = BlockPosterior::evaluate(&mut cache, &[set], &y, 1.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draws: Vec<DVector<f64>> = (0..20000).map(|_| post.draw(&mut rng)).collect();
    let mean = draws.iter().fold(DVector::zeros(2), |a, d| a + d) / 20000.0;
    assert!((&mean - post.mean()).abs().max() < 0.01);
    let g = cache.gram(&Layout::new(&[set], 2)) + DMatrix::identity(2, 2);
    let cov = g.try_inverse().unwrap();
    let emp = draws.iter().fold(DMatrix::zeros(2, 2), |a, d| {
        a + (d - &mean) * (d - &mean).transpose()
    }) / 20000.0;
    assert!((emp - cov).abs().max() < 0.002);
}

#[test]
fn empty_block_has_zero_ratio() {
    let (_, mut cache, _) = setup();
    let y = DVector::zeros(60);
    let post = BlockPosterior::evaluate(&mut cache, &[], &y, 1.0, 1.0).unwrap();
    assert_eq!(post.log_ratio, 0.0);
}

fn dense_log_ratio(xm: &DMatrix<f64>, y: &DVector<f64>, s2: f64, sb2: f64) -> f64 {
    let n = y.len();
    let cov = DMatrix::identity(n, n) + xm * xm.transpose() * sb2;
    let ch = cov.cholesky().unwrap();
    let logdet: f64 = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * logdet - 0.5 * (y.dot(&ch.solve(y)) - y.dot(y)) / s2
}

#[test]
fn near_collinear_blocks_stay_finite() {
    let n = 80;
    let x = DMatrix::from_fn(n, 2, |i, j| {
        let t = (i as f64 * 0.37).sin() * 3.0 + i as f64 * 0.01;
        t + j as f64 * 1e-5 * (i as f64 * 1.7).cos()
    });
    let spec = SplineSpec::fit(&x, 1).unwrap();
    let mut cache = DesignCache::new(&spec, &x);
    let y = DVector::from_fn(n, |i, _| x[(i, 0)] * 0.5 + (i as f64 * 0.9).sin());
    let pair = ExposureSet::from_indices([0, 1]);
    for sb2 in [1e2, 1e5, 1e8] {
        let layout = Layout::new(&[pair], 1);
        let mut a = cache.gram(&layout);
        for i in 0..layout.width {
            a[(i, i)] += 1.0 / sb2;
        }
        let ev = a.symmetric_eigenvalues();
        let cond = ev.max() / ev.min();
        let z_pair = mixsel_core::ZetaMatrix::from_sets(2, vec![pair]).unwrap();
        let z_one = mixsel_core::ZetaMatrix::from_sets(2, vec![ExposureSet::singleton(0)]).unwrap();
        let lp =
            |c: &mut DesignCache, z| zeta_block_log_prob(c, z, &[0], &y, 0.8, sb2, &[0.3]).unwrap();
        let diff = lp(&mut cache, &z_pair) - lp(&mut cache, &z_one);
        assert!(diff.is_finite(), "cond {cond:e}");
        let post = BlockPosterior::evaluate(&mut cache, &[pair], &y, 0.8, sb2).unwrap();
        let cols: Vec<_> = spec
            .design_for_set(pair, &x)
            .unwrap()
            .into_iter()
            .flat_map(|b| {
                b.columns
                    .column_iter()
                    .map(|c| c.into_owned())
                    .collect::<Vec<_>>()
            })
            .collect();
        let oracle = dense_log_ratio(&DMatrix::from_columns(&cols), &y, 0.8, sb2);
        assert!(
            (post.log_ratio - oracle).abs() < 1e-6 * (1.0 + oracle.abs()),
            "cond {cond:e}"
        );
        if sb2 == 1e8 {
            assert!(cond > 1e9, "cond {cond:e}");
        }
    }
}
