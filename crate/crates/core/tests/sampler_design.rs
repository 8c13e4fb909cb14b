use mixsel_core::basis::SplineSpec;
use mixsel_core::sampler::design::*;
use mixsel_core::ExposureSet;
use nalgebra::{DMatrix, DVector};

#[test]
fn gram_and_xt_match_explicit_design() {
    let x = DMatrix::from_fn(40, 3, |i, j| {
        ((i * (j + 2) * 37) % 41) as f64 + 0.3 * j as f64
    });
    let spec = SplineSpec::fit(&x, 2).unwrap();
    let mut cache = DesignCache::new(&spec, &x);
    let sets = [
        ExposureSet::from_indices([0, 1]),
        ExposureSet::from_indices([2]),
    ];
    let layout = Layout::new(&sets, 2);
    assert_eq!(layout.width, 8 + 2);
    let mut cols = Vec::new();
    for s in sets {
        for b in spec.design_for_set(s, &x).unwrap() {
            cols.extend(b.columns.column_iter().map(|c| c.into_owned()));
        }
    }
    let full = DMatrix::from_columns(&cols);
    let g = cache.gram(&layout);
    assert!((g - full.tr_mul(&full)).abs().max() < 1e-9);
    let r = DVector::from_fn(40, |i, _| (i as f64).sin());
    assert!((cache.xt_vec(&layout, &r) - full.tr_mul(&r)).abs().max() < 1e-9);
    let beta: Vec<f64> = (0..8).map(|i| i as f64 * 0.1).collect();
    let f = cache.fitted(sets[0], &beta);
    let expect = full.columns(0, 8) * DVector::from_column_slice(&beta);
    assert!((f - expect).abs().max() < 1e-9);
}
