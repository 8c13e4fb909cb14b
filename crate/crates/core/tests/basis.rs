use mixsel_core::basis::*;
use mixsel_core::types::coefficient_count;
use mixsel_core::{Error, ExposureSet};
use nalgebra::DMatrix;

fn grid(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

#[test]
fn linear_case_is_standardized_column() {
    let x = vec![3.0, 1.0, 4.0, 1.5, 9.0, 2.6];
    let b = natural_spline_basis(&x, 1).unwrap();
    assert_eq!(b.ncols(), 1);
    let mean = x.iter().sum::<f64>() / 6.0;
    let ratio = b[(0, 0)] / (x[0] - mean);
    for i in 0..6 {
        assert!((b[(i, 0)] - ratio * (x[i] - mean)).abs() < 1e-12);
    }
    assert!(ratio > 0.0);
}

#[test]
fn columns_are_centered_and_whitened() {
    let x: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
    for d in 1..=5 {
        let b = natural_spline_basis(&x, d).unwrap();
        let cov = b.tr_mul(&b) / 200.0;
        for r in 0..d {
            assert!(b.column(r).sum().abs() < 1e-9);
            for c in 0..d {
                let target = if r == c { 1.0 } else { 0.0 };
                assert!((cov[(r, c)] - target).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn natural_linearity_beyond_boundary_knots() {
    // Second divided differences on a fine grid outside [0, 1] vanish.
    let x = grid(100, 0.0, 1.0);
    let spline = MarginalSpline::fit(&x, 3, 0).unwrap();
    let h = 1e-3;
    for (lo, hi) in [(-1.0, -0.01), (1.01, 2.0)] {
        let pts = grid(400, lo, hi);
        let b = spline.eval(&pts);
        for c in 0..3 {
            for i in 1..pts.len() - 1 {
                let step = pts[1] - pts[0];
                let dd = (b[(i + 1, c)] - 2.0 * b[(i, c)] + b[(i - 1, c)]) / (step * step);
                assert!(dd.abs() < 1e-6, "col {c} at {}: {dd}", pts[i]);
            }
        }
    }
    // Inside the boundary knots the basis is genuinely curved.
    let inside = spline.eval(&[0.5 - h, 0.5, 0.5 + h]);
    let curv: f64 = (0..3)
        .map(|c| (inside[(2, c)] - 2.0 * inside[(1, c)] + inside[(0, c)]).abs() / (h * h))
        .sum();
    assert!(curv > 1e-3);
}

#[test]
fn coincident_quantiles_are_rejected() {
    let mut x = vec![0.0; 30];
    x.extend([1.0, 2.0, 3.0]);
    assert!(matches!(
        natural_spline_basis(&x, 4),
        Err(Error::CoincidentKnots { .. })
    ));
    assert!(natural_spline_basis(&x, 1).is_ok());
}

#[test]
fn rejects_degenerate_inputs() {
    assert!(natural_spline_basis(&[2.0, 2.0, 2.0], 2).is_err());
    assert!(natural_spline_basis(&[1.0, 2.0, 3.0], 0).is_err());
}

#[test]
fn tensor_order_matches_definition() {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
    let b = DMatrix::from_row_slice(2, 2, &[5.0, 6.0, 7.0, 8.0]);
    let s = ExposureSet::from_indices([0, 1]);
    let blk = tensor_block(s, &[&a, &b]).unwrap();
    assert_eq!(
        blk.columns,
        DMatrix::from_row_slice(2, 4, &[5.0, 6.0, 10.0, 12.0, 21.0, 24.0, 28.0, 32.0])
    );
    let single = tensor_block(ExposureSet::singleton(3), &[&a]).unwrap();
    assert_eq!(single.columns, a);
    let c = DMatrix::from_element(2, 3, 1.0);
    let three = tensor_block(ExposureSet::from_indices([0, 1, 2]), &[&c, &c, &c]).unwrap();
    assert_eq!(three.columns.ncols(), 27);
    assert!(tensor_block(ExposureSet::EMPTY, &[]).is_err());
}

#[test]
fn design_block_counts() {
    let x = DMatrix::from_fn(60, 4, |i, j| {
        ((i * (j + 3) * 7919) % 61) as f64 + j as f64 * 0.1
    });
    for (d, set, blocks, cols) in [
        (3, vec![0], 1, 3),
        (2, vec![0, 1], 3, 8),
        (3, vec![0, 1, 2], 7, 63),
    ] {
        let spec = SplineSpec::fit(&x, d).unwrap();
        let s = ExposureSet::from_indices(set);
        let design = spec.design_for_set(s, &x).unwrap();
        assert_eq!(design.len(), blocks);
        let total: usize = design.iter().map(|b| b.columns.ncols()).sum();
        assert_eq!(total, cols);
    }
}

#[test]
fn column_count_identity_by_enumeration() {
    let x = DMatrix::from_fn(40, 4, |i, j| {
        ((i * 31 + j * 17) % 41) as f64 + 0.5 * j as f64
    });
    for d in 1..=3 {
        let spec = SplineSpec::fit(&x, d).unwrap();
        for mask in 1u128..16 {
            let s = ExposureSet::from_indices((0..4).filter(|j| mask >> j & 1 == 1));
            let total: usize = spec
                .design_for_set(s, &x)
                .unwrap()
                .iter()
                .map(|b| b.columns.ncols())
                .sum();
            assert_eq!(total, (d + 1).pow(s.len() as u32) - 1);
            assert_eq!(total, coefficient_count(s, d));
        }
    }
}

#[test]
fn linear_design_reproduces_product_interactions() {
    let x = DMatrix::from_fn(30, 3, |i, j| {
        ((i * 13 + j * 7) % 29) as f64 * (j as f64 + 1.0)
    });
    let spec = SplineSpec::fit(&x, 1).unwrap();
    let design = spec
        .design_for_set(ExposureSet::from_indices([0, 1, 2]), &x)
        .unwrap();
    let z: Vec<Vec<f64>> = (0..3)
        .map(|j| {
            let m = &spec.marginals[j];
            (0..30).map(|i| m.eval(&[x[(i, j)]])[(0, 0)]).collect()
        })
        .collect();
    // Blocks: {0},{1},{2},{0,1},{0,2},{1,2},{0,1,2}.
    let last = &design[6].columns;
    for i in 0..30 {
        assert!((design[3].columns[(i, 0)] - z[0][i] * z[1][i]).abs() < 1e-12);
        assert!((last[(i, 0)] - z[0][i] * z[1][i] * z[2][i]).abs() < 1e-12);
    }
}

#[test]
fn evaluation_is_deterministic() {
    let x = DMatrix::from_fn(50, 2, |i, j| ((i * 7 + j) % 13) as f64 + i as f64 * 0.01);
    let a = SplineSpec::fit(&x, 4).unwrap().marginal_designs(&x);
    let b = SplineSpec::fit(&x, 4).unwrap().marginal_designs(&x);
    for (u, v) in a.iter().zip(&b) {
        assert!(u
            .iter()
            .zip(v.iter())
            .all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}
