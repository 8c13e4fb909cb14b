use mixsel_core::diagnostics::*;

#[test]
fn constant_density_has_no_penalty() {
    let c: f64 = 0.3;
    let ll = vec![vec![c.ln(); 4]; 5];
    let w = compute_waic(&ll).unwrap();
    assert_eq!(w.p_waic, 0.0);
    assert!((w.waic - (-2.0 * 4.0 * c.ln())).abs() < 1e-12);
}

#[test]
fn hand_example() {
    let w = compute_waic(&[vec![0.0], vec![1.0]]).unwrap();
    let e = std::f64::consts::E;
    let lppd = ((1.0 + e) / 2.0).ln();
    assert!((w.lppd - lppd).abs() < 1e-15);
    assert!((w.p_waic - 0.5).abs() < 1e-15);
    assert!((w.waic + 2.0 * (lppd - 0.5)).abs() < 1e-15);
}

#[test]
fn waic_needs_two_draws() {
    assert!(compute_waic(&[vec![0.0]]).is_err());
}

#[test]
fn identical_chains_give_one() {
    let a: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
    let r = psr(&[&a, &a]).unwrap();
    assert_eq!(r.value, 1.0);
    assert!(!r.degenerate);
}

#[test]
fn constant_chains_are_degenerate() {
    let a = vec![2.0; 20];
    let r = psr(&[&a, &a]).unwrap();
    assert_eq!(
        r,
        Psr {
            value: 1.0,
            degenerate: true
        }
    );
}

#[test]
fn separated_chains_diverge() {
    let a: Vec<f64> = (0..100).map(|i| 10.0 + (i as f64 * 0.7).sin()).collect();
    let b: Vec<f64> = a.iter().map(|v| v - 20.0).collect();
    assert!(psr(&[&a, &b]).unwrap().value > 1.1);
}
