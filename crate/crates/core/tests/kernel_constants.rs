use tvvar::kernel::{adaptive_simpson, autoconvolution, cb_by_refinement, epanechnikov, local_linear_weights};
use tvvar::KernelSpec;

#[test]
fn epanechnikov_moments_match_closed_forms() {
    let k = KernelSpec::epanechnikov();
    assert!((k.c2() - 0.2).abs() < 1e-9);
    assert!((k.v0() - 0.6).abs() < 1e-9);
    assert!((k.moment(2, true).unwrap() - 3.0 / 35.0).abs() < 1e-9);
    assert!((k.moment(0, false).unwrap() - 1.0).abs() < 1e-12);
    assert!(k.moment(1, false).unwrap().abs() < 1e-12);
    // C_B for the Epanechnikov kernel is 167/770 in closed form
    assert!((k.cb() - 167.0 / 770.0).abs() < 1e-8, "{}", k.cb());
}

#[test]
fn cb_is_stable_under_refinement() {
    let (cb, change) = cb_by_refinement(&epanechnikov);
    assert!(change < 1e-8);
    assert!((cb - 167.0 / 770.0).abs() < 1e-8);
}

#[test]
fn autoconvolution_closed_form() {
    // ∫ K(u) K(u+v) du for Epanechnikov on 0 ≤ v ≤ 2
    let exact = |v: f64| 9.0 / 16.0 * (16.0 / 15.0 - 4.0 / 3.0 * v * v + 2.0 / 3.0 * v.powi(3) - v.powi(5) / 30.0);
    for v in [0.0, 0.3, 1.0, 1.7, 2.0] {
        assert!((autoconvolution(&epanechnikov, v) - exact(v)).abs() < 1e-10, "v={v}");
    }
}

#[test]
fn simpson_integrates_polynomials() {
    let f = |x: f64| 3.0 * x * x - x + 2.0;
    assert!((adaptive_simpson(&f, -1.0, 2.0, 1e-12) - 13.5).abs() < 1e-12);
}

#[test]
fn local_linear_weights_reproduce_linear_functions() {
    let k = KernelSpec::epanechnikov();
    let t = 300;
    for (tau, h) in [(0.0, 0.2), (0.05, 0.3), (0.5, 0.1), (1.0, 0.25)] {
        let w = local_linear_weights(&k, t, tau, h).unwrap();
        let dense = w.dense();
        let s0: f64 = dense.iter().sum::<f64>() / t as f64;
        let s1: f64 = dense.iter().enumerate().map(|(i, w)| w * ((i + 1) as f64 / t as f64 - tau)).sum::<f64>() / t as f64;
        assert!((s0 - 1.0).abs() < 1e-12, "tau={tau}");
        assert!(s1.abs() < 1e-13, "tau={tau}");
    }
}
