mod common;

use common::*;
use tvvar::irf::{cumulative_irf, gradient_blocks, identify, irf_covariance, irf_point, CompanionForm, Scheme};
use tvvar::estimate::{GridPoint, LocalEstimate};
use tvvar::linalg::{strict_upper_selector, vec, Matrix};

fn check_gradients(scheme: Scheme, seed: u64) -> f64 {
    let mut r = rng(seed);
    let d = 2 + (seed % 2) as usize;
    let p = 1 + ((seed / 2) % 2) as usize;
    let blocks = stable_blocks(&mut r, d, p, 0.8);
    let omega = random_pd(&mut r, d);
    let id = identify(scheme, &blocks, &omega, 0.5).unwrap();
    let psi = id.comp.vma(5);
    let g = gradient_blocks(&id, &psi, 5).unwrap();
    let mut worst = 0.0_f64;
    for j in [0usize, 1, 2, 5] {
        let (ga, go) = fd_gradients(scheme, &blocks, &omega, j, 1e-6);
        let c1 = g[j].c1.columns(d, d * d * p).into_owned();
        assert!(g[j].c1.columns(0, d).iter().all(|v| *v == 0.0));
        worst = worst.max(rel_err(&c1, &ga)).max(rel_err(&g[j].c2, &go));
    }
    worst
}

#[test]
fn short_run_gradients_match_finite_differences() {
    for seed in 0..20 {
        let e = check_gradients(Scheme::ShortRun, seed);
        assert!(e < 1e-5, "seed {seed}: {e}");
    }
}

#[test]
fn long_run_gradients_match_finite_differences() {
    for seed in 100..120 {
        let e = check_gradients(Scheme::LongRun, seed);
        assert!(e < 1e-4, "seed {seed}: {e}");
    }
}

#[test]
fn companion_vma_matches_recursion_and_unit_shocks() {
    for seed in 0..30 {
        let mut r = rng(500 + seed);
        let d = 1 + (seed % 3) as usize;
        let p = 1 + (seed % 4) as usize;
        let blocks = stable_blocks(&mut r, d, p, 0.9);
        let comp = CompanionForm::new(&blocks).unwrap();
        let a = comp.vma(20);
        let b = vma_recursion(&blocks, 20);
        for j in 0..=20 {
            assert!((&a[j] - &b[j]).abs().max() < 1e-10);
        }
        let omega = random_pd(&mut r, d);
        let id = identify(Scheme::ShortRun, &blocks, &omega, 0.5).unwrap();
        for k in 0..d {
            let path = unit_shock_path(&blocks, &id.impact, k, 20);
            for n in 0..=20 {
                let bn = &a[n] * &id.impact;
                for row in 0..d {
                    assert!((path[n][row] - bn[(row, k)]).abs() < 1e-10);
                }
            }
        }
    }
}

#[test]
fn identification_reconstructs_omega_and_zeroes_upper_long_run() {
    for seed in 0..30 {
        let mut r = rng(900 + seed);
        let d = 2 + (seed % 3) as usize;
        let blocks = stable_blocks(&mut r, d, 2, 0.85);
        let omega = random_pd(&mut r, d);
        for scheme in [Scheme::ShortRun, Scheme::LongRun] {
            let id = identify(scheme, &blocks, &omega, 0.5).unwrap();
            let back = &id.impact * id.impact.transpose();
            assert!((back - &omega).norm() / omega.norm() < 1e-10);
        }
        let id = identify(Scheme::LongRun, &blocks, &omega, 0.5).unwrap();
        let qb = strict_upper_selector(d) * vec(id.long_run.as_ref().unwrap());
        assert!(qb.iter().all(|v| v.abs() < 1e-12));
    }
}

fn point(blocks: &[Matrix], omega: &Matrix) -> GridPoint {
    let d = omega.nrows();
    let mut coef = Matrix::zeros(d, 1 + d * blocks.len());
    for (j, b) in blocks.iter().enumerate() {
        coef.view_mut((0, 1 + j * d), (d, d)).copy_from(b);
    }
    GridPoint {
        tau: 0.5,
        coef: LocalEstimate {
            tau: 0.5,
            deriv: coef.clone() * 0.0,
            coef,
        },
        omega: omega.clone(),
        omega_pd: true,
        sigma: Matrix::identity(1 + d * blocks.len(), 1 + d * blocks.len()),
        sigma_singular: false,
    }
}

#[test]
fn schemes_coincide_without_lag_dynamics() {
    let mut r = rng(4);
    let omega = random_pd(&mut r, 3);
    let gp = point(&[Matrix::zeros(3, 3), Matrix::zeros(3, 3)], &omega);
    let nv = 9 * 2 + 3 + 6;
    let g = normal_matrix(&mut r, nv, nv);
    let v = &g * g.transpose();
    let s = irf_point(Scheme::ShortRun, &gp, Some(&v), 6, 400, 0.3).unwrap();
    let l = irf_point(Scheme::LongRun, &gp, Some(&v), 6, 400, 0.3).unwrap();
    for j in 0..=6 {
        assert!((&s.responses[j] - &l.responses[j]).abs().max() < 1e-12);
        assert!((&s.gradients[j].c2 - &l.gradients[j].c2).abs().max() < 1e-12);
    }
}

#[test]
fn covariance_is_symmetric_and_cumulative_sums_blocks() {
    let mut r = rng(77);
    let blocks = stable_blocks(&mut r, 2, 2, 0.7);
    let omega = random_pd(&mut r, 2);
    let gp = point(&blocks, &omega);
    let nv = 4 * 2 + 2 + 3;
    let g = normal_matrix(&mut r, nv, nv);
    let v = &g * g.transpose();
    let ip = irf_point(Scheme::ShortRun, &gp, Some(&v), 3, 400, 0.3).unwrap();
    for c in &ip.cov {
        assert!((c - c.transpose()).norm() < 1e-12);
    }
    let cum = cumulative_irf(&ip, Some(&v), 1, 400, 0.3).unwrap();
    assert_eq!(cum.responses[0], ip.responses[0]);
    // naive assembly of the summed gradient
    let c0 = ip.gradients[0].stacked();
    let c1 = ip.gradients[1].stacked();
    let c = &c0 + &c1;
    let naive = &c * &v * c.transpose();
    assert!((&cum.cov[1] - naive).abs().max() < 1e-10 * cum.cov[1].abs().max());
    assert!((&ip.cov[0] - irf_covariance(&ip.gradients[0], &v)).abs().max() == 0.0);
}

#[test]
fn scalar_cumulative_response_converges_to_long_run() {
    let a = Matrix::from_element(1, 1, 0.6);
    let omega = Matrix::from_element(1, 1, 4.0);
    let gp = point(&[a], &omega);
    let ip = irf_point(Scheme::ShortRun, &gp, None, 80, 400, 0.3).unwrap();
    let cum = cumulative_irf(&ip, None, 80, 400, 0.3).unwrap();
    assert!((cum.responses[80][(0, 0)] - 2.0 / 0.4).abs() < 1e-12);
}
