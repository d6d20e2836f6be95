#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tvvar::irf::{identify, CompanionForm, Scheme};
use tvvar::linalg::{unvech, vech, Matrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| r.sample::<f64, _>(StandardNormal))
}

/// Lag blocks rescaled so the companion radius is at most `target`.
pub fn stable_blocks(r: &mut ChaCha8Rng, d: usize, p: usize, target: f64) -> Vec<Matrix> {
    let mut blocks: Vec<Matrix> = (0..p).map(|_| normal_matrix(r, d, d) * 0.4).collect();
    let radius = CompanionForm::new(&blocks).unwrap().radius;
    if radius > target {
        // scaling lag j by s^j scales every companion eigenvalue by s
        let s = target / radius;
        for (j, b) in blocks.iter_mut().enumerate() {
            *b *= s.powi(j as i32 + 1);
        }
    }
    blocks
}

pub fn random_pd(r: &mut ChaCha8Rng, d: usize) -> Matrix {
    let g = normal_matrix(r, d, d);
    &g * g.transpose() + Matrix::identity(d, d) * 0.5
}

/// `vec B_j` through the full identification map, parametrized by
/// `vec [A_1..A_p]` and `vech Ω`.
pub fn response_map(scheme: Scheme, d: usize, p: usize, j: usize, alpha: &[f64], vo: &[f64]) -> Vec<f64> {
    let blocks: Vec<Matrix> = (0..p)
        .map(|k| Matrix::from_column_slice(d, d, &alpha[k * d * d..(k + 1) * d * d]))
        .collect();
    let omega = unvech(&tvvar::linalg::Vector::from_column_slice(vo), d);
    let id = identify(scheme, &blocks, &omega, 0.5).unwrap();
    let psi = id.comp.vma(j);
    let b = &psi[j] * &id.impact;
    b.as_slice().to_vec()
}

/// Central differences of `response_map`; returns `(d(vec B)/dα, d(vec B)/dvech Ω)`.
pub fn fd_gradients(scheme: Scheme, blocks: &[Matrix], omega: &Matrix, j: usize, step: f64) -> (Matrix, Matrix) {
    let d = omega.nrows();
    let p = blocks.len();
    let alpha: Vec<f64> = blocks.iter().flat_map(|b| b.as_slice().to_vec()).collect();
    let vo: Vec<f64> = vech(omega).unwrap().iter().copied().collect();
    let dd = d * d;
    let mut ga = Matrix::zeros(dd, alpha.len());
    for k in 0..alpha.len() {
        let mut up = alpha.clone();
        let mut dn = alpha.clone();
        up[k] += step;
        dn[k] -= step;
        let fu = response_map(scheme, d, p, j, &up, &vo);
        let fd = response_map(scheme, d, p, j, &dn, &vo);
        for r in 0..dd {
            ga[(r, k)] = (fu[r] - fd[r]) / (2.0 * step);
        }
    }
    let mut go = Matrix::zeros(dd, vo.len());
    for k in 0..vo.len() {
        let mut up = vo.clone();
        let mut dn = vo.clone();
        up[k] += step;
        dn[k] -= step;
        let fu = response_map(scheme, d, p, j, &alpha, &up);
        let fd = response_map(scheme, d, p, j, &alpha, &dn);
        for r in 0..dd {
            go[(r, k)] = (fu[r] - fd[r]) / (2.0 * step);
        }
    }
    (ga, go)
}

/// Max absolute difference scaled by the largest analytic entry.
pub fn rel_err(analytic: &Matrix, numeric: &Matrix) -> f64 {
    let scale = analytic.abs().max().max(numeric.abs().max()).max(1e-12);
    (analytic - numeric).abs().max() / scale
}

/// `Ψ_j = Σ_{i=1..min(j,p)} A_i Ψ_{j-i}`.
pub fn vma_recursion(blocks: &[Matrix], horizons: usize) -> Vec<Matrix> {
    let d = blocks[0].nrows();
    let mut psi = vec![Matrix::identity(d, d)];
    for j in 1..=horizons {
        let mut acc = Matrix::zeros(d, d);
        for i in 1..=j.min(blocks.len()) {
            acc += &blocks[i - 1] * &psi[j - i];
        }
        psi.push(acc);
    }
    psi
}

/// Response of the frozen VAR to a one-time unit structural shock in
/// innovation `k`, obtained by running the recursion forward.
pub fn unit_shock_path(blocks: &[Matrix], impact: &Matrix, k: usize, horizons: usize) -> Vec<Vec<f64>> {
    let d = impact.nrows();
    let p = blocks.len();
    let mut hist: Vec<Vec<f64>> = vec![vec![0.0; d]; p];
    let mut out = Vec::new();
    for n in 0..=horizons {
        let mut x = vec![0.0; d];
        for (i, b) in blocks.iter().enumerate() {
            let lag = &hist[hist.len() - 1 - i];
            for r in 0..d {
                for c in 0..d {
                    x[r] += b[(r, c)] * lag[c];
                }
            }
        }
        if n == 0 {
            for r in 0..d {
                x[r] += impact[(r, k)];
            }
        }
        hist.push(x.clone());
        out.push(x);
    }
    out
}
