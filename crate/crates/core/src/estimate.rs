//! Local-linear estimation of the coefficient path `A(τ) = [a, A_1, …, A_p]`,
//! the innovation covariance path `Ω(τ)`, the regressor second moment `Σ(τ)`
//! and the joint covariance `V(τ)` of `[vec Â; vech Ω̂]`.
//!
//! The local normal equations use the Kronecker structure `(S_T(τ) ⊗ I_d)`:
//! only the `2(dp+1)`-dimensional Gram matrix of `z*` is factorized and the
//! `d` equations are solved as right-hand sides.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Result, TvVarError};
use crate::kernel::{local_linear_weights, window, KernelSpec};
use crate::linalg::{self, kron, spd_inverse, vech, vech_len, Matrix, Vector};
use crate::panel::{Design, ObservedPanel};

/// Reciprocal condition cutoff for the local Gram matrix.
pub const RCOND_MIN: f64 = 1e-12;

/// Kernel-weighted sums over one window.
#[derive(Debug, Clone)]
pub(crate) struct LocalSums {
    pub s0: Vec<f64>,
    pub s1: Vec<f64>,
    pub s2: Vec<f64>,
    pub r0: Vec<f64>,
    pub r1: Vec<f64>,
    /// Unnormalized `Σ u^k K_h`, k = 0, 1, 2.
    pub kmass: [f64; 3],
}

pub(crate) fn accumulate(design: &Design, kernel: &KernelSpec, tau: f64, h: f64) -> LocalSums {
    let np = design.packed_len();
    let nr = design.m * design.d;
    let mut sums = LocalSums {
        s0: vec![0.0; np],
        s1: vec![0.0; np],
        s2: vec![0.0; np],
        r0: vec![0.0; nr],
        r1: vec![0.0; nr],
        kmass: [0.0; 3],
    };
    let t_f = design.len as f64;
    for i in window(design.len, tau, h) {
        let x = (i + 1) as f64 / t_f - tau;
        let u = x / h;
        let k = kernel.scaled(x, h);
        if k == 0.0 {
            continue;
        }
        let ku = k * u;
        let ku2 = ku * u;
        sums.kmass[0] += k;
        sums.kmass[1] += ku;
        sums.kmass[2] += ku2;
        let zz = &design.zz[i * np..(i + 1) * np];
        for (((a, b), c), v) in sums
            .s0
            .iter_mut()
            .zip(sums.s1.iter_mut())
            .zip(sums.s2.iter_mut())
            .zip(zz)
        {
            *a += k * v;
            *b += ku * v;
            *c += ku2 * v;
        }
        let zx = &design.zx[i * nr..(i + 1) * nr];
        for ((a, b), v) in sums.r0.iter_mut().zip(sums.r1.iter_mut()).zip(zx) {
            *a += k * v;
            *b += ku * v;
        }
    }
    sums
}

const SWEEP_REFRESH: usize = 32;

/// Power moments `Σ_{j ∈ W} x_j^a v_j` (`x_j = τ_j − τ`) of the design
/// products over the current window.
struct PowerMoments {
    order: usize,
    zz: Vec<Vec<f64>>,
    zx: Vec<Vec<f64>>,
    mass: Vec<f64>,
    binom: Vec<Vec<f64>>,
}

impl PowerMoments {
    fn new(order: usize, np: usize, nr: usize) -> Self {
        let mut binom = vec![vec![0.0; order + 1]; order + 1];
        for a in 0..=order {
            binom[a][0] = 1.0;
            for b in 1..=a {
                binom[a][b] = binom[a - 1][b - 1] + if b < a { binom[a - 1][b] } else { 0.0 };
            }
        }
        PowerMoments {
            order,
            zz: vec![vec![0.0; np]; order + 1],
            zx: vec![vec![0.0; nr]; order + 1],
            mass: vec![0.0; order + 1],
            binom,
        }
    }

    fn clear(&mut self) {
        self.zz.iter_mut().for_each(|v| v.fill(0.0));
        self.zx.iter_mut().for_each(|v| v.fill(0.0));
        self.mass.fill(0.0);
    }

    fn update(&mut self, design: &Design, j: usize, x: f64, sign: f64) {
        let np = design.packed_len();
        let nr = design.m * design.d;
        let zz = &design.zz[j * np..(j + 1) * np];
        let zx = &design.zx[j * nr..(j + 1) * nr];
        let mut xa = sign;
        for a in 0..=self.order {
            for (acc, v) in self.zz[a].iter_mut().zip(zz) {
                *acc += xa * v;
            }
            for (acc, v) in self.zx[a].iter_mut().zip(zx) {
                *acc += xa * v;
            }
            self.mass[a] += xa;
            xa *= x;
        }
    }

    /// Moves the target from `τ` to `τ + δ`, so every `x` becomes `x − δ`.
    fn shift(&mut self, delta: f64) {
        let pw: Vec<f64> = (0..=self.order).map(|k| (-delta).powi(k as i32)).collect();
        let binom = &self.binom;
        let shift_vec = |rows: &mut Vec<Vec<f64>>| {
            for a in (0..rows.len()).rev() {
                for b in 0..a {
                    let c = binom[a][b] * pw[a - b];
                    let (lo, hi) = rows.split_at_mut(a);
                    for (t, s) in hi[0].iter_mut().zip(&lo[b]) {
                        *t += c * s;
                    }
                }
            }
        };
        shift_vec(&mut self.zz);
        shift_vec(&mut self.zx);
        for a in (0..=self.order).rev() {
            for b in 0..a {
                self.mass[a] += binom[a][b] * pw[a - b] * self.mass[b];
            }
        }
    }

    /// Converts to the kernel sums for `K(u) = Σ c_k u^k`.
    fn to_sums(&self, coeffs: &[f64], h: f64, out: &mut LocalSums) {
        let fill = |src: &Vec<Vec<f64>>, dst: &mut Vec<f64>, k: usize| {
            dst.fill(0.0);
            for (j, c) in coeffs.iter().enumerate() {
                if *c == 0.0 {
                    continue;
                }
                let w = c / h.powi((1 + j + k) as i32);
                for (t, s) in dst.iter_mut().zip(&src[j + k]) {
                    *t += w * s;
                }
            }
        };
        fill(&self.zz, &mut out.s0, 0);
        fill(&self.zz, &mut out.s1, 1);
        fill(&self.zz, &mut out.s2, 2);
        fill(&self.zx, &mut out.r0, 0);
        fill(&self.zx, &mut out.r1, 1);
        for k in 0..3 {
            out.kmass[k] = coeffs
                .iter()
                .enumerate()
                .map(|(j, c)| c / h.powi((1 + j + k) as i32) * self.mass[j + k])
                .sum();
        }
    }
}

/// Calls `f(i, sums)` with the kernel sums at every sample point
/// `τ_i = (i+1)/T`, in order. Polynomial kernels are swept with running
/// power moments; other kernels fall back to direct accumulation.
pub(crate) fn for_each_sample_point<F>(design: &Design, kernel: &KernelSpec, h: f64, mut f: F) -> Result<()>
where
    F: FnMut(usize, &mut LocalSums) -> Result<()>,
{
    let t = design.len;
    let t_f = t as f64;
    let Some(coeffs) = kernel.poly_coeffs() else {
        for i in 0..t {
            let mut sums = accumulate(design, kernel, (i + 1) as f64 / t_f, h);
            f(i, &mut sums)?;
        }
        return Ok(());
    };
    let np = design.packed_len();
    let nr = design.m * design.d;
    let mut pm = PowerMoments::new(coeffs.len() + 1, np, nr);
    let mut sums = LocalSums {
        s0: vec![0.0; np],
        s1: vec![0.0; np],
        s2: vec![0.0; np],
        r0: vec![0.0; nr],
        r1: vec![0.0; nr],
        kmass: [0.0; 3],
    };
    let mut cur = 0..0;
    for i in 0..t {
        let tau = (i + 1) as f64 / t_f;
        let w = window(t, tau, h);
        if i % SWEEP_REFRESH == 0 {
            pm.clear();
            for j in w.clone() {
                pm.update(design, j, (j as f64 - i as f64) / t_f, 1.0);
            }
        } else {
            pm.shift(1.0 / t_f);
            for j in cur.start..w.start.min(cur.end) {
                pm.update(design, j, (j as f64 - i as f64) / t_f, -1.0);
            }
            for j in cur.end.max(w.start)..w.end {
                pm.update(design, j, (j as f64 - i as f64) / t_f, 1.0);
            }
        }
        cur = w;
        pm.to_sums(coeffs, h, &mut sums);
        f(i, &mut sums)?;
    }
    Ok(())
}

impl LocalSums {
    /// Removes observation `i` located exactly at the target (`u = 0`).
    pub(crate) fn exclude_center(&mut self, design: &Design, kernel: &KernelSpec, i: usize, h: f64) {
        let k0 = kernel.scaled(0.0, h);
        let np = design.packed_len();
        let nr = design.m * design.d;
        for (a, v) in self.s0.iter_mut().zip(&design.zz[i * np..(i + 1) * np]) {
            *a -= k0 * v;
        }
        for (a, v) in self.r0.iter_mut().zip(&design.zx[i * nr..(i + 1) * nr]) {
            *a -= k0 * v;
        }
        self.kmass[0] -= k0;
    }
}

/// Index of `(a, b)` in a packed upper triangle (row-wise) of an `m x m`
/// symmetric matrix.
#[inline]
fn packed_at(m: usize, a: usize, b: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    a * m - a * a.saturating_sub(1) / 2 + (b - a)
}

/// Solves the local normal equations. Returns `Θ` (`2m x d`, row-major),
/// whose first `m` rows are `Â(τ)'` and last `m` rows are `h Â'(τ)'`.
pub(crate) fn solve_local(
    sums: &LocalSums,
    m: usize,
    d: usize,
    tau: f64,
) -> Result<Vec<f64>> {
    let n = 2 * m;
    let mut g = vec![0.0; n * n];
    for a in 0..m {
        for b in 0..m {
            let k = packed_at(m, a, b);
            g[a * n + b] = sums.s0[k];
            g[a * n + m + b] = sums.s1[k];
            g[(m + a) * n + b] = sums.s1[k];
            g[(m + a) * n + m + b] = sums.s2[k];
        }
    }
    let mut rhs = vec![0.0; n * d];
    rhs[..m * d].copy_from_slice(&sums.r0);
    rhs[m * d..].copy_from_slice(&sums.r1);
    solve_spd_equilibrated(&mut g, &mut rhs, n, d).map_err(|rcond| TvVarError::SingularDesign { tau, rcond })?;
    Ok(rhs)
}

/// In-place solve of `G X = R` for SPD `G` (`n x n`, row-major) with Jacobi
/// equilibration. The reciprocal condition is estimated from the squared
/// ratio of the extreme Cholesky pivots of the equilibrated matrix.
pub(crate) fn solve_spd_equilibrated(
    g: &mut [f64],
    rhs: &mut [f64],
    n: usize,
    nrhs: usize,
) -> std::result::Result<(), f64> {
    let mut scale = vec![0.0; n];
    for i in 0..n {
        let v = g[i * n + i];
        if !(v > 0.0) || !v.is_finite() {
            return Err(0.0);
        }
        scale[i] = 1.0 / v.sqrt();
    }
    for i in 0..n {
        for j in 0..n {
            g[i * n + j] *= scale[i] * scale[j];
        }
    }
    // Cholesky, lower triangle stored in g
    let mut pmin = f64::INFINITY;
    let mut pmax = 0.0_f64;
    for j in 0..n {
        let mut piv = g[j * n + j];
        for k in 0..j {
            piv -= g[j * n + k] * g[j * n + k];
        }
        if !(piv > 0.0) {
            return Err(0.0);
        }
        let l = piv.sqrt();
        pmin = pmin.min(l);
        pmax = pmax.max(l);
        g[j * n + j] = l;
        for i in (j + 1)..n {
            let mut v = g[i * n + j];
            for k in 0..j {
                v -= g[i * n + k] * g[j * n + k];
            }
            g[i * n + j] = v / l;
        }
    }
    let rcond = (pmin / pmax).powi(2);
    if !(rcond >= RCOND_MIN) {
        return Err(rcond);
    }
    for c in 0..nrhs {
        // scaled rhs
        let mut y: Vec<f64> = (0..n).map(|i| rhs[i * nrhs + c] * scale[i]).collect();
        for i in 0..n {
            let mut v = y[i];
            for k in 0..i {
                v -= g[i * n + k] * y[k];
            }
            y[i] = v / g[i * n + i];
        }
        for i in (0..n).rev() {
            let mut v = y[i];
            for k in (i + 1)..n {
                v -= g[k * n + i] * y[k];
            }
            y[i] = v / g[i * n + i];
        }
        for i in 0..n {
            rhs[i * nrhs + c] = y[i] * scale[i];
        }
    }
    Ok(())
}

/// Coefficient estimate at one target point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalEstimate {
    pub tau: f64,
    /// `Â(τ) = [â, Â_1, …, Â_p]`, `d x (dp+1)`.
    pub coef: Matrix,
    /// `h Â^{(1)}(τ)`, same shape.
    pub deriv: Matrix,
}

impl LocalEstimate {
    /// Lag block `Â_j`, `j >= 1`.
    pub fn lag_block(&self, j: usize) -> Matrix {
        let d = self.coef.nrows();
        self.coef.columns(1 + (j - 1) * d, d).into_owned()
    }

    pub fn lag_blocks(&self) -> Vec<Matrix> {
        let d = self.coef.nrows();
        let p = (self.coef.ncols() - 1) / d;
        (1..=p).map(|j| self.lag_block(j)).collect()
    }

    pub fn intercept(&self) -> Vector {
        self.coef.column(0).into_owned()
    }
}

fn unpack_theta(theta: &[f64], m: usize, d: usize, tau: f64) -> LocalEstimate {
    let coef = Matrix::from_fn(d, m, |c, a| theta[a * d + c]);
    let deriv = Matrix::from_fn(d, m, |c, a| theta[(m + a) * d + c]);
    LocalEstimate { tau, coef, deriv }
}

fn unpack_sym(packed: &[f64], m: usize) -> Matrix {
    Matrix::from_fn(m, m, |a, b| packed[packed_at(m, a, b)])
}

pub(crate) fn local_fit(
    design: &Design,
    kernel: &KernelSpec,
    tau: f64,
    h: f64,
) -> Result<(LocalEstimate, LocalSums)> {
    let sums = accumulate(design, kernel, tau, h);
    if sums.kmass[0] <= 0.0 {
        return Err(TvVarError::DegenerateWindow { tau, h });
    }
    let theta = solve_local(&sums, design.m, design.d, tau)?;
    Ok((unpack_theta(&theta, design.m, design.d, tau), sums))
}

/// Leave-one-out coefficient matrix at sample point `i` (zero-based).
#[cfg(test)]
pub(crate) fn loo_coef(design: &Design, kernel: &KernelSpec, i: usize, h: f64) -> Result<Matrix> {
    let tau = (i + 1) as f64 / design.len as f64;
    let mut sums = accumulate(design, kernel, tau, h);
    sums.exclude_center(design, kernel, i, h);
    if sums.kmass[0] <= 0.0 {
        return Err(TvVarError::DegenerateWindow { tau, h });
    }
    let theta = solve_local(&sums, design.m, design.d, tau)?;
    Ok(Matrix::from_fn(design.d, design.m, |c, a| theta[a * design.d + c]))
}

fn check_bandwidth(h: f64) -> Result<()> {
    if h > 0.0 && h < 1.0 {
        Ok(())
    } else {
        Err(TvVarError::Domain(format!("bandwidth {h} outside (0, 1)")))
    }
}

/// Level and derivative paths at each `τ` of `grid`.
pub fn fit_coefficients(
    panel: &ObservedPanel,
    p: usize,
    h: f64,
    grid: &[f64],
    kernel: &KernelSpec,
) -> Result<Vec<LocalEstimate>> {
    check_bandwidth(h)?;
    let design = Design::new(panel, p)?;
    grid.iter()
        .map(|&tau| local_fit(&design, kernel, tau, h).map(|r| r.0))
        .collect()
}

/// `η̂_t = x_t − Â(τ_t) z_{t−1}`; `coefs[i]` is the fit at `τ_{i+1}`.
pub fn compute_residuals(design: &Design, coefs: &[Matrix]) -> Matrix {
    assert_eq!(coefs.len(), design.len, "need one coefficient matrix per sample point");
    let d = design.d;
    Matrix::from_fn(design.len, d, |i, c| {
        let z = design.z_row(i);
        let a = &coefs[i];
        let fitted: f64 = (0..design.m).map(|k| a[(c, k)] * z[k]).sum();
        design.x_row(i)[c] - fitted
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub tau: f64,
    pub omega: Matrix,
    pub positive_definite: bool,
}

/// `Ω̂(τ) = (1/T) Σ_t η̂_t η̂_t' ω_t(τ)` with local-linear weights.
pub fn fit_covariance(
    residuals: &Matrix,
    h: f64,
    grid: &[f64],
    kernel: &KernelSpec,
) -> Result<Vec<CovarianceEstimate>> {
    check_bandwidth(h)?;
    grid.iter()
        .map(|&tau| covariance_at(residuals, h, tau, kernel))
        .collect()
}

pub fn covariance_at(
    residuals: &Matrix,
    h: f64,
    tau: f64,
    kernel: &KernelSpec,
) -> Result<CovarianceEstimate> {
    let t = residuals.nrows();
    let d = residuals.ncols();
    let w = local_linear_weights(kernel, t, tau, h)?;
    let mut omega = Matrix::zeros(d, d);
    for (i, wt) in w.support().zip(w.weights.iter()) {
        if *wt == 0.0 {
            continue;
        }
        for a in 0..d {
            let ea = residuals[(i, a)] * wt;
            for b in 0..=a {
                omega[(a, b)] += ea * residuals[(i, b)];
            }
        }
    }
    for a in 0..d {
        for b in 0..=a {
            let v = omega[(a, b)] / t as f64;
            omega[(a, b)] = v;
            omega[(b, a)] = v;
        }
    }
    let positive_definite = linalg::is_positive_definite(&omega);
    Ok(CovarianceEstimate {
        tau,
        omega,
        positive_definite,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaEstimate {
    pub tau: f64,
    pub sigma: Matrix,
    pub singular: bool,
}

fn sigma_from_sums(sums: &LocalSums, m: usize, tau: f64) -> SigmaEstimate {
    let sigma = unpack_sym(&sums.s0, m) / sums.kmass[0];
    let singular = !linalg::is_positive_definite(&sigma)
        || linalg::rcond_estimate(&sigma) < RCOND_MIN;
    SigmaEstimate {
        tau,
        sigma,
        singular,
    }
}

/// Nadaraya–Watson second moment of the regressors,
/// `Σ̂(τ) = (Σ K_h)^{-1} Σ z z' K_h`.
pub fn fit_sigma(
    panel: &ObservedPanel,
    p: usize,
    h: f64,
    grid: &[f64],
    kernel: &KernelSpec,
) -> Result<Vec<SigmaEstimate>> {
    check_bandwidth(h)?;
    let design = Design::new(panel, p)?;
    grid.iter()
        .map(|&tau| {
            let sums = accumulate(&design, kernel, tau, h);
            if sums.kmass[0] <= 0.0 {
                return Err(TvVarError::DegenerateWindow { tau, h });
            }
            Ok(sigma_from_sums(&sums, design.m, tau))
        })
        .collect()
}

/// Everything estimated at one target point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub tau: f64,
    pub coef: LocalEstimate,
    pub omega: Matrix,
    pub omega_pd: bool,
    pub sigma: Matrix,
    pub sigma_singular: bool,
}

impl GridPoint {
    /// `β̂(τ) = vec Â(τ)`.
    pub fn beta(&self) -> Vector {
        linalg::vec(&self.coef.coef)
    }
}

/// Blocks of the joint covariance `V̂(τ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VhatBlocks {
    pub v11: Matrix,
    pub v21: Matrix,
    pub v22: Matrix,
}

impl VhatBlocks {
    pub fn assemble(&self) -> Matrix {
        let n1 = self.v11.nrows();
        let n2 = self.v22.nrows();
        let mut v = Matrix::zeros(n1 + n2, n1 + n2);
        v.view_mut((0, 0), (n1, n1)).copy_from(&self.v11);
        v.view_mut((n1, 0), (n2, n1)).copy_from(&self.v21);
        v.view_mut((0, n1), (n1, n2)).copy_from(&self.v21.transpose());
        v.view_mut((n1, n1), (n2, n2)).copy_from(&self.v22);
        linalg::symmetrize(&v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub p: usize,
    pub h: f64,
}

/// Fit evaluated at every sample point `τ_t = t/T`.
#[derive(Debug, Clone)]
pub struct TvVarFit {
    pub p: usize,
    pub h: f64,
    pub design: Design,
    pub points: Vec<GridPoint>,
    /// `T x d`.
    pub residuals: Matrix,
}

impl TvVarFit {
    pub fn fit(panel: &ObservedPanel, opts: FitOptions, kernel: &KernelSpec) -> Result<TvVarFit> {
        check_bandwidth(opts.h)?;
        let design = Design::new(panel, opts.p)?;
        Self::from_design(design, opts.h, kernel)
    }

    pub(crate) fn from_design(design: Design, h: f64, kernel: &KernelSpec) -> Result<TvVarFit> {
        let t = design.len;
        let mut coefs = Vec::with_capacity(t);
        let mut sigmas = Vec::with_capacity(t);
        for_each_sample_point(&design, kernel, h, |i, sums| {
            let tau = (i + 1) as f64 / t as f64;
            if sums.kmass[0] <= 0.0 {
                return Err(TvVarError::DegenerateWindow { tau, h });
            }
            let theta = solve_local(sums, design.m, design.d, tau)?;
            sigmas.push(sigma_from_sums(sums, design.m, tau));
            coefs.push(unpack_theta(&theta, design.m, design.d, tau));
            Ok(())
        })?;
        let mats: Vec<Matrix> = coefs.iter().map(|c| c.coef.clone()).collect();
        let residuals = compute_residuals(&design, &mats);
        let mut points = Vec::with_capacity(t);
        for (coef, sig) in coefs.into_iter().zip(sigmas) {
            let cov = covariance_at(&residuals, h, coef.tau, kernel)?;
            points.push(GridPoint {
                tau: coef.tau,
                coef,
                omega: cov.omega,
                omega_pd: cov.positive_definite,
                sigma: sig.sigma,
                sigma_singular: sig.singular,
            });
        }
        Ok(TvVarFit {
            p: design.p,
            h,
            design,
            points,
            residuals,
        })
    }

    pub fn dim(&self) -> usize {
        self.design.d
    }

    pub fn len(&self) -> usize {
        self.design.len
    }

    pub fn is_empty(&self) -> bool {
        self.design.len == 0
    }

    pub fn grid(&self) -> Vec<f64> {
        self.points.iter().map(|g| g.tau).collect()
    }

    /// Residual sum of squares `(1/T) Σ η̂'η̂`.
    pub fn rss(&self) -> f64 {
        self.residuals.iter().map(|v| v * v).sum::<f64>() / self.len() as f64
    }

    /// Re-estimates everything at an arbitrary `τ`, reusing the sample-point
    /// residuals for `Ω̂`.
    pub fn estimate_at(&self, kernel: &KernelSpec, tau: f64) -> Result<GridPoint> {
        let (coef, sums) = local_fit(&self.design, kernel, tau, self.h)?;
        let sig = sigma_from_sums(&sums, self.design.m, tau);
        let cov = covariance_at(&self.residuals, self.h, tau, kernel)?;
        Ok(GridPoint {
            tau,
            coef,
            omega: cov.omega,
            omega_pd: cov.positive_definite,
            sigma: sig.sigma,
            sigma_singular: sig.singular,
        })
    }

    /// Uniform reporting grid of `g` points on `[0, 1]`.
    pub fn reporting_grid(&self, kernel: &KernelSpec, g: usize) -> Result<Vec<GridPoint>> {
        let taus: Vec<f64> = if g <= 1 {
            vec![0.5]
        } else {
            (0..g).map(|i| i as f64 / (g - 1) as f64).collect()
        };
        taus.iter().map(|&tau| self.estimate_at(kernel, tau)).collect()
    }

    /// V̂ blocks at a grid point.
    pub fn vhat(&self, kernel: &KernelSpec, point: &GridPoint) -> Result<VhatBlocks> {
        fit_vhat(&self.design, &self.residuals, self.h, point, kernel)
    }

    pub fn is_interior(&self, tau: f64) -> bool {
        tau >= self.h && tau <= 1.0 - self.h
    }
}

/// `V̂(τ)` from its three blocks:
/// `V̂11 = ṽ0 Σ̂⁻¹ ⊗ Ω̂`,
/// `V̂21 = (h/T) Σ vech(η̂η̂') η̂'Z' K_h² (Σ̂⁻¹ ⊗ I_d)`,
/// `V̂22 = (h/T) Σ vech(η̂η̂') vech(η̂η̂')' K_h² − ṽ0 vech(Ω̂) vech(Ω̂)'`.
pub fn fit_vhat(
    design: &Design,
    residuals: &Matrix,
    h: f64,
    point: &GridPoint,
    kernel: &KernelSpec,
) -> Result<VhatBlocks> {
    let tau = point.tau;
    let d = design.d;
    let m = design.m;
    let r = vech_len(d);
    let sigma_inv = spd_inverse(&point.sigma).map_err(|_| TvVarError::SingularDesign {
        tau,
        rcond: linalg::rcond_estimate(&point.sigma),
    })?;
    let v0 = kernel.v0();
    let v11 = kron(&sigma_inv, &point.omega) * v0;

    let t_f = design.len as f64;
    let mut cross = Matrix::zeros(r, m * d);
    let mut fourth = Matrix::zeros(r, r);
    let mut vv = vec![0.0; r];
    let mut ez = vec![0.0; m * d];
    for i in window(design.len, tau, h) {
        let x = (i + 1) as f64 / t_f - tau;
        let k = kernel.scaled(x, h);
        if k == 0.0 {
            continue;
        }
        let k2 = k * k;
        let eta: Vec<f64> = (0..d).map(|c| residuals[(i, c)]).collect();
        let mut idx = 0;
        for b in 0..d {
            for a in b..d {
                vv[idx] = eta[a] * eta[b];
                idx += 1;
            }
        }
        // vec(η z') = z ⊗ η
        let z = design.z_row(i);
        for a in 0..m {
            for c in 0..d {
                ez[a * d + c] = z[a] * eta[c];
            }
        }
        for p in 0..r {
            let w = k2 * vv[p];
            for q in 0..m * d {
                cross[(p, q)] += w * ez[q];
            }
            for q in 0..r {
                fourth[(p, q)] += w * vv[q];
            }
        }
    }
    let scale = h / t_f;
    let v21 = cross * scale * kron(&sigma_inv, &Matrix::identity(d, d));
    let vo = vech(&point.omega)?;
    let v22 = fourth * scale - &vo * vo.transpose() * v0;
    Ok(VhatBlocks {
        v11,
        v21,
        v22: linalg::symmetrize(&v22),
    })
}

/// Pointwise intervals for `vec Â(τ)` and `vech Ω̂(τ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseCi {
    pub tau: f64,
    pub level: f64,
    pub coef_estimate: Vec<f64>,
    pub coef_lower: Vec<f64>,
    pub coef_upper: Vec<f64>,
    pub omega_estimate: Vec<f64>,
    pub omega_lower: Vec<f64>,
    pub omega_upper: Vec<f64>,
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// `estimate ± z_{1−α/2} √(V̂_ii / (T h))`. The `h²` bias term is not
/// subtracted (undersmoothing convention); intervals are meaningful for
/// interior `τ`.
pub fn pointwise_ci(
    point: &GridPoint,
    vhat: &Matrix,
    sample_len: usize,
    h: f64,
    level: f64,
) -> PointwiseCi {
    let z = if level <= 0.0 {
        0.0
    } else {
        normal_quantile(0.5 + 0.5 * level)
    };
    let th = sample_len as f64 * h;
    let beta = point.beta();
    let vo = vech(&point.omega).expect("omega is square");
    let nb = beta.len();
    let half = |i: usize| z * (vhat[(i, i)].max(0.0) / th).sqrt();
    PointwiseCi {
        tau: point.tau,
        level,
        coef_estimate: beta.iter().copied().collect(),
        coef_lower: (0..nb).map(|i| beta[i] - half(i)).collect(),
        coef_upper: (0..nb).map(|i| beta[i] + half(i)).collect(),
        omega_estimate: vo.iter().copied().collect(),
        omega_lower: (0..vo.len()).map(|i| vo[i] - half(nb + i)).collect(),
        omega_upper: (0..vo.len()).map(|i| vo[i] + half(nb + i)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wavy_panel(t: usize, d: usize) -> ObservedPanel {
        let rows = (0..t + 2)
            .map(|i| (0..d).map(|c| ((i * (c + 3)) as f64 * 0.37).sin() + 0.1 * c as f64).collect())
            .collect();
        ObservedPanel::new(rows, 2, (0..d).map(|c| format!("s{c}")).collect()).unwrap()
    }

    #[test]
    fn sweep_matches_direct_sums() {
        let panel = wavy_panel(300, 2);
        let des = Design::new(&panel, 2).unwrap();
        let k = KernelSpec::epanechnikov();
        for h in [0.05, 0.2, 0.6] {
            for_each_sample_point(&des, &k, h, |i, sums| {
                let tau = (i + 1) as f64 / des.len as f64;
                let direct = accumulate(&des, &k, tau, h);
                let close = |a: &[f64], b: &[f64]| {
                    let scale = b.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
                    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-10 * scale)
                };
                assert!(close(&sums.s0, &direct.s0), "s0 at {i}, h={h}");
                assert!(close(&sums.s1, &direct.s1));
                assert!(close(&sums.s2, &direct.s2));
                assert!(close(&sums.r0, &direct.r0));
                assert!(close(&sums.r1, &direct.r1));
                assert!(close(&sums.kmass, &direct.kmass));
                Ok(())
            })
            .unwrap();
        }
    }

    #[test]
    fn packed_index_matches_enumeration() {
        for m in 1..8 {
            let mut k = 0;
            for a in 0..m {
                for b in a..m {
                    assert_eq!(packed_at(m, a, b), k);
                    assert_eq!(packed_at(m, b, a), k);
                    k += 1;
                }
            }
        }
    }

    #[test]
    fn spd_solver_matches_direct() {
        let g0 = [4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let mut g = g0.to_vec();
        let mut r = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        solve_spd_equilibrated(&mut g, &mut r, 3, 2).unwrap();
        let gm = Matrix::from_row_slice(3, 3, &g0);
        let x = Matrix::from_row_slice(3, 2, &r);
        let back = gm * x;
        let want = Matrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert!((back - want).abs().max() < 1e-12);
    }

    #[test]
    fn spd_solver_flags_singular() {
        let mut g = vec![1.0, 1.0, 1.0, 1.0];
        let mut r = vec![1.0, 1.0];
        assert!(solve_spd_equilibrated(&mut g, &mut r, 2, 1).is_err());
    }

    fn scalar_panel(vals: &[f64]) -> ObservedPanel {
        ObservedPanel::new(vals.iter().map(|v| vec![*v]).collect(), 1, vec!["x".into()]).unwrap()
    }

    #[test]
    fn zero_series_gives_singular_sigma() {
        let panel = scalar_panel(&vec![0.0; 60]);
        let k = KernelSpec::epanechnikov();
        let s = fit_sigma(&panel, 1, 0.3, &[0.5], &k).unwrap();
        assert!(s[0].singular);
        assert!((s[0].sigma[(0, 0)] - 1.0).abs() < 1e-12);
        assert_eq!(s[0].sigma[(1, 1)], 0.0);
        assert!(matches!(
            fit_coefficients(&panel, 1, 0.3, &[0.5], &k),
            Err(TvVarError::SingularDesign { .. })
        ));
    }

    #[test]
    fn zero_coefficients_leave_data_as_residuals() {
        let vals: Vec<f64> = (0..30).map(|i| (i as f64 * 0.7).sin()).collect();
        let panel = scalar_panel(&vals);
        let des = Design::new(&panel, 1).unwrap();
        let res = compute_residuals(&des, &vec![Matrix::zeros(1, 2); des.len]);
        for i in 0..des.len {
            assert_eq!(res[(i, 0)], des.x_row(i)[0]);
        }
    }

    #[test]
    fn constant_residual_gives_rank_one_covariance() {
        let c = [1.5, -0.5];
        let res = Matrix::from_fn(200, 2, |_, j| c[j]);
        let k = KernelSpec::epanechnikov();
        let cov = covariance_at(&res, 0.2, 0.5, &k).unwrap();
        // local-linear weights average to one
        assert!((cov.omega[(0, 1)] - c[0] * c[1]).abs() < 1e-12);
        assert!(!cov.positive_definite);
    }

    #[test]
    fn ci_scaling_rules() {
        let point = GridPoint {
            tau: 0.5,
            coef: LocalEstimate {
                tau: 0.5,
                coef: Matrix::from_row_slice(1, 2, &[0.1, 0.5]),
                deriv: Matrix::zeros(1, 2),
            },
            omega: Matrix::from_row_slice(1, 1, &[2.0]),
            omega_pd: true,
            sigma: Matrix::identity(2, 2),
            sigma_singular: false,
        };
        let v = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 2.0, 3.0]));
        let zero = pointwise_ci(&point, &v, 100, 0.2, 0.0);
        assert_eq!(zero.coef_lower, zero.coef_estimate);
        let a = pointwise_ci(&point, &v, 100, 0.2, 0.95);
        let b = pointwise_ci(&point, &(v * 2.0), 100, 0.2, 0.95);
        for i in 0..2 {
            let wa = a.coef_upper[i] - a.coef_lower[i];
            let wb = b.coef_upper[i] - b.coef_lower[i];
            assert!((wb / wa - 2f64.sqrt()).abs() < 1e-12);
        }
        let want = 1.959963984540054 * (1.0f64 / 20.0).sqrt();
        assert!((a.coef_upper[0] - 0.1 - want).abs() < 1e-9);
    }
}
