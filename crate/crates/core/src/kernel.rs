//! Kernel functions, their moment constants and the local-linear weights.
//!
//! A [`KernelSpec`] carries the kernel together with numerically integrated
//! constants `c_k = ∫ u^k K(u) du`, `v_k = ∫ u^k K(u)^2 du` (k ≤ 6) and the
//! test constant `C_B = ∫_0^2 (∫ K(u) K(u+v) du)^2 dv`. Only the Epanechnikov
//! kernel ships built in; any symmetric kernel supported on `[-1, 1]` can be
//! plugged in without hand-derived constants.

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Result, TvVarError};

pub const MAX_MOMENT: usize = 6;

const SIMPSON_TOL: f64 = 1e-11;
const CB_START_POINTS: usize = 2000;
const CB_TOL: f64 = 1e-8;

pub fn epanechnikov(u: f64) -> f64 {
    if u.abs() <= 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

#[derive(Clone)]
pub struct KernelSpec {
    name: String,
    eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    moments: [f64; MAX_MOMENT + 1],
    sq_moments: [f64; MAX_MOMENT + 1],
    cb: f64,
    /// Power-series coefficients when the kernel is a polynomial on `[-1, 1]`.
    poly: Option<Vec<f64>>,
}

impl std::fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KernelSpec")
            .field("name", &self.name)
            .field("c2", &self.moments[2])
            .field("v0", &self.sq_moments[0])
            .field("cb", &self.cb)
            .finish()
    }
}

impl KernelSpec {
    /// Builds a kernel from its density on `[-1, 1]`; all constants are
    /// computed by quadrature here.
    pub fn new(name: impl Into<String>, eval: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        let eval: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::new(eval);
        let mut moments = [0.0; MAX_MOMENT + 1];
        let mut sq_moments = [0.0; MAX_MOMENT + 1];
        for k in 0..=MAX_MOMENT {
            let f = eval.clone();
            moments[k] = adaptive_simpson(&|u| u.powi(k as i32) * f(u), -1.0, 1.0, SIMPSON_TOL);
            let f = eval.clone();
            sq_moments[k] =
                adaptive_simpson(&|u| u.powi(k as i32) * f(u) * f(u), -1.0, 1.0, SIMPSON_TOL);
        }
        let cb = cb_by_refinement(eval.as_ref()).0;
        KernelSpec {
            name: name.into(),
            eval,
            moments,
            sq_moments,
            cb,
            poly: None,
        }
    }

    /// Kernel equal to `Σ c_k u^k` on `[-1, 1]`. Estimation over the sample
    /// points then runs as a sliding-window sweep.
    pub fn polynomial(name: impl Into<String>, coeffs: Vec<f64>) -> Self {
        let c = coeffs.clone();
        let mut k = KernelSpec::new(name, move |u| c.iter().rev().fold(0.0, |acc, v| acc * u + v));
        k.poly = Some(coeffs);
        k
    }

    pub fn poly_coeffs(&self) -> Option<&[f64]> {
        self.poly.as_deref()
    }

    /// Shared Epanechnikov instance.
    pub fn epanechnikov() -> KernelSpec {
        static EPA: OnceLock<KernelSpec> = OnceLock::new();
        EPA.get_or_init(|| {
            let mut k = KernelSpec::new("epanechnikov", epanechnikov);
            k.poly = Some(vec![0.75, 0.0, -0.75]);
            k
        })
        .clone()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        if u.abs() > 1.0 {
            0.0
        } else {
            (self.eval)(u)
        }
    }

    /// `K_h(x) = K(x/h)/h`.
    #[inline]
    pub fn scaled(&self, x: f64, h: f64) -> f64 {
        self.eval(x / h) / h
    }

    /// `∫ u^k K(u) du` (or with `K^2` when `squared`).
    pub fn moment(&self, k: usize, squared: bool) -> Result<f64> {
        if k > MAX_MOMENT {
            return Err(TvVarError::Domain(format!("moment order {k} > {MAX_MOMENT}")));
        }
        Ok(if squared {
            self.sq_moments[k]
        } else {
            self.moments[k]
        })
    }

    /// `c̃_2`.
    pub fn c2(&self) -> f64 {
        self.moments[2]
    }

    /// `ṽ_0 = ∫ K^2`.
    pub fn v0(&self) -> f64 {
        self.sq_moments[0]
    }

    pub fn cb(&self) -> f64 {
        self.cb
    }
}

pub fn kernel_moment(spec: &KernelSpec, k: usize, squared: bool) -> Result<f64> {
    spec.moment(k, squared)
}

pub fn cb_constant(spec: &KernelSpec) -> f64 {
    spec.cb()
}

/// Adaptive Simpson quadrature on `[a, b]`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// Inner autoconvolution `∫_{-1}^{1-v} K(u) K(u+v) du`.
pub fn autoconvolution(k: &dyn Fn(f64) -> f64, v: f64) -> f64 {
    let kk = |u: f64| {
        let a = if u.abs() <= 1.0 { k(u) } else { 0.0 };
        let w = u + v;
        let b = if w.abs() <= 1.0 { k(w) } else { 0.0 };
        a * b
    };
    adaptive_simpson(&kk, -1.0, 1.0 - v, SIMPSON_TOL)
}

fn cb_trapezoid(k: &dyn Fn(f64) -> f64, n: usize) -> f64 {
    let step = 2.0 / n as f64;
    let mut acc = 0.0;
    for i in 0..=n {
        let v = i as f64 * step;
        let g = autoconvolution(k, v);
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        acc += w * g * g;
    }
    acc * step
}

/// Trapezoid rule in `v` with doubling until successive values agree to
/// `1e-8`. Returns the final estimate and the last absolute change.
pub fn cb_by_refinement(k: &dyn Fn(f64) -> f64) -> (f64, f64) {
    let mut n = CB_START_POINTS;
    let mut prev = cb_trapezoid(k, n);
    loop {
        n *= 2;
        let next = cb_trapezoid(k, n);
        let change = (next - prev).abs();
        if change < CB_TOL || n >= 1 << 20 {
            return (next, change);
        }
        prev = next;
    }
}

/// Local-linear weights `ω_t(τ)` on the sample grid `τ_t = t/T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalWeightTable {
    pub tau: f64,
    pub h: f64,
    pub sample_len: usize,
    /// `P_{h,0..2}(τ)` as finite-sample sums.
    pub p_moments: [f64; 3],
    /// Zero-based sample index of `weights[0]`.
    pub start: usize,
    pub weights: Vec<f64>,
}

impl LocalWeightTable {
    /// Weight for zero-based sample index `t` (τ = (t+1)/T).
    pub fn weight(&self, t: usize) -> f64 {
        if t < self.start || t >= self.start + self.weights.len() {
            0.0
        } else {
            self.weights[t - self.start]
        }
    }

    pub fn dense(&self) -> Vec<f64> {
        (0..self.sample_len).map(|t| self.weight(t)).collect()
    }

    pub fn support(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.weights.len()
    }
}

/// Zero-based index range of sample points with `|τ_t − τ| ≤ h`.
pub fn window(sample_len: usize, tau: f64, h: f64) -> std::ops::Range<usize> {
    let t = sample_len as f64;
    // τ_t = (i+1)/T for zero-based i
    let lo = ((tau - h) * t).ceil() - 1.0;
    let hi = ((tau + h) * t).floor() - 1.0;
    let lo = lo.max(0.0) as usize;
    let hi = hi.min(t - 1.0);
    if hi < 0.0 || (hi as usize) < lo {
        return 0..0;
    }
    lo..(hi as usize + 1)
}

pub fn local_linear_weights(
    spec: &KernelSpec,
    sample_len: usize,
    tau: f64,
    h: f64,
) -> Result<LocalWeightTable> {
    if !(h > 0.0 && h < 1.0) || sample_len < 2 || !(0.0..=1.0).contains(&tau) {
        return Err(TvVarError::Domain(format!(
            "invalid weight request (T={sample_len}, tau={tau}, h={h})"
        )));
    }
    let t_f = sample_len as f64;
    let range = window(sample_len, tau, h);
    let mut kv = Vec::with_capacity(range.len());
    let mut p = [0.0; 3];
    let mut support = 0;
    for i in range.clone() {
        let x = (i + 1) as f64 / t_f - tau;
        let u = x / h;
        let k = spec.scaled(x, h);
        if k > 0.0 {
            support += 1;
        }
        p[0] += k;
        p[1] += u * k;
        p[2] += u * u * k;
        kv.push((u, k));
    }
    for v in p.iter_mut() {
        *v /= t_f;
    }
    let denom = p[0] * p[2] - p[1] * p[1];
    if support < 2 || denom <= 1e-14 {
        return Err(TvVarError::DegenerateWindow { tau, h });
    }
    let weights = kv
        .into_iter()
        .map(|(u, k)| k * (p[2] - u * p[1]) / denom)
        .collect();
    Ok(LocalWeightTable {
        tau,
        h,
        sample_len,
        p_moments: p,
        start: range.start,
        weights,
    })
}
