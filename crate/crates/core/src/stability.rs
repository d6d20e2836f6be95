//! Constancy test for selected coefficients: `H0: C β(τ) = c` for all `τ`.
//!
//! The statistic is the weighted integrated squared deviation
//! `Q̂ = (1/T) Σ_t (Cβ̂(τ_t) − ĉ)' Ĥ(τ_t) (Cβ̂(τ_t) − ĉ)` with
//! `Ĥ = (C (Σ̂⁻¹ ⊗ Ω̂) C')⁻¹`, calibrated by re-running the pipeline on
//! i.i.d. standard normal panels.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TvVarError};
use crate::estimate::{normal_quantile, FitOptions, TvVarFit};
use crate::kernel::KernelSpec;
use crate::linalg::{spd_inverse, Matrix, Vector};
use crate::panel::ObservedPanel;
use crate::rng::{stream, tag};
use crate::select::cv_bandwidth;
use crate::sim::gaussian_noise_panel;

/// Largest share of grid points that may be skipped for a singular weight.
pub const MAX_SKIP_SHARE: f64 = 0.05;
pub const MAX_RETRIES: u64 = 10;

/// Rows of the identity on `β = vec[a, A_1, …, A_p]` picked by `C`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RestrictionSpec {
    pub label: String,
    pub rows: Vec<usize>,
    /// Length of `β`.
    pub dim: usize,
}

impl RestrictionSpec {
    pub fn new(label: impl Into<String>, rows: Vec<usize>, dim: usize) -> Result<Self> {
        if rows.is_empty() {
            return Err(TvVarError::Config("restriction selects no coefficient".into()));
        }
        let mut seen = vec![false; dim];
        for &r in &rows {
            if r >= dim || seen[r] {
                return Err(TvVarError::Config(format!("bad restriction row {r} for dim {dim}")));
            }
            seen[r] = true;
        }
        Ok(RestrictionSpec {
            label: label.into(),
            rows,
            dim,
        })
    }

    /// `"all"`, `"intercept"`, `"lags"` or `"A1"`…`"Ap"`.
    pub fn named(name: &str, d: usize, p: usize) -> Result<Self> {
        let dim = d * (d * p + 1);
        let block = |j: usize| (d + (j - 1) * d * d..d + j * d * d).collect::<Vec<_>>();
        let rows = match name {
            "all" => (0..dim).collect(),
            "intercept" => (0..d).collect(),
            "lags" => (d..dim).collect(),
            other => {
                let j: usize = other
                    .strip_prefix('A')
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| TvVarError::Config(format!("unknown restriction block '{other}'")))?;
                if j == 0 || j > p {
                    return Err(TvVarError::Config(format!("block {other} needs 1 <= j <= p = {p}")));
                }
                block(j)
            }
        };
        RestrictionSpec::new(name, rows, dim)
    }

    pub fn s(&self) -> usize {
        self.rows.len()
    }

    /// `s x dim` selection matrix.
    pub fn matrix(&self) -> Matrix {
        let mut c = Matrix::zeros(self.rows.len(), self.dim);
        for (i, r) in self.rows.iter().enumerate() {
            c[(i, *r)] = 1.0;
        }
        c
    }

    pub fn apply(&self, beta: &Vector) -> Vector {
        Vector::from_iterator(self.rows.len(), self.rows.iter().map(|r| beta[*r]))
    }
}

fn used_points(fit: &TvVarFit, trim_interior: bool) -> Vec<usize> {
    (0..fit.points.len())
        .filter(|&i| !trim_interior || fit.is_interior(fit.points[i].tau))
        .collect()
}

/// `ĉ` as the average of `Cβ̂(τ_t)` over the sample points.
pub fn estimate_c(fit: &TvVarFit, spec: &RestrictionSpec, trim_interior: bool) -> Vector {
    let idx = used_points(fit, trim_interior);
    let mut c = Vector::zeros(spec.s());
    for &i in &idx {
        c += spec.apply(&fit.points[i].beta());
    }
    c / idx.len().max(1) as f64
}

/// `C (Σ̂⁻¹ ⊗ Ω̂) C'` without forming the Kronecker product.
fn restricted_weight(sigma_inv: &Matrix, omega: &Matrix, spec: &RestrictionSpec) -> Matrix {
    let d = omega.nrows();
    let s = spec.s();
    Matrix::from_fn(s, s, |i, j| {
        let (a, b) = (spec.rows[i], spec.rows[j]);
        sigma_inv[(a / d, b / d)] * omega[(a % d, b % d)]
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QStatistic {
    pub q_hat: f64,
    pub used: usize,
    pub skipped: usize,
}

/// Raw statistic. Grid points where `Σ̂`, `Ω̂` or `C V̂_β C'` cannot be
/// inverted are skipped; more than [`MAX_SKIP_SHARE`] of them is an error.
pub fn compute_q(fit: &TvVarFit, spec: &RestrictionSpec, c_hat: &Vector, trim_interior: bool) -> Result<QStatistic> {
    let idx = used_points(fit, trim_interior);
    let t = fit.len() as f64;
    let mut sum = 0.0;
    let mut skipped = 0;
    for &i in &idx {
        let gp = &fit.points[i];
        let weight = if gp.sigma_singular || !gp.omega_pd {
            None
        } else {
            spd_inverse(&gp.sigma)
                .ok()
                .and_then(|si| spd_inverse(&restricted_weight(&si, &gp.omega, spec)).ok())
        };
        let Some(hmat) = weight else {
            skipped += 1;
            continue;
        };
        let dev = spec.apply(&gp.beta()) - c_hat;
        sum += (dev.transpose() * hmat * &dev)[(0, 0)];
    }
    if skipped as f64 > MAX_SKIP_SHARE * idx.len() as f64 {
        return Err(TvVarError::SingularWeight {
            skipped,
            total: idx.len(),
        });
    }
    Ok(QStatistic {
        q_hat: (sum / t).max(0.0),
        used: idx.len() - skipped,
        skipped,
    })
}

/// `Q̂* = T√h (Q̂ − s ṽ₀ / (T h)) / √(4 s C_B)`.
pub fn standardize_q(q_hat: f64, sample_len: usize, h: f64, s: usize, v0: f64, cb: f64) -> f64 {
    let t = sample_len as f64;
    let s = s as f64;
    t * h.sqrt() * (q_hat - s * v0 / (t * h)) / (4.0 * s * cb).sqrt()
}

/// One-sided normal rule: reject iff `Q̂* > z_{1−α}`.
pub fn asymptotic_reference(q_star: f64, alpha: f64) -> bool {
    q_star > normal_quantile(1.0 - alpha)
}

/// Fit, `ĉ` and `Q̂` for one panel.
pub fn statistic_for_panel(
    panel: &ObservedPanel,
    p: usize,
    h: f64,
    spec: &RestrictionSpec,
    kernel: &KernelSpec,
    trim_interior: bool,
) -> Result<QStatistic> {
    let fit = TvVarFit::fit(panel, FitOptions { p, h }, kernel)?;
    let c = estimate_c(&fit, spec, trim_interior);
    compute_q(&fit, spec, &c, trim_interior)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub replications: usize,
    pub seed: u64,
    pub trim_interior: bool,
    /// Re-run bandwidth cross-validation on each replicate over this grid.
    pub reselect_grid: Option<Vec<f64>>,
    pub levels: Vec<f64>,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions {
            replications: 199,
            seed: 0,
            trim_interior: false,
            reselect_grid: None,
            levels: vec![0.01, 0.05, 0.10],
        }
    }
}

fn replicate(
    shape: (usize, usize, usize),
    h: f64,
    spec: &RestrictionSpec,
    kernel: &KernelSpec,
    opts: &BootstrapOptions,
    b: u64,
) -> Result<f64> {
    let (d, t, p) = shape;
    let mut last = None;
    for attempt in 0..=MAX_RETRIES {
        let mut rng = stream(opts.seed, &[tag::BOOTSTRAP, b, attempt]);
        let panel = gaussian_noise_panel(d, t, p, &mut rng)?;
        let h_b = match &opts.reselect_grid {
            Some(grid) => cv_bandwidth(&panel, p, grid, kernel)?.chosen,
            None => h,
        };
        match statistic_for_panel(&panel, p, h_b, spec, kernel, opts.trim_interior) {
            Ok(q) => return Ok(q.q_hat),
            Err(e @ (TvVarError::SingularWeight { .. } | TvVarError::SingularDesign { .. })) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap())
}

/// Null distribution of `Q̂` under i.i.d. `N(0, I_d)` data of length `T`,
/// in replicate order. Replicate `b` draws from stream `(seed, b)`.
pub fn bootstrap_null(
    d: usize,
    sample_len: usize,
    p: usize,
    h: f64,
    spec: &RestrictionSpec,
    kernel: &KernelSpec,
    opts: &BootstrapOptions,
) -> Result<Vec<f64>> {
    (0..opts.replications as u64)
        .into_par_iter()
        .map(|b| replicate((d, sample_len, p), h, spec, kernel, opts, b))
        .collect()
}

/// `q̂_{1−α}` as the `⌈(B+1)(1−α)⌉`-th order statistic (infinite when that
/// exceeds `B`).
pub fn critical_value(sorted: &[f64], alpha: f64) -> f64 {
    let b = sorted.len();
    let k = ((b as f64 + 1.0) * (1.0 - alpha) - 1e-9).ceil() as usize;
    if k == 0 {
        f64::NEG_INFINITY
    } else if k > b {
        f64::INFINITY
    } else {
        sorted[k - 1]
    }
}

/// `(1 + #{Q̃_b ≥ Q̂}) / (B + 1)`.
pub fn bootstrap_p_value(null: &[f64], q_hat: f64) -> f64 {
    let exceed = null.iter().filter(|v| **v >= q_hat).count();
    (1 + exceed) as f64 / (null.len() + 1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelDecision {
    pub alpha: f64,
    /// `None` when `B` is too small for the level (never rejects).
    pub critical_value: Option<f64>,
    pub reject: bool,
    pub asymptotic_reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityTestReport {
    pub restriction: RestrictionSpec,
    pub q_hat: f64,
    pub q_star: f64,
    pub s: usize,
    pub v0_tilde: f64,
    pub cb: f64,
    pub sample_len: usize,
    pub p: usize,
    pub h_used: f64,
    pub seed: u64,
    pub skipped: usize,
    pub bootstrap_stats: Vec<f64>,
    pub p_value: f64,
    pub levels: Vec<LevelDecision>,
}

impl StabilityTestReport {
    pub fn reject_at(&self, alpha: f64) -> Option<bool> {
        self.levels.iter().find(|l| l.alpha == alpha).map(|l| l.reject)
    }
}

/// Assembles a report from a statistic and a null sample.
#[allow(clippy::too_many_arguments)]
pub fn report_from_null(
    q: &QStatistic,
    null: Vec<f64>,
    spec: &RestrictionSpec,
    sample_len: usize,
    p: usize,
    h: f64,
    kernel: &KernelSpec,
    opts: &BootstrapOptions,
) -> StabilityTestReport {
    let mut sorted = null.clone();
    sorted.sort_by(f64::total_cmp);
    let q_star = standardize_q(q.q_hat, sample_len, h, spec.s(), kernel.v0(), kernel.cb());
    let levels = opts
        .levels
        .iter()
        .map(|&alpha| {
            let cv = critical_value(&sorted, alpha);
            LevelDecision {
                alpha,
                critical_value: cv.is_finite().then_some(cv),
                reject: q.q_hat > cv,
                asymptotic_reject: asymptotic_reference(q_star, alpha),
            }
        })
        .collect();
    StabilityTestReport {
        restriction: spec.clone(),
        q_hat: q.q_hat,
        q_star,
        s: spec.s(),
        v0_tilde: kernel.v0(),
        cb: kernel.cb(),
        sample_len,
        p,
        h_used: h,
        seed: opts.seed,
        skipped: q.skipped,
        p_value: bootstrap_p_value(&null, q.q_hat),
        bootstrap_stats: null,
        levels,
    }
}

/// Statistic on the data, then `B` replicates on Gaussian noise with the
/// same `(p, h)`.
pub fn bootstrap_test(
    panel: &ObservedPanel,
    p: usize,
    h: f64,
    spec: &RestrictionSpec,
    kernel: &KernelSpec,
    opts: &BootstrapOptions,
) -> Result<StabilityTestReport> {
    let panel = panel.aligned_for_lag(p)?;
    let q = statistic_for_panel(&panel, p, h, spec, kernel, opts.trim_interior)?;
    let null = bootstrap_null(panel.dim(), panel.len(), p, h, spec, kernel, opts)?;
    Ok(report_from_null(&q, null, spec, panel.len(), p, h, kernel, opts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_blocks() {
        let r = RestrictionSpec::named("A2", 2, 3).unwrap();
        assert_eq!(r.rows, vec![6, 7, 8, 9]);
        assert_eq!(RestrictionSpec::named("intercept", 3, 1).unwrap().rows, vec![0, 1, 2]);
        assert_eq!(RestrictionSpec::named("all", 2, 2).unwrap().s(), 10);
        assert_eq!(RestrictionSpec::named("lags", 2, 2).unwrap().s(), 8);
        assert!(RestrictionSpec::named("A3", 2, 2).is_err());
        assert!(RestrictionSpec::named("B1", 2, 2).is_err());
        let c = r.matrix();
        assert_eq!(&c * c.transpose(), Matrix::identity(4, 4));
    }

    #[test]
    fn standardization() {
        let v0 = 0.6;
        let cb = 167.0 / 770.0;
        let (t, h) = (400, 0.3);
        assert_eq!(standardize_q(v0 / (t as f64 * h), t, h, 1, v0, cb), 0.0);
        let q = 0.01;
        let want = 400.0 * 0.3f64.sqrt() * (q - 0.6 / 120.0) / (4.0 * cb).sqrt();
        assert!((standardize_q(q, t, h, 1, v0, cb) - want).abs() < 1e-12);
        assert!(standardize_q(0.02, t, h, 1, v0, cb) > standardize_q(0.01, t, h, 1, v0, cb));
    }

    #[test]
    fn asymptotic_rule() {
        assert!(asymptotic_reference(3.0, 0.05));
        assert!(!asymptotic_reference(0.0, 0.05));
        assert!(!asymptotic_reference(0.0, 0.49));
    }

    #[test]
    fn order_statistics_and_p_values() {
        let null: Vec<f64> = (1..=199).map(|v| v as f64).collect();
        assert_eq!(critical_value(&null, 0.05), 190.0);
        assert_eq!(critical_value(&null, 0.10), 180.0);
        assert_eq!(critical_value(&null, 0.001), f64::INFINITY);
        assert_eq!(bootstrap_p_value(&null, 1000.0), 1.0 / 200.0);
        assert_eq!(bootstrap_p_value(&null, 0.0), 1.0);
        // rejecting above the critical value is the same as p <= α
        for q in [189.5, 190.0, 190.5] {
            let rej = q > critical_value(&null, 0.05);
            assert_eq!(rej, bootstrap_p_value(&null, q) <= 0.05);
        }
    }
}
