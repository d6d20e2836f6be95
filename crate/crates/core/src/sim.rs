//! Data-generating processes and panel simulation.
//!
//! A [`DgpSpec`] maps rescaled time to `(a(τ), A_1(τ)..A_p(τ), ω(τ))`.
//! Arguments below zero are frozen at `τ = 0`, so the pre-sample behaves as
//! a fixed-coefficient VAR(p).

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TvVarError};
use crate::irf::{long_run_matrix, CompanionForm};
use crate::linalg::{self, Matrix, Vector};
use crate::panel::ObservedPanel;

pub const DEFAULT_BURN_IN: usize = 200;
pub const STABILITY_GRID: usize = 101;

/// True parameters at one `τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DgpPoint {
    pub intercept: Vector,
    pub lags: Vec<Matrix>,
    pub loading: Matrix,
}

impl DgpPoint {
    /// `[a, A_1, …, A_p]`.
    pub fn coef(&self) -> Matrix {
        let d = self.intercept.len();
        let mut c = Matrix::zeros(d, 1 + d * self.lags.len());
        c.column_mut(0).copy_from(&self.intercept);
        for (j, b) in self.lags.iter().enumerate() {
            c.view_mut((0, 1 + j * d), (d, d)).copy_from(b);
        }
        c
    }

    pub fn omega(&self) -> Matrix {
        &self.loading * self.loading.transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "law")]
pub enum Innovation {
    Normal,
    /// Student-t scaled to unit variance (`df > 2`).
    StudentT { df: f64 },
}

impl Innovation {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Innovation::Normal => rng.sample(StandardNormal),
            Innovation::StudentT { df } => {
                let t = StudentT::new(df).expect("df > 0");
                t.sample(rng) * ((df - 2.0) / df).sqrt()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityPolicy {
    /// Refuse specs whose companion radius reaches 1 on `[0, 1]`.
    Enforce,
    Allow,
}

type PathFn = Arc<dyn Fn(f64) -> DgpPoint + Send + Sync>;

#[derive(Clone)]
pub struct DgpSpec {
    pub name: String,
    pub d: usize,
    pub p: usize,
    path: PathFn,
    pub innovation: Innovation,
    pub burn_in: usize,
}

impl std::fmt::Debug for DgpSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DgpSpec")
            .field("name", &self.name)
            .field("d", &self.d)
            .field("p", &self.p)
            .field("innovation", &self.innovation)
            .field("burn_in", &self.burn_in)
            .finish()
    }
}

fn m2(a: f64, b: f64, c: f64, d: f64) -> Matrix {
    Matrix::from_row_slice(2, 2, &[a, b, c, d])
}

fn eq42_a2(tau: f64) -> Matrix {
    let e = (tau - 0.5).exp();
    let q = 0.8 * (tau - 0.5).powi(2);
    m2(-0.2 * e, q, q, -0.4 + 0.3 * (PI * tau).cos())
}

fn eq42_loading(tau: f64) -> Matrix {
    let e = (0.5 - tau).exp();
    m2(1.5 + 0.2 * e, 0.0, 0.1 * e, 1.5 + 0.5 * (tau - 0.5).powi(2))
}

impl DgpSpec {
    /// User-defined paths. `f` is only ever called with `τ ∈ [0, 1]`.
    pub fn new(
        name: impl Into<String>,
        d: usize,
        p: usize,
        f: impl Fn(f64) -> DgpPoint + Send + Sync + 'static,
    ) -> Self {
        DgpSpec {
            name: name.into(),
            d,
            p,
            path: Arc::new(f),
            innovation: Innovation::Normal,
            burn_in: DEFAULT_BURN_IN,
        }
    }

    /// Bivariate VAR(2) with sinusoidal intercepts and drifting lags.
    pub fn eq42() -> Self {
        DgpSpec::new("eq42", 2, 2, |tau| {
            let e = (tau - 0.5).exp();
            let cub = 0.8 * (tau - 0.5).powi(3);
            DgpPoint {
                intercept: Vector::from_vec(vec![0.5 * (2.0 * PI * tau).sin(), 0.5 * (2.0 * PI * tau).cos()]),
                lags: vec![m2(0.8 * e, cub, cub, 0.8 + 0.3 * (PI * tau).sin()), eq42_a2(tau)],
                loading: eq42_loading(tau),
            }
        })
    }

    /// Local alternative `A_1(τ) = A_1 + b d_T G(τ)`, no intercept; `b = 0`
    /// is the constant-`A_1` null.
    pub fn eq43(b: f64, d_t: f64) -> Self {
        DgpSpec::new(format!("eq43(b={b})"), 2, 2, move |tau| {
            let g = (tau - 1.0).exp();
            let s = b * d_t;
            DgpPoint {
                intercept: Vector::zeros(2),
                lags: vec![
                    m2(0.4, -0.1, -0.1, 0.4) + m2(2.0 * g - 1.0, g - 1.0, g - 1.0, 2.0 * g - 1.0) * s,
                    eq42_a2(tau),
                ],
                loading: eq42_loading(tau),
            }
        })
    }

    /// Three-variable VAR(2) with a slowly rising output persistence and a
    /// falling inflation coefficient. Used for workflow examples.
    pub fn macro3() -> Self {
        DgpSpec::new("macro3", 3, 2, |tau| {
            let a1 = Matrix::from_row_slice(
                3,
                3,
                &[
                    0.5 + 0.2 * tau, 0.1, 0.0,
                    0.1, 0.6 - 0.3 * tau, 0.05,
                    0.0, 0.2, 0.7,
                ],
            );
            let a2 = Matrix::from_diagonal_element(3, 3, -0.1);
            let loading = Matrix::from_row_slice(
                3,
                3,
                &[
                    0.8, 0.0, 0.0,
                    0.2 - 0.2 * tau, 0.6, 0.0,
                    0.1, 0.1 + 0.2 * tau, 0.5,
                ],
            );
            DgpPoint {
                intercept: Vector::from_row_slice(&[0.5, 0.3 + 0.3 * tau, 0.2]),
                lags: vec![a1, a2],
                loading,
            }
        })
    }

    /// `d_T = T^{-1/2} h^{-1/4}`.
    pub fn local_rate(sample_len: usize, h: f64) -> f64 {
        (sample_len as f64).powf(-0.5) * h.powf(-0.25)
    }

    pub fn with_innovation(mut self, law: Innovation) -> Self {
        self.innovation = law;
        self
    }

    pub fn with_burn_in(mut self, n: usize) -> Self {
        self.burn_in = n;
        self
    }

    /// Parameters at `τ`, clamped to `[0, 1]`.
    pub fn at(&self, tau: f64) -> DgpPoint {
        (self.path)(tau.clamp(0.0, 1.0))
    }

    /// Largest companion radius over an equally spaced grid, with its `τ`.
    pub fn max_radius(&self, points: usize) -> Result<(f64, f64)> {
        let mut worst = (0.0, -1.0);
        for i in 0..points {
            let tau = i as f64 / (points - 1).max(1) as f64;
            let r = CompanionForm::new(&self.at(tau).lags)?.radius;
            if r > worst.1 {
                worst = (tau, r);
            }
        }
        Ok(worst)
    }

    pub fn min_radius(&self, points: usize) -> Result<f64> {
        let mut best = f64::INFINITY;
        for i in 0..points {
            let tau = i as f64 / (points - 1).max(1) as f64;
            best = best.min(CompanionForm::new(&self.at(tau).lags)?.radius);
        }
        Ok(best)
    }

    pub fn check_stable(&self) -> Result<()> {
        let (tau, radius) = self.max_radius(STABILITY_GRID)?;
        if radius >= 1.0 {
            return Err(TvVarError::UnstableDgp { tau, radius });
        }
        Ok(())
    }

    /// Unconditional mean of the frozen `τ = 0` VAR, or zero when
    /// `I − Σ A_i(0)` is singular.
    pub fn initial_mean(&self) -> Vector {
        let p0 = self.at(0.0);
        let a1 = long_run_matrix(&p0.lags);
        match linalg::checked_inverse(&a1, 1e-12) {
            Ok(inv) => inv * p0.intercept,
            Err(_) => Vector::zeros(self.d),
        }
    }

    /// Innovations needed for a panel of length `T` with `presample` kept rows.
    pub fn innovation_count(&self, sample_len: usize, presample: usize) -> usize {
        (self.burn_in + presample + sample_len) * self.d
    }

    pub fn draw_innovations<R: Rng + ?Sized>(&self, sample_len: usize, presample: usize, rng: &mut R) -> Vec<f64> {
        (0..self.innovation_count(sample_len, presample))
            .map(|_| self.innovation.draw(rng))
            .collect()
    }
}

/// Simulates `burn_in` discarded and `presample` retained draws from the
/// frozen `τ = 0` VAR (started at its mean), then `T` draws with
/// parameters at `τ_t = t/T`.
pub fn simulate_with_innovations(
    spec: &DgpSpec,
    sample_len: usize,
    presample: usize,
    eps: &[f64],
    policy: StabilityPolicy,
) -> Result<ObservedPanel> {
    if policy == StabilityPolicy::Enforce {
        spec.check_stable()?;
    }
    let d = spec.d;
    let p = spec.p;
    if eps.len() != spec.innovation_count(sample_len, presample) {
        return Err(TvVarError::Dimension(format!(
            "expected {} innovations, got {}",
            spec.innovation_count(sample_len, presample),
            eps.len()
        )));
    }
    let frozen = spec.at(0.0);
    let mu = spec.initial_mean();
    let total = spec.burn_in + presample + sample_len;
    let mut hist: Vec<Vec<f64>> = vec![mu.iter().copied().collect(); p.max(1)];
    let mut rows = Vec::with_capacity(presample + sample_len);
    let pre = spec.burn_in + presample;
    for s in 0..total {
        let owned;
        let par = if s < pre {
            &frozen
        } else {
            let t = s - pre + 1;
            owned = spec.at(t as f64 / sample_len as f64);
            &owned
        };
        let e = &eps[s * d..(s + 1) * d];
        let mut x: Vec<f64> = par.intercept.iter().copied().collect();
        let n = hist.len();
        for (j, a) in par.lags.iter().enumerate() {
            let lag = &hist[n - 1 - j];
            for r in 0..d {
                for c in 0..d {
                    x[r] += a[(r, c)] * lag[c];
                }
            }
        }
        for r in 0..d {
            for c in 0..d {
                x[r] += par.loading[(r, c)] * e[c];
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(TvVarError::NonFinite { row: s, col: 0 });
        }
        if s >= spec.burn_in {
            rows.push(x.clone());
        }
        hist.push(x);
        if hist.len() > p.max(1) {
            hist.remove(0);
        }
    }
    let labels = (1..=d).map(|i| format!("x{i}")).collect();
    ObservedPanel::new(rows, presample, labels)
}

pub fn simulate_panel<R: Rng + ?Sized>(
    spec: &DgpSpec,
    sample_len: usize,
    presample: usize,
    rng: &mut R,
    policy: StabilityPolicy,
) -> Result<ObservedPanel> {
    let eps = spec.draw_innovations(sample_len, presample, rng);
    simulate_with_innovations(spec, sample_len, presample, &eps, policy)
}

/// `T x d` panel of i.i.d. standard normals with `presample` extra rows.
pub fn gaussian_noise_panel<R: Rng + ?Sized>(
    d: usize,
    sample_len: usize,
    presample: usize,
    rng: &mut R,
) -> Result<ObservedPanel> {
    let rows = (0..presample + sample_len)
        .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    ObservedPanel::new(rows, presample, (1..=d).map(|i| format!("x{i}")).collect())
}
