//! Breusch–Godfrey LM check for serial correlation in standardized
//! residuals `ε̂_t = ω̂(τ_t)^{-1} η̂_t`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Result, TvVarError};
use crate::estimate::TvVarFit;
use crate::linalg::{cholesky_lower, spd_inverse, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BgLmResult {
    pub order: usize,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// Observations in the auxiliary regression.
    pub n: usize,
}

/// `ω̂(τ_t)^{-1} η̂_t` at every sample point, `ω̂` the short-run factor.
pub fn standardized_residuals(fit: &TvVarFit) -> Result<Matrix> {
    let d = fit.dim();
    let mut out = Matrix::zeros(fit.len(), d);
    for (i, gp) in fit.points.iter().enumerate() {
        let w = cholesky_lower(&gp.omega)?;
        let eta = fit.residuals.row(i).transpose();
        let e = w
            .solve_lower_triangular(&eta)
            .ok_or(TvVarError::NotPositiveDefinite { pivot: 0 })?;
        out.set_row(i, &e.transpose());
    }
    Ok(out)
}

fn ols_residual_cov(y: &Matrix, x: &Matrix) -> Result<Matrix> {
    let xtx = x.transpose() * x;
    let inv = spd_inverse(&xtx)?;
    let b = inv * x.transpose() * y;
    let e = y - x * b;
    Ok(e.transpose() * &e / y.nrows() as f64)
}

/// Regresses `ε̂_t` on `[1, ε̂_{t−1}, …, ε̂_{t−order}]` and on `1` alone;
/// `LM = n (d − tr(Σ_R⁻¹ Σ_U))` against `χ²(d² · order)`.
pub fn bg_lm_test(eps: &Matrix, order: usize) -> Result<BgLmResult> {
    let (t, d) = eps.shape();
    if order == 0 {
        return Err(TvVarError::Config("LM order must be at least 1".into()));
    }
    let n = t.saturating_sub(order);
    let k = 1 + d * order;
    if n <= k + 1 {
        return Err(TvVarError::TooShort { t, minimum: order + k + 2 });
    }
    let y = Matrix::from_fn(n, d, |i, c| eps[(i + order, c)]);
    let xu = Matrix::from_fn(n, k, |i, c| {
        if c == 0 {
            1.0
        } else {
            let lag = 1 + (c - 1) / d;
            eps[(i + order - lag, (c - 1) % d)]
        }
    });
    let xr = Matrix::from_element(n, 1, 1.0);
    let su = ols_residual_cov(&y, &xu)?;
    let sr = ols_residual_cov(&y, &xr)?;
    let sr_inv = spd_inverse(&sr)?;
    let stat = n as f64 * (d as f64 - (sr_inv * su).trace());
    let df = d * d * order;
    let chi = ChiSquared::new(df as f64).map_err(|e| TvVarError::Domain(e.to_string()))?;
    Ok(BgLmResult {
        order,
        statistic: stat,
        df,
        p_value: 1.0 - chi.cdf(stat.max(0.0)),
        n,
    })
}
