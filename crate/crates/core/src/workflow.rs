//! End-to-end steps shared by the command line and the browser demo:
//! lag choice, fit on a reporting grid, diagnostics, responses and
//! constancy tests.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{bg_lm_test, standardized_residuals, BgLmResult};
use crate::error::Result;
use crate::estimate::{FitOptions, GridPoint, TvVarFit};
use crate::io::{LagPolicy, RunConfig};
use crate::irf::{irf_set, Scheme};
use crate::kernel::KernelSpec;
use crate::linalg::{vech, Matrix};
use crate::panel::ObservedPanel;
use crate::select::{resolve_bandwidth, select_lag, BandwidthPolicy, BandwidthSearch, LagSelection};
use crate::stability::{bootstrap_test, BootstrapOptions, StabilityTestReport};

/// Lag order from the policy, with the selection record when one was run.
pub fn resolve_lag(
    panel: &ObservedPanel,
    lag: &LagPolicy,
    bandwidth: &BandwidthPolicy,
    kernel: &KernelSpec,
) -> Result<(usize, Option<LagSelection>)> {
    match *lag {
        LagPolicy::Fixed { p } => Ok((p, None)),
        LagPolicy::Select { p_max } => {
            let sel = select_lag(panel, p_max, bandwidth, kernel)?;
            Ok((sel.chosen, Some(sel)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub tau: f64,
    /// `vec Â(τ)`, column-major over `[a, A_1, …, A_p]`.
    pub coef: Vec<f64>,
    /// `None` where `V̂(τ)` could not be formed.
    pub coef_se: Option<Vec<f64>>,
    /// `vech Ω̂(τ)`.
    pub omega: Vec<f64>,
    pub omega_se: Option<Vec<f64>>,
    pub omega_pd: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub labels: Vec<String>,
    pub p: usize,
    pub h: f64,
    pub sample_len: usize,
    pub rss: f64,
    pub lag_selection: Option<LagSelection>,
    pub bandwidth_search: Option<BandwidthSearch>,
    pub grid: Vec<GridSummary>,
    pub bg_lm: Option<BgLmResult>,
    pub bg_lm_error: Option<String>,
}

/// A fitted model plus the reporting grid it was summarized on.
pub struct FittedModel {
    pub fit: TvVarFit,
    pub grid: Vec<GridPoint>,
    pub report: FitReport,
}

pub fn fit_model(panel: &ObservedPanel, cfg: &RunConfig, kernel: &KernelSpec) -> Result<FittedModel> {
    let (p, lag_selection) = resolve_lag(panel, &cfg.lag, &cfg.bandwidth, kernel)?;
    let panel = panel.aligned_for_lag(p)?;
    let (h, bandwidth_search) = match &lag_selection {
        Some(sel) => (sel.chosen_h(), sel.searches[sel.chosen - 1].clone()),
        None => resolve_bandwidth(&panel, p, &cfg.bandwidth, kernel)?,
    };
    let fit = TvVarFit::fit(&panel, FitOptions { p, h }, kernel)?;
    let t = fit.len();
    let grid = fit.reporting_grid(kernel, cfg.grid)?;
    let th = t as f64 * h;
    let summaries = grid
        .iter()
        .map(|gp| {
            let coef: Vec<f64> = gp.beta().iter().copied().collect();
            let omega: Vec<f64> = vech(&gp.omega).expect("square").iter().copied().collect();
            let se: Option<Vec<f64>> = fit.vhat(kernel, gp).ok().map(|v| {
                let v = v.assemble();
                (0..v.nrows()).map(|i| (v[(i, i)].max(0.0) / th).sqrt()).collect()
            });
            let coef_se = se.as_ref().map(|s| s[..coef.len()].to_vec());
            let omega_se = se.map(|s| s[coef.len()..].to_vec());
            GridSummary {
                tau: gp.tau,
                coef,
                coef_se,
                omega,
                omega_se,
                omega_pd: gp.omega_pd,
            }
        })
        .collect();
    let (bg_lm, bg_lm_error) = match standardized_residuals(&fit).and_then(|e| bg_lm_test(&e, 1)) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let report = FitReport {
        labels: panel.labels().to_vec(),
        p,
        h,
        sample_len: t,
        rss: fit.rss(),
        lag_selection,
        bandwidth_search,
        grid: summaries,
        bg_lm,
        bg_lm_error,
    };
    Ok(FittedModel { fit, grid, report })
}

/// One long-format row: `quantity` is `coef` or `omega`; `row`/`col` index
/// `Â(τ)` (`col` 0 is the intercept) or `Ω̂(τ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub quantity: String,
    pub tau: f64,
    pub row: usize,
    pub col: usize,
    pub value: f64,
    pub se: Option<f64>,
}

pub fn estimate_rows(report: &FitReport) -> Vec<EstimateRow> {
    let d = report.labels.len();
    let mut out = Vec::new();
    for g in &report.grid {
        for (k, &v) in g.coef.iter().enumerate() {
            out.push(EstimateRow {
                quantity: "coef".into(),
                tau: g.tau,
                row: k % d,
                col: k / d,
                value: v,
                se: g.coef_se.as_ref().map(|s| s[k]),
            });
        }
        let mut k = 0;
        for c in 0..d {
            for r in c..d {
                out.push(EstimateRow {
                    quantity: "omega".into(),
                    tau: g.tau,
                    row: r,
                    col: c,
                    value: g.omega[k],
                    se: g.omega_se.as_ref().map(|s| s[k]),
                });
                k += 1;
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrfSurfacePoint {
    pub tau: f64,
    pub stable: bool,
    pub radius: f64,
    /// `B̂_j(τ)` per horizon, column-major `d²`.
    pub responses: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrfSurface {
    pub scheme: Scheme,
    pub horizons: usize,
    pub labels: Vec<String>,
    pub points: Vec<IrfSurfacePoint>,
    pub cumulative: Vec<IrfSurfacePoint>,
    pub skipped: Vec<(f64, String)>,
}

fn flat(ms: &[Matrix]) -> Vec<Vec<f64>> {
    ms.iter().map(|m| m.iter().copied().collect()).collect()
}

pub fn irf_surface(
    model: &FittedModel,
    scheme: Scheme,
    horizons: usize,
    cumulative: bool,
    kernel: &KernelSpec,
) -> IrfSurface {
    let fit = &model.fit;
    let set = irf_set(scheme, &model.grid, horizons, fit.len(), fit.h, cumulative, |gp| {
        Ok(fit.vhat(kernel, gp)?.assemble())
    });
    let points = set
        .points
        .iter()
        .map(|ip| IrfSurfacePoint {
            tau: ip.tau,
            stable: ip.stable,
            radius: ip.radius,
            responses: flat(&ip.responses),
            se: flat(&ip.se),
        })
        .collect();
    let cumulative = set
        .cumulative
        .iter()
        .zip(&set.points)
        .map(|(c, ip)| IrfSurfacePoint {
            tau: c.tau,
            stable: ip.stable,
            radius: ip.radius,
            responses: flat(&c.responses),
            se: flat(&c.se),
        })
        .collect();
    IrfSurface {
        scheme,
        horizons,
        labels: model.report.labels.clone(),
        points,
        cumulative,
        skipped: set.skipped,
    }
}

/// Long-format response row: response of variable `row` to shock `col`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrfRow {
    pub kind: String,
    pub tau: f64,
    pub horizon: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
    pub se: f64,
}

pub fn irf_rows(surface: &IrfSurface) -> Vec<IrfRow> {
    let d = surface.labels.len();
    let mut out = Vec::new();
    for (kind, pts) in [("response", &surface.points), ("cumulative", &surface.cumulative)] {
        for pt in pts {
            for (j, (b, se)) in pt.responses.iter().zip(&pt.se).enumerate() {
                for k in 0..d * d {
                    out.push(IrfRow {
                        kind: kind.into(),
                        tau: pt.tau,
                        horizon: j,
                        row: k % d,
                        col: k / d,
                        value: b[k],
                        se: se[k],
                    });
                }
            }
        }
    }
    out
}

/// Every configured constancy test at the model's `(p, h)`.
pub fn stability_tests(
    panel: &ObservedPanel,
    p: usize,
    h: f64,
    cfg: &RunConfig,
    kernel: &KernelSpec,
) -> Result<Vec<StabilityTestReport>> {
    let opts = BootstrapOptions {
        replications: cfg.bootstrap,
        seed: cfg.seed,
        trim_interior: cfg.trim_interior,
        ..BootstrapOptions::default()
    };
    cfg.restrictions(panel.dim(), p)?
        .iter()
        .map(|spec| bootstrap_test(panel, p, h, spec, kernel, &opts))
        .collect()
}
