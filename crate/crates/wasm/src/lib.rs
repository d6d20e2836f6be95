//! WebAssembly bindings for the demo page in `www/`. Each export takes
//! plain numbers and returns a JSON document; errors come back as strings.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use tvvar::estimate::{FitOptions, TvVarFit};
use tvvar::irf::{irf_point, CompanionForm, Scheme};
use tvvar::linalg::Matrix;
use tvvar::rng::{stream, tag};
use tvvar::sim::{simulate_panel, DgpSpec, StabilityPolicy};
use tvvar::stability::{bootstrap_test, BootstrapOptions, RestrictionSpec};
use tvvar::{KernelSpec, ObservedPanel};

type Out = Result<String, String>;

fn dgp(name: &str, t: usize, b: f64) -> Result<(DgpSpec, StabilityPolicy), String> {
    match name {
        "eq42" => Ok((DgpSpec::eq42(), StabilityPolicy::Allow)),
        "eq43" => {
            let h = (t as f64).powf(-0.2);
            Ok((DgpSpec::eq43(b, DgpSpec::local_rate(t, h)), StabilityPolicy::Enforce))
        }
        "macro3" => Ok((DgpSpec::macro3(), StabilityPolicy::Enforce)),
        other => Err(format!("unknown process '{other}'")),
    }
}

fn sample(spec: &DgpSpec, t: usize, seed: u32, policy: StabilityPolicy) -> Result<ObservedPanel, String> {
    let mut rng = stream(seed as u64, &[tag::PANEL, t as u64]);
    simulate_panel(spec, t, spec.p, &mut rng, policy).map_err(|e| e.to_string())
}

fn json<T: Serialize>(v: &T) -> Out {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

fn grid(g: usize) -> Vec<f64> {
    (0..g).map(|i| (i as f64 + 0.5) / g as f64).collect()
}

#[derive(Serialize)]
struct CoefPath {
    row: usize,
    col: usize,
    truth: Vec<f64>,
    estimate: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Serialize)]
struct FitView {
    labels: Vec<String>,
    series: Vec<Vec<f64>>,
    h: f64,
    tau: Vec<f64>,
    paths: Vec<CoefPath>,
}

/// Simulates a path and tracks every lag-1 coefficient with 95% bands.
pub fn fit_paths_json(process: &str, t: usize, seed: u32, h: f64, points: usize) -> Out {
    let (spec, policy) = dgp(process, t, 0.0)?;
    let panel = sample(&spec, t, seed, policy)?;
    let kernel = KernelSpec::epanechnikov();
    let fit = TvVarFit::fit(&panel, FitOptions { p: spec.p, h }, &kernel).map_err(|e| e.to_string())?;
    let taus = grid(points.max(2));
    let d = spec.d;
    let mut paths: Vec<CoefPath> = (0..d * d)
        .map(|k| CoefPath {
            row: k % d,
            col: k / d,
            truth: Vec::new(),
            estimate: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
        })
        .collect();
    let z = 1.959963984540054;
    let th = (t as f64 * h).sqrt();
    for &tau in &taus {
        let gp = fit.estimate_at(&kernel, tau).map_err(|e| e.to_string())?;
        let v = fit.vhat(&kernel, &gp).ok().map(|v| v.assemble());
        let a1 = gp.coef.lag_block(1);
        let truth = &spec.at(tau).lags[0];
        for path in paths.iter_mut() {
            let (r, c) = (path.row, path.col);
            let est = a1[(r, c)];
            // position of A_1[r, c] in vec [a, A_1, ...]
            let idx = d + c * d + r;
            let half = v.as_ref().map_or(f64::NAN, |v| z * v[(idx, idx)].max(0.0).sqrt() / th);
            path.truth.push(truth[(r, c)]);
            path.estimate.push(est);
            path.lower.push(est - half);
            path.upper.push(est + half);
        }
    }
    json(&FitView {
        labels: panel.labels().to_vec(),
        series: (0..d).map(|c| (1..=panel.len() as isize).map(|i| panel.x(i)[c]).collect()).collect(),
        h,
        tau: taus,
        paths,
    })
}

#[derive(Serialize)]
struct IrfView {
    tau: f64,
    scheme: Scheme,
    stable: bool,
    radius: f64,
    /// `[row][col][horizon]`.
    estimate: Vec<Vec<Vec<f64>>>,
    se: Vec<Vec<Vec<f64>>>,
    truth: Vec<Vec<Vec<f64>>>,
}

fn by_entry(ms: &[Matrix], d: usize) -> Vec<Vec<Vec<f64>>> {
    (0..d)
        .map(|r| (0..d).map(|c| ms.iter().map(|m| m[(r, c)]).collect()).collect())
        .collect()
}

/// Structural responses at one `τ` with standard errors and the population
/// responses of the simulating process.
pub fn irf_json(process: &str, t: usize, seed: u32, h: f64, tau: f64, horizons: usize, long_run: bool) -> Out {
    let (spec, policy) = dgp(process, t, 0.0)?;
    let panel = sample(&spec, t, seed, policy)?;
    let kernel = KernelSpec::epanechnikov();
    let fit = TvVarFit::fit(&panel, FitOptions { p: spec.p, h }, &kernel).map_err(|e| e.to_string())?;
    let gp = fit.estimate_at(&kernel, tau).map_err(|e| e.to_string())?;
    let v = fit.vhat(&kernel, &gp).map_err(|e| e.to_string())?.assemble();
    let scheme = if long_run { Scheme::LongRun } else { Scheme::ShortRun };
    let ip = irf_point(scheme, &gp, Some(&v), horizons, t, h).map_err(|e| e.to_string())?;
    let truth_pt = spec.at(tau);
    let omega = &truth_pt.loading * truth_pt.loading.transpose();
    let truth = tvvar::irf::identify(scheme, &truth_pt.lags, &omega, tau)
        .map(|id| {
            let psi = CompanionForm::new(&truth_pt.lags).map(|c| c.vma(horizons)).unwrap_or_default();
            psi.iter().map(|p| p * &id.impact).collect::<Vec<_>>()
        })
        .map_err(|e| e.to_string())?;
    let d = spec.d;
    json(&IrfView {
        tau,
        scheme,
        stable: ip.stable,
        radius: ip.radius,
        estimate: by_entry(&ip.responses, d),
        se: by_entry(&ip.se, d),
        truth: by_entry(&truth, d),
    })
}

/// Constancy test of `A_1` on one draw of the local-alternative design.
pub fn stability_json(b: f64, t: usize, seed: u32, h_scale: f64, replications: usize) -> Out {
    let h = h_scale * (t as f64).powf(-0.2);
    let spec = DgpSpec::eq43(b, DgpSpec::local_rate(t, h));
    let panel = sample(&spec, t, seed, StabilityPolicy::Enforce)?;
    let kernel = KernelSpec::epanechnikov();
    let restriction = RestrictionSpec::named("A1", 2, 2).map_err(|e| e.to_string())?;
    let opts = BootstrapOptions {
        replications,
        seed: seed as u64,
        ..BootstrapOptions::default()
    };
    let report = bootstrap_test(&panel, 2, h, &restriction, &kernel, &opts).map_err(|e| e.to_string())?;
    json(&report)
}

#[wasm_bindgen]
pub fn fit_paths(process: &str, t: usize, seed: u32, h: f64, points: usize) -> Result<String, JsValue> {
    fit_paths_json(process, t, seed, h, points).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn impulse_responses(
    process: &str,
    t: usize,
    seed: u32,
    h: f64,
    tau: f64,
    horizons: usize,
    long_run: bool,
) -> Result<String, JsValue> {
    irf_json(process, t, seed, h, tau, horizons, long_run).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn stability_test(b: f64, t: usize, seed: u32, h_scale: f64, replications: usize) -> Result<String, JsValue> {
    stability_json(b, t, seed, h_scale, replications).map_err(|e| JsValue::from_str(&e))
}
