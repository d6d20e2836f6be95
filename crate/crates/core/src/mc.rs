//! Monte Carlo drivers for the lag-selection, estimation-accuracy and
//! size/power experiments. Replication `r` at sample size `T` always draws
//! from stream `(seed, T, r)`, so a result is fixed by its configuration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimate::{pointwise_ci, normal_quantile, FitOptions, TvVarFit};
use crate::irf::{irf_point, Scheme};
use crate::kernel::KernelSpec;
use crate::linalg::{vech, Matrix};
use crate::rng::{derive_seed, stream, tag};
use crate::select::{cv_bandwidth, select_lag, BandwidthPolicy};
use crate::sim::{simulate_with_innovations, DgpSpec, StabilityPolicy};
use crate::stability::{
    bootstrap_null, critical_value, standardize_q, statistic_for_panel, BootstrapOptions, RestrictionSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult<R, A> {
    pub table: String,
    pub replications: usize,
    pub seed: u64,
    pub records: Vec<R>,
    pub aggregates: Vec<A>,
}

fn panel_stream(seed: u64, t: usize, rep: usize) -> rand_chacha::ChaCha8Rng {
    stream(seed, &[tag::PANEL, t as u64, rep as u64])
}

fn bandwidth_grid(t: usize, alphas: &[f64]) -> Vec<f64> {
    let base = (t as f64).powf(-0.2);
    alphas.iter().map(|a| a * base).collect()
}

pub const DEFAULT_CV_ALPHAS: [f64; 8] = [0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8];

// ---------------------------------------------------------------- Table 1

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Config {
    pub reps: usize,
    pub t_list: Vec<usize>,
    pub p_max: usize,
    pub seed: u64,
    pub cv_alphas: Vec<f64>,
}

impl Default for Table1Config {
    fn default() -> Self {
        Table1Config {
            reps: 200,
            t_list: vec![200, 400, 800],
            p_max: 4,
            seed: 1,
            cv_alphas: DEFAULT_CV_ALPHAS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Record {
    pub t: usize,
    pub rep: usize,
    pub p_hat: usize,
    pub h: Vec<f64>,
    pub ic: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub t: usize,
    pub below: f64,
    pub equal: f64,
    pub above: f64,
}

pub fn aggregate_table1(records: &[Table1Record], true_p: usize) -> Vec<Table1Row> {
    let mut ts: Vec<usize> = records.iter().map(|r| r.t).collect();
    ts.dedup();
    ts.iter()
        .map(|&t| {
            let rs: Vec<_> = records.iter().filter(|r| r.t == t).collect();
            let n = rs.len() as f64;
            let count = |f: &dyn Fn(usize) -> bool| rs.iter().filter(|r| f(r.p_hat)).count() as f64 / n;
            Table1Row {
                t,
                below: count(&|p| p < true_p),
                equal: count(&|p| p == true_p),
                above: count(&|p| p > true_p),
            }
        })
        .collect()
}

/// Lag-order frequencies under the drifting VAR(2) design.
pub fn run_table1(cfg: &Table1Config, kernel: &KernelSpec) -> Result<McResult<Table1Record, Table1Row>> {
    let dgp = DgpSpec::eq42();
    let mut records = Vec::new();
    for &t in &cfg.t_list {
        let policy = BandwidthPolicy::Cv(bandwidth_grid(t, &cfg.cv_alphas));
        let part: Result<Vec<Table1Record>> = (0..cfg.reps)
            .into_par_iter()
            .map(|rep| {
                let eps = dgp.draw_innovations(t, cfg.p_max, &mut panel_stream(cfg.seed, t, rep));
                let panel = simulate_with_innovations(&dgp, t, cfg.p_max, &eps, StabilityPolicy::Allow)?;
                let sel = select_lag(&panel, cfg.p_max, &policy, kernel)?;
                Ok(Table1Record {
                    t,
                    rep,
                    p_hat: sel.chosen,
                    h: sel.h,
                    ic: sel.ic,
                })
            })
            .collect();
        records.extend(part?);
    }
    let aggregates = aggregate_table1(&records, dgp.p);
    Ok(McResult {
        table: "lag-selection".into(),
        replications: cfg.reps,
        seed: cfg.seed,
        records,
        aggregates,
    })
}

// ---------------------------------------------------------------- Table 2

pub const TABLE2_QUANTITIES: [&str; 4] = ["A", "Omega", "B1", "B5"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Config {
    pub reps: usize,
    pub t_list: Vec<usize>,
    pub seed: u64,
    pub level: f64,
    /// Restrict coverage to `τ ∈ [h, 1 − h]`.
    pub interior_coverage: bool,
    pub cv_alphas: Vec<f64>,
}

impl Default for Table2Config {
    fn default() -> Self {
        Table2Config {
            reps: 200,
            t_list: vec![200, 400, 800],
            seed: 2,
            level: 0.95,
            interior_coverage: true,
            cv_alphas: DEFAULT_CV_ALPHAS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Record {
    pub t: usize,
    pub rep: usize,
    pub h: f64,
    /// Per quantity: summed squared Frobenius error and number of points.
    pub sse: [f64; 4],
    pub points: [usize; 4],
    /// Per quantity: interval checks made and how many covered the truth.
    pub checks: [usize; 4],
    pub hits: [usize; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Cell {
    pub t: usize,
    pub quantity: String,
    pub rmse: f64,
    /// `None` when no interval check was made (no interior points).
    pub coverage: Option<f64>,
}

pub fn aggregate_table2(records: &[Table2Record]) -> Vec<Table2Cell> {
    let mut ts: Vec<usize> = records.iter().map(|r| r.t).collect();
    ts.dedup();
    let mut out = Vec::new();
    for &t in &ts {
        let rs: Vec<_> = records.iter().filter(|r| r.t == t).collect();
        for (q, name) in TABLE2_QUANTITIES.iter().enumerate() {
            let sse: f64 = rs.iter().map(|r| r.sse[q]).sum();
            let n: usize = rs.iter().map(|r| r.points[q]).sum();
            let checks: usize = rs.iter().map(|r| r.checks[q]).sum();
            let hits: usize = rs.iter().map(|r| r.hits[q]).sum();
            let cov = (checks > 0).then(|| hits as f64 / checks as f64);
            out.push(Table2Cell {
                t,
                quantity: name.to_string(),
                rmse: (sse / n.max(1) as f64).sqrt(),
                coverage: cov,
            });
        }
    }
    out
}

fn table2_replication(
    dgp: &DgpSpec,
    t: usize,
    rep: usize,
    cfg: &Table2Config,
    kernel: &KernelSpec,
) -> Result<Table2Record> {
    let p = dgp.p;
    let eps = dgp.draw_innovations(t, p, &mut panel_stream(cfg.seed, t, rep));
    let panel = simulate_with_innovations(dgp, t, p, &eps, StabilityPolicy::Allow)?;
    let h = cv_bandwidth(&panel, p, &bandwidth_grid(t, &cfg.cv_alphas), kernel)?.chosen;
    let fit = TvVarFit::fit(&panel, FitOptions { p, h }, kernel)?;
    let z = normal_quantile(0.5 + 0.5 * cfg.level);
    let mut sse = [0.0; 4];
    let mut points = [0usize; 4];
    let mut hits = [0usize; 4];
    let mut checks = [0usize; 4];
    for gp in &fit.points {
        let truth = dgp.at(gp.tau);
        let in_cov = !cfg.interior_coverage || fit.is_interior(gp.tau);
        let e_a = &gp.coef.coef - truth.coef();
        sse[0] += e_a.norm_squared();
        points[0] += 1;
        let omega_true = truth.omega();
        sse[1] += (&gp.omega - &omega_true).norm_squared();
        points[1] += 1;
        let v = match fit.vhat(kernel, gp) {
            Ok(v) => v.assemble(),
            Err(_) => continue,
        };
        if in_cov {
            let ci = pointwise_ci(gp, &v, t, h, cfg.level);
            let beta_true = crate::linalg::vec(&truth.coef());
            for (i, bt) in beta_true.iter().enumerate() {
                checks[0] += 1;
                if ci.coef_lower[i] <= *bt && *bt <= ci.coef_upper[i] {
                    hits[0] += 1;
                }
            }
            let vo = vech(&omega_true)?;
            for (i, ot) in vo.iter().enumerate() {
                checks[1] += 1;
                if ci.omega_lower[i] <= *ot && *ot <= ci.omega_upper[i] {
                    hits[1] += 1;
                }
            }
        }
        let Ok(ip) = irf_point(Scheme::ShortRun, gp, Some(&v), 5, t, h) else {
            continue;
        };
        let psi_true = crate::irf::CompanionForm::new(&truth.lags)?.vma(5);
        for (q, j) in [(2usize, 1usize), (3, 5)] {
            let b_true: Matrix = &psi_true[j] * &truth.loading;
            sse[q] += (&ip.responses[j] - &b_true).norm_squared();
            points[q] += 1;
            if in_cov {
                for c in 0..dgp.d {
                    for r in 0..dgp.d {
                        let half = z * ip.se[j][(r, c)];
                        checks[q] += 1;
                        if (ip.responses[j][(r, c)] - b_true[(r, c)]).abs() <= half {
                            hits[q] += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(Table2Record {
        t,
        rep,
        h,
        sse,
        points,
        checks,
        hits,
    })
}

/// RMSE and pointwise-interval coverage for `Â`, `Ω̂`, `B̂_1`, `B̂_5`
/// (short-run scheme) under the drifting VAR(2) design with true `p`.
pub fn run_table2(cfg: &Table2Config, kernel: &KernelSpec) -> Result<McResult<Table2Record, Table2Cell>> {
    let dgp = DgpSpec::eq42();
    let mut records = Vec::new();
    for &t in &cfg.t_list {
        let part: Result<Vec<_>> = (0..cfg.reps)
            .into_par_iter()
            .map(|rep| table2_replication(&dgp, t, rep, cfg, kernel))
            .collect();
        records.extend(part?);
    }
    let aggregates = aggregate_table2(&records);
    Ok(McResult {
        table: "estimation-accuracy".into(),
        replications: cfg.reps,
        seed: cfg.seed,
        records,
        aggregates,
    })
}

// ---------------------------------------------------------------- Table 3

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table3Config {
    pub reps: usize,
    pub t_list: Vec<usize>,
    pub b_list: Vec<f64>,
    /// Bandwidth constants `α` in `h = α T^{-1/5}`.
    pub alphas: Vec<f64>,
    pub bootstrap: usize,
    pub seed: u64,
    /// Draw a fresh null sample for every replication instead of sharing
    /// one per `(T, h)`.
    pub per_replication_bootstrap: bool,
    pub block: String,
}

impl Default for Table3Config {
    fn default() -> Self {
        Table3Config {
            reps: 200,
            t_list: vec![400, 800],
            b_list: vec![0.0, 2.0, 4.0],
            alphas: vec![0.6, 1.0],
            bootstrap: 199,
            seed: 3,
            per_replication_bootstrap: false,
            block: "A1".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table3Record {
    pub t: usize,
    pub alpha: f64,
    pub b: f64,
    pub rep: usize,
    pub q_hat: f64,
    pub q_star: f64,
    /// Bootstrap critical values; `None` when `B` is too small for the level.
    pub critical_05: Option<f64>,
    pub critical_10: Option<f64>,
}

impl Table3Record {
    pub fn reject(&self, alpha: f64) -> bool {
        let cv = if alpha == 0.05 { self.critical_05 } else { self.critical_10 };
        cv.is_some_and(|c| self.q_hat > c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table3Cell {
    pub t: usize,
    pub alpha: f64,
    pub h: f64,
    pub b: f64,
    pub reject_05: f64,
    pub reject_10: f64,
    pub asymptotic_05: f64,
}

pub fn aggregate_table3(records: &[Table3Record]) -> Vec<Table3Cell> {
    let mut keys: Vec<(usize, f64, f64)> = Vec::new();
    for r in records {
        if !keys.contains(&(r.t, r.alpha, r.b)) {
            keys.push((r.t, r.alpha, r.b));
        }
    }
    let z05 = normal_quantile(0.95);
    keys.iter()
        .map(|&(t, alpha, b)| {
            let rs: Vec<_> = records.iter().filter(|r| (r.t, r.alpha, r.b) == (t, alpha, b)).collect();
            let n = rs.len() as f64;
            Table3Cell {
                t,
                alpha,
                h: alpha * (t as f64).powf(-0.2),
                b,
                reject_05: rs.iter().filter(|r| r.reject(0.05)).count() as f64 / n,
                reject_10: rs.iter().filter(|r| r.reject(0.10)).count() as f64 / n,
                asymptotic_05: rs.iter().filter(|r| r.q_star > z05).count() as f64 / n,
            }
        })
        .collect()
}

fn critical_pair(null: &mut [f64]) -> (Option<f64>, Option<f64>) {
    null.sort_by(f64::total_cmp);
    let finite = |c: f64| c.is_finite().then_some(c);
    (finite(critical_value(null, 0.05)), finite(critical_value(null, 0.10)))
}

/// Size and local power of the bootstrap-calibrated constancy test of
/// `A_1` under the local-alternative design. Replications share their
/// innovations across `b` and `h`.
pub fn run_table3(cfg: &Table3Config, kernel: &KernelSpec) -> Result<McResult<Table3Record, Table3Cell>> {
    let d = 2;
    let p = 2;
    let spec = RestrictionSpec::named(&cfg.block, d, p)?;
    let mut records = Vec::new();
    for &t in &cfg.t_list {
        for (ai, &alpha) in cfg.alphas.iter().enumerate() {
            let h = alpha * (t as f64).powf(-0.2);
            let null_opts = |extra: &[u64]| {
                let mut path = vec![tag::BOOTSTRAP, t as u64, ai as u64];
                path.extend_from_slice(extra);
                BootstrapOptions {
                    replications: cfg.bootstrap,
                    seed: derive_seed(cfg.seed, &path),
                    ..BootstrapOptions::default()
                }
            };
            let shared = if cfg.per_replication_bootstrap {
                None
            } else {
                let mut null = bootstrap_null(d, t, p, h, &spec, kernel, &null_opts(&[]))?;
                Some(critical_pair(&mut null))
            };
            for (bi, &b) in cfg.b_list.iter().enumerate() {
                let dgp = DgpSpec::eq43(b, DgpSpec::local_rate(t, h));
                let part: Result<Vec<_>> = (0..cfg.reps)
                    .into_par_iter()
                    .map(|rep| {
                        let eps = dgp.draw_innovations(t, p, &mut panel_stream(cfg.seed, t, rep));
                        let panel = simulate_with_innovations(&dgp, t, p, &eps, StabilityPolicy::Enforce)?;
                        let q = statistic_for_panel(&panel, p, h, &spec, kernel, false)?;
                        let (c05, c10) = match shared {
                            Some(c) => c,
                            None => {
                                let mut null = bootstrap_null(
                                    d,
                                    t,
                                    p,
                                    h,
                                    &spec,
                                    kernel,
                                    &null_opts(&[bi as u64, rep as u64]),
                                )?;
                                critical_pair(&mut null)
                            }
                        };
                        Ok(Table3Record {
                            t,
                            alpha,
                            b,
                            rep,
                            q_hat: q.q_hat,
                            q_star: standardize_q(q.q_hat, t, h, spec.s(), kernel.v0(), kernel.cb()),
                            critical_05: c05,
                            critical_10: c10,
                        })
                    })
                    .collect();
                records.extend(part?);
            }
        }
    }
    let aggregates = aggregate_table3(&records);
    Ok(McResult {
        table: "size-power".into(),
        replications: cfg.reps,
        seed: cfg.seed,
        records,
        aggregates,
    })
}
