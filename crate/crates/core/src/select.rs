//! Lag-order selection by the penalized information criterion and
//! leave-one-out cross-validated bandwidth choice.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TvVarError};
use crate::estimate::{for_each_sample_point, solve_local, FitOptions, TvVarFit};
use crate::kernel::KernelSpec;
use crate::panel::{Design, ObservedPanel};

/// `χ_T = max{h⁴, log T / (T h)} · log log (T h)`.
pub fn penalty_chi(sample_len: usize, h: f64) -> Result<f64> {
    let t = sample_len as f64;
    let th = t * h;
    if !(th > std::f64::consts::E) {
        return Err(TvVarError::Domain(format!(
            "penalty needs T h > e, got T h = {th}"
        )));
    }
    Ok(h.powi(4).max(t.ln() / th) * th.ln().ln())
}

/// `h = α T^{-1/5}` for `α = 0.4, 0.6, …, 1.8`.
pub fn default_bandwidth_grid(sample_len: usize) -> Vec<f64> {
    let base = (sample_len as f64).powf(-0.2);
    (2..=9).map(|k| 0.2 * k as f64 * base).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSearch {
    pub p: usize,
    pub grid: Vec<f64>,
    /// `Σ_t ‖x_t − Â_{−t}(τ_t) z_{t−1}‖²`, `None` for invalid candidates.
    pub cv_scores: Vec<Option<f64>>,
    /// Why a candidate was rejected.
    pub invalid: Vec<Option<String>>,
    pub chosen: f64,
}

impl BandwidthSearch {
    pub fn chosen_score(&self) -> f64 {
        let i = self.grid.iter().position(|h| *h == self.chosen).unwrap();
        self.cv_scores[i].unwrap()
    }

    pub fn chosen_index(&self) -> usize {
        self.grid.iter().position(|h| *h == self.chosen).unwrap()
    }
}

/// Sum of squared prediction errors with observation `t` removed from the
/// kernel sums at `τ_t`. With `leave_out = false` the in-sample fit is
/// scored instead.
pub fn cv_score(design: &Design, kernel: &KernelSpec, h: f64, leave_out: bool) -> Result<f64> {
    if !(h > 0.0 && h < 1.0) {
        return Err(TvVarError::Domain(format!("bandwidth {h} outside (0, 1)")));
    }
    let (m, d) = (design.m, design.d);
    let t_f = design.len as f64;
    let mut score = 0.0;
    for_each_sample_point(design, kernel, h, |i, sums| {
        let tau = (i + 1) as f64 / t_f;
        if leave_out {
            sums.exclude_center(design, kernel, i, h);
        }
        if sums.kmass[0] <= 0.0 {
            return Err(TvVarError::DegenerateWindow { tau, h });
        }
        let theta = solve_local(sums, m, d, tau)?;
        let z = design.z_row(i);
        let x = design.x_row(i);
        for c in 0..d {
            let fitted: f64 = (0..m).map(|a| theta[a * d + c] * z[a]).sum();
            let e = x[c] - fitted;
            score += e * e;
        }
        Ok(())
    })?;
    Ok(score)
}

/// Evaluates every candidate bandwidth. Candidates that hit a degenerate
/// window or a singular design are marked invalid; ties go to the smallest
/// `h`.
pub fn cv_bandwidth(panel: &ObservedPanel, p: usize, grid: &[f64], kernel: &KernelSpec) -> Result<BandwidthSearch> {
    let design = Design::new(panel, p)?;
    cv_bandwidth_design(&design, grid, kernel)
}

pub(crate) fn cv_bandwidth_design(design: &Design, grid: &[f64], kernel: &KernelSpec) -> Result<BandwidthSearch> {
    if grid.is_empty() {
        return Err(TvVarError::Config("empty bandwidth grid".into()));
    }
    let mut scores = Vec::with_capacity(grid.len());
    let mut invalid = Vec::with_capacity(grid.len());
    for &h in grid {
        match cv_score(design, kernel, h, true) {
            Ok(s) if s.is_finite() => {
                scores.push(Some(s));
                invalid.push(None);
            }
            Ok(s) => {
                scores.push(None);
                invalid.push(Some(format!("non-finite score {s}")));
            }
            Err(e @ (TvVarError::DegenerateWindow { .. } | TvVarError::SingularDesign { .. })) => {
                scores.push(None);
                invalid.push(Some(e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.iter().enumerate() {
        if let Some(s) = s {
            let better = match best {
                None => true,
                Some((j, b)) => *s < b || (*s == b && grid[i] < grid[j]),
            };
            if better {
                best = Some((i, *s));
            }
        }
    }
    let (i, _) = best.ok_or_else(|| {
        TvVarError::DegenerateWindow {
            tau: f64::NAN,
            h: grid[0],
        }
    })?;
    Ok(BandwidthSearch {
        p: design.p,
        grid: grid.to_vec(),
        cv_scores: scores,
        invalid,
        chosen: grid[i],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum BandwidthPolicy {
    Fixed(f64),
    /// Cross-validation over an explicit grid.
    Cv(Vec<f64>),
    /// Cross-validation over [`default_bandwidth_grid`].
    CvDefault,
}

impl BandwidthPolicy {
    pub fn grid(&self, sample_len: usize) -> Vec<f64> {
        match self {
            BandwidthPolicy::Fixed(h) => vec![*h],
            BandwidthPolicy::Cv(g) => g.clone(),
            BandwidthPolicy::CvDefault => default_bandwidth_grid(sample_len),
        }
    }
}

/// Bandwidth for lag `p` under `policy`, with the search when one was run.
pub fn resolve_bandwidth(
    panel: &ObservedPanel,
    p: usize,
    policy: &BandwidthPolicy,
    kernel: &KernelSpec,
) -> Result<(f64, Option<BandwidthSearch>)> {
    match policy {
        BandwidthPolicy::Fixed(h) => Ok((*h, None)),
        _ => {
            let s = cv_bandwidth(panel, p, &policy.grid(panel.len()), kernel)?;
            Ok((s.chosen, Some(s)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagSelection {
    pub candidates: Vec<usize>,
    pub rss: Vec<f64>,
    pub ic: Vec<f64>,
    pub h: Vec<f64>,
    /// Common penalty and the bandwidth it was evaluated at.
    pub penalty: f64,
    pub penalty_h: f64,
    pub chosen: usize,
    /// Effective sample length shared by every candidate.
    pub sample_len: usize,
    pub searches: Vec<Option<BandwidthSearch>>,
}

impl LagSelection {
    pub fn chosen_h(&self) -> f64 {
        self.h[self.chosen - 1]
    }
}

/// `p̂ = argmin_p log RSS(p) + p χ_T` over `1..=p_max`. Every candidate is
/// fit on the sample left after reserving `p_max` initial rows, with its own
/// bandwidth under `policy`; `χ_T` is evaluated at `T^{-1/5}`.
pub fn select_lag(
    panel: &ObservedPanel,
    p_max: usize,
    policy: &BandwidthPolicy,
    kernel: &KernelSpec,
) -> Result<LagSelection> {
    select_lag_with(panel, p_max, policy, None, kernel)
}

/// As [`select_lag`] with an explicit bandwidth for the penalty.
pub fn select_lag_with(
    panel: &ObservedPanel,
    p_max: usize,
    policy: &BandwidthPolicy,
    penalty_h: Option<f64>,
    kernel: &KernelSpec,
) -> Result<LagSelection> {
    if p_max == 0 {
        return Err(TvVarError::Config("p_max must be at least 1".into()));
    }
    let aligned = panel.aligned_for_lag(p_max)?;
    let t = aligned.len();
    let need = 20 * (aligned.dim() * p_max + 1);
    if t < need {
        return Err(TvVarError::TooShort { t, minimum: need });
    }
    let mut rss = Vec::with_capacity(p_max);
    let mut hs = Vec::with_capacity(p_max);
    let mut searches = Vec::with_capacity(p_max);
    for p in 1..=p_max {
        let (h, search) = resolve_bandwidth(&aligned, p, policy, kernel)?;
        let fit = TvVarFit::fit(&aligned, FitOptions { p, h }, kernel)?;
        rss.push(fit.rss());
        hs.push(h);
        searches.push(search);
    }
    let penalty_h = penalty_h.unwrap_or_else(|| (t as f64).powf(-0.2));
    let penalty = penalty_chi(t, penalty_h)?;
    let ic: Vec<f64> = rss
        .iter()
        .enumerate()
        .map(|(i, r)| r.ln() + (i + 1) as f64 * penalty)
        .collect();
    let mut chosen = 0;
    for i in 1..ic.len() {
        if ic[i] < ic[chosen] {
            chosen = i;
        }
    }
    Ok(LagSelection {
        candidates: (1..=p_max).collect(),
        rss,
        ic,
        h: hs,
        penalty,
        penalty_h,
        chosen: chosen + 1,
        sample_len: t,
        searches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn penalty_direct_evaluation() {
        let want = (0.3f64.powi(4)).max(400f64.ln() / 120.0) * 120f64.ln().ln();
        assert_eq!(penalty_chi(400, 0.3).unwrap(), want);
        assert!(matches!(penalty_chi(4, 0.5), Err(TvVarError::Domain(_))));
        // large h: the h⁴ branch takes over
        let t = 50;
        let h = 0.99;
        let th = t as f64 * h;
        assert_eq!(penalty_chi(t, h).unwrap(), h.powi(4) * th.ln().ln());
    }

    #[test]
    fn sweep_cv_matches_pointwise_leave_one_out() {
        use crate::estimate::loo_coef;
        let rows: Vec<Vec<f64>> = (0..122)
            .map(|i| vec![(i as f64 * 0.31).sin() + 0.01 * i as f64, (i as f64 * 0.17).cos()])
            .collect();
        let panel = ObservedPanel::new(rows, 2, vec!["a".into(), "b".into()]).unwrap();
        let des = Design::new(&panel, 1).unwrap();
        let k = KernelSpec::epanechnikov();
        let h = 0.3;
        let mut naive = 0.0;
        for i in 0..des.len {
            let a = loo_coef(&des, &k, i, h).unwrap();
            let z = des.z_row(i);
            for c in 0..2 {
                let f: f64 = (0..des.m).map(|j| a[(c, j)] * z[j]).sum();
                naive += (des.x_row(i)[c] - f).powi(2);
            }
        }
        let fast = cv_score(&des, &k, h, true).unwrap();
        assert!((fast - naive).abs() < 1e-9 * naive);
        assert!(cv_score(&des, &k, h, false).unwrap() < fast);
    }

    #[test]
    fn default_grid_has_eight_points() {
        let g = default_bandwidth_grid(400);
        assert_eq!(g.len(), 8);
        assert!((g[0] - 0.4 * 400f64.powf(-0.2)).abs() < 1e-15);
        assert!((g[7] - 1.8 * 400f64.powf(-0.2)).abs() < 1e-12);
    }
}
