//! Companion form, moving-average coefficients, structural identification
//! and delta-method covariances of time-varying impulse responses.
//!
//! For a grid point with lag blocks `A_1..A_p`, innovation covariance `Ω`
//! and joint estimator covariance `V`, the structural responses are
//! `B_j = Ψ_j ω` where `Ψ_j = J Φ^j J'`. Their covariance is
//! `[C_{j,1}, C_{j,2}] V [C_{j,1}, C_{j,2}]'`, with gradient blocks taken
//! with respect to `vec A = [a; vec A_1; …; vec A_p]` and `vech Ω`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TvVarError};
use crate::estimate::GridPoint;
use crate::linalg::{
    self, cholesky_lower, clip_psd, commutation, duplication, elimination, kron,
    spectral_radius, strict_upper_selector, vech_len, Matrix,
};

/// Reciprocal condition cutoff for `I − Σ A_i`.
pub const LONG_RUN_RCOND_MIN: f64 = 1e-12;
const STABILITY_MARGIN: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Lower-triangular impact matrix `ω(τ)` (recursive ordering).
    ShortRun,
    /// Lower-triangular cumulative response `B(τ) = Ψ(τ) ω(τ)`.
    LongRun,
}

impl std::str::FromStr for Scheme {
    type Err = TvVarError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "short-run" | "short_run" | "short" => Ok(Scheme::ShortRun),
            "long-run" | "long_run" | "long" => Ok(Scheme::LongRun),
            other => Err(TvVarError::Config(format!("unknown identification scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompanionForm {
    pub d: usize,
    pub p: usize,
    pub phi: Matrix,
    pub radius: f64,
    pub stable: bool,
}

impl CompanionForm {
    pub fn new(blocks: &[Matrix]) -> Result<Self> {
        let p = blocks.len();
        if p == 0 {
            return Err(TvVarError::Dimension("companion form needs p >= 1".into()));
        }
        let d = blocks[0].nrows();
        if blocks.iter().any(|b| b.nrows() != d || b.ncols() != d) {
            return Err(TvVarError::Dimension("lag blocks must all be d x d".into()));
        }
        let dp = d * p;
        let mut phi = Matrix::zeros(dp, dp);
        for (j, b) in blocks.iter().enumerate() {
            phi.view_mut((0, j * d), (d, d)).copy_from(b);
        }
        for i in d..dp {
            phi[(i, i - d)] = 1.0;
        }
        let radius = spectral_radius(&phi)?;
        Ok(CompanionForm {
            d,
            p,
            phi,
            radius,
            stable: radius < 1.0 - STABILITY_MARGIN,
        })
    }

    pub fn selector(&self) -> Matrix {
        linalg::companion_selector(self.d, self.p)
    }

    /// `Ψ_0 = I`, `Ψ_j = J Φ^j J'`, via the running product of the top block
    /// row `J Φ^j`.
    pub fn vma(&self, horizons: usize) -> Vec<Matrix> {
        let d = self.d;
        let mut out = Vec::with_capacity(horizons + 1);
        out.push(Matrix::identity(d, d));
        let mut top = self.selector();
        for _ in 0..horizons {
            top = &top * &self.phi;
            out.push(top.columns(0, d).into_owned());
        }
        out
    }

    /// `J (Φ')^k = (Φ^k J')'` for `k = 0..n`.
    fn selector_powers(&self, n: usize) -> Vec<Matrix> {
        let mut out = Vec::with_capacity(n);
        let jt = self.selector().transpose();
        let mut cur = jt;
        for _ in 0..n {
            out.push(cur.transpose());
            cur = &self.phi * cur;
        }
        out
    }
}

pub fn build_companion(blocks: &[Matrix]) -> Result<CompanionForm> {
    CompanionForm::new(blocks)
}

pub fn vma_coefficients(comp: &CompanionForm, horizons: usize) -> Vec<Matrix> {
    comp.vma(horizons)
}

/// Cholesky factor of `Ω` (short-run restrictions).
pub fn identify_short_run(omega: &Matrix) -> Result<Matrix> {
    cholesky_lower(omega)
}

pub fn long_run_matrix(blocks: &[Matrix]) -> Matrix {
    let d = blocks[0].nrows();
    let mut a1 = Matrix::identity(d, d);
    for b in blocks {
        a1 -= b;
    }
    a1
}

/// Long-run identification: `B = chol(Ψ Ω Ψ')` with `Ψ = (I − Σ A_i)^{-1}`
/// and `ω = Ψ^{-1} B`. Returns `(B, ω, Ψ)`.
pub fn identify_long_run(
    blocks: &[Matrix],
    omega: &Matrix,
    tau: f64,
) -> Result<(Matrix, Matrix, Matrix)> {
    let a1 = long_run_matrix(blocks);
    // measured against the unit scale of I so that uniformly tiny
    // I − Σ A_i counts as singular
    let sv = a1.clone().singular_values();
    let smax = sv.iter().cloned().fold(1.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let rcond = smin / smax;
    if !(rcond > LONG_RUN_RCOND_MIN) {
        return Err(TvVarError::SingularLongRunMatrix { tau, rcond });
    }
    let psi = linalg::checked_inverse(&a1, 0.0)
        .map_err(|rcond| TvVarError::SingularLongRunMatrix { tau, rcond })?;
    let lr = linalg::symmetrize(&(&psi * omega * psi.transpose()));
    if !linalg::is_positive_definite(omega) {
        return Err(TvVarError::NotPositiveDefinite { pivot: 0 });
    }
    let b = cholesky_lower(&lr)?;
    let w = &a1 * &b;
    Ok((b, w, psi))
}

/// Gradient of `vec B_j` with respect to `vec A` and `vech Ω`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBlocks {
    /// `d² x (d²p + d)`.
    pub c1: Matrix,
    /// `d² x d(d+1)/2`.
    pub c2: Matrix,
}

impl GradientBlocks {
    pub fn stacked(&self) -> Matrix {
        let mut out = Matrix::zeros(self.c1.nrows(), self.c1.ncols() + self.c2.ncols());
        out.view_mut((0, 0), self.c1.shape()).copy_from(&self.c1);
        out.view_mut((0, self.c1.ncols()), self.c2.shape()).copy_from(&self.c2);
        out
    }

    pub fn add(&self, other: &GradientBlocks) -> GradientBlocks {
        GradientBlocks {
            c1: &self.c1 + &other.c1,
            c2: &self.c2 + &other.c2,
        }
    }
}

/// Identification result plus the pieces the gradients reuse.
#[derive(Debug, Clone)]
pub struct Identified {
    pub scheme: Scheme,
    pub tau: f64,
    pub comp: CompanionForm,
    /// Structural impact matrix `ω̂(τ)`.
    pub impact: Matrix,
    /// Long-run response `B̂(τ)` (long-run scheme only).
    pub long_run: Option<Matrix>,
    /// `(I − Σ A_i)^{-1}` (long-run scheme only).
    pub long_run_psi: Option<Matrix>,
}

pub fn identify(scheme: Scheme, blocks: &[Matrix], omega: &Matrix, tau: f64) -> Result<Identified> {
    let comp = CompanionForm::new(blocks)?;
    match scheme {
        Scheme::ShortRun => Ok(Identified {
            scheme,
            tau,
            impact: identify_short_run(omega)?,
            comp,
            long_run: None,
            long_run_psi: None,
        }),
        Scheme::LongRun => {
            if !comp.stable {
                return Err(TvVarError::UnstablePoint {
                    tau,
                    radius: comp.radius,
                });
            }
            let (b, w, psi) = identify_long_run(blocks, omega, tau)?;
            Ok(Identified {
                scheme,
                tau,
                impact: w,
                comp,
                long_run: Some(b),
                long_run_psi: Some(psi),
            })
        }
    }
}

/// `[0_{d²p x d}, I_{d²p}]` as a right factor: pads a `d² x d²p` matrix with
/// `d` leading zero columns.
fn pad_intercept(m: &Matrix, d: usize) -> Matrix {
    let mut out = Matrix::zeros(m.nrows(), m.ncols() + d);
    out.view_mut((0, d), m.shape()).copy_from(m);
    out
}

/// Gradient blocks for horizons `0..=horizons`.
pub fn gradient_blocks(id: &Identified, psi: &[Matrix], horizons: usize) -> Result<Vec<GradientBlocks>> {
    let d = id.comp.d;
    let p = id.comp.p;
    let dd = d * d;
    let eye_d = Matrix::identity(d, d);
    let w = &id.impact;
    let wt_kron = kron(&w.transpose(), &eye_d);
    let n1 = (Matrix::identity(dd, dd) + commutation(d, d)) * kron(w, &eye_d);
    let l = elimination(d);
    let dup = duplication(d);

    // dvec ω / dα (d² x d²p) and dvec ω / dvech Ω (d² x r)
    let (w_alpha, w_omega) = match id.scheme {
        Scheme::ShortRun => {
            let inner = &l * &n1 * l.transpose();
            let inv = linalg::checked_inverse(&inner, 1e-14).map_err(|rcond| {
                TvVarError::SingularDesign { tau: id.tau, rcond }
            })?;
            (Matrix::zeros(dd, dd * p), l.transpose() * inv)
        }
        Scheme::LongRun => {
            let b = id.long_run.as_ref().expect("long-run B");
            let a1inv = id.long_run_psi.as_ref().expect("long-run Psi");
            let q = strict_upper_selector(d);
            let n2 = &q * kron(&eye_d, a1inv);
            let mut grad_a1 = Matrix::zeros(dd, dd * p);
            for j in 0..p {
                grad_a1
                    .view_mut((0, j * dd), (dd, dd))
                    .copy_from(&(-Matrix::identity(dd, dd)));
            }
            let d2 = &q * kron(&b.transpose(), a1inv) * grad_a1;
            let normal = n1.transpose() * &n1 + n2.transpose() * &n2;
            let m = linalg::checked_inverse(&normal, 1e-14).map_err(|rcond| {
                TvVarError::SingularLongRunMatrix { tau: id.tau, rcond }
            })?;
            (&m * n2.transpose() * d2, &m * n1.transpose() * dup)
        }
    };

    let sel = id.comp.selector_powers(horizons.max(1));
    let mut out = Vec::with_capacity(horizons + 1);
    for j in 0..=horizons {
        // Σ_{m=0}^{j-1} J(Φ')^{j-1-m} ⊗ Ψ_m
        let mut g = Matrix::zeros(dd, dd * p);
        for mm in 0..j {
            g += kron(&sel[j - 1 - mm], &psi[mm]);
        }
        let i_psi = kron(&eye_d, &psi[j]);
        let c1_alpha = &wt_kron * g + &i_psi * &w_alpha;
        let c1 = pad_intercept(&c1_alpha, d);
        let c2 = &i_psi * &w_omega;
        out.push(GradientBlocks { c1, c2 });
    }
    Ok(out)
}

/// `Σ_{B_j} = [C1, C2] V [C1, C2]'`, symmetrized.
pub fn irf_covariance(blocks: &GradientBlocks, vhat: &Matrix) -> Matrix {
    let c = blocks.stacked();
    linalg::symmetrize(&(&c * vhat * c.transpose()))
}

/// Standard errors `√(Σ_ii / (T h))` reshaped to `d x d`, using the PSD
/// projection of `Σ`.
pub fn standard_errors(cov: &Matrix, d: usize, sample_len: usize, h: f64) -> Matrix {
    let psd = clip_psd(cov);
    let th = sample_len as f64 * h;
    Matrix::from_fn(d, d, |r, c| {
        let k = c * d + r;
        (psd[(k, k)].max(0.0) / th).sqrt()
    })
}

/// Responses at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrfPoint {
    pub tau: f64,
    pub stable: bool,
    pub radius: f64,
    pub impact: Matrix,
    pub psi: Vec<Matrix>,
    pub responses: Vec<Matrix>,
    pub gradients: Vec<GradientBlocks>,
    /// Raw (symmetrized) covariances, present when `V̂` was supplied.
    pub cov: Vec<Matrix>,
    pub se: Vec<Matrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeIrf {
    pub tau: f64,
    pub responses: Vec<Matrix>,
    pub cov: Vec<Matrix>,
    pub se: Vec<Matrix>,
}

pub fn irf_point(
    scheme: Scheme,
    point: &GridPoint,
    vhat: Option<&Matrix>,
    horizons: usize,
    sample_len: usize,
    h: f64,
) -> Result<IrfPoint> {
    if !point.omega_pd {
        return Err(TvVarError::NotPositiveDefinite { pivot: 0 });
    }
    let blocks = point.coef.lag_blocks();
    let id = identify(scheme, &blocks, &point.omega, point.tau)?;
    let psi = id.comp.vma(horizons);
    let responses: Vec<Matrix> = psi.iter().map(|p| p * &id.impact).collect();
    let gradients = gradient_blocks(&id, &psi, horizons)?;
    let d = id.comp.d;
    let (cov, se) = match vhat {
        Some(v) => {
            let cov: Vec<Matrix> = gradients.iter().map(|g| irf_covariance(g, v)).collect();
            let se = cov.iter().map(|c| standard_errors(c, d, sample_len, h)).collect();
            (cov, se)
        }
        None => (Vec::new(), Vec::new()),
    };
    Ok(IrfPoint {
        tau: point.tau,
        stable: id.comp.stable,
        radius: id.comp.radius,
        impact: id.impact,
        psi,
        responses,
        gradients,
        cov,
        se,
    })
}

/// Running sums `Σ_{i≤j} B̂_i` with covariances from the summed gradients.
pub fn cumulative_irf(
    point: &IrfPoint,
    vhat: Option<&Matrix>,
    upto: usize,
    sample_len: usize,
    h: f64,
) -> Result<CumulativeIrf> {
    if upto >= point.responses.len() {
        return Err(TvVarError::Domain(format!(
            "cumulative horizon {upto} beyond computed horizon {}",
            point.responses.len() - 1
        )));
    }
    let d = point.impact.nrows();
    let mut responses = Vec::with_capacity(upto + 1);
    let mut cov = Vec::new();
    let mut se = Vec::new();
    let mut acc = Matrix::zeros(d, d);
    let mut grad: Option<GradientBlocks> = None;
    for j in 0..=upto {
        acc += &point.responses[j];
        responses.push(acc.clone());
        grad = Some(match grad {
            None => point.gradients[j].clone(),
            Some(g) => g.add(&point.gradients[j]),
        });
        if let Some(v) = vhat {
            let c = irf_covariance(grad.as_ref().unwrap(), v);
            se.push(standard_errors(&c, d, sample_len, h));
            cov.push(c);
        }
    }
    Ok(CumulativeIrf {
        tau: point.tau,
        responses,
        cov,
        se,
    })
}

/// Responses across a grid. Points where identification is refused are
/// listed in `skipped`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrfSet {
    pub scheme: Scheme,
    pub horizons: usize,
    pub points: Vec<IrfPoint>,
    pub cumulative: Vec<CumulativeIrf>,
    pub skipped: Vec<(f64, String)>,
}

/// Signature of a `V̂` provider: returns the assembled joint covariance at a
/// grid point.
pub fn irf_set<F>(
    scheme: Scheme,
    points: &[GridPoint],
    horizons: usize,
    sample_len: usize,
    h: f64,
    cumulative: bool,
    mut vhat: F,
) -> IrfSet
where
    F: FnMut(&GridPoint) -> Result<Matrix>,
{
    let mut out = IrfSet {
        scheme,
        horizons,
        points: Vec::new(),
        cumulative: Vec::new(),
        skipped: Vec::new(),
    };
    for gp in points {
        let res = vhat(gp).and_then(|v| {
            let ip = irf_point(scheme, gp, Some(&v), horizons, sample_len, h)?;
            let cum = if cumulative {
                Some(cumulative_irf(&ip, Some(&v), horizons, sample_len, h)?)
            } else {
                None
            };
            Ok((ip, cum))
        });
        match res {
            Ok((ip, cum)) => {
                out.points.push(ip);
                if let Some(c) = cum {
                    out.cumulative.push(c);
                }
            }
            Err(e) => out.skipped.push((gp.tau, e.to_string())),
        }
    }
    out
}

pub fn vech_dim(d: usize) -> usize {
    vech_len(d)
}
