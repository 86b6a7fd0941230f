//! Radial reduction of the k-Hessian operator.
//!
//! For radial `w(r)` the matrix `W` is `diag(b, .., b, a)` with
//! `a = w'' + ½w'²` and `b = w'/r - ½w'²`, so
//! `σ_k(λ(W)) = C(n-1,k) b^k + C(n-1,k-1) a b^{k-1}`. When `k > n/2` the
//! closed cone reduces to `b >= 0` and `a + θb >= 0`.

mod envelope;
pub(crate) mod fd;
mod grid;

pub use envelope::{
    default_radii, envelope_viscosity_check, radial_envelope, sublevel_distance_envelope, EnvelopeMethod,
    EnvelopeProfile, Inequality, ViscosityReport, ViscosityViolation,
};
pub use grid::GridField;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::symfunc::{binomial, ConeParams};

/// Default finite-difference tolerance multiplier `c_fd`.
pub const DEFAULT_C_FD: f64 = 10.0;
/// Relative tolerance used for inequality checks on analytic derivatives.
pub const ANALYTIC_TOL: f64 = 1e-10;
/// Default threshold on the extrapolated `r w'` limit separating the two
/// singularity classes.
pub const DEFAULT_EPS_CLASS: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMode {
    Analytic,
    FiniteDifference,
}

/// Sampled radial profile `w(r)` with first and second derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    r: Vec<f64>,
    w: Vec<f64>,
    dw: Vec<f64>,
    d2w: Vec<f64>,
    cone: ConeParams,
    mode: DerivativeMode,
}

fn check_grid(r: &[f64], min_len: usize) -> Result<()> {
    if r.len() < min_len {
        return domain(format!("radial grid needs at least {min_len} nodes, got {}", r.len()));
    }
    if !(r[0] > 0.0) {
        return domain(format!("radial grid must start at r > 0, got {}", r[0]));
    }
    if r.windows(2).any(|p| !(p[1] > p[0])) {
        return domain("radial grid must be strictly increasing");
    }
    if r.iter().any(|x| !x.is_finite()) {
        return domain("radial grid has non-finite entries");
    }
    Ok(())
}

impl RadialProfile {
    /// Profile with analytic derivatives.
    pub fn analytic(r: Vec<f64>, w: Vec<f64>, dw: Vec<f64>, d2w: Vec<f64>, cone: ConeParams) -> Result<Self> {
        check_grid(&r, 1)?;
        let n = r.len();
        if w.len() != n || dw.len() != n || d2w.len() != n {
            return domain("profile columns have different lengths");
        }
        if w.iter().chain(&dw).chain(&d2w).any(|x| !x.is_finite()) {
            return domain("profile has non-finite samples");
        }
        Ok(Self { r, w, dw, d2w, cone, mode: DerivativeMode::Analytic })
    }

    /// Profile from values only; derivatives by three-point differences.
    pub fn from_samples(r: Vec<f64>, w: Vec<f64>, cone: ConeParams) -> Result<Self> {
        check_grid(&r, 3)?;
        if w.len() != r.len() {
            return domain("profile columns have different lengths");
        }
        if w.iter().any(|x| !x.is_finite()) {
            return domain("profile has non-finite samples");
        }
        let (dw, d2w) = fd::derivatives(&r, &w);
        Ok(Self { r, w, dw, d2w, cone, mode: DerivativeMode::FiniteDifference })
    }

    /// Evaluates `f(r) -> (w, w', w'')` on a grid.
    pub fn from_fn(r: Vec<f64>, cone: ConeParams, f: impl Fn(f64) -> (f64, f64, f64)) -> Result<Self> {
        let (mut w, mut dw, mut d2w) = (Vec::new(), Vec::new(), Vec::new());
        for &x in &r {
            let (a, b, c) = f(x);
            w.push(a);
            dw.push(b);
            d2w.push(c);
        }
        Self::analytic(r, w, dw, d2w, cone)
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }
    pub fn w(&self) -> &[f64] {
        &self.w
    }
    pub fn dw(&self) -> &[f64] {
        &self.dw
    }
    pub fn d2w(&self) -> &[f64] {
        &self.d2w
    }
    pub fn cone(&self) -> ConeParams {
        self.cone
    }
    pub fn mode(&self) -> DerivativeMode {
        self.mode
    }
    pub fn len(&self) -> usize {
        self.r.len()
    }
    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    /// Largest relative spacing `(r_{i+1} - r_i) / r_i`.
    pub fn relative_spacing(&self) -> f64 {
        self.r.windows(2).map(|p| (p[1] - p[0]) / p[0]).fold(0.0, f64::max)
    }

    /// Relative tolerance for inequality checks: tiny for analytic
    /// derivatives, `c_fd` times the relative spacing otherwise.
    pub fn default_tolerance(&self) -> f64 {
        match self.mode {
            DerivativeMode::Analytic => ANALYTIC_TOL,
            DerivativeMode::FiniteDifference => DEFAULT_C_FD * self.relative_spacing(),
        }
    }

    /// Same samples with the profile replaced by `w(c r)`.
    pub fn rescaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return domain("scale must be positive");
        }
        // w_c(r) = w(c r) sampled at r/c reproduces the same values on a new grid
        let r = self.r.iter().map(|x| x / c).collect();
        Ok(Self {
            r,
            w: self.w.clone(),
            dw: self.dw.iter().map(|d| d * c).collect(),
            d2w: self.d2w.iter().map(|d| d * c * c).collect(),
            cone: self.cone,
            mode: self.mode,
        })
    }
}

impl RadialProfile {
    /// Writes columns `r, w, dw, d2w` with full precision.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(out);
        wr.write_record(["r", "w", "dw", "d2w"])?;
        for i in 0..self.len() {
            let row = [self.r[i], self.w[i], self.dw[i], self.d2w[i]].map(|x| format!("{x:.16e}"));
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads `r, w[, dw, d2w]`. Without both derivative columns the
    /// profile falls back to finite differences.
    pub fn read_csv<R: std::io::Read>(input: R, cone: ConeParams) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = rd.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let (ir, iw) = match (col("r"), col("w")) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::Config("profile CSV needs 'r' and 'w' columns".into())),
        };
        let derivs = col("dw").zip(col("d2w"));
        let mut cols: [Vec<f64>; 4] = Default::default();
        for rec in rd.records() {
            let rec = rec?;
            let get = |i: usize| -> Result<f64> {
                let t = rec.get(i).unwrap_or("");
                t.parse().map_err(|_| Error::Config(format!("bad number '{t}' in profile CSV")))
            };
            cols[0].push(get(ir)?);
            cols[1].push(get(iw)?);
            if let Some((a, b)) = derivs {
                cols[2].push(get(a)?);
                cols[3].push(get(b)?);
            }
        }
        let [r, w, dw, d2w] = cols;
        if derivs.is_some() {
            Self::analytic(r, w, dw, d2w, cone)
        } else {
            Self::from_samples(r, w, cone)
        }
    }
}

/// Strictly increasing geometric grid `r_max q^{count-1}, ..., r_max q, r_max`.
pub fn geometric_grid(r_max: f64, q: f64, count: usize) -> Vec<f64> {
    assert!(q > 0.0 && q < 1.0 && r_max > 0.0);
    (0..count).rev().map(|i| r_max * q.powi(i as i32)).collect()
}

/// `count` equally spaced nodes on `[r0, r1]`.
pub fn uniform_grid(r0: f64, r1: f64, count: usize) -> Vec<f64> {
    assert!(count >= 2);
    let h = (r1 - r0) / (count - 1) as f64;
    (0..count).map(|i| r0 + h * i as f64).collect()
}

/// Radial eigenvalue pair of `W` at each node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialAB {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Magnitude of the terms entering `a` and `b`, used to scale tolerances.
    pub scale: Vec<f64>,
}

/// `a = w'' + ½w'²`, `b = w'/r - ½w'²`.
pub fn ab_reduce(p: &RadialProfile) -> RadialAB {
    let mut out = RadialAB { a: Vec::with_capacity(p.len()), b: Vec::new(), scale: Vec::new() };
    for i in 0..p.len() {
        let (r, d1, d2) = (p.r[i], p.dw[i], p.d2w[i]);
        let (a, b, s) = ab_point(r, d1, d2);
        out.a.push(a);
        out.b.push(b);
        out.scale.push(s);
    }
    out
}

pub(crate) fn ab_point(r: f64, d1: f64, d2: f64) -> (f64, f64, f64) {
    let half_sq = 0.5 * d1 * d1;
    let a = d2 + half_sq;
    let b = d1 / r - half_sq;
    (a, b, d2.abs() + half_sq + (d1 / r).abs())
}

/// `C(n-1,k) b^k + C(n-1,k-1) a b^{k-1}`.
pub fn sigma_k_radial_point(a: f64, b: f64, cone: ConeParams) -> f64 {
    let (n, k) = (cone.n(), cone.k());
    let bk1 = b.powi(k as i32 - 1);
    binomial(n - 1, k) * bk1 * b + binomial(n - 1, k - 1) * a * bk1
}

pub fn sigma_k_radial(ab: &RadialAB, cone: ConeParams) -> Vec<f64> {
    ab.a.iter().zip(&ab.b).map(|(&a, &b)| sigma_k_radial_point(a, b, cone)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Admissibility {
    /// `b > tol*scale` and `a + θb > tol*scale`.
    Open,
    /// `b >= -tol*scale` and `a + θb >= -tol*scale`.
    Closed,
}

/// Nodewise radial admissibility. Only valid for `k > n/2`, where the two
/// scalar conditions characterise the cone.
pub fn radial_admissible(ab: &RadialAB, cone: ConeParams, mode: Admissibility, tol: f64) -> Result<Vec<bool>> {
    cone.require_supercritical()?;
    let theta = cone.theta();
    Ok((0..ab.a.len())
        .map(|i| {
            let (a, b, s) = (ab.a[i], ab.b[i], ab.scale[i]);
            let m = tol * s;
            let c = a + theta * b;
            match mode {
                Admissibility::Open => b > m && c > m,
                Admissibility::Closed => b >= -m && c >= -m,
            }
        })
        .collect())
}

/// First node failing closed admissibility, as an error.
pub(crate) fn require_closed_admissible(p: &RadialProfile, tol: f64) -> Result<()> {
    let ab = ab_reduce(p);
    let ok = radial_admissible(&ab, p.cone, Admissibility::Closed, tol)?;
    if let Some(i) = ok.iter().position(|&x| !x) {
        return Err(Error::Admissibility { node: i, b: ab.b[i], ab: ab.a[i] + p.cone.theta() * ab.b[i] });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RwMonotoneReport {
    pub rw: Vec<f64>,
    pub min: f64,
    pub max: f64,
    /// Largest `(r w')_i - (r w')_{i+1}` (positive means a decrease).
    pub worst_decrease: f64,
    pub worst_decrease_at: Option<usize>,
    /// Largest excursion outside `[0, 2]`.
    pub worst_bound_excess: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Checks `0 <= r w' <= 2` and that `r w'` is non-decreasing, up to `tol`.
pub fn check_rw_monotone(p: &RadialProfile, tol: f64) -> RwMonotoneReport {
    let rw: Vec<f64> = p.r.iter().zip(&p.dw).map(|(r, d)| r * d).collect();
    let min = rw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = rw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut worst_decrease = 0.0;
    let mut worst_decrease_at = None;
    for (i, pair) in rw.windows(2).enumerate() {
        let d = pair[0] - pair[1];
        if d > worst_decrease {
            worst_decrease = d;
            worst_decrease_at = Some(i);
        }
    }
    let worst_bound_excess = (-min).max(max - 2.0).max(0.0);
    // tolerance is relative to the bound 2
    let abs_tol = 2.0 * tol;
    RwMonotoneReport {
        passed: worst_decrease <= abs_tol && worst_bound_excess <= abs_tol,
        rw,
        min,
        max,
        worst_decrease,
        worst_decrease_at,
        worst_bound_excess,
        tolerance: abs_tol,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SingularityClass {
    /// `w = 2 log r + C`.
    Fundamental,
    /// Hölder continuous at the origin.
    Holder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularityDiagnostics {
    /// Extrapolated `lim_{r->0} r w'`.
    pub rw_limit: f64,
    /// `r w'` at the three smallest radii.
    pub rw_small: [f64; 3],
    /// Fitted decay exponent in `w' ~ C r^{-θ}`.
    pub fitted_theta: Option<f64>,
    pub fit_rms_residual: Option<f64>,
    pub fit_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularityReport {
    pub class: SingularityClass,
    /// Offset `C` in `w = 2 log r + C`.
    pub offset: Option<f64>,
    pub alpha_est: Option<f64>,
    /// True when the fit saturated at Lipschitz regularity; `alpha_est` is
    /// then only a lower bound witness (`>= 2 - n/k`).
    pub alpha_saturated: bool,
    pub alpha_theory: f64,
    pub diagnostics: SingularityDiagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyConfig {
    pub eps_class: f64,
    /// Number of smallest radii used for the power-law fit (all usable nodes when `None`).
    pub fit_points: Option<usize>,
    /// Relative admissibility tolerance (profile default when `None`).
    pub tolerance: Option<f64>,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self { eps_class: DEFAULT_EPS_CLASS, fit_points: None, tolerance: None }
    }
}

/// Aitken Δ² extrapolation of `y0, y1, y2` sampled at geometrically
/// shrinking radii (`y0` at the largest); falls back to `y2` when the
/// sequence is numerically linear.
fn aitken_limit(y0: f64, y1: f64, y2: f64) -> f64 {
    let denom = y0 - 2.0 * y1 + y2;
    let scale = y0.abs().max(y1.abs()).max(y2.abs()).max(f64::MIN_POSITIVE);
    if denom.abs() <= 1e-12 * scale {
        return y2;
    }
    let lim = (y0 * y2 - y1 * y1) / denom;
    // only accept extrapolations consistent with a monotone approach
    if lim.is_finite() && (lim - y2).abs() <= 10.0 * (y1 - y2).abs().max(1e-12 * scale) {
        lim
    } else {
        y2
    }
}

/// Dichotomy for an admissible profile near the origin: either the
/// fundamental type `w = 2 log r + C` or Hölder continuous with exponent
/// `2 - n/k`.
pub fn classify_singularity(p: &RadialProfile, cfg: &ClassifyConfig) -> Result<SingularityReport> {
    let cone = p.cone;
    cone.require_supercritical()?;
    if p.len() < 3 {
        return domain("classification needs at least three radii");
    }
    let tol = cfg.tolerance.unwrap_or_else(|| p.default_tolerance());
    require_closed_admissible(p, tol)?;

    let rw: Vec<f64> = p.r.iter().zip(&p.dw).map(|(r, d)| r * d).collect();
    let rw_small = [rw[2], rw[1], rw[0]];
    let rw_limit = aitken_limit(rw[2], rw[1], rw[0]);

    let usable: Vec<usize> = match p.mode {
        // one-sided stencils at the ends are less accurate
        DerivativeMode::FiniteDifference => (1..p.len() - 1).collect(),
        DerivativeMode::Analytic => (0..p.len()).collect(),
    };

    if rw_limit >= 2.0 - cfg.eps_class {
        let offsets: Vec<f64> = usable.iter().take(3).map(|&i| p.w[i] - 2.0 * p.r[i].ln()).collect();
        let offset = if offsets.len() == 3 { aitken_limit(offsets[2], offsets[1], offsets[0]) } else { offsets[0] };
        return Ok(SingularityReport {
            class: SingularityClass::Fundamental,
            offset: Some(offset),
            alpha_est: None,
            alpha_saturated: false,
            alpha_theory: cone.alpha(),
            diagnostics: SingularityDiagnostics {
                rw_limit,
                rw_small,
                fitted_theta: None,
                fit_rms_residual: None,
                fit_points: 0,
            },
        });
    }

    let take = cfg.fit_points.unwrap_or(usable.len());
    let pts: Vec<(f64, f64)> =
        usable.iter().take(take).filter(|&&i| p.dw[i] > 0.0).map(|&i| (p.r[i].ln(), p.dw[i].ln())).collect();
    let (alpha_est, saturated, fitted_theta, rms) = if pts.len() < 3 {
        (1.0, true, None, None)
    } else {
        let m = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let slope = sxy / sxx;
        let icpt = my - slope * mx;
        let rms = (pts.iter().map(|p| (p.1 - icpt - slope * p.0).powi(2)).sum::<f64>() / m).sqrt();
        let theta = -slope;
        let alpha = 1.0 - theta;
        if alpha >= 1.0 {
            (1.0, true, Some(theta), Some(rms))
        } else {
            (alpha, false, Some(theta), Some(rms))
        }
    };
    Ok(SingularityReport {
        class: SingularityClass::Holder,
        offset: None,
        alpha_est: Some(alpha_est),
        alpha_saturated: saturated,
        alpha_theory: cone.alpha(),
        diagnostics: SingularityDiagnostics {
            rw_limit,
            rw_small,
            fitted_theta,
            fit_rms_residual: rms,
            fit_points: pts.len(),
        },
    })
}
