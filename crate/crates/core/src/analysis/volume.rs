//! Geodesic-ball volume ratios of radial metrics `g = e^{-2w} |dx|²`
//! centred at the origin.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::quad::integrate;
use crate::radial::RadialProfile;

const QUAD_TOL: f64 = 1e-11;

/// Area `ω_n` of the unit sphere `S^{n-1}` in `ℝⁿ`.
pub fn omega(n: usize) -> f64 {
    use std::f64::consts::PI;
    match n {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => 2.0 * PI * omega(n - 2) / (n - 2) as f64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeCurve {
    pub n: usize,
    /// Geodesic radii.
    pub r: Vec<f64>,
    /// Euclidean radii of the same spheres.
    pub rho: Vec<f64>,
    pub q: Vec<f64>,
    pub omega_n: f64,
}

impl VolumeCurve {
    /// Largest relative increase `(Q_{i+1} - Q_i)/Q_i` (zero when non-increasing).
    pub fn max_relative_increase(&self) -> f64 {
        self.q.windows(2).map(|p| (p[1] - p[0]) / p[0]).fold(0.0, f64::max)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(out);
        wr.write_record(["r", "Q"])?;
        for (r, q) in self.r.iter().zip(&self.q) {
            wr.write_record([format!("{r:.16e}"), format!("{q:.16e}")])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Volume ratio `Q(s) = Vol(B_s)/sⁿ` at the requested geodesic radii, with
/// `w` given as a function of the Euclidean radius.
pub fn volume_ratio(n: usize, w: impl Fn(f64) -> f64, r_geo: &[f64]) -> Result<VolumeCurve> {
    volume_ratio_bounded(n, &w, r_geo, f64::INFINITY)
}

fn volume_ratio_bounded(n: usize, w: &dyn Fn(f64) -> f64, r_geo: &[f64], rho_max: f64) -> Result<VolumeCurve> {
    if n < 2 {
        return domain("volume ratio needs n >= 2");
    }
    if r_geo.is_empty() || !(r_geo[0] > 0.0) || r_geo.windows(2).any(|p| !(p[1] > p[0])) {
        return domain("geodesic radii must be positive and strictly increasing");
    }
    let omega_n = omega(n);
    let speed = |t: f64| (-w(t)).exp();
    let density = |t: f64| omega_n * (-(n as f64) * w(t)).exp() * t.powi(n as i32 - 1);
    let seg = |f: &dyn Fn(f64) -> f64, a: f64, b: f64| -> Result<f64> {
        integrate(f, a, b, QUAD_TOL, 0.0).map_err(|e| match e {
            Error::Domain(m) => Error::Domain(format!("non-integrable metric near r = {a}: {m}")),
            other => other,
        })
    };

    let (mut rho0, mut s0, mut vol0) = (0.0, 0.0, 0.0);
    let mut out = VolumeCurve { n, r: Vec::new(), rho: Vec::new(), q: Vec::new(), omega_n };
    for &target in r_geo {
        // bracket the Euclidean radius reaching the target geodesic radius
        let mut lo = rho0;
        let mut hi = if rho0 > 0.0 { 2.0 * rho0 } else { target.min(rho_max) };
        while s0 + seg(&speed, rho0, hi)? < target {
            if hi >= rho_max || hi > 1e12 {
                return domain(format!("geodesic radius {target} exceeds the extent of the metric"));
            }
            lo = hi;
            hi = (2.0 * hi).min(rho_max);
        }
        // safeguarded Newton on s(ρ) = target
        let mut rho = 0.5 * (lo + hi);
        for _ in 0..200 {
            let s = s0 + seg(&speed, rho0, rho)?;
            if s < target {
                lo = rho;
            } else {
                hi = rho;
            }
            let step = (target - s) / speed(rho);
            let mut next = rho + step;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - rho).abs() <= 1e-14 * rho.max(1e-300) || hi - lo <= 1e-15 * hi {
                rho = next;
                break;
            }
            rho = next;
        }
        let vol = vol0 + seg(&density, rho0, rho)?;
        out.r.push(target);
        out.rho.push(rho);
        out.q.push(vol / target.powi(n as i32));
        rho0 = rho;
        s0 = target;
        vol0 = vol;
    }
    Ok(out)
}

/// Volume ratio of a sampled profile: cubic Hermite interpolation between
/// nodes, and below the first node the local power law
/// `w' ≈ w'(r₀)(r/r₀)^{γ-1}` with `γ - 1 = r₀w''(r₀)/w'(r₀)` (a logarithm
/// when `γ = 0`).
pub fn volume_ratio_profile(p: &RadialProfile, r_geo: &[f64]) -> Result<VolumeCurve> {
    let (r, w, dw) = (p.r(), p.w(), p.dw());
    if r.len() < 2 {
        return domain("profile needs at least two nodes");
    }
    let (r0, w0, d0) = (r[0], w[0], dw[0]);
    let gamma = if d0 == 0.0 { 1.0 } else { 1.0 + r0 * p.d2w()[0] / d0 };
    let beta = r0 * d0;
    let gamma = if gamma.abs() < 1e-8 { 0.0 } else { gamma };
    if (gamma == 0.0 && beta >= 1.0) || (gamma < 0.0 && d0 > 0.0) {
        return domain(format!("metric is not integrable at the centre (r w' = {beta}, exponent {gamma})"));
    }
    let inner = move |t: f64| -> f64 {
        if gamma == 0.0 {
            w0 + beta * (t / r0).ln()
        } else {
            w0 + beta / gamma * ((t / r0).powf(gamma) - 1.0)
        }
    };
    let interp = |t: f64| -> f64 {
        if t <= r0 {
            return inner(t);
        }
        let i = match r.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => return w[i],
            Err(i) => (i - 1).min(r.len() - 2),
        };
        let h = r[i + 1] - r[i];
        let s = ((t - r[i]) / h).min(1.0);
        let (s2, s3) = (s * s, s * s * s);
        (2.0 * s3 - 3.0 * s2 + 1.0) * w[i]
            + (s3 - 2.0 * s2 + s) * h * dw[i]
            + (-2.0 * s3 + 3.0 * s2) * w[i + 1]
            + (s3 - s2) * h * dw[i + 1]
    };
    volume_ratio_bounded(p.cone().n(), &interp, r_geo, *r.last().expect("non-empty"))
}

/// `ŵ(ρ) = w(1/ρ) + 2 log ρ`: the same metric seen from the inverted
/// centre `x ↦ x/|x|²`.
pub fn inverted(w: impl Fn(f64) -> f64) -> impl Fn(f64) -> f64 {
    move |rho: f64| w(1.0 / rho) + 2.0 * rho.ln()
}

/// `Vol_g({r1 < |x| < r2}) = ω_n ∫ e^{-n w} t^{n-1} dt`.
pub fn annulus_volume(n: usize, w: impl Fn(f64) -> f64, r1: f64, r2: f64) -> Result<f64> {
    if !(r1 > 0.0 && r2 > r1) {
        return domain("annulus needs 0 < r1 < r2");
    }
    let omega_n = omega(n);
    integrate(|t| omega_n * (-(n as f64) * w(t)).exp() * t.powi(n as i32 - 1), r1, r2, QUAD_TOL, 0.0)
}

/// Least-squares fit `Q/(ω_n/n) = 1 + c₂ s² + c₄ s⁴` on radii `<= s_max`;
/// returns `(c₂, c₄)`.
pub fn fit_quadratic_coefficient(curve: &VolumeCurve, s_max: f64) -> Result<(f64, f64)> {
    let base = curve.omega_n / curve.n as f64;
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut count = 0;
    for (&s, &q) in curve.r.iter().zip(&curve.q) {
        if s > s_max {
            continue;
        }
        let (x1, x2, y) = (s * s, s.powi(4), q / base - 1.0);
        a11 += x1 * x1;
        a12 += x1 * x2;
        a22 += x2 * x2;
        b1 += x1 * y;
        b2 += x2 * y;
        count += 1;
    }
    let det = a11 * a22 - a12 * a12;
    if count < 3 || det.abs() <= 1e-300 {
        return domain("not enough radii below s_max for the expansion fit");
    }
    Ok(((b1 * a22 - b2 * a12) / det, (a11 * b2 - a12 * b1) / det))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndCountStatus {
    Converged,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndCount {
    pub m: i64,
    /// `n Q(r_max) / ω_n` before rounding.
    pub raw: f64,
    pub residual: f64,
    /// `d log Q / d log s` over the tail.
    pub tail_slope: f64,
    pub status: EndCountStatus,
}

/// `m ≈ n Q(r_max)/ω_n`, inconclusive when the tail of `Q` is still
/// moving by more than `slope_threshold` in log-log terms.
pub fn end_count_limit(curve: &VolumeCurve, slope_threshold: f64) -> Result<EndCount> {
    let len = curve.q.len();
    if len < 2 {
        return domain("end count needs at least two radii");
    }
    let tail = (len / 10).max(1);
    let (i, j) = (len - 1 - tail, len - 1);
    let tail_slope = (curve.q[j] / curve.q[i]).ln() / (curve.r[j] / curve.r[i]).ln();
    let raw = curve.n as f64 * curve.q[j] / curve.omega_n;
    let m = raw.round();
    let status = if tail_slope.abs() > slope_threshold || !raw.is_finite() {
        EndCountStatus::Inconclusive
    } else {
        EndCountStatus::Converged
    };
    Ok(EndCount { m: m as i64, raw, residual: (raw - m).abs(), tail_slope, status })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn omega_values() {
        assert!((omega(2) - 2.0 * PI).abs() < 1e-15);
        assert!((omega(3) - 4.0 * PI).abs() < 1e-15);
        assert!((omega(4) - 2.0 * PI * PI).abs() < 1e-13);
        assert!((omega(5) - 8.0 * PI * PI / 3.0).abs() < 1e-13);
    }

    #[test]
    fn euclidean_ratio_is_ball_volume() {
        let s: Vec<f64> = (1..20).map(|i| 0.5 * i as f64).collect();
        let c = volume_ratio(3, |_| 0.0, &s).unwrap();
        for q in &c.q {
            assert!((q - 4.0 * PI / 3.0).abs() < 1e-10);
        }
        let e = end_count_limit(&c, 1e-3).unwrap();
        assert_eq!((e.m, e.status), (1, EndCountStatus::Converged));
    }

    #[test]
    fn round_sphere_closed_form() {
        let s: Vec<f64> = (1..30).map(|i| 0.1 * i as f64).collect();
        let c = volume_ratio(3, |rho| ((1.0 + rho * rho) / 2.0).ln(), &s).unwrap();
        for (i, &si) in s.iter().enumerate() {
            let vol = 2.0 * PI * si - PI * (2.0 * si).sin();
            assert!((c.q[i] * si.powi(3) - vol).abs() < 1e-8 * vol);
            assert!((c.rho[i] - (si / 2.0).tan()).abs() < 1e-9 * c.rho[i]);
        }
        assert!(c.max_relative_increase() <= 0.0);
    }

    #[test]
    fn sphere_beyond_diameter_is_rejected() {
        assert!(volume_ratio(3, |rho| ((1.0 + rho * rho) / 2.0).ln(), &[1.0, 3.5]).is_err());
    }

    #[test]
    fn annulus_of_singular_metric() {
        let v = annulus_volume(3, |t| 2.0 * t.ln(), 0.5, 2.0).unwrap();
        let oracle = 4.0 * PI / 3.0 * (0.5f64.powi(-3) - 2.0f64.powi(-3));
        assert!((v - oracle).abs() < 1e-10 * oracle);
    }

    #[test]
    fn profile_route_matches_closure_route() {
        let cone = crate::symfunc::ConeParams::new(3, 2).unwrap();
        let r = crate::radial::uniform_grid(0.01, 3.0, 400);
        let p = RadialProfile::from_fn(r, cone, |x| {
            let d = 1.0 + x * x;
            ((d / 2.0).ln(), 2.0 * x / d, 2.0 * (1.0 - x * x) / (d * d))
        })
        .unwrap();
        let s = [0.5, 1.0, 2.0];
        let a = volume_ratio_profile(&p, &s).unwrap();
        let b = volume_ratio(3, |rho| ((1.0 + rho * rho) / 2.0).ln(), &s).unwrap();
        for i in 0..3 {
            assert!((a.q[i] - b.q[i]).abs() < 1e-6 * b.q[i], "{} {} {}", i, a.q[i], b.q[i]);
        }
        let sing =
            RadialProfile::from_fn(vec![0.1, 0.2, 0.3], cone, |x| (2.0 * x.ln(), 2.0 / x, -2.0 / (x * x))).unwrap();
        assert!(volume_ratio_profile(&sing, &[0.1]).is_err());
    }
}
