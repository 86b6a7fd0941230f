//! Radial envelope `w̃(r) = sup_{B(c, r)} w` of a Cartesian field.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fd::weights3;
use super::grid::GridField;
use crate::error::{domain, Result};
use crate::symfunc::ConeParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeMethod {
    /// Maximum over grid nodes inside the closed ball.
    NodeMax,
    /// Running maximum of the sphere suprema of the cubic interpolant.
    Interpolated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeProfile {
    pub r: Vec<f64>,
    pub wtilde: Vec<f64>,
    pub center: Vec<f64>,
    pub method: EnvelopeMethod,
    pub spacing: f64,
}

impl EnvelopeProfile {
    /// Writes columns `r, wtilde` with full precision.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(out);
        wr.write_record(["r", "wtilde"])?;
        for (r, w) in self.r.iter().zip(&self.wtilde) {
            wr.write_record([format!("{r:.16e}"), format!("{w:.16e}")])?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn max_radius(f: &GridField, center: &[f64], method: EnvelopeMethod) -> Result<f64> {
    if center.len() != f.dims() {
        return domain(format!("center has {} coordinates, grid has {}", center.len(), f.dims()));
    }
    let m = match method {
        EnvelopeMethod::NodeMax => f.boundary_distance(center),
        EnvelopeMethod::Interpolated => f.interpolation_margin(center),
    };
    if !(m > 0.0) {
        return domain("center must lie strictly inside the usable part of the box");
    }
    Ok(m)
}

/// Radii `h, 2h, ...` up to the largest admissible ball radius.
pub fn default_radii(f: &GridField, center: &[f64], method: EnvelopeMethod) -> Result<Vec<f64>> {
    let rmax = max_radius(f, center, method)?;
    let h = f.spacing();
    let count = (rmax / h * (1.0 - 1e-12)).floor() as usize;
    if count < 3 {
        return domain("box too small around the center for an envelope");
    }
    Ok((1..=count).map(|i| i as f64 * h).collect())
}

fn check_radii(radii: &[f64], rmax: f64) -> Result<()> {
    if radii.is_empty() {
        return domain("no radii requested");
    }
    if radii[0] < 0.0 || radii.windows(2).any(|p| !(p[1] > p[0])) {
        return domain("radii must be non-negative and strictly increasing");
    }
    let last = *radii.last().expect("non-empty");
    if last > rmax * (1.0 + 1e-12) {
        return domain(format!("radius {last} exceeds the distance {rmax} from the center to the box edge"));
    }
    Ok(())
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `w̃(r) = sup_{B(center, r)} w` for each requested radius.
pub fn radial_envelope(
    f: &GridField,
    center: &[f64],
    radii: &[f64],
    method: EnvelopeMethod,
) -> Result<EnvelopeProfile> {
    let rmax = max_radius(f, center, method)?;
    check_radii(radii, rmax)?;
    let wtilde = match method {
        EnvelopeMethod::NodeMax => node_max(f, center, radii)?,
        EnvelopeMethod::Interpolated => interpolated(f, center, radii),
    };
    Ok(EnvelopeProfile { r: radii.to_vec(), wtilde, center: center.to_vec(), method, spacing: f.spacing() })
}

fn node_max(f: &GridField, center: &[f64], radii: &[f64]) -> Result<Vec<f64>> {
    let slack = 1e-12 * f.spacing();
    let mut nodes: Vec<(f64, f64)> = (0..f.len()).map(|i| (dist(&f.coord(i), center), f.values()[i])).collect();
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::with_capacity(radii.len());
    let mut best = f64::NEG_INFINITY;
    let mut seen = 0;
    let mut j = 0;
    for &r in radii {
        while j < nodes.len() && nodes[j].0 <= r + slack {
            best = best.max(nodes[j].1);
            seen += 1;
            j += 1;
        }
        if seen == 0 {
            return domain(format!("ball of radius {r} contains no grid node"));
        }
        out.push(best);
    }
    Ok(out)
}

/// Literal sublevel-set form on nodes: the smallest level `h` such that
/// every node with value above `h` lies farther than `r` from the center.
pub fn sublevel_distance_envelope(f: &GridField, center: &[f64], radii: &[f64]) -> Result<Vec<f64>> {
    let rmax = max_radius(f, center, EnvelopeMethod::NodeMax)?;
    check_radii(radii, rmax)?;
    let slack = 1e-12 * f.spacing();
    let mut nodes: Vec<(f64, f64)> = (0..f.len()).map(|i| (f.values()[i], dist(&f.coord(i), center))).collect();
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
    // nearest[i] = min distance over nodes with value strictly greater than nodes[i].0
    let m = nodes.len();
    let mut nearest = vec![f64::INFINITY; m];
    let mut run = f64::INFINITY;
    let mut i = m;
    while i > 0 {
        let v = nodes[i - 1].0;
        let mut lo = i - 1;
        while lo > 0 && nodes[lo - 1].0 == v {
            lo -= 1;
        }
        for slot in &mut nearest[lo..i] {
            *slot = run;
        }
        for node in &nodes[lo..i] {
            run = run.min(node.1);
        }
        i = lo;
    }
    radii
        .iter()
        .map(|&r| {
            nodes
                .iter()
                .zip(&nearest)
                .find(|(_, &d)| d > r + slack)
                .map(|(n, _)| n.0)
                .ok_or_else(|| crate::error::Error::Domain(format!("no level isolates radius {r}")))
        })
        .collect()
}

fn interpolated(f: &GridField, center: &[f64], radii: &[f64]) -> Vec<f64> {
    let at_center = f.interpolate(center).unwrap_or(f64::NEG_INFINITY);
    let sups: Vec<f64> = radii.par_iter().map(|&s| sphere_sup(f, center, s)).collect();
    let mut best = at_center;
    sups.into_iter()
        .map(|s| {
            best = best.max(s);
            best
        })
        .collect()
}

fn eval(f: &GridField, p: &[f64]) -> f64 {
    f.interpolate(p).unwrap_or(f64::NEG_INFINITY)
}

/// Supremum of the interpolant over the sphere `|x - c| = s`: dense
/// sampling, then pattern search from the best samples.
fn sphere_sup(f: &GridField, c: &[f64], s: f64) -> f64 {
    if s == 0.0 {
        return eval(f, c);
    }
    let h = f.spacing();
    if f.dims() == 2 {
        let m = ((8.0 * std::f64::consts::PI * s / h).ceil() as usize).clamp(64, 20_000);
        let point = |phi: f64| [c[0] + s * phi.cos(), c[1] + s * phi.sin()];
        let samples: Vec<(f64, f64)> = (0..m)
            .map(|i| {
                let phi = 2.0 * std::f64::consts::PI * i as f64 / m as f64;
                (phi, eval(f, &point(phi)))
            })
            .collect();
        let step = 2.0 * std::f64::consts::PI / m as f64;
        top_candidates(&samples, 4)
            .into_iter()
            .map(|(phi, v)| pattern_search(&[phi], v, step, |x| eval(f, &point(x[0]))))
            .fold(f64::NEG_INFINITY, f64::max)
    } else {
        let m = ((16.0 * std::f64::consts::PI * s * s / (h * h)).ceil() as usize).clamp(200, 20_000);
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let samples: Vec<([f64; 3], f64)> = (0..m)
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / m as f64;
                let rho = (1.0 - z * z).sqrt();
                let phi = golden * i as f64;
                let d = [rho * phi.cos(), rho * phi.sin(), z];
                (d, eval(f, &[c[0] + s * d[0], c[1] + s * d[1], c[2] + s * d[2]]))
            })
            .collect();
        let step = (4.0 * std::f64::consts::PI / m as f64).sqrt();
        top_candidates(&samples, 4)
            .into_iter()
            .map(|(d, v)| {
                let (e1, e2) = tangent_basis(d);
                let point = |x: &[f64]| {
                    let mut q = [0.0; 3];
                    for k in 0..3 {
                        q[k] = d[k] + x[0] * e1[k] + x[1] * e2[k];
                    }
                    let norm = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt();
                    [c[0] + s * q[0] / norm, c[1] + s * q[1] / norm, c[2] + s * q[2] / norm]
                };
                pattern_search(&[0.0, 0.0], v, step, |x| eval(f, &point(x)))
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn top_candidates<T: Copy>(samples: &[(T, f64)], count: usize) -> Vec<(T, f64)> {
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.sort_by(|&a, &b| samples[b].1.total_cmp(&samples[a].1).then(a.cmp(&b)));
    idx.into_iter().take(count).map(|i| samples[i]).collect()
}

fn tangent_basis(d: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let a = if d[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let dot = a[0] * d[0] + a[1] * d[1] + a[2] * d[2];
    let mut e1 = [a[0] - dot * d[0], a[1] - dot * d[1], a[2] - dot * d[2]];
    let n1 = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
    e1.iter_mut().for_each(|x| *x /= n1);
    let e2 = [d[1] * e1[2] - d[2] * e1[1], d[2] * e1[0] - d[0] * e1[2], d[0] * e1[1] - d[1] * e1[0]];
    (e1, e2)
}

/// Compass search maximising `g`, halving the step until it is negligible.
fn pattern_search(x0: &[f64], v0: f64, step0: f64, g: impl Fn(&[f64]) -> f64) -> f64 {
    let mut x = x0.to_vec();
    let mut best = v0;
    let mut step = step0;
    let mut trial = x.clone();
    while step > 1e-9 * step0.max(1e-3) {
        let mut moved = false;
        for k in 0..x.len() {
            for sign in [1.0, -1.0] {
                trial.copy_from_slice(&x);
                trial[k] += sign * step;
                let v = g(&trial);
                if v > best {
                    best = v;
                    x.copy_from_slice(&trial);
                    moved = true;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inequality {
    /// `w̃'/r - ½w̃'² >= 0`.
    Tangential,
    /// `(w̃'' + w̃'/r) - (1-θ)(w̃'/r - ½w̃'²) >= 0`.
    Radial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViscosityViolation {
    pub index: usize,
    pub r: f64,
    pub inequality: Inequality,
    pub value: f64,
    /// Value divided by the magnitude of the terms at that node.
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViscosityReport {
    pub tau: f64,
    pub checked_nodes: usize,
    pub tangential: Vec<f64>,
    pub radial: Vec<f64>,
    pub min_relative: f64,
    pub violations: Vec<ViscosityViolation>,
    pub passed: bool,
}

/// Checks both radial admissibility inequalities for the envelope at all
/// interior radii. A node fails when an inequality is below `-tau` times
/// the magnitude of its terms; `tau` defaults to `c_fd * h`.
pub fn envelope_viscosity_check(e: &EnvelopeProfile, cone: ConeParams, tau: Option<f64>) -> Result<ViscosityReport> {
    cone.require_supercritical()?;
    if e.r.len() < 3 || e.r.len() != e.wtilde.len() {
        return domain("envelope needs at least three radii");
    }
    if e.wtilde.iter().any(|v| !v.is_finite()) {
        return domain("envelope has non-finite values; drop radii near the singular node");
    }
    let tau = tau.unwrap_or(super::DEFAULT_C_FD * e.spacing);
    let theta = cone.theta();
    let mut rep = ViscosityReport {
        tau,
        checked_nodes: 0,
        tangential: Vec::new(),
        radial: Vec::new(),
        min_relative: f64::INFINITY,
        violations: Vec::new(),
        passed: true,
    };
    for i in 1..e.r.len() - 1 {
        let r = e.r[i];
        if r <= 0.0 {
            continue;
        }
        let xs = [e.r[i - 1], r, e.r[i + 1]];
        let ys = [e.wtilde[i - 1], e.wtilde[i], e.wtilde[i + 1]];
        let (w1, w2) = weights3(xs, r);
        let d1: f64 = (0..3).map(|j| w1[j] * ys[j]).sum();
        let d2: f64 = (0..3).map(|j| w2[j] * ys[j]).sum();
        let tang = d1 / r - 0.5 * d1 * d1;
        let rad = (d2 + d1 / r) - (1.0 - theta) * tang;
        let scale = d2.abs() + 0.5 * d1 * d1 + (d1 / r).abs();
        rep.checked_nodes += 1;
        rep.tangential.push(tang);
        rep.radial.push(rad);
        for (which, val) in [(Inequality::Tangential, tang), (Inequality::Radial, rad)] {
            let rel = if scale > 0.0 { val / scale } else { 0.0 };
            rep.min_relative = rep.min_relative.min(rel);
            if val < -tau * scale {
                rep.violations.push(ViscosityViolation { index: i, r, inequality: which, value: val, relative: rel });
            }
        }
    }
    rep.passed = rep.violations.is_empty();
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c32() -> ConeParams {
        ConeParams::new(3, 2).unwrap()
    }

    #[test]
    fn constant_field() {
        let g = GridField::centered(2, 11, 0.1, |_| 3.0).unwrap();
        for m in [EnvelopeMethod::NodeMax, EnvelopeMethod::Interpolated] {
            let radii = default_radii(&g, &[0.0, 0.0], m).unwrap();
            let e = radial_envelope(&g, &[0.0, 0.0], &radii, m).unwrap();
            assert!(e.wtilde.iter().all(|&v| (v - 3.0).abs() < 1e-13));
        }
    }

    #[test]
    fn node_max_matches_sublevel_oracle() {
        let bump = |x: &[f64], c: [f64; 2], s: f64| s * ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2));
        let g =
            GridField::centered(2, 21, 0.1, |x| bump(x, [0.2, 0.1], 1.0).max(bump(x, [-0.3, 0.0], 2.0) - 0.1)).unwrap();
        let radii = default_radii(&g, &[0.05, -0.05], EnvelopeMethod::NodeMax).unwrap();
        let e = radial_envelope(&g, &[0.05, -0.05], &radii, EnvelopeMethod::NodeMax).unwrap();
        let oracle = sublevel_distance_envelope(&g, &[0.05, -0.05], &radii).unwrap();
        assert_eq!(e.wtilde, oracle);
        assert!(e.wtilde.windows(2).all(|p| p[1] >= p[0]));
    }

    #[test]
    fn radial_input_is_reproduced() {
        let g = GridField::centered(2, 41, 0.05, |x| (x[0] * x[0] + x[1] * x[1]).sqrt().powf(1.5)).unwrap();
        let radii = default_radii(&g, &[0.0, 0.0], EnvelopeMethod::Interpolated).unwrap();
        let e = radial_envelope(&g, &[0.0, 0.0], &radii, EnvelopeMethod::Interpolated).unwrap();
        for (r, v) in e.r.iter().zip(&e.wtilde) {
            assert!((v - r.powf(1.5)).abs() < 0.05 * 0.05, "r={r}");
        }
    }

    #[test]
    fn radius_beyond_box_is_rejected() {
        let g = GridField::centered(2, 11, 0.1, |_| 0.0).unwrap();
        assert!(radial_envelope(&g, &[0.0, 0.0], &[0.2, 0.6], EnvelopeMethod::NodeMax).is_err());
        assert!(radial_envelope(&g, &[0.6, 0.0], &[0.1], EnvelopeMethod::NodeMax).is_err());
    }

    #[test]
    fn steep_concave_field_is_flagged() {
        let l = 200.0;
        let g = GridField::centered(2, 41, 0.05, |x| -l * ((x[0] - 0.5).powi(2) + x[1] * x[1])).unwrap();
        let radii = default_radii(&g, &[0.0, 0.0], EnvelopeMethod::Interpolated).unwrap();
        let e = radial_envelope(&g, &[0.0, 0.0], &radii, EnvelopeMethod::Interpolated).unwrap();
        let rep = envelope_viscosity_check(&e, c32(), None).unwrap();
        assert!(!rep.passed);
        assert!(rep.violations.iter().any(|v| v.inequality == Inequality::Tangential && v.value < 0.0));
    }

    #[test]
    fn two_log_r_envelope_is_on_the_boundary() {
        let r: Vec<f64> = (1..40).map(|i| 0.05 * i as f64).collect();
        let e = EnvelopeProfile {
            wtilde: r.iter().map(|x| 2.0 * x.ln()).collect(),
            r,
            center: vec![0.0; 3],
            method: EnvelopeMethod::NodeMax,
            spacing: 0.05,
        };
        let rep = envelope_viscosity_check(&e, c32(), None).unwrap();
        assert!(rep.passed);
        assert!(rep.min_relative > -0.05);
    }
}
