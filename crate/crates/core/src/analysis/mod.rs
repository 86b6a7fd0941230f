//! Barrier operators, admissibility-preserving operations and geometric
//! diagnostics.

mod harnack;
mod maxop;
mod mollify;
mod volume;

pub use harnack::{harnack_ratio_grid, harnack_ratio_radial, HarnackReport};
pub use maxop::{
    grid_admissibility, kink_mask_grid, kink_mask_profile, pointwise_max_grid, pointwise_max_profile,
    profile_admissibility_outside_kink, NodeAdmissibility, DEFAULT_KINK_MARGIN,
};
pub use mollify::{mollifier_weight, mollify};
pub use volume::{
    annulus_volume, end_count_limit, fit_quadratic_coefficient, inverted, omega, volume_ratio, volume_ratio_profile,
    EndCount, EndCountStatus, VolumeCurve,
};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::radial::RadialProfile;
use crate::symfunc::{ConeParams, EigenTuple};

/// Pucci constant `δ = (n-k)/(n(k-1))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PucciParams {
    pub delta: f64,
}

impl PucciParams {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return domain(format!("pucci delta must be finite and >= 0, got {delta}"));
        }
        Ok(Self { delta })
    }

    pub fn from_cone(cone: ConeParams) -> Result<Self> {
        let delta = cone.delta().ok_or_else(|| Error::Unsupported("pucci constant needs k >= 2".into()))?;
        Self::new(delta)
    }
}

/// `P[λ] = min λ_i + δ Σ λ_i`.
pub fn pucci_min(eigs: &EigenTuple, params: PucciParams) -> f64 {
    eigs.min() + params.delta * eigs.sum()
}

/// Hessian eigenvalues of `u₀ = r^α`, `α = 2 - n/k`: the radial one first,
/// then `n-1` copies of the tangential one.
pub fn barrier_hessian_eigs(cone: ConeParams, r: f64) -> Result<EigenTuple> {
    if !(r > 0.0) {
        return domain("barrier is evaluated at r > 0");
    }
    let alpha = cone.alpha();
    let p = r.powf(alpha - 2.0);
    let mut v = vec![alpha * p; cone.n()];
    v[0] = alpha * (alpha - 1.0) * p;
    EigenTuple::new(v)
}

/// `Δu₀` for the barrier.
pub fn barrier_laplacian(cone: ConeParams, r: f64) -> Result<f64> {
    Ok(barrier_hessian_eigs(cone, r)?.sum())
}

/// `∂_r² u₀` for the barrier.
pub fn barrier_radial_second(cone: ConeParams, r: f64) -> Result<f64> {
    Ok(barrier_hessian_eigs(cone, r)?.values()[0])
}

/// Closed-form coefficients `(n(k-1)(2k-n)/k², -(2k-n)(n-k)/k²)` of
/// `r^{-n/k}` in `Δu₀` and `∂_r²u₀`.
pub fn barrier_coefficients(cone: ConeParams) -> (f64, f64) {
    let (n, k) = (cone.n() as f64, cone.k() as f64);
    (n * (k - 1.0) * (2.0 * k - n) / (k * k), -(2.0 * k - n) * (n - k) / (k * k))
}

/// `p` with `p - 2 = n(k-1)/(n-k)`.
pub fn p_exponent(cone: ConeParams) -> Result<f64> {
    if cone.k() == cone.n() {
        return Err(Error::Unsupported("p-Laplacian exponent is infinite for k = n".into()));
    }
    let (n, k) = (cone.n() as f64, cone.k() as f64);
    Ok(2.0 + n * (k - 1.0) / (n - k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PLaplacianReport {
    pub p: f64,
    /// `Δ_p u` per node.
    pub values: Vec<f64>,
    /// `Δ_p u / (u |u'|^{p-2})` per node.
    pub ratios: Vec<f64>,
    pub inf_ratio: f64,
    pub min_value: f64,
    pub negative_nodes: Vec<usize>,
}

/// Radial `Δ_p u = |u'|^{p-2}((p-1)u'' + (n-1)u'/r)` for `u = e^w`.
pub fn p_laplacian_check(profile: &RadialProfile) -> Result<PLaplacianReport> {
    let cone = profile.cone();
    let p = p_exponent(cone)?;
    let n = cone.n() as f64;
    let tol = profile.default_tolerance();
    let mut rep = PLaplacianReport {
        p,
        values: Vec::with_capacity(profile.len()),
        ratios: Vec::with_capacity(profile.len()),
        inf_ratio: f64::INFINITY,
        min_value: f64::INFINITY,
        negative_nodes: Vec::new(),
    };
    for i in 0..profile.len() {
        let (r, w, d1, d2) = (profile.r()[i], profile.w()[i], profile.dw()[i], profile.d2w()[i]);
        let u = w.exp();
        let du = d1 * u;
        let d2u = (d2 + d1 * d1) * u;
        let bracket = (p - 1.0) * d2u + (n - 1.0) * du / r;
        let value = du.abs().powf(p - 2.0) * bracket;
        let ratio = bracket / u;
        let scale = ((p - 1.0) * d2u.abs() + (n - 1.0) * (du / r).abs()) / u;
        rep.values.push(value);
        rep.ratios.push(ratio);
        rep.inf_ratio = rep.inf_ratio.min(ratio);
        rep.min_value = rep.min_value.min(value);
        if ratio < -tol * scale {
            rep.negative_nodes.push(i);
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial::uniform_grid;

    #[test]
    fn pucci_of_ones() {
        let cone = ConeParams::new(4, 3).unwrap();
        let pp = PucciParams::from_cone(cone).unwrap();
        let v = pucci_min(&EigenTuple::new(vec![1.0; 4]).unwrap(), pp);
        assert!((v - (1.0 + 4.0 * pp.delta)).abs() < 1e-15);
        assert!(PucciParams::from_cone(ConeParams::new(3, 1).unwrap()).is_err());
    }

    #[test]
    fn barrier_n3_k2() {
        let cone = ConeParams::new(3, 2).unwrap();
        let pp = PucciParams::from_cone(cone).unwrap();
        for r in [1e-3f64, 0.1, 0.5, 1.0] {
            let scale = r.powf(-1.5);
            assert!((barrier_laplacian(cone, r).unwrap() - 0.75 * scale).abs() < 1e-12 * scale);
            assert!((barrier_radial_second(cone, r).unwrap() + 0.25 * scale).abs() < 1e-12 * scale);
            let p = pucci_min(&barrier_hessian_eigs(cone, r).unwrap(), pp);
            assert!(p.abs() < 1e-12 * scale);
        }
        assert_eq!(barrier_coefficients(cone), (0.75, -0.25));
    }

    #[test]
    fn p_laplacian_examples() {
        let cone = ConeParams::new(3, 2).unwrap();
        assert_eq!(p_exponent(cone).unwrap(), 5.0);
        assert!(p_exponent(ConeParams::new(3, 3).unwrap()).is_err());

        let sq = RadialProfile::from_fn(uniform_grid(0.1, 2.0, 20), cone, |r| (2.0 * r.ln(), 2.0 / r, -2.0 / (r * r)))
            .unwrap();
        let rep = p_laplacian_check(&sq).unwrap();
        assert!(rep.negative_nodes.is_empty());
        for (i, &r) in sq.r().iter().enumerate() {
            // u = r², u' = 2r, u'' = 2: |2r|³ (4·2 + 2·2)
            let oracle = (2.0 * r).powi(3) * 12.0;
            assert!((rep.values[i] - oracle).abs() < 1e-12 * oracle);
        }

        let one = RadialProfile::from_fn(uniform_grid(0.1, 2.0, 5), cone, |_| (0.0, 0.0, 0.0)).unwrap();
        assert!(p_laplacian_check(&one).unwrap().values.iter().all(|&v| v == 0.0));

        let l = 5.0;
        let bad =
            RadialProfile::from_fn(uniform_grid(0.3, 2.0, 20), cone, |r| (-l * r * r, -2.0 * l * r, -2.0 * l)).unwrap();
        assert!(!p_laplacian_check(&bad).unwrap().negative_nodes.is_empty());
    }
}
