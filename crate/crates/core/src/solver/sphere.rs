use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::continuation::{
    continue_branch, delta_schedule, delta_schedule_derivative, Branch, ContinuationConfig, ContinuationSystem,
};
use super::{Domain, RadialProblem, Rhs};
use crate::error::{domain, Error, Result};
use crate::symfunc::{binomial, ConeParams};

/// `σ_k(λ(W))` for a constant `w` on the round sphere, where `W = ½ I`.
pub(crate) fn sphere_w_sigma(cone: ConeParams) -> f64 {
    binomial(cone.n(), cone.k()) * 0.5f64.powi(cone.k() as i32)
}

/// `A = C(n,k)((n-2)/4)^k`, so that constant states satisfy `σ_k(λ(V)) = A v^k`.
pub fn sphere_coefficient(cone: ConeParams) -> f64 {
    binomial(cone.n(), cone.k()) * ((cone.n() as f64 - 2.0) / 4.0).powi(cone.k() as i32)
}

/// `A v^k = t (δ_t + f v^p)` for constant states on the round sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomotopySphereSystem {
    pub a_coef: f64,
    pub k: usize,
    pub f: f64,
    pub p: f64,
    pub delta0: f64,
}

impl HomotopySphereSystem {
    pub fn from_problem(problem: &RadialProblem, delta0: f64) -> Result<Self> {
        problem.validate()?;
        if problem.domain != Domain::SphereConstant {
            return Err(Error::Unsupported("continuation is implemented for constant sphere states".into()));
        }
        if matches!(problem.rhs, Rhs::Zero) {
            return domain("continuation needs a positive coefficient");
        }
        let k = problem.cone.k();
        if !(problem.p > k as f64) {
            return Err(Error::Unsupported(format!("supercritical continuation needs p > k, got p = {}", problem.p)));
        }
        if !(delta0 > 0.0 && delta0 <= 1.0) {
            return Err(Error::Config(format!("delta0 must lie in (0, 1], got {delta0}")));
        }
        let f = problem.beta().powi(k as i32) * problem.w_coefficient(0.0);
        Ok(Self { a_coef: sphere_coefficient(problem.cone), k, f, p: problem.p, delta0 })
    }

    /// Closed-form fold `(t*, v*)` when `δ_t = δ₀` there.
    pub fn fold_estimate(&self) -> (f64, f64) {
        let k = self.k as f64;
        let v = (k * self.delta0 / (self.f * (self.p - k))).powf(1.0 / self.p);
        (self.a_coef * k * v.powf(k - self.p) / (self.f * self.p), v)
    }
}

impl ContinuationSystem for HomotopySphereSystem {
    fn dim(&self) -> usize {
        1
    }

    fn residual(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let v = x[0];
        Ok(vec![self.a_coef * v.powi(self.k as i32) - t * (delta_schedule(self.delta0, t) + self.f * v.powf(self.p))])
    }

    fn jacobian(&self, x: &[f64], t: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let v = x[0];
        let k = self.k as i32;
        let gv = k as f64 * self.a_coef * v.powi(k - 1) - t * self.p * self.f * v.powf(self.p - 1.0);
        let gt =
            -(delta_schedule(self.delta0, t) + self.f * v.powf(self.p)) - t * delta_schedule_derivative(self.delta0, t);
        Ok((DMatrix::from_element(1, 1, gv), DVector::from_element(1, gt)))
    }

    fn delta(&self, t: f64) -> f64 {
        delta_schedule(self.delta0, t)
    }

    fn in_domain(&self, x: &[f64]) -> bool {
        x[0] > 0.0
    }
}

/// `φ(v) = Σ c_j v^{e_j}` with `e_j ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSeries {
    pub terms: Vec<(f64, f64)>,
}

impl PowerSeries {
    pub fn new(terms: Vec<(f64, f64)>) -> Result<Self> {
        if terms.is_empty() {
            return domain("power series needs at least one term");
        }
        if terms.iter().any(|(c, e)| !(c.is_finite() && e.is_finite() && *e >= 0.0)) {
            return domain("power series needs finite coefficients and exponents >= 0");
        }
        Ok(Self { terms })
    }

    pub fn eval(&self, v: f64) -> f64 {
        self.terms.iter().map(|(c, e)| c * v.powf(*e)).sum()
    }

    pub fn derivative(&self, v: f64) -> f64 {
        self.terms.iter().filter(|(_, e)| *e != 0.0).map(|(c, e)| c * e * v.powf(e - 1.0)).sum()
    }

    fn at_zero(&self) -> f64 {
        self.terms.iter().filter(|(_, e)| *e == 0.0).map(|(c, _)| c).sum()
    }

    /// Combined coefficient of the lowest or highest exponent.
    fn extreme(&self, highest: bool) -> (f64, f64) {
        let mut exps: Vec<f64> = self.terms.iter().filter(|(c, _)| *c != 0.0).map(|(_, e)| *e).collect();
        exps.sort_by(f64::total_cmp);
        let Some(&e) = (if highest { exps.last() } else { exps.first() }) else { return (0.0, 0.0) };
        (self.terms.iter().filter(|(_, x)| *x == e).map(|(c, _)| c).sum(), e)
    }
}

/// Growth hypotheses on `φ` relative to `θ v^k`, `θ = A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GrowthClass {
    /// `φ ≥ c₀ > 0` and `φ/v^k → ∞`: a fold pair below some `t*`.
    FoldPair,
    /// `φ/v^k < θ` near `0` and `> θ` near `∞`: a solution at `t = 1`
    /// without crossing a fold.
    Crossing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralSphereSystem {
    pub a_coef: f64,
    pub k: usize,
    pub phi: PowerSeries,
}

impl GeneralSphereSystem {
    pub fn new(cone: ConeParams, phi: PowerSeries) -> Result<Self> {
        cone.require_supercritical()?;
        Ok(Self { a_coef: sphere_coefficient(cone), k: cone.k(), phi })
    }

    fn h(&self, v: f64, t: f64) -> f64 {
        self.a_coef * v.powi(self.k as i32) - t * self.phi.eval(v)
    }

    /// Checks the hypotheses of `class`.
    pub fn validate(&self, class: GrowthClass) -> Result<()> {
        let k = self.k as f64;
        let (c_hi, e_hi) = self.phi.extreme(true);
        let beats_at_infinity = e_hi > k && c_hi > 0.0 || e_hi == k && c_hi > self.a_coef;
        match class {
            GrowthClass::FoldPair => {
                let c0 = log_samples().map(|v| self.phi.eval(v)).fold(self.phi.at_zero(), f64::min);
                if !(c0 > 0.0) {
                    return Err(Error::Config(format!("fold-pair growth needs φ >= c0 > 0; inf φ = {c0:.3e}")));
                }
                if !(e_hi > k && c_hi > 0.0) {
                    return Err(Error::Config("fold-pair growth needs φ/v^k -> ∞".into()));
                }
            }
            GrowthClass::Crossing => {
                let (c_lo, e_lo) = self.phi.extreme(false);
                let below_at_zero = e_lo > k || e_lo == k && c_lo < self.a_coef;
                if !(below_at_zero && beats_at_infinity) {
                    return Err(Error::Config("crossing growth needs φ/v^k below θ near 0 and above θ near ∞".into()));
                }
                if self.phi.at_zero() < 0.0 || log_samples().any(|v| self.phi.eval(v) < 0.0) {
                    return Err(Error::Config("φ must be non-negative".into()));
                }
            }
        }
        Ok(())
    }

    /// First sign change of `A v^k - t φ(v)` scanning upward from `v → 0`,
    /// refined by bisection.
    fn lowest_root(&self, t: f64) -> Result<f64> {
        let grid: Vec<f64> = log_samples().collect();
        let start = self.h(grid[0], t).signum();
        for w in grid.windows(2) {
            if self.h(w[1], t).signum() != start {
                let (mut lo, mut hi) = (w[0], w[1]);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.h(mid, t).signum() == start {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return Ok(0.5 * (lo + hi));
            }
        }
        domain(format!("no solution bracketed at t = {t}"))
    }
}

fn log_samples() -> impl Iterator<Item = f64> {
    (0..=480).map(|i| 10f64.powf(-12.0 + i as f64 * 0.05))
}

impl ContinuationSystem for GeneralSphereSystem {
    fn dim(&self) -> usize {
        1
    }

    fn residual(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        Ok(vec![self.h(x[0], t)])
    }

    fn jacobian(&self, x: &[f64], t: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let v = x[0];
        let k = self.k as i32;
        let gv = k as f64 * self.a_coef * v.powi(k - 1) - t * self.phi.derivative(v);
        Ok((DMatrix::from_element(1, 1, gv), DVector::from_element(1, -self.phi.eval(v))))
    }

    fn in_domain(&self, x: &[f64]) -> bool {
        x[0] > 0.0
    }
}

/// A traced branch together with the system that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereBranch<S> {
    pub system: S,
    pub branch: Branch,
}

impl<S: ContinuationSystem> SphereBranch<S> {
    pub fn solutions_at(&self, t: f64) -> Result<Vec<f64>> {
        let mut v: Vec<f64> = self.branch.solutions_at(&self.system, t)?.into_iter().map(|x| x[0]).collect();
        v.sort_by(f64::total_cmp);
        Ok(v)
    }

    pub fn fold_t(&self) -> Option<f64> {
        self.branch.folds.first().map(|f| f.t)
    }
}

/// `p > k`: trace `σ_k(λ(V)) = t(δ_t + f v^p)` from small `t` through the fold.
pub fn continuation_supercritical(
    problem: &RadialProblem,
    cfg: &ContinuationConfig,
) -> Result<SphereBranch<HomotopySphereSystem>> {
    cfg.validate()?;
    let system = HomotopySphereSystem::from_problem(problem, cfg.delta0)?;
    let t0 = cfg.t_start;
    let v0 = (t0 * delta_schedule(cfg.delta0, t0) / system.a_coef).powf(1.0 / system.k as f64);
    let branch = continue_branch(&system, &[v0], t0, true, cfg)?;
    Ok(SphereBranch { system, branch })
}

/// Continuation for `σ_k(λ(V)) = t φ(v)` on constant sphere states.
/// Fold-pair growth starts on the small solution near `t = 0` and crosses the
/// fold; crossing growth starts from the solution at `t = 1`.
pub fn general_rhs_continuation(
    cone: ConeParams,
    phi: PowerSeries,
    class: GrowthClass,
    cfg: &ContinuationConfig,
) -> Result<SphereBranch<GeneralSphereSystem>> {
    cfg.validate()?;
    let system = GeneralSphereSystem::new(cone, phi)?;
    system.validate(class)?;
    let (t0, forward) = match class {
        GrowthClass::FoldPair => (cfg.t_start, true),
        GrowthClass::Crossing => (1.0, true),
    };
    let v0 = system.lowest_root(t0)?;
    let branch = continue_branch(&system, &[v0], t0, forward, cfg)?;
    Ok(SphereBranch { system, branch })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::Coefficient;

    #[test]
    fn sphere_constants() {
        let c32 = ConeParams::new(3, 2).unwrap();
        assert!((sphere_coefficient(c32) - 3.0 / 16.0).abs() < 1e-15);
        assert!((sphere_coefficient(ConeParams::new(4, 3).unwrap()) - 0.5).abs() < 1e-15);
        assert!((sphere_w_sigma(c32) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn fold_of_model_problem() {
        let cone = ConeParams::new(3, 2).unwrap();
        let prob = RadialProblem::new(cone, Domain::SphereConstant, Rhs::PowerV { f: Coefficient::Constant(1.0) }, 4.0)
            .unwrap();
        let res = continuation_supercritical(&prob, &ContinuationConfig::default()).unwrap();
        assert_eq!(res.branch.folds.len(), 1);
        assert!((res.fold_t().unwrap() - 3.0 / 32.0).abs() < 1e-10);
        assert_eq!(res.system.fold_estimate(), (3.0 / 32.0, 1.0));
        assert_eq!(res.solutions_at(0.9 * 3.0 / 32.0).unwrap().len(), 2);
    }

    #[test]
    fn growth_validation() {
        let cone = ConeParams::new(3, 2).unwrap();
        let two_powers = PowerSeries::new(vec![(1.0, 3.0), (1.0, 5.0)]).unwrap();
        let sys = GeneralSphereSystem::new(cone, two_powers).unwrap();
        assert!(sys.validate(GrowthClass::FoldPair).is_err());
        assert!(sys.validate(GrowthClass::Crossing).is_ok());
        let shifted = GeneralSphereSystem::new(cone, PowerSeries::new(vec![(1.0, 0.0), (1.0, 3.0)]).unwrap()).unwrap();
        assert!(shifted.validate(GrowthClass::FoldPair).is_ok());
        assert!(shifted.validate(GrowthClass::Crossing).is_err());
        assert!(PowerSeries::new(vec![(1.0, -1.0)]).is_err());
    }
}
