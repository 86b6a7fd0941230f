//! Damped Newton solvers for radial and constant reductions of
//! `σ_k(λ(V)) = f v^p`, in the three regimes `p < k`, `p = k`, `p > k`.

mod continuation;
mod eigen;
mod newton;
mod sphere;

pub use continuation::{
    continue_branch, delta_schedule, delta_schedule_derivative, newton_fixed_t, Branch, BranchPoint,
    ContinuationConfig, ContinuationSystem, FoldMarker, Termination,
};
pub use eigen::{solve_eigenvalue, EigenResult};
pub use newton::{
    assemble, initial_guess, newton_solve, solve_subcritical, solve_v_gauge, thomas_solve, Assembly, Solution,
    SubcriticalSolution,
};
pub use sphere::{
    continuation_supercritical, general_rhs_continuation, sphere_coefficient, GeneralSphereSystem, GrowthClass,
    HomotopySphereSystem, PowerSeries, SphereBranch,
};

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::symfunc::ConeParams;

/// A real function of `r` that cannot be serialised.
#[derive(Clone)]
pub struct ScalarFn(pub Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ScalarFn(..)")
    }
}

/// The coefficient `f(r)` of the right-hand side.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coefficient {
    Constant(f64),
    /// Piecewise linear in `r`, constant beyond the table.
    Table {
        r: Vec<f64>,
        f: Vec<f64>,
    },
    #[serde(skip)]
    Function(ScalarFn),
}

impl Coefficient {
    pub fn function(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Coefficient::Function(ScalarFn(Arc::new(f)))
    }

    pub fn eval(&self, r: f64) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Function(f) => (f.0)(r),
            Coefficient::Table { r: rs, f } => {
                if r <= rs[0] {
                    return f[0];
                }
                let last = rs.len() - 1;
                if r >= rs[last] {
                    return f[last];
                }
                let i = rs.partition_point(|&x| x <= r) - 1;
                let s = (r - rs[i]) / (rs[i + 1] - rs[i]);
                f[i] + s * (f[i + 1] - f[i])
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Coefficient::Constant(c) if !(c.is_finite() && *c > 0.0) => {
                domain(format!("coefficient f must be positive, got {c}"))
            }
            Coefficient::Table { r, f } => {
                if r.is_empty() || r.len() != f.len() {
                    return domain("coefficient table needs matching non-empty columns");
                }
                if r.windows(2).any(|p| !(p[1] > p[0])) {
                    return domain("coefficient table radii must increase");
                }
                if f.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return domain("coefficient table values must be positive");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Domain {
    /// `r0 <= r <= r1` with Dirichlet data `w(r0) = w0`, `w(r1) = w1`.
    Annulus { r0: f64, r1: f64, w0: f64, w1: f64 },
    /// `|x| <= r1` with `w'(0) = 0` and `w(r1) = w1`.
    Ball { r1: f64, w1: f64 },
    /// Constant solutions on the round sphere.
    SphereConstant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundSpec {
    Flat,
    RoundSphere,
}

/// Right-hand side of the radial equation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum Rhs {
    /// `σ_k(λ(W)) = f e^{a w}` with `a = ½(n-2)(k-p)`.
    ExpW { f: Coefficient },
    /// `σ_k(λ(V)) = f v^p`, solved as `σ_k(λ(W)) = ((n-2)/2)^{-k} f e^{a w}`.
    PowerV { f: Coefficient },
    /// `σ_k(λ(W)) = 0`, solved in the factored form `a + θ b = 0`.
    Zero,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialProblem {
    pub cone: ConeParams,
    pub domain: Domain,
    pub background: BackgroundSpec,
    pub rhs: Rhs,
    pub p: f64,
}

impl RadialProblem {
    pub fn new(cone: ConeParams, domain: Domain, rhs: Rhs, p: f64) -> Result<Self> {
        let background = match domain {
            Domain::SphereConstant => BackgroundSpec::RoundSphere,
            _ => BackgroundSpec::Flat,
        };
        let prob = Self { cone, domain, background, rhs, p };
        prob.validate()?;
        Ok(prob)
    }

    pub fn validate(&self) -> Result<()> {
        self.cone.require_supercritical()?;
        if !self.p.is_finite() {
            return domain("exponent p must be finite");
        }
        match self.domain {
            Domain::Annulus { r0, r1, w0, w1 } => {
                if !(r0 > 0.0 && r1 > r0) || !(w0.is_finite() && w1.is_finite()) {
                    return domain("annulus needs 0 < r0 < r1 and finite boundary data");
                }
            }
            Domain::Ball { r1, w1 } => {
                if !(r1 > 0.0) || !w1.is_finite() {
                    return domain("ball needs r1 > 0 and finite boundary data");
                }
            }
            Domain::SphereConstant => {
                if matches!(self.rhs, Rhs::Zero) {
                    return domain("the constant sphere reduction has no zero right-hand side");
                }
            }
        }
        let expected = match self.domain {
            Domain::SphereConstant => BackgroundSpec::RoundSphere,
            _ => BackgroundSpec::Flat,
        };
        if self.background != expected {
            return Err(Error::Unsupported(format!("{:?} domain requires a {:?} background", self.domain, expected)));
        }
        match &self.rhs {
            Rhs::ExpW { f } | Rhs::PowerV { f } => f.validate(),
            Rhs::Zero => Ok(()),
        }
    }

    /// `β = (n-2)/2`.
    pub fn beta(&self) -> f64 {
        (self.cone.n() as f64 - 2.0) / 2.0
    }

    /// Exponent `a = ½(n-2)(k-p)` of the `w`-gauge right-hand side.
    pub fn exponent_a(&self) -> f64 {
        crate::conformal::exponent_a(self.cone.n(), self.cone.k(), self.p)
    }

    /// `w`-gauge coefficient `f̃(r)`.
    pub fn w_coefficient(&self, r: f64) -> f64 {
        match &self.rhs {
            Rhs::ExpW { f } => f.eval(r),
            Rhs::PowerV { f } => crate::conformal::w_gauge_coefficient(self.cone.n(), self.cone.k(), f.eval(r)),
            Rhs::Zero => 0.0,
        }
    }

    /// `φ(r, w)` and `∂φ/∂w`.
    pub fn phi(&self, r: f64, w: f64) -> (f64, f64) {
        if matches!(self.rhs, Rhs::Zero) {
            return (0.0, 0.0);
        }
        let a = self.exponent_a();
        let v = self.w_coefficient(r) * (a * w).exp();
        (v, a * v)
    }

    pub fn from_file(file: &ProblemFile) -> Result<(Self, SolverConfig, ContinuationConfig)> {
        let cone = ConeParams::new(file.n, file.k)?;
        let domain = match file.domain.kind.as_str() {
            "annulus" => {
                let (r0, r1) = (need(file.domain.r0, "domain.r0")?, need(file.domain.r1, "domain.r1")?);
                let bc = file.domain.bc.as_ref().ok_or_else(|| Error::Config("annulus needs domain.bc".into()))?;
                Domain::Annulus { r0, r1, w0: need(bc.w0, "domain.bc.w0")?, w1: need(bc.w1, "domain.bc.w1")? }
            }
            "ball" => {
                let bc = file.domain.bc.as_ref().ok_or_else(|| Error::Config("ball needs domain.bc".into()))?;
                Domain::Ball { r1: need(file.domain.r1, "domain.r1")?, w1: need(bc.w1, "domain.bc.w1")? }
            }
            "sphere_constant" => Domain::SphereConstant,
            other => return Err(Error::Config(format!("unknown domain type '{other}'"))),
        };
        let coefficient = || -> Result<Coefficient> {
            match (&file.rhs.f_const, &file.rhs.f_table) {
                (Some(c), None) => Ok(Coefficient::Constant(*c)),
                (None, Some(t)) => Ok(Coefficient::Table { r: t.r.clone(), f: t.f.clone() }),
                (None, None) => Ok(Coefficient::Constant(1.0)),
                _ => Err(Error::Config("give either rhs.f_const or rhs.f_table".into())),
            }
        };
        let rhs = match file.rhs.form.as_str() {
            "exp_w" => Rhs::ExpW { f: coefficient()? },
            "power_v" => Rhs::PowerV { f: coefficient()? },
            "zero" => Rhs::Zero,
            other => return Err(Error::Config(format!("unknown rhs form '{other}'"))),
        };
        let mut prob = Self::new(cone, domain, rhs, file.p)?;
        if let Some(bg) = file.background {
            prob.background = bg;
            prob.validate()?;
        }
        let solver = file.solver.clone().unwrap_or_default();
        solver.validate()?;
        let cont = file.continuation.clone().unwrap_or_default();
        cont.validate()?;
        Ok((prob, solver, cont))
    }
}

fn need(v: Option<f64>, name: &str) -> Result<f64> {
    v.ok_or_else(|| Error::Config(format!("missing field {name}")))
}

/// Newton settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Number of grid intervals.
    #[serde(rename = "N")]
    pub n_grid: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Smallest damping factor tried by the line search.
    pub min_damping: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { n_grid: 128, tol: 1e-10, max_iter: 50, min_damping: 1.0 / 1_073_741_824.0 }
    }
}

impl SolverConfig {
    pub fn with_grid(n_grid: usize) -> Self {
        Self { n_grid, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_grid < 16 {
            return Err(Error::Config(format!("grid size N must be >= 16, got {}", self.n_grid)));
        }
        if !(self.tol > 0.0) || !(self.min_damping > 0.0 && self.min_damping < 1.0) || self.max_iter == 0 {
            return Err(Error::Config("tolerances and iteration limits must be positive".into()));
        }
        Ok(())
    }
}

/// On-disk problem description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemFile {
    pub n: usize,
    pub k: usize,
    #[serde(default)]
    pub p: f64,
    pub domain: DomainFile,
    #[serde(default)]
    pub background: Option<BackgroundSpec>,
    pub rhs: RhsFile,
    #[serde(default)]
    pub solver: Option<SolverConfig>,
    #[serde(default)]
    pub continuation: Option<ContinuationConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainFile {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub r0: Option<f64>,
    #[serde(default)]
    pub r1: Option<f64>,
    #[serde(default)]
    pub bc: Option<BoundaryFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryFile {
    #[serde(default)]
    pub w0: Option<f64>,
    #[serde(default)]
    pub w1: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RhsFile {
    pub form: String,
    #[serde(default)]
    pub f_const: Option<f64>,
    #[serde(default)]
    pub f_table: Option<TableFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableFile {
    pub r: Vec<f64>,
    pub f: Vec<f64>,
}
