use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{sphere::sphere_w_sigma, Domain, RadialProblem, Rhs, SolverConfig};
use crate::error::{domain, Error, Result};
use crate::radial::{ab_point, sigma_k_radial_point, DEFAULT_C_FD};
use crate::symfunc::binomial;

/// Residual and tridiagonal Jacobian. `lower[i]` multiplies the unknown at
/// `i-1` in row `i`, `upper[i]` the one at `i+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Assembly {
    pub residual: Vec<f64>,
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Assembly {
    fn zeros(m: usize) -> Self {
        Self { residual: vec![0.0; m], lower: vec![0.0; m], diag: vec![0.0; m], upper: vec![0.0; m] }
    }

    pub fn norm(&self) -> f64 {
        self.residual.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Thomas algorithm for `J x = rhs`.
pub fn thomas_solve(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let m = diag.len();
    if lower.len() != m || upper.len() != m || rhs.len() != m || m == 0 {
        return domain("tridiagonal system has inconsistent lengths");
    }
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    let mut piv = diag[0];
    for i in 0..m {
        if i > 0 {
            piv = diag[i] - lower[i] * c[i - 1];
        }
        let scale = diag[i].abs() + lower[i].abs() + upper[i].abs();
        if !(piv.abs() > 1e-300 && piv.abs() > 1e-14 * scale) {
            return domain(format!("singular jacobian at row {i}"));
        }
        c[i] = upper[i] / piv;
        d[i] = (rhs[i] - if i > 0 { lower[i] * d[i - 1] } else { 0.0 }) / piv;
    }
    for i in (0..m - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy)]
enum Guard {
    Strict,
    /// Relative tolerance for the closed cone.
    Closed(f64),
}

fn guard_for(problem: &RadialProblem, h: f64) -> Guard {
    match problem.rhs {
        Rhs::Zero => Guard::Closed(DEFAULT_C_FD * h),
        _ => Guard::Strict,
    }
}

pub(crate) fn grid(problem: &RadialProblem, n_grid: usize) -> Vec<f64> {
    let (lo, hi) = match problem.domain {
        Domain::Annulus { r0, r1, .. } => (r0, r1),
        Domain::Ball { r1, .. } => (0.0, r1),
        Domain::SphereConstant => return vec![0.0],
    };
    let h = (hi - lo) / n_grid as f64;
    (0..=n_grid).map(|i| if i == n_grid { hi } else { lo + i as f64 * h }).collect()
}

fn boundary_rows(problem: &RadialProblem, m: usize) -> Vec<(usize, f64)> {
    match problem.domain {
        Domain::Annulus { w0, w1, .. } => vec![(0, w0), (m - 1, w1)],
        Domain::Ball { w1, .. } => vec![(m - 1, w1)],
        Domain::SphereConstant => vec![],
    }
}

/// Rows of the operator alone: `σ_k(a, b)` (or `a + θ b` for a zero
/// right-hand side) at interior nodes, `w - w_bc` at Dirichlet nodes.
fn operator_rows(problem: &RadialProblem, r: &[f64], w: &[f64], guard: Guard) -> Result<Assembly> {
    let cone = problem.cone;
    let (n, k) = (cone.n(), cone.k());
    let theta = cone.theta();
    let m = r.len();
    if w.len() != m || m < 3 {
        return domain("grid and unknowns disagree");
    }
    if w.iter().any(|v| !v.is_finite()) {
        return domain("non-finite iterate");
    }
    let h = r[1] - r[0];
    let h2 = h * h;
    let c0 = binomial(n - 1, k);
    let c1 = binomial(n - 1, k - 1);
    let zero = matches!(problem.rhs, Rhs::Zero);
    let mut asm = Assembly::zeros(m);
    // (node, b, a + θb, margin)
    let mut worst: Option<(usize, f64, f64, f64)> = None;
    let mut note = |i: usize, b: f64, ab: f64, scale: f64| {
        let margin = b.min(ab) / scale.max(f64::MIN_POSITIVE);
        let bad = match guard {
            Guard::Strict => !(b > 0.0 && ab > 0.0),
            Guard::Closed(tol) => margin < -tol,
        };
        if bad && worst.is_none_or(|x| margin < x.3) {
            worst = Some((i, b, ab, margin));
        }
    };

    let start = if matches!(problem.domain, Domain::Ball { .. }) {
        // symmetric centre: a = b = w''(0) with the ghost node w₋₁ = w₁
        let s = 2.0 * (w[1] - w[0]) / h2;
        note(0, s, (1.0 + theta) * s, s.abs());
        if zero {
            asm.residual[0] = s;
            asm.diag[0] = -2.0 / h2;
            asm.upper[0] = 2.0 / h2;
        } else {
            let cnk = binomial(n, k);
            asm.residual[0] = cnk * s.powi(k as i32);
            let ds = k as f64 * cnk * s.powi(k as i32 - 1);
            asm.diag[0] = -2.0 / h2 * ds;
            asm.upper[0] = 2.0 / h2 * ds;
        }
        1
    } else {
        0
    };
    for i in start.max(1)..m - 1 {
        let ri = r[i];
        let d1 = (w[i + 1] - w[i - 1]) / (2.0 * h);
        let d2 = (w[i + 1] - 2.0 * w[i] + w[i - 1]) / h2;
        let (a, b, scale) = ab_point(ri, d1, d2);
        note(i, b, a + theta * b, scale);
        let (value, sa, sb) = if zero {
            (a + theta * b, 1.0, theta)
        } else {
            let bk1 = b.powi(k as i32 - 1);
            let bk2 = if k >= 2 { (k - 1) as f64 * c1 * a * b.powi(k as i32 - 2) } else { 0.0 };
            (sigma_k_radial_point(a, b, cone), c1 * bk1, k as f64 * c0 * bk1 + bk2)
        };
        let t = (1.0 / ri - d1) / (2.0 * h);
        asm.residual[i] = value;
        asm.lower[i] = sa * (1.0 / h2 - d1 / (2.0 * h)) - sb * t;
        asm.diag[i] = sa * (-2.0 / h2);
        asm.upper[i] = sa * (1.0 / h2 + d1 / (2.0 * h)) + sb * t;
    }
    for (i, bc) in boundary_rows(problem, m) {
        asm.residual[i] = w[i] - bc;
        asm.lower[i] = 0.0;
        asm.diag[i] = 1.0;
        asm.upper[i] = 0.0;
    }
    if let Some((node, b, ab, _)) = worst {
        return Err(Error::Admissibility { node, b, ab });
    }
    Ok(asm)
}

fn is_boundary(problem: &RadialProblem, m: usize, i: usize) -> bool {
    boundary_rows(problem, m).iter().any(|&(j, _)| j == i)
}

fn sphere_assembly(problem: &RadialProblem, w: f64) -> Result<Assembly> {
    let a = problem.exponent_a();
    let s0 = sphere_w_sigma(problem.cone);
    let f = problem.w_coefficient(0.0);
    let mut asm = Assembly::zeros(1);
    // log form of σ_k(W) = f̃ e^{a w}
    asm.residual[0] = s0.ln() - f.ln() - a * w;
    asm.diag[0] = -a;
    Ok(asm)
}

/// Residual `σ_k(λ(W)) - φ(r, w)` and its Jacobian in the `w`-gauge.
/// Interior iterates must be strictly admissible (closed cone for a zero
/// right-hand side); otherwise the worst node is reported.
pub fn assemble(problem: &RadialProblem, r: &[f64], w: &[f64]) -> Result<Assembly> {
    if problem.domain == Domain::SphereConstant {
        if w.len() != 1 {
            return domain("the constant reduction has a single unknown");
        }
        return sphere_assembly(problem, w[0]);
    }
    let guard = guard_for(problem, r[1] - r[0]);
    let mut asm = operator_rows(problem, r, w, guard)?;
    let m = r.len();
    for i in 0..m {
        if is_boundary(problem, m, i) {
            continue;
        }
        let (phi, dphi) = problem.phi(r[i], w[i]);
        asm.residual[i] -= phi;
        asm.diag[i] -= dphi;
    }
    Ok(asm)
}

/// Converged discrete solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub r: Vec<f64>,
    pub w: Vec<f64>,
    pub residual: Vec<f64>,
    pub iterations: usize,
    /// `‖F‖_∞` before each iteration and at exit.
    pub history: Vec<f64>,
    /// Accepted damping factors.
    pub damping: Vec<f64>,
    /// Convergence order estimated from the last informative residuals.
    pub terminal_order: Option<f64>,
}

impl Solution {
    pub fn residual_norm(&self) -> f64 {
        self.residual.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `v = e^{-(n-2)w/2}`.
    pub fn v(&self, n: usize) -> Vec<f64> {
        let beta = (n as f64 - 2.0) / 2.0;
        self.w.iter().map(|w| (-beta * w).exp()).collect()
    }

    /// CSV with columns `r,w,v,residual`.
    pub fn write_csv<W: Write>(&self, n: usize, out: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(out);
        wr.write_record(["r", "w", "v", "residual"])?;
        for (((r, w), v), res) in self.r.iter().zip(&self.w).zip(self.v(n)).zip(&self.residual) {
            wr.write_record([r, w, &v, res].map(|x| format!("{x:.16e}")))?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Order `log(e₂/e₁)/log(e₁/e₀)` from the last residual triple still above
/// the rounding floor.
pub(crate) fn terminal_order(history: &[f64]) -> Option<f64> {
    let first = *history.first()?;
    let floor = 1e4 * f64::EPSILON * first.max(1.0);
    (2..history.len())
        .rev()
        .filter(|&j| history[j] > floor && history[j] < history[j - 1] && history[j - 1] < history[j - 2])
        .map(|j| (history[j] / history[j - 1]).ln() / (history[j - 1] / history[j - 2]).ln())
        .next()
}

struct NewtonOutcome {
    x: Vec<f64>,
    asm: Assembly,
    history: Vec<f64>,
    damping: Vec<f64>,
}

fn damped_newton<F>(x0: Vec<f64>, cfg: &SolverConfig, eval: F) -> Result<NewtonOutcome>
where
    F: Fn(&[f64]) -> Result<Assembly>,
{
    let mut x = x0;
    let mut asm = eval(&x)?;
    let mut norm = asm.norm();
    let mut history = vec![norm];
    let mut damping = Vec::new();
    let mut iter = 0;
    while norm > cfg.tol {
        if iter == cfg.max_iter {
            return Err(Error::NonConvergence { iterations: iter, residual: norm, history });
        }
        let rhs: Vec<f64> = asm.residual.iter().map(|v| -v).collect();
        let dx = thomas_solve(&asm.lower, &asm.diag, &asm.upper, &rhs)?;
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + lambda * d).collect();
            if let Ok(t) = eval(&trial) {
                let tn = t.norm();
                if tn <= cfg.tol || tn < (1.0 - 1e-4 * lambda) * norm {
                    x = trial;
                    asm = t;
                    norm = tn;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < cfg.min_damping {
                return Err(Error::ConeExit { iteration: iter, residual: norm });
            }
        }
        damping.push(lambda);
        history.push(norm);
        iter += 1;
    }
    Ok(NewtonOutcome { x, asm, history, damping })
}

fn finish(r: Vec<f64>, out: NewtonOutcome, w: Vec<f64>) -> Solution {
    Solution {
        r,
        w,
        residual: out.asm.residual,
        iterations: out.damping.len(),
        terminal_order: terminal_order(&out.history),
        history: out.history,
        damping: out.damping,
    }
}

fn admissible(problem: &RadialProblem, r: &[f64], w: &[f64]) -> bool {
    problem.domain == Domain::SphereConstant || operator_rows(problem, r, w, guard_for(problem, r[1] - r[0])).is_ok()
}

/// Default starting point: log-linear interpolation of the boundary data,
/// or the bubble `e^w = m + c r²` through the data when the former leaves
/// the cone.
pub fn initial_guess(problem: &RadialProblem, r: &[f64]) -> Result<Vec<f64>> {
    match problem.domain {
        Domain::SphereConstant => Ok(vec![0.0]),
        Domain::Ball { r1, w1 } => {
            let c = w1.exp() / (2.0 * r1 * r1);
            let m = 0.5 * w1.exp();
            let guess: Vec<f64> = r.iter().map(|x| (m + c * x * x).ln()).collect();
            if matches!(problem.rhs, Rhs::Zero) {
                return Ok(vec![w1; r.len()]);
            }
            Ok(guess)
        }
        Domain::Annulus { r0, r1, w0, w1 } => {
            let slope = (w1 - w0) / (r1 / r0).ln();
            let loglin: Vec<f64> = r.iter().map(|x| w0 + slope * (x / r0).ln()).collect();
            if admissible(problem, r, &loglin) {
                return Ok(loglin);
            }
            let (u0, u1) = (w0.exp(), w1.exp());
            let c = (u1 - u0) / (r1 * r1 - r0 * r0);
            let m = u0 - c * r0 * r0;
            if c > 0.0 && m > 0.0 {
                let bubble: Vec<f64> = r.iter().map(|x| (m + c * x * x).ln()).collect();
                if admissible(problem, r, &bubble) {
                    return Ok(bubble);
                }
            }
            domain("no admissible default initial guess for this boundary data; supply one")
        }
    }
}

fn check_init(problem: &RadialProblem, r: &[f64], init: Option<&[f64]>) -> Result<Vec<f64>> {
    match init {
        Some(x) if x.len() != r.len() => domain(format!("initial guess has {} values, grid has {}", x.len(), r.len())),
        Some(x) => Ok(x.to_vec()),
        None => initial_guess(problem, r),
    }
}

/// Damped Newton in the `w`-gauge.
pub fn newton_solve(problem: &RadialProblem, cfg: &SolverConfig, init: Option<&[f64]>) -> Result<Solution> {
    problem.validate()?;
    cfg.validate()?;
    if problem.domain == Domain::SphereConstant && problem.exponent_a() == 0.0 {
        return Err(Error::Unsupported("p = k is an eigenvalue problem; use solve_eigenvalue".into()));
    }
    let r = grid(problem, cfg.n_grid);
    let x0 = check_init(problem, &r, init)?;
    let out = damped_newton(x0, cfg, |w| assemble(problem, &r, w))?;
    let w = out.x.clone();
    Ok(finish(r, out, w))
}

/// Newton on `v` for `σ_k(λ(V)) = f v^p` with `λ(V) = ((n-2)/2) v λ(W)`,
/// using the same radial stencil on `w = -2 log v/(n-2)`. Requires the
/// `power_v` form on a radial domain.
pub fn solve_v_gauge(problem: &RadialProblem, cfg: &SolverConfig, init_v: Option<&[f64]>) -> Result<Solution> {
    problem.validate()?;
    cfg.validate()?;
    let f = match (&problem.rhs, problem.domain) {
        (Rhs::PowerV { f }, Domain::Annulus { .. } | Domain::Ball { .. }) => f.clone(),
        _ => return Err(Error::Unsupported("v-gauge solve needs the power_v form on a radial domain".into())),
    };
    let beta = problem.beta();
    let (k, p) = (problem.cone.k() as i32, problem.p);
    let bk = beta.powi(k);
    let r = grid(problem, cfg.n_grid);
    let m = r.len();
    let v0 = match init_v {
        Some(v) => check_init(problem, &r, Some(v))?,
        None => initial_guess(problem, &r)?.iter().map(|w| (-beta * w).exp()).collect(),
    };
    let to_w = |v: &[f64]| -> Result<Vec<f64>> {
        if v.iter().any(|x| !(*x > 0.0)) {
            return domain("v must stay positive");
        }
        Ok(v.iter().map(|x| -x.ln() / beta).collect())
    };
    let eval = |v: &[f64]| -> Result<Assembly> {
        let w = to_w(v)?;
        let op = operator_rows(problem, &r, &w, Guard::Strict)?;
        let dw: Vec<f64> = v.iter().map(|x| -1.0 / (beta * x)).collect();
        let mut asm = Assembly::zeros(m);
        for i in 0..m {
            if is_boundary(problem, m, i) {
                asm.residual[i] = v[i] - (-beta * (w[i] - op.residual[i])).exp();
                asm.diag[i] = 1.0;
                continue;
            }
            let g = op.residual[i];
            let fi = f.eval(r[i]);
            let vk = bk * v[i].powi(k);
            asm.residual[i] = vk * g - fi * v[i].powf(p);
            asm.diag[i] = vk * op.diag[i] * dw[i] + k as f64 * bk * v[i].powi(k - 1) * g - p * fi * v[i].powf(p - 1.0);
            if i > 0 {
                asm.lower[i] = vk * op.lower[i] * dw[i - 1];
            }
            if i + 1 < m {
                asm.upper[i] = vk * op.upper[i] * dw[i + 1];
            }
        }
        Ok(asm)
    };
    let out = damped_newton(v0, cfg, eval)?;
    let w = to_w(&out.x)?;
    Ok(finish(r, out, w))
}

/// Subcritical solve with the constant-shift bracket `w_s - c ≤ w ≤ w_s + c`
/// around an admissible seed `w_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubcriticalSolution {
    pub solution: Solution,
    pub seed: Vec<f64>,
    pub shift: f64,
    /// Smallest distance of the solution to either bracket (negative if outside).
    pub bracket_margin: f64,
    pub bracketed: bool,
}

/// `p < k`: `σ_k(λ(W)) = f̃ e^{a w}` with `a > 0`. The seed (default initial
/// guess) shifted by `±c` gives super- and sub-solutions; the Newton limit is
/// checked to lie between them.
pub fn solve_subcritical(
    problem: &RadialProblem,
    cfg: &SolverConfig,
    seed: Option<&[f64]>,
) -> Result<SubcriticalSolution> {
    problem.validate()?;
    let a = problem.exponent_a();
    if !(a > 0.0) || matches!(problem.rhs, Rhs::Zero) {
        return Err(Error::Unsupported(format!("subcritical solve needs p < k, got p = {}", problem.p)));
    }
    let r = grid(problem, cfg.n_grid);
    let ws = check_init(problem, &r, seed)?;
    let m = r.len();
    let sigma: Vec<f64> = if problem.domain == Domain::SphereConstant {
        vec![sphere_w_sigma(problem.cone)]
    } else {
        operator_rows(problem, &r, &ws, Guard::Strict)?.residual
    };
    let mut shift = 0.0f64;
    for i in 0..m {
        if problem.domain != Domain::SphereConstant && is_boundary(problem, m, i) {
            continue;
        }
        let target = (sigma[i].ln() - problem.w_coefficient(r[i]).ln()) / a;
        shift = shift.max((target - ws[i]).abs());
    }
    let solution = newton_solve(problem, cfg, Some(&ws))?;
    let bracket_margin =
        solution.w.iter().zip(&ws).map(|(w, s)| (s + shift - w).min(w - (s - shift))).fold(f64::INFINITY, f64::min);
    let bracketed = bracket_margin >= -1e3 * cfg.tol.max(f64::EPSILON);
    Ok(SubcriticalSolution { solution, seed: ws, shift, bracket_margin, bracketed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::Coefficient;
    use crate::symfunc::ConeParams;

    #[test]
    fn thomas_matches_dense() {
        let lower = [0.0, 1.0, -2.0, 0.5];
        let diag = [4.0, 5.0, 6.0, 3.0];
        let upper = [1.0, 2.0, 1.0, 0.0];
        let x = [1.0, -2.0, 3.0, 0.25];
        let rhs: Vec<f64> = (0..4)
            .map(|i| {
                diag[i] * x[i]
                    + if i > 0 { lower[i] * x[i - 1] } else { 0.0 }
                    + if i < 3 { upper[i] * x[i + 1] } else { 0.0 }
            })
            .collect();
        let got = thomas_solve(&lower, &diag, &upper, &rhs).unwrap();
        for (g, e) in got.iter().zip(x) {
            assert!((g - e).abs() < 1e-14);
        }
        assert!(thomas_solve(&[0.0, 1.0], &[0.0, 1.0], &[1.0, 0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn order_estimate() {
        assert!((terminal_order(&[1e-1, 1e-2, 1e-4, 1e-8, 1e-17]).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(terminal_order(&[1.0]), None);
    }

    fn annulus(rhs: Rhs, p: f64) -> RadialProblem {
        let cone = ConeParams::new(3, 2).unwrap();
        let w = |r: f64| 0.05 * r.exp();
        RadialProblem::new(cone, Domain::Annulus { r0: 0.5, r1: 2.0, w0: w(0.5), w1: w(2.0) }, rhs, p).unwrap()
    }

    #[test]
    fn jacobian_matches_differences() {
        let prob = annulus(Rhs::ExpW { f: Coefficient::Constant(0.2) }, 0.0);
        let r = grid(&prob, 20);
        let w = initial_guess(&prob, &r).unwrap();
        let asm = assemble(&prob, &r, &w).unwrap();
        let eps = 1e-6;
        for j in 1..r.len() - 1 {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[j] += eps;
            wm[j] -= eps;
            let fp = assemble(&prob, &r, &wp).unwrap().residual;
            let fm = assemble(&prob, &r, &wm).unwrap().residual;
            for i in j - 1..=j + 1 {
                let fd = (fp[i] - fm[i]) / (2.0 * eps);
                let an = match i as isize - j as isize {
                    -1 => asm.upper[i],
                    0 => asm.diag[i],
                    _ => asm.lower[i],
                };
                assert!((fd - an).abs() < 1e-6 * (1.0 + an.abs()), "row {i} col {j}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn inadmissible_start_is_reported() {
        let prob = annulus(Rhs::ExpW { f: Coefficient::Constant(1.0) }, 0.0);
        let r = grid(&prob, 16);
        let w: Vec<f64> = r.iter().map(|x| -x * x).collect();
        assert!(matches!(assemble(&prob, &r, &w), Err(Error::Admissibility { .. })));
    }

    #[test]
    fn sphere_constant_closed_form() {
        let cone = ConeParams::new(3, 2).unwrap();
        let prob = RadialProblem::new(cone, Domain::SphereConstant, Rhs::PowerV { f: Coefficient::Constant(1.0) }, 0.0)
            .unwrap();
        let sol = newton_solve(&prob, &SolverConfig::default(), None).unwrap();
        assert!(sol.iterations <= 5);
        assert!((sol.w[0] - (3.0f64 / 16.0).ln()).abs() < 1e-12);
        let sub = solve_subcritical(&prob, &SolverConfig::default(), Some(&[2.0])).unwrap();
        assert!(sub.bracketed);
    }
}
