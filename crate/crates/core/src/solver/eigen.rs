use serde::{Deserialize, Serialize};

use super::newton::{newton_solve, Solution};
use super::{Domain, RadialProblem, Rhs, SolverConfig};
use crate::error::{Error, Result};

/// Eigenvalue `θ` of `σ_k(λ(V)) = θ f v^k`, with the normalised solution
/// (`inf w = 0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenResult {
    pub theta: f64,
    pub solution: Solution,
    /// `(a, θ_a = e^{a inf w_a})` along the vanishing exponent sequence.
    pub sequence: Vec<(f64, f64)>,
    /// Difference between the last two Richardson-extrapolated `log θ`.
    pub extrapolation_change: f64,
}

/// `p = k`: solves `σ_k(λ(W)) = f̃ e^{a w}` for `a ∈ {2^{-1}, …, 2^{-9}}`,
/// extracts `θ_a = e^{a inf w_a}` and extrapolates `log θ_a` linearly to `a = 0`.
/// Only constant states on the round sphere are supported.
pub fn solve_eigenvalue(problem: &RadialProblem, cfg: &SolverConfig) -> Result<EigenResult> {
    problem.validate()?;
    if problem.domain != Domain::SphereConstant {
        return Err(Error::Unsupported("eigenvalue solve is implemented for constant sphere states".into()));
    }
    let k = problem.cone.k() as f64;
    if problem.p != k {
        return Err(Error::Unsupported(format!("eigenvalue problem needs p = k, got p = {}", problem.p)));
    }
    if matches!(problem.rhs, Rhs::Zero) {
        return Err(Error::Config("eigenvalue problem needs a positive coefficient".into()));
    }
    let beta = problem.beta();
    let mut sequence = Vec::new();
    for j in 1..=9 {
        let a = 0.5f64.powi(j);
        // p chosen so that ½(n-2)(k-p) = a
        let mut shifted = problem.clone();
        shifted.p = k - a / beta;
        let sol = newton_solve(&shifted, cfg, None)?;
        let inf = sol.w.iter().copied().fold(f64::INFINITY, f64::min);
        sequence.push((a, (a * inf).exp()));
    }
    let rich: Vec<f64> = sequence.windows(2).map(|w| 2.0 * w[1].1.ln() - w[0].1.ln()).collect();
    let m = rich.len();
    let extrapolation_change = (rich[m - 1] - rich[m - 2]).abs();
    let theta = rich[m - 1].exp();
    let w = vec![0.0];
    let residual = vec![super::sphere::sphere_w_sigma(problem.cone) - theta * problem.w_coefficient(0.0)];
    let solution =
        Solution { r: vec![0.0], w, residual, iterations: 0, history: vec![], damping: vec![], terminal_order: None };
    Ok(EigenResult { theta, solution, sequence, extrapolation_change })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::Coefficient;
    use crate::symfunc::ConeParams;

    #[test]
    fn round_sphere_eigenvalues() {
        for (n, k, expect) in [(3, 2, 3.0 / 16.0), (4, 3, 0.5)] {
            let cone = ConeParams::new(n, k).unwrap();
            let prob = RadialProblem::new(
                cone,
                Domain::SphereConstant,
                Rhs::PowerV { f: Coefficient::Constant(1.0) },
                k as f64,
            )
            .unwrap();
            let res = solve_eigenvalue(&prob, &SolverConfig::default()).unwrap();
            assert!((res.theta - expect).abs() < 1e-10 * expect);
            assert!(res.solution.residual[0].abs() < 1e-10);
        }
    }
}
