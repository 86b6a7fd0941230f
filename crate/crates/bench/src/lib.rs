//! Shared fixtures for the benchmarks.

use sigmak::radial::GridField;
use sigmak::solver::{Coefficient, Domain, RadialProblem, Rhs};
use sigmak::symfunc::{ConeParams, SymMatrix};

/// Deterministic eigenvalue tuple of length `n`.
pub fn tuple(n: usize) -> Vec<f64> {
    (0..n).map(|i| 1.0 + 0.37 * i as f64 - 0.11 * (i * i) as f64).collect()
}

/// Symmetric test matrix with a dominant diagonal.
pub fn matrix(n: usize) -> SymMatrix {
    let mut m = SymMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            let v = if i == j { 2.0 + i as f64 } else { 0.3 / (1 + i + j) as f64 };
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    m
}

/// Dirichlet annulus problem whose exact solution is `w = 0.05 eʳ`.
pub fn annulus_problem() -> RadialProblem {
    let ws = |r: f64| 0.05 * r.exp();
    let f = Coefficient::function(move |r: f64| {
        let (d1, d2) = (ws(r), ws(r));
        let a = d2 + 0.5 * d1 * d1;
        let b = d1 / r - 0.5 * d1 * d1;
        (b * b + 2.0 * a * b) * (-ws(r)).exp()
    });
    let cone = ConeParams::new(3, 2).expect("valid cone");
    RadialProblem::new(cone, Domain::Annulus { r0: 0.5, r1: 2.0, w0: ws(0.5), w1: ws(2.0) }, Rhs::ExpW { f }, 0.0)
        .expect("valid problem")
}

/// Scalar homotopy problem with the fold at `t = 3/32`.
pub fn fold_problem() -> RadialProblem {
    let cone = ConeParams::new(3, 2).expect("valid cone");
    RadialProblem::new(cone, Domain::SphereConstant, Rhs::PowerV { f: Coefficient::Constant(1.0) }, 4.0)
        .expect("valid problem")
}

/// `ln(0.3 + |x|²)` on a centred cube.
pub fn bubble_grid(nodes: usize, h: f64) -> GridField {
    GridField::centered(3, nodes, h, |x| (0.3 + x.iter().map(|v| v * v).sum::<f64>()).ln()).expect("valid grid")
}
