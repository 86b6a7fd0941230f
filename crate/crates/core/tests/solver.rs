use proptest::prelude::*;
use sigmak::solver::*;
use sigmak::ConeParams;

fn cone32() -> ConeParams {
    ConeParams::new(3, 2).unwrap()
}

/// `σ₂` for n = 3 from the radial eigenvalues `(a, b, b)`: `b² + 2ab`.
fn sigma2_n3(d1: f64, d2: f64, r: f64) -> f64 {
    let a = d2 + 0.5 * d1 * d1;
    let b = if r == 0.0 { d2 } else { d1 / r - 0.5 * d1 * d1 };
    b * b + 2.0 * a * b
}

fn manufactured_annulus(n_grid: usize) -> (Solution, f64) {
    let ws = |r: f64| 0.05 * r.exp();
    // p = 0 gives a = 1 in f e^{a w}
    let f = Coefficient::function(move |r: f64| sigma2_n3(ws(r), ws(r), r) * (-ws(r)).exp());
    let prob = RadialProblem::new(
        cone32(),
        Domain::Annulus { r0: 0.5, r1: 2.0, w0: ws(0.5), w1: ws(2.0) },
        Rhs::ExpW { f },
        0.0,
    )
    .unwrap();
    let sol = newton_solve(&prob, &SolverConfig::with_grid(n_grid), None).unwrap();
    let err = sol.r.iter().zip(&sol.w).map(|(r, w)| (w - ws(*r)).abs()).fold(0.0, f64::max);
    (sol, err)
}

#[test]
fn manufactured_annulus_is_second_order() {
    let runs: Vec<(Solution, f64)> = [64, 128, 256].into_iter().map(manufactured_annulus).collect();
    for (sol, _) in &runs {
        assert!(sol.residual_norm() <= 1e-10);
        let q = sol.terminal_order.unwrap();
        assert!(q > 1.6, "terminal order {q}, history {:?}", sol.history);
    }
    for w in runs.windows(2) {
        let order = (w[0].1 / w[1].1).log2();
        assert!((order - 2.0).abs() < 0.3, "observed order {order}");
    }
}

#[test]
fn manufactured_ball_is_second_order() {
    let ws = |r: f64| 0.1 * r.cosh();
    let f = Coefficient::function(move |r: f64| sigma2_n3(0.1 * r.sinh(), 0.1 * r.cosh(), r) * (-ws(r)).exp());
    let prob = RadialProblem::new(cone32(), Domain::Ball { r1: 1.0, w1: ws(1.0) }, Rhs::ExpW { f }, 0.0).unwrap();
    let errs: Vec<f64> = [32, 64, 128]
        .into_iter()
        .map(|n| {
            let sol = newton_solve(&prob, &SolverConfig::with_grid(n), None).unwrap();
            sol.r.iter().zip(&sol.w).map(|(r, w)| (w - ws(*r)).abs()).fold(0.0, f64::max)
        })
        .collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((order - 2.0).abs() < 0.3, "observed order {order}");
    }
}

#[test]
fn zero_rhs_recovers_fundamental_solution() {
    let prob = RadialProblem::new(
        cone32(),
        Domain::Annulus { r0: 0.5, r1: 2.0, w0: 2.0 * 0.5f64.ln(), w1: 2.0 * 2.0f64.ln() },
        Rhs::Zero,
        0.0,
    )
    .unwrap();
    for n in [32, 64] {
        let h = 1.5 / n as f64;
        let sol = newton_solve(&prob, &SolverConfig::with_grid(n), None).unwrap();
        let err = sol.r.iter().zip(&sol.w).map(|(r, w)| (w - 2.0 * r.ln()).abs()).fold(0.0, f64::max);
        assert!(err < 10.0 * h * h, "N = {n}: error {err}");
    }
}

/// `σ₂(λ(V)) = f v^p` with `f` manufactured so that `w* = 0.05 e^r` solves it.
fn power_v_annulus(p: f64) -> RadialProblem {
    let ws = |r: f64| 0.05 * r.exp();
    // v = e^{-w/2}, σ₂(λ(V)) = v²σ₂(λ(W))/4
    let f = Coefficient::function(move |r: f64| {
        let v = (-0.5 * ws(r)).exp();
        0.25 * v.powf(2.0 - p) * sigma2_n3(ws(r), ws(r), r)
    });
    RadialProblem::new(cone32(), Domain::Annulus { r0: 0.5, r1: 2.0, w0: ws(0.5), w1: ws(2.0) }, Rhs::PowerV { f }, p)
        .unwrap()
}

#[test]
fn w_and_v_gauge_solves_agree() {
    let prob = power_v_annulus(0.5);
    let cfg = SolverConfig::with_grid(96);
    let sw = newton_solve(&prob, &cfg, None).unwrap();
    let sv = solve_v_gauge(&prob, &cfg, None).unwrap();
    for (a, b) in sw.w.iter().zip(&sv.w) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn distant_seeds_converge_to_the_same_solution() {
    let prob = power_v_annulus(0.0);
    let cfg = SolverConfig::with_grid(64);
    let (r0, r1) = (0.5f64, 2.0f64);
    let Domain::Annulus { w0, w1, .. } = prob.domain else { unreachable!() };
    // e^w = α + β r⁴ through the same data; admissible while α > β r⁴
    let beta = (w1.exp() - w0.exp()) / (r1.powi(4) - r0.powi(4));
    let alpha = w0.exp() - beta * r0.powi(4);
    let h = (r1 - r0) / 64.0;
    let seed: Vec<f64> = (0..=64).map(|i| (alpha + beta * (r0 + i as f64 * h).powi(4)).ln()).collect();
    let a = newton_solve(&prob, &cfg, None).unwrap();
    let b = newton_solve(&prob, &cfg, Some(&seed)).unwrap();
    for (x, y) in a.w.iter().zip(&b.w) {
        assert!((x - y).abs() < 1e-8);
    }
}

#[test]
fn subcritical_solution_is_bracketed() {
    let res = solve_subcritical(&power_v_annulus(0.5), &SolverConfig::with_grid(64), None).unwrap();
    assert!(res.bracketed, "margin {}", res.bracket_margin);
    assert!(res.shift > 0.0);
}

#[test]
fn constant_sphere_state_converges_fast() {
    let prob = RadialProblem::new(cone32(), Domain::SphereConstant, Rhs::ExpW { f: Coefficient::Constant(0.75) }, 1.0)
        .unwrap();
    let sol = newton_solve(&prob, &SolverConfig::default(), Some(&[0.3])).unwrap();
    assert!(sol.iterations <= 5);
    assert!(sol.w[0].abs() < 1e-12);
}

fn sphere_problem(n: usize, k: usize, p: f64, f: f64) -> RadialProblem {
    let cone = ConeParams::new(n, k).unwrap();
    RadialProblem::new(cone, Domain::SphereConstant, Rhs::PowerV { f: Coefficient::Constant(f) }, p).unwrap()
}

#[test]
fn eigenvalue_scales_inversely_with_f() {
    let a = solve_eigenvalue(&sphere_problem(3, 2, 2.0, 1.0), &SolverConfig::default()).unwrap();
    let b = solve_eigenvalue(&sphere_problem(3, 2, 2.0, 2.0), &SolverConfig::default()).unwrap();
    assert!((a.theta / b.theta - 2.0).abs() < 1e-10);
    assert!(solve_eigenvalue(&sphere_problem(3, 2, 3.0, 1.0), &SolverConfig::default()).is_err());
}

/// Bisection roots of `A v² = t(1 + v⁴)` (n = 3, k = 2, A = 3/16).
fn model_roots(t: f64) -> (f64, f64) {
    let g = |v: f64| 3.0 / 16.0 * v * v - t * (1.0 + v.powi(4));
    let bisect = |mut lo: f64, mut hi: f64| {
        let s = g(lo).signum();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid).signum() == s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    (bisect(1e-9, 1.0), bisect(1.0, 1e3))
}

#[test]
fn model_fold_and_its_two_solutions() {
    let res = continuation_supercritical(&sphere_problem(3, 2, 4.0, 1.0), &ContinuationConfig::default()).unwrap();
    let t_star = res.fold_t().unwrap();
    assert!((t_star - 3.0 / 32.0).abs() < 1e-8);
    let sols = res.solutions_at(0.9 * 3.0 / 32.0).unwrap();
    let (lo, hi) = model_roots(0.9 * 3.0 / 32.0);
    assert_eq!(sols.len(), 2);
    assert!((sols[0] - lo).abs() < 1e-8 && (sols[1] - hi).abs() < 1e-8);

    // the Jacobian in v changes sign across the fold
    let fold = &res.branch.folds[0];
    let before = &res.branch.points[fold.index - 1];
    let after = &res.branch.points[fold.index + 1];
    let gv = |x: &[f64], t: f64| res.system.jacobian(x, t).unwrap().0[(0, 0)];
    assert!(gv(&before.x, before.t) * gv(&after.x, after.t) < 0.0);

    let mut csv = Vec::new();
    res.branch.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("t,delta_t,v_at_probe,newton_iters,fold_flag"));
    assert_eq!(text.lines().filter(|l| l.ends_with(",1")).count(), 1);
}

#[test]
fn vanishing_delta_selects_the_upper_solution() {
    let limit = (3.0f64 / 16.0).sqrt();
    let mut prev = f64::INFINITY;
    for delta0 in [1e-3, 1e-4, 1e-6] {
        let cfg = ContinuationConfig { delta0, ..Default::default() };
        let res = continuation_supercritical(&sphere_problem(3, 2, 4.0, 1.0), &cfg).unwrap();
        let sols = res.solutions_at(1.0).unwrap();
        let upper = *sols.last().unwrap();
        let gap = (upper - limit).abs();
        assert!(gap < prev);
        prev = gap;
    }
    assert!(prev < 1e-5);
}

#[test]
fn shifted_power_sum_has_a_fold() {
    let cone = cone32();
    let phi = PowerSeries::new(vec![(1.0, 0.0), (1.0, 3.0), (1.0, 5.0)]).unwrap();
    let res = general_rhs_continuation(cone, phi, GrowthClass::FoldPair, &ContinuationConfig::default()).unwrap();
    // oracle: t(v) = A v²/φ(v) is maximal where 2φ = vφ'
    let a = 3.0 / 16.0;
    let crit = |v: f64| 2.0 * (1.0 + v.powi(3) + v.powi(5)) - v * (3.0 * v * v + 5.0 * v.powi(4));
    let (mut lo, mut hi) = (0.1, 2.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if crit(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let v = 0.5 * (lo + hi);
    let t_star = a * v * v / (1.0 + v.powi(3) + v.powi(5));
    assert!((res.fold_t().unwrap() - t_star).abs() < 1e-8);
}

#[test]
fn pure_power_crosses_without_fold() {
    let phi = PowerSeries::new(vec![(1.0, 4.0)]).unwrap();
    let res = general_rhs_continuation(cone32(), phi, GrowthClass::Crossing, &ContinuationConfig::default()).unwrap();
    assert!(res.branch.folds.is_empty());
    let v = res.solutions_at(1.0).unwrap();
    assert!((v[0] - (3.0f64 / 16.0).sqrt()).abs() < 1e-12);
}

#[test]
fn general_rhs_reproduces_model_continuation() {
    let cfg = ContinuationConfig::default();
    let model = continuation_supercritical(&sphere_problem(3, 2, 4.0, 1.0), &cfg).unwrap();
    let phi = PowerSeries::new(vec![(1.0, 0.0), (1.0, 4.0)]).unwrap();
    let general = general_rhs_continuation(cone32(), phi, GrowthClass::FoldPair, &cfg).unwrap();
    assert_eq!(model.branch.points.len(), general.branch.points.len());
    for (a, b) in model.branch.points.iter().zip(&general.branch.points) {
        assert!((a.t - b.t).abs() < 1e-12 && (a.x[0] - b.x[0]).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn newton_limit_is_admissible(f in 0.02f64..0.2, p in -1.0f64..1.5, c in 0.1f64..0.6) {
        let u = |r: f64| 1.0 + c * r * r;
        let prob = RadialProblem::new(
            cone32(),
            Domain::Annulus { r0: 0.5, r1: 2.0, w0: u(0.5).ln(), w1: u(2.0).ln() },
            Rhs::PowerV { f: Coefficient::Constant(f) },
            p,
        ).unwrap();
        if let Ok(sol) = newton_solve(&prob, &SolverConfig::with_grid(48), None) {
            prop_assert!(sol.residual_norm() <= 1e-10);
            prop_assert!(assemble(&prob, &sol.r, &sol.w).is_ok());
        }
    }

    #[test]
    fn eigenvalue_is_inverse_in_f(f in 0.1f64..10.0) {
        let res = solve_eigenvalue(&sphere_problem(4, 3, 3.0, f), &SolverConfig::default()).unwrap();
        prop_assert!((res.theta * f - 0.5).abs() < 1e-10);
    }

    #[test]
    fn fold_matches_closed_form(f in 0.5f64..2.0, delta0 in 0.2f64..1.0) {
        let cfg = ContinuationConfig { delta0, ..Default::default() };
        let res = continuation_supercritical(&sphere_problem(3, 2, 4.0, f), &cfg).unwrap();
        let (t_star, _) = res.system.fold_estimate();
        prop_assert!((res.fold_t().unwrap() - t_star).abs() < 1e-8 * (1.0 + t_star));
    }
}
