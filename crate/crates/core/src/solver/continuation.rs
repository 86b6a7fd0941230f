use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// `δ_t`: `δ₀` for `t ≤ 1`, `1` for `t ≥ 2`, quintic smoothstep between.
pub fn delta_schedule(delta0: f64, t: f64) -> f64 {
    if t <= 1.0 {
        delta0
    } else if t >= 2.0 {
        1.0
    } else {
        let x = t - 1.0;
        delta0 + (1.0 - delta0) * x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
    }
}

pub fn delta_schedule_derivative(delta0: f64, t: f64) -> f64 {
    if t <= 1.0 || t >= 2.0 {
        0.0
    } else {
        let x = t - 1.0;
        (1.0 - delta0) * 30.0 * x * x * (x - 1.0) * (x - 1.0)
    }
}

/// A parametrised system `G(x, t) = 0`.
pub trait ContinuationSystem {
    fn dim(&self) -> usize;
    fn residual(&self, x: &[f64], t: f64) -> Result<Vec<f64>>;
    /// `(∂G/∂x, ∂G/∂t)`.
    fn jacobian(&self, x: &[f64], t: f64) -> Result<(DMatrix<f64>, DVector<f64>)>;
    /// `δ_t` reported in branch output.
    fn delta(&self, _t: f64) -> f64 {
        1.0
    }
    /// Scalar summary of a state (the first component by default).
    fn probe(&self, x: &[f64]) -> f64 {
        x[0]
    }
    /// Whether a state is meaningful; continuation stops when it is not.
    fn in_domain(&self, _x: &[f64]) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContinuationConfig {
    pub delta0: f64,
    /// Initial step length.
    pub step: f64,
    /// Pseudo-arclength when true, natural parameter stepping in `t` otherwise.
    pub arclength: bool,
    pub min_step: f64,
    pub max_step: f64,
    pub max_steps: usize,
    pub t_start: f64,
    pub t_max: f64,
    /// Stop once any component exceeds this in magnitude.
    pub x_max: f64,
    pub corrector_tol: f64,
    pub corrector_max_iter: usize,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self {
            delta0: 1.0,
            step: 1e-2,
            arclength: true,
            min_step: 1e-12,
            max_step: 0.25,
            max_steps: 20_000,
            t_start: 1e-3,
            t_max: 2.5,
            x_max: 1e4,
            corrector_tol: 1e-13,
            corrector_max_iter: 12,
        }
    }
}

impl ContinuationConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.step, self.min_step, self.max_step, self.t_start, self.t_max, self.x_max, self.corrector_tol];
        if pos.iter().any(|v| !(*v > 0.0 && v.is_finite())) || self.max_steps == 0 || self.corrector_max_iter == 0 {
            return Err(Error::Config("continuation steps, limits and tolerances must be positive".into()));
        }
        if !(self.delta0 > 0.0 && self.delta0 <= 1.0) {
            return Err(Error::Config(format!("delta0 must lie in (0, 1], got {}", self.delta0)));
        }
        if self.min_step > self.max_step || self.t_start >= self.t_max {
            return Err(Error::Config("need min_step <= max_step and t_start < t_max".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub t: f64,
    pub delta_t: f64,
    pub x: Vec<f64>,
    pub probe: f64,
    pub newton_iters: usize,
    pub fold_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMarker {
    pub t: f64,
    pub x: Vec<f64>,
    pub probe: f64,
    /// Index of the fold sample in [`Branch::points`].
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    BelowTMin,
    AboveTMax,
    StateBound,
    LeftDomain,
    MaxSteps,
    StepUnderflow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    pub folds: Vec<FoldMarker>,
    pub termination: Termination,
}

impl Branch {
    /// CSV with columns `t,delta_t,v_at_probe,newton_iters,fold_flag`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(out);
        wr.write_record(["t", "delta_t", "v_at_probe", "newton_iters", "fold_flag"])?;
        for p in &self.points {
            wr.write_record([
                format!("{:.16e}", p.t),
                format!("{:.16e}", p.delta_t),
                format!("{:.16e}", p.probe),
                p.newton_iters.to_string(),
                (p.fold_flag as u8).to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Every solution at parameter `t` found along the branch, each refined
    /// by Newton at fixed `t`.
    pub fn solutions_at<S: ContinuationSystem + ?Sized>(&self, system: &S, t: f64) -> Result<Vec<Vec<f64>>> {
        let mut found: Vec<Vec<f64>> = Vec::new();
        for pair in self.points.windows(2) {
            let (p, q) = (&pair[0], &pair[1]);
            if (p.t - t) * (q.t - t) > 0.0 || p.t == q.t {
                continue;
            }
            let s = (t - p.t) / (q.t - p.t);
            let guess: Vec<f64> = p.x.iter().zip(&q.x).map(|(a, b)| a + s * (b - a)).collect();
            let Ok(x) = newton_fixed_t(system, guess, t, 1e-15, 40) else { continue };
            let dup = found.iter().any(|y| y.iter().zip(&x).all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + a.abs())));
            if !dup {
                found.push(x);
            }
        }
        Ok(found)
    }
}

const MIN_TURN_COS: f64 = 0.866;

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Newton on `G(·, t) = 0`; returns the solution once the update falls
/// below `tol` relative to the state.
pub fn newton_fixed_t<S: ContinuationSystem + ?Sized>(
    system: &S,
    mut x: Vec<f64>,
    t: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    for _ in 0..max_iter {
        let g = system.residual(&x, t)?;
        let (gx, _) = system.jacobian(&x, t)?;
        let dx = gx
            .lu()
            .solve(&DVector::from_vec(g.iter().map(|v| -v).collect()))
            .ok_or_else(|| Error::Domain("singular jacobian at fixed t".into()))?;
        for (a, d) in x.iter_mut().zip(dx.iter()) {
            *a += d;
        }
        if norm_inf(dx.as_slice()) <= tol * (1.0 + norm_inf(&x)) {
            return Ok(x);
        }
    }
    let g = system.residual(&x, t)?;
    Err(Error::NonConvergence { iterations: max_iter, residual: norm_inf(&g), history: vec![] })
}

struct Arclength<'a, S: ?Sized> {
    system: &'a S,
    cfg: &'a ContinuationConfig,
    d: usize,
}

impl<'a, S: ContinuationSystem + ?Sized> Arclength<'a, S> {
    fn bordered(&self, z: &[f64], tau: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.d;
        let (gx, gt) = self.system.jacobian(&z[..d], z[d])?;
        let mut m = DMatrix::zeros(d + 1, d + 1);
        m.view_mut((0, 0), (d, d)).copy_from(&gx);
        m.view_mut((0, d), (d, 1)).copy_from(&gt);
        for j in 0..=d {
            m[(d, j)] = tau[j];
        }
        Ok(m)
    }

    /// Unit tangent at `z` oriented along `prev`.
    fn tangent(&self, z: &[f64], prev: &[f64]) -> Result<Vec<f64>> {
        let d = self.d;
        let mut rhs = DVector::zeros(d + 1);
        rhs[d] = 1.0;
        let sol =
            self.bordered(z, prev)?.lu().solve(&rhs).ok_or_else(|| Error::Domain("singular bordered system".into()))?;
        let nrm = sol.norm();
        Ok(sol.iter().map(|v| v / nrm).collect())
    }

    /// Keller corrector on `G = 0`, `τ·(y - z) = s`.
    fn correct(&self, z: &[f64], tau: &[f64], s: f64) -> Result<(Vec<f64>, usize)> {
        let d = self.d;
        let mut y: Vec<f64> = z.iter().zip(tau).map(|(a, b)| a + s * b).collect();
        for it in 1..=self.cfg.corrector_max_iter {
            let g = self.system.residual(&y[..d], y[d])?;
            let mut rhs = DVector::zeros(d + 1);
            for i in 0..d {
                rhs[i] = -g[i];
            }
            rhs[d] = s - tau.iter().zip(y.iter().zip(z)).map(|(t, (a, b))| t * (a - b)).sum::<f64>();
            let dy = self
                .bordered(&y, tau)?
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Domain("singular bordered system".into()))?;
            for (a, b) in y.iter_mut().zip(dy.iter()) {
                *a += b;
            }
            if y.iter().any(|v| !v.is_finite()) {
                return domain("corrector diverged");
            }
            if norm_inf(dy.as_slice()) <= self.cfg.corrector_tol * (1.0 + norm_inf(&y)) {
                return Ok((y, it));
            }
        }
        domain("corrector did not converge")
    }

    /// Bisection on the step length for the zero of the tangent's
    /// `t`-component between `z` and `z + ds τ`.
    fn locate_fold(&self, z: &[f64], tau: &[f64], ds: f64) -> Result<(Vec<f64>, usize)> {
        let d = self.d;
        let sign0 = tau[d].signum();
        let (mut lo, mut hi) = (0.0, ds);
        let mut best = (z.to_vec(), 0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let (y, it) = self.correct(z, tau, mid)?;
            let tn = self.tangent(&y, tau)?;
            if tn[d].signum() == sign0 {
                lo = mid;
            } else {
                hi = mid;
            }
            best = (y, it);
            if hi - lo <= 1e-15 * ds.abs().max(1e-300) {
                break;
            }
        }
        Ok(best)
    }
}

fn point<S: ContinuationSystem + ?Sized>(system: &S, z: &[f64], iters: usize, fold: bool) -> BranchPoint {
    let d = z.len() - 1;
    BranchPoint {
        t: z[d],
        delta_t: system.delta(z[d]),
        x: z[..d].to_vec(),
        probe: system.probe(&z[..d]),
        newton_iters: iters,
        fold_flag: fold,
    }
}

/// Traces the solution curve through `(x0, t0)`, initially moving towards
/// increasing `t` when `forward` is true. Folds are detected by a sign change
/// of the tangent's `t`-component and located by bisection.
pub fn continue_branch<S: ContinuationSystem + ?Sized>(
    system: &S,
    x0: &[f64],
    t0: f64,
    forward: bool,
    cfg: &ContinuationConfig,
) -> Result<Branch> {
    cfg.validate()?;
    let d = system.dim();
    if x0.len() != d {
        return domain("initial state has the wrong dimension");
    }
    let x0 = newton_fixed_t(system, x0.to_vec(), t0, 1e-15, 40)?;
    let mut points = vec![point(system, &[x0.clone(), vec![t0]].concat(), 0, false)];
    let mut folds = Vec::new();
    let t_lo = 0.5 * cfg.t_start.min(t0);
    let out_of_range = |z: &[f64]| -> Option<Termination> {
        if z[d] < t_lo {
            Some(Termination::BelowTMin)
        } else if z[d] > cfg.t_max {
            Some(Termination::AboveTMax)
        } else if norm_inf(&z[..d]) > cfg.x_max {
            Some(Termination::StateBound)
        } else if !system.in_domain(&z[..d]) {
            Some(Termination::LeftDomain)
        } else {
            None
        }
    };

    if !cfg.arclength {
        let dir = if forward { 1.0 } else { -1.0 };
        let mut x = x0;
        let mut t = t0;
        let mut ds = cfg.step;
        for _ in 0..cfg.max_steps {
            let tn = t + dir * ds;
            match newton_fixed_t(system, x.clone(), tn, cfg.corrector_tol, cfg.corrector_max_iter) {
                Ok(xn) => {
                    x = xn;
                    t = tn;
                    let z = [x.clone(), vec![t]].concat();
                    points.push(point(system, &z, 0, false));
                    if let Some(term) = out_of_range(&z) {
                        return Ok(Branch { points, folds, termination: term });
                    }
                    ds = (ds * 1.5).min(cfg.max_step);
                }
                Err(_) => {
                    ds *= 0.5;
                    if ds < cfg.min_step {
                        return Ok(Branch { points, folds, termination: Termination::StepUnderflow });
                    }
                }
            }
        }
        return Ok(Branch { points, folds, termination: Termination::MaxSteps });
    }

    let arc = Arclength { system, cfg, d };
    let mut z: Vec<f64> = [x0, vec![t0]].concat();
    let mut seed = vec![0.0; d + 1];
    seed[d] = if forward { 1.0 } else { -1.0 };
    let mut tau = arc.tangent(&z, &seed)?;
    let mut ds = cfg.step;
    for _ in 0..cfg.max_steps {
        // reject steps that turn too sharply or drift far from the predictor,
        // which guards against jumping between sheets
        let accepted = arc.correct(&z, &tau, ds).ok().and_then(|(zn, iters)| {
            let tn = arc.tangent(&zn, &tau).ok()?;
            let turn: f64 = tn.iter().zip(&tau).map(|(a, b)| a * b).sum();
            let drift =
                zn.iter().zip(z.iter().zip(&tau)).map(|(y, (a, b))| (y - a - ds * b).powi(2)).sum::<f64>().sqrt();
            (turn > MIN_TURN_COS && drift < 0.5 * ds).then_some((zn, iters, tn))
        });
        let Some((zn, iters, tn)) = accepted else {
            ds *= 0.5;
            if ds < cfg.min_step {
                return Ok(Branch { points, folds, termination: Termination::StepUnderflow });
            }
            continue;
        };
        if tn[d] * tau[d] < 0.0 {
            let (zf, it) = arc.locate_fold(&z, &tau, ds)?;
            points.push(point(system, &zf, it, true));
            folds.push(FoldMarker {
                t: zf[d],
                x: zf[..d].to_vec(),
                probe: system.probe(&zf[..d]),
                index: points.len() - 1,
            });
        }
        points.push(point(system, &zn, iters, false));
        z = zn;
        tau = tn;
        if let Some(term) = out_of_range(&z) {
            return Ok(Branch { points, folds, termination: term });
        }
        if iters <= 3 {
            ds = (ds * 1.5).min(cfg.max_step);
        } else if iters >= 6 {
            ds *= 0.7;
        }
    }
    Ok(Branch { points, folds, termination: Termination::MaxSteps })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `x² + t² = 1` has folds at `t = ±1`.
    struct Circle;

    impl ContinuationSystem for Circle {
        fn dim(&self) -> usize {
            1
        }
        fn residual(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
            Ok(vec![x[0] * x[0] + t * t - 1.0])
        }
        fn jacobian(&self, x: &[f64], t: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
            Ok((DMatrix::from_element(1, 1, 2.0 * x[0]), DVector::from_element(1, 2.0 * t)))
        }
    }

    #[test]
    fn circle_fold() {
        let cfg = ContinuationConfig { t_start: 0.1, t_max: 1.5, step: 0.05, max_step: 0.05, ..Default::default() };
        let b = continue_branch(&Circle, &[0.9], 0.3, true, &cfg).unwrap();
        assert_eq!(b.folds.len(), 1);
        assert!((b.folds[0].t - 1.0).abs() < 1e-10);
        assert_eq!(b.termination, Termination::BelowTMin);
        let sols = b.solutions_at(&Circle, 0.6).unwrap();
        assert_eq!(sols.len(), 2);
        for s in sols {
            assert!((s[0].abs() - 0.8).abs() < 1e-14);
        }
    }

    #[test]
    fn natural_stepping_stalls_at_fold() {
        let cfg =
            ContinuationConfig { arclength: false, t_start: 0.1, step: 0.05, max_step: 0.05, ..Default::default() };
        let b = continue_branch(&Circle, &[0.9], 0.3, true, &cfg).unwrap();
        assert_eq!(b.termination, Termination::StepUnderflow);
        assert!(b.points.last().unwrap().t > 0.99);
    }

    #[test]
    fn schedule_is_smooth() {
        assert_eq!(delta_schedule(0.1, 0.5), 0.1);
        assert_eq!(delta_schedule(0.1, 3.0), 1.0);
        assert!((delta_schedule(0.1, 1.5) - 0.55).abs() < 1e-15);
        let h = 1e-6;
        let fd = (delta_schedule(0.1, 1.3 + h) - delta_schedule(0.1, 1.3 - h)) / (2.0 * h);
        assert!((fd - delta_schedule_derivative(0.1, 1.3)).abs() < 1e-8);
    }
}
