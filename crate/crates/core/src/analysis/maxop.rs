use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{matrix_u, matrix_v, matrix_w, Background, ConformalJet, Gauge};
use crate::error::{domain, Result};
use crate::radial::{ab_reduce, radial_admissible, Admissibility, GridField, RadialProfile};
use crate::symfunc::{in_gamma_k, in_gamma_k_closure, sigma_all, ConeParams, EigenTuple, SymMatrix};

/// Nodes within this many cells of a sign change of `f - g` are skipped.
pub const DEFAULT_KINK_MARGIN: usize = 3;

/// Nodewise cone test over a field or profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeAdmissibility {
    pub checked: usize,
    pub excluded: usize,
    pub failures: Vec<usize>,
    /// Smallest `min_j σ_j(λ/|λ|_∞)` over checked nodes.
    pub min_margin: f64,
    pub passed: bool,
}

impl NodeAdmissibility {
    fn new() -> Self {
        Self { checked: 0, excluded: 0, failures: Vec::new(), min_margin: f64::INFINITY, passed: true }
    }

    fn finish(mut self) -> Self {
        self.passed = self.failures.is_empty();
        self
    }
}

/// Central-difference jet of a grid field at interior node `i`.
fn fd_jet(f: &GridField, i: usize, gauge: Gauge) -> Result<ConformalJet> {
    let d = f.dims();
    let h = f.spacing();
    let idx = f.multi_index(i);
    let v = f.values();
    let at = |shift: &[(usize, isize)]| {
        let mut j = idx.clone();
        for &(axis, s) in shift {
            j[axis] = (j[axis] as isize + s) as usize;
        }
        v[f.flat_index(&j)]
    };
    let c = v[i];
    let grad: Vec<f64> = (0..d).map(|a| (at(&[(a, 1)]) - at(&[(a, -1)])) / (2.0 * h)).collect();
    let mut hess = SymMatrix::zeros(d);
    for a in 0..d {
        hess.set(a, a, (at(&[(a, 1)]) - 2.0 * c + at(&[(a, -1)])) / (h * h));
        for b in a + 1..d {
            let m = (at(&[(a, 1), (b, 1)]) - at(&[(a, 1), (b, -1)]) - at(&[(a, -1), (b, 1)]) + at(&[(a, -1), (b, -1)]))
                / (4.0 * h * h);
            hess.set(a, b, m);
        }
    }
    ConformalJet::new(gauge, c, grad, hess, Background::flat(d))
}

fn gauge_matrix(jet: &ConformalJet) -> Result<SymMatrix> {
    match jet.gauge {
        Gauge::W => matrix_w(jet),
        Gauge::U => matrix_u(jet),
        Gauge::V => matrix_v(jet),
        Gauge::Chi => {
            let w = crate::conformal::convert_gauge(jet, Gauge::W)?;
            matrix_w(&w)
        }
    }
}

/// Normalised cone margin `min_j σ_j(λ/|λ|_∞)`; zero for the zero matrix.
fn cone_margin(eigs: &[f64], k: usize) -> f64 {
    let scale = eigs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let scaled: Vec<f64> = eigs.iter().map(|x| x / scale).collect();
    sigma_all(&scaled, k)[1..=k].iter().copied().fold(f64::INFINITY, f64::min)
}

/// Cone test of the gauge matrix at interior nodes of a flat-background
/// field whose values are in `gauge`. `mask[i] = false` excludes a node.
pub fn grid_admissibility(
    f: &GridField,
    gauge: Gauge,
    cone: ConeParams,
    mode: Admissibility,
    tol: f64,
    mask: Option<&[bool]>,
) -> Result<NodeAdmissibility> {
    if f.dims() != cone.n() {
        return domain(format!("grid dimension {} does not match n = {}", f.dims(), cone.n()));
    }
    let k = cone.k();
    let interior: Vec<usize> =
        (0..f.len()).filter(|&i| f.multi_index(i).iter().zip(f.shape()).all(|(&j, &s)| j >= 1 && j + 1 < s)).collect();
    let results: Vec<Option<(usize, f64, bool)>> = interior
        .par_iter()
        .map(|&i| -> Result<Option<(usize, f64, bool)>> {
            if mask.is_some_and(|m| !m[i]) {
                return Ok(None);
            }
            let jet = fd_jet(f, i, gauge)?;
            let eigs = gauge_matrix(&jet)?.eigenvalues();
            let margin = cone_margin(&eigs, k);
            let scale = eigs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let t = EigenTuple::new(eigs.iter().map(|x| if scale > 0.0 { x / scale } else { 0.0 }).collect())?;
            let ok = match mode {
                Admissibility::Open => scale > 0.0 && in_gamma_k(&t, k, tol),
                Admissibility::Closed => in_gamma_k_closure(&t, k, tol),
            };
            Ok(Some((i, margin, ok)))
        })
        .collect::<Result<_>>()?;
    let mut rep = NodeAdmissibility::new();
    for r in results {
        match r {
            None => rep.excluded += 1,
            Some((i, margin, ok)) => {
                rep.checked += 1;
                rep.min_margin = rep.min_margin.min(margin);
                if !ok {
                    rep.failures.push(i);
                }
            }
        }
    }
    Ok(rep.finish())
}

fn same_geometry(f: &GridField, g: &GridField) -> Result<()> {
    if f.shape() != g.shape() || f.spacing() != g.spacing() || f.origin() != g.origin() {
        return domain("fields live on different grids");
    }
    Ok(())
}

pub fn pointwise_max_grid(f: &GridField, g: &GridField) -> Result<GridField> {
    same_geometry(f, g)?;
    f.with_values(f.values().iter().zip(g.values()).map(|(a, b)| a.max(*b)).collect())
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// `true` at nodes farther than `margin` cells (Chebyshev distance) from
/// any change in the sign of `f - g`.
pub fn kink_mask_grid(f: &GridField, g: &GridField, margin: usize) -> Result<Vec<bool>> {
    same_geometry(f, g)?;
    let signs: Vec<i8> = f.values().iter().zip(g.values()).map(|(a, b)| sign(a - b)).collect();
    let d = f.dims();
    let m = margin as isize;
    let span = (2 * margin + 1).pow(d as u32);
    Ok((0..f.len())
        .into_par_iter()
        .map(|i| {
            let idx = f.multi_index(i);
            let mut j = idx.clone();
            for c in 0..span {
                let mut rem = c;
                let mut inside = true;
                for a in 0..d {
                    let o = (rem % (2 * margin + 1)) as isize - m;
                    rem /= 2 * margin + 1;
                    let t = idx[a] as isize + o;
                    if t < 0 || t >= f.shape()[a] as isize {
                        inside = false;
                        break;
                    }
                    j[a] = t as usize;
                }
                if inside && signs[f.flat_index(&j)] != signs[i] {
                    return false;
                }
            }
            true
        })
        .collect())
}

/// Nodewise maximum of two profiles on the same grid. Analytic
/// derivatives are taken from the larger branch.
pub fn pointwise_max_profile(p: &RadialProfile, q: &RadialProfile) -> Result<RadialProfile> {
    if p.r() != q.r() || p.cone() != q.cone() {
        return domain("profiles must share grid and cone parameters");
    }
    let take_q: Vec<bool> = p.w().iter().zip(q.w()).map(|(a, b)| b > a).collect();
    let pick =
        |a: &[f64], b: &[f64]| -> Vec<f64> { (0..a.len()).map(|i| if take_q[i] { b[i] } else { a[i] }).collect() };
    let w = pick(p.w(), q.w());
    use crate::radial::DerivativeMode::Analytic;
    if p.mode() == Analytic && q.mode() == Analytic {
        RadialProfile::analytic(p.r().to_vec(), w, pick(p.dw(), q.dw()), pick(p.d2w(), q.d2w()), p.cone())
    } else {
        RadialProfile::from_samples(p.r().to_vec(), w, p.cone())
    }
}

pub fn kink_mask_profile(p: &RadialProfile, q: &RadialProfile, margin: usize) -> Vec<bool> {
    let signs: Vec<i8> = p.w().iter().zip(q.w()).map(|(a, b)| sign(a - b)).collect();
    (0..signs.len())
        .map(|i| {
            let lo = i.saturating_sub(margin);
            let hi = (i + margin).min(signs.len() - 1);
            signs[lo..=hi].iter().all(|&s| s == signs[i])
        })
        .collect()
}

/// Radial closed-cone test of `max(p, q)` away from the kink.
pub fn profile_admissibility_outside_kink(
    p: &RadialProfile,
    q: &RadialProfile,
    margin: usize,
    tol: f64,
) -> Result<NodeAdmissibility> {
    let m = pointwise_max_profile(p, q)?;
    let mask = kink_mask_profile(p, q, margin);
    let ab = ab_reduce(&m);
    let ok = radial_admissible(&ab, m.cone(), Admissibility::Closed, tol)?;
    let theta = m.cone().theta();
    let mut rep = NodeAdmissibility::new();
    for i in 0..m.len() {
        if !mask[i] {
            rep.excluded += 1;
            continue;
        }
        rep.checked += 1;
        let s = ab.scale[i];
        if s > 0.0 {
            rep.min_margin = rep.min_margin.min(ab.b[i].min(ab.a[i] + theta * ab.b[i]) / s);
        }
        if !ok[i] {
            rep.failures.push(i);
        }
    }
    Ok(rep.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bubble(x: &[f64], c: &[f64], a: f64, m: f64) -> f64 {
        a * x.iter().zip(c).map(|(p, q)| (p - q).powi(2)).sum::<f64>() + m
    }

    #[test]
    fn bubble_sum_is_admissible_in_u_gauge() {
        let cone = ConeParams::new(3, 2).unwrap();
        let f = GridField::centered(3, 9, 0.1, |x| {
            bubble(x, &[0.1, 0.0, -0.1], 1.0, 0.2) + bubble(x, &[-0.2, 0.1, 0.0], 0.5, 0.1)
        })
        .unwrap();
        let rep = grid_admissibility(&f, Gauge::U, cone, Admissibility::Open, 0.0, None).unwrap();
        assert!(rep.passed && rep.checked == 343);
        // the same values read as w are not admissible: W has a negative trace part
        let neg = f.with_values(f.values().iter().map(|v| -v).collect()).unwrap();
        let rep = grid_admissibility(&neg, Gauge::W, cone, Admissibility::Open, 0.0, None).unwrap();
        assert!(!rep.passed);
    }

    #[test]
    fn max_of_identical_has_no_kink() {
        let f = GridField::centered(2, 7, 0.1, |x| x[0]).unwrap();
        assert!(kink_mask_grid(&f, &f, 3).unwrap().iter().all(|&b| b));
        assert_eq!(pointwise_max_grid(&f, &f).unwrap(), f);
    }

    #[test]
    fn kink_mask_excludes_contact_neighbourhood() {
        let f = GridField::centered(2, 10, 0.1, |x| x[0]).unwrap();
        let g = GridField::centered(2, 10, 0.1, |x| -x[0]).unwrap();
        let mask = kink_mask_grid(&f, &g, 2).unwrap();
        for (i, &m) in mask.iter().enumerate() {
            let col = f.multi_index(i)[0];
            assert_eq!(m, !(3..=6).contains(&col), "node {i}");
        }
    }

    #[test]
    fn max_of_shifted_fundamental_profiles() {
        let cone = ConeParams::new(3, 2).unwrap();
        let r = crate::radial::uniform_grid(0.1, 1.0, 10);
        let mk = |c: f64| {
            RadialProfile::from_fn(r.clone(), cone, move |x| (2.0 * x.ln() + c, 2.0 / x, -2.0 / (x * x))).unwrap()
        };
        let m = pointwise_max_profile(&mk(0.3), &mk(-1.0)).unwrap();
        assert_eq!(m, mk(0.3));
        let rep = profile_admissibility_outside_kink(&mk(0.3), &mk(-1.0), 3, 1e-12).unwrap();
        assert!(rep.passed && rep.excluded == 0);
    }
}
