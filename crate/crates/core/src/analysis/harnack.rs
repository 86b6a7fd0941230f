use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::RadialSamples;
use crate::error::{domain, Result};
use crate::radial::GridField;
use crate::symfunc::ConeParams;

/// Empirical constant `sup log(χ(x)/χ(y)) / |x-y|^α` and the pair
/// attaining it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackReport {
    pub c_est: f64,
    pub alpha: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub pairs: usize,
}

#[derive(Clone, Copy)]
struct Best {
    value: f64,
    i: usize,
    j: usize,
}

impl Best {
    const NONE: Best = Best { value: f64::NEG_INFINITY, i: usize::MAX, j: usize::MAX };

    // larger value wins; ties go to the lexicographically smallest pair
    fn merge(self, o: Best) -> Best {
        match self.value.total_cmp(&o.value) {
            std::cmp::Ordering::Greater => self,
            std::cmp::Ordering::Less => o,
            std::cmp::Ordering::Equal => {
                if (self.i, self.j) <= (o.i, o.j) {
                    self
                } else {
                    o
                }
            }
        }
    }
}

fn check_positive(values: &[f64]) -> Result<()> {
    match values.iter().find(|&&c| !(c > 0.0 && c.is_finite())) {
        Some(c) => domain(format!("χ must be positive and finite, got {c}")),
        None => Ok(()),
    }
}

/// Pairs of points on a common ray (the closest placement for given radii).
/// `origin` supplies `χ(0)` when the origin belongs to the domain.
pub fn harnack_ratio_radial(chi: &RadialSamples, cone: ConeParams, origin: Option<f64>) -> Result<HarnackReport> {
    if chi.r.len() != chi.values.len() || chi.r.is_empty() {
        return domain("radial samples need matching, non-empty columns");
    }
    let alpha = cone.alpha();
    if !(alpha > 0.0) {
        return domain("Harnack exponent 2 - n/k must be positive");
    }
    let mut r = chi.r.clone();
    let mut values = chi.values.clone();
    if let Some(c0) = origin {
        r.insert(0, 0.0);
        values.insert(0, c0);
    }
    check_positive(&values)?;
    let m = r.len();
    let best = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut b = Best::NONE;
            for j in 0..m {
                let d = (r[i] - r[j]).abs();
                if d > 0.0 {
                    b = b.merge(Best { value: (values[i] / values[j]).ln() / d.powf(alpha), i, j });
                }
            }
            b
        })
        .reduce(|| Best::NONE, Best::merge);
    if best.i == usize::MAX {
        return domain("need at least two distinct radii");
    }
    Ok(HarnackReport { c_est: best.value, alpha, x: vec![r[best.i]], y: vec![r[best.j]], pairs: m * (m - 1) })
}

/// All node pairs farther apart than `min_separation` (default `2h`).
pub fn harnack_ratio_grid(chi: &GridField, cone: ConeParams, min_separation: Option<f64>) -> Result<HarnackReport> {
    let alpha = cone.alpha();
    if !(alpha > 0.0) {
        return domain("Harnack exponent 2 - n/k must be positive");
    }
    check_positive(chi.values())?;
    let vals = chi.values();
    let sep = min_separation.unwrap_or(2.0 * chi.spacing());
    let coords: Vec<Vec<f64>> = (0..chi.len()).map(|i| chi.coord(i)).collect();
    let m = coords.len();
    let (best, pairs) = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut b = Best::NONE;
            let mut count = 0usize;
            for j in 0..m {
                let d = coords[i].iter().zip(&coords[j]).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
                if d > sep {
                    count += 1;
                    b = b.merge(Best { value: (vals[i] / vals[j]).ln() / d.powf(alpha), i, j });
                }
            }
            (b, count)
        })
        .reduce(|| (Best::NONE, 0), |a, b| (a.0.merge(b.0), a.1 + b.1));
    if best.i == usize::MAX {
        return domain("no node pair exceeds the minimum separation");
    }
    Ok(HarnackReport { c_est: best.value, alpha, x: coords[best.i].clone(), y: coords[best.j].clone(), pairs })
}
