use rayon::prelude::*;

use crate::error::{domain, Result};
use crate::radial::GridField;

/// Unnormalised radial bump `(1 - s²)⁴` on `s ∈ [0, 1)`.
pub fn mollifier_weight(s: f64) -> f64 {
    if s >= 1.0 {
        0.0
    } else {
        (1.0 - s * s).powi(4)
    }
}

/// Discrete convolution with the bump of radius `eps`, normalised to unit
/// mass on the grid. The result lives on the box shrunk by the kernel
/// reach on every side.
pub fn mollify(f: &GridField, eps: f64) -> Result<GridField> {
    let h = f.spacing();
    if !(eps >= 2.0 * h * (1.0 - 1e-12)) {
        return domain(format!("mollifier radius {eps} must be at least twice the spacing {h}"));
    }
    if f.values().iter().any(|v| !v.is_finite()) {
        return domain("cannot mollify a field with a singular node");
    }
    let dims = f.dims();
    let reach = (eps / h).floor() as usize;
    if f.shape().iter().any(|&s| s < 2 * reach + 2) {
        return domain(format!("box too small for a kernel reaching {reach} cells"));
    }
    let span = 2 * reach + 1;
    let mut stencil: Vec<(Vec<isize>, f64)> = Vec::new();
    for c in 0..span.pow(dims as u32) {
        let mut rem = c;
        let off: Vec<isize> = (0..dims)
            .map(|_| {
                let o = (rem % span) as isize - reach as isize;
                rem /= span;
                o
            })
            .collect();
        let s = off.iter().map(|&o| (o as f64 * h).powi(2)).sum::<f64>().sqrt() / eps;
        let wt = mollifier_weight(s);
        if wt > 0.0 {
            stencil.push((off, wt));
        }
    }
    let mass: f64 = stencil.iter().map(|s| s.1).sum();
    stencil.iter_mut().for_each(|s| s.1 /= mass);

    let out_shape: Vec<usize> = f.shape().iter().map(|&s| s - 2 * reach).collect();
    let out_origin: Vec<f64> = f.origin().iter().map(|&o| o + reach as f64 * h).collect();
    let count: usize = out_shape.iter().product();
    let values: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rem = i;
            let mut idx = vec![0usize; dims];
            for d in (0..dims).rev() {
                idx[d] = rem % out_shape[d] + reach;
                rem /= out_shape[d];
            }
            let mut acc = 0.0;
            let mut at = vec![0usize; dims];
            for (off, wt) in &stencil {
                for d in 0..dims {
                    at[d] = (idx[d] as isize + off[d]) as usize;
                }
                acc += wt * f.values()[f.flat_index(&at)];
            }
            acc
        })
        .collect();
    GridField::new(out_shape, h, out_origin, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_and_linears_are_fixed() {
        let g = GridField::centered(2, 15, 0.1, |x| 2.0 - 3.0 * x[0] + 0.5 * x[1]).unwrap();
        let m = mollify(&g, 0.25).unwrap();
        assert_eq!(m.shape(), &[11, 11]);
        for i in 0..m.len() {
            let x = m.coord(i);
            assert!((m.values()[i] - (2.0 - 3.0 * x[0] + 0.5 * x[1])).abs() < 1e-12);
        }
        let c = GridField::centered(3, 9, 0.1, |_| 7.0).unwrap();
        assert!(mollify(&c, 0.2).unwrap().values().iter().all(|&v| (v - 7.0).abs() < 1e-13));
    }

    #[test]
    fn rejects_small_radius_or_box() {
        let g = GridField::centered(2, 5, 0.1, |_| 0.0).unwrap();
        assert!(mollify(&g, 0.15).is_err());
        assert!(mollify(&g, 0.3).is_err());
    }
}
