use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Scalar field on a uniform Cartesian box in two or three dimensions.
///
/// Values are stored row-major (last axis fastest). At most one node may
/// carry `-inf`, marking a singular point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    shape: Vec<usize>,
    spacing: f64,
    origin: Vec<f64>,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(shape: Vec<usize>, spacing: f64, origin: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let dims = shape.len();
        if dims != 2 && dims != 3 {
            return domain(format!("grid must be 2- or 3-dimensional, got {dims}"));
        }
        if shape.iter().any(|&s| s < 2) {
            return domain("every grid axis needs at least two nodes");
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return domain(format!("grid spacing must be positive, got {spacing}"));
        }
        if origin.len() != dims || origin.iter().any(|o| !o.is_finite()) {
            return domain("grid origin must be finite with one entry per axis");
        }
        let count: usize = shape.iter().product();
        if values.len() != count {
            return domain(format!("grid expects {count} values, got {}", values.len()));
        }
        let mut singular = 0;
        for &v in &values {
            if v == f64::NEG_INFINITY {
                singular += 1;
            } else if !v.is_finite() {
                return domain("grid values must be finite (or -inf at a singular node)");
            }
        }
        if singular > 1 {
            return domain("at most one singular node is allowed");
        }
        Ok(Self { shape, spacing, origin, values })
    }

    /// Samples `f` on a box of `nodes` points per axis centred at the origin.
    pub fn centered(dims: usize, nodes: usize, spacing: f64, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let half = (nodes as f64 - 1.0) / 2.0 * spacing;
        Self::from_fn(vec![nodes; dims], spacing, vec![-half; dims], f)
    }

    pub fn from_fn(shape: Vec<usize>, spacing: f64, origin: Vec<f64>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let count: usize = shape.iter().product();
        let mut probe = Self { shape: shape.clone(), spacing, origin: origin.clone(), values: Vec::new() };
        let mut x = vec![0.0; shape.len()];
        let values = (0..count)
            .map(|i| {
                probe.coord_into(i, &mut x);
                f(&x)
            })
            .collect();
        probe.values = values;
        Self::new(probe.shape, spacing, origin, probe.values)
    }

    /// Same geometry with new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.shape.clone(), self.spacing, self.origin.clone(), values)
    }

    pub fn dims(&self) -> usize {
        self.shape.len()
    }
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }
    pub fn spacing(&self) -> f64 {
        self.spacing
    }
    pub fn origin(&self) -> &[f64] {
        &self.origin
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Axis indices of flat index `i`.
    pub fn multi_index(&self, mut i: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dims()];
        for d in (0..self.dims()).rev() {
            idx[d] = i % self.shape[d];
            i /= self.shape[d];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.shape).fold(0, |acc, (&i, &s)| acc * s + i)
    }

    pub(crate) fn coord_into(&self, mut i: usize, out: &mut [f64]) {
        for d in (0..self.dims()).rev() {
            out[d] = self.origin[d] + self.spacing * (i % self.shape[d]) as f64;
            i /= self.shape[d];
        }
    }

    pub fn coord(&self, i: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dims()];
        self.coord_into(i, &mut x);
        x
    }

    /// Upper corner of the box.
    pub fn upper(&self) -> Vec<f64> {
        (0..self.dims()).map(|d| self.origin[d] + self.spacing * (self.shape[d] - 1) as f64).collect()
    }

    /// True when `x` lies in the closed box.
    pub fn contains(&self, x: &[f64]) -> bool {
        let up = self.upper();
        x.iter().enumerate().all(|(d, &v)| v >= self.origin[d] && v <= up[d])
    }

    /// Distance from `x` to the box boundary (negative outside).
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        let up = self.upper();
        (0..self.dims()).map(|d| (x[d] - self.origin[d]).min(up[d] - x[d])).fold(f64::INFINITY, f64::min)
    }

    /// Distance from `x` to the boundary of the region where the cubic
    /// interpolant has a full stencil.
    pub fn interpolation_margin(&self, x: &[f64]) -> f64 {
        let h = self.spacing;
        (0..self.dims())
            .map(|d| {
                let lo = self.origin[d] + h;
                let hi = self.origin[d] + h * (self.shape[d] as f64 - 2.0);
                (x[d] - lo).min(hi - x[d])
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Tensor-product Catmull-Rom interpolation; `None` outside the region
    /// with a full 4-point stencil on every axis.
    pub fn interpolate(&self, x: &[f64]) -> Option<f64> {
        let dims = self.dims();
        let mut base = [0usize; 3];
        let mut wts = [[0.0f64; 4]; 3];
        for d in 0..dims {
            let s = (x[d] - self.origin[d]) / self.spacing;
            if !s.is_finite() {
                return None;
            }
            let mut i = s.floor() as isize;
            // land exactly on the last usable cell face
            if i == self.shape[d] as isize - 2 && s == i as f64 {
                i -= 1;
            }
            if i < 1 || i + 2 > self.shape[d] as isize - 1 {
                return None;
            }
            let t = s - i as f64;
            base[d] = (i - 1) as usize;
            wts[d] = catmull_rom(t);
        }
        let mut acc = 0.0;
        let mut idx = [0usize; 3];
        let combos = 4usize.pow(dims as u32);
        for c in 0..combos {
            let mut rem = c;
            let mut wt = 1.0;
            for d in 0..dims {
                let o = rem % 4;
                rem /= 4;
                idx[d] = base[d] + o;
                wt *= wts[d][o];
            }
            if wt == 0.0 {
                continue;
            }
            let v = self.values[self.flat_index(&idx[..dims])];
            if v == f64::NEG_INFINITY {
                return Some(f64::NEG_INFINITY);
            }
            acc += wt * v;
        }
        Some(acc)
    }

    /// Plain-text format: `dims`, `shape`, `spacing` and optional `origin`
    /// header lines, then the values row-major separated by whitespace.
    pub fn write_raw<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "dims {}", self.dims())?;
        let shape: Vec<String> = self.shape.iter().map(|s| s.to_string()).collect();
        writeln!(out, "shape {}", shape.join(" "))?;
        writeln!(out, "spacing {:.17e}", self.spacing)?;
        let origin: Vec<String> = self.origin.iter().map(|o| format!("{o:.17e}")).collect();
        writeln!(out, "origin {}", origin.join(" "))?;
        let last = *self.shape.last().expect("non-empty shape");
        for row in self.values.chunks(last) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn read_raw<R: BufRead>(input: R) -> Result<Self> {
        let mut dims = None;
        let mut shape = None;
        let mut spacing = None;
        let mut origin = None;
        let mut values = Vec::new();
        for line in input.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let head = parts.next().unwrap_or_default();
            let nums = |p: std::str::SplitWhitespace| -> Result<Vec<f64>> {
                p.map(|t| t.parse::<f64>().map_err(|_| Error::Config(format!("bad number '{t}' in grid file"))))
                    .collect()
            };
            match head {
                "dims" => dims = Some(parse_usize(parts.next())?),
                "shape" => {
                    shape = Some(parts.map(|t| parse_usize(Some(t))).collect::<Result<Vec<_>>>()?);
                }
                "spacing" => spacing = Some(nums(parts)?.first().copied().ok_or_else(|| cfg("missing spacing"))?),
                "origin" => origin = Some(nums(parts)?),
                _ => values.extend(nums(line.split_whitespace())?),
            }
        }
        let shape = shape.ok_or_else(|| cfg("grid file missing 'shape'"))?;
        let dims = dims.ok_or_else(|| cfg("grid file missing 'dims'"))?;
        if dims != shape.len() {
            return Err(cfg("grid 'dims' does not match 'shape'"));
        }
        let spacing = spacing.ok_or_else(|| cfg("grid file missing 'spacing'"))?;
        let origin = origin.unwrap_or_else(|| shape.iter().map(|&s| -(s as f64 - 1.0) / 2.0 * spacing).collect());
        Self::new(shape, spacing, origin, values)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_raw(std::io::BufReader::new(f))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_raw(std::io::BufWriter::new(f))
    }
}

fn cfg(msg: &str) -> Error {
    Error::Config(msg.to_string())
}

fn parse_usize(t: Option<&str>) -> Result<usize> {
    let t = t.ok_or_else(|| cfg("missing integer in grid header"))?;
    t.parse().map_err(|_| Error::Config(format!("bad integer '{t}' in grid header")))
}

fn catmull_rom(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [0.5 * (-t3 + 2.0 * t2 - t), 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0), 0.5 * (-3.0 * t3 + 4.0 * t2 + t), 0.5 * (t3 - t2)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_round_trip() {
        let g = GridField::centered(3, 5, 0.5, |x| x[0] + 10.0 * x[1] + 100.0 * x[2]).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.flat_index(&g.multi_index(i)), i);
            let x = g.coord(i);
            assert_eq!(g.values()[i], x[0] + 10.0 * x[1] + 100.0 * x[2]);
        }
        assert_eq!(g.origin(), &[-1.0, -1.0, -1.0]);
    }

    #[test]
    fn interpolation_exact_on_quadratics() {
        let f = |x: &[f64]| 1.0 + x[0] - 2.0 * x[1] + x[0] * x[0] + 0.5 * x[0] * x[1] - x[1] * x[1];
        let g = GridField::centered(2, 9, 0.25, f).unwrap();
        for p in [[0.1, -0.3], [0.0, 0.0], [-0.6, 0.55], [0.74, 0.74]] {
            let v = g.interpolate(&p).unwrap();
            assert!((v - f(&p)).abs() < 1e-12, "{p:?}");
        }
        assert!(g.interpolate(&[0.9, 0.0]).is_none());
    }

    #[test]
    fn raw_round_trip() {
        let g = GridField::centered(2, 4, 0.3, |x| (x[0] * 3.0).sin() + x[1]).unwrap();
        let mut buf = Vec::new();
        g.write_raw(&mut buf).unwrap();
        let back = GridField::read_raw(&buf[..]).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(GridField::new(vec![2], 1.0, vec![0.0], vec![0.0; 2]).is_err());
        assert!(GridField::new(vec![2, 2], 0.0, vec![0.0; 2], vec![0.0; 4]).is_err());
        assert!(GridField::new(vec![2, 2], 1.0, vec![0.0; 2], vec![0.0; 3]).is_err());
        let two_sing = vec![f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0, 0.0];
        assert!(GridField::new(vec![2, 2], 1.0, vec![0.0; 2], two_sing).is_err());
        assert!(GridField::new(vec![2, 2], 1.0, vec![0.0; 2], vec![f64::NAN, 0.0, 0.0, 0.0]).is_err());
        let one_sing = vec![f64::NEG_INFINITY, 0.0, 0.0, 0.0];
        assert!(GridField::new(vec![2, 2], 1.0, vec![0.0; 2], one_sing).is_ok());
    }
}
