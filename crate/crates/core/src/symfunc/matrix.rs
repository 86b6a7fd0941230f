use serde::{Deserialize, Serialize};

use super::{sigma_all, EigenTuple};
use crate::error::{domain, Result};

const MAX_DIM: usize = 16;

/// Dense symmetric matrix of dimension `1..=16`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Builds from row-major entries; rejects asymmetric or non-finite input.
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || n > MAX_DIM {
            return domain(format!("matrix dimension must be in 1..={MAX_DIM}, got {n}"));
        }
        if data.len() != n * n {
            return domain(format!("expected {} entries, got {}", n * n, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return domain("matrix has non-finite entries");
        }
        let scale = data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (data[i * n + j], data[j * n + i]);
                if (a - b).abs() > 1e-12 * scale {
                    return domain(format!("matrix is not symmetric at ({i}, {j}): {a} vs {b}"));
                }
            }
        }
        // store the symmetrised copy so downstream algebra sees exact symmetry
        let mut m = Self { n, data };
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (m.data[i * n + j] + m.data[j * n + i]);
                m.data[i * n + j] = avg;
                m.data[j * n + i] = avg;
            }
        }
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return domain("rows must form a square matrix");
        }
        Self::new(n, rows.concat())
    }

    pub fn zeros(n: usize) -> Self {
        assert!(n > 0 && n <= MAX_DIM, "matrix dimension out of range");
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        Self::scalar(n, 1.0)
    }

    pub fn scalar(n: usize, c: f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = c;
        }
        m
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.data[i * d.len() + i] = v;
        }
        m
    }

    /// `x xᵀ`.
    pub fn outer(x: &[f64]) -> Self {
        let n = x.len();
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = x[i] * x[j];
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Sets `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { n: self.n, data: self.data.iter().map(|v| v * c).collect() }
    }

    /// `self + c * other`.
    pub fn add_scaled(&self, other: &Self, c: f64) -> Self {
        assert_eq!(self.n, other.n, "dimension mismatch");
        Self { n: self.n, data: self.data.iter().zip(&other.data).map(|(a, b)| a + c * b).collect() }
    }

    /// `Qᵀ S Q` for a square `q` given row-major.
    pub fn conjugate(&self, q: &[f64]) -> Self {
        let n = self.n;
        assert_eq!(q.len(), n * n);
        let mut tmp = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                tmp[i * n + j] = (0..n).map(|l| self.get(i, l) * q[l * n + j]).sum();
            }
        }
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[i * n + j] = (0..n).map(|l| q[l * n + i] * tmp[l * n + j]).sum();
            }
        }
        out
    }

    /// Principal submatrix with the listed indices removed.
    pub fn without(&self, removed: &[usize]) -> Option<Self> {
        let keep: Vec<usize> = (0..self.n).filter(|i| !removed.contains(i)).collect();
        self.principal(&keep)
    }

    /// Principal submatrix on `idx` (none when `idx` is empty).
    pub fn principal(&self, idx: &[usize]) -> Option<Self> {
        if idx.is_empty() {
            return None;
        }
        let m = idx.len();
        let mut out = Self::zeros(m);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                out.data[a * m + b] = self.get(i, j);
            }
        }
        Some(out)
    }

    /// Eigenvalues by cyclic Jacobi rotations, sorted ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let n = self.n;
        let mut a = self.data.clone();
        let frob: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        if frob == 0.0 {
            return vec![0.0; n];
        }
        for sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[i * n + j] * a[i * n + j])
                .sum::<f64>()
                .sqrt();
            if off <= 1e-17 * frob {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[p * n + q];
                    let app = a[p * n + p];
                    let aqq = a[q * n + q];
                    // entries below rounding of both pivots are dropped after a few sweeps
                    let g = 100.0 * apq.abs();
                    if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                        a[p * n + q] = 0.0;
                        a[q * n + p] = 0.0;
                        continue;
                    }
                    if apq == 0.0 {
                        continue;
                    }
                    let tau = (aqq - app) / (2.0 * apq);
                    let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                    let t = if tau == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;
                    for r in 0..n {
                        let arp = a[r * n + p];
                        let arq = a[r * n + q];
                        a[r * n + p] = c * arp - s * arq;
                        a[r * n + q] = s * arp + c * arq;
                    }
                    for r in 0..n {
                        let apr = a[p * n + r];
                        let aqr = a[q * n + r];
                        a[p * n + r] = c * apr - s * aqr;
                        a[q * n + r] = s * apr + c * aqr;
                    }
                }
            }
        }
        let mut eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
        eig.sort_by(f64::total_cmp);
        eig
    }

    pub fn eigen_tuple(&self) -> Result<EigenTuple> {
        EigenTuple::new(self.eigenvalues())
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    pub fn determinant(&self) -> f64 {
        let n = self.n;
        let mut a = self.data.clone();
        let mut det = 1.0;
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs())).unwrap();
            if a[piv * n + col] == 0.0 {
                return 0.0;
            }
            if piv != col {
                for j in 0..n {
                    a.swap(piv * n + j, col * n + j);
                }
                det = -det;
            }
            let d = a[col * n + col];
            det *= d;
            for i in (col + 1)..n {
                let f = a[i * n + col] / d;
                for j in col..n {
                    a[i * n + j] -= f * a[col * n + j];
                }
            }
        }
        det
    }
}

fn sigma_eigs(s: Option<&SymMatrix>, k: usize) -> f64 {
    match s {
        None => (k == 0) as u8 as f64,
        Some(m) => {
            let eig = m.eigenvalues();
            if k > eig.len() {
                0.0
            } else {
                sigma_all(&eig, k)[k]
            }
        }
    }
}

/// `σ_k(λ(S))` from the eigenvalues of `S`.
pub fn sigma_of_matrix(s: &SymMatrix, k: usize) -> Result<f64> {
    if k > s.dim() {
        return domain(format!("order k = {k} exceeds matrix dimension {}", s.dim()));
    }
    Ok(sigma_eigs(Some(s), k))
}

/// Sum of all principal `k×k` minors of `S`; an eigenvalue-free route to `σ_k(λ(S))`.
pub fn principal_minor_sum(s: &SymMatrix, k: usize) -> Result<f64> {
    let n = s.dim();
    if k > n {
        return domain(format!("order k = {k} exceeds matrix dimension {n}"));
    }
    if k == 0 {
        return Ok(1.0);
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut total = 0.0;
    loop {
        total += s.principal(&idx).map_or(1.0, |m| m.determinant());
        // advance to the next k-subset in lexicographic order
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
    Ok(total)
}

/// Residual of the bordered-minor identity for an arrow matrix `W` (diagonal
/// except for its last row and column):
///
/// `σ_k(λ(W)) = σ_k(λ(W')) - Σ_{i<n} σ_{k-2}(λ(W_{|in})) w_{in}²`
///
/// where `W'` is the diagonal part of `W` and `W_{|in}` removes rows and
/// columns `i` and `n`. Returns `|lhs - rhs|`.
pub fn bordered_minor_identity_check(s: &SymMatrix, k: usize) -> Result<f64> {
    let n = s.dim();
    if n < 2 {
        return domain("arrow structure needs n >= 2");
    }
    if k < 1 || k > n {
        return domain(format!("order k = {k} must lie in 1..={n}"));
    }
    let last = n - 1;
    let scale = s.max_abs().max(f64::MIN_POSITIVE);
    for i in 0..last {
        for j in 0..last {
            if i != j && s.get(i, j).abs() > 1e-14 * scale {
                return domain(format!("not an arrow matrix: entry ({i}, {j}) = {}", s.get(i, j)));
            }
        }
    }
    let lhs = sigma_eigs(Some(s), k);
    let diag: Vec<f64> = (0..n).map(|i| s.get(i, i)).collect();
    let mut rhs = sigma_all(&diag, k)[k];
    if k >= 2 {
        for i in 0..last {
            let w_in = s.get(i, last);
            if w_in == 0.0 {
                continue;
            }
            let minor = s.without(&[i, last]);
            rhs -= sigma_eigs(minor.as_ref(), k - 2) * w_in * w_in;
        }
    }
    Ok((lhs - rhs).abs())
}
