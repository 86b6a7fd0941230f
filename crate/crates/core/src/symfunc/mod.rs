//! Elementary symmetric polynomials, Garding cones and the principal-minor
//! identities used for bordered (arrow) matrices.

mod matrix;

pub use matrix::{bordered_minor_identity_check, principal_minor_sum, sigma_of_matrix, SymMatrix};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// A tuple of real eigenvalues `λ = (λ_1, ..., λ_n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenTuple(Vec<f64>);

impl EigenTuple {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return domain(format!("eigen tuple needs n >= 2 entries, got {}", values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return domain(format!("eigen tuple entry {i} is not finite"));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0.iter().map(|v| v * c).collect())
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl From<EigenTuple> for Vec<f64> {
    fn from(t: EigenTuple) -> Self {
        t.0
    }
}

/// Dimension and order of a `σ_k` problem, with the derived exponents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConeParams {
    n: usize,
    k: usize,
}

impl ConeParams {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if n < 3 {
            return domain(format!("dimension n must be >= 3, got {n}"));
        }
        if k < 1 || k > n {
            return domain(format!("order k must satisfy 1 <= k <= n = {n}, got {k}"));
        }
        Ok(Self { n, k })
    }

    /// Same as [`ConeParams::new`] but additionally requires `k > n/2`.
    pub fn supercritical(n: usize, k: usize) -> Result<Self> {
        let c = Self::new(n, k)?;
        c.require_supercritical()?;
        Ok(c)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn is_supercritical(&self) -> bool {
        2 * self.k > self.n
    }

    pub fn require_supercritical(&self) -> Result<()> {
        if self.is_supercritical() {
            Ok(())
        } else {
            Err(Error::Unsupported(format!("k = {} must exceed n/2 = {}", self.k, self.n as f64 / 2.0)))
        }
    }

    /// `θ = (n - k)/k`.
    pub fn theta(&self) -> f64 {
        (self.n - self.k) as f64 / self.k as f64
    }

    /// Hölder exponent `α = 2 - n/k`.
    pub fn alpha(&self) -> f64 {
        2.0 - self.n as f64 / self.k as f64
    }

    /// `δ = (n - k)/(n(k - 1))`, the embedding constant of `Γ_k` into `Σ_δ`.
    /// Undefined for `k = 1`.
    pub fn delta(&self) -> Option<f64> {
        (self.k >= 2).then(|| (self.n - self.k) as f64 / (self.n * (self.k - 1)) as f64)
    }

    /// Open cone membership `λ ∈ Γ_k` using this order.
    pub fn contains(&self, lambda: &EigenTuple) -> bool {
        in_gamma_k(lambda, self.k, 0.0)
    }

    /// Closed cone membership `λ ∈ Γ̄_k` using this order.
    pub fn closure_contains(&self, lambda: &EigenTuple) -> bool {
        in_gamma_k_closure(lambda, self.k, 0.0)
    }
}

/// Binomial coefficient `C(n, j)` as a float (0 when `j > n`).
pub fn binomial(n: usize, j: usize) -> f64 {
    if j > n {
        return 0.0;
    }
    let j = j.min(n - j);
    let mut c = 1.0;
    for i in 0..j {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c.round()
}

/// All elementary symmetric polynomials `σ_0..σ_m` of `values` for `m <= values.len()`.
///
/// One pass of `e_j(λ_1..λ_m) = e_j(λ_1..λ_{m-1}) + λ_m e_{j-1}(λ_1..λ_{m-1})`.
pub fn sigma_all(values: &[f64], max_order: usize) -> Vec<f64> {
    let m = max_order.min(values.len());
    let mut e = vec![0.0; m + 1];
    e[0] = 1.0;
    for (count, &x) in values.iter().enumerate() {
        let top = m.min(count + 1);
        for j in (1..=top).rev() {
            e[j] += x * e[j - 1];
        }
    }
    e
}

fn sigma_raw(values: &[f64], j: usize) -> f64 {
    if j > values.len() {
        return 0.0;
    }
    sigma_all(values, j)[j]
}

/// `σ_j(λ)` with `σ_0 = 1`.
pub fn sigma(lambda: &EigenTuple, j: usize) -> Result<f64> {
    if j > lambda.len() {
        return domain(format!("order j = {j} exceeds n = {}", lambda.len()));
    }
    Ok(sigma_raw(lambda.values(), j))
}

/// `∂σ_k/∂λ_i = σ_{k-1}(λ | i)` for every `i`.
pub fn sigma_gradient(lambda: &EigenTuple, k: usize) -> Result<Vec<f64>> {
    let n = lambda.len();
    if k < 1 || k > n {
        return domain(format!("order k = {k} must lie in 1..={n}"));
    }
    let vals = lambda.values();
    let mut rest = Vec::with_capacity(n - 1);
    Ok((0..n)
        .map(|i| {
            rest.clear();
            rest.extend(vals.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &v)| v));
            sigma_raw(&rest, k - 1)
        })
        .collect())
}

/// Open Garding cone: `σ_j(λ) > margin` for all `1 <= j <= k`.
pub fn in_gamma_k(lambda: &EigenTuple, k: usize, margin: f64) -> bool {
    if k > lambda.len() {
        return false;
    }
    let e = sigma_all(lambda.values(), k);
    e[1..=k].iter().all(|&s| s > margin)
}

/// Closed Garding cone: `σ_j(λ) >= -margin` for all `1 <= j <= k`.
pub fn in_gamma_k_closure(lambda: &EigenTuple, k: usize, margin: f64) -> bool {
    if k > lambda.len() {
        return false;
    }
    let e = sigma_all(lambda.values(), k);
    e[1..=k].iter().all(|&s| s >= -margin)
}

/// `λ ∈ Σ_δ`: every `λ_i > -δ Σ_j λ_j`.
pub fn in_sigma_delta(lambda: &EigenTuple, delta: f64) -> Result<bool> {
    if !(delta >= 0.0) {
        return domain(format!("delta must be >= 0, got {delta}"));
    }
    let bound = -delta * lambda.sum();
    Ok(lambda.values().iter().all(|&l| l > bound))
}
