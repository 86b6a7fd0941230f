//! Conformal gauges and the matrices whose eigenvalues carry the
//! k-admissibility condition.
//!
//! A conformal metric is written in one of four equivalent gauges,
//! `g = χ g0 = v^{4/(n-2)} g0 = u^{-2} g0 = e^{-2w} g0`, so that
//! `u = v^{-2/(n-2)} = e^w`. Every gauge value is `e^{s w}` for a fixed
//! exponent `s`, which is how conversions are implemented here.
//!
//! All matrices are expressed in a `g0`-orthonormal frame at the evaluation
//! point.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::symfunc::{EigenTuple, SymMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gauge {
    Chi,
    V,
    U,
    W,
}

impl Gauge {
    /// Exponent `s` with `value = e^{s w}`.
    pub fn exponent(self, n: usize) -> f64 {
        match self {
            Gauge::Chi => -2.0,
            Gauge::V => -(n as f64 - 2.0) / 2.0,
            Gauge::U => 1.0,
            Gauge::W => 0.0,
        }
    }

    fn positive(self) -> bool {
        !matches!(self, Gauge::W)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundKind {
    Flat,
    RoundSphere,
    Explicit,
}

/// Background metric data at the evaluation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Background {
    kind: BackgroundKind,
    schouten: SymMatrix,
    scalar_curvature: f64,
}

impl Background {
    pub fn flat(n: usize) -> Self {
        Self { kind: BackgroundKind::Flat, schouten: SymMatrix::zeros(n), scalar_curvature: 0.0 }
    }

    /// Unit round sphere: `A = I/2`, `R = n(n-1)`.
    pub fn round_sphere(n: usize) -> Self {
        Self {
            kind: BackgroundKind::RoundSphere,
            schouten: SymMatrix::scalar(n, 0.5),
            scalar_curvature: (n * (n - 1)) as f64,
        }
    }

    /// Explicit Schouten tensor and scalar curvature. These must satisfy
    /// `tr A = R / (2(n-1))`.
    pub fn explicit(schouten: SymMatrix, scalar_curvature: f64) -> Result<Self> {
        let n = schouten.dim();
        if n < 3 {
            return domain("background dimension must be >= 3");
        }
        let expect = scalar_curvature / (2.0 * (n as f64 - 1.0));
        let scale = schouten.max_abs().max(expect.abs()).max(1.0);
        if (schouten.trace() - expect).abs() > 1e-10 * scale {
            return domain(format!(
                "trace of Schouten tensor {} inconsistent with R/(2(n-1)) = {expect}",
                schouten.trace()
            ));
        }
        Ok(Self { kind: BackgroundKind::Explicit, schouten, scalar_curvature })
    }

    /// `A = (Ric - R/(2(n-1)) g) / (n-2)` from Ricci data in an orthonormal frame.
    pub fn from_ricci(ricci: &SymMatrix) -> Result<Self> {
        let n = ricci.dim();
        if n < 3 {
            return domain("background dimension must be >= 3");
        }
        let nf = n as f64;
        let r = ricci.trace();
        let a = ricci.add_scaled(&SymMatrix::identity(n), -r / (2.0 * (nf - 1.0))).scaled(1.0 / (nf - 2.0));
        Self::explicit(a, r)
    }

    pub fn kind(&self) -> BackgroundKind {
        self.kind
    }

    pub fn schouten(&self) -> &SymMatrix {
        &self.schouten
    }

    pub fn scalar_curvature(&self) -> f64 {
        self.scalar_curvature
    }

    pub fn dim(&self) -> usize {
        self.schouten.dim()
    }
}

/// Value, gradient and Hessian of a conformal factor in a declared gauge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalJet {
    pub gauge: Gauge,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: SymMatrix,
    pub background: Background,
}

impl ConformalJet {
    pub fn new(
        gauge: Gauge,
        value: f64,
        gradient: Vec<f64>,
        hessian: SymMatrix,
        background: Background,
    ) -> Result<Self> {
        let n = gradient.len();
        if n < 3 || hessian.dim() != n || background.dim() != n {
            return domain("jet dimensions disagree or n < 3");
        }
        if !value.is_finite() || gradient.iter().any(|g| !g.is_finite()) {
            return domain("jet has non-finite entries");
        }
        if gauge.positive() && value <= 0.0 {
            return domain(format!("{gauge:?}-gauge value must be positive, got {value}"));
        }
        Ok(Self { gauge, value, gradient, hessian, background })
    }

    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    fn require(&self, gauge: Gauge) -> Result<()> {
        if self.gauge != gauge {
            return domain(format!("expected a {gauge:?}-gauge jet, got {:?}", self.gauge));
        }
        Ok(())
    }

    fn grad_sq(&self) -> f64 {
        self.gradient.iter().map(|g| g * g).sum()
    }
}

/// Chain-rule conversion between gauges.
pub fn convert_gauge(jet: &ConformalJet, target: Gauge) -> Result<ConformalJet> {
    if jet.gauge == target {
        return Ok(jet.clone());
    }
    let n = jet.dim();
    // source -> w
    let (w, dw, d2w) = match jet.gauge {
        Gauge::W => (jet.value, jet.gradient.clone(), jet.hessian.clone()),
        g => {
            let s = g.exponent(n);
            let y = jet.value;
            if y <= 0.0 {
                return domain(format!("{g:?}-gauge value must be positive, got {y}"));
            }
            let dw: Vec<f64> = jet.gradient.iter().map(|d| d / (s * y)).collect();
            let h = jet
                .hessian
                .scaled(1.0 / y)
                .add_scaled(&SymMatrix::outer(&jet.gradient), -1.0 / (y * y))
                .scaled(1.0 / s);
            (y.ln() / s, dw, h)
        }
    };
    // w -> target
    let (value, gradient, hessian) = match target {
        Gauge::W => (w, dw, d2w),
        g => {
            let s = g.exponent(n);
            let y = (s * w).exp();
            let grad: Vec<f64> = dw.iter().map(|d| s * y * d).collect();
            let h = d2w.scaled(s * y).add_scaled(&SymMatrix::outer(&dw), s * s * y);
            (y, grad, h)
        }
    };
    ConformalJet::new(target, value, gradient, hessian, jet.background.clone())
}

/// `W = ∇²w + ∇w⊗∇w - ½|∇w|² g0 + A_{g0}`.
pub fn matrix_w(jet: &ConformalJet) -> Result<SymMatrix> {
    jet.require(Gauge::W)?;
    let n = jet.dim();
    Ok(jet
        .hessian
        .add_scaled(&SymMatrix::outer(&jet.gradient), 1.0)
        .add_scaled(&SymMatrix::identity(n), -0.5 * jet.grad_sq())
        .add_scaled(jet.background.schouten(), 1.0))
}

/// `U = ∇²u - |∇u|²/(2u) g0 + u A_{g0}`.
pub fn matrix_u(jet: &ConformalJet) -> Result<SymMatrix> {
    jet.require(Gauge::U)?;
    let u = jet.value;
    if u <= 0.0 {
        return domain("u must be positive");
    }
    let n = jet.dim();
    Ok(jet
        .hessian
        .add_scaled(&SymMatrix::identity(n), -jet.grad_sq() / (2.0 * u))
        .add_scaled(jet.background.schouten(), u))
}

/// `V = -∇²v + n/(n-2) ∇v⊗∇v/v - 1/(n-2) |∇v|²/v g0 + (n-2)/2 v A_{g0}`.
pub fn matrix_v(jet: &ConformalJet) -> Result<SymMatrix> {
    jet.require(Gauge::V)?;
    let v = jet.value;
    if v <= 0.0 {
        return domain("v must be positive");
    }
    let n = jet.dim();
    let nf = n as f64;
    Ok(jet
        .hessian
        .scaled(-1.0)
        .add_scaled(&SymMatrix::outer(&jet.gradient), nf / ((nf - 2.0) * v))
        .add_scaled(&SymMatrix::identity(n), -jet.grad_sq() / ((nf - 2.0) * v))
        .add_scaled(jet.background.schouten(), (nf - 2.0) / 2.0 * v))
}

/// Eigenvalues of the Schouten tensor of `g` taken with respect to `g`,
/// i.e. `e^{2w} λ(W)`.
pub fn schouten_eigs_wrt_g(jet: &ConformalJet) -> Result<EigenTuple> {
    let wj = convert_gauge(jet, Gauge::W)?;
    let w = matrix_w(&wj)?;
    let factor = (2.0 * wj.value).exp();
    EigenTuple::new(w.eigenvalues().into_iter().map(|l| factor * l).collect())
}

/// `-Δv + (n-2)/(4(n-1)) R_{g0} v` for a `v`-gauge jet.
pub fn conformal_laplacian_residual(jet: &ConformalJet) -> Result<f64> {
    jet.require(Gauge::V)?;
    let nf = jet.dim() as f64;
    Ok(-jet.hessian.trace() + (nf - 2.0) / (4.0 * (nf - 1.0)) * jet.background.scalar_curvature() * jet.value)
}

/// Exponent `a = ½(n-2)(k-p)` taking `σ_k(λ(V)) = f v^p` to `σ_k(λ(W)) = f̃ e^{a w}`.
pub fn exponent_a(n: usize, k: usize, p: f64) -> f64 {
    0.5 * (n as f64 - 2.0) * (k as f64 - p)
}

/// Coefficient `f̃ = ((n-2)/2)^{-k} f` accompanying [`exponent_a`].
pub fn w_gauge_coefficient(n: usize, k: usize, f: f64) -> f64 {
    f * ((n as f64 - 2.0) / 2.0).powi(-(k as i32))
}

/// Radial samples of a `v`-gauge factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialSamples {
    pub r: Vec<f64>,
    pub values: Vec<f64>,
}

impl RadialSamples {
    /// Reads the `r` column and the named value column of a CSV file.
    pub fn read_csv<R: std::io::Read>(input: R, column: &str) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = rd.headers()?.clone();
        let col = |name: &str| {
            headers.iter().position(|h| h == name).ok_or_else(|| Error::Config(format!("CSV needs an '{name}' column")))
        };
        let (ir, iv) = (col("r")?, col(column)?);
        let mut out = Self { r: Vec::new(), values: Vec::new() };
        for rec in rd.records() {
            let rec = rec?;
            for (i, dst) in [(ir, &mut out.r), (iv, &mut out.values)] {
                let t = rec.get(i).unwrap_or("");
                dst.push(t.parse().map_err(|_| Error::Config(format!("bad number '{t}' in CSV")))?);
            }
        }
        Ok(out)
    }
}

/// Kelvin transform `v_ψ = |J_ψ|^{(n-2)/(2n)} v∘ψ` with `ψ(x) = x/|x|²`,
/// specialised to radial fields: `v_ψ(r) = r^{2-n} v(1/r)`. The output grid
/// is `1/r` in increasing order.
pub fn kelvin_transform(field: &RadialSamples, n: usize) -> Result<RadialSamples> {
    if field.r.len() != field.values.len() {
        return domain("radius and value lengths differ");
    }
    if field.r.iter().any(|&r| !(r > 0.0)) {
        return domain("kelvin transform needs r > 0");
    }
    let e = 2.0 - n as f64;
    let mut out: Vec<(f64, f64)> = field
        .r
        .iter()
        .zip(&field.values)
        .map(|(&r, &v)| {
            let rho = 1.0 / r;
            (rho, rho.powf(e) * v)
        })
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(RadialSamples { r: out.iter().map(|p| p.0).collect(), values: out.iter().map(|p| p.1).collect() })
}
