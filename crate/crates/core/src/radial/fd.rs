//! Three-point finite differences on non-uniform grids.

/// First and second derivative weights at `x` for the quadratic through
/// `(x0, x1, x2)`.
pub(crate) fn weights3(xs: [f64; 3], x: f64) -> ([f64; 3], [f64; 3]) {
    let mut d1 = [0.0; 3];
    let mut d2 = [0.0; 3];
    for i in 0..3 {
        let (j, l) = ((i + 1) % 3, (i + 2) % 3);
        let denom = (xs[i] - xs[j]) * (xs[i] - xs[l]);
        d1[i] = ((x - xs[j]) + (x - xs[l])) / denom;
        d2[i] = 2.0 / denom;
    }
    (d1, d2)
}

/// Derivatives of sampled `y(x)` at every node: centred in the interior,
/// one-sided (same three points) at the ends. Needs at least three nodes.
pub(crate) fn derivatives(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    assert!(n >= 3 && y.len() == n, "need at least three samples");
    let mut dy = vec![0.0; n];
    let mut d2y = vec![0.0; n];
    for i in 0..n {
        let c = i.clamp(1, n - 2);
        let xs = [x[c - 1], x[c], x[c + 1]];
        let ys = [y[c - 1], y[c], y[c + 1]];
        let (w1, w2) = weights3(xs, x[i]);
        dy[i] = (0..3).map(|j| w1[j] * ys[j]).sum();
        d2y[i] = (0..3).map(|j| w2[j] * ys[j]).sum();
    }
    (dy, d2y)
}
