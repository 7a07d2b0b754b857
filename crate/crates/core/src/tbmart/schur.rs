use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Cube;

/// A_QR = ℓ(Q)^{α/2} ℓ(R)^{α/2} D(Q,R)^{−(m+α)} σ(Q)^{1/2} σ(R)^{1/2}, D = ℓ(Q)+ℓ(R)+d(Q,R).
pub fn aqr(p: &Cube, r: &Cube, sigma_p: f64, sigma_r: f64, m: f64, alpha: f64) -> f64 {
    let d = p.side + r.side + p.dist_cube(r);
    (p.side * r.side).powf(alpha / 2.0) * d.powf(-(m + alpha)) * (sigma_p * sigma_r).sqrt()
}

#[derive(Clone, Debug, Serialize)]
pub struct SchurResult {
    pub norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub size: usize,
}

/// ℓ²→ℓ² norm of [A_QR] by power iteration (the matrix is symmetric and entrywise positive).
pub fn schur_norm(cubes: &[(Cube, f64)], m: f64, alpha: f64, max_iter: usize) -> Result<SchurResult> {
    let n = cubes.len();
    if n == 0 {
        return Err(Error::Invalid("schur_norm needs at least one cube".into()));
    }
    if cubes.iter().any(|(_, s)| !(*s >= 0.0)) {
        return Err(Error::Invalid("masses must be >= 0".into()));
    }
    let a: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| aqr(&cubes[i].0, &cubes[j].0, cubes[i].1, cubes[j].1, m, alpha)).collect())
        .collect();
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut norm = 0.0;
    for it in 1..=max_iter.max(1) {
        let y: Vec<f64> = a.iter().map(|row| row.iter().zip(&x).map(|(a, b)| a * b).sum()).collect();
        let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if ny == 0.0 {
            return Ok(SchurResult { norm: 0.0, iterations: it, converged: true, size: n });
        }
        let prev = norm;
        norm = ny;
        x = y.into_iter().map(|v| v / ny).collect();
        if it > 1 && (norm - prev).abs() <= 1e-12 * norm {
            return Ok(SchurResult { norm, iterations: it, converged: true, size: n });
        }
    }
    Ok(SchurResult { norm, iterations: max_iter, converged: false, size: n })
}

/// Nested chain [0, 2^-l), l = 0..=depth, each with mass equal to its length.
pub fn dyadic_tower(depth: u32) -> Vec<(Cube, f64)> {
    (0..=depth)
        .map(|l| {
            let s = 2f64.powi(-(l as i32));
            (Cube::from_corners(&[0.0], s), s)
        })
        .collect()
}

/// All dyadic subintervals of [0,1) down to `depth`, each with mass equal to its length.
pub fn dyadic_tree(depth: u32) -> Vec<(Cube, f64)> {
    let mut out = Vec::new();
    for l in 0..=depth {
        let s = 2f64.powi(-(l as i32));
        for k in 0..(1u64 << l) {
            out.push((Cube::from_corners(&[k as f64 * s], s), s));
        }
    }
    out
}
