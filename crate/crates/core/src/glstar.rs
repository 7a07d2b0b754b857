//! Numerical evaluation of the g*_λ square function and its localized and
//! truncated variants, plus the pointwise functionals u_t, v_t and 𝒯.
//!
//! The y-integrals are exact atom sums. The t-integral runs over a geometric
//! grid with a panel rule that is exact on power laws, Richardson-extrapolated
//! against the half-resolution grid; the difference is reported as the
//! quadrature error.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dist_inf, Cube, Point};
use crate::kernels::KernelSpec;
use crate::measure::{AtomicMeasure, ComplexMeasure, SampledFunction};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum THi {
    Auto,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    None,
    Analytic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OperatorParams {
    pub lambda: f64,
    pub t_lo: f64,
    pub t_hi: THi,
    pub t_ratio: f64,
    pub tail: Tail,
}

impl Default for OperatorParams {
    fn default() -> Self {
        OperatorParams { lambda: 3.0, t_lo: 0.0, t_hi: THi::Auto, t_ratio: 2f64.powf(0.125), tail: Tail::Analytic }
    }
}

impl OperatorParams {
    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_t_lo(mut self, t_lo: f64) -> Self {
        self.t_lo = t_lo;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 2.0) {
            return Err(Error::Invalid(format!("lambda must exceed 2, got {}", self.lambda)));
        }
        if !(self.t_lo >= 0.0) || !self.t_lo.is_finite() {
            return Err(Error::Invalid("t_lo must be finite and >= 0".into()));
        }
        if !(self.t_ratio > 1.0) {
            return Err(Error::Invalid("t_ratio must exceed 1".into()));
        }
        if let THi::Fixed(t) = self.t_hi {
            if !(t > 0.0) {
                return Err(Error::Invalid("fixed t_hi must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GValue {
    /// +∞ when `diverged`
    pub value: f64,
    pub diverged: bool,
    /// relative error estimate of `value` from the quadrature
    pub quadrature_error: f64,
    /// rigorous bound on the omitted t > t_hi part of the squared integral
    pub tail_bound: f64,
}

impl GValue {
    pub fn zero() -> Self {
        GValue { value: 0.0, diverged: false, quadrature_error: 0.0, tail_bound: 0.0 }
    }
}

/// Geometric grid with an even number of intervals and ratio at most `ratio`.
pub fn log_grid(lo: f64, hi: f64, ratio: f64) -> Vec<f64> {
    let span = (hi / lo).ln();
    let mut n = (span / (2.0 * ratio.ln())).ceil() as usize * 2;
    if n < 2 {
        n = 2;
    }
    (0..=n).map(|k| if k == n { hi } else { lo * (span * k as f64 / n as f64).exp() }).collect()
}

// log-mean panel: exact when J is a power of t on the panel
#[inline]
fn panel(a: f64, b: f64, h: f64) -> f64 {
    if a > 0.0 && b > 0.0 && (a - b).abs() > 1e-12 * a.max(b) {
        h * (a - b) / (a / b).ln()
    } else {
        h * (a + b) / 2.0
    }
}

/// ∫ J d(log t) over a grid from `log_grid`: (extrapolated value, base rule value).
///
/// The base rule is exact on power laws; Richardson extrapolation against the
/// every-other-node grid removes the leading error on smooth transitions.
pub fn integrate_log(grid: &[f64], j: &[f64]) -> (f64, f64) {
    let n = grid.len() - 1;
    if n == 0 {
        return (0.0, 0.0);
    }
    let h = (grid[n] / grid[0]).ln() / n as f64;
    let fine: f64 = (0..n).map(|k| panel(j[k], j[k + 1], h)).sum();
    if n % 2 == 1 {
        return (fine, fine);
    }
    let coarse: f64 = (0..n).step_by(2).map(|k| panel(j[k], j[k + 2], 2.0 * h)).sum();
    ((4.0 * fine - coarse) / 3.0, fine)
}

/// Precomputed |θ_t(y)|² μ_y on a t-grid, shared by many evaluation points.
pub struct SquareEngine {
    ys: Vec<Vec<f64>>,
    grid: Vec<f64>,
    amp: Vec<Vec<f64>>,
    m: f64,
    lambda: f64,
}

impl SquareEngine {
    pub fn new(kernel: &KernelSpec, source: &ComplexMeasure, mu: &AtomicMeasure, lambda: f64, grid: Vec<f64>) -> Self {
        let live: Vec<usize> = (0..mu.len()).filter(|&i| mu.atoms()[i].w > 0.0).collect();
        let ys: Vec<Vec<f64>> = live.iter().map(|&i| mu.atoms()[i].x.0.clone()).collect();
        let amp = grid
            .par_iter()
            .map(|&t| {
                live.iter()
                    .zip(&ys)
                    .map(|(&i, y)| {
                        let mut s = Complex64::new(0.0, 0.0);
                        for (z, w) in source.points.iter().zip(&source.weights) {
                            s += kernel.eval_unchecked(t, y, &z.0) * w;
                        }
                        s.norm_sqr() * mu.atoms()[i].w
                    })
                    .collect()
            })
            .collect();
        SquareEngine { ys, grid, amp, m: kernel.m, lambda }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// J(t_k) = Σ_y (t/(t+|x−y|))^{mλ} |θ_t(y)|² μ_y / t^m
    pub fn integrand(&self, x: &[f64]) -> Vec<f64> {
        let p = self.m * self.lambda;
        let d: Vec<f64> = self.ys.iter().map(|y| dist_inf(x, y)).collect();
        self.grid
            .iter()
            .zip(&self.amp)
            .map(|(&t, a)| {
                let mut s = 0.0;
                for (dk, ak) in d.iter().zip(a) {
                    if *ak > 0.0 {
                        s += (t / (t + dk)).powf(p) * ak;
                    }
                }
                s / t.powf(self.m)
            })
            .collect()
    }

    /// Σ_y |w(x,y)^{1/2} − w(x',y)^{1/2}|² |θ_t(y)|² μ_y / t^m
    pub fn integrand_diff(&self, x: &[f64], x2: &[f64]) -> Vec<f64> {
        let p = self.m * self.lambda / 2.0;
        self.grid
            .iter()
            .zip(&self.amp)
            .map(|(&t, a)| {
                let mut s = 0.0;
                for (y, ak) in self.ys.iter().zip(a) {
                    let g1 = (t / (t + dist_inf(x, y))).powf(p);
                    let g2 = (t / (t + dist_inf(x2, y))).powf(p);
                    s += (g1 - g2).powi(2) * ak;
                }
                s / t.powf(self.m)
            })
            .collect()
    }
}

struct Plan {
    lo: f64,
    hi: f64,
    detect: bool,
    tail: bool,
    open_top: bool,
}

fn plan(
    params: &OperatorParams,
    mu: &AtomicMeasure,
    nu: &ComplexMeasure,
    xs: &[&Point],
    upper: Option<f64>,
) -> Plan {
    let (lo, detect) = if params.t_lo > 0.0 { (params.t_lo, false) } else { (mu.resolution() * 2f64.powi(-6), true) };
    let (hi, tail) = match upper {
        Some(u) => (u, false),
        None => match params.t_hi {
            THi::Fixed(t) => (t, params.tail == Tail::Analytic),
            THi::Auto => {
                let mut extra: Vec<&Point> = nu.points.iter().collect();
                extra.extend(xs.iter().copied());
                let diam = mu.diameter_with(&extra);
                (
                    (8.0 * diam).max(16.0 * lo).max(8.0 * mu.resolution()),
                    params.tail == Tail::Analytic,
                )
            }
        },
    };
    Plan { lo, hi, detect, tail, open_top: upper.is_none() }
}

fn finish(grid: &[f64], j: &[f64], plan: &Plan, bound_coef: f64, m: f64) -> GValue {
    let tail_bound = if plan.open_top { bound_coef * plan.hi.powf(-3.0 * m) / (3.0 * m) } else { 0.0 };
    if plan.detect && j.len() >= 3 && j[0] > 0.0 && j[1] > 0.0 && j[2] > 0.0 {
        let lt: Vec<f64> = grid[..3].iter().map(|t| t.ln()).collect();
        let lj: Vec<f64> = j[..3].iter().map(|v| v.ln()).collect();
        let mt = (lt[0] + lt[1] + lt[2]) / 3.0;
        let mj = (lj[0] + lj[1] + lj[2]) / 3.0;
        let num: f64 = (0..3).map(|k| (lt[k] - mt) * (lj[k] - mj)).sum();
        let den: f64 = (0..3).map(|k| (lt[k] - mt).powi(2)).sum();
        // slope of the per-dt integrand J/t
        if num / den - 1.0 <= -1.0 {
            return GValue { value: f64::INFINITY, diverged: true, quadrature_error: 0.0, tail_bound };
        }
    }
    let (simp, trap) = integrate_log(grid, j);
    let mut total = simp.max(0.0);
    let mut trap_total = trap.max(0.0);
    if plan.tail {
        let n = j.len() - 1;
        let h = (grid[n] / grid[n - 1]).ln();
        let est = if j[n] > 0.0 && j[n - 1] > j[n] {
            let s = (j[n - 1] / j[n]).ln() / h;
            j[n] / s
        } else {
            tail_bound
        };
        let est = est.min(tail_bound);
        total += est;
        trap_total += est;
    }
    let value = total.sqrt();
    let quadrature_error = if value > 0.0 { (trap_total.sqrt() - value).abs() / value } else { 0.0 };
    GValue { value, diverged: false, quadrature_error, tail_bound }
}

fn check(nu: &ComplexMeasure, mu: &AtomicMeasure, x: &Point) -> Result<()> {
    if x.dim() != mu.dim() {
        return Err(Error::Dim { expected: mu.dim(), got: x.dim() });
    }
    if nu.dim != mu.dim() {
        return Err(Error::Dim { expected: mu.dim(), got: nu.dim });
    }
    Ok(())
}

fn field(
    nu: &ComplexMeasure,
    mu: &AtomicMeasure,
    kernel: &KernelSpec,
    params: &OperatorParams,
    xs: &[Point],
    upper: Option<f64>,
) -> Result<Vec<GValue>> {
    params.validate()?;
    for x in xs {
        check(nu, mu, x)?;
    }
    if mu.is_empty() || nu.is_empty() || nu.weights.iter().all(|w| w.norm() == 0.0) {
        return Ok(vec![GValue::zero(); xs.len()]);
    }
    let refs: Vec<&Point> = xs.iter().collect();
    let p = plan(params, mu, nu, &refs, upper);
    if p.hi <= p.lo {
        return Ok(vec![GValue::zero(); xs.len()]);
    }
    let grid = log_grid(p.lo, p.hi, params.t_ratio);
    let engine = SquareEngine::new(kernel, nu, mu, params.lambda, grid);
    let coef = kernel.size_const.powi(2) * nu.total_variation().powi(2) * mu.mass();
    Ok(xs
        .par_iter()
        .map(|x| finish(&engine.grid, &engine.integrand(&x.0), &p, coef, kernel.m))
        .collect())
}

/// g*_λ(ν)(x) against μ.
pub fn gstar(nu: &ComplexMeasure, mu: &AtomicMeasure, kernel: &KernelSpec, params: &OperatorParams, x: &Point) -> Result<GValue> {
    Ok(field(nu, mu, kernel, params, std::slice::from_ref(x), None)?[0])
}

/// g*_λ(ν) at many points sharing one t-grid.
pub fn gstar_field(
    nu: &ComplexMeasure,
    mu: &AtomicMeasure,
    kernel: &KernelSpec,
    params: &OperatorParams,
    xs: &[Point],
) -> Result<Vec<GValue>> {
    field(nu, mu, kernel, params, xs, None)
}

/// Localized operator: t restricted to (t_lo', ℓ(Q)).
pub fn gstar_localized(
    nu: &ComplexMeasure,
    mu: &AtomicMeasure,
    kernel: &KernelSpec,
    params: &OperatorParams,
    q: &Cube,
    x: &Point,
) -> Result<GValue> {
    Ok(field(nu, mu, kernel, params, std::slice::from_ref(x), Some(q.side))?[0])
}

pub fn gstar_localized_field(
    nu: &ComplexMeasure,
    mu: &AtomicMeasure,
    kernel: &KernelSpec,
    params: &OperatorParams,
    q: &Cube,
    xs: &[Point],
) -> Result<Vec<GValue>> {
    field(nu, mu, kernel, params, xs, Some(q.side))
}

/// g*_{λ,μ,t₀}(f)(x), the truncation t ≥ t₀ = params.t_lo.
pub fn gstar_truncated(
    f: &SampledFunction,
    mu: &AtomicMeasure,
    kernel: &KernelSpec,
    params: &OperatorParams,
    x: &Point,
) -> Result<GValue> {
    Ok(gstar_truncated_field(f, mu, kernel, params, std::slice::from_ref(x))?[0])
}

pub fn gstar_truncated_field(
    f: &SampledFunction,
    mu: &AtomicMeasure,
    kernel: &KernelSpec,
    params: &OperatorParams,
    xs: &[Point],
) -> Result<Vec<GValue>> {
    if !(params.t_lo > 0.0) {
        return Err(Error::Invalid("truncated operator needs t0 > 0".into()));
    }
    let nu = ComplexMeasure::from_density(mu, f)?;
    field(&nu, mu, kernel, params, xs, None)
}

/// v_t(x) = Σ_z t^α/(t+|x−z|)^{m+α}|f(z)|μ_z
pub fn v_t(f: &SampledFunction, mu: &AtomicMeasure, kernel: &KernelSpec, x: &Point, t: f64) -> Result<f64> {
    f.check(mu)?;
    Ok(mu
        .atoms()
        .iter()
        .zip(&f.values)
        .map(|(a, v)| kernel.envelope(t, a.x.dist(x)) * v.norm() * a.w)
        .sum())
}

/// u_t(x) = (Σ_y (t/(t+|x−y|))^{mλ}|θ_t^μ f(y)|² μ_y / t^m)^{1/2}
pub fn u_t(
    f: &SampledFunction,
    mu: &AtomicMeasure,
    kernel: &KernelSpec,
    params: &OperatorParams,
    x: &Point,
    t: f64,
) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Invalid("t must be positive".into()));
    }
    let nu = ComplexMeasure::from_density(mu, f)?;
    let engine = SquareEngine::new(kernel, &nu, mu, params.lambda, vec![t]);
    Ok(engine.integrand(&x.0)[0].sqrt())
}

/// 𝒯(f)(x, x') for the cube B, with f cut off to the complement of the closed 2B.
pub fn t_compare(
    f: &SampledFunction,
    mu: &AtomicMeasure,
    kernel: &KernelSpec,
    params: &OperatorParams,
    b: &Cube,
    x: &Point,
    x2: &Point,
) -> Result<f64> {
    params.validate()?;
    f.check(mu)?;
    if !b.contains_closed(&x.0) || !b.contains_closed(&x2.0) {
        return Err(Error::Invalid("x and x' must lie in B".into()));
    }
    let b2 = b.scaled(2.0);
    let cut = SampledFunction::new(
        mu.atoms()
            .iter()
            .zip(&f.values)
            .map(|(a, v)| if b2.contains_closed(&a.x.0) { Complex64::new(0.0, 0.0) } else { *v })
            .collect(),
    );
    let nu = ComplexMeasure::from_density(mu, &cut)?;
    if x == x2 || nu.weights.iter().all(|w| w.norm() == 0.0) {
        return Ok(0.0);
    }
    let p = plan(params, mu, &nu, &[x, x2], None);
    let grid = log_grid(p.lo, p.hi.max(p.lo * 2.0), params.t_ratio);
    let engine = SquareEngine::new(kernel, &nu, mu, params.lambda, grid);
    let j = engine.integrand_diff(&x.0, &x2.0);
    let (s, _) = integrate_log(engine.grid(), &j);
    Ok(s.max(0.0).sqrt())
}
