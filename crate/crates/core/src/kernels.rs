//! Standard kernels s_t(x, y), numerical verification of their size and
//! Hölder bounds, and the elementary integral θ_t.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{dist_inf, Point};
use crate::measure::{ComplexMeasure, SampledFunction};

pub type KernelFn = Arc<dyn Fn(f64, &[f64], &[f64]) -> Complex64 + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Model,
    Poisson { c: f64 },
    Custom(KernelFn),
}

#[derive(Clone)]
pub struct KernelSpec {
    pub name: String,
    pub m: f64,
    pub alpha: f64,
    pub size_const: f64,
    pub holder_const: f64,
    kind: Kind,
}

impl fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelSpec")
            .field("name", &self.name)
            .field("m", &self.m)
            .field("alpha", &self.alpha)
            .field("size_const", &self.size_const)
            .field("holder_const", &self.holder_const)
            .finish()
    }
}

impl KernelSpec {
    /// t^α / (t + |x−y|)^{m+α}
    pub fn model(m: f64, alpha: f64) -> Result<Self> {
        if !(m > 0.0 && alpha > 0.0) {
            return Err(Error::Invalid("model kernel needs m > 0 and alpha > 0".into()));
        }
        Ok(KernelSpec {
            name: "model".into(),
            m,
            alpha,
            size_const: 1.0,
            // mean value bound on |y−y'| < t/2, valid for alpha <= 1
            holder_const: (m + alpha) * 2f64.powf(m + 2.0 * alpha),
            kind: Kind::Model,
        })
    }

    /// Classical Poisson kernel c_n t/(t² + |x−y|₂²)^{(n+1)/2}, with m = n, α = 1.
    pub fn poisson(dim: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Invalid("poisson kernel supported for n in 1..=3".into()));
        }
        let n = dim as f64;
        let c = gamma_half_int(dim + 1) / PI.powf((n + 1.0) / 2.0);
        let kappa = 1.0 - n.sqrt() / 2.0;
        Ok(KernelSpec {
            name: "poisson".into(),
            m: n,
            alpha: 1.0,
            size_const: c * 2f64.powf((n + 1.0) / 2.0),
            holder_const: c * (n + 1.0) * n.sqrt() * 2f64.powf((n + 1.0) / 2.0) * kappa.powf(-(n + 1.0)),
            kind: Kind::Poisson { c },
        })
    }

    pub fn custom(name: &str, m: f64, alpha: f64, size_const: f64, holder_const: f64, f: KernelFn) -> Self {
        KernelSpec { name: name.into(), m, alpha, size_const, holder_const, kind: Kind::Custom(f) }
    }

    /// Built-in kernel by name.
    pub fn by_name(name: &str, m: f64, alpha: f64, dim: usize) -> Result<Self> {
        match name {
            "model" => Self::model(m, alpha),
            "poisson" => {
                let k = Self::poisson(dim)?;
                if (m - k.m).abs() > 1e-12 || (alpha - 1.0).abs() > 1e-12 {
                    return Err(Error::Invalid(format!("poisson kernel in dimension {dim} has m = {dim}, alpha = 1")));
                }
                Ok(k)
            }
            other => Err(Error::Invalid(format!("unknown kernel '{other}'"))),
        }
    }

    /// Same kernel multiplied by a constant (declared constants scale too unless `keep_consts`).
    pub fn scaled(&self, c: f64, keep_consts: bool) -> Self {
        let inner = self.clone();
        let f: KernelFn = Arc::new(move |t, x, y| inner.eval_unchecked(t, x, y) * c);
        let k = if keep_consts { 1.0 } else { c.abs() };
        KernelSpec {
            name: format!("{}*{}", self.name, c),
            m: self.m,
            alpha: self.alpha,
            size_const: self.size_const * k,
            holder_const: self.holder_const * k,
            kind: Kind::Custom(f),
        }
    }

    pub fn is_model(&self) -> bool {
        matches!(self.kind, Kind::Model)
    }

    #[inline]
    pub fn eval_unchecked(&self, t: f64, x: &[f64], y: &[f64]) -> Complex64 {
        match &self.kind {
            Kind::Model => {
                let d = dist_inf(x, y);
                Complex64::new(t.powf(self.alpha) / (t + d).powf(self.m + self.alpha), 0.0)
            }
            Kind::Poisson { c } => {
                let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                Complex64::new(c * t / (t * t + r2).powf((self.m + 1.0) / 2.0), 0.0)
            }
            Kind::Custom(f) => f(t, x, y),
        }
    }

    pub fn eval(&self, t: f64, x: &Point, y: &Point) -> Result<Complex64> {
        if !(t > 0.0) {
            return Err(Error::Invalid(format!("kernel scale t must be positive, got {t}")));
        }
        Ok(self.eval_unchecked(t, &x.0, &y.0))
    }

    /// The majorant t^α/(t+d)^{m+α}.
    #[inline]
    pub fn envelope(&self, t: f64, d: f64) -> f64 {
        t.powf(self.alpha) / (t + d).powf(self.m + self.alpha)
    }

    /// Whether α ≤ m(λ−2)/2, the bound used at lemma level.
    pub fn lemma_compatible(&self, lambda: f64) -> bool {
        self.alpha <= self.m * (lambda - 2.0) / 2.0
    }

    /// Whether α ≤ m(λ−2), the bound stated for the main theorems.
    pub fn theorem_compatible(&self, lambda: f64) -> bool {
        self.alpha <= self.m * (lambda - 2.0)
    }
}

// Γ(k/2) for positive integer k
fn gamma_half_int(k: usize) -> f64 {
    if k == 1 {
        PI.sqrt()
    } else if k == 2 {
        1.0
    } else {
        (k as f64 / 2.0 - 1.0) * gamma_half_int(k - 2)
    }
}

pub fn eval_kernel(spec: &KernelSpec, t: f64, x: &Point, y: &Point) -> Result<Complex64> {
    spec.eval(t, x, y)
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub max_ratio: f64,
    pub declared: f64,
    pub pass: bool,
    pub samples: usize,
    pub rejected: usize,
}

#[derive(Clone, Debug)]
pub struct Triple {
    pub t: f64,
    pub x: Point,
    pub y: Point,
}

#[derive(Clone, Debug)]
pub struct Quad {
    pub t: f64,
    pub x: Point,
    pub y: Point,
    pub y2: Point,
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

fn random_point<R: Rng>(rng: &mut R, dim: usize) -> Point {
    let s = log_uniform(rng, 1e-2, 1e2);
    Point((0..dim).map(|_| rng.gen_range(-1.0..1.0) * s).collect())
}

pub fn random_triples<R: Rng>(rng: &mut R, dim: usize, count: usize) -> Vec<Triple> {
    (0..count)
        .map(|_| {
            let t = log_uniform(rng, 1e-2, 1e2);
            let x = random_point(rng, dim);
            let y = random_point(rng, dim);
            Triple { t, x, y }
        })
        .collect()
}

/// Quadruples with |y − y'| < t/2 on increments spread over six decades.
pub fn random_quads<R: Rng>(rng: &mut R, dim: usize, count: usize) -> Vec<Quad> {
    (0..count)
        .map(|_| {
            let t = log_uniform(rng, 1e-2, 1e2);
            let x = random_point(rng, dim);
            let y = random_point(rng, dim);
            let scale = t / 2.0 * log_uniform(rng, 1e-6, 1.0);
            let y2 = Point(y.0.iter().map(|c| c + rng.gen_range(-1.0..1.0) * scale).collect());
            Quad { t, x, y, y2 }
        })
        .collect()
}

pub fn verify_size(spec: &KernelSpec, samples: &[Triple]) -> VerifyReport {
    let mut max_ratio = 0.0f64;
    for s in samples {
        let v = spec.eval_unchecked(s.t, &s.x.0, &s.y.0).norm();
        let d = s.x.dist(&s.y);
        max_ratio = max_ratio.max(v * (s.t + d).powf(spec.m + spec.alpha) / s.t.powf(spec.alpha));
    }
    VerifyReport {
        max_ratio,
        declared: spec.size_const,
        pass: max_ratio <= spec.size_const * (1.0 + 1e-9),
        samples: samples.len(),
        rejected: 0,
    }
}

pub fn verify_holder(spec: &KernelSpec, samples: &[Quad]) -> VerifyReport {
    let mut max_ratio = 0.0f64;
    let mut rejected = 0;
    for s in samples {
        let e = s.y.dist(&s.y2);
        if !(e < s.t / 2.0) {
            rejected += 1;
            continue;
        }
        if e == 0.0 {
            continue;
        }
        let a = spec.eval_unchecked(s.t, &s.x.0, &s.y.0);
        let b = spec.eval_unchecked(s.t, &s.x.0, &s.y2.0);
        let d = s.x.dist(&s.y);
        let r = (a - b).norm() * (s.t + d).powf(spec.m + spec.alpha) / e.powf(spec.alpha);
        max_ratio = max_ratio.max(r);
    }
    VerifyReport {
        max_ratio,
        declared: spec.holder_const,
        pass: max_ratio <= spec.holder_const * (1.0 + 1e-9),
        samples: samples.len(),
        rejected,
    }
}

/// θ_t ν(y) = Σ_z s_t(y, z) f(z) ν_z.
pub fn theta(spec: &KernelSpec, nu: &ComplexMeasure, f: Option<&SampledFunction>, t: f64, y: &Point) -> Result<Complex64> {
    if !(t > 0.0) {
        return Err(Error::Invalid(format!("t must be positive, got {t}")));
    }
    if let Some(f) = f {
        if f.len() != nu.len() {
            return Err(Error::Binding { expected: nu.len(), got: f.len() });
        }
    }
    let mut s = Complex64::new(0.0, 0.0);
    for (i, (z, w)) in nu.points.iter().zip(&nu.weights).enumerate() {
        let fv = f.map(|f| f.values[i]).unwrap_or(Complex64::new(1.0, 0.0));
        s += spec.eval_unchecked(t, &y.0, &z.0) * fv * w;
    }
    Ok(s)
}
