//! Atomic measures, sampled functions and the elementary measure-theoretic
//! operations on them: norms, distribution functions, the centered maximal
//! function, doubling and small-boundary predicates.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dist_inf, Cube, Point};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: Point,
    pub w: f64,
}

/// Finite positive measure made of point masses.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomicMeasure {
    dim: usize,
    atoms: Vec<Atom>,
    resolution: f64,
}

/// Resolution used when a measure has fewer than two atoms.
pub const DEFAULT_RESOLUTION: f64 = 1.0;

impl AtomicMeasure {
    pub fn new(dim: usize, atoms: Vec<Atom>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid("dimension must be >= 1".into()));
        }
        for a in &atoms {
            if a.x.dim() != dim {
                return Err(Error::Dim { expected: dim, got: a.x.dim() });
            }
            if a.x.0.iter().any(|c| !c.is_finite()) {
                return Err(Error::Invalid("non-finite atom coordinate".into()));
            }
            if !(a.w >= 0.0) || !a.w.is_finite() {
                return Err(Error::Invalid(format!("atom weight must be finite and >= 0, got {}", a.w)));
            }
        }
        let resolution = min_separation(&atoms).unwrap_or(DEFAULT_RESOLUTION);
        if resolution == 0.0 {
            return Err(Error::Invalid("coincident atoms".into()));
        }
        Ok(AtomicMeasure { dim, atoms, resolution })
    }

    pub fn from_points(points: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::Binding { expected: points.len(), got: weights.len() });
        }
        let dim = points.first().map(|p| p.dim()).unwrap_or(1);
        let atoms = points.into_iter().zip(weights).map(|(x, w)| Atom { x, w }).collect();
        Self::new(dim, atoms)
    }

    pub fn empty(dim: usize) -> Self {
        AtomicMeasure { dim, atoms: Vec::new(), resolution: DEFAULT_RESOLUTION }
    }

    /// Uniform grid `{i/k}` on `[0,1)^n` per axis, total mass `mass`.
    pub fn uniform_grid(dim: usize, k: usize, mass: f64) -> Self {
        let total = k.pow(dim as u32);
        let w = mass / total as f64;
        let mut atoms = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let mut c = Vec::with_capacity(dim);
            for _ in 0..dim {
                c.push((rem % k) as f64 / k as f64);
                rem /= k;
            }
            c.reverse();
            atoms.push(Atom { x: Point(c), w });
        }
        Self::new(dim, atoms).expect("uniform grid is valid")
    }

    /// Override the resolution with a smaller positive value.
    pub fn with_resolution(mut self, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::Invalid("resolution must be positive".into()));
        }
        if self.atoms.len() >= 2 && h > self.resolution {
            return Err(Error::Invalid(format!(
                "resolution {h} exceeds the minimum atom separation {}",
                self.resolution
            )));
        }
        self.resolution = h;
        Ok(self)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    #[inline]
    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.w).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        let atoms = self.atoms.iter().map(|a| Atom { x: a.x.clone(), w: a.w * c }).collect();
        AtomicMeasure { dim: self.dim, atoms, resolution: self.resolution }
    }

    /// Restriction to the atoms selected by `keep`.
    pub fn restrict(&self, keep: impl Fn(usize, &Atom) -> bool) -> Self {
        let atoms = self
            .atoms
            .iter()
            .enumerate()
            .map(|(i, a)| Atom { x: a.x.clone(), w: if keep(i, a) { a.w } else { 0.0 } })
            .collect();
        AtomicMeasure { dim: self.dim, atoms, resolution: self.resolution }
    }

    /// Mass of the closed cube.
    pub fn cube_mass(&self, q: &Cube) -> f64 {
        let r = q.side / 2.0;
        self.atoms.iter().filter(|a| dist_inf(&a.x.0, &q.center.0) <= r).map(|a| a.w).sum()
    }

    /// Mass of the half-open cube.
    pub fn cube_mass_half_open(&self, q: &Cube) -> f64 {
        self.atoms.iter().filter(|a| q.contains_half_open(&a.x.0)).map(|a| a.w).sum()
    }

    pub fn diameter_with(&self, extra: &[&Point]) -> f64 {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for p in self.atoms.iter().map(|a| &a.x).chain(extra.iter().copied()) {
            for i in 0..self.dim {
                lo[i] = lo[i].min(p.0[i]);
                hi[i] = hi[i].max(p.0[i]);
            }
        }
        (0..self.dim).map(|i| hi[i] - lo[i]).fold(0.0, f64::max)
    }
}

fn min_separation(atoms: &[Atom]) -> Option<f64> {
    if atoms.len() < 2 {
        return None;
    }
    // sort by first coordinate and sweep
    let mut idx: Vec<usize> = (0..atoms.len()).collect();
    idx.sort_by(|&a, &b| atoms[a].x.0[0].partial_cmp(&atoms[b].x.0[0]).unwrap());
    let mut best = f64::INFINITY;
    for i in 0..idx.len() {
        for j in (i + 1)..idx.len() {
            let (a, b) = (&atoms[idx[i]].x, &atoms[idx[j]].x);
            if b.0[0] - a.0[0] >= best {
                break;
            }
            best = best.min(a.dist(b));
        }
    }
    Some(best)
}

/// Finite complex measure as atoms with complex weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMeasure {
    pub dim: usize,
    pub points: Vec<Point>,
    pub weights: Vec<Complex64>,
}

impl ComplexMeasure {
    pub fn new(dim: usize, points: Vec<Point>, weights: Vec<Complex64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::Binding { expected: points.len(), got: weights.len() });
        }
        for p in &points {
            if p.dim() != dim {
                return Err(Error::Dim { expected: dim, got: p.dim() });
            }
        }
        if weights.iter().any(|w| !w.re.is_finite() || !w.im.is_finite()) {
            return Err(Error::Invalid("non-finite complex weight".into()));
        }
        Ok(ComplexMeasure { dim, points, weights })
    }

    pub fn zero(dim: usize) -> Self {
        ComplexMeasure { dim, points: Vec::new(), weights: Vec::new() }
    }

    /// dν = f dμ
    pub fn from_density(mu: &AtomicMeasure, f: &SampledFunction) -> Result<Self> {
        f.check(mu)?;
        let points = mu.atoms.iter().map(|a| a.x.clone()).collect();
        let weights = mu.atoms.iter().zip(&f.values).map(|(a, v)| v * a.w).collect();
        Ok(ComplexMeasure { dim: mu.dim, points, weights })
    }

    pub fn from_measure(mu: &AtomicMeasure) -> Self {
        ComplexMeasure {
            dim: mu.dim,
            points: mu.atoms.iter().map(|a| a.x.clone()).collect(),
            weights: mu.atoms.iter().map(|a| Complex64::new(a.w, 0.0)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_variation(&self) -> f64 {
        self.weights.iter().map(|w| w.norm()).sum()
    }

    pub fn total(&self) -> Complex64 {
        self.weights.iter().sum()
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        ComplexMeasure {
            dim: self.dim,
            points: self.points.clone(),
            weights: self.weights.iter().map(|w| w * c).collect(),
        }
    }

    /// |ν| as an atomic measure (coincident atoms must not occur).
    pub fn variation(&self) -> Result<AtomicMeasure> {
        AtomicMeasure::from_points(self.points.clone(), self.weights.iter().map(|w| w.norm()).collect())
            .map(|m| if self.points.is_empty() { AtomicMeasure::empty(self.dim) } else { m })
    }

    /// The density b = dν/d|ν| with |b| = 1 (b = 1 on zero atoms).
    pub fn phase(&self) -> SampledFunction {
        SampledFunction::new(
            self.weights
                .iter()
                .map(|w| if w.norm() > 0.0 { w / w.norm() } else { Complex64::new(1.0, 0.0) })
                .collect(),
        )
    }

    pub fn variation_in_closed(&self, q: &Cube) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .filter(|(p, _)| q.contains_closed(&p.0))
            .map(|(_, w)| w.norm())
            .sum()
    }
}

/// Values of a function at the atoms of a measure, aligned by index.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledFunction {
    pub values: Vec<Complex64>,
}

impl SampledFunction {
    pub fn new(values: Vec<Complex64>) -> Self {
        SampledFunction { values }
    }

    pub fn real(values: &[f64]) -> Self {
        SampledFunction { values: values.iter().map(|v| Complex64::new(*v, 0.0)).collect() }
    }

    pub fn constant(len: usize, c: Complex64) -> Self {
        SampledFunction { values: vec![c; len] }
    }

    pub fn ones(len: usize) -> Self {
        Self::constant(len, Complex64::new(1.0, 0.0))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check(&self, mu: &AtomicMeasure) -> Result<()> {
        if self.values.len() != mu.len() {
            return Err(Error::Binding { expected: mu.len(), got: self.values.len() });
        }
        Ok(())
    }

    pub fn abs(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }
}

pub fn ball_mass(mu: &AtomicMeasure, x: &Point, r: f64) -> f64 {
    mu.atoms.iter().filter(|a| a.x.dist(x) <= r).map(|a| a.w).sum()
}

/// sup of μ(B(x,r))/r^m over atoms x and a geometric r-grid in [r_lo, r_hi].
pub fn power_bound_constant(mu: &AtomicMeasure, m: f64, r_lo: f64, r_hi: f64, sample_count: usize) -> Result<f64> {
    if r_lo < mu.resolution() {
        return Err(Error::BelowResolution { r: r_lo, h: mu.resolution() });
    }
    if !(r_hi > r_lo) {
        return Err(Error::Invalid("r_hi must exceed r_lo".into()));
    }
    let n = sample_count.max(2);
    let ratio = (r_hi / r_lo).powf(1.0 / (n - 1) as f64);
    let mut best = 0.0f64;
    for a in &mu.atoms {
        let mut r = r_lo;
        for k in 0..n {
            if k == n - 1 {
                r = r_hi;
            }
            best = best.max(ball_mass(mu, &a.x, r) / r.powf(m));
            r *= ratio;
        }
    }
    Ok(best)
}

pub fn lp_norm(f: &SampledFunction, mu: &AtomicMeasure, p: f64) -> Result<f64> {
    f.check(mu)?;
    if !(p >= 1.0) {
        return Err(Error::Invalid(format!("p must be in [1, inf], got {p}")));
    }
    if p.is_infinite() {
        return Ok(f
            .values
            .iter()
            .zip(&mu.atoms)
            .filter(|(_, a)| a.w > 0.0)
            .map(|(v, _)| v.norm())
            .fold(0.0, f64::max));
    }
    let s: f64 = f.values.iter().zip(&mu.atoms).map(|(v, a)| v.norm().powf(p) * a.w).sum();
    Ok(s.powf(1.0 / p))
}

/// Superlevel masses μ{|f| > ξ} for each ξ on a strictly increasing grid.
pub fn distribution(f: &SampledFunction, mu: &AtomicMeasure, xi_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    f.check(mu)?;
    if xi_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Invalid("xi grid must be strictly increasing".into()));
    }
    let abs = f.abs();
    Ok(xi_grid
        .iter()
        .map(|&xi| (xi, abs.iter().zip(&mu.atoms).filter(|(v, _)| **v > xi).map(|(_, a)| a.w).sum()))
        .collect())
}

/// Centered sup-norm maximal function evaluated exactly over the finite radius set.
pub fn maximal_function(f: &SampledFunction, mu: &AtomicMeasure, x: &Point) -> Result<f64> {
    f.check(mu)?;
    let mut d: Vec<(f64, f64, f64)> = mu
        .atoms
        .iter()
        .zip(&f.values)
        .map(|(a, v)| (a.x.dist(x), a.w, v.norm() * a.w))
        .collect();
    d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let h = mu.resolution();
    let mut best = 0.0f64;
    let (mut m, mut s) = (0.0, 0.0);
    let mut i = 0;
    let mut h_done = false;
    while i < d.len() {
        let r = d[i].0;
        if !h_done && h < r {
            if m > 0.0 {
                best = best.max(s / m);
            }
            h_done = true;
        }
        while i < d.len() && d[i].0 == r {
            m += d[i].1;
            s += d[i].2;
            i += 1;
        }
        if m > 0.0 {
            best = best.max(s / m);
        }
    }
    Ok(best)
}

pub fn doubling_check(mu: &AtomicMeasure, q: &Cube, a: f64, b: f64) -> bool {
    mu.cube_mass(&q.scaled(a)) <= b * mu.cube_mass(q)
}

/// Dyadic ξ grid {2^{-j}} down to the resolution scale of μ relative to ℓ(Q).
pub fn dyadic_xi_grid(mu: &AtomicMeasure, q: &Cube) -> Vec<f64> {
    let mut out = vec![1.0];
    let mut xi = 0.5;
    while xi * q.side >= mu.resolution() && out.len() < 60 {
        out.push(xi);
        xi /= 2.0;
    }
    out
}

pub fn small_boundary_constant(mu: &AtomicMeasure, q: &Cube, xi_grid: &[f64]) -> Result<f64> {
    let q2 = q.scaled(2.0);
    let m2 = mu.cube_mass(&q2);
    if !(m2 > 0.0) {
        return Err(Error::Undefined("mu(2Q) = 0, small-boundary constant undefined".into()));
    }
    let shell: Vec<(f64, f64)> = mu
        .atoms
        .iter()
        .filter(|a| q2.contains_closed(&a.x.0))
        .map(|a| (q.dist_to_boundary(&a.x.0), a.w))
        .collect();
    let mut best = 0.0f64;
    for &xi in xi_grid {
        if !(xi > 0.0 && xi <= 1.0) {
            return Err(Error::Invalid(format!("xi must lie in (0,1], got {xi}")));
        }
        let band = xi * q.side;
        let s: f64 = shell.iter().filter(|(d, _)| *d <= band).map(|(_, w)| w).sum();
        best = best.max(s / (xi * m2));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn ball_mass_examples() {
        let mu = AtomicMeasure::uniform_grid(1, 8, 1.0);
        assert!((ball_mass(&mu, &Point::scalar(0.5), 0.25) - 5.0 / 8.0).abs() < 1e-15);
        assert!((ball_mass(&mu, &Point::scalar(0.5), 10.0) - 1.0).abs() < 1e-15);
        assert_eq!(ball_mass(&AtomicMeasure::empty(1), &Point::scalar(0.0), 1.0), 0.0);
    }

    #[test]
    fn power_bound_examples() {
        let k = 32;
        let mu = AtomicMeasure::uniform_grid(1, k, 1.0);
        let h = mu.resolution();
        let c = power_bound_constant(&mu, 1.0, h, 1.0, 20).unwrap();
        assert!((1.0..=4.0).contains(&c), "{c}");
        let c2 = power_bound_constant(&mu.scaled(2.0), 1.0, h, 1.0, 20).unwrap();
        assert_eq!(c2, 2.0 * c);
        assert!(power_bound_constant(&mu, 1.0, h / 2.0, 1.0, 20).is_err());

        let single = AtomicMeasure::from_points(vec![Point::scalar(0.0)], vec![3.0])
            .unwrap()
            .with_resolution(0.5)
            .unwrap();
        let v = power_bound_constant(&single, 2.0, 0.5, 4.0, 10).unwrap();
        assert!((v - 3.0 / 0.25).abs() < 1e-12);
    }

    #[test]
    fn lp_norm_examples() {
        let mu = AtomicMeasure::uniform_grid(1, 4, 1.0);
        assert!((lp_norm(&SampledFunction::ones(4), &mu, 2.0).unwrap() - 1.0).abs() < 1e-15);
        let two = AtomicMeasure::from_points(vec![Point::scalar(0.0), Point::scalar(1.0)], vec![1.0, 1.0]).unwrap();
        assert!((lp_norm(&SampledFunction::real(&[3.0, 4.0]), &two, 2.0).unwrap() - 5.0).abs() < 1e-14);
        assert_eq!(lp_norm(&SampledFunction::real(&[-2.0, 1.0]), &two, f64::INFINITY).unwrap(), 2.0);
        assert!(lp_norm(&SampledFunction::real(&[1.0]), &two, 2.0).is_err());
    }

    #[test]
    fn distribution_examples() {
        let two = AtomicMeasure::from_points(vec![Point::scalar(0.0), Point::scalar(1.0)], vec![1.0, 2.0]).unwrap();
        let f = SampledFunction::real(&[1.0, 3.0]);
        assert_eq!(distribution(&f, &two, &[2.0]).unwrap(), vec![(2.0, 2.0)]);
        assert!(distribution(&f, &two, &[]).unwrap().is_empty());
        let g = SampledFunction::real(&[5.0, 5.0]);
        let d = distribution(&g, &two, &[4.0, 5.0]).unwrap();
        assert_eq!(d, vec![(4.0, 3.0), (5.0, 0.0)]);
    }

    #[test]
    fn maximal_function_examples() {
        let two = AtomicMeasure::from_points(vec![Point::scalar(0.0), Point::scalar(1.0)], vec![1.0, 1.0]).unwrap();
        let f = SampledFunction::real(&[0.0, 4.0]);
        assert!((maximal_function(&f, &two, &Point::scalar(0.0)).unwrap() - 2.0).abs() < 1e-15);
        let single = AtomicMeasure::from_points(vec![Point::scalar(0.3)], vec![2.0]).unwrap();
        let v = maximal_function(&SampledFunction::new(vec![c(-7.0)]), &single, &Point::scalar(0.3)).unwrap();
        assert_eq!(v, 7.0);
        let mu = AtomicMeasure::uniform_grid(1, 16, 1.0);
        let k = SampledFunction::constant(16, c(3.0));
        for a in mu.atoms() {
            assert!((maximal_function(&k, &mu, &a.x).unwrap() - 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn doubling_examples() {
        let mu = AtomicMeasure::uniform_grid(1, 8, 1.0);
        let q = Cube::new(Point::scalar(0.5), 0.5).unwrap();
        assert!((mu.cube_mass(&q) - 5.0 / 8.0).abs() < 1e-15);
        assert!(doubling_check(&mu, &q, 2.0, 2.0));
        let far = Cube::new(Point::scalar(0.5 + 1.0 / 16.0), 1.0 / 32.0).unwrap();
        assert!(!doubling_check(&mu, &far, 4.0, 100.0));
        let single = AtomicMeasure::from_points(vec![Point::scalar(0.0)], vec![1.0]).unwrap();
        assert!(doubling_check(&single, &Cube::new(Point::scalar(0.0), 1.0).unwrap(), 5.0, 1.0));
    }

    #[test]
    fn small_boundary_examples() {
        let mu = AtomicMeasure::uniform_grid(1, 8, 1.0);
        let q = Cube::new(Point::scalar(0.5), 0.5).unwrap();
        // shell within 0.125 of {0.25, 0.75} inside [0,1]: atoms .125 .25 .375 .625 .75 .875
        let v = small_boundary_constant(&mu, &q, &[0.25]).unwrap();
        assert!((v - (6.0 / 8.0) / 0.25).abs() < 1e-12);
        let one = small_boundary_constant(&mu, &q, &[1.0]).unwrap();
        assert!(one <= 1.0 + 1e-15);
        let empty = Cube::new(Point::scalar(10.0), 1.0).unwrap();
        assert!(small_boundary_constant(&mu, &empty, &[0.5]).is_err());
    }
}
