//! RBMO oscillation functional, nested-ball pair quotients, chains of balls
//! between nested balls, and the far-field stability check for g*.
//!
//! Balls are sup-norm balls and closed throughout.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Cube, Point};
use crate::glstar::{gstar_truncated_field, OperatorParams};
use crate::kernels::KernelSpec;
use crate::measure::{AtomicMeasure, SampledFunction};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ball {
    pub center: Point,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::Invalid(format!("ball radius must be positive, got {radius}")));
        }
        Ok(Ball { center, radius })
    }

    pub fn dilate(&self, k: f64) -> Ball {
        Ball { center: self.center.clone(), radius: self.radius * k }
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.center.dist(p) <= self.radius
    }

    /// B ⊂ B' for closed sup-norm balls.
    pub fn inside(&self, other: &Ball) -> bool {
        self.center.dist(&other.center) + self.radius <= other.radius * (1.0 + 1e-12)
    }

    pub fn cube(&self) -> Cube {
        Cube::ball(&self.center, self.radius)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BallFamily {
    pub balls: Vec<Ball>,
    pub kappa: f64,
}

/// The constant f_B the oscillation is measured against.
pub enum CenterChoice<'a> {
    Median,
    /// g*(f·1_{(κB)ᶜ}) at the center of B
    FarField { f: &'a SampledFunction, kernel: &'a KernelSpec, params: &'a OperatorParams },
}

/// Lower weighted median of (value, weight) pairs; None when the weight is zero.
pub fn weighted_median(pairs: &mut [(f64, f64)]) -> Option<f64> {
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    if !(total > 0.0) {
        return None;
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut acc = 0.0;
    for (v, w) in pairs.iter() {
        acc += w;
        if acc >= total / 2.0 {
            return Some(*v);
        }
    }
    pairs.last().map(|p| p.0)
}

fn check_values(g: &[f64], mu: &AtomicMeasure) -> Result<()> {
    if g.len() != mu.len() {
        return Err(Error::Binding { expected: mu.len(), got: g.len() });
    }
    Ok(())
}

fn truncation(params: &OperatorParams, mu: &AtomicMeasure) -> OperatorParams {
    if params.t_lo > 0.0 {
        *params
    } else {
        params.with_t_lo(mu.resolution())
    }
}

/// g*(f·1_{(κB)ᶜ}) at the points `xs`; `t_lo = 0` falls back to the atom resolution.
pub fn far_field_values(
    f: &SampledFunction,
    mu: &AtomicMeasure,
    kernel: &KernelSpec,
    params: &OperatorParams,
    b: &Ball,
    kappa: f64,
    xs: &[Point],
) -> Result<Vec<Option<f64>>> {
    f.check(mu)?;
    let outer = b.dilate(kappa);
    let cut = SampledFunction::new(
        mu.atoms()
            .iter()
            .zip(&f.values)
            .map(|(a, v)| if outer.contains(&a.x) { Default::default() } else { *v })
            .collect(),
    );
    let p = truncation(params, mu);
    Ok(gstar_truncated_field(&cut, mu, kernel, &p, xs)?
        .into_iter()
        .map(|g| if g.diverged { None } else { Some(g.value) })
        .collect())
}

/// The constant f_B for `choice`.
pub fn center_value(g: &[f64], mu: &AtomicMeasure, b: &Ball, kappa: f64, choice: &CenterChoice) -> Result<f64> {
    check_values(g, mu)?;
    match choice {
        CenterChoice::Median => {
            let mut pairs: Vec<(f64, f64)> =
                mu.atoms().iter().zip(g).filter(|(a, _)| b.contains(&a.x)).map(|(a, v)| (*v, a.w)).collect();
            Ok(weighted_median(&mut pairs).unwrap_or(0.0))
        }
        CenterChoice::FarField { f, kernel, params } => {
            far_field_values(f, mu, kernel, params, b, kappa, std::slice::from_ref(&b.center))?[0]
                .ok_or_else(|| Error::Undefined("far-field value diverged".into()))
        }
    }
}

/// μ(κB)⁻¹ ∫_B |g − f_B| dμ, returned with f_B.
pub fn rbmo_osc(g: &[f64], mu: &AtomicMeasure, b: &Ball, kappa: f64, choice: &CenterChoice) -> Result<(f64, f64)> {
    check_values(g, mu)?;
    let outer = b.dilate(kappa);
    let denom: f64 = mu.atoms().iter().filter(|a| outer.contains(&a.x)).map(|a| a.w).sum();
    if !(denom > 0.0) {
        return Err(Error::Undefined("μ(κB) = 0".into()));
    }
    let fb = center_value(g, mu, b, kappa, choice)?;
    let num: f64 = mu.atoms().iter().zip(g).filter(|(a, _)| b.contains(&a.x)).map(|(a, v)| (v - fb).abs() * a.w).sum();
    Ok((num / denom, fb))
}

/// 1 + Σ_{x ∈ κB'∖B} |x − c_B|^{−m} μ_x
pub fn pair_denominator(mu: &AtomicMeasure, b: &Ball, bp: &Ball, kappa: f64, m: f64) -> Result<f64> {
    if !b.inside(bp) {
        return Err(Error::Invalid("B must lie inside B'".into()));
    }
    let outer = bp.dilate(kappa);
    Ok(1.0
        + mu.atoms()
            .iter()
            .filter(|a| outer.contains(&a.x) && !b.contains(&a.x))
            .map(|a| a.w * a.x.dist(&b.center).powf(-m))
            .sum::<f64>())
}

/// |f_B − f_{B'}| / (1 + Σ_{κB'∖B} |x − c_B|^{−m} μ_x)
pub fn rbmo_pair(mu: &AtomicMeasure, b: &Ball, bp: &Ball, kappa: f64, m: f64, f_b: f64, f_bp: f64) -> Result<f64> {
    Ok((f_b - f_bp).abs() / pair_denominator(mu, b, bp, kappa, m)?)
}

/// Balls B = B₀ ⊂ B₁ ⊂ … ⊂ B_K = B' with radii min(2ʲr, r') and centers
/// sliding linearly from c_B to c_{B'}.
pub fn chain_balls(b: &Ball, bp: &Ball) -> Result<Vec<Ball>> {
    if !b.inside(bp) {
        return Err(Error::Invalid("B must lie inside B'".into()));
    }
    let (r, rp) = (b.radius, bp.radius);
    if rp <= r * (1.0 + 1e-12) {
        return Ok(vec![b.clone()]);
    }
    let k = ((rp / r).log2() - 1e-9).ceil().max(1.0) as usize;
    let mut out = Vec::with_capacity(k + 1);
    for j in 0..=k {
        let rj = if j == k { rp } else { (r * 2f64.powi(j as i32)).min(rp) };
        let s = (rj - r) / (rp - r);
        let c = Point(b.center.0.iter().zip(&bp.center.0).map(|(x, y)| x + s * (y - x)).collect());
        out.push(Ball { center: c, radius: rj });
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainReport {
    pub len: usize,
    pub nested: bool,
    pub doubling: bool,
    /// max over j and probes z ∈ κB_{j+1}∖κB_j of max(|z−x_B|/r_j, r_j/|z−x_B|)
    pub annulus_constant: f64,
    /// max over j, probes z ∉ κB_j and x ∈ B_j (corners and center) of the ratio of |z−x| to |z−x_B|, either way up
    pub far_constant: f64,
    pub annulus_hits: usize,
}

fn corners(b: &Ball) -> Vec<Point> {
    let d = b.center.dim();
    let mut out = vec![b.center.clone()];
    for mask in 0..(1usize << d) {
        out.push(Point(
            (0..d).map(|i| b.center.0[i] + if mask >> i & 1 == 1 { b.radius } else { -b.radius }).collect(),
        ));
    }
    out
}

pub fn validate_chain(chain: &[Ball], kappa: f64, probes: &[Point]) -> ChainReport {
    let xb = &chain[0].center;
    let mut nested = true;
    let mut doubling = true;
    let mut annulus_constant = 0.0f64;
    let mut far_constant = 1.0f64;
    let mut annulus_hits = 0;
    for j in 0..chain.len() {
        let bj = &chain[j];
        let kj = bj.dilate(kappa);
        let pts = corners(bj);
        if j + 1 < chain.len() {
            let next = &chain[j + 1];
            nested &= bj.inside(next);
            doubling &= next.radius <= 2.0 * bj.radius * (1.0 + 1e-12);
            let kn = next.dilate(kappa);
            for z in probes.iter().filter(|z| kn.contains(z) && !kj.contains(z)) {
                annulus_hits += 1;
                let q = z.dist(xb) / bj.radius;
                annulus_constant = annulus_constant.max(q).max(1.0 / q);
            }
        }
        for z in probes.iter().filter(|z| !kj.contains(z)) {
            let base = z.dist(xb);
            for x in &pts {
                let q = z.dist(x) / base;
                far_constant = far_constant.max(q).max(1.0 / q);
            }
        }
    }
    ChainReport { len: chain.len() - 1, nested, doubling, annulus_constant, far_constant, annulus_hits }
}

#[derive(Clone, Debug, Serialize)]
pub struct KeyLemmaReport {
    pub max_deviation: f64,
    pub value_at_center: f64,
    pub deviations: Vec<f64>,
    pub excluded: usize,
    pub probes: usize,
}

/// Probe points in B(x₀, r): x₀ first, then a Halton sequence over the ball.
pub fn ball_probes(x0: &Point, r: f64, count: usize) -> Vec<Point> {
    const BASES: [u32; 4] = [2, 3, 5, 7];
    let d = x0.dim();
    let mut out = vec![x0.clone()];
    for k in 1..count.max(1) {
        out.push(Point((0..d).map(|i| x0.0[i] + r * (2.0 * halton(k as u32, BASES[i % 4]) - 1.0)).collect()));
    }
    out
}

fn halton(mut k: u32, base: u32) -> f64 {
    let (mut f, mut r) = (1.0, 0.0);
    while k > 0 {
        f /= base as f64;
        r += f * (k % base) as f64;
        k /= base;
    }
    r
}

/// max_{x} |g*(f·1_{(κB)ᶜ})(x) − g*(f·1_{(κB)ᶜ})(x₀)| over probes x ∈ B(x₀, r).
#[allow(clippy::too_many_arguments)]
pub fn key_lemma_check(
    f: &SampledFunction,
    mu: &AtomicMeasure,
    kernel: &KernelSpec,
    params: &OperatorParams,
    x0: &Point,
    r: f64,
    kappa: f64,
    probes: usize,
) -> Result<KeyLemmaReport> {
    f.check(mu)?;
    if f.values.iter().any(|v| v.norm() > 1.0 + 1e-12) {
        return Err(Error::Invalid("key lemma needs ‖f‖∞ ≤ 1".into()));
    }
    let b = Ball::new(x0.clone(), r)?;
    let pts = ball_probes(x0, r, probes);
    let vals = far_field_values(f, mu, kernel, params, &b, kappa, &pts)?;
    let Some(v0) = vals[0] else {
        return Err(Error::Undefined("far-field value at the center diverged".into()));
    };
    let mut deviations = Vec::with_capacity(pts.len());
    let mut excluded = 0;
    for v in &vals {
        match v {
            Some(v) => deviations.push((v - v0).abs()),
            None => excluded += 1,
        }
    }
    let max_deviation = deviations.iter().copied().fold(0.0, f64::max);
    Ok(KeyLemmaReport { max_deviation, value_at_center: v0, deviations, excluded, probes: pts.len() })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BatteryParams {
    pub kappa: f64,
    /// power-bound exponent in the pair denominator
    pub m: f64,
    /// ball centers, spread evenly over the atoms
    pub centers: usize,
    /// dyadic radii per center, from the resolution up
    pub radii: usize,
    /// probes per key-lemma ball
    pub probes: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct BatteryRow {
    pub id: usize,
    pub center: Vec<f64>,
    pub radius: f64,
    pub osc_median: f64,
    pub osc_farfield: f64,
    pub pair_quotient_max: f64,
    pub key_deviation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BatteryReport {
    pub rows: Vec<BatteryRow>,
    pub sup_osc_median: f64,
    pub sup_osc_farfield: f64,
    pub sup_pair: f64,
    pub sup_key: f64,
    pub max_chain_constant: f64,
    pub excluded: usize,
}

/// Full audit of g*_{t₀}(f) over balls centered at atoms with dyadic radii.
pub fn rbmo_battery(
    f: &SampledFunction,
    mu: &AtomicMeasure,
    kernel: &KernelSpec,
    params: &OperatorParams,
    bp: &BatteryParams,
) -> Result<BatteryReport> {
    f.check(mu)?;
    if mu.is_empty() || bp.centers == 0 || bp.radii == 0 {
        return Err(Error::Invalid("battery needs atoms, centers and radii".into()));
    }
    if !(bp.kappa > 1.0) {
        return Err(Error::Invalid("kappa must exceed 1".into()));
    }
    let p = truncation(params, mu);
    let xs: Vec<Point> = mu.atoms().iter().map(|a| a.x.clone()).collect();
    let g: Vec<f64> = gstar_truncated_field(f, mu, kernel, &p, &xs)?
        .into_iter()
        .map(|v| if v.diverged { f64::NAN } else { v.value })
        .collect();
    if g.iter().any(|v| v.is_nan()) {
        return Err(Error::Undefined("g* diverged at an atom".into()));
    }
    let h = mu.resolution().max(1e-12);
    let n = mu.len();
    let stride = (n as f64 / bp.centers as f64).max(1.0);
    let centers: Vec<usize> = (0..bp.centers.min(n)).map(|k| ((k as f64 + 0.5) * stride) as usize).map(|i| i.min(n - 1)).collect();
    let mut balls = Vec::new();
    for &c in &centers {
        for k in 0..bp.radii {
            balls.push(Ball::new(mu.atoms()[c].x.clone(), h * 2f64.powi(k as i32))?);
        }
    }
    let per: Vec<(f64, f64, f64, KeyLemmaReport)> = balls
        .par_iter()
        .map(|b| {
            let (om, _) = rbmo_osc(&g, mu, b, bp.kappa, &CenterChoice::Median)?;
            let choice = CenterChoice::FarField { f, kernel, params: &p };
            let (of, fb) = rbmo_osc(&g, mu, b, bp.kappa, &choice)?;
            let key = key_lemma_check(f, mu, kernel, &p, &b.center, b.radius, bp.kappa, bp.probes)?;
            Ok((om, of, fb, key))
        })
        .collect::<Result<_>>()?;
    let fbs: Vec<f64> = per.iter().map(|t| t.2).collect();
    let probes: Vec<Point> = xs.clone();
    let mut rows = Vec::with_capacity(balls.len());
    let mut max_chain_constant = 0.0f64;
    let mut excluded = 0;
    for (i, b) in balls.iter().enumerate() {
        let mut q = 0.0f64;
        for (j, b2) in balls.iter().enumerate() {
            if i != j && b.inside(b2) {
                q = q.max(rbmo_pair(mu, b, b2, bp.kappa, bp.m, fbs[i], fbs[j])?);
            }
        }
        // the longest chain from this ball to the largest ball around its center
        let top = balls.iter().filter(|b2| b2.center == b.center).last().unwrap();
        let chain = chain_balls(b, top)?;
        let rep = validate_chain(&chain, bp.kappa, &probes);
        max_chain_constant = max_chain_constant.max(rep.annulus_constant).max(rep.far_constant);
        let (om, of, _, key) = &per[i];
        excluded += key.excluded;
        rows.push(BatteryRow {
            id: i,
            center: b.center.0.clone(),
            radius: b.radius,
            osc_median: *om,
            osc_farfield: *of,
            pair_quotient_max: q,
            key_deviation: key.max_deviation,
        });
    }
    let sup = |f: fn(&BatteryRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    Ok(BatteryReport {
        sup_osc_median: sup(|r| r.osc_median),
        sup_osc_farfield: sup(|r| r.osc_farfield),
        sup_pair: sup(|r| r.pair_quotient_max),
        sup_key: sup(|r| r.key_deviation),
        max_chain_constant,
        excluded,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn pt(x: f64) -> Point {
        Point::scalar(x)
    }

    #[test]
    fn constant_has_zero_median_oscillation() {
        let mu = AtomicMeasure::uniform_grid(1, 16, 1.0);
        let g = vec![3.5; 16];
        let b = Ball::new(pt(0.5), 0.2).unwrap();
        assert_eq!(rbmo_osc(&g, &mu, &b, 2.0, &CenterChoice::Median).unwrap().0, 0.0);
    }

    #[test]
    fn two_atom_median() {
        let mu = AtomicMeasure::from_points(vec![pt(0.0), pt(0.1), pt(5.0)], vec![1.0, 1.0, 2.0]).unwrap();
        let g = vec![0.0, 2.0, 7.0];
        let b = Ball::new(pt(0.05), 0.06).unwrap();
        let (osc, _) = rbmo_osc(&g, &mu, &b, 200.0, &CenterChoice::Median).unwrap();
        // μ(B)/μ(κB) · 1
        assert!((osc - 2.0 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn empty_dilate_is_an_error() {
        let mu = AtomicMeasure::from_points(vec![pt(0.0)], vec![1.0]).unwrap();
        let b = Ball::new(pt(10.0), 1.0).unwrap();
        assert!(rbmo_osc(&[0.0], &mu, &b, 2.0, &CenterChoice::Median).is_err());
    }

    #[test]
    fn pair_denominator_cases() {
        let mu = AtomicMeasure::uniform_grid(1, 64, 1.0);
        let b = Ball::new(pt(0.5), 0.1).unwrap();
        assert_eq!(rbmo_pair(&mu, &b, &b, 1.0, 1.0, 2.0, 2.0).unwrap(), 0.0);
        assert_eq!(pair_denominator(&mu, &b, &b, 1.0, 1.0).unwrap(), 1.0);
        let big = Ball::new(pt(0.5), 0.4).unwrap();
        let d = pair_denominator(&mu, &b, &big, 1.0, 1.0).unwrap();
        // Σ_{0.1<|x−c|≤0.4} |x−c|^{-1}/64 ≈ 2 ln 4
        assert!((d - 1.0 - 2.0 * 4f64.ln()).abs() < 0.15);
        assert!(pair_denominator(&mu, &big, &b, 1.0, 1.0).is_err());
    }

    #[test]
    fn chains() {
        let b = Ball::new(pt(0.0), 1.0).unwrap();
        assert_eq!(chain_balls(&b, &b).unwrap().len(), 1);
        let bp = Ball::new(pt(7.0), 8.0).unwrap();
        let c = chain_balls(&b, &bp).unwrap();
        assert_eq!(c.len(), 4);
        assert_eq!(c[3], bp);
        let probes: Vec<Point> = (-400..=400).map(|k| pt(k as f64 * 0.25)).collect();
        let kappa = 8.0;
        let rep = validate_chain(&c, kappa, &probes);
        assert!(rep.nested && rep.doubling);
        assert!(rep.annulus_hits > 0);
        assert!(rep.annulus_constant <= 4.0 * kappa);
        assert!(rep.far_constant <= 4.0 * kappa);
    }

    #[test]
    fn far_field_vanishes_on_local_data() {
        let mu = AtomicMeasure::uniform_grid(1, 16, 1.0);
        let k = KernelSpec::model(1.0, 1.0).unwrap();
        let p = OperatorParams::default().with_lambda(4.0);
        let f = SampledFunction::ones(16);
        let rep = key_lemma_check(&f, &mu, &k, &p, &pt(0.5), 0.1, 8.0, 8).unwrap();
        assert_eq!(rep.max_deviation, 0.0);
        assert_eq!(rep.deviations[0], 0.0);
        let bad = SampledFunction::constant(16, Complex64::new(2.0, 0.0));
        assert!(key_lemma_check(&bad, &mu, &k, &p, &pt(0.5), 0.1, 8.0, 8).is_err());
    }

    #[test]
    fn key_lemma_center_probe_is_zero() {
        let mu = AtomicMeasure::uniform_grid(1, 64, 1.0);
        let k = KernelSpec::model(1.0, 1.0).unwrap();
        let p = OperatorParams::default().with_lambda(4.0);
        let f = SampledFunction::ones(64);
        let rep = key_lemma_check(&f, &mu, &k, &p, &pt(0.5), 1.0 / 64.0, 8.0, 8).unwrap();
        assert_eq!(rep.deviations[0], 0.0);
        assert!(rep.max_deviation.is_finite());
        assert_eq!(rep.excluded, 0);
    }
}
