use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forest::stopping_cubes;
use crate::dyadic::{DyadicCube, ShiftedGrid};
use crate::error::{Error, Result};
use crate::geometry::{dist_inf, Cube, Point};
use crate::measure::{AtomicMeasure, ComplexMeasure, SampledFunction};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ExceptionalParams {
    pub b1: f64,
    pub eps0: f64,
    pub p0: f64,
    pub m: f64,
    /// stopping threshold; 1/(2B₁) when absent
    pub eta: Option<f64>,
    /// 𝓕₂ threshold; 1/(32B₁) when absent
    pub delta: Option<f64>,
}

impl ExceptionalParams {
    pub fn eta(&self) -> f64 {
        self.eta.unwrap_or(1.0 / (2.0 * self.b1))
    }

    pub fn delta(&self) -> f64 {
        self.delta.unwrap_or(1.0 / (32.0 * self.b1))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalAssumptions {
    pub support: bool,
    pub mass: bool,
    pub norm: bool,
    pub small_set: bool,
    /// max |ν|(A) over A ⊂ Q with μ(A) ≤ ε₀μ(Q), fractional relaxation
    pub worst_small_set: f64,
    pub small_set_bound: f64,
}

impl LocalAssumptions {
    pub fn all(&self) -> bool {
        self.support && self.mass && self.norm && self.small_set
    }

    pub fn first_failure(&self) -> Option<&'static str> {
        [
            (self.support, "(1) supp nu in Q"),
            (self.mass, "(2) nu(Q) = mu(Q)"),
            (self.norm, "(3) |nu| <= B1 mu(Q)"),
            (self.small_set, "(4) small-set condition"),
        ]
        .into_iter()
        .find(|(ok, _)| !ok)
        .map(|(_, name)| name)
    }
}

fn key(p: &Point) -> Vec<u64> {
    p.0.iter().map(|x| (x + 0.0).to_bits()).collect()
}

/// sup |ν|(A) over A ⊂ Q with μ(A) ≤ budget. Atoms are merged by position and
/// filled by decreasing |ν|/μ; the last one fractionally, which bounds the 0/1 optimum from above.
pub fn small_set_worst_case(nu: &ComplexMeasure, mu: &AtomicMeasure, q: &Cube, budget: f64) -> f64 {
    let mut items: BTreeMap<Vec<u64>, (f64, f64)> = BTreeMap::new();
    for (p, w) in nu.points.iter().zip(&nu.weights) {
        if q.contains_closed(&p.0) {
            items.entry(key(p)).or_default().0 += w.norm();
        }
    }
    for a in mu.atoms() {
        if q.contains_closed(&a.x.0) {
            items.entry(key(&a.x)).or_default().1 += a.w;
        }
    }
    let mut v: Vec<(f64, f64)> = items.into_values().filter(|(n, _)| *n > 0.0).collect();
    v.sort_by(|a, b| (b.0 * a.1).partial_cmp(&(a.0 * b.1)).unwrap());
    let mut left = budget;
    let mut total = 0.0;
    for (n, m) in v {
        if m <= left {
            total += n;
            left -= m;
        } else {
            total += n * left / m;
            break;
        }
    }
    total
}

pub fn validate_local_assumptions(nu: &ComplexMeasure, mu: &AtomicMeasure, q: &Cube, b1: f64, eps0: f64) -> LocalAssumptions {
    let mq = mu.cube_mass(q);
    let norm = nu.total_variation();
    let support = nu.points.iter().zip(&nu.weights).all(|(p, w)| w.norm() == 0.0 || q.contains_closed(&p.0));
    let total = nu.total();
    let mass = (total.re - mq).abs() <= 1e-9 * mq.max(norm) && total.im.abs() <= 1e-9 * mq.max(norm);
    let worst = small_set_worst_case(nu, mu, q, eps0 * mq);
    let bound = norm / (32.0 * b1);
    LocalAssumptions {
        support,
        mass,
        norm: norm <= b1 * mq * (1.0 + 1e-12),
        small_set: worst <= bound * (1.0 + 1e-12),
        worst_small_set: worst,
        small_set_bound: bound,
    }
}

fn radial(sigma: &AtomicMeasure, x: &[f64]) -> Vec<(f64, f64)> {
    let mut d: Vec<(f64, f64)> = sigma.atoms().iter().filter(|a| a.w > 0.0).map(|a| (dist_inf(x, &a.x.0), a.w)).collect();
    d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut s = 0.0;
    for (r, w) in d {
        s += w;
        match out.last_mut() {
            Some(last) if last.0 == r => last.1 = s,
            _ => out.push((r, s)),
        }
    }
    out
}

/// p(x) = sup_{r ≥ h} r^{−m} σ(B(x,r)), closed sup-norm balls.
pub fn p_function(sigma: &AtomicMeasure, x: &[f64], m: f64, h: f64) -> f64 {
    let rad = radial(sigma, x);
    let mut best = 0.0f64;
    let at_h = rad.iter().take_while(|(r, _)| *r <= h).last().map(|(_, s)| *s).unwrap_or(0.0);
    best = best.max(at_h / h.powf(m));
    for (r, s) in &rad {
        if *r >= h {
            best = best.max(s / r.powf(m));
        }
    }
    best
}

/// r(x) = sup{r ≥ h : σ(B(x,r)) > p₀ r^m}, None when the set is empty.
pub fn h1_radius(sigma: &AtomicMeasure, x: &[f64], m: f64, p0: f64, h: f64) -> Option<f64> {
    let rad = radial(sigma, x);
    let mut best: Option<f64> = None;
    for (k, (d, s)) in rad.iter().enumerate() {
        let start = d.max(h);
        let end = rad.get(k + 1).map(|n| n.0).unwrap_or(f64::INFINITY);
        if start >= end {
            continue;
        }
        let rho = (s / p0).powf(1.0 / m);
        if rho > start {
            let r = rho.min(end);
            best = Some(best.map_or(r, |b: f64| b.max(r)));
        }
    }
    best
}

#[derive(Clone, Debug, Serialize)]
pub struct ExceptionalSet {
    pub h1: Vec<Cube>,
    pub f1: Vec<DyadicCube>,
    pub f2: Vec<DyadicCube>,
    pub h2: Vec<Cube>,
    pub u_q: Vec<Cube>,
    pub eta: f64,
    pub delta: f64,
    pub sigma_q: f64,
    pub sigma_h1: f64,
    pub sigma_h2: f64,
    pub sigma_h: f64,
    pub sigma_t: f64,
    /// σ(H ∪ T_w)/σ(Q)
    pub ratio: f64,
    pub target: f64,
    pub pass: bool,
    /// every atom-centred ladder ball with σ(B_r) > p₀r^m lies in H
    pub ball_property: bool,
    pub assumptions: LocalAssumptions,
}

impl ExceptionalSet {
    /// Empty H for instances without exceptional pieces.
    pub fn none() -> Vec<Cube> {
        Vec::new()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.h1.iter().chain(&self.u_q).any(|c| c.contains_closed(p)) || self.h2.iter().any(|c| c.contains_half_open(p))
    }

    /// Closed pieces of H for the transit construction.
    pub fn cubes(&self) -> Vec<Cube> {
        self.h1.iter().chain(&self.h2).chain(&self.u_q).cloned().collect()
    }
}

fn maximal_where(grid: &ShiftedGrid, sigma: &AtomicMeasure, mu: &AtomicMeasure, pred: impl Fn(f64, f64) -> bool) -> Vec<DyadicCube> {
    let pts: Vec<&Point> = sigma.atoms().iter().map(|a| &a.x).chain(mu.atoms().iter().map(|a| &a.x)).collect();
    let idx = grid.index_points(pts.iter().copied());
    let ns = sigma.len();
    let masses = |c: &DyadicCube| {
        let (mut s, mut m) = (0.0, 0.0);
        for &i in idx.atoms(c) {
            if i < ns {
                s += sigma.atoms()[i].w;
            } else {
                m += mu.atoms()[i - ns].w;
            }
        }
        (s, m)
    };
    let mut out = Vec::new();
    let mut stack = vec![grid.root()];
    while let Some(c) = stack.pop() {
        let (s, m) = masses(&c);
        if s == 0.0 && m == 0.0 {
            continue;
        }
        if pred(s, m) {
            out.push(c);
        } else {
            stack.extend(grid.children(&c).into_iter().filter(|k| !idx.atoms(k).is_empty()));
        }
    }
    out.sort();
    out
}

/// H = H₁ ∪ H₂ ∪ U_Q for σ = |ν|, audited together with T_w when supplied.
pub fn exceptional_set(
    nu: &ComplexMeasure,
    mu: &AtomicMeasure,
    q: &Cube,
    grid0: &ShiftedGrid,
    params: &ExceptionalParams,
    u_q: Vec<Cube>,
    t_w: Option<(&ShiftedGrid, &[DyadicCube])>,
) -> Result<ExceptionalSet> {
    let assumptions = validate_local_assumptions(nu, mu, q, params.b1, params.eps0);
    if let Some(which) = assumptions.first_failure() {
        return Err(Error::Assumption(format!("assumption {which} violated")));
    }
    let sigma = nu.variation()?;
    let h = sigma.resolution().min(mu.resolution());
    let eta = params.eta();
    let delta = params.delta();

    let h1: Vec<Cube> = sigma
        .atoms()
        .iter()
        .filter(|a| a.w > 0.0 && p_function(&sigma, &a.x.0, params.m, h) > params.p0)
        .filter_map(|a| h1_radius(&sigma, &a.x.0, params.m, params.p0, h).map(|r| Cube::ball(&a.x, r)))
        .collect();
    let f1 = maximal_where(grid0, &sigma, mu, |s, m| s > params.b1 / params.eps0 * m);
    let f2 = maximal_where(grid0, &sigma, mu, |s, m| s < delta * m);
    let h2: Vec<Cube> = f1.iter().chain(&f2).map(|c| grid0.cube(c)).collect();

    let mut set = ExceptionalSet {
        h1,
        f1,
        f2,
        h2,
        u_q,
        eta,
        delta,
        sigma_q: 0.0,
        sigma_h1: 0.0,
        sigma_h2: 0.0,
        sigma_h: 0.0,
        sigma_t: 0.0,
        ratio: 0.0,
        target: 1.0 - eta / 2.0,
        pass: false,
        ball_property: true,
        assumptions,
    };
    let in_t = |p: &[f64]| match t_w {
        Some((g, cubes)) => cubes.iter().any(|c| g.locate(p, c.level).as_ref() == Some(c)),
        None => false,
    };
    for a in sigma.atoms() {
        let p = &a.x.0;
        if q.contains_closed(p) {
            set.sigma_q += a.w;
        }
        if set.h1.iter().any(|c| c.contains_closed(p)) {
            set.sigma_h1 += a.w;
        }
        if set.h2.iter().any(|c| c.contains_half_open(p)) {
            set.sigma_h2 += a.w;
        }
        let hit = set.contains(p);
        if hit {
            set.sigma_h += a.w;
        }
        if in_t(p) {
            set.sigma_t += a.w;
        }
        if hit || in_t(p) {
            set.ratio += a.w;
        }
    }
    set.ratio /= set.sigma_q;
    set.pass = set.ratio <= set.target;
    for a in sigma.atoms().iter().filter(|a| a.w > 0.0) {
        let mut r = h;
        while r < 2.0 * q.side {
            let ball = Cube::ball(&a.x, r);
            if sigma.cube_mass(&ball) > params.p0 * r.powf(params.m) && !set.h1.iter().any(|c| ball.inside_closed(c)) {
                set.ball_property = false;
            }
            r *= 2f64.sqrt();
        }
    }
    Ok(set)
}

#[derive(Clone, Debug, Serialize)]
pub struct BigPiece {
    /// atom indices of G_Q
    pub g_q: Vec<usize>,
    pub p: Vec<f64>,
    pub tau: f64,
    pub delta1: f64,
    /// σ(G_Q)/σ(Q)
    pub ratio: f64,
    /// (1−τ)/(2−τ)
    pub bound: f64,
    pub pass: bool,
    /// E_w σ(H ∪ T_w ∪ S₀)/σ(Q)
    pub mean_excluded: f64,
    pub trials: usize,
}

/// G_Q = {x ∈ Q : P(x) > τ}, P(x) = P_w(x ∉ H ∪ T_w ∪ S₀) over random grids on Q.
/// `fixed` marks atoms of σ in H ∪ S₀ (independent of w).
#[allow(clippy::too_many_arguments)]
pub fn big_piece_gq(
    sigma: &AtomicMeasure,
    b: &SampledFunction,
    q: &Cube,
    fixed: &[bool],
    eta: f64,
    delta0: f64,
    trials: usize,
    max_depth: u32,
    seed: u64,
) -> Result<BigPiece> {
    b.check(sigma)?;
    if fixed.len() != sigma.len() {
        return Err(Error::Binding { expected: sigma.len(), got: fixed.len() });
    }
    if !(delta0 > 0.0 && delta0 < 1.0) {
        return Err(Error::Invalid(format!("delta0 must lie in (0,1), got {delta0}")));
    }
    if trials < 100 {
        return Err(Error::Invalid("big_piece_gq needs at least 100 trials".into()));
    }
    let delta1 = (1.0 + delta0) / 2.0;
    let tau = (1.0 - delta1) / 2.0;
    let per_trial: Vec<Vec<bool>> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<bool>> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let grid = ShiftedGrid::random(q, max_depth, &mut rng)?;
            let stop = stopping_cubes(b, sigma, &grid, eta)?;
            Ok(sigma.atoms().iter().enumerate().map(|(i, a)| !fixed[i] && !stop.contains_point(&grid, &a.x.0)).collect())
        })
        .collect::<Result<_>>()?;
    let n = sigma.len();
    let mut p = vec![0.0; n];
    let mut excluded = 0.0;
    let sq: f64 = sigma.atoms().iter().filter(|a| q.contains_closed(&a.x.0)).map(|a| a.w).sum();
    for row in &per_trial {
        for i in 0..n {
            if row[i] {
                p[i] += 1.0;
            } else if q.contains_closed(&sigma.atoms()[i].x.0) {
                excluded += sigma.atoms()[i].w;
            }
        }
    }
    for v in p.iter_mut() {
        *v /= trials as f64;
    }
    let g_q: Vec<usize> = (0..n)
        .filter(|&i| sigma.atoms()[i].w > 0.0 && q.contains_closed(&sigma.atoms()[i].x.0) && p[i] > tau)
        .collect();
    let sg: f64 = g_q.iter().map(|&i| sigma.atoms()[i].w).sum();
    let ratio = if sq > 0.0 { sg / sq } else { 0.0 };
    let bound = (1.0 - tau) / (2.0 - tau);
    Ok(BigPiece {
        g_q,
        p,
        tau,
        delta1,
        ratio,
        bound,
        pass: ratio >= bound,
        mean_excluded: if sq > 0.0 { excluded / (sq * trials as f64) } else { 0.0 },
        trials,
    })
}
