//! Local random dyadic grids 𝒟_w, good/bad classification and the searches
//! for doubling ancestors and small-boundary dilates.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Cube, Point};
use crate::measure::{doubling_check, dyadic_xi_grid, small_boundary_constant, AtomicMeasure};

/// Grid generated by Q*_w = c_Q + w + [−2^N, 2^N)^n.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShiftedGrid {
    pub dim: usize,
    pub n_exp: i32,
    pub shift: Point,
    pub seed: Cube,
    pub max_depth: u32,
    origin: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DyadicCube {
    pub level: u32,
    pub index: Vec<i64>,
}

/// N with 2^{N−3} ≤ ℓ < 2^{N−2}.
pub fn grid_exponent(side: f64) -> i32 {
    let mut e = side.log2().floor() as i32;
    while 2f64.powi(e) > side {
        e -= 1;
    }
    while 2f64.powi(e + 1) <= side {
        e += 1;
    }
    e + 3
}

/// w uniform on [−2^{N−1}, 2^{N−1})^n.
pub fn sample_shift<R: Rng>(rng: &mut R, n_exp: i32, dim: usize) -> Point {
    let h = 2f64.powi(n_exp - 1);
    Point((0..dim).map(|_| rng.gen_range(-h..h)).collect())
}

impl ShiftedGrid {
    pub fn new(seed: &Cube, shift: Point, max_depth: u32) -> Result<Self> {
        let dim = seed.dim();
        if shift.dim() != dim {
            return Err(Error::Dim { expected: dim, got: shift.dim() });
        }
        if max_depth > 50 {
            return Err(Error::Invalid("grid depth above 50 is not supported".into()));
        }
        let n_exp = grid_exponent(seed.side);
        let h = 2f64.powi(n_exp - 1);
        if shift.0.iter().any(|w| *w < -h || *w >= h) {
            return Err(Error::Invalid(format!("shift {:?} outside [-2^(N-1), 2^(N-1))^n", shift.0)));
        }
        let top = 2f64.powi(n_exp);
        let origin = seed.center.0.iter().zip(&shift.0).map(|(c, w)| c + w - top).collect();
        Ok(ShiftedGrid { dim, n_exp, shift, seed: seed.clone(), max_depth, origin })
    }

    /// The unshifted reference grid (w = 0).
    pub fn reference(seed: &Cube, max_depth: u32) -> Result<Self> {
        Self::new(seed, Point::origin(seed.dim()), max_depth)
    }

    pub fn random<R: Rng>(seed: &Cube, max_depth: u32, rng: &mut R) -> Result<Self> {
        let n = grid_exponent(seed.side);
        let w = sample_shift(rng, n, seed.dim());
        Self::new(seed, w, max_depth)
    }

    pub fn side(&self, level: u32) -> f64 {
        2f64.powi(self.n_exp + 1 - level as i32)
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn root(&self) -> DyadicCube {
        DyadicCube { level: 0, index: vec![0; self.dim] }
    }

    pub fn top(&self) -> Cube {
        self.cube(&self.root())
    }

    pub fn cube(&self, c: &DyadicCube) -> Cube {
        let s = self.side(c.level);
        let lo: Vec<f64> = self.origin.iter().zip(&c.index).map(|(o, k)| o + *k as f64 * s).collect();
        Cube::from_corners(&lo, s)
    }

    pub fn parent(&self, c: &DyadicCube) -> Option<DyadicCube> {
        if c.level == 0 {
            return None;
        }
        Some(DyadicCube { level: c.level - 1, index: c.index.iter().map(|k| k >> 1).collect() })
    }

    pub fn ancestor(&self, c: &DyadicCube, k: u32) -> Result<DyadicCube> {
        if k > c.level {
            return Err(Error::Invalid(format!("ancestor {k} above level {}", c.level)));
        }
        Ok(DyadicCube { level: c.level - k, index: c.index.iter().map(|i| i >> k).collect() })
    }

    pub fn children(&self, c: &DyadicCube) -> Vec<DyadicCube> {
        if c.level >= self.max_depth {
            return Vec::new();
        }
        (0..(1usize << self.dim))
            .map(|corner| DyadicCube {
                level: c.level + 1,
                index: c.index.iter().enumerate().map(|(i, k)| 2 * k + ((corner >> i) & 1) as i64).collect(),
            })
            .collect()
    }

    pub fn is_ancestor_or_self(&self, a: &DyadicCube, c: &DyadicCube) -> bool {
        a.level <= c.level && self.ancestor(c, c.level - a.level).map(|x| &x == a).unwrap_or(false)
    }

    /// Cube at `level` containing `p` (half-open), if `p` lies in the top cube.
    pub fn locate(&self, p: &[f64], level: u32) -> Option<DyadicCube> {
        let deep = self.max_depth.max(level);
        let s = self.side(deep);
        let n = 1i64 << deep;
        let mut idx = Vec::with_capacity(self.dim);
        for (x, o) in p.iter().zip(&self.origin) {
            let k = ((x - o) / s).floor();
            if !(k >= 0.0 && k < n as f64) {
                return None;
            }
            idx.push(k as i64);
        }
        Some(DyadicCube { level, index: idx.into_iter().map(|k| k >> (deep - level)).collect() })
    }

    /// Atom indices per cube at every level.
    pub fn index_points<'a>(&self, points: impl Iterator<Item = &'a Point>) -> GridIndex {
        let mut levels: Vec<BTreeMap<Vec<i64>, Vec<usize>>> = vec![BTreeMap::new(); self.max_depth as usize + 1];
        let mut outside = Vec::new();
        for (i, p) in points.enumerate() {
            match self.locate(&p.0, self.max_depth) {
                Some(c) => {
                    for l in 0..=self.max_depth {
                        let key: Vec<i64> = c.index.iter().map(|k| k >> (self.max_depth - l)).collect();
                        levels[l as usize].entry(key).or_default().push(i);
                    }
                }
                None => outside.push(i),
            }
        }
        GridIndex { levels, outside }
    }
}

#[derive(Clone, Debug)]
pub struct GridIndex {
    pub levels: Vec<BTreeMap<Vec<i64>, Vec<usize>>>,
    pub outside: Vec<usize>,
}

impl GridIndex {
    pub fn atoms(&self, c: &DyadicCube) -> &[usize] {
        self.levels
            .get(c.level as usize)
            .and_then(|m| m.get(&c.index))
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }

    /// Nonempty cubes, level by level, in index order.
    pub fn cubes(&self) -> impl Iterator<Item = DyadicCube> + '_ {
        self.levels
            .iter()
            .enumerate()
            .flat_map(|(l, m)| m.keys().map(move |k| DyadicCube { level: l as u32, index: k.clone() }))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GoodReport {
    pub good: bool,
    /// no admissible J exists in the finite grid
    pub vacuous: bool,
    /// min over admissible J of dist(I, ∂J) − threshold(J)
    pub min_margin: f64,
}

/// Default γ = α / (2(m+α)).
pub fn default_gamma(m: f64, alpha: f64) -> f64 {
    alpha / (2.0 * (m + alpha))
}

/// For-all form: I is good iff dist(I, ∂J) > ℓ(I)^γ ℓ(J)^{1−γ} for every
/// J ∈ 𝒟_w with ℓ(J) ≥ 2^r ℓ(I).
pub fn is_good(i: &Cube, grid: &ShiftedGrid, r: u32, gamma: f64) -> Result<GoodReport> {
    if !(gamma > 0.0 && gamma <= 0.5) {
        return Err(Error::Invalid(format!("gamma must lie in (0, 1/2], got {gamma}")));
    }
    let top = grid.top();
    if i.side > top.side {
        return Err(Error::Invalid("cube larger than the top cube".into()));
    }
    if !i.inside_closed(&top) {
        return Err(Error::Invalid("cube not inside the grid's top cube".into()));
    }
    let min_side = 2f64.powi(r as i32) * i.side * (1.0 - 1e-12);
    let (lo, hi) = (i.lo(), i.hi());
    let mut vacuous = true;
    let mut min_margin = f64::INFINITY;
    for level in 0..=grid.max_depth {
        let s = grid.side(level);
        if s < min_side {
            break;
        }
        vacuous = false;
        let mut d = f64::INFINITY;
        for k in 0..grid.dim {
            let o = grid.origin[k];
            let j = ((lo[k] - o) / s).floor();
            let face_lo = o + j * s;
            let face_hi = face_lo + s;
            d = d.min((lo[k] - face_lo).min(face_hi - hi[k]));
        }
        let d = d.max(0.0);
        let thr = i.side.powf(gamma) * s.powf(1.0 - gamma);
        min_margin = min_margin.min(d - thr - 1e-12 * thr.max(i.side));
    }
    Ok(GoodReport { good: vacuous || min_margin > 0.0, vacuous, min_margin })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BadEstimate {
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub trials: usize,
    pub vacuous: usize,
}

/// 95% Wilson score interval.
pub fn wilson(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let nf = n as f64;
    let p = successes as f64 / nf;
    let den = 1.0 + z * z / nf;
    let c = (p + z * z / (2.0 * nf)) / den;
    let h = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / den;
    ((c - h).max(0.0), (c + h).min(1.0))
}

/// Monte Carlo probability over shifts w that I is bad.
pub fn bad_probability<R: Rng>(
    i: &Cube,
    seed_cube: &Cube,
    r: u32,
    gamma: f64,
    trials: usize,
    rng: &mut R,
) -> Result<BadEstimate> {
    if trials < 100 {
        return Err(Error::Invalid("bad_probability needs at least 100 trials".into()));
    }
    let n = grid_exponent(seed_cube.side);
    let top_side = 2f64.powi(n + 1);
    let need = top_side / (2f64.powi(r as i32) * i.side);
    let depth = if need >= 1.0 { need.log2().floor() as u32 } else { 0 };
    let mut bad = 0;
    let mut vacuous = 0;
    for _ in 0..trials {
        let w = sample_shift(rng, n, seed_cube.dim());
        let g = ShiftedGrid::new(seed_cube, w, depth)?;
        let rep = is_good(i, &g, r, gamma)?;
        if rep.vacuous {
            vacuous += 1;
        }
        if !rep.good {
            bad += 1;
        }
    }
    let (lo, hi) = wilson(bad, trials);
    Ok(BadEstimate { estimate: bad as f64 / trials as f64, ci_lo: lo, ci_hi: hi, trials, vacuous })
}

/// Smallest k ≥ 1 with μ(a^k Q) > 0 and a^k Q (a,b)-doubling.
pub fn find_doubling_ancestor(mu: &AtomicMeasure, q: &Cube, a: f64, b: f64, k_max: u32) -> Result<u32> {
    if !(a > 1.0 && b > 1.0) {
        return Err(Error::Invalid("doubling parameters must exceed 1".into()));
    }
    let mut c = q.scaled(a);
    for k in 1..=k_max {
        if mu.cube_mass(&c) > 0.0 && doubling_check(mu, &c, a, b) {
            return Ok(k);
        }
        c = c.scaled(a);
    }
    Err(Error::Exhausted(format!("no ({a},{b})-doubling dilate up to k = {k_max}")))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SmallBoundaryChoice {
    pub cube: Cube,
    pub dilation: f64,
    pub constant: f64,
    pub pass: bool,
}

fn sb_const(mu: &AtomicMeasure, c: &Cube) -> f64 {
    small_boundary_constant(mu, c, &dyadic_xi_grid(mu, c)).unwrap_or(0.0)
}

/// Among λQ, λ on a uniform grid in `range`, the dilate with smallest
/// small-boundary constant (first on ties).
pub fn small_boundary_search(mu: &AtomicMeasure, q: &Cube, range: (f64, f64), c_target: f64, candidates: usize) -> Result<SmallBoundaryChoice> {
    small_boundary_search_where(mu, q, range, c_target, candidates, |_| true)
}

/// As `small_boundary_search`, restricted to dilates accepted by `admit`.
pub fn small_boundary_search_where(
    mu: &AtomicMeasure,
    q: &Cube,
    range: (f64, f64),
    c_target: f64,
    candidates: usize,
    admit: impl Fn(&Cube) -> bool,
) -> Result<SmallBoundaryChoice> {
    if candidates < 2 {
        return Err(Error::Invalid("need at least two candidates".into()));
    }
    let mut best: Option<SmallBoundaryChoice> = None;
    for k in 0..candidates {
        let lam = range.0 + (range.1 - range.0) * k as f64 / (candidates - 1) as f64;
        let c = q.scaled(lam);
        if !admit(&c) {
            continue;
        }
        let v = sb_const(mu, &c);
        if best.as_ref().map(|b| v < b.constant).unwrap_or(true) {
            best = Some(SmallBoundaryChoice { cube: c, dilation: lam, constant: v, pass: v <= c_target });
        }
    }
    best.ok_or_else(|| Error::Exhausted("no admissible dilate".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Atom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit() -> Cube {
        Cube::new(Point::scalar(0.5), 1.0).unwrap()
    }

    #[test]
    fn exponent_brackets_side() {
        for &s in &[0.3, 1.0, 1.5, 2.0, 7.9, 1e-3] {
            let n = grid_exponent(s);
            assert!(2f64.powi(n - 3) <= s && s < 2f64.powi(n - 2));
        }
    }

    #[test]
    fn shifts_are_reproducible_and_in_range() {
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        let n = grid_exponent(1.0);
        let mut sum = 0.0;
        let count = 10_000;
        for _ in 0..count {
            let w = sample_shift(&mut a, n, 1);
            assert_eq!(w, sample_shift(&mut b, n, 1));
            let h = 2f64.powi(n - 1);
            assert!(w.0[0] >= -h && w.0[0] < h);
            sum += w.0[0];
        }
        let sd = 2f64.powi(n - 1) * 2.0 / 12f64.sqrt() / (count as f64).sqrt();
        assert!((sum / count as f64).abs() < 3.0 * sd);
    }

    #[test]
    fn navigation() {
        let g = ShiftedGrid::new(&unit(), Point::scalar(0.7), 4).unwrap();
        let c = g.locate(&[0.3], 4).unwrap();
        assert_eq!(g.ancestor(&c, 0).unwrap(), c);
        let p = g.ancestor(&c, 1).unwrap();
        assert!(g.cube(&c).inside_closed(&g.cube(&p)));
        assert_eq!(g.ancestor(&c, 4).unwrap(), g.root());
        assert!(g.ancestor(&c, 5).is_err());
        assert!((g.cube(&p).side - 2.0 * g.cube(&c).side).abs() < 1e-15);
        assert!(g.seed.inside_closed(&g.top().scaled(0.7)));
    }

    #[test]
    fn children_partition_parent_masses() {
        let mu = AtomicMeasure::uniform_grid(2, 16, 1.0);
        let seed = Cube::new(Point(vec![0.5, 0.5]), 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = ShiftedGrid::random(&seed, 6, &mut rng).unwrap();
        let idx = g.index_points(mu.atoms().iter().map(|a| &a.x));
        assert!(idx.outside.is_empty());
        for c in idx.cubes() {
            if c.level == g.max_depth {
                continue;
            }
            let total: usize = g.children(&c).iter().map(|ch| idx.atoms(ch).len()).sum();
            assert_eq!(total, idx.atoms(&c).len());
        }
    }

    // dist from closed I to ∂J by brute force over all J at a level
    fn brute_min_dist(i: &Cube, g: &ShiftedGrid, level: u32) -> f64 {
        let s = g.side(level);
        let n = 1i64 << level;
        let (a, b) = (i.lo()[0], i.hi()[0]);
        let mut best = f64::INFINITY;
        for k in 0..n {
            let lo = g.origin()[0] + k as f64 * s;
            let hi = lo + s;
            let d = if a >= lo && b <= hi {
                (a - lo).min(hi - b)
            } else if b <= lo {
                lo - b
            } else if a >= hi {
                a - hi
            } else {
                0.0
            };
            best = best.min(d);
        }
        best
    }

    #[test]
    fn is_good_matches_exhaustive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let seed = unit();
        for _ in 0..200 {
            let g = ShiftedGrid::random(&seed, 10, &mut rng).unwrap();
            let side = 2f64.powi(-(rng.gen_range(3..8)));
            let k = rng.gen_range(0..(1.0 / side) as i64);
            let i = Cube::from_corners(&[k as f64 * side], side);
            let (r, gamma) = (rng.gen_range(1..5), 0.25);
            let rep = is_good(&i, &g, r, gamma).unwrap();
            let mut good = true;
            for level in 0..=g.max_depth {
                let s = g.side(level);
                if s < 2f64.powi(r as i32) * side {
                    break;
                }
                let thr = side.powf(gamma) * s.powf(1.0 - gamma);
                if brute_min_dist(&i, &g, level) <= thr {
                    good = false;
                }
            }
            assert_eq!(rep.good, good);
        }
    }

    #[test]
    fn is_good_examples() {
        let seed = unit();
        // I sharing a face with a level-j cube
        let g = ShiftedGrid::new(&seed, Point::scalar(0.0), 8).unwrap();
        let s = g.side(8);
        let i = Cube::from_corners(&[g.origin()[0] + 40.0 * s], s);
        assert!(!is_good(&i, &g, 2, 0.25).unwrap().good);
        // γ = 1/4, r = 2: threshold exceeds every interior distance
        for k in 0..50 {
            let i = Cube::from_corners(&[g.origin()[0] + (k as f64 + 0.0) * s], s);
            assert!(!is_good(&i, &g, 2, 0.25).unwrap().good);
        }
        // deep cube sitting at the 1/3 point of every ancestor
        let g = ShiftedGrid::new(&seed, Point::scalar(0.0), 30).unwrap();
        let top = g.side(0);
        let p = g.origin()[0] + top / 3.0;
        let side = g.side(30);
        let i = Cube::new(Point::scalar(p), side).unwrap();
        let rep = is_good(&i, &g, 8, 0.25).unwrap();
        assert!(rep.good && !rep.vacuous);
        // vacuous when no admissible level exists
        let shallow = ShiftedGrid::new(&seed, Point::scalar(0.0), 2).unwrap();
        let i = Cube::new(Point::scalar(0.5), 1.0).unwrap();
        let rep = is_good(&i, &shallow, 8, 0.25).unwrap();
        assert!(rep.vacuous && rep.good);
        assert!(is_good(&Cube::new(Point::scalar(0.5), 100.0).unwrap(), &shallow, 1, 0.25).is_err());
    }

    #[test]
    fn monotone_in_gamma() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let seed = unit();
        for _ in 0..200 {
            let g = ShiftedGrid::random(&seed, 12, &mut rng).unwrap();
            let side = 2f64.powi(-6);
            let i = Cube::from_corners(&[rng.gen_range(0..64) as f64 * side], side);
            let lo = is_good(&i, &g, 3, 0.2).unwrap().good;
            let hi = is_good(&i, &g, 3, 0.45).unwrap().good;
            assert!(lo || !hi);
        }
    }

    #[test]
    fn bad_probability_ci_scaling() {
        let seed = unit();
        let i = Cube::from_corners(&[0.25], 1.0 / 64.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = bad_probability(&i, &seed, 4, 0.5, 1000, &mut rng).unwrap();
        let b = bad_probability(&i, &seed, 4, 0.5, 2000, &mut rng).unwrap();
        assert!((0.0..=1.0).contains(&a.estimate));
        let ratio = (a.ci_hi - a.ci_lo) / (b.ci_hi - b.ci_lo);
        assert!((ratio - 2f64.sqrt()).abs() < 0.25, "{ratio}");
        assert!(bad_probability(&i, &seed, 4, 0.5, 10, &mut rng).is_err());
    }

    #[test]
    fn doubling_ancestor_examples() {
        let single = AtomicMeasure::new(1, vec![Atom { x: Point::scalar(0.1), w: 1.0 }]).unwrap();
        assert_eq!(find_doubling_ancestor(&single, &unit(), 2.0, 2.0, 10).unwrap(), 1);
        // atom at distance 10 from a tiny cube at the origin
        let far = AtomicMeasure::new(1, vec![Atom { x: Point::scalar(10.0), w: 1.0 }]).unwrap();
        let q = Cube::new(Point::scalar(0.0), 0.1).unwrap();
        let k = find_doubling_ancestor(&far, &q, 2.0, 2.0, 30).unwrap();
        // first k with 0.1·2^k/2 ≥ 10
        let oracle = (1..30).find(|&k| 0.05 * 2f64.powi(k) >= 10.0).unwrap();
        assert_eq!(k as i32, oracle);
        let mu = AtomicMeasure::uniform_grid(1, 64, 1.0);
        let q = Cube::new(Point::scalar(0.5), 0.125).unwrap();
        assert_eq!(find_doubling_ancestor(&mu, &q, 2.0, 8.0, 10).unwrap(), 1);
        assert!(find_doubling_ancestor(&AtomicMeasure::empty(1), &q, 2.0, 8.0, 5).is_err());
    }

    #[test]
    fn small_boundary_search_examples() {
        let q = Cube::new(Point::scalar(0.0), 2.0).unwrap();
        // atoms exactly on ∂Q plus interior mass
        let mu = AtomicMeasure::new(
            1,
            vec![
                Atom { x: Point::scalar(-1.0), w: 1.0 },
                Atom { x: Point::scalar(1.0), w: 1.0 },
                Atom { x: Point::scalar(0.0), w: 1.0 },
            ],
        )
        .unwrap()
        .with_resolution(1e-3)
        .unwrap();
        let res = small_boundary_search(&mu, &q, (1.0, 1.1), 10.0, 11).unwrap();
        assert!(res.dilation > 1.0);
        assert!(res.cube.side >= q.side && res.cube.side <= 1.1 * q.side + 1e-12);
        let base = small_boundary_constant(&mu, &q, &dyadic_xi_grid(&mu, &q)).unwrap();
        assert!(res.constant < base);
    }
}
