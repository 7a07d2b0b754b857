//! Whitney decomposition of a bounded open set into maximal dyadic cubes with
//! closure(10Q) ⊂ Ω, and the doubling small-boundary subfamily selection.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dyadic::small_boundary_search_where;
use crate::error::{Error, Result};
use crate::geometry::{Box, BoxUnion, Cube, Point};
use crate::measure::{doubling_check, AtomicMeasure};

/// Cube of the standard dyadic lattice 𝒟₀: side 2^{−level}, lower corner index·side.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StdCube {
    pub level: i32,
    pub index: Vec<i64>,
}

impl StdCube {
    pub fn side(&self) -> f64 {
        2f64.powi(-self.level)
    }

    pub fn cube(&self) -> Cube {
        let s = self.side();
        let lo: Vec<f64> = self.index.iter().map(|k| *k as f64 * s).collect();
        Cube::from_corners(&lo, s)
    }

    pub fn parent(&self) -> StdCube {
        StdCube { level: self.level - 1, index: self.index.iter().map(|k| k.div_euclid(2)).collect() }
    }

    pub fn children(&self) -> Vec<StdCube> {
        let n = self.index.len();
        (0..(1usize << n))
            .map(|c| StdCube {
                level: self.level + 1,
                index: self.index.iter().enumerate().map(|(i, k)| 2 * k + ((c >> i) & 1) as i64).collect(),
            })
            .collect()
    }

    pub fn containing(p: &[f64], level: i32) -> StdCube {
        let s = 2f64.powi(-level);
        StdCube { level, index: p.iter().map(|x| (x / s).floor() as i64).collect() }
    }
}

/// Bounded open set: interior of a finite union of closed cubes.
#[derive(Clone, Debug)]
pub struct Region {
    pub cubes: Vec<Cube>,
    pub bounding_box: Cube,
    /// points that the decomposition must cover
    pub probes: Vec<Point>,
    union: BoxUnion,
}

impl Region {
    pub fn cube_union(cubes: Vec<Cube>) -> Result<Self> {
        let first = cubes.first().ok_or_else(|| Error::Invalid("empty region".into()))?;
        let dim = first.dim();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for c in &cubes {
            if c.dim() != dim {
                return Err(Error::Dim { expected: dim, got: c.dim() });
            }
            if !c.side.is_finite() || c.center.0.iter().any(|x| !x.is_finite()) {
                return Err(Error::Invalid("region must be bounded".into()));
            }
            for (i, (l, h)) in c.lo().into_iter().zip(c.hi()).enumerate() {
                lo[i] = lo[i].min(l);
                hi[i] = hi[i].max(h);
            }
        }
        let side = (0..dim).map(|i| hi[i] - lo[i]).fold(0.0, f64::max);
        let center = Point((0..dim).map(|i| (lo[i] + hi[i]) / 2.0).collect());
        let boxes: Vec<Box> = cubes.iter().map(Box::from).collect();
        let union = BoxUnion::new(dim, &boxes);
        Ok(Region { cubes, bounding_box: Cube { center, side }, probes: Vec::new(), union })
    }

    /// Probe points with F > ξ, each dilated to its lattice cube at `level`.
    pub fn superlevel(points: &[Point], values: &[f64], xi: f64, level: i32) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::Binding { expected: points.len(), got: values.len() });
        }
        let hits: Vec<&Point> = points.iter().zip(values).filter(|(_, v)| **v > xi).map(|(p, _)| p).collect();
        let set: BTreeSet<StdCube> = hits.iter().map(|p| StdCube::containing(&p.0, level)).collect();
        let mut r = Self::cube_union(set.iter().map(|c| c.cube()).collect())?;
        r.probes = hits.into_iter().cloned().collect();
        Ok(r)
    }

    pub fn with_probes(mut self, probes: Vec<Point>) -> Self {
        self.probes = probes;
        self
    }

    pub fn dim(&self) -> usize {
        self.bounding_box.dim()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.union.interior_contains(p)
    }

    pub fn closed_inside(&self, c: &Cube) -> bool {
        self.union.closed_in_interior(&Box::from(c))
    }

    fn meets(&self, c: &Cube) -> bool {
        // some point of the open cube lies in Ω
        let b = Box::from(c);
        self.cubes.iter().any(|k| {
            let (a, bb) = (Box::from(k), &b);
            (0..self.dim()).all(|i| a.lo[i] < bb.hi[i] && bb.lo[i] < a.hi[i])
        })
    }

    pub fn dist_to_complement(&self, p: &[f64]) -> f64 {
        self.union.dist_to_complement(p)
    }

    /// Lebesgue measure of Ω (cell sum).
    pub fn volume(&self) -> f64 {
        let boxes: Vec<Box> = self.cubes.iter().map(Box::from).collect();
        union_volume(self.dim(), &boxes)
    }
}

fn union_volume(dim: usize, boxes: &[Box]) -> f64 {
    let mut cuts: Vec<Vec<f64>> = vec![Vec::new(); dim];
    for b in boxes {
        for i in 0..dim {
            cuts[i].push(b.lo[i]);
            cuts[i].push(b.hi[i]);
        }
    }
    for c in cuts.iter_mut() {
        c.sort_by(|a, b| a.partial_cmp(b).unwrap());
        c.dedup();
    }
    let n: Vec<usize> = cuts.iter().map(|c| c.len().saturating_sub(1)).collect();
    let total: usize = n.iter().product();
    let mut vol = 0.0;
    for flat in 0..total {
        let mut rem = flat;
        let mut mid = Vec::with_capacity(dim);
        let mut v = 1.0;
        for i in 0..dim {
            let k = rem % n[i];
            rem /= n[i];
            mid.push((cuts[i][k] + cuts[i][k + 1]) / 2.0);
            v *= cuts[i][k + 1] - cuts[i][k];
        }
        if boxes.iter().any(|b| (0..dim).all(|i| b.lo[i] <= mid[i] && mid[i] <= b.hi[i])) {
            vol += v;
        }
    }
    vol
}

#[derive(Clone, Debug, Serialize)]
pub struct WhitneyReport {
    /// closure(10Q) ⊂ Ω for every cube, interiors pairwise disjoint, parents fail
    pub property1: bool,
    pub maximal: bool,
    /// max over cubes of the least ρ with ρQ ∩ Ωᶜ ≠ ∅
    pub rho: f64,
    /// max over i of #{j : closure(10Q_i) ∩ closure(10Q_j) ≠ ∅}, j = i included
    pub rho0: usize,
    /// max side ratio among cubes whose 10-dilates meet
    pub side_ratio: f64,
    /// max over i of #{j : closure(10Q_i) ∩ Q_j ≠ ∅}
    pub rho0_cubes: usize,
    /// max side ratio among cubes with touching closures
    pub neighbor_ratio: f64,
    pub cube_count: usize,
    pub covered_volume: f64,
    pub region_volume: f64,
    pub unresolved: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct WhitneyFamily {
    pub cubes: Vec<StdCube>,
    pub rho: f64,
    pub rho0: usize,
    pub report: WhitneyReport,
}

/// Maximal dyadic cubes Q (levels ≤ `depth`) with closure(10Q) ⊂ Ω.
pub fn whitney_decompose(region: &Region, depth: i32) -> Result<WhitneyFamily> {
    let bb = &region.bounding_box;
    if !(bb.side > 0.0) {
        return Err(Error::Invalid("region has empty interior".into()));
    }
    let j0 = -(bb.side.log2().ceil() as i32) - 1;
    if depth < j0 {
        return Err(Error::Invalid("lattice depth above the region scale".into()));
    }
    let lo = bb.lo();
    let hi = bb.hi();
    let s0 = 2f64.powi(-j0);
    let dim = region.dim();
    // all level-j0 cubes meeting the bounding box
    let ranges: Vec<(i64, i64)> =
        (0..dim).map(|i| ((lo[i] / s0).floor() as i64, (hi[i] / s0).floor() as i64)).collect();
    let mut stack = Vec::new();
    let count: i64 = ranges.iter().map(|(a, b)| b - a + 1).product();
    for flat in 0..count {
        let mut rem = flat;
        let mut idx = Vec::with_capacity(dim);
        for (a, b) in &ranges {
            let n = b - a + 1;
            idx.push(a + rem % n);
            rem /= n;
        }
        stack.push(StdCube { level: j0, index: idx });
    }
    let mut cubes = Vec::new();
    let mut unresolved = Vec::new();
    while let Some(q) = stack.pop() {
        let c = q.cube();
        if region.closed_inside(&c.scaled(10.0)) {
            cubes.push(q);
        } else if region.meets(&c) {
            if q.level < depth {
                stack.extend(q.children());
            } else {
                unresolved.push(q);
            }
        }
    }
    cubes.sort();
    let missed: Vec<&Point> = region
        .probes
        .iter()
        .filter(|p| region.contains(&p.0) && !cubes.iter().any(|q| q.cube().contains_half_open(&p.0)))
        .collect();
    if !missed.is_empty() {
        return Err(Error::Decomposition(format!(
            "lattice depth {depth} insufficient; uncovered points: {:?}",
            missed.iter().take(8).map(|p| &p.0).collect::<Vec<_>>()
        )));
    }
    let report = validate_whitney(region, &cubes, unresolved.len());
    Ok(WhitneyFamily { rho: report.rho, rho0: report.rho0, cubes, report })
}

pub fn validate_whitney(region: &Region, cubes: &[StdCube], unresolved: usize) -> WhitneyReport {
    let set: BTreeSet<&StdCube> = cubes.iter().collect();
    let inside = cubes.iter().all(|q| region.closed_inside(&q.cube().scaled(10.0)));
    let disjoint = cubes.iter().all(|q| {
        let mut p = q.parent();
        for _ in 0..64 {
            if set.contains(&p) {
                return false;
            }
            p = p.parent();
        }
        true
    });
    let maximal = cubes.iter().all(|q| !region.closed_inside(&q.parent().cube().scaled(10.0)));
    let geo: Vec<Cube> = cubes.iter().map(|q| q.cube()).collect();
    let rho = geo
        .iter()
        .map(|c| 2.0 * region.dist_to_complement(&c.center.0) / c.side)
        .fold(0.0, f64::max);
    let dil: Vec<Cube> = geo.iter().map(|c| c.scaled(10.0)).collect();
    let mut rho0 = 0;
    let mut side_ratio = 1.0f64;
    for (i, a) in dil.iter().enumerate() {
        let mut n = 0;
        for (j, b) in dil.iter().enumerate() {
            if a.closed_intersects(b) {
                n += 1;
                side_ratio = side_ratio.max(geo[i].side / geo[j].side);
            }
        }
        rho0 = rho0.max(n);
    }
    let mut rho0_cubes = 0;
    let mut neighbor_ratio = 1.0f64;
    for (i, a) in dil.iter().enumerate() {
        let mut n = 0;
        for b in geo.iter() {
            if a.closed_intersects(b) {
                n += 1;
            }
            if geo[i].closed_intersects(b) {
                neighbor_ratio = neighbor_ratio.max(geo[i].side / b.side);
            }
        }
        rho0_cubes = rho0_cubes.max(n);
    }
    WhitneyReport {
        property1: inside && disjoint && maximal,
        maximal,
        rho,
        rho0,
        side_ratio,
        rho0_cubes,
        neighbor_ratio,
        cube_count: cubes.len(),
        covered_volume: geo.iter().map(|c| c.side.powi(c.dim() as i32)).sum(),
        region_volume: region.volume(),
        unresolved,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SelectedCube {
    pub whitney: StdCube,
    pub cube: Cube,
    pub small_boundary: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Subfamily {
    pub cubes: Vec<SelectedCube>,
    pub skipped: Vec<StdCube>,
    pub coverage: f64,
    pub omega_mass: f64,
    /// μ(∪Q̃)/μ(Ω)
    pub coverage_ratio: f64,
    pub target: f64,
    pub pass: bool,
}

/// Doubling small-boundary dilates Q_j ⊂ Q̃_j ⊂ 1.1Q_j, greedily selected to be
/// pairwise disjoint by descending μ(1.1Q_j).
pub fn select_doubling_subfamily(
    mu: &AtomicMeasure,
    region: &Region,
    fam: &WhitneyFamily,
    doubling: (f64, f64),
    c_small: f64,
    candidates: usize,
) -> Result<Subfamily> {
    let mut pool = Vec::new();
    let mut skipped = Vec::new();
    for q in &fam.cubes {
        let c = q.cube();
        let mass = mu.cube_mass(&c.scaled(1.1));
        if mass == 0.0 {
            continue;
        }
        match small_boundary_search_where(mu, &c, (1.0, 1.1), c_small, candidates, |d| {
            doubling_check(mu, d, doubling.0, doubling.1)
        }) {
            Ok(choice) if choice.pass => pool.push((mass, q.clone(), choice)),
            _ => skipped.push(q.clone()),
        }
    }
    pool.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(&b.1)));
    let mut chosen: Vec<SelectedCube> = Vec::new();
    for (_, q, choice) in pool {
        if chosen.iter().all(|s| !s.cube.overlaps_half_open(&choice.cube)) {
            chosen.push(SelectedCube { whitney: q, cube: choice.cube, small_boundary: choice.constant });
        }
    }
    let coverage: f64 = mu
        .atoms()
        .iter()
        .filter(|a| chosen.iter().any(|s| s.cube.contains_half_open(&a.x.0)))
        .map(|a| a.w)
        .sum();
    let omega_mass: f64 = mu.atoms().iter().filter(|a| region.contains(&a.x.0)).map(|a| a.w).sum();
    let ratio = if omega_mass > 0.0 { coverage / omega_mass } else { 1.0 };
    let target = 1.0 / (8.0 * fam.rho0 as f64);
    Ok(Subfamily { cubes: chosen, skipped, coverage, omega_mass, coverage_ratio: ratio, target, pass: ratio >= target })
}
