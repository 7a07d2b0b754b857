//! Points, cubes and finite unions of axis-parallel boxes under the sup-norm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Invalid("point must have dimension >= 1".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Invalid(format!("non-finite coordinate in {coords:?}")));
        }
        Ok(Point(coords))
    }

    pub fn origin(dim: usize) -> Self {
        Point(vec![0.0; dim])
    }

    pub fn scalar(x: f64) -> Self {
        Point(vec![x])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn dist(&self, other: &Point) -> f64 {
        dist_inf(&self.0, &other.0)
    }

    pub fn translate(&self, v: &[f64]) -> Point {
        Point(self.0.iter().zip(v).map(|(a, b)| a + b).collect())
    }
}

#[inline]
pub fn dist_inf(a: &[f64], b: &[f64]) -> f64 {
    let mut d = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let e = (x - y).abs();
        if e > d {
            d = e;
        }
    }
    d
}

/// Axis-parallel cube given by center and side length.
///
/// Membership is half-open by default; `contains_closed` is the ball convention.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    pub center: Point,
    pub side: f64,
}

impl Cube {
    pub fn new(center: Point, side: f64) -> Result<Self> {
        if !(side > 0.0) || !side.is_finite() {
            return Err(Error::Invalid(format!("cube side must be positive, got {side}")));
        }
        Ok(Cube { center, side })
    }

    /// The sup-norm ball B(x, r) as a cube of side 2r.
    pub fn ball(x: &Point, r: f64) -> Self {
        Cube { center: x.clone(), side: 2.0 * r }
    }

    pub fn from_corners(lo: &[f64], side: f64) -> Self {
        Cube { center: Point(lo.iter().map(|l| l + side / 2.0).collect()), side }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    #[inline]
    pub fn radius(&self) -> f64 {
        self.side / 2.0
    }

    pub fn scaled(&self, a: f64) -> Cube {
        Cube { center: self.center.clone(), side: self.side * a }
    }

    pub fn lo(&self) -> Vec<f64> {
        self.center.0.iter().map(|c| c - self.side / 2.0).collect()
    }

    pub fn hi(&self) -> Vec<f64> {
        self.center.0.iter().map(|c| c + self.side / 2.0).collect()
    }

    pub fn contains_half_open(&self, p: &[f64]) -> bool {
        let h = self.side / 2.0;
        self.center.0.iter().zip(p).all(|(c, x)| *x >= c - h && *x < c + h)
    }

    pub fn contains_closed(&self, p: &[f64]) -> bool {
        dist_inf(&self.center.0, p) <= self.side / 2.0
    }

    /// sup-norm distance from `p` to the topological boundary of the cube.
    pub fn dist_to_boundary(&self, p: &[f64]) -> f64 {
        let h = self.side / 2.0;
        let d = dist_inf(&self.center.0, p);
        (d - h).abs()
    }

    /// sup-norm distance between the closed cubes.
    pub fn dist_cube(&self, other: &Cube) -> f64 {
        let h = (self.side + other.side) / 2.0;
        (dist_inf(&self.center.0, &other.center.0) - h).max(0.0)
    }

    /// Closed containment `self ⊆ other`.
    pub fn inside_closed(&self, other: &Cube) -> bool {
        dist_inf(&self.center.0, &other.center.0) + self.side / 2.0 <= other.side / 2.0
    }

    /// Half-open boxes overlap.
    pub fn overlaps_half_open(&self, other: &Cube) -> bool {
        let (a, b) = (self.lo(), other.lo());
        (0..self.dim()).all(|i| a[i] < b[i] + other.side && b[i] < a[i] + self.side)
    }

    pub fn closed_intersects(&self, other: &Cube) -> bool {
        dist_inf(&self.center.0, &other.center.0) <= (self.side + other.side) / 2.0
    }
}

/// Axis-parallel closed box with possibly infinite bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct Box {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl From<&Cube> for Box {
    fn from(c: &Cube) -> Self {
        Box { lo: c.lo(), hi: c.hi() }
    }
}

impl Box {
    pub fn dist_point(&self, p: &[f64]) -> f64 {
        let mut d = 0.0f64;
        for i in 0..p.len() {
            let e = (self.lo[i] - p[i]).max(p[i] - self.hi[i]).max(0.0);
            d = d.max(e);
        }
        d
    }
}

/// Union of closed boxes, resolved into elementary cells by coordinate
/// compression. Supports interior-containment queries and distance to the
/// complement of the interior.
#[derive(Clone, Debug)]
pub struct BoxUnion {
    dim: usize,
    // breakpoints per axis; cell k on axis i is (cuts[i][k-1], cuts[i][k]) with ±inf at the ends
    cuts: Vec<Vec<f64>>,
    covered: Vec<bool>,
    // summed-area table of uncovered cells, dims (len+2) per axis
    uncovered_sat: Vec<u32>,
    sat_strides: Vec<usize>,
}

impl BoxUnion {
    pub fn new(dim: usize, boxes: &[Box]) -> Self {
        let mut cuts: Vec<Vec<f64>> = vec![Vec::new(); dim];
        for b in boxes {
            for i in 0..dim {
                cuts[i].push(b.lo[i]);
                cuts[i].push(b.hi[i]);
            }
        }
        for c in cuts.iter_mut() {
            c.retain(|x| x.is_finite());
            c.sort_by(|a, b| a.partial_cmp(b).unwrap());
            c.dedup();
        }
        // cells per axis = cuts+1
        let ncell: Vec<usize> = cuts.iter().map(|c| c.len() + 1).collect();
        let total: usize = ncell.iter().product();
        // difference array over (ncell+1) per axis
        let dsize: Vec<usize> = ncell.iter().map(|n| n + 1).collect();
        let mut dstr = vec![1usize; dim];
        for i in 1..dim {
            dstr[i] = dstr[i - 1] * dsize[i - 1];
        }
        let dtotal: usize = dsize.iter().product();
        let mut diff = vec![0i32; dtotal];
        for b in boxes {
            let mut lo_idx = Vec::with_capacity(dim);
            let mut hi_idx = Vec::with_capacity(dim);
            let mut empty = false;
            for i in 0..dim {
                // cells strictly inside [lo, hi]: cell k spans (cuts[k-1], cuts[k])
                let l = cell_lower(&cuts[i], b.lo[i]);
                let h = cell_upper(&cuts[i], b.hi[i]);
                if l as isize > h {
                    empty = true;
                }
                lo_idx.push(l);
                hi_idx.push((h + 1).max(0) as usize);
            }
            if empty {
                continue;
            }
            for corner in 0..(1usize << dim) {
                let mut idx = 0;
                let mut sign = 1;
                for i in 0..dim {
                    if corner >> i & 1 == 1 {
                        idx += hi_idx[i] * dstr[i];
                        sign = -sign;
                    } else {
                        idx += lo_idx[i] * dstr[i];
                    }
                }
                diff[idx] += sign;
            }
        }
        prefix_sum(&mut diff, &dsize, &dstr);
        let mut covered = vec![false; total];
        for (flat, cov) in covered.iter_mut().enumerate() {
            let mut rem = flat;
            let mut didx = 0;
            for i in 0..dim {
                let k = rem % ncell[i];
                rem /= ncell[i];
                didx += k * dstr[i];
            }
            *cov = diff[didx] > 0;
        }
        // summed-area table of uncovered, shifted by one
        let ssize: Vec<usize> = ncell.iter().map(|n| n + 1).collect();
        let mut sstr = vec![1usize; dim];
        for i in 1..dim {
            sstr[i] = sstr[i - 1] * ssize[i - 1];
        }
        let stotal: usize = ssize.iter().product();
        let mut sat = vec![0u32; stotal];
        for (flat, cov) in covered.iter().enumerate() {
            if !*cov {
                let mut rem = flat;
                let mut sidx = 0;
                for i in 0..dim {
                    let k = rem % ncell[i];
                    rem /= ncell[i];
                    sidx += (k + 1) * sstr[i];
                }
                sat[sidx] += 1;
            }
        }
        prefix_sum_u32(&mut sat, &ssize, &sstr);
        BoxUnion { dim, cuts, covered, uncovered_sat: sat, sat_strides: sstr }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn count_uncovered(&self, lo: &[usize], hi: &[usize]) -> u32 {
        // inclusive cell ranges
        let mut total: i64 = 0;
        for corner in 0..(1usize << self.dim) {
            let mut idx = 0;
            let mut sign = 1i64;
            for i in 0..self.dim {
                if corner >> i & 1 == 1 {
                    idx += lo[i] * self.sat_strides[i];
                    sign = -sign;
                } else {
                    idx += (hi[i] + 1) * self.sat_strides[i];
                }
            }
            total += sign * self.uncovered_sat[idx] as i64;
        }
        total as u32
    }

    /// Is the open interior of `b` contained in the union (up to boundaries)?
    pub fn covers_interior(&self, b: &Box) -> bool {
        let mut lo = Vec::with_capacity(self.dim);
        let mut hi = Vec::with_capacity(self.dim);
        for i in 0..self.dim {
            // cells meeting the open interval (lo, hi)
            let c = &self.cuts[i];
            let l = c.partition_point(|x| *x <= b.lo[i]);
            let h = c.partition_point(|x| *x < b.hi[i]);
            if l > h {
                return true;
            }
            lo.push(l);
            hi.push(h);
        }
        self.count_uncovered(&lo, &hi) == 0
    }

    /// Is the closed box contained in the interior of the union?
    pub fn closed_in_interior(&self, b: &Box) -> bool {
        let mut lo = Vec::with_capacity(self.dim);
        let mut hi = Vec::with_capacity(self.dim);
        for i in 0..self.dim {
            // cells whose closure meets [lo, hi]
            let c = &self.cuts[i];
            let l = c.partition_point(|x| *x < b.lo[i]);
            let h = c.partition_point(|x| *x <= b.hi[i]);
            lo.push(l);
            hi.push(h.min(c.len()));
        }
        self.count_uncovered(&lo, &hi) == 0
    }

    /// Is the point in the interior of the union?
    pub fn interior_contains(&self, p: &[f64]) -> bool {
        self.closed_in_interior(&Box { lo: p.to_vec(), hi: p.to_vec() })
    }

    /// sup-norm distance from `p` to the complement of the interior.
    pub fn dist_to_complement(&self, p: &[f64]) -> f64 {
        let ncell: Vec<usize> = self.cuts.iter().map(|c| c.len() + 1).collect();
        let mut best = f64::INFINITY;
        for (flat, cov) in self.covered.iter().enumerate() {
            if *cov {
                continue;
            }
            let mut rem = flat;
            let mut d = 0.0f64;
            for i in 0..self.dim {
                let k = rem % ncell[i];
                rem /= ncell[i];
                let c = &self.cuts[i];
                let lo = if k == 0 { f64::NEG_INFINITY } else { c[k - 1] };
                let hi = if k == c.len() { f64::INFINITY } else { c[k] };
                d = d.max((lo - p[i]).max(p[i] - hi).max(0.0));
            }
            best = best.min(d);
        }
        best
    }
}

// first cell index whose open interval lies above `x`
fn cell_lower(cuts: &[f64], x: f64) -> usize {
    if x == f64::NEG_INFINITY {
        return 0;
    }
    cuts.partition_point(|c| *c < x) + 1
}

// last cell index whose open interval lies below `x` (may be -1)
fn cell_upper(cuts: &[f64], x: f64) -> isize {
    if x == f64::INFINITY {
        return cuts.len() as isize;
    }
    cuts.partition_point(|c| *c <= x) as isize - 1
}

fn prefix_sum(a: &mut [i32], size: &[usize], stride: &[usize]) {
    for ax in 0..size.len() {
        for flat in 0..a.len() {
            let k = (flat / stride[ax]) % size[ax];
            if k > 0 {
                a[flat] += a[flat - stride[ax]];
            }
        }
    }
}

fn prefix_sum_u32(a: &mut [u32], size: &[usize], stride: &[usize]) {
    for ax in 0..size.len() {
        for flat in 0..a.len() {
            let k = (flat / stride[ax]) % size[ax];
            if k > 0 {
                a[flat] += a[flat - stride[ax]];
            }
        }
    }
}
