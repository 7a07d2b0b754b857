use std::collections::BTreeSet;

use num_complex::Complex64;
use serde::Serialize;

use crate::dyadic::{DyadicCube, GridIndex, ShiftedGrid};
use crate::error::{Error, Result};
use crate::geometry::{Box, BoxUnion, Cube};
use crate::measure::{AtomicMeasure, SampledFunction};

/// σ-averages over grid cubes.
pub struct Averages<'a> {
    pub sigma: &'a AtomicMeasure,
    pub index: GridIndex,
}

impl<'a> Averages<'a> {
    pub fn new(sigma: &'a AtomicMeasure, grid: &ShiftedGrid) -> Self {
        Averages { sigma, index: grid.index_points(sigma.atoms().iter().map(|a| &a.x)) }
    }

    pub fn mass(&self, c: &DyadicCube) -> f64 {
        self.index.atoms(c).iter().map(|&i| self.sigma.atoms()[i].w).sum()
    }

    pub fn integral(&self, f: &SampledFunction, c: &DyadicCube) -> Complex64 {
        self.index.atoms(c).iter().map(|&i| f.values[i] * self.sigma.atoms()[i].w).sum()
    }

    /// ⟨f⟩_c^σ; None when σ(c) = 0
    pub fn avg(&self, f: &SampledFunction, c: &DyadicCube) -> Option<Complex64> {
        let m = self.mass(c);
        (m > 0.0).then(|| self.integral(f, c) / m)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StoppingFamily {
    pub cubes: Vec<DyadicCube>,
    pub threshold: f64,
}

impl StoppingFamily {
    pub fn empty(threshold: f64) -> Self {
        StoppingFamily { cubes: Vec::new(), threshold }
    }

    /// Some member contains `c` (or equals it).
    pub fn covers(&self, grid: &ShiftedGrid, c: &DyadicCube) -> bool {
        self.cubes.iter().any(|t| grid.is_ancestor_or_self(t, c))
    }

    pub fn contains_point(&self, grid: &ShiftedGrid, p: &[f64]) -> bool {
        self.cubes.iter().any(|t| grid.locate(p, t.level).as_ref() == Some(t))
    }

    pub fn geometric(&self, grid: &ShiftedGrid) -> Vec<Cube> {
        self.cubes.iter().map(|c| grid.cube(c)).collect()
    }
}

fn nonempty_children(grid: &ShiftedGrid, idx: &GridIndex, c: &DyadicCube) -> Vec<DyadicCube> {
    grid.children(c).into_iter().filter(|k| !idx.atoms(k).is_empty()).collect()
}

/// Maximal cubes R with σ(R) > 0 and |⟨b⟩_R^σ| < η, found top-down.
pub fn stopping_cubes(b: &SampledFunction, sigma: &AtomicMeasure, grid: &ShiftedGrid, eta: f64) -> Result<StoppingFamily> {
    b.check(sigma)?;
    let av = Averages::new(sigma, grid);
    let mut out = Vec::new();
    let mut stack = vec![grid.root()];
    while let Some(c) = stack.pop() {
        let Some(mean) = av.avg(b, &c) else { continue };
        if mean.norm() < eta {
            out.push(c);
        } else {
            stack.extend(nonempty_children(grid, &av.index, &c));
        }
    }
    out.sort();
    Ok(StoppingFamily { cubes: out, threshold: eta })
}

pub struct TransitForest<'a> {
    pub grid: ShiftedGrid,
    pub av: Averages<'a>,
    pub cubes: BTreeSet<DyadicCube>,
}

impl<'a> TransitForest<'a> {
    pub fn contains(&self, c: &DyadicCube) -> bool {
        self.cubes.contains(c)
    }

    pub fn root(&self) -> DyadicCube {
        self.grid.root()
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    /// Transit cubes with at least one non-transit child of positive mass, or no children.
    pub fn leaves(&self) -> Vec<DyadicCube> {
        self.cubes
            .iter()
            .filter(|c| {
                let ch = nonempty_children(&self.grid, &self.av.index, c);
                ch.is_empty() || ch.iter().any(|k| self.av.mass(k) > 0.0 && !self.contains(k))
            })
            .cloned()
            .collect()
    }

    pub fn parent_closed(&self) -> bool {
        self.cubes.iter().all(|c| self.grid.parent(c).map(|p| self.contains(&p)).unwrap_or(true))
    }
}

/// 𝒟^{tr}: grid cubes P with σ(P) ≠ 0 and P ⊄ H ∪ T_w. `h` holds the closed pieces of H.
pub fn transit_cubes<'a>(
    grid: &ShiftedGrid,
    sigma: &'a AtomicMeasure,
    h: &[Cube],
    t: &StoppingFamily,
) -> Result<TransitForest<'a>> {
    let av = Averages::new(sigma, grid);
    if av.index.outside.iter().any(|&i| sigma.atoms()[i].w > 0.0) {
        return Err(Error::Invalid("sigma has atoms outside the top cube".into()));
    }
    if let Some(deep) = av.index.levels.last() {
        if let Some((k, v)) = deep.iter().find(|(_, v)| v.iter().filter(|&&i| sigma.atoms()[i].w > 0.0).count() > 1) {
            return Err(Error::Invalid(format!(
                "grid depth {} insufficient: leaf cube {:?} holds {} atoms",
                grid.max_depth,
                k,
                v.len()
            )));
        }
    }
    let mut boxes: Vec<Box> = h.iter().map(Box::from).collect();
    boxes.extend(t.geometric(grid).iter().map(Box::from));
    let union = (!boxes.is_empty()).then(|| BoxUnion::new(grid.dim, &boxes));
    let excluded = |c: &DyadicCube| match &union {
        Some(u) => u.covers_interior(&Box::from(&grid.cube(c))),
        None => false,
    };
    let mut cubes = BTreeSet::new();
    let mut stack = vec![grid.root()];
    while let Some(c) = stack.pop() {
        if av.mass(&c) > 0.0 && !excluded(&c) && !t.covers(grid, &c) {
            stack.extend(nonempty_children(grid, &av.index, &c));
            cubes.insert(c);
        }
    }
    Ok(TransitForest { grid: grid.clone(), av, cubes })
}

fn ratio_at(forest: &TransitForest, f: &SampledFunction, b: &SampledFunction, c: &DyadicCube) -> Result<Complex64> {
    let fa = forest.av.avg(f, c).unwrap_or_default();
    let ba = forest.av.avg(b, c).unwrap_or_default();
    if ba.norm() == 0.0 {
        return Err(Error::Assumption(format!("<b> = 0 on transit cube {c:?}")));
    }
    Ok(fa / ba)
}

/// Δ_P f = Σ_{P' ∈ ch(P)} A_{P'}(f) 1_{P'}, returned densely on the atoms of σ.
pub fn martingale_difference(
    f: &SampledFunction,
    b: &SampledFunction,
    sigma: &AtomicMeasure,
    p: &DyadicCube,
    forest: &TransitForest,
) -> Result<SampledFunction> {
    f.check(sigma)?;
    b.check(sigma)?;
    let mut out = vec![Complex64::default(); sigma.len()];
    for (i, v) in difference_sparse(f, b, p, forest)? {
        out[i] = v;
    }
    Ok(SampledFunction::new(out))
}

fn difference_sparse(
    f: &SampledFunction,
    b: &SampledFunction,
    p: &DyadicCube,
    forest: &TransitForest,
) -> Result<Vec<(usize, Complex64)>> {
    if !forest.contains(p) {
        return Err(Error::Invalid(format!("{p:?} is not a transit cube")));
    }
    let rp = ratio_at(forest, f, b, p)?;
    let mut out = Vec::new();
    for c in nonempty_children(&forest.grid, &forest.av.index, p) {
        let atoms = forest.av.index.atoms(&c);
        if forest.contains(&c) {
            let coef = ratio_at(forest, f, b, &c)? - rp;
            out.extend(atoms.iter().map(|&i| (i, coef * b.values[i])));
        } else {
            out.extend(atoms.iter().map(|&i| (i, f.values[i] - rp * b.values[i])));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct Term {
    pub cube: DyadicCube,
    /// (atom index, value) on the atoms of the cube
    pub values: Vec<(usize, Complex64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Expansion {
    pub terms: Vec<Term>,
    /// ‖f − Σ Δ_P f‖ / ‖f‖ in L²(σ)
    pub reconstruction_error: f64,
    /// Σ‖Δ_P f‖² / ‖f‖², the root term including 𝔼_{P₀}
    pub bessel_ratio: f64,
    /// max |∫Δ_P f dσ| / (‖f‖ σ(P)^{1/2}) over non-root P with all children transit
    pub mean_residual: f64,
}

/// f = 𝔼_{P₀} f + Σ_{P ∈ 𝒟^{tr}} Δ_P f.
pub fn expand(f: &SampledFunction, b: &SampledFunction, sigma: &AtomicMeasure, forest: &TransitForest) -> Result<Expansion> {
    f.check(sigma)?;
    b.check(sigma)?;
    let root = forest.root();
    if !forest.contains(&root) {
        return Err(Error::Decomposition("empty transit forest".into()));
    }
    let w: Vec<f64> = sigma.atoms().iter().map(|a| a.w).collect();
    let norm2: f64 = f.values.iter().zip(&w).map(|(v, w)| v.norm_sqr() * w).sum();
    let mut recon = vec![Complex64::default(); sigma.len()];
    let mut energy = 0.0;
    let mut mean_residual = 0.0f64;
    let mut terms = Vec::with_capacity(forest.len());
    for p in &forest.cubes {
        let mut vals = difference_sparse(f, b, p, forest)?;
        if *p == root {
            let r0 = ratio_at(forest, f, b, p)?;
            let mut dense: std::collections::BTreeMap<usize, Complex64> = vals.into_iter().collect();
            for &i in forest.av.index.atoms(p) {
                *dense.entry(i).or_default() += r0 * b.values[i];
            }
            vals = dense.into_iter().collect();
        } else {
            let ch = nonempty_children(&forest.grid, &forest.av.index, p);
            if ch.iter().all(|c| forest.contains(c) || forest.av.mass(c) == 0.0) {
                let int: Complex64 = vals.iter().map(|(i, v)| v * w[*i]).sum();
                let scale = norm2.sqrt() * forest.av.mass(p).sqrt();
                if scale > 0.0 {
                    mean_residual = mean_residual.max(int.norm() / scale);
                }
            }
        }
        for (i, v) in &vals {
            recon[*i] += v;
            energy += v.norm_sqr() * w[*i];
        }
        terms.push(Term { cube: p.clone(), values: vals });
    }
    let err2: f64 = f.values.iter().zip(&recon).zip(&w).map(|((a, b), w)| (a - b).norm_sqr() * w).sum();
    let (reconstruction_error, bessel_ratio) =
        if norm2 > 0.0 { (err2.sqrt() / norm2.sqrt(), energy / norm2) } else { (err2.sqrt(), 0.0) };
    Ok(Expansion { terms, reconstruction_error, bessel_ratio, mean_residual })
}

/// |⟨f⟩_R/⟨b⟩_R − ⟨f⟩_{R^{(r)}}/⟨b⟩_{R^{(r)}} − Σ_{k=1}^r B_{R^{(k−1)}}|, relative,
/// with B_{R^{(k−1)}} = ⟨b^{-1} Δ_{R^{(k)}} f⟩_{R^{(k−1)}}.
pub fn b_telescoping(
    f: &SampledFunction,
    b: &SampledFunction,
    sigma: &AtomicMeasure,
    forest: &TransitForest,
    r_cube: &DyadicCube,
    r: u32,
) -> Result<f64> {
    f.check(sigma)?;
    b.check(sigma)?;
    if !forest.contains(r_cube) {
        return Err(Error::Invalid(format!("{r_cube:?} is not a transit cube")));
    }
    let lhs = ratio_at(forest, f, b, r_cube)?;
    let top = forest.grid.ancestor(r_cube, r)?;
    let mut sum = ratio_at(forest, f, b, &top)?;
    for k in 1..=r {
        let child = forest.grid.ancestor(r_cube, k - 1)?;
        let parent = forest.grid.ancestor(r_cube, k)?;
        let d = difference_sparse(f, b, &parent, forest)?;
        let atoms: BTreeSet<usize> = forest.av.index.atoms(&child).iter().copied().collect();
        let mut num = Complex64::default();
        let mut mass = 0.0;
        for (i, v) in d {
            if atoms.contains(&i) {
                let w = sigma.atoms()[i].w;
                num += v / b.values[i] * w;
                mass += w;
            }
        }
        sum += num / mass;
    }
    Ok((lhs - sum).norm() / lhs.norm().max(1e-300))
}
