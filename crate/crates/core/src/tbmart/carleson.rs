use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forest::TransitForest;
use crate::dyadic::{is_good, DyadicCube, ShiftedGrid};
use crate::error::{Error, Result};
use crate::geometry::Cube;
use crate::glstar::{integrate_log, SquareEngine};
use crate::kernels::KernelSpec;
use crate::measure::{AtomicMeasure, ComplexMeasure, SampledFunction};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CarlesonParams {
    pub lambda: f64,
    /// lower t cutoff, > 0
    pub t_lo: f64,
    pub xi0: f64,
    pub r: u32,
    pub gamma: f64,
    /// sub-intervals per dyadic band (even)
    pub sub: usize,
}

/// Dyadic bands (ℓ/2, min(ℓ, ℓ(Q))) ∩ (t_lo, ∞) for every grid side ℓ above t_lo.
/// Returns (level, nodes) per nonempty band.
pub fn band_grid(grid: &ShiftedGrid, q_side: f64, t_lo: f64, sub: usize) -> Vec<(u32, Vec<f64>)> {
    let mut out = Vec::new();
    for level in 0..64u32 {
        let s = grid.side(level);
        let lo = (s / 2.0).max(t_lo);
        let hi = s.min(q_side);
        if s / 2.0 < t_lo && hi <= lo {
            break;
        }
        if hi > lo {
            let nodes = (0..=sub).map(|k| if k == sub { hi } else { lo * (hi / lo).powf(k as f64 / sub as f64) }).collect();
            out.push((level, nodes));
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct CarlesonLedger {
    pub a: Vec<(DyadicCube, f64)>,
    /// sup_S Σ_{P⊂S} a_P / σ(S)
    pub carleson_constant: f64,
    pub worst_cube: Option<DyadicCube>,
    /// ∫_{ℓ≥t≥t_lo} J dt/t per σ-atom (squared truncated g*)
    pub g2: Vec<f64>,
    pub s0: Vec<bool>,
    /// Σ_{P⊂S} a_P ≤ ∫_S g̃*² dσ on every S
    pub audit_direct: bool,
    /// ∫_S g̃*² dσ ≤ ξ₀² σ(S) on every S
    pub audit_xi0: bool,
    /// Σ_S |⟨f⟩_S|² a_S / ‖f‖² per probe
    pub embedding: Vec<f64>,
    pub good_cubes: usize,
    pub bad_cubes: usize,
}

/// a_P = Σ_{R good, transit, R^{(r)} = P} ∫_{R∖S₀} ∫_{ℓ(R)/2}^{min(ℓ(R),ℓ(Q))} J(x,t) dt/t dσ(x),
/// J built from θ_t^σ b against μ; S₀ = {g*_{λ,σ,Q}(b) > ξ₀}.
#[allow(clippy::too_many_arguments)]
pub fn carleson_ledger(
    b: &SampledFunction,
    sigma: &AtomicMeasure,
    mu: &AtomicMeasure,
    forest: &TransitForest,
    q: &Cube,
    kernel: &KernelSpec,
    params: &CarlesonParams,
    probes: &[SampledFunction],
) -> Result<CarlesonLedger> {
    b.check(sigma)?;
    if !(params.t_lo > 0.0) {
        return Err(Error::Invalid("Carleson ledger needs t_lo > 0".into()));
    }
    if params.sub < 2 || params.sub % 2 == 1 {
        return Err(Error::Invalid("band sub-interval count must be even and >= 2".into()));
    }
    let grid = &forest.grid;
    let bands = band_grid(grid, q.side, params.t_lo, params.sub);
    let nodes: Vec<f64> = bands.iter().flat_map(|(_, n)| n.iter().copied()).collect();
    let source = ComplexMeasure::from_density(sigma, b)?;
    let engine = SquareEngine::new(kernel, &source, mu, params.lambda, nodes);
    let width = params.sub + 1;
    // band integrals per atom, keyed by band position
    let band_vals: Vec<Vec<f64>> = sigma
        .atoms()
        .par_iter()
        .map(|a| {
            if a.w == 0.0 {
                return vec![0.0; bands.len()];
            }
            let j = engine.integrand(&a.x.0);
            bands
                .iter()
                .enumerate()
                .map(|(k, (_, n))| integrate_log(n, &j[k * width..(k + 1) * width]).0.max(0.0))
                .collect()
        })
        .collect();
    let g2: Vec<f64> = band_vals.iter().map(|v| v.iter().sum()).collect();
    let s0: Vec<bool> = g2.iter().map(|g| g.sqrt() > params.xi0).collect();
    let band_of: BTreeMap<u32, usize> = bands.iter().enumerate().map(|(k, (l, _))| (*l, k)).collect();

    let w = |i: usize| sigma.atoms()[i].w;
    let mut a: BTreeMap<DyadicCube, f64> = BTreeMap::new();
    let (mut good_cubes, mut bad_cubes) = (0, 0);
    for rc in &forest.cubes {
        if rc.level <= params.r {
            continue;
        }
        let Some(&k) = band_of.get(&rc.level) else { continue };
        if !is_good(&grid.cube(rc), grid, params.r, params.gamma)?.good {
            bad_cubes += 1;
            continue;
        }
        good_cubes += 1;
        let contrib: f64 = forest.av.index.atoms(rc).iter().filter(|&&i| !s0[i]).map(|&i| w(i) * band_vals[i][k]).sum();
        *a.entry(grid.ancestor(rc, params.r)?).or_default() += contrib;
    }

    let mut agg: BTreeMap<DyadicCube, f64> = BTreeMap::new();
    for (p, v) in &a {
        for k in 0..=p.level {
            *agg.entry(grid.ancestor(p, k)?).or_default() += v;
        }
    }
    let mut carleson_constant = 0.0f64;
    let mut worst_cube = None;
    let mut audit_direct = true;
    let mut audit_xi0 = true;
    for s in forest.av.index.cubes() {
        let ms = forest.av.mass(&s);
        if ms == 0.0 {
            continue;
        }
        let sum = agg.get(&s).copied().unwrap_or(0.0);
        let direct: f64 = forest.av.index.atoms(&s).iter().filter(|&&i| !s0[i]).map(|&i| w(i) * g2[i]).sum();
        audit_direct &= sum <= direct * (1.0 + 1e-9) + f64::MIN_POSITIVE;
        audit_xi0 &= direct <= params.xi0.powi(2) * ms * (1.0 + 1e-12);
        if sum / ms > carleson_constant {
            carleson_constant = sum / ms;
            worst_cube = Some(s);
        }
    }
    let embedding = probes
        .iter()
        .map(|f| {
            let norm2: f64 = f.values.iter().zip(sigma.atoms()).map(|(v, a)| v.norm_sqr() * a.w).sum();
            let s: f64 = a.iter().map(|(p, v)| forest.av.avg(f, p).map(|m| m.norm_sqr()).unwrap_or(0.0) * v).sum();
            if norm2 > 0.0 {
                s / norm2
            } else {
                0.0
            }
        })
        .collect();
    Ok(CarlesonLedger {
        a: a.into_iter().collect(),
        carleson_constant,
        worst_cube,
        g2,
        s0,
        audit_direct,
        audit_xi0,
        embedding,
        good_cubes,
        bad_cubes,
    })
}
