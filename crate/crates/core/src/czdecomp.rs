//! Calderón–Zygmund decomposition of a complex measure against a possibly
//! non-doubling atomic μ, its audit, and the weak-(1,1) quotient of g*.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::Serialize;

use crate::dyadic::find_doubling_ancestor;
use crate::error::{Error, Result};
use crate::geometry::{dist_inf, Cube, Point};
use crate::glstar::{gstar_field, OperatorParams};
use crate::kernels::KernelSpec;
use crate::measure::{AtomicMeasure, ComplexMeasure};

/// Ratio tolerance for the strict and non-strict (C-Z-1)/(C-Z-2) comparisons.
const REL: f64 = 1e-12;

#[derive(Clone, Debug, Serialize)]
pub struct CzReport {
    /// min_i |ν|(Q_i) / (ξ2^{-(n+1)} μ(2Q_i)); must exceed 1
    pub cz1: f64,
    /// max over i and η > 2 of |ν|(ηQ_i) / (ξ2^{-(n+1)} μ(2ηQ_i)); must be ≤ 1
    pub cz2: f64,
    /// max |f| / ξ over atoms outside ∪Q_i
    pub cz3: f64,
    /// max_i |β_i(ℝⁿ)| / |ν|(Q_i)
    pub cz4: f64,
    /// sup_x Σ_i |φ_i(x)| / ξ
    pub cz5: f64,
    /// max_i μ(R_i)‖φ_i‖_∞ / |ν|(Q_i)
    pub cz6: f64,
    pub beta_ratio: f64,
    pub overlap: usize,
    pub pass: [bool; 6],
    pub beta_pass: bool,
}

impl CzReport {
    pub fn all_pass(&self) -> bool {
        self.pass.iter().all(|p| *p) && self.beta_pass
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CzResult {
    pub xi: f64,
    pub cubes: Vec<Cube>,
    /// density ν/μ at μ-atoms outside ∪Q_i, indexed by atom
    pub density: Vec<(usize, Complex64)>,
    pub r: Vec<Cube>,
    pub phi: Vec<(Cube, Complex64)>,
    #[serde(skip)]
    pub beta: Vec<ComplexMeasure>,
    pub beta_norms: Vec<f64>,
    pub report: CzReport,
}

fn threshold(xi: f64, dim: usize) -> f64 {
    xi / 2f64.powi(dim as i32 + 1)
}

struct Radial {
    nu: Vec<(f64, f64)>,
    mu: Vec<(f64, f64)>,
}

impl Radial {
    fn new(c: &[f64], nu: &[(Point, f64)], mu: &AtomicMeasure) -> Self {
        let mut a: Vec<(f64, f64)> = nu.iter().map(|(p, w)| (dist_inf(c, &p.0), *w)).collect();
        let mut b: Vec<(f64, f64)> = mu.atoms().iter().map(|x| (dist_inf(c, &x.x.0), x.w)).collect();
        a.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        b.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        for v in [&mut a, &mut b] {
            for i in 1..v.len() {
                v[i].1 += v[i - 1].1;
            }
        }
        Radial { nu: a, mu: b }
    }

    fn upto(v: &[(f64, f64)], r: f64) -> f64 {
        let k = v.partition_point(|(d, _)| *d <= r);
        if k == 0 {
            0.0
        } else {
            v[k - 1].1
        }
    }

    /// (|ν|(Q(c,s)), μ(2Q(c,s))) with closed cubes of side s
    fn masses(&self, s: f64) -> (f64, f64) {
        (Self::upto(&self.nu, s / 2.0), Self::upto(&self.mu, s))
    }

    /// sides at which either mass jumps
    fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.nu.iter().map(|(d, _)| 2.0 * d).chain(self.mu.iter().map(|(d, _)| *d)).collect();
        b.push(0.0);
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.dedup();
        b
    }
}

fn ratio(nu: f64, mu: f64, kappa: f64) -> f64 {
    if nu == 0.0 {
        0.0
    } else if mu == 0.0 {
        f64::INFINITY
    } else {
        nu / (kappa * mu)
    }
}

/// Largest admissible side at centre c: the last breakpoint interval [a,b) on
/// which (C-Z-1) holds, side max(a, b/2) so that every η > 2 leaves it.
fn candidate_side(rad: &Radial, kappa: f64) -> Result<Option<f64>> {
    let bp = rad.breakpoints();
    let mut last = None;
    for (k, &a) in bp.iter().enumerate() {
        let (n, m) = rad.masses(a);
        if ratio(n, m, kappa) > 1.0 + REL {
            last = Some(k);
        }
    }
    match last {
        None => Ok(None),
        Some(k) if k + 1 == bp.len() => Err(Error::Decomposition("(C-Z-1) holds at every scale".into())),
        Some(k) => Ok(Some(bp[k].max(bp[k + 1] / 2.0))),
    }
}

fn nu_atoms(nu: &ComplexMeasure) -> Vec<(Point, f64)> {
    nu.points.iter().zip(&nu.weights).map(|(p, w)| (p.clone(), w.norm())).filter(|(_, w)| *w > 0.0).collect()
}

/// Calderón–Zygmund decomposition at height ξ; `m` is the growth exponent of μ.
pub fn cz_decompose(nu: &ComplexMeasure, mu: &AtomicMeasure, xi: f64, m: f64) -> Result<CzResult> {
    let dim = mu.dim();
    if nu.dim != dim {
        return Err(Error::Dim { expected: dim, got: nu.dim });
    }
    let floor = 2f64.powi(dim as i32 + 1) * nu.total_variation() / mu.mass();
    if !(xi > floor) || !xi.is_finite() {
        return Err(Error::Invalid(format!("xi = {xi} must exceed 2^(n+1)|nu|/|mu| = {floor}")));
    }
    let kappa = threshold(xi, dim);
    let atoms = nu_atoms(nu);

    let mut cand: Vec<Cube> = Vec::new();
    for (p, _) in &atoms {
        let rad = Radial::new(&p.0, &atoms, mu);
        if let Some(s) = candidate_side(&rad, kappa)? {
            cand.push(Cube { center: p.clone(), side: s });
        }
    }
    // Besicovitch-style prune: by descending side, keep a cube unless its centre is already covered
    cand.sort_by(|a, b| b.side.partial_cmp(&a.side).unwrap().then_with(|| a.center.0.partial_cmp(&b.center.0).unwrap()));
    let mut cubes: Vec<Cube> = Vec::new();
    for c in cand {
        if !cubes.iter().any(|q| q.contains_closed(&c.center.0)) {
            cubes.push(c);
        }
    }

    let covered = |p: &[f64]| cubes.iter().any(|q| q.contains_closed(p));
    for (p, w) in &atoms {
        if !covered(&p.0) && mu.atoms().iter().all(|a| a.x != *p || a.w == 0.0) {
            return Err(Error::Decomposition(format!("nu not decomposable at scale: atom {:?} (|nu| = {w}) has no mu-mass", p.0)));
        }
    }
    let mut nu_at: BTreeMap<Vec<u64>, Complex64> = BTreeMap::new();
    for (p, w) in nu.points.iter().zip(&nu.weights) {
        *nu_at.entry(key(p)).or_default() += w;
    }
    let density: Vec<(usize, Complex64)> = mu
        .atoms()
        .iter()
        .enumerate()
        .filter(|(_, a)| a.w > 0.0 && !covered(&a.x.0))
        .map(|(i, a)| (i, nu_at.get(&key(&a.x)).copied().unwrap_or_default() / a.w))
        .collect();

    let mut r = Vec::with_capacity(cubes.len());
    let mut phi = Vec::with_capacity(cubes.len());
    let mut beta = Vec::with_capacity(cubes.len());
    for q in &cubes {
        let q2 = q.scaled(2.0);
        let k = find_doubling_ancestor(mu, &q2, 6.0, 6f64.powf(m + 1.0), 80)?;
        let ri = q2.scaled(6f64.powi(k as i32));
        let wnu = weighted(nu, &cubes, q);
        let mass_r = mu.cube_mass(&ri);
        let c = wnu.total() / mass_r;
        let mut pts = wnu.points.clone();
        let mut ws = wnu.weights.clone();
        for a in mu.atoms().iter().filter(|a| ri.contains_closed(&a.x.0)) {
            pts.push(a.x.clone());
            ws.push(-c * a.w);
        }
        beta.push(merge(ComplexMeasure::new(dim, pts, ws)?));
        phi.push((ri.clone(), c));
        r.push(ri);
    }
    let beta_norms = beta.iter().map(|b| b.total_variation()).collect();
    let mut out = CzResult { xi, cubes, density, r, phi, beta, beta_norms, report: empty_report() };
    out.report = validate_cz(&out, nu, mu);
    if !(out.report.cz2 <= 1.0 + REL) {
        return Err(Error::Decomposition(format!("(C-Z-2) violated, ratio {}", out.report.cz2)));
    }
    Ok(out)
}

fn key(p: &Point) -> Vec<u64> {
    p.0.iter().map(|x| (x + 0.0).to_bits()).collect()
}

fn merge(b: ComplexMeasure) -> ComplexMeasure {
    let mut acc: BTreeMap<Vec<u64>, (Point, Complex64)> = BTreeMap::new();
    for (p, w) in b.points.into_iter().zip(b.weights) {
        acc.entry(key(&p)).or_insert((p, Complex64::default())).1 += w;
    }
    let (points, weights) = acc.into_values().unzip();
    ComplexMeasure { dim: b.dim, points, weights }
}

/// w_i ν with w_i = 1_{Q_i} / Σ_k 1_{Q_k}
fn weighted(nu: &ComplexMeasure, cubes: &[Cube], q: &Cube) -> ComplexMeasure {
    let mut pts = Vec::new();
    let mut ws = Vec::new();
    for (p, w) in nu.points.iter().zip(&nu.weights) {
        if q.contains_closed(&p.0) {
            let n = cubes.iter().filter(|c| c.contains_closed(&p.0)).count() as f64;
            pts.push(p.clone());
            ws.push(w / n);
        }
    }
    ComplexMeasure { dim: nu.dim, points: pts, weights: ws }
}

fn empty_report() -> CzReport {
    CzReport {
        cz1: 0.0,
        cz2: 0.0,
        cz3: 0.0,
        cz4: 0.0,
        cz5: 0.0,
        cz6: 0.0,
        beta_ratio: 0.0,
        overlap: 0,
        pass: [false; 6],
        beta_pass: false,
    }
}

/// Audit of (C-Z-1)…(C-Z-6); (C-Z-2) is checked exactly at every mass breakpoint above 2ℓ(Q_i).
pub fn validate_cz(res: &CzResult, nu: &ComplexMeasure, mu: &AtomicMeasure) -> CzReport {
    let kappa = threshold(res.xi, mu.dim());
    let atoms = nu_atoms(nu);
    let vq: Vec<f64> = res.cubes.iter().map(|q| nu.variation_in_closed(q)).collect();

    let mut cz1 = f64::INFINITY;
    let mut cz2 = 0.0f64;
    for q in &res.cubes {
        let rad = Radial::new(&q.center.0, &atoms, mu);
        let (n, m) = rad.masses(q.side);
        cz1 = cz1.min(ratio(n, m, kappa));
        let lo = 2.0 * q.side;
        for s in std::iter::once(lo).chain(rad.breakpoints().into_iter().filter(|b| *b > lo)) {
            let (n, m) = rad.masses(s);
            cz2 = cz2.max(ratio(n, m, kappa));
        }
    }
    if res.cubes.is_empty() {
        cz1 = f64::INFINITY;
    }

    let cz3 = res.density.iter().map(|(_, f)| f.norm() / res.xi).fold(0.0, f64::max);

    let mut cz4 = 0.0f64;
    let mut beta_ratio = 0.0f64;
    let mut cz6 = 0.0f64;
    for (i, (ri, c)) in res.phi.iter().enumerate() {
        let denom = vq[i];
        if let Some(b) = res.beta.get(i) {
            cz4 = cz4.max(b.total().norm() / denom);
            beta_ratio = beta_ratio.max(b.total_variation() / denom);
        }
        cz6 = cz6.max(mu.cube_mass(ri) * c.norm() / denom);
    }

    let cz5 = mu
        .atoms()
        .iter()
        .map(|a| res.phi.iter().filter(|(r, _)| r.contains_closed(&a.x.0)).map(|(_, c)| c.norm()).sum::<f64>())
        .fold(0.0, f64::max)
        / res.xi;

    let overlap = nu
        .points
        .iter()
        .chain(mu.atoms().iter().map(|a| &a.x))
        .map(|p| res.cubes.iter().filter(|q| q.contains_closed(&p.0)).count())
        .max()
        .unwrap_or(0);

    CzReport {
        cz1,
        cz2,
        cz3,
        cz4,
        cz5,
        cz6,
        beta_ratio,
        overlap,
        pass: [cz1 > 1.0, cz2 <= 1.0 + REL, cz3 <= 1.0 + REL, cz4 <= 1e-12, cz5 <= 1.0, cz6 <= 1.0 + REL],
        beta_pass: beta_ratio <= 2.0 + REL,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Weak11Report {
    /// sup_ξ ξ μ{g*ν > ξ} / ‖ν‖, exact over all ξ
    pub sup: f64,
    pub curve: Vec<(f64, f64)>,
    pub excluded: usize,
    pub values: Vec<f64>,
}

/// Weak-(1,1) quotient of g*ν sampled at the atoms of μ.
pub fn weak11_harness(
    nu: &ComplexMeasure,
    mu: &AtomicMeasure,
    kernel: &KernelSpec,
    params: &OperatorParams,
    xi_grid: &[f64],
) -> Result<Weak11Report> {
    let norm = nu.total_variation();
    if norm == 0.0 {
        return Ok(Weak11Report {
            sup: 0.0,
            curve: xi_grid.iter().map(|x| (*x, 0.0)).collect(),
            excluded: 0,
            values: vec![0.0; mu.len()],
        });
    }
    let xs: Vec<Point> = mu.atoms().iter().map(|a| a.x.clone()).collect();
    let g = gstar_field(nu, mu, kernel, params, &xs)?;
    let mut excluded = 0;
    let mut vals: Vec<(f64, f64)> = Vec::new();
    for (v, a) in g.iter().zip(mu.atoms()) {
        if v.diverged {
            excluded += 1;
        } else {
            vals.push((v.value, a.w));
        }
    }
    vals.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    // ξ μ{g > ξ} is increasing on each [g_(k+1), g_(k)); its sup there is g_(k) μ{g ≥ g_(k)}
    let mut sup = 0.0f64;
    let mut cum = 0.0;
    for (k, (v, w)) in vals.iter().enumerate() {
        cum += w;
        if k + 1 == vals.len() || vals[k + 1].0 < *v {
            sup = sup.max(v * cum);
        }
    }
    let curve = xi_grid
        .iter()
        .map(|&xi| (xi, xi * vals.iter().filter(|(v, _)| *v > xi).map(|(_, w)| w).sum::<f64>() / norm))
        .collect();
    Ok(Weak11Report { sup: sup / norm, curve, excluded, values: g.iter().map(|v| v.value).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spikes(points: &[f64], w: &[f64]) -> ComplexMeasure {
        ComplexMeasure::new(
            1,
            points.iter().map(|x| Point::scalar(*x)).collect(),
            w.iter().map(|w| Complex64::new(*w, 0.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn nu_equal_mu_selects_nothing() {
        let mu = AtomicMeasure::uniform_grid(1, 32, 1.0);
        let nu = ComplexMeasure::from_measure(&mu);
        let res = cz_decompose(&nu, &mu, 4.5, 1.0).unwrap();
        assert!(res.cubes.is_empty());
        assert_eq!(res.density.len(), 32);
        for (_, f) in &res.density {
            assert!((f - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
        // scanning candidate cubes confirms (C-Z-1) fails everywhere
        for a in mu.atoms() {
            for k in 0..12 {
                let q = Cube::ball(&a.x, 2f64.powi(-k));
                assert!(nu.variation_in_closed(&q) <= 4.5 / 4.0 * mu.cube_mass(&q.scaled(2.0)));
            }
        }
    }

    #[test]
    fn single_spike() {
        let mu = AtomicMeasure::uniform_grid(1, 64, 1.0);
        let nu = spikes(&[0.3], &[0.5]);
        let xi = 2.0 * 4.0 * 0.5;
        let res = cz_decompose(&nu, &mu, xi, 1.0).unwrap();
        assert_eq!(res.cubes.len(), 1);
        assert!(res.cubes[0].contains_closed(&[0.3]));
        assert!(res.beta[0].total().norm() <= 1e-12 * 0.5);
        assert!(res.report.all_pass(), "{:?}", res.report);
    }

    #[test]
    fn threshold_enforced() {
        let mu = AtomicMeasure::uniform_grid(1, 16, 1.0);
        let nu = spikes(&[0.3], &[1.0]);
        assert!(cz_decompose(&nu, &mu, 4.0, 1.0).is_err());
        assert!(cz_decompose(&nu, &mu, 4.01, 1.0).is_ok());
    }

    #[test]
    fn planted_phi_defect_fails_cz6() {
        let mu = AtomicMeasure::uniform_grid(1, 64, 1.0);
        let nu = spikes(&[0.3, 0.71], &[0.5, 0.25]);
        let mut res = cz_decompose(&nu, &mu, 12.0, 1.0).unwrap();
        assert!(res.report.pass[5]);
        for p in res.phi.iter_mut() {
            p.1 *= 10.0;
        }
        assert!(!validate_cz(&res, &nu, &mu).pass[5]);
    }

    #[test]
    fn homogeneous_selection() {
        let mu = AtomicMeasure::uniform_grid(1, 64, 1.0);
        let nu = spikes(&[0.1, 0.5, 0.52], &[0.2, 0.3, 0.1]);
        let a = cz_decompose(&nu, &mu, 10.0, 1.0).unwrap();
        let b = cz_decompose(&nu.scaled(Complex64::new(3.0, 0.0)), &mu, 30.0, 1.0).unwrap();
        assert_eq!(a.cubes, b.cubes);
    }

    #[test]
    fn seeded_battery_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let mu = AtomicMeasure::uniform_grid(1, 128, 1.0);
            let n = rng.gen_range(1..6);
            let pts: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
            let nu = spikes(&pts, &w);
            let xi = 2.0 * 4.0 * nu.total_variation() / mu.mass();
            let res = cz_decompose(&nu, &mu, xi, 1.0).unwrap();
            assert!(res.report.all_pass(), "{:?}", res.report);
            assert!(res.report.overlap <= 2);
        }
    }

    #[test]
    fn weak11_zero_and_homogeneity() {
        let mu = AtomicMeasure::uniform_grid(1, 32, 1.0);
        let k = KernelSpec::model(1.0, 1.0).unwrap();
        let p = OperatorParams::default().with_t_lo(4.0 / 32.0);
        let z = weak11_harness(&ComplexMeasure::zero(1), &mu, &k, &p, &[1.0]).unwrap();
        assert_eq!(z.sup, 0.0);
        let nu = spikes(&[0.2, 0.5, 0.8], &[1.0, 0.5, 0.25]);
        let a = weak11_harness(&nu, &mu, &k, &p, &[]).unwrap();
        let b = weak11_harness(&nu.scaled(Complex64::new(2.0, 0.0)), &mu, &k, &p, &[]).unwrap();
        assert!(a.sup > 0.0 && a.sup.is_finite());
        assert!((a.sup - b.sup).abs() <= 1e-9 * a.sup);
    }
}
