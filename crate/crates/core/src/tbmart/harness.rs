use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Cube, Point};
use crate::glstar::{gstar_localized_field, gstar_truncated_field, OperatorParams};
use crate::kernels::KernelSpec;
use crate::measure::{maximal_function, AtomicMeasure, ComplexMeasure, SampledFunction};

#[derive(Clone, Debug, Serialize)]
pub struct TestingReport {
    /// sup over the ζ grid
    pub sup_grid: f64,
    /// sup over all ζ > 0
    pub sup: f64,
    pub curve: Vec<(f64, f64)>,
    pub u_mass_ratio: f64,
}

/// sup_ζ ζ^s μ{x ∈ Q∖U_Q : g*_{λ,Q}(ν_Q)(x) > ζ} / ‖ν_Q‖, sampled at the atoms of μ.
#[allow(clippy::too_many_arguments)]
pub fn testing_condition(
    nu_q: &ComplexMeasure,
    mu: &AtomicMeasure,
    q: &Cube,
    u_q: &[Cube],
    s: f64,
    b1: f64,
    kernel: &KernelSpec,
    params: &OperatorParams,
    zeta_grid: &[f64],
) -> Result<TestingReport> {
    if !(s > 0.0) {
        return Err(Error::Invalid("s must be positive".into()));
    }
    let norm = nu_q.total_variation();
    let in_u = |p: &[f64]| u_q.iter().any(|c| c.contains_closed(p));
    let u_mass: f64 =
        nu_q.points.iter().zip(&nu_q.weights).filter(|(p, _)| in_u(&p.0)).map(|(_, w)| w.norm()).sum();
    if u_mass > norm / (16.0 * b1) * (1.0 + 1e-12) {
        return Err(Error::Assumption(format!("|nu_Q|(U_Q) = {u_mass} exceeds |nu_Q|/(16 B1)")));
    }
    let u_mass_ratio = if norm > 0.0 { u_mass / norm } else { 0.0 };
    if norm == 0.0 {
        return Ok(TestingReport { sup_grid: 0.0, sup: 0.0, curve: zeta_grid.iter().map(|z| (*z, 0.0)).collect(), u_mass_ratio });
    }
    let idx: Vec<usize> =
        (0..mu.len()).filter(|&i| q.contains_half_open(&mu.atoms()[i].x.0) && !in_u(&mu.atoms()[i].x.0)).collect();
    let xs: Vec<Point> = idx.iter().map(|&i| mu.atoms()[i].x.clone()).collect();
    let g = gstar_localized_field(nu_q, mu, kernel, params, q, &xs)?;
    let mut vals: Vec<(f64, f64)> = g.iter().zip(&idx).map(|(v, &i)| (v.value, mu.atoms()[i].w)).collect();
    vals.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut sup = 0.0f64;
    let mut cum = 0.0;
    for (k, (v, w)) in vals.iter().enumerate() {
        cum += w;
        if k + 1 == vals.len() || vals[k + 1].0 < *v {
            sup = sup.max(v.powf(s) * cum);
        }
    }
    let curve: Vec<(f64, f64)> = zeta_grid
        .iter()
        .map(|&z| (z, z.powf(s) * vals.iter().filter(|(v, _)| *v > z).map(|(_, w)| w).sum::<f64>() / norm))
        .collect();
    let sup_grid = curve.iter().map(|c| c.1).fold(0.0, f64::max);
    Ok(TestingReport { sup_grid, sup: sup / norm, curve, u_mass_ratio })
}

#[derive(Clone, Debug, Serialize)]
pub struct GoodLambdaRow {
    pub eps: f64,
    pub delta: f64,
    /// max over ξ of μ{g > (1+ε)ξ, Mf ≤ δξ}/μ{g > ξ}; None when every superlevel set is empty
    pub fraction: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GoodLambdaTable {
    pub rows: Vec<GoodLambdaRow>,
    pub target: f64,
    pub best: Option<GoodLambdaRow>,
    pub pass: bool,
}

/// Good-λ fractions for the t₀-truncated g* (t₀ = params.t_lo) against M_μ f.
#[allow(clippy::too_many_arguments)]
pub fn good_lambda_harness(
    f: &SampledFunction,
    mu: &AtomicMeasure,
    kernel: &KernelSpec,
    params: &OperatorParams,
    eps_grid: &[f64],
    delta_grid: &[f64],
    xi_grid: &[f64],
    theta: f64,
    rho0: f64,
) -> Result<GoodLambdaTable> {
    let xs: Vec<Point> = mu.atoms().iter().map(|a| a.x.clone()).collect();
    let g: Vec<f64> = gstar_truncated_field(f, mu, kernel, params, &xs)?.iter().map(|v| v.value).collect();
    let mf: Vec<f64> = xs.iter().map(|x| maximal_function(f, mu, x)).collect::<Result<_>>()?;
    let w: Vec<f64> = mu.atoms().iter().map(|a| a.w).collect();
    let mut rows = Vec::new();
    for &eps in eps_grid {
        for &delta in delta_grid {
            let mut best: Option<f64> = None;
            for &xi in xi_grid {
                let den: f64 = (0..w.len()).filter(|&i| g[i] > xi).map(|i| w[i]).sum();
                if den == 0.0 {
                    continue;
                }
                let num: f64 = (0..w.len()).filter(|&i| g[i] > (1.0 + eps) * xi && mf[i] <= delta * xi).map(|i| w[i]).sum();
                best = Some(best.map_or(num / den, |b: f64| b.max(num / den)));
            }
            rows.push(GoodLambdaRow { eps, delta, fraction: best });
        }
    }
    let target = 1.0 - theta / (16.0 * rho0);
    let best = rows
        .iter()
        .filter(|r| r.fraction.is_some())
        .min_by(|a, b| a.fraction.partial_cmp(&b.fraction).unwrap())
        .cloned();
    let pass = best.as_ref().and_then(|r| r.fraction).map(|v| v <= target).unwrap_or(false);
    Ok(GoodLambdaTable { rows, target, best, pass })
}
