use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use super::config::{ConfigError, CubeSpec, Loaded};
use super::{num, Experiment, Outcome, Table};
use crate::czdecomp::{cz_decompose, validate_cz, weak11_harness};
use crate::dyadic::{bad_probability, grid_exponent, sample_shift, ShiftedGrid};
use crate::geometry::{Cube, Point};
use crate::glstar::{gstar_field, gstar_localized_field, gstar_truncated_field, OperatorParams};
use crate::measure::{AtomicMeasure, SampledFunction};
use crate::rbmo::{rbmo_battery, BatteryParams};
use crate::tbmart::{
    big_piece_gq, carleson_ledger, expand, good_lambda_harness, stopping_cubes, transit_cubes, CarlesonParams,
};
use crate::whitney::{select_doubling_subfamily, whitney_decompose, Region};

pub fn dispatch(e: Experiment, l: &Loaded, seed: u64) -> Result<Outcome, ConfigError> {
    match e {
        Experiment::Eval => eval(l),
        Experiment::Goodbad => goodbad(l, seed),
        Experiment::Whitney => whitney(l),
        Experiment::Cz => cz(l),
        Experiment::Weak11 => weak11(l),
        Experiment::Tb => tb(l, seed),
        Experiment::Goodlambda => goodlambda(l),
        Experiment::Rbmo => rbmo(l),
        Experiment::Bessel => bessel(l, seed),
    }
}

fn lib(l: &Loaded) -> impl Fn(crate::Error) -> ConfigError + '_ {
    move |e| ConfigError { file: l.path.clone(), line: None, msg: e.to_string() }
}

fn coords(p: &Point) -> Vec<String> {
    p.0.iter().map(|x| num(*x)).collect()
}

fn coord_cols(prefix: &str, dim: usize) -> Vec<String> {
    (0..dim).map(|i| format!("{prefix}{i}")).collect()
}

fn table(file: &str, lead: &[&str], dim_prefix: Option<(&str, usize)>, tail: &[&str]) -> Table {
    let mut cols: Vec<String> = lead.iter().map(|s| s.to_string()).collect();
    if let Some((p, d)) = dim_prefix {
        cols.extend(coord_cols(p, d));
    }
    cols.extend(tail.iter().map(|s| s.to_string()));
    Table { file: file.to_string(), columns: cols, rows: Vec::new() }
}

fn truncated(p: OperatorParams, mu: &AtomicMeasure) -> OperatorParams {
    if p.t_lo > 0.0 {
        p
    } else {
        p.with_t_lo(mu.resolution())
    }
}

/// Smallest cube containing every atom, padded so the closed atoms sit inside.
fn bounding_cube(mu: &AtomicMeasure) -> crate::Result<Cube> {
    let d = mu.dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for a in mu.atoms() {
        for i in 0..d {
            lo[i] = lo[i].min(a.x.0[i]);
            hi[i] = hi[i].max(a.x.0[i]);
        }
    }
    let side = (0..d).map(|i| hi[i] - lo[i]).fold(0.0, f64::max);
    let side = if side > 0.0 { side * (1.0 + 1e-9) } else { mu.resolution().max(1.0) };
    Cube::new(Point((0..d).map(|i| (lo[i] + hi[i]) / 2.0).collect()), side)
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Expect {
    value: f64,
    tol: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct EvalSettings {
    /// localize t to (t_lo, ℓ(Q))
    cube: Option<CubeSpec>,
    expect: Option<Expect>,
}

fn eval(l: &Loaded) -> Result<Outcome, ConfigError> {
    let s: EvalSettings = l.settings()?;
    let mu = l.mu()?;
    let nu = l.nu(&mu)?;
    let k = l.kernel(mu.dim())?;
    let p = l.params()?;
    let xs = l.points(&mu)?;
    let vals = match &s.cube {
        Some(c) => {
            let q = c.cube().map_err(|e| l.error_at("cube", e.to_string()))?;
            gstar_localized_field(&nu, &mu, &k, &p, &q, &xs)
        }
        None => gstar_field(&nu, &mu, &k, &p, &xs),
    }
    .map_err(lib(l))?;
    let mut out = Outcome::default();
    let mut t = table("eval.csv", &[], Some(("x", mu.dim())), &["value", "diverged", "quadrature_error"]);
    for (x, v) in xs.iter().zip(&vals) {
        let mut row = coords(x);
        row.extend([num(v.value), v.diverged.to_string(), num(v.quadrature_error)]);
        t.push(row);
    }
    let diverged = vals.iter().filter(|v| v.diverged).count();
    out.constant("max_value", vals.iter().filter(|v| !v.diverged).map(|v| v.value).fold(0.0, f64::max));
    out.constant("max_quadrature_error", vals.iter().map(|v| v.quadrature_error).fold(0.0, f64::max));
    out.constant("diverged", diverged);
    out.audit("finite_values", diverged == 0);
    out.refs.push("square function evaluation".into());
    if let Some(e) = &s.expect {
        let worst = vals.iter().map(|v| (v.value - e.value).abs()).fold(0.0, f64::max);
        out.constant("max_abs_error_vs_expected", worst);
        out.audit("closed_form", worst <= e.tol);
        out.refs.push("one-atom closed form".into());
    }
    out.tables.push(t);
    Ok(out)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct GoodbadSettings {
    dim: usize,
    cube_side: f64,
    seed_side: f64,
    r_values: Vec<u32>,
    gamma: f64,
    trials: usize,
}

impl Default for GoodbadSettings {
    fn default() -> Self {
        GoodbadSettings {
            dim: 1,
            cube_side: 2f64.powi(-12),
            seed_side: 1.0,
            r_values: (4..=10).collect(),
            gamma: 0.5,
            trials: 4000,
        }
    }
}

/// Least-squares slope of y against x.
pub(crate) fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let num: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

fn goodbad(l: &Loaded, seed: u64) -> Result<Outcome, ConfigError> {
    let s: GoodbadSettings = l.settings()?;
    if s.r_values.len() < 2 || s.dim == 0 {
        return Err(l.error_at("settings", "need dim >= 1 and at least two r values"));
    }
    let seed_cube = Cube::new(Point(vec![0.5 * s.seed_side; s.dim]), s.seed_side).map_err(lib(l))?;
    let i = Cube::new(Point(vec![0.3 * s.seed_side; s.dim]), s.cube_side).map_err(lib(l))?;
    let mut t = Table::new("goodbad.csv", &["r", "estimate", "ci_lo", "ci_hi", "trials", "vacuous"]);
    let mut est = Vec::new();
    for &r in &s.r_values {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let e = bad_probability(&i, &seed_cube, r, s.gamma, s.trials, &mut rng).map_err(lib(l))?;
        t.push(vec![r.to_string(), num(e.estimate), num(e.ci_lo), num(e.ci_hi), e.trials.to_string(), e.vacuous.to_string()]);
        est.push(e);
    }
    let floor = 0.5 / s.trials as f64;
    let xs: Vec<f64> = s.r_values.iter().map(|r| *r as f64).collect();
    let ys: Vec<f64> = est.iter().map(|e| e.estimate.max(floor).ln()).collect();
    let k = slope(&xs, &ys);
    let (first, last) = (&est[0], &est[est.len() - 1]);
    let mut out = Outcome::default();
    out.constant("log_slope", k);
    out.constant("gamma", s.gamma);
    out.audit("decay_in_r", k < 0.0);
    out.audit("ci_separated", last.ci_hi < first.ci_lo);
    out.refs.push("bad-cube probability decay".into());
    out.tables.push(t);
    Ok(out)
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum RegionSpec {
    CubeUnion { cubes: Vec<CubeSpec> },
    /// {g*_{t₀}(f) > ξ} at the atoms of the measure, dilated to lattice cubes
    Superlevel { xi: f64, level: i32 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SubfamilySpec {
    c_small: f64,
    candidates: usize,
}

impl Default for SubfamilySpec {
    fn default() -> Self {
        SubfamilySpec { c_small: 100.0, candidates: 11 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WhitneySettings {
    region: RegionSpec,
    #[serde(default = "default_depth")]
    depth: i32,
    subfamily: Option<SubfamilySpec>,
    #[serde(default = "rho_max")]
    rho_max: f64,
    #[serde(default = "rho0_max")]
    rho0_max: usize,
}

fn default_depth() -> i32 {
    8
}
fn rho_max() -> f64 {
    22.0
}
fn rho0_max() -> usize {
    9
}

impl Default for WhitneySettings {
    fn default() -> Self {
        WhitneySettings {
            region: RegionSpec::CubeUnion { cubes: Vec::new() },
            depth: default_depth(),
            subfamily: None,
            rho_max: rho_max(),
            rho0_max: rho0_max(),
        }
    }
}

fn whitney(l: &Loaded) -> Result<Outcome, ConfigError> {
    let s: WhitneySettings = l.settings()?;
    let mu = if l.cfg.measure.is_some() { Some(l.mu()?) } else { None };
    let region = match &s.region {
        RegionSpec::CubeUnion { cubes } => {
            let cs = cubes.iter().map(|c| c.cube()).collect::<crate::Result<Vec<_>>>().map_err(|e| l.error_at("cubes", e.to_string()))?;
            Region::cube_union(cs).map_err(|e| l.error_at("region", e.to_string()))?
        }
        RegionSpec::Superlevel { xi, level } => {
            let mu = mu.as_ref().ok_or_else(|| l.error_at("region", "superlevel regions need a measure"))?;
            let f = l.function_or("function", mu, Complex64::new(1.0, 0.0))?;
            let k = l.kernel(mu.dim())?;
            let p = truncated(l.params()?, mu);
            let xs: Vec<Point> = mu.atoms().iter().map(|a| a.x.clone()).collect();
            let g: Vec<f64> = gstar_truncated_field(&f, mu, &k, &p, &xs).map_err(lib(l))?.iter().map(|v| v.value).collect();
            Region::superlevel(&xs, &g, *xi, *level).map_err(|e| l.error_at("region", e.to_string()))?
        }
    };
    let fam = whitney_decompose(&region, s.depth).map_err(lib(l))?;
    let r = &fam.report;
    let dim = region.dim();
    let mut t = table("whitney.csv", &["level"], Some(("index", dim)), &["side"]);
    for q in &fam.cubes {
        let mut row = vec![q.level.to_string()];
        row.extend(q.index.iter().map(|i| i.to_string()));
        row.push(num(q.side()));
        t.push(row);
    }
    let mut out = Outcome::default();
    out.constant("rho", r.rho);
    out.constant("rho0", r.rho0);
    out.constant("rho0_cubes", r.rho0_cubes);
    out.constant("side_ratio", r.side_ratio);
    out.constant("neighbor_ratio", r.neighbor_ratio);
    out.constant("cube_count", r.cube_count);
    out.constant("covered_volume", r.covered_volume);
    out.constant("region_volume", r.region_volume);
    out.constant("unresolved", r.unresolved);
    out.audit("whitney_properties", r.property1 && r.maximal);
    out.audit("rho_bound", r.rho <= s.rho_max);
    out.audit("rho0_bound", r.rho0 <= s.rho0_max);
    out.refs.push("Whitney decomposition properties".into());
    if let Some(sf) = &s.subfamily {
        let mu = mu.as_ref().ok_or_else(|| l.error_at("subfamily", "needs a measure"))?;
        let sub = select_doubling_subfamily(mu, &region, &fam, (9.0, 2.0 * fam.rho0 as f64), sf.c_small, sf.candidates)
            .map_err(lib(l))?;
        out.constant("coverage_ratio", sub.coverage_ratio);
        out.constant("coverage_target", sub.target);
        out.constant("selected", sub.cubes.len());
        out.audit("subfamily_coverage", sub.pass);
        out.refs.push("doubling subfamily coverage".into());
        let mut ts = table("whitney_subfamily.csv", &["level"], Some(("center", dim)), &["side", "small_boundary"]);
        for c in &sub.cubes {
            let mut row = vec![c.whitney.level.to_string()];
            row.extend(coords(&c.cube.center));
            row.extend([num(c.cube.side), num(c.small_boundary)]);
            ts.push(row);
        }
        out.tables.push(ts);
    }
    out.tables.insert(0, t);
    Ok(out)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct CzSettings {
    xi: Option<f64>,
    m: Option<f64>,
}

fn cz(l: &Loaded) -> Result<Outcome, ConfigError> {
    let s: CzSettings = l.settings()?;
    let mu = l.mu()?;
    let nu = l.nu(&mu)?;
    let n = mu.dim();
    let xi = s.xi.unwrap_or(2.0 * 2f64.powi(n as i32 + 1) * nu.total_variation() / mu.mass());
    let res = cz_decompose(&nu, &mu, xi, s.m.unwrap_or(n as f64)).map_err(lib(l))?;
    let rep = validate_cz(&res, &nu, &mu);
    let mut t = table("cz_cubes.csv", &["id"], Some(("center", n)), &["side", "r_side", "beta_norm", "variation"]);
    for (i, q) in res.cubes.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(coords(&q.center));
        row.extend([num(q.side), num(res.r[i].side), num(res.beta_norms[i]), num(nu.variation_in_closed(q))]);
        t.push(row);
    }
    let mut out = Outcome::default();
    out.constant("xi", xi);
    for (k, v) in [("cz1", rep.cz1), ("cz2", rep.cz2), ("cz3", rep.cz3), ("cz4", rep.cz4), ("cz5", rep.cz5), ("cz6", rep.cz6)] {
        out.constant(k, v);
    }
    out.constant("beta_ratio", rep.beta_ratio);
    out.constant("overlap", rep.overlap);
    out.constant("cubes", res.cubes.len());
    for (i, p) in rep.pass.iter().enumerate() {
        out.audit(&format!("cz{}", i + 1), *p);
    }
    out.audit("beta_norm", rep.beta_pass);
    out.refs.push("Calderon-Zygmund decomposition".into());
    out.tables.push(t);
    Ok(out)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct Weak11Settings {
    xi_grid: Option<Vec<f64>>,
    bound: Option<f64>,
}

fn weak11(l: &Loaded) -> Result<Outcome, ConfigError> {
    let s: Weak11Settings = l.settings()?;
    let mu = l.mu()?;
    let nu = l.nu(&mu)?;
    let k = l.kernel(mu.dim())?;
    let p = truncated(l.params()?, &mu);
    let scale = nu.total_variation() / mu.mass().max(f64::MIN_POSITIVE);
    let grid = s.xi_grid.clone().unwrap_or_else(|| (-8..=8).map(|j| scale * 2f64.powi(j)).collect());
    let rep = weak11_harness(&nu, &mu, &k, &p, &grid).map_err(lib(l))?;
    let mut t = Table::new("weak11.csv", &["xi", "quotient"]);
    for (x, q) in &rep.curve {
        t.push(vec![num(*x), num(*q)]);
    }
    let mut out = Outcome::default();
    out.constant("sup", rep.sup);
    out.constant("excluded", rep.excluded);
    out.constant("t_lo", p.t_lo);
    out.audit("finite_quotient", rep.sup.is_finite());
    if let Some(b) = s.bound {
        out.audit("quotient_bound", rep.sup <= b);
    }
    out.refs.push("weak (1,1) bound for measures".into());
    out.tables.push(t);
    Ok(out)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TbSettings {
    cube: Option<CubeSpec>,
    shift: Option<Vec<f64>>,
    depth: u32,
    /// stopping threshold for |⟨b⟩|
    eta: f64,
    r: u32,
    gamma: f64,
    xi0: f64,
    sub: usize,
    trials: usize,
    /// G_Q parameters
    big_eta: f64,
    delta0: f64,
}

impl Default for TbSettings {
    fn default() -> Self {
        TbSettings {
            cube: None,
            shift: None,
            depth: 14,
            eta: 0.25,
            r: 4,
            gamma: 0.5,
            xi0: 1e6,
            sub: 8,
            trials: 200,
            big_eta: 0.25,
            delta0: 0.5,
        }
    }
}

fn grid_for(l: &Loaded, q: &Cube, shift: Option<&Vec<f64>>, depth: u32, rng: &mut ChaCha8Rng) -> Result<ShiftedGrid, ConfigError> {
    let w = match shift {
        Some(w) => Point(w.clone()),
        None => sample_shift(rng, grid_exponent(q.side), q.dim()),
    };
    ShiftedGrid::new(q, w, depth).map_err(|e| l.error_at("shift", e.to_string()))
}

fn tb(l: &Loaded, seed: u64) -> Result<Outcome, ConfigError> {
    let s: TbSettings = l.settings()?;
    let sigma = l.mu()?;
    let b = l.function_or("b", &sigma, Complex64::new(1.0, 0.0))?;
    let f = l.function_or("function", &sigma, Complex64::new(1.0, 0.0))?;
    let k = l.kernel(sigma.dim())?;
    let p = truncated(l.params()?, &sigma);
    let q = match &s.cube {
        Some(c) => c.cube().map_err(|e| l.error_at("cube", e.to_string()))?,
        None => bounding_cube(&sigma).map_err(lib(l))?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = grid_for(l, &q, s.shift.as_ref(), s.depth, &mut rng)?;
    let stop = stopping_cubes(&b, &sigma, &grid, s.eta).map_err(lib(l))?;
    let forest = transit_cubes(&grid, &sigma, &[], &stop).map_err(lib(l))?;
    let exp = expand(&f, &b, &sigma, &forest).map_err(lib(l))?;
    let cp = CarlesonParams { lambda: p.lambda, t_lo: p.t_lo, xi0: s.xi0, r: s.r, gamma: s.gamma, sub: s.sub };
    let led = carleson_ledger(&b, &sigma, &sigma, &forest, &q, &k, &cp, std::slice::from_ref(&f)).map_err(lib(l))?;
    let big = big_piece_gq(&sigma, &b, &q, &led.s0, s.big_eta, s.delta0, s.trials, s.depth, seed).map_err(lib(l))?;

    let mut ta = Table::new("tb_carleson.csv", &["level", "index", "a"]);
    for (c, a) in &led.a {
        let idx: Vec<String> = c.index.iter().map(|i| i.to_string()).collect();
        ta.push(vec![c.level.to_string(), idx.join(";"), num(*a)]);
    }
    let mut tx = Table::new("tb_atoms.csv", &["atom", "g2", "s0", "p", "in_gq"]);
    let in_g: std::collections::BTreeSet<usize> = big.g_q.iter().copied().collect();
    for i in 0..sigma.len() {
        tx.push(vec![i.to_string(), num(led.g2[i]), led.s0[i].to_string(), num(big.p[i]), in_g.contains(&i).to_string()]);
    }
    let mut out = Outcome::default();
    out.constant("transit_cubes", forest.len());
    out.constant("stopping_cubes", stop.cubes.len());
    out.constant("reconstruction_error", exp.reconstruction_error);
    out.constant("bessel_ratio", exp.bessel_ratio);
    out.constant("carleson_constant", led.carleson_constant);
    out.constant("embedding", &led.embedding);
    out.constant("good_cubes", led.good_cubes);
    out.constant("bad_cubes", led.bad_cubes);
    out.constant("gq_ratio", big.ratio);
    out.constant("gq_bound", big.bound);
    out.constant("tau", big.tau);
    out.audit("reconstruction", exp.reconstruction_error <= 1e-10);
    out.audit("carleson_audit", led.audit_direct && led.audit_xi0);
    out.audit("big_piece", big.pass);
    out.refs.extend(["adapted martingale expansion", "Carleson sequence", "big piece G_Q"].map(String::from));
    out.tables.push(ta);
    out.tables.push(tx);
    Ok(out)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct BesselSettings {
    trials: usize,
    depth: u32,
    /// b when the config gives none: "ones" or "accretive"
    b_mode: String,
    bound: f64,
}

impl Default for BesselSettings {
    fn default() -> Self {
        BesselSettings { trials: 20, depth: 16, b_mode: "accretive".into(), bound: 20.0 }
    }
}

fn random_values(rng: &mut ChaCha8Rng, n: usize, center: f64, spread: f64) -> SampledFunction {
    SampledFunction::new(
        (0..n)
            .map(|_| Complex64::new(center + spread * rng.gen_range(-1.0..1.0), spread * rng.gen_range(-1.0..1.0)))
            .collect(),
    )
}

fn bessel(l: &Loaded, seed: u64) -> Result<Outcome, ConfigError> {
    let s: BesselSettings = l.settings()?;
    let sigma = l.mu()?;
    let q = bounding_cube(&sigma).map_err(lib(l))?;
    let fixed_b = match &l.cfg.b {
        Some(_) => Some(l.function_or("b", &sigma, Complex64::new(1.0, 0.0))?),
        None => match s.b_mode.as_str() {
            "ones" => Some(SampledFunction::ones(sigma.len())),
            "accretive" => None,
            other => return Err(l.error_at("b_mode", format!("unknown mode '{other}'"))),
        },
    };
    let parseval = fixed_b.as_ref().map(|b| b.values.iter().all(|v| *v == fixed_b.as_ref().unwrap().values[0])).unwrap_or(false);
    let mut t = Table::new("bessel.csv", &["trial", "reconstruction_error", "bessel_ratio", "transit_cubes"]);
    let (mut worst_rec, mut worst_bessel, mut worst_parseval) = (0.0f64, 0.0f64, 0.0f64);
    for trial in 0..s.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64);
        let f = random_values(&mut rng, sigma.len(), 0.0, 1.0);
        let b = fixed_b.clone().unwrap_or_else(|| random_values(&mut rng, sigma.len(), 1.0, 0.5));
        let grid = grid_for(l, &q, None, s.depth, &mut rng)?;
        let forest = transit_cubes(&grid, &sigma, &[], &crate::tbmart::StoppingFamily::empty(0.0)).map_err(lib(l))?;
        let e = expand(&f, &b, &sigma, &forest).map_err(lib(l))?;
        worst_rec = worst_rec.max(e.reconstruction_error);
        worst_bessel = worst_bessel.max(e.bessel_ratio);
        worst_parseval = worst_parseval.max((e.bessel_ratio - 1.0).abs());
        t.push(vec![trial.to_string(), num(e.reconstruction_error), num(e.bessel_ratio), forest.len().to_string()]);
    }
    let mut out = Outcome::default();
    out.constant("max_reconstruction_error", worst_rec);
    out.constant("max_bessel_ratio", worst_bessel);
    out.audit("reconstruction", worst_rec <= 1e-10);
    out.audit("bessel_bound", worst_bessel <= s.bound);
    if parseval {
        out.constant("max_parseval_deviation", worst_parseval);
        out.audit("parseval", worst_parseval <= 1e-10);
    }
    out.refs.push("adapted martingale Bessel inequality".into());
    out.tables.push(t);
    Ok(out)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct GoodLambdaSettings {
    eps_grid: Vec<f64>,
    delta_grid: Vec<f64>,
    xi_grid: Option<Vec<f64>>,
    theta: f64,
    rho0: f64,
}

impl Default for GoodLambdaSettings {
    fn default() -> Self {
        GoodLambdaSettings {
            eps_grid: vec![0.1, 0.25, 0.5, 1.0],
            delta_grid: vec![1e-3, 1e-2, 1e-1],
            xi_grid: None,
            theta: 1.0,
            rho0: 30.0,
        }
    }
}

fn goodlambda(l: &Loaded) -> Result<Outcome, ConfigError> {
    let s: GoodLambdaSettings = l.settings()?;
    let mu = l.mu()?;
    let f = l.function_or("function", &mu, Complex64::new(1.0, 0.0))?;
    let k = l.kernel(mu.dim())?;
    let p = truncated(l.params()?, &mu);
    let sup = f.abs().into_iter().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let xi = s.xi_grid.clone().unwrap_or_else(|| (-6..=6).map(|j| sup * 2f64.powi(j)).collect());
    let tab = good_lambda_harness(&f, &mu, &k, &p, &s.eps_grid, &s.delta_grid, &xi, s.theta, s.rho0).map_err(lib(l))?;
    let mut t = Table::new("goodlambda.csv", &["eps", "delta", "fraction"]);
    for r in &tab.rows {
        t.push(vec![num(r.eps), num(r.delta), r.fraction.map(num).unwrap_or_default()]);
    }
    let mut out = Outcome::default();
    out.constant("target", tab.target);
    out.constant("best_fraction", tab.best.as_ref().and_then(|r| r.fraction).map(|v| v + 0.0));
    out.audit("good_lambda", tab.pass);
    out.refs.push("good-lambda inequality".into());
    out.tables.push(t);
    Ok(out)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RbmoSettings {
    kappa: f64,
    m: Option<f64>,
    centers: usize,
    radii: usize,
    probes: usize,
    key_bound: Option<f64>,
}

impl Default for RbmoSettings {
    fn default() -> Self {
        RbmoSettings { kappa: 8.0, m: None, centers: 8, radii: 6, probes: 8, key_bound: None }
    }
}

fn rbmo(l: &Loaded) -> Result<Outcome, ConfigError> {
    let s: RbmoSettings = l.settings()?;
    let mu = l.mu()?;
    let f = l.function_or("function", &mu, Complex64::new(1.0, 0.0))?;
    let k = l.kernel(mu.dim())?;
    let p = truncated(l.params()?, &mu);
    let bp = BatteryParams {
        kappa: s.kappa,
        m: s.m.unwrap_or(mu.dim() as f64),
        centers: s.centers,
        radii: s.radii,
        probes: s.probes,
    };
    let rep = rbmo_battery(&f, &mu, &k, &p, &bp).map_err(lib(l))?;
    let mut t = table(
        "rbmo.csv",
        &["ball_id", "radius"],
        None,
        &["osc_median", "osc_farfield", "pair_quotient_max", "key_deviation"],
    );
    for r in &rep.rows {
        t.push(vec![
            r.id.to_string(),
            num(r.radius),
            num(r.osc_median),
            num(r.osc_farfield),
            num(r.pair_quotient_max),
            num(r.key_deviation),
        ]);
    }
    let mut out = Outcome::default();
    out.constant("sup_osc_median", rep.sup_osc_median);
    out.constant("sup_osc_farfield", rep.sup_osc_farfield);
    out.constant("sup_pair", rep.sup_pair);
    out.constant("sup_key", rep.sup_key);
    out.constant("max_chain_constant", rep.max_chain_constant);
    out.constant("excluded", rep.excluded);
    let finite = [rep.sup_osc_median, rep.sup_osc_farfield, rep.sup_pair, rep.sup_key].iter().all(|v| v.is_finite());
    out.audit("finite_constants", finite);
    if let Some(c) = s.key_bound {
        out.audit("key_lemma_bound", rep.sup_key <= c);
    }
    out.refs.push("RBMO membership of g*".into());
    out.tables.push(t);
    Ok(out)
}
