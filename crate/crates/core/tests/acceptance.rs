//! Acceptance battery: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines always reach stdout. A
//! criterion listed in `KNOWN_RED` may fail without failing the target.

use std::process::ExitCode;
use std::time::Instant;

use nhsquare::czdecomp::{cz_decompose, validate_cz, weak11_harness};
use nhsquare::dyadic::{bad_probability, ShiftedGrid};
use nhsquare::geometry::{Cube, Point};
use nhsquare::glstar::{gstar, gstar_truncated_field, t_compare, u_t, v_t, OperatorParams};
use nhsquare::kernels::KernelSpec;
use nhsquare::measure::{maximal_function, AtomicMeasure, ComplexMeasure, SampledFunction};
use nhsquare::rbmo::{rbmo_battery, BatteryParams};
use nhsquare::tbmart::{
    aqr, big_piece_gq, dyadic_tower, dyadic_tree, exceptional_set, expand, schur_norm, stopping_cubes, transit_cubes,
    ExceptionalParams, StoppingFamily,
};
use nhsquare::whitney::{select_doubling_subfamily, whitney_decompose, Region};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KNOWN_RED: &[u32] = &[7];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn unit(dim: usize) -> Cube {
    Cube::new(Point(vec![0.5; dim]), 1.0).unwrap()
}

fn random_sigma(rng: &mut ChaCha8Rng, n: usize) -> AtomicMeasure {
    let pts: Vec<Point> = (0..n).map(|_| Point::scalar(rng.gen::<f64>())).collect();
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    AtomicMeasure::from_points(pts, w).unwrap()
}

fn random_complex(rng: &mut ChaCha8Rng, n: usize, center: f64, spread: f64) -> SampledFunction {
    SampledFunction::new(
        (0..n).map(|_| Complex64::new(center + spread * rng.gen_range(-1.0..1.0), spread * rng.gen_range(-1.0..1.0))).collect(),
    )
}

// --- 1 ---------------------------------------------------------------------

fn bessel_sup(n: usize, seeds: u64, accretive: bool) -> (f64, f64, f64, f64) {
    let (mut rec, mut bes, mut pars, mut min_avg) = (0.0f64, 0.0f64, 0.0f64, f64::INFINITY);
    for s in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + s);
        let sigma = random_sigma(&mut rng, n);
        let f = random_complex(&mut rng, n, 0.0, 1.0);
        let b = if accretive { random_complex(&mut rng, n, 1.0, 0.7) } else { SampledFunction::ones(n) };
        let grid = ShiftedGrid::random(&unit(1), 26, &mut rng).unwrap();
        let forest = transit_cubes(&grid, &sigma, &[], &StoppingFamily::empty(0.0)).unwrap();
        for c in &forest.cubes {
            min_avg = min_avg.min(forest.av.avg(&b, c).unwrap().norm());
        }
        let e = expand(&f, &b, &sigma, &forest).unwrap();
        rec = rec.max(e.reconstruction_error);
        bes = bes.max(e.bessel_ratio);
        pars = pars.max((e.bessel_ratio - 1.0).abs());
    }
    (rec, bes, pars, min_avg)
}

fn c1() -> Verdict {
    let (rec1, _, pars, _) = bessel_sup(64, 20, false);
    let (rec2, b64, _, avg64) = bessel_sup(64, 20, true);
    let (rec3, b128, _, avg128) = bessel_sup(128, 20, true);
    let rec = rec1.max(rec2).max(rec3);
    let stable = b128 / b64 <= 2.0 && b64 / b128 <= 2.0;
    let ok = rec <= 1e-10 && pars <= 1e-10 && b64 <= 20.0 && b128 <= 20.0 && stable && avg64.min(avg128) >= 0.3;
    verdict(
        ok,
        format!(
            "max recon err {rec:.2e}; parseval dev {pars:.2e}; bessel {b64:.3} (64 atoms) vs {b128:.3} (128); min |<b>_P| {:.3}",
            avg64.min(avg128)
        ),
    )
}

// --- 2 ---------------------------------------------------------------------

fn c2() -> Verdict {
    let a = schur_norm(&dyadic_tower(6), 1.0, 1.0, 10_000).unwrap();
    let b = schur_norm(&dyadic_tower(7), 1.0, 1.0, 10_000).unwrap();
    let rel = (b.norm - a.norm).abs() / a.norm;
    let q = unit(1);
    let single = aqr(&q, &q, 1.0, 1.0, 1.0, 1.0);
    let s1 = schur_norm(&[(q, 1.0)], 1.0, 1.0, 100).unwrap();
    let ok = rel < 0.10 && single == 0.25 && (s1.norm - 0.25).abs() < 1e-15 && a.converged && b.converged;
    // full dyadic system, reported only
    let ta = schur_norm(&dyadic_tree(6), 1.0, 1.0, 10_000).unwrap().norm;
    let tb = schur_norm(&dyadic_tree(7), 1.0, 1.0, 10_000).unwrap().norm;
    verdict(
        ok,
        format!(
            "nested tower depth 6 {:.5}, depth 7 {:.5}, rel diff {rel:.3}; A_QQ = {single}; full tree {ta:.3} -> {tb:.3} (info)",
            a.norm, b.norm
        ),
    )
}

// --- 3 ---------------------------------------------------------------------

fn cz_instance(rng: &mut ChaCha8Rng, dim: usize) -> (ComplexMeasure, AtomicMeasure) {
    let k = if dim == 1 { 128 } else { 16 };
    let base = AtomicMeasure::uniform_grid(dim, k, 1.0);
    // non-doubling weights on μ
    let w: Vec<f64> = base.atoms().iter().map(|_| rng.gen_range(0.2..2.0)).collect();
    let mu = AtomicMeasure::from_points(base.atoms().iter().map(|a| a.x.clone()).collect(), w).unwrap();
    let n = rng.gen_range(1..6);
    let pts: Vec<Point> = (0..n).map(|_| Point((0..dim).map(|_| rng.gen::<f64>()).collect())).collect();
    let ws: Vec<Complex64> = (0..n).map(|_| Complex64::from_polar(rng.gen_range(0.1..1.0), rng.gen_range(0.0..6.3))).collect();
    (ComplexMeasure::new(dim, pts, ws).unwrap(), mu)
}

fn c3() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut fails = Vec::new();
    let (mut cz4, mut beta) = (0.0f64, 0.0f64);
    for i in 0..20 {
        let dim = if i < 12 { 1 } else { 2 };
        let (nu, mu) = cz_instance(&mut rng, dim);
        let xi = 2.0 * 2f64.powi(dim as i32 + 1) * nu.total_variation() / mu.mass();
        match cz_decompose(&nu, &mu, xi, dim as f64) {
            Ok(res) => {
                let rep = validate_cz(&res, &nu, &mu);
                cz4 = cz4.max(rep.cz4);
                beta = beta.max(rep.beta_ratio);
                if !rep.all_pass() {
                    fails.push(format!("#{i} {:?}", rep.pass));
                }
            }
            Err(e) => fails.push(format!("#{i} {e}")),
        }
    }
    let ok = fails.is_empty() && cz4 <= 1e-12 && beta <= 2.0 + 1e-12;
    verdict(ok, format!("20 instances (1-D and 2-D); max |beta_i(R^n)|/|nu|(Q_i) {cz4:.1e}; max ||beta_i||/|nu|(Q_i) {beta:.3}; failures {fails:?}"))
}

// --- 4 ---------------------------------------------------------------------

fn c4() -> Verdict {
    let k = KernelSpec::model(1.0, 1.0).unwrap();
    let nu = ComplexMeasure::new(
        1,
        [0.2, 0.5, 0.8].iter().map(|x| Point::scalar(*x)).collect(),
        [1.0, 0.5, 0.25].iter().map(|w| Complex64::new(*w, 0.0)).collect(),
    )
    .unwrap();
    let sup = |n: usize| {
        let mu = AtomicMeasure::uniform_grid(1, n, 1.0);
        let p = OperatorParams::default().with_lambda(4.0).with_t_lo(4.0 / n as f64);
        weak11_harness(&nu, &mu, &k, &p, &[]).unwrap()
    };
    let (a, b) = (sup(64), sup(128));
    let rel = (b.sup - a.sup).abs() / a.sup;
    let ok = a.sup.is_finite() && b.sup.is_finite() && a.sup > 0.0 && rel <= 0.20;
    verdict(ok, format!("K=64 {:.4}, K=128 {:.4}, rel diff {rel:.3}", a.sup, b.sup))
}

// --- 5 ---------------------------------------------------------------------

fn pointwise(count: usize, seed: u64) -> (f64, f64) {
    let k = KernelSpec::model(1.0, 1.0).unwrap();
    let p = OperatorParams::default().with_lambda(4.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut cu, mut ct) = (0.0f64, 0.0f64);
    for _ in 0..count {
        let n = rng.gen_range(8..33);
        let mu = AtomicMeasure::uniform_grid(1, n, rng.gen_range(0.5..2.0));
        let h = mu.resolution();
        let f = random_complex(&mut rng, n, 0.0, 1.0);
        let x = Point::scalar(rng.gen_range(-0.5..1.5));
        let t = h * (rng.gen_range(0.0..6.0f64)).exp2();
        let u = u_t(&f, &mu, &k, &p, &x, t).unwrap();
        let v = v_t(&f, &mu, &k, &x, t).unwrap();
        if v > 0.0 {
            cu = cu.max(u / v);
        }
        let r = h * rng.gen_range(0.5..8.0);
        let b = Cube::ball(&Point::scalar(rng.gen_range(0.0..1.0)), r);
        let xa = Point::scalar(b.center.0[0] + r * rng.gen_range(-1.0..1.0));
        let xb = Point::scalar(b.center.0[0] + r * rng.gen_range(-1.0..1.0));
        let tc = t_compare(&f, &mu, &k, &p.with_t_lo(h), &b, &xa, &xb).unwrap();
        let m = maximal_function(&f, &mu, &xa).unwrap();
        if m > 0.0 {
            ct = ct.max(tc / m);
        }
    }
    (cu, ct)
}

fn c5() -> Verdict {
    let (u1, t1) = pointwise(1000, 51);
    let (u2, t2) = pointwise(2000, 52);
    let stable = |a: f64, b: f64| a > 0.0 && b > 0.0 && a.max(b) / a.min(b) < 2.0;
    let ok = u1.is_finite() && t1.is_finite() && stable(u1, u2) && stable(t1, t2);
    verdict(ok, format!("u_t/v_t: {u1:.3} (1e3) vs {u2:.3} (2e3); T/M f: {t1:.3} vs {t2:.3}"))
}

// --- 6 ---------------------------------------------------------------------

fn c6() -> Verdict {
    let seed_cube = unit(1);
    let i = Cube::new(Point::scalar(0.3), 2f64.powi(-12)).unwrap();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut est = Vec::new();
    for r in 4..=10u32 {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        rng.set_stream(r as u64);
        let e = bad_probability(&i, &seed_cube, r, 0.5, 4000, &mut rng).unwrap();
        xs.push(r as f64);
        ys.push(e.estimate.max(1.0 / 8000.0).ln());
        est.push(e);
    }
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let (a, b) = (&est[0], &est[est.len() - 1]);
    let ok = slope < 0.0 && b.ci_hi < a.ci_lo;
    verdict(
        ok,
        format!(
            "gamma 0.5; slope {slope:.3}; r=4 {:.3} [{:.3},{:.3}], r=10 {:.3} [{:.3},{:.3}]",
            a.estimate, a.ci_lo, a.ci_hi, b.estimate, b.ci_lo, b.ci_hi
        ),
    )
}

// --- 7 ---------------------------------------------------------------------

fn c7() -> Verdict {
    let interval = Region::cube_union(vec![unit(1)]).unwrap();
    let f1 = whitney_decompose(&interval, 8).unwrap();
    let l_shape = Region::cube_union(vec![
        Cube::new(Point(vec![0.5, 0.5]), 1.0).unwrap(),
        Cube::new(Point(vec![1.5, 0.5]), 1.0).unwrap(),
        Cube::new(Point(vec![0.5, 1.5]), 1.0).unwrap(),
    ])
    .unwrap();
    let f2 = whitney_decompose(&l_shape, 5).unwrap();
    let props = f1.report.property1 && f2.report.property1;
    let rho = f1.report.rho.max(f2.report.rho);
    let rho0 = f1.report.rho0;
    let mut cov_ok = true;
    let mut worst_cov = f64::INFINITY;
    for k in [64usize, 256, 1024] {
        let mu = AtomicMeasure::uniform_grid(1, k, 1.0);
        let sub = select_doubling_subfamily(&mu, &interval, &f1, (9.0, 2.0 * f1.rho0 as f64), 100.0, 11).unwrap();
        cov_ok &= sub.pass;
        worst_cov = worst_cov.min(sub.coverage_ratio / sub.target);
    }
    let ok = props && rho <= 22.0 && rho0 <= 9 && cov_ok;
    verdict(
        ok,
        format!(
            "properties {props}; rho {rho} (<= 22); rho0 {rho0} (needs <= 9, 10Q-overlap count; {} counting Q_j only); 2-D rho0 {}; coverage/target >= {worst_cov:.1}",
            f1.report.rho0_cubes, f2.report.rho0
        ),
    )
}

// --- 8 ---------------------------------------------------------------------

fn c8() -> Verdict {
    let k = KernelSpec::model(1.0, 1.0).unwrap();
    let one = AtomicMeasure::from_points(vec![Point::scalar(0.0)], vec![1.0]).unwrap();
    let g = gstar(&ComplexMeasure::from_measure(&one), &one, &k, &OperatorParams::default().with_t_lo(1.0), &Point::scalar(0.0))
        .unwrap();
    let err = (g.value - 1.0 / 3f64.sqrt()).abs();
    let mu = AtomicMeasure::uniform_grid(1, 64, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let f = random_complex(&mut rng, 64, 0.0, 1.0);
    let xs: Vec<Point> = (0..50).map(|_| Point::scalar(rng.gen_range(-0.5..1.5))).collect();
    let p = OperatorParams::default().with_t_lo(1.0 / 64.0);
    let g3 = gstar_truncated_field(&f, &mu, &k, &p.with_lambda(3.0), &xs).unwrap();
    let g4 = gstar_truncated_field(&f, &mu, &k, &p.with_lambda(4.0), &xs).unwrap();
    let mono = g3.iter().zip(&g4).all(|(a, b)| b.value <= a.value * (1.0 + 1e-12));
    verdict(err <= 1e-4 && mono, format!("value {:.6} (err {err:.1e}); lambda-monotone at 50 probes: {mono}", g.value))
}

// --- 9, 10 -----------------------------------------------------------------

/// ν = e^{iφ}μ/A with A the μ-average of e^{iφ}: ν(Q) = μ(Q), |ν| = μ/|A|.
/// With `patch`, e^{iφ} also flips sign every 1/64 on a window of length 1/4,
/// so small cubes there have phase average near 0.
fn rotating_instance(rng: &mut ChaCha8Rng, n: usize, patch: bool) -> (ComplexMeasure, AtomicMeasure) {
    let mu = AtomicMeasure::uniform_grid(1, n, 1.0);
    let a = rng.gen_range(0.5..1.8);
    let k = rng.gen_range(1..4) as f64;
    let s = rng.gen_range(0.0..1.0);
    let c = rng.gen_range(0.0..0.75);
    let phase: Vec<Complex64> = mu
        .atoms()
        .iter()
        .map(|at| {
            let x = at.x.0[0];
            let z = Complex64::from_polar(1.0, a * (2.0 * std::f64::consts::PI * (k * x + s)).sin());
            let flip = patch && x >= c && x < c + 0.25 && ((x - c) * 64.0).floor() as i64 % 2 == 1;
            if flip {
                -z
            } else {
                z
            }
        })
        .collect();
    let avg: Complex64 = phase.iter().zip(mu.atoms()).map(|(p, at)| p * at.w).sum::<Complex64>() / mu.mass();
    assert!(avg.norm() >= 1.0 / 7.0, "instance violates ||nu|| <= 7 mu(Q)");
    let w: Vec<Complex64> = phase.iter().zip(mu.atoms()).map(|(p, at)| p * at.w / avg).collect();
    (ComplexMeasure::new(1, mu.atoms().iter().map(|a| a.x.clone()).collect(), w).unwrap(), mu)
}

fn c9() -> Verdict {
    let sigma = AtomicMeasure::uniform_grid(1, 64, 1.0);
    let empty = big_piece_gq(&sigma, &SampledFunction::ones(64), &unit(1), &[false; 64], 0.25, 0.5, 200, 12, 9).unwrap();
    let all = empty.g_q.len() == 64;
    let mut worst = f64::INFINITY;
    let mut pass = true;
    for s in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + s);
        let (nu, _) = rotating_instance(&mut rng, 64, s % 2 == 1);
        let sigma = nu.variation().unwrap();
        let b = nu.phase();
        // a planted exceptional patch
        let c = rng.gen_range(0.1..0.9);
        let fixed: Vec<bool> = sigma.atoms().iter().map(|a| (a.x.0[0] - c).abs() < 0.05).collect();
        let bp = big_piece_gq(&sigma, &b, &unit(1), &fixed, 1.0 / 14.0, 0.5, 200, 12, s).unwrap();
        worst = worst.min(bp.ratio - bp.bound);
        pass &= bp.pass;
    }
    verdict(all && pass, format!("empty exclusions keep all atoms: {all}; min (ratio - (1-tau)/(2-tau)) over 10 instances {worst:.3}"))
}

fn c10() -> Verdict {
    let b1 = 7.0;
    let params = ExceptionalParams { b1, eps0: 1.0 / 224.0, p0: 50.0, m: 1.0, eta: None, delta: None };
    let mut worst = 0.0f64;
    let mut fails = Vec::new();
    let mut with_t = 0;
    for s in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + s);
        let (nu, mu) = rotating_instance(&mut rng, 512, s % 2 == 1);
        let sigma = nu.variation().unwrap();
        let b = nu.phase();
        let grid0 = ShiftedGrid::reference(&unit(1), 10).unwrap();
        let grid = ShiftedGrid::random(&unit(1), 12, &mut rng).unwrap();
        let stop = stopping_cubes(&b, &sigma, &grid, params.eta()).unwrap();
        if !stop.cubes.is_empty() {
            with_t += 1;
        }
        let u = vec![Cube::new(Point::scalar(rng.gen_range(0.1..0.9)), 1.0 / 64.0).unwrap()];
        match exceptional_set(&nu, &mu, &unit(1), &grid0, &params, u, Some((&grid, &stop.cubes))) {
            Ok(set) => {
                worst = worst.max(set.ratio);
                if !set.pass {
                    fails.push(format!("#{s}"));
                }
            }
            Err(e) => fails.push(format!("#{s} {e}")),
        }
    }
    let target = 1.0 - params.eta() / 2.0;
    verdict(
        fails.is_empty(),
        format!("max sigma(H u T_w)/sigma(Q) {worst:.4} vs {target:.4}; instances with T_w nonempty {with_t}/20; failures {fails:?}"),
    )
}

// --- 11 --------------------------------------------------------------------

fn c11() -> Verdict {
    let k = KernelSpec::model(1.0, 1.0).unwrap();
    let mu = AtomicMeasure::uniform_grid(1, 128, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let f = SampledFunction::new((0..128).map(|_| Complex64::from_polar(1.0, rng.gen_range(0.0..6.3))).collect());
    let p = OperatorParams::default().with_lambda(4.0).with_t_lo(1.0 / 128.0);
    let run = |centers: usize, probes: usize| {
        rbmo_battery(&f, &mu, &k, &p, &BatteryParams { kappa: 8.0, m: 1.0, centers, radii: 6, probes }).unwrap()
    };
    let (a, b) = (run(6, 8), run(12, 16));
    let within = |x: f64, y: f64| x > 0.0 && (y - x).abs() <= 0.25 * x;
    let finite = [a.sup_osc_farfield, a.sup_pair, a.sup_key, b.sup_osc_farfield, b.sup_pair, b.sup_key].iter().all(|v| v.is_finite());
    let ok = finite && within(a.sup_osc_farfield, b.sup_osc_farfield) && within(a.sup_pair, b.sup_pair) && b.sup_key <= 1.0;
    verdict(
        ok,
        format!(
            "osc_farfield {:.4} -> {:.4}; pair {:.4} -> {:.4}; key deviation {:.4} -> {:.4}; chain constant {:.1}",
            a.sup_osc_farfield, b.sup_osc_farfield, a.sup_pair, b.sup_pair, a.sup_key, b.sup_key, b.max_chain_constant
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Verdict); 11] = [
        (1, "martingale reconstruction and Bessel", c1),
        (2, "A_QR Schur bound", c2),
        (3, "Calderon-Zygmund audit", c3),
        (4, "weak (1,1) quotient", c4),
        (5, "pointwise lemma sampling", c5),
        (6, "good/bad probability decay", c6),
        (7, "Whitney validators", c7),
        (8, "one-atom closed form", c8),
        (9, "big piece G_Q", c9),
        (10, "exceptional set audit", c10),
        (11, "RBMO battery", c11),
    ];
    let mut unexpected = Vec::new();
    for (id, name, f) in criteria {
        let t = Instant::now();
        let v = f();
        let secs = t.elapsed().as_secs_f64();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        let note = if !v.pass && KNOWN_RED.contains(&id) { " [known red]" } else { "" };
        println!("{tag} criterion {id:>2} {name} ({secs:.1}s){note}: {}", v.detail);
        if !v.pass && !KNOWN_RED.contains(&id) {
            unexpected.push(id);
        }
        if secs > 60.0 {
            println!("FAIL criterion {id:>2} exceeded 60 s");
            unexpected.push(id);
        }
    }
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
