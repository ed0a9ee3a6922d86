//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Pass criterion numbers as arguments to run a subset.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use multibump::constraints::NehariRay;
use multibump::diagnostics::{equidistribution, exterior_profile, symmetry_identity_check};
use multibump::energy::{decompose, Problem};
use multibump::groundstate::{derive_delta, energy_limit, fit_decay, solve_radial};
use multibump::minimax::{
    attraction_probe, outer_maximize, probe_is_increasing, Admissibility, MinimaxOptions, MinimaxResult,
    ProbeOptions, Surrogate, SurrogateOptions,
};
use multibump::solver::{minimize_fk, MinimizeResult, Model, SolverOptions, Start};
use multibump::{point, Field, GroundState, Grid, Point, Potential, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

/// Results shared between criteria.
#[derive(Default)]
struct Shared {
    minimizers: Vec<(String, MinimizeResult)>,
    minimax: Vec<MinimaxResult>,
}

fn ground_state() -> GroundState {
    solve_radial(3.0, 1.0, 2, 30.0, 1e-8).expect("ground state")
}

fn at(x: f64, y: f64) -> Point {
    point::from_slice(&[x, y])
}

fn decay_law(_: &mut Shared) -> Result<Outcome> {
    let gs = ground_state();
    let fit = fit_decay(&gs, 6.0, 10.0)?;
    let err = (fit.exponent - 1.0).abs();
    outcome(err < 0.02, format!("exponent {:.6} (relative error {err:.2e})", fit.exponent))
}

fn soliton(_: &mut Shared) -> Result<Outcome> {
    let gs = solve_radial(3.0, 1.0, 1, 25.0, 1e-8)?;
    let err = gs.samples().map(|(r, w)| (w - 2f64.sqrt() / r.cosh()).abs()).fold(0.0, f64::max);
    outcome(err < 1e-6, format!("max |w - sqrt(2) sech| = {err:.3e}"))
}

fn nehari_identity(_: &mut Shared) -> Result<Outcome> {
    let gs = ground_state();
    let e = energy_limit(&gs);
    let rel = (e - 0.25 * gs.norm_sq()).abs() / e;
    outcome(rel < 1e-4, format!("E_inf {e:.10}, relative defect {rel:.3e}"))
}

/// Random sum of stretched ground states at separated random centers.
fn random_ansatz(rng: &mut ChaCha8Rng, gs: &GroundState, grid: Grid, r_delta: f64) -> (Field, Vec<Point>) {
    let k = rng.gen_range(1..=3);
    let bound = grid.half_width() - r_delta - 3.0;
    let mut centers: Vec<Point> = Vec::new();
    while centers.len() < k {
        let c = at(rng.gen_range(-bound..bound), rng.gen_range(-bound..bound));
        if centers.iter().all(|d| point::dist(&c, d) >= 3.0 * r_delta) {
            centers.push(c);
        }
    }
    let shapes: Vec<(f64, f64)> = (0..k).map(|_| (rng.gen_range(0.8..1.2), rng.gen_range(0.9..1.1))).collect();
    let u = Field::from_fn(grid, |x| {
        centers.iter().zip(&shapes).map(|(c, (amp, s))| amp * gs.value(s * point::dist(x, c))).sum()
    });
    (u, centers)
}

fn splitting(_: &mut Shared) -> Result<Outcome> {
    let gs = ground_state();
    let th = derive_delta(&gs, 1.0, 0.9)?;
    let grid = Grid::with_spacing(2, 16.0, 0.1)?;
    let problem = Problem::new(grid, 3.0, Potential::slow_decay(1.0, 1.0, 2.0)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst, mut worst_corrected, mut worst_interface) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let (u, centers) = random_ansatz(&mut rng, &gs, grid, th.r_delta);
        let dec = decompose(&u, &centers, th.delta, th.r_delta)?;
        let rep = problem.report(&u, &dec)?;
        worst = worst.max(rep.splitting_defect());
        let rhs = rep.submerged + rep.bumps.iter().sum::<f64>() + rep.interface;
        worst_corrected = worst_corrected.max((rep.energy - rhs).abs() / rep.energy.abs());
        worst_interface = worst_interface.max(rep.interface.abs() / rep.energy.abs());
    }
    outcome(
        worst < 1e-6,
        format!(
            "max relative defect {worst:.3e} over 20 ansaetze; edge interface term {worst_interface:.3e}; \
             defect with the interface term included {worst_corrected:.3e}"
        ),
    )
}

fn nehari_uniqueness(_: &mut Shared) -> Result<Outcome> {
    let gs = ground_state();
    let th = derive_delta(&gs, 1.0, 0.9)?;
    let grid = Grid::with_spacing(2, 8.0, 0.1)?;
    let problems = [
        Problem::new(grid, 3.0, Potential::constant(1.0)?)?,
        Problem::new(grid, 3.0, Potential::slow_decay(1.0, 1.0, 2.0)?)?,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let ts: Vec<f64> = (0..4000).map(|j| 1e-3 * (5e4f64).powf(j as f64 / 3999.0)).collect();
    let mut bad = Vec::new();
    for trial in 0..50 {
        let problem = &problems[trial % 2];
        let c = at(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
        let (amp, s) = (rng.gen_range(0.6..1.8), rng.gen_range(0.8..1.25));
        let modes: Vec<(f64, f64, f64)> =
            (0..3).map(|_| (rng.gen_range(-0.15..0.15), rng.gen_range(0.5..2.0), rng.gen_range(0.0..2.0 * PI))).collect();
        let u = Field::from_fn(grid, |x| {
            let r = point::dist(x, &c);
            let wobble: f64 = modes.iter().map(|(e, f, ph)| e * (f * x[0] + ph).sin() * (f * x[1]).cos()).sum();
            (amp * gs.value(s * r) * (1.0 + wobble)).max(0.0)
        });
        let dec = decompose(&u, &[c], th.delta, th.r_delta)?;
        let ray = NehariRay::new(problem, &dec.submerged, &dec.parts[0])?;
        let signs: Vec<bool> = ts.iter().map(|&t| ray.eval(t) > 0.0).collect();
        let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
        let t_bar = ray.root(1e-12)?;
        let energy = |t: f64| problem.energy(&dec.recompose(&[t]));
        let peak = energy(t_bar)?;
        let is_max = peak > energy(0.5 * t_bar)? && peak > energy(2.0 * t_bar)?;
        if changes != 1 || !signs[0] || !is_max {
            bad.push(format!("trial {trial}: {changes} sign changes, maximum {is_max}"));
        }
    }
    let detail = if bad.is_empty() { "50 of 50 rays have one root and a maximum there".into() } else { bad.join("; ") };
    outcome(bad.is_empty(), detail)
}

fn single_bump(shared: &mut Shared) -> Result<Outcome> {
    let gs = ground_state();
    let grid = Grid::new(2, 7.6, 256)?;
    let model = Model::new(Problem::new(grid, 3.0, Potential::constant(1.0)?)?, gs, 0.9)?;
    let res = minimize_fk(&model, &[point::ORIGIN], &Start::Glued, &SolverOptions::default())?;
    let rel = (res.value - model.e_inf()).abs() / model.e_inf();
    let lam = res.max_multiplier();
    let detail = format!(
        "f_1 {:.8} vs E_inf {:.8} (relative {rel:.3e}), max|lambda| {lam:.3e} (tol {:.3e}), {} iterations",
        res.value,
        model.e_inf(),
        model.tol_lambda(),
        res.iterations
    );
    let pass = rel < 1e-3 && lam < model.tol_lambda() && res.converged;
    if res.converged {
        shared.minimizers.push(("k=1, constant".into(), res));
    }
    outcome(pass, detail)
}

fn attraction(_: &mut Shared) -> Result<Outcome> {
    let gs = ground_state();
    let th = derive_delta(&gs, 1.0, 0.9)?;
    let e2 = 2.0 * energy_limit(&gs);
    let distances: Vec<f64> = [3.0, 3.5, 4.0, 6.0, 12.0].iter().map(|m| m * th.r_delta).collect();
    let probe = ProbeOptions { spacing: 0.1, padding: 12.0, safety: 0.9 };
    let rows = attraction_probe(2, 3.0, &Potential::constant(1.0)?, &gs, None, &distances, &probe, &SolverOptions::default())?;
    let last = rows.last().expect("rows");
    let below = last.f < e2;
    let increasing = probe_is_increasing(&rows, 1e-9 * e2);
    let converged = rows.iter().all(|r| r.converged);
    let table: Vec<String> = rows.iter().map(|r| format!("{:.3}:{:.3e}", r.separation, r.gap_rel)).collect();
    outcome(
        below && increasing && last.gap_rel < 1e-2 && converged,
        format!(
            "f_2(12 R_delta) {:.8} < 2 E_inf {e2:.8}: {below}; increasing {increasing}; final gap {:.3e}; separation:gap {}",
            last.f,
            last.gap_rel,
            table.join(" ")
        ),
    )
}

fn slow_decay_model() -> Result<Model> {
    let grid = Grid::with_spacing(2, 17.5, 0.15)?;
    Model::new(Problem::new(grid, 3.0, Potential::slow_decay(1.0, 1.0, 2.0)?)?, ground_state(), 0.9)
}

fn ensure_minimax(shared: &mut Shared) -> Result<()> {
    if shared.minimax.is_empty() {
        let model = slow_decay_model()?;
        for k in [2, 3] {
            let r = outer_maximize(&model, k, &MinimaxOptions::default())?;
            if r.result.converged {
                shared.minimizers.push((format!("k={k} maximiser, slow decay"), r.result.clone()));
            }
            shared.minimax.push(r);
        }
    }
    Ok(())
}

fn minimax_gap(shared: &mut Shared) -> Result<Outcome> {
    ensure_minimax(shared)?;
    let tol = slow_decay_model()?.tol_lambda();
    let mut pass = true;
    let mut parts = Vec::new();
    for r in &shared.minimax {
        let lam = r.result.max_multiplier();
        let gap_ok = r.gap() > 0.0;
        let lam_ok = lam < tol;
        pass &= gap_ok && lam_ok;
        parts.push(format!(
            "k={}: g - k E_inf = {:+.4e} ({}), max|lambda| {lam:.3e} vs tol {tol:.1e} ({}), rho {:.4}, min separation {:.4}",
            r.k(),
            r.gap(),
            if gap_ok { "ok" } else { "violated" },
            if lam_ok { "ok" } else { "violated" },
            r.configuration.rho,
            point::min_pairwise_distance(&r.result.centers)
        ));
    }
    outcome(pass, parts.join("; "))
}

fn multiplier_structure(shared: &mut Shared) -> Result<Outcome> {
    ensure_minimax(shared)?;
    let model = slow_decay_model()?;
    let delta = model.threshold.delta;
    let r = shared.minimax.iter().find(|r| r.k() == 2).expect("k = 2 run");
    let c = &r.result.centers;
    let antipodal = point::norm(&point::add(&c[0], &c[1]));
    let lam = &r.result.multipliers;
    // the pair is symmetric under x -> -x, which maps lambda_2 to -lambda_2
    let sym = point::norm(&point::add(&lam[0], &lam[1]));
    let floor = model.tol_lambda();
    let mut tangential_ok = true;
    let mut cosines = Vec::new();
    for (l, x) in lam.iter().zip(c) {
        let nl = point::norm(l);
        if nl > floor {
            let cos = point::dot(l, x).abs() / (nl * point::norm(x));
            cosines.push(format!("{cos:.4}"));
            tangential_ok &= cos < 0.05;
        }
    }
    let sym_ok = sym < 1e-3 * delta && antipodal < 1e-9;
    outcome(
        sym_ok && tangential_ok,
        format!(
            "|lambda_1 + lambda_2| = {sym:.3e} vs {:.1e} ({}); |lambda.x|/(|lambda||x|) = [{}] above floor {floor:.1e} ({})",
            1e-3 * delta,
            if sym_ok { "ok" } else { "violated" },
            cosines.join(", "),
            if tangential_ok { "ok" } else { "violated" }
        ),
    )
}

fn moment_identity(_: &mut Shared) -> Result<Outcome> {
    let gs = ground_state();
    let th = derive_delta(&gs, 1.0, 0.9)?;
    let grid = Grid::with_spacing(2, 6.0, 0.02)?;
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, tau) in [("e1", at(1.0, 0.0)), ("e2", at(0.0, 1.0))] {
        let chk = symmetry_identity_check(&gs, &th, &tau, &grid)?;
        pass &= chk.relative_difference < 1e-3;
        parts.push(format!("{name}: relative difference {:.3e}", chk.relative_difference));
    }
    outcome(pass, parts.join("; "))
}

fn localization(shared: &mut Shared) -> Result<Outcome> {
    if shared.minimizers.is_empty() {
        single_bump(shared)?;
    }
    let gs = ground_state();
    let th = derive_delta(&gs, 1.0, 0.9)?;
    let mut pass = !shared.minimizers.is_empty();
    let mut parts = Vec::new();
    for (label, res) in &shared.minimizers {
        for radius in [th.r_delta, 2.0 * th.r_delta] {
            let ext = exterior_profile(&res.field, &res.centers, &gs, radius)?;
            pass &= ext.within_one_layer && !ext.truncated;
            parts.push(format!(
                "{label} R={radius:.3}: sup {:.3e} at depth {:.3}{}",
                ext.sup,
                ext.depth,
                if ext.within_one_layer { "" } else { " (interior)" }
            ));
        }
    }
    outcome(pass, parts.join("; "))
}

fn equidistribution_trend(_: &mut Shared) -> Result<Outcome> {
    let gs = ground_state();
    let pot = Potential::slow_decay(1.0, 1.0, 2.0)?;
    let th = derive_delta(&gs, pot.a0(), 0.9)?;
    let opts = SurrogateOptions::default();
    let s = Surrogate::new(&pot, &gs, th, &opts)?;
    let adm = Admissibility { sigma: 0.25, r_delta: th.r_delta, max_coordinate: None };
    let mut pass = true;
    let mut parts = Vec::new();
    for k in [32, 64, 128] {
        let r = s.maximize(k, &adm, &opts)?;
        let pts = r.configuration.points();
        let norms: Vec<f64> = pts.iter().map(point::norm).collect();
        let ratio = norms.iter().copied().fold(0.0, f64::max) / norms.iter().copied().fold(f64::INFINITY, f64::min);
        let rows = equidistribution(&pts, 2, &[0.2, 0.4], 720)?;
        let worst = rows.iter().map(|e| e.min_ratio).fold(f64::INFINITY, f64::min);
        pass &= ratio <= 1.1 && worst >= 0.1;
        parts.push(format!("k={k}: ratio {ratio:.6}, min N/(k eps) {worst:.3}, gap {:+.3e}", r.gap));
    }
    outcome(pass, parts.join("; "))
}

fn gradient(_: &mut Shared) -> Result<Outcome> {
    let grid = Grid::with_spacing(2, 6.0, 0.1)?;
    let problem = Problem::new(grid, 3.0, Potential::slow_decay(1.0, 1.0, 2.0)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let smooth = |rng: &mut ChaCha8Rng| {
        let bumps: Vec<(Point, f64, f64)> = (0..3)
            .map(|_| (at(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)), rng.gen_range(0.3..2.0), rng.gen_range(0.5..2.0)))
            .collect();
        let (f, ph) = (rng.gen_range(0.3..1.5), rng.gen_range(0.0..2.0 * PI));
        Field::from_fn(grid, move |x| {
            let g: f64 = bumps.iter().map(|(c, a, w)| a * (-point::dist(x, c).powi(2) / (w * w)).exp()).sum();
            g * (1.0 + 0.3 * (f * x[0] + ph).sin())
        })
    };
    let eps = 1e-4;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let u = smooth(&mut rng);
        let v = smooth(&mut rng);
        let fd = (problem.energy(&u.axpy(eps, &v)?)? - problem.energy(&u.axpy(-eps, &v)?)?) / (2.0 * eps);
        let g = problem.weak_gradient(&u)?;
        let pairing: f64 = g.values().iter().zip(v.values()).map(|(a, b)| a * b).sum();
        worst = worst.max((fd - pairing).abs() / pairing.abs());
    }
    outcome(worst < 1e-4, format!("max relative mismatch {worst:.3e} over 20 pairs"))
}

type Criterion = fn(&mut Shared) -> Result<Outcome>;

fn main() -> ExitCode {
    let criteria: [(usize, &str, Option<u64>, Criterion); 13] = [
        (1, "ground-state decay law", Some(5), decay_law),
        (2, "one-dimensional soliton", Some(1), soliton),
        (3, "Nehari identity at the ground state", None, nehari_identity),
        (4, "energy splitting identity", None, splitting),
        (5, "unique Nehari point on each ray", None, nehari_uniqueness),
        (6, "single-bump minimum", Some(120), single_bump),
        (7, "subadditivity and attraction", Some(1200), attraction),
        (8, "strict min-max gap", Some(7200), minimax_gap),
        (9, "multiplier structure at a symmetric pair", None, multiplier_structure),
        (10, "ground-state moment identity", None, moment_identity),
        (11, "exterior maximum on the ball boundaries", None, localization),
        (12, "equidistribution at surrogate scale", Some(600), equidistribution_trend),
        (13, "weak gradient against finite differences", None, gradient),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut shared = Shared::default();
    let mut failures = 0;
    for (n, name, limit, run) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let result = run(&mut shared);
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let in_time = limit.is_none_or(|s| elapsed <= Duration::from_secs(s));
        let timing = match limit {
            Some(s) if !in_time => format!("{:.1}s, over the {s}s budget", elapsed.as_secs_f64()),
            Some(s) => format!("{:.1}s of {s}s", elapsed.as_secs_f64()),
            None => format!("{:.1}s", elapsed.as_secs_f64()),
        };
        let ok = pass && in_time;
        if !ok {
            failures += 1;
        }
        println!("{} [{n:2}] {name}: {detail} [{timing}]", if ok { "PASS" } else { "FAIL" });
    }
    println!("{failures} criteria failed");
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
