//! Worked examples across modules: solver runs, min-max searches and the
//! diagnostics applied to them.

use multibump::constraints::{project_to_s, ProjectionOptions};
use multibump::diagnostics::{
    configuration_stats, energy_scaling, equidistribution, exterior_profile, profile_error, symmetry_identity_check,
};
use multibump::energy::Problem;
use multibump::groundstate::{derive_delta, energy_limit, solve_radial};
use multibump::minimax::{
    attraction_probe, inner_g, outer_maximize, Admissibility, MinimaxOptions, ProbeOptions, Surrogate,
    SurrogateOptions,
};
use multibump::solver::{exterior_decay, minimize_fk, Model, SolverOptions, Start};
use multibump::{point, Field, GroundState, Grid, Point, Potential};

fn gs() -> GroundState {
    solve_radial(3.0, 1.0, 2, 30.0, 1e-8).unwrap()
}

fn at(x: f64, y: f64) -> Point {
    point::from_slice(&[x, y])
}

fn model(half_width: f64, spacing: f64, pot: Potential) -> Model {
    let grid = Grid::with_spacing(2, half_width, spacing).unwrap();
    Model::new(Problem::new(grid, 3.0, pot).unwrap(), gs(), 0.9).unwrap()
}

fn constant() -> Potential {
    Potential::constant(1.0).unwrap()
}

fn slow() -> Potential {
    Potential::slow_decay(1.0, 1.0, 2.0).unwrap()
}

#[test]
fn two_distant_bumps_sit_just_below_twice_the_limit() {
    let m = model(27.0, 0.15, constant());
    let half = 6.0 * m.threshold.r_delta;
    let r = minimize_fk(&m, &[at(half, 0.0), at(-half, 0.0)], &Start::Glued, &SolverOptions::default()).unwrap();
    let e2 = 2.0 * m.e_inf();
    assert!(r.converged);
    assert!(r.value < e2 && r.value > e2 * (1.0 - 5e-2), "f_2 {} vs {e2}", r.value);
}

#[test]
fn minimiser_invariants() {
    let m = model(14.0, 0.15, slow());
    let th = m.threshold;
    let c = [at(5.5, 0.0), at(-5.5, 0.0)];
    let r = minimize_fk(&m, &c, &Start::Glued, &SolverOptions::default()).unwrap();
    assert!(r.converged);
    assert!(r.value > 0.0);
    let g = *r.field.grid();
    for (n, &v) in r.field.values().iter().enumerate() {
        if !g.on_boundary(n) {
            assert!(v > 0.0);
        }
        let x = g.coord(n);
        if c.iter().all(|ci| point::dist(&x, ci) > 0.5 * th.r_delta + 2.0 * g.spacing()) {
            assert!(v < th.delta, "u = {v} at {x:?}");
        }
    }
    let fit = exterior_decay(&r.field, &c, th.r_delta, 0.5, 4.0).unwrap();
    assert!(fit.rate > 0.0 && fit.amplitude > 0.0);
    // every bump carries positive emerging energy
    assert!(r.energy.bumps.iter().all(|&f| f > 0.0));
}

#[test]
fn moving_a_center_by_one_cell_changes_f_by_order_h() {
    let m = model(11.0, 0.15, slow());
    let h = m.problem.grid().spacing();
    let opts = SolverOptions::default();
    let a = minimize_fk(&m, &[at(2.1, 0.0)], &Start::Glued, &opts).unwrap();
    let b = minimize_fk(&m, &[at(2.1 + h, 0.0)], &Start::Glued, &opts).unwrap();
    let df = (a.value - b.value).abs();
    assert!(df > 0.0 && df < h, "df = {df}");
}

#[test]
fn symmetric_pair_has_opposite_multipliers() {
    let m = model(14.0, 0.15, slow());
    let c = [at(6.0, 1.0), at(-6.0, -1.0)];
    let r = minimize_fk(&m, &c, &Start::Glued, &SolverOptions::default()).unwrap();
    let l = &r.multipliers;
    assert!(point::norm(&point::add(&l[0], &l[1])) < 1e-3 * m.threshold.delta, "{l:?}");
}

#[test]
fn projection_gives_positive_bump_energies() {
    let m = model(14.0, 0.15, slow());
    let c = [at(5.3, 0.0), at(-5.3, 0.0), at(0.0, 9.0)];
    let u = m.glued_ansatz(&c).map(|v| 0.8 * v);
    let proj = project_to_s(&m.problem, &u, &c, &m.threshold, &ProjectionOptions::default()).unwrap();
    for part in &proj.decomposition.parts {
        assert!(m.problem.energy_f(part, m.threshold.delta).unwrap() > 0.0);
    }
    assert!(m.problem.energy(&proj.field).unwrap() > 0.0);
}

#[test]
fn inner_search_for_one_bump_is_a_single_evaluation() {
    let m = model(12.0, 0.15, slow());
    let out = inner_g(&m, 3.0, &[at(0.6, 0.8)], &MinimaxOptions::default(), None).unwrap();
    assert_eq!(out.configuration.radii, vec![3.0]);
    let direct = minimize_fk(&m, &[at(1.8, 2.4)], &Start::Glued, &SolverOptions::default()).unwrap();
    assert!((out.value - direct.value).abs() < 1e-9 * direct.value);
}

#[test]
fn antipodal_pair_keeps_equal_radii() {
    let m = model(17.5, 0.15, slow());
    let opts = MinimaxOptions::default();
    let out = inner_g(&m, 6.0, &[at(1.0, 0.0), at(-1.0, 0.0)], &opts, None).unwrap();
    let r = &out.configuration.radii;
    let tol = opts.min_radius_step.unwrap_or(m.problem.grid().spacing());
    assert!((r[0] - r[1]).abs() <= tol, "{r:?}");
}

#[test]
fn spreading_directions_raises_the_constant_potential_minimum() {
    let m = model(17.5, 0.15, constant());
    let opts = MinimaxOptions::default();
    let mut last = f64::NEG_INFINITY;
    for angle in [120f64, 150.0, 180.0] {
        let t = angle.to_radians();
        let out = inner_g(&m, 7.0, &[at(1.0, 0.0), at(t.cos(), t.sin())], &opts, None).unwrap();
        let sep = point::min_pairwise_distance(&out.result.centers);
        assert!(out.value >= last - 1e-9 * out.value, "angle {angle}: {} after {last} (separation {sep})", out.value);
        last = out.value;
    }
}

#[test]
fn constant_potential_minimum_grows_with_rho() {
    let m = model(17.5, 0.15, constant());
    let opts = MinimaxOptions::default();
    let thetas = [at(1.0, 0.0), at(-1.0, 0.0)];
    let values: Vec<f64> = [5.2, 6.0, 7.0].iter().map(|&rho| inner_g(&m, rho, &thetas, &opts, None).unwrap().value).collect();
    assert!(values.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0]), "{values:?}");
}

#[test]
fn slow_decay_pair_maximiser() {
    let m = model(17.5, 0.15, slow());
    let r = outer_maximize(&m, 2, &MinimaxOptions::default()).unwrap();
    assert!(r.g > 2.0 * m.e_inf());
    let t = &r.configuration.thetas;
    let cos = point::dot(&t[0], &t[1]);
    assert!(cos < (175f64).to_radians().cos(), "angle {}", cos.acos().to_degrees());
    assert!(r.configuration.radii.iter().all(|x| (x - r.configuration.rho).abs() < 1e-9 * x));
    // energy per bump within a few percent of the limit
    let rows = energy_scaling(&[&r.result], m.e_inf(), 1.0).unwrap();
    assert!((rows[0].ratio - 1.0).abs() < 5e-2);
    // the surrogate predicts the same sign of the gap
    let s = Surrogate::for_model(&m, &SurrogateOptions::default()).unwrap();
    let adm = Admissibility::for_model(&m, 0.25);
    for k in [2, 3] {
        assert!(s.maximize(k, &adm, &SurrogateOptions::default()).unwrap().gap > 0.0);
    }
}

#[test]
fn surrogate_pair_energy_matches_the_solver() {
    let g = gs();
    let th = derive_delta(&g, 1.0, 0.9).unwrap();
    let probe = ProbeOptions { spacing: 0.1, padding: 12.0, safety: 0.9 };
    let d = [3.0 * th.r_delta, 12.0 * th.r_delta];
    let rows = attraction_probe(2, 3.0, &constant(), &g, None, &d, &probe, &SolverOptions::default()).unwrap();
    // at 12 R_delta the pair term is far below the discretisation bias, so the
    // far row serves as the grid's own two-bump reference
    let measured = rows[1].f - rows[0].f;
    let s = Surrogate::new(&constant(), &g, th, &SurrogateOptions::default()).unwrap();
    let predicted = s.pair_energy(rows[0].separation);
    assert!(measured > 0.0);
    assert!((measured - predicted).abs() < 0.3 * predicted, "{measured} vs {predicted}");
}

#[test]
fn single_bump_probe_is_flat() {
    let g = gs();
    let probe = ProbeOptions { spacing: 0.15, padding: 9.0, safety: 0.9 };
    let rows = attraction_probe(1, 3.0, &constant(), &g, None, &[1.0, 5.0, 9.0], &probe, &SolverOptions::default()).unwrap();
    assert!(rows.windows(2).all(|w| (w[1].f - w[0].f).abs() < 1e-12 * w[0].f));
}

#[test]
fn profile_error_of_exact_copies_is_the_tail() {
    let g = gs();
    let grid = Grid::with_spacing(2, 16.0, 0.05).unwrap();
    let sep = 9.0;
    let c = [at(-0.5 * sep, 0.0), at(0.5 * sep, 0.0)];
    let u = Field::from_fn(grid, |x| c.iter().map(|ci| g.value(point::dist(x, ci))).sum());
    let r = 2.0;
    let err = profile_error(&u, &c, &g, r).unwrap();
    assert!(err <= 2.0 * g.value(sep - r), "{err} vs {}", 2.0 * g.value(sep - r));
    assert!(err >= g.value(sep - r) * 0.5);

    // shifting everything by whole nodes leaves the error unchanged
    let s = 20.0 * grid.spacing();
    let c2 = [at(-0.5 * sep + s, s), at(0.5 * sep + s, s)];
    let u2 = Field::from_fn(grid, |x| c2.iter().map(|ci| g.value(point::dist(x, ci))).sum());
    let err2 = profile_error(&u2, &c2, &g, r).unwrap();
    assert!((err - err2).abs() < 1e-6, "{err} vs {err2}");
}

#[test]
fn profile_error_of_single_minimiser() {
    let grid = Grid::new(2, 12.0, 256).unwrap();
    let m = Model::new(Problem::new(grid, 3.0, constant()).unwrap(), gs(), 0.9).unwrap();
    let r = minimize_fk(&m, &[point::ORIGIN], &Start::Glued, &SolverOptions::default()).unwrap();
    let err = profile_error(&r.field, &r.centers, &m.ground_state, m.threshold.r_delta).unwrap();
    assert!(err <= 1e-2, "{err}");
}

#[test]
fn exterior_profile_of_exact_copies() {
    let g = gs();
    let grid = Grid::with_spacing(2, 16.0, 0.1).unwrap();
    let c = [at(-6.0, 0.0), at(6.0, 0.0)];
    let u = Field::from_fn(grid, |x| c.iter().map(|ci| g.value(point::dist(x, ci))).sum());
    let r = 3.0;
    let e = exterior_profile(&u, &c, &g, r).unwrap();
    let tail = g.value(12.0 - r) / g.value(r);
    assert!(e.sup >= g.value(r + grid.spacing()) && e.sup <= g.value(r) * (1.0 + 2.0 * tail), "{e:?}");
    assert!(e.within_one_layer && !e.truncated);
    assert!(exterior_profile(&u, &c, &g, 11.0).unwrap().truncated);
}

#[test]
fn center_geometry() {
    let s = configuration_stats(&[at(3.0, 0.0), at(-3.0, 0.0)], 2).unwrap();
    assert!((s.gamma - 2.0).abs() < 1e-12);
    assert!((s.lambda - 2f64.sqrt()).abs() < 1e-12);
    assert_eq!(s.ratio, 1.0);
}

#[test]
fn equidistribution_controls() {
    let k = 40;
    let half: Vec<Point> = (0..k).map(|i| point::scale(&point::polar(0.1 + 2.9 * i as f64 / k as f64), 9.0)).collect();
    let rows = equidistribution(&half, 2, &[0.2], 720).unwrap();
    assert_eq!(rows[0].min_count, 0);
    assert_eq!(rows[0].min_ratio, 0.0);

    let ring: Vec<Point> = (0..k).map(|i| point::scale(&point::polar(0.37 + 0.9 * (i as f64).sin()), 4.0 + i as f64 * 0.01)).collect();
    let turned: Vec<Point> = ring
        .iter()
        .map(|p| {
            let (c, s) = (1.234f64.cos(), 1.234f64.sin());
            at(c * p[0] - s * p[1], s * p[0] + c * p[1])
        })
        .collect();
    for eps in [0.2, 0.4] {
        let a = &equidistribution(&ring, 2, &[eps], 720).unwrap()[0];
        let b = &equidistribution(&turned, 2, &[eps], 720).unwrap()[0];
        let one_count = 1.0 / (k as f64 * eps);
        assert!((a.min_ratio - b.min_ratio).abs() <= one_count + 1e-12, "{a:?} {b:?}");
    }
}

#[test]
fn single_bump_energy_ratio() {
    let grid = Grid::new(2, 7.6, 256).unwrap();
    let m = Model::new(Problem::new(grid, 3.0, constant()).unwrap(), gs(), 0.9).unwrap();
    let r = minimize_fk(&m, &[point::ORIGIN], &Start::Glued, &SolverOptions::default()).unwrap();
    let rows = energy_scaling(&[&r], m.e_inf(), 1.0).unwrap();
    assert!((rows[0].ratio - 1.0).abs() < 1e-3, "{}", rows[0].ratio);
}

#[test]
fn separation_raises_the_constant_potential_ratio() {
    let m = model(17.0, 0.15, constant());
    let r_delta = m.threshold.r_delta;
    let opts = SolverOptions::default();
    let mut ratios = Vec::new();
    for mult in [3.0, 3.5, 4.5] {
        let half = 0.5 * mult * r_delta;
        let r = minimize_fk(&m, &[at(half, 0.0), at(-half, 0.0)], &Start::Glued, &opts).unwrap();
        ratios.push(energy_scaling(&[&r], m.e_inf(), 1.0).unwrap()[0].ratio);
    }
    assert!(ratios.windows(2).all(|w| w[1] > w[0]), "{ratios:?}");
    assert!(ratios.iter().all(|&r| r < 1.0));
}

#[test]
fn moment_identity_cases() {
    let g = gs();
    let th = derive_delta(&g, 1.0, 0.9).unwrap();
    let grid = Grid::with_spacing(2, 6.0, 0.02).unwrap();
    let zero = symmetry_identity_check(&g, &th, &point::ORIGIN, &grid).unwrap();
    assert!(zero.passed && point::norm(&zero.lhs) == 0.0 && point::norm(&zero.rhs) == 0.0);
    let e1 = symmetry_identity_check(&g, &th, &at(1.0, 0.0), &grid).unwrap();
    let e2 = symmetry_identity_check(&g, &th, &at(0.0, 1.0), &grid).unwrap();
    assert!(e1.passed && e2.passed);
    let tau = at(0.3, -1.7);
    let mixed = symmetry_identity_check(&g, &th, &tau, &grid).unwrap();
    let combined = point::add(&point::scale(&e1.lhs, 0.3), &point::scale(&e2.lhs, -1.7));
    assert!(point::dist(&mixed.lhs, &combined) < 1e-12 * point::norm(&combined));
    assert!(mixed.relative_difference < e1.relative_difference.max(e2.relative_difference) * 2.0 + 1e-12);
}

#[test]
fn energy_limit_matches_a_fine_field() {
    let g = gs();
    let grid = Grid::with_spacing(2, 12.0, 0.05).unwrap();
    let p = Problem::new(grid, 3.0, constant()).unwrap();
    let e = p.energy(&g.lift(grid, &point::ORIGIN)).unwrap();
    assert!((e - energy_limit(&g)).abs() < 1e-3 * energy_limit(&g));
}
