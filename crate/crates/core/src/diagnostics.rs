//! Structural and asymptotic checks on computed solutions: profile errors
//! near each bump, exterior suprema, geometry of the centers, angular
//! equidistribution, energy scaling in `k` and a ground-state moment identity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{self, Field, Grid};
use crate::groundstate::{GroundState, Threshold};
use crate::point::{self, Point};
use crate::potential::fibonacci_sphere;
use crate::solver::MinimizeResult;

fn check_centers(u: &Field, centers: &[Point]) -> Result<()> {
    if centers.is_empty() {
        return Err(Error::Precondition("no centers".into()));
    }
    let dim = u.grid().dim();
    if centers.iter().any(|c| c[dim..].iter().any(|&x| x != 0.0)) {
        return Err(Error::Precondition(format!("centers have components beyond dimension {dim}")));
    }
    Ok(())
}

/// `max_i sup_{|x| ≤ R} |u(x + x_i) − w(|x|)|`, sampling `u` by interpolation
/// on a lattice of half the grid spacing.
pub fn profile_error(u: &Field, centers: &[Point], gs: &GroundState, radius: f64) -> Result<f64> {
    check_centers(u, centers)?;
    let g = u.grid();
    if !(radius > 0.0) {
        return Err(Error::Precondition(format!("radius {radius} must be positive")));
    }
    for (i, c) in centers.iter().enumerate() {
        if g.margin(c) < radius {
            return Err(Error::Precondition(format!("ball around center {i} leaves the box")));
        }
    }
    let dim = g.dim();
    let step = 0.5 * g.spacing();
    let n = (radius / step).floor() as isize;
    let mut worst: f64 = 0.0;
    let mut idx = [0isize; 3];
    let side = (2 * n + 1) as usize;
    for c in centers {
        for flat in 0..side.pow(dim as u32) {
            let mut rem = flat;
            for slot in idx.iter_mut().take(dim) {
                *slot = (rem % side) as isize - n;
                rem /= side;
            }
            let mut x = point::ORIGIN;
            for a in 0..dim {
                x[a] = idx[a] as f64 * step;
            }
            let r = point::norm(&x);
            if r > radius {
                continue;
            }
            worst = worst.max((u.sample(&point::add(c, &x)) - gs.value(r)).abs());
        }
    }
    Ok(worst)
}

/// Supremum of `u` outside `∪B(x_i, R)` and where it is attained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExteriorProfile {
    pub radius: f64,
    pub sup: f64,
    /// `w(R)`.
    pub w_at_radius: f64,
    pub argmax: Point,
    /// `min_i |argmax − x_i| − R`.
    pub depth: f64,
    /// The maximising node has a grid neighbour inside the union of balls.
    pub within_one_layer: bool,
    /// Part of the boundary sphere lies outside the box: the value is
    /// dominated by truncation.
    pub truncated: bool,
}

/// Supremum of `u` over the nodes with `min_i |x − x_i| ≥ R`.
pub fn exterior_profile(u: &Field, centers: &[Point], gs: &GroundState, radius: f64) -> Result<ExteriorProfile> {
    check_centers(u, centers)?;
    let g = *u.grid();
    let inside = |x: &Point| centers.iter().any(|c| point::dist(x, c) < radius);
    let mut best: Option<(usize, f64)> = None;
    for (n, &v) in u.values().iter().enumerate() {
        let x = g.coord(n);
        if inside(&x) {
            continue;
        }
        if best.map_or(true, |(_, b)| v > b) {
            best = Some((n, v));
        }
    }
    let (n, sup) = best.ok_or_else(|| Error::Precondition("no nodes outside the balls".into()))?;
    let x = g.coord(n);
    let h = g.spacing();
    let mut within = false;
    for a in 0..g.dim() {
        for s in [-1.0, 1.0] {
            let mut y = x;
            y[a] += s * h;
            if inside(&y) {
                within = true;
            }
        }
    }
    let depth = centers.iter().map(|c| point::dist(&x, c)).fold(f64::INFINITY, f64::min) - radius;
    let truncated = centers.iter().any(|c| g.margin(c) < radius);
    Ok(ExteriorProfile {
        radius,
        sup,
        w_at_radius: gs.value(radius),
        argmax: x,
        depth,
        within_one_layer: within,
        truncated,
    })
}

/// Geometry of a set of centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationStats {
    /// `min_{i≠j} |θ_i − θ_j|`, infinite for one center.
    pub gamma: f64,
    /// `max_θ min_i |θ − θ_i|` over the probe directions.
    pub lambda: f64,
    /// `max|x_i| / min|x_i|`.
    pub ratio: f64,
    pub min_separation: f64,
    pub min_norm: f64,
    pub max_norm: f64,
}

/// Probe directions on the unit sphere: `count` equally spaced angles in the
/// plane, a Fibonacci lattice in 3-D, `±1` on the line.
pub fn probe_directions(dim: usize, count: usize) -> Vec<Point> {
    match dim {
        1 => vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]],
        2 => (0..count).map(|j| point::polar(std::f64::consts::TAU * j as f64 / count as f64)).collect(),
        _ => fibonacci_sphere(count),
    }
}

/// Default probe count: 720 directions in the plane, 2048 on the sphere.
pub fn default_probe_count(dim: usize) -> usize {
    if dim == 3 {
        2048
    } else {
        720
    }
}

fn directions_of(centers: &[Point]) -> Result<Vec<Point>> {
    centers
        .iter()
        .enumerate()
        .map(|(i, c)| point::unit(c).ok_or_else(|| Error::Domain(format!("center {i} is the origin"))))
        .collect()
}

pub fn configuration_stats(centers: &[Point], dim: usize) -> Result<ConfigurationStats> {
    if centers.is_empty() {
        return Err(Error::Precondition("no centers".into()));
    }
    let thetas = directions_of(centers)?;
    let norms: Vec<f64> = centers.iter().map(point::norm).collect();
    let min_norm = norms.iter().copied().fold(f64::INFINITY, f64::min);
    let max_norm = norms.iter().copied().fold(0.0, f64::max);
    let lambda = probe_directions(dim, default_probe_count(dim))
        .iter()
        .map(|p| thetas.iter().map(|t| point::dist(p, t)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    Ok(ConfigurationStats {
        gamma: point::min_pairwise_distance(&thetas),
        lambda,
        ratio: max_norm / min_norm,
        min_separation: point::min_pairwise_distance(centers),
        min_norm,
        max_norm,
    })
}

/// Angular counts `N_k(x, ε) = #{i : |θ_i − x| < ε}` over the probes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquidistributionRow {
    pub eps: f64,
    /// `min_x N_k(x, ε) / (k ε^{N−1})`.
    pub min_ratio: f64,
    pub min_count: usize,
    pub max_count: usize,
    pub mean_count: f64,
}

pub fn equidistribution(centers: &[Point], dim: usize, eps_list: &[f64], probe_count: usize) -> Result<Vec<EquidistributionRow>> {
    let thetas = directions_of(centers)?;
    let k = thetas.len() as f64;
    let probes = probe_directions(dim, probe_count);
    Ok(eps_list
        .iter()
        .map(|&eps| {
            let counts: Vec<usize> =
                probes.iter().map(|p| thetas.iter().filter(|t| point::dist(p, t) < eps).count()).collect();
            let min_count = counts.iter().copied().min().unwrap_or(0);
            EquidistributionRow {
                eps,
                min_ratio: min_count as f64 / (k * eps.powi(dim as i32 - 1)),
                min_count,
                max_count: counts.iter().copied().max().unwrap_or(0),
                mean_count: counts.iter().sum::<usize>() as f64 / counts.len().max(1) as f64,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub k: usize,
    pub energy: f64,
    /// `E(u_k) / (k E∞(w))`.
    pub ratio: f64,
    /// `∫|Du_k|² + a∞u_k²`.
    pub norm_sq: f64,
}

/// Energy and norm of each minimiser against `k E∞(w)`.
pub fn energy_scaling(results: &[&MinimizeResult], e_inf: f64, a_inf: f64) -> Result<Vec<ScalingRow>> {
    results
        .iter()
        .map(|r| {
            let k = r.centers.len();
            Ok(ScalingRow {
                k,
                energy: r.value,
                ratio: r.value / (k as f64 * e_inf),
                norm_sq: field::h1_norm_sq(&r.field, a_inf)?,
            })
        })
        .collect()
}

/// Whether every ratio lies in `[1 − tol, 1 + tol]` and energy and norm
/// increase with `k`.
pub fn scaling_holds(rows: &[ScalingRow], tol: f64) -> bool {
    rows.iter().all(|r| (r.ratio - 1.0).abs() <= tol)
        && rows.windows(2).all(|w| w[1].k <= w[0].k || (w[1].energy > w[0].energy && w[1].norm_sq > w[0].norm_sq))
}

/// Both sides of `∫w^δ (Dw·τ) x dx = −(τ/2) ∫(w^δ)² dx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub lhs: Point,
    pub rhs: Point,
    pub relative_difference: f64,
    pub passed: bool,
}

/// Evaluates both sides by node quadrature on `grid` with `w` lifted to the
/// origin and `Dw(x) = w′(|x|) x/|x|`.
pub fn symmetry_identity_check(gs: &GroundState, threshold: &Threshold, tau: &Point, grid: &Grid) -> Result<IdentityCheck> {
    if grid.dim() != gs.dim() {
        return Err(Error::GridMismatch);
    }
    if grid.margin(&point::ORIGIN) < threshold.r_delta {
        return Err(Error::Precondition("box does not contain the support of w^delta".into()));
    }
    let hn = grid.cell_volume();
    let mut lhs = point::ORIGIN;
    let mut mass = 0.0;
    for n in 0..grid.len() {
        let x = grid.coord(n);
        let r = point::norm(&x);
        let (w, dw) = gs.value_and_slope(r);
        let wd = w - threshold.delta;
        if wd <= 0.0 {
            continue;
        }
        mass += wd * wd * hn;
        if r > 0.0 {
            let grad_tau = dw * point::dot(&x, tau) / r;
            lhs = point::add(&lhs, &point::scale(&x, wd * grad_tau * hn));
        }
    }
    let rhs = point::scale(tau, -0.5 * mass);
    let diff = point::dist(&lhs, &rhs);
    let scale = point::norm(&rhs);
    let relative_difference = if scale > 0.0 { diff / scale } else { diff };
    let passed = if scale > 0.0 { relative_difference < 1e-3 } else { diff < 1e-14 };
    Ok(IdentityCheck { lhs, rhs, relative_difference, passed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticsRecord {
    pub k: usize,
    pub stats: ConfigurationStats,
    /// `(R, profile error)`.
    pub profile_errors: Vec<(f64, f64)>,
    pub exterior: Vec<ExteriorProfile>,
    pub energy: f64,
    pub energy_ratio: f64,
    pub max_multiplier: f64,
    pub equidistribution: Vec<EquidistributionRow>,
}

/// Per-`k` records of a sweep.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticsReport {
    pub records: Vec<AsymptoticsRecord>,
}

/// A computed solution as seen by [`asymptotics_record`].
#[derive(Debug, Clone, Copy)]
pub struct Solution<'a> {
    pub field: &'a Field,
    pub centers: &'a [Point],
    pub energy: f64,
    pub max_multiplier: f64,
}

impl<'a> From<&'a MinimizeResult> for Solution<'a> {
    fn from(r: &'a MinimizeResult) -> Self {
        Self { field: &r.field, centers: &r.centers, energy: r.value, max_multiplier: r.max_multiplier() }
    }
}

/// Builds the record of one solution. Profile errors are taken at
/// `R ∈ {R_δ/2, R_δ}` and exterior suprema at `R ∈ {R_δ, 2R_δ}`; radii whose
/// balls leave the box are skipped.
pub fn asymptotics_record(
    sol: Solution<'_>,
    gs: &GroundState,
    threshold: &Threshold,
    e_inf: f64,
    eps_list: &[f64],
) -> Result<AsymptoticsRecord> {
    let u = sol.field;
    let centers = sol.centers;
    let dim = u.grid().dim();
    let k = centers.len();
    let mut profile_errors = Vec::new();
    for r in [0.5 * threshold.r_delta, threshold.r_delta] {
        match profile_error(u, centers, gs, r) {
            Ok(e) => profile_errors.push((r, e)),
            Err(Error::Precondition(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let exterior = [threshold.r_delta, 2.0 * threshold.r_delta]
        .iter()
        .map(|&r| exterior_profile(u, centers, gs, r))
        .collect::<Result<Vec<_>>>()?;
    let at_origin = centers.iter().any(|c| point::norm(c) == 0.0);
    let equidistribution =
        if at_origin { Vec::new() } else { equidistribution(centers, dim, eps_list, default_probe_count(dim))? };
    let stats = if at_origin {
        // directions are undefined; only the separation is meaningful
        let norms: Vec<f64> = centers.iter().map(point::norm).collect();
        ConfigurationStats {
            gamma: f64::INFINITY,
            lambda: f64::NAN,
            ratio: f64::NAN,
            min_separation: point::min_pairwise_distance(centers),
            min_norm: norms.iter().copied().fold(f64::INFINITY, f64::min),
            max_norm: norms.iter().copied().fold(0.0, f64::max),
        }
    } else {
        configuration_stats(centers, dim)?
    };
    Ok(AsymptoticsRecord {
        k,
        stats,
        profile_errors,
        exterior,
        energy: sol.energy,
        energy_ratio: sol.energy / (k as f64 * e_inf),
        max_multiplier: sol.max_multiplier,
        equidistribution,
    })
}

impl AsymptoticsReport {
    /// Checks that every reported number is finite (infinite `Γ` is allowed
    /// for a single bump) and every ratio is at least one.
    pub fn validate(&self) -> Result<()> {
        for r in &self.records {
            let s = &r.stats;
            let centered = s.min_norm == 0.0;
            let finite = [s.min_norm, s.max_norm, r.energy, r.energy_ratio, r.max_multiplier]
                .iter()
                .all(|v| v.is_finite())
                && (centered || s.ratio.is_finite())
                && (r.k < 2 || (s.gamma.is_finite() && s.min_separation.is_finite()))
                && r.profile_errors.iter().all(|(a, b)| a.is_finite() && b.is_finite())
                && r.exterior.iter().all(|e| e.sup.is_finite());
            if !finite {
                return Err(Error::Postcondition(format!("non-finite entry in the record for k = {}", r.k)));
            }
            if !centered && s.ratio < 1.0 {
                return Err(Error::Postcondition(format!("ratio {} below one for k = {}", s.ratio, r.k)));
            }
        }
        Ok(())
    }

    /// Records with at least two bumps; trends are taken over these only.
    fn multi(&self) -> Vec<&AsymptoticsRecord> {
        self.records.iter().filter(|r| r.k >= 2).collect()
    }

    /// Minimum pairwise separation nondecreasing in `k` up to `noise`.
    pub fn separation_nondecreasing(&self, noise: f64) -> bool {
        self.multi().windows(2).all(|w| w[1].stats.min_separation >= w[0].stats.min_separation - noise)
    }

    /// Radius ratio nonincreasing in `k` up to `noise`.
    pub fn ratio_nonincreasing(&self, noise: f64) -> bool {
        self.multi().windows(2).all(|w| w[1].stats.ratio <= w[0].stats.ratio + noise)
    }

    /// CSV table with columns `k, f_k, ratio, gamma, lambda, max_lambda`.
    pub fn write_csv(&self, out: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "f_k", "ratio", "gamma", "lambda", "max_lambda"])
            .map_err(|e| Error::Format(e.to_string()))?;
        for r in &self.records {
            w.write_record(&[
                r.k.to_string(),
                r.energy.to_string(),
                r.stats.ratio.to_string(),
                r.stats.gamma.to_string(),
                r.stats.lambda.to_string(),
                r.max_multiplier.to_string(),
            ])
            .map_err(|e| Error::Format(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}
