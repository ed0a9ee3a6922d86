//! Local Nehari and barycenter constraints, and the projection onto the set
//! of fields satisfying both around prescribed centers.
//!
//! The projection alternates three steps. The field is split at the level
//! `δ`. When an emerging part is off center by more than half a cell it is
//! moved by whole cells; smaller offsets are removed by an exponential tilt
//! `v ↦ v e^{−η·(x − x_i)}`, which keeps the support, and `η` is the unique
//! minimiser of the convex function `Σ v² e^{−2η·(x−x_i)}`. Finally each
//! emerging part is rescaled to its Nehari point. Rescaling keeps the
//! barycenter, and a positive multiple of an emerging part is again the
//! emerging part of the rescaled field, so once no cell shift is needed a
//! single sweep lands on the constraint set.

use serde::{Deserialize, Serialize};

use crate::energy::{decompose, BumpDecomposition, Problem};
use crate::error::{Error, Result};
use crate::field::{self, Field};
use crate::groundstate::Threshold;
use crate::linalg;
use crate::point::{self, Point};

/// Smallest scale in the Nehari bracket.
pub const T_MIN: f64 = 1e-6;
/// Largest scale tried before the emerging part is declared degenerate.
pub const T_MAX: f64 = 1e6;

/// Squared-mass barycenter `∫x v² / ∫v²`.
pub fn barycenter(part: &Field) -> Result<Point> {
    let g = part.grid();
    let mut mass = 0.0;
    let mut moment = point::ORIGIN;
    for (i, &v) in part.values().iter().enumerate() {
        if v != 0.0 {
            let w = v * v;
            mass += w;
            moment = point::add(&moment, &point::scale(&g.coord(i), w));
        }
    }
    if !(mass > 0.0) {
        return Err(Error::Domain("barycenter of a vanishing emerging part".into()));
    }
    Ok(point::scale(&moment, 1.0 / mass))
}

/// `β′(u)[ψ] = 2(∫v²)^{−1} ∫ v ψ (x − x_i)` for `ψ` supported in `B(x_i, radius)`.
pub fn barycenter_derivative(part: &Field, center: &Point, psi: &Field, radius: f64) -> Result<Point> {
    part.check_same_grid(psi)?;
    let g = part.grid();
    let mut mass = 0.0;
    let mut acc = point::ORIGIN;
    for (i, (&v, &q)) in part.values().iter().zip(psi.values()).enumerate() {
        let x = g.coord(i);
        if q != 0.0 && point::dist(&x, center) > radius {
            return Err(Error::Domain(format!(
                "test field nonzero at {:?}, outside the ball",
                &x[..g.dim()]
            )));
        }
        mass += v * v;
        if v != 0.0 && q != 0.0 {
            acc = point::add(&acc, &point::scale(&point::sub(&x, center), v * q));
        }
    }
    if !(mass > 0.0) {
        return Err(Error::Domain("barycenter of a vanishing emerging part".into()));
    }
    Ok(point::scale(&acc, 2.0 / mass))
}

fn support_of(part: &Field) -> Vec<usize> {
    part.values().iter().enumerate().filter(|(_, &v)| v > 0.0).map(|(i, _)| i).collect()
}

/// `t ↦ E′(u_δ + t v)[v]`, evaluated on the support of `v`.
pub struct NehariRay<'a> {
    problem: &'a Problem,
    submerged: &'a Field,
    part: &'a Field,
    support: Vec<usize>,
    linear0: f64,
    linear1: f64,
}

impl<'a> NehariRay<'a> {
    pub fn new(problem: &'a Problem, submerged: &'a Field, part: &'a Field) -> Result<Self> {
        submerged.check_same_grid(part)?;
        part.check_same_grid(problem.a_field())?;
        let support = support_of(part);
        if support.is_empty() {
            return Err(Error::Constraint("emerging part vanishes".into()));
        }
        let a = problem.a_field().values();
        let (mut l0, mut l1) = (0.0, 0.0);
        for &i in &support {
            let v = part.values()[i];
            let ud = submerged.values()[i];
            l0 += (-field::laplacian_at(submerged, i) + a[i] * ud) * v;
            l1 += (-field::laplacian_at(part, i) + a[i] * v) * v;
        }
        let hn = part.grid().cell_volume();
        Ok(Self { problem, submerged, part, support, linear0: l0 * hn, linear1: l1 * hn })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let p = self.problem.p();
        let nl: f64 = self
            .support
            .iter()
            .map(|&i| {
                let v = self.part.values()[i];
                let u = self.submerged.values()[i] + t * v;
                u.abs().powf(p - 1.0) * u * v
            })
            .sum::<f64>()
            * self.part.grid().cell_volume();
        self.linear0 + t * self.linear1 - nl
    }

    /// The unique positive root, by bracketing and bisection.
    pub fn root(&self, rel_tol: f64) -> Result<f64> {
        let mut lo = T_MIN;
        if !(self.eval(lo) > 0.0) {
            return Err(Error::Constraint(format!(
                "Nehari function not positive at t = {lo}: degenerate emerging part"
            )));
        }
        let mut hi = 2.0;
        while self.eval(hi) >= 0.0 {
            lo = hi;
            hi *= 2.0;
            if hi > T_MAX {
                return Err(Error::Constraint("no Nehari root below t_max".into()));
            }
        }
        while hi - lo > rel_tol * hi {
            let mid = 0.5 * (lo + hi);
            if self.eval(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Scale `t̄` with `E′(u_δ + t̄ v)[v] = 0`.
pub fn nehari_scale(problem: &Problem, submerged: &Field, part: &Field) -> Result<f64> {
    NehariRay::new(problem, submerged, part)?.root(1e-10)
}

/// Tilts `part` so that its barycenter is `center`.
pub fn tilt_to_center(part: &Field, center: &Point) -> Result<Field> {
    let g = *part.grid();
    let n = g.dim();
    let nodes: Vec<(usize, Point, f64)> = part
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(i, &v)| (i, point::sub(&g.coord(i), center), v * v))
        .collect();
    if nodes.is_empty() {
        return Err(Error::Domain("cannot center a vanishing emerging part".into()));
    }
    let extent = nodes.iter().map(|(_, y, _)| point::norm(y)).fold(0.0, f64::max).max(g.spacing());
    let mut eta = point::ORIGIN;
    let mut converged = false;
    for _ in 0..100 {
        let mut s = point::ORIGIN;
        let mut hess = vec![0.0; n * n];
        let mut mass = 0.0;
        for (_, y, w) in &nodes {
            let e = w * (-2.0 * point::dot(&eta, y)).exp();
            mass += e;
            for a in 0..n {
                s[a] += e * y[a];
                for b in 0..n {
                    hess[a * n + b] += 2.0 * e * y[a] * y[b];
                }
            }
        }
        if point::norm(&s) <= 1e-15 * mass * extent {
            converged = true;
            break;
        }
        let step = linalg::solve(hess, s[..n].to_vec(), 1e-14)
            .ok_or_else(|| Error::Constraint("singular tilt system".into()))?;
        let mut d = point::from_slice(&step);
        let len = point::norm(&d);
        if len * extent > 1.0 {
            d = point::scale(&d, 1.0 / (len * extent));
        }
        eta = point::add(&eta, &d);
    }
    if !converged {
        return Err(Error::Constraint("tilt did not converge".into()));
    }
    let mut out = Field::zeros(g);
    let vals = out.values_mut();
    for (i, y, _) in nodes {
        vals[i] = part.values()[i] * (-point::dot(&eta, &y)).exp();
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionOptions {
    pub max_sweeps: usize,
    /// `tol_N` relative to `‖u‖²`.
    pub tol_nehari_rel: f64,
    /// `tol_β` in units of the grid spacing.
    pub tol_barycenter_cells: f64,
    /// Relative bracket width at which the Nehari bisection stops.
    pub root_tol: f64,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self { max_sweeps: 50, tol_nehari_rel: 1e-8, tol_barycenter_cells: 0.25, root_tol: 1e-10 }
    }
}

/// Per-bump constraint residuals of a decomposed field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintState {
    /// `E′(u)[u_i^δ]`.
    pub nehari: Vec<f64>,
    pub barycenters: Vec<Point>,
    /// `|β_i(u) − x_i|`.
    pub offsets: Vec<f64>,
    /// Product of the Nehari scales applied to each bump so far.
    pub scales: Vec<f64>,
}

impl ConstraintState {
    pub fn measure(problem: &Problem, u: &Field, dec: &BumpDecomposition) -> Result<Self> {
        let res = problem.residual(u)?;
        let hn = u.grid().cell_volume();
        let mut nehari = Vec::with_capacity(dec.len());
        let mut barycenters = Vec::with_capacity(dec.len());
        let mut offsets = Vec::with_capacity(dec.len());
        for ((part, support), center) in dec.parts.iter().zip(&dec.supports).zip(&dec.centers) {
            nehari.push(support.iter().map(|&i| res.values()[i] * part.values()[i]).sum::<f64>() * hn);
            let b = barycenter(part)?;
            offsets.push(point::dist(&b, center));
            barycenters.push(b);
        }
        Ok(Self { nehari, barycenters, offsets, scales: vec![1.0; dec.len()] })
    }

    pub fn max_nehari(&self) -> f64 {
        self.nehari.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_offset(&self) -> f64 {
        self.offsets.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct Projected {
    pub field: Field,
    pub decomposition: BumpDecomposition,
    pub state: ConstraintState,
    pub sweeps: usize,
    /// `(max |E′(u)[u_i^δ]|, max |β_i − x_i|)` at the start of every sweep.
    pub history: Vec<(f64, f64)>,
}

/// Projects a nonnegative field onto the Nehari and barycenter constraints
/// around `centers`. Negative values are clipped first.
pub fn project_to_s(
    problem: &Problem,
    u: &Field,
    centers: &[Point],
    threshold: &Threshold,
    opts: &ProjectionOptions,
) -> Result<Projected> {
    let g = *problem.grid();
    let h = g.spacing();
    let tol_b = opts.tol_barycenter_cells * h;
    let mut u = u.map(|v| v.max(0.0));
    let mut scales = vec![1.0; centers.len()];
    let mut history = Vec::new();
    let norm_sq = field::h1_norm_sq(&u, problem.potential().a_inf)?;
    let tol_n = opts.tol_nehari_rel * norm_sq;
    let mut last = (f64::INFINITY, f64::INFINITY);
    for sweep in 0..=opts.max_sweeps {
        let dec = decompose(&u, centers, threshold.delta, threshold.r_delta)?;
        let mut state = ConstraintState::measure(problem, &u, &dec)?;
        last = (state.max_nehari(), state.max_offset());
        history.push(last);
        if last.0 <= tol_n && last.1 <= tol_b {
            state.scales = scales;
            return Ok(Projected { field: u, decomposition: dec, state, sweeps: sweep, history });
        }
        if sweep == opts.max_sweeps {
            break;
        }
        let mut parts = Vec::with_capacity(dec.len());
        for (i, part) in dec.parts.iter().enumerate() {
            let center = &centers[i];
            let b = state.barycenters[i];
            let shift = point::sub(center, &b);
            let cells: Vec<isize> = (0..3).map(|a| (shift[a] / h).round() as isize).collect();
            if cells.iter().any(|&c| c != 0) && (0..g.dim()).any(|a| shift[a].abs() > 0.5 * h) {
                parts.push(field::shift_nodes(part, [cells[0], cells[1], cells[2]]));
                continue;
            }
            let centred = if state.offsets[i] > 0.0 { tilt_to_center(part, center)? } else { part.clone() };
            let t = NehariRay::new(problem, &dec.submerged, &centred)?.root(opts.root_tol)?;
            scales[i] *= t;
            parts.push(centred.scaled(t));
        }
        let mut next = dec.submerged.clone();
        for part in &parts {
            next = next.axpy(1.0, part)?;
        }
        u = next;
    }
    Err(Error::Projection { sweeps: opts.max_sweeps, nehari: last.0, barycenter: last.1 })
}
