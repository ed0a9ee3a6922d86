//! Radial ground state of `−Δw + a∞w = w^p` by shooting.
//!
//! The initial value `w(0)` is bisected between undershooting trajectories
//! (`w′` turns positive) and overshooting ones (`w` crosses zero) until the two
//! brackets agree to machine precision. The shot is trusted down to a small
//! fraction of `w(0)`. Beyond that point the exponentially growing mode
//! dominates any floating-point trajectory, so the tail is replaced by the
//! decaying solution of the linearised equation, integrated inward from
//! `r_max` and matched in value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, Grid};
use crate::point::{self, Point};

/// Radial mesh step for `a∞ = 1`; scaled by `1/√a∞` for larger limits.
const BASE_STEP: f64 = 1e-3;
/// Fraction of `w(0)` below which the shot is replaced by the linear tail.
const SPLICE_FRACTION: f64 = 1e-6;

/// Area of the unit sphere `S^{N−1}`.
pub fn sphere_area(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        _ => 4.0 * std::f64::consts::PI,
    }
}

/// Checks `p > 1`, and `p < (N+2)/(N−2)` when `N ≥ 3`.
pub fn check_exponent(p: f64, dim: usize) -> Result<()> {
    if !(p.is_finite() && p > 1.0) {
        return Err(Error::Domain(format!("exponent p = {p} must exceed 1")));
    }
    if dim >= 3 {
        let critical = (dim as f64 + 2.0) / (dim as f64 - 2.0);
        if p >= critical {
            return Err(Error::Domain(format!(
                "exponent p = {p} is not subcritical in dimension {dim} (needs p < {critical})"
            )));
        }
    }
    if !(1..=3).contains(&dim) {
        return Err(Error::Domain(format!("dimension {dim} not in 1..=3")));
    }
    Ok(())
}

/// Asymptotic fit `w(r) ≈ d₀ r^{−(N−1)/2} e^{−κ r}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub d0: f64,
    pub exponent: f64,
}

/// The threshold `δ` and the radius `R_δ` with `w < δ` outside `B(0, R_δ/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub delta: f64,
    pub r_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundState {
    p: f64,
    a_inf: f64,
    dim: usize,
    step: f64,
    w: Vec<f64>,
    dw: Vec<f64>,
    energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundStateSummary {
    pub dim: usize,
    pub p: f64,
    pub a_inf: f64,
    pub w0: f64,
    pub d0: f64,
    pub decay_exponent: f64,
    #[serde(rename = "E_inf")]
    pub e_inf: f64,
    pub delta: f64,
    #[serde(rename = "R_delta")]
    pub r_delta: f64,
}

enum Shot {
    Under,
    Over,
    /// Neither event happened before the integration limit.
    Undecided,
}

struct Ode {
    p: f64,
    a: f64,
    n1: f64,
}

impl Ode {
    fn rhs(&self, r: f64, w: f64, dw: f64) -> (f64, f64) {
        let nl = w.abs().powf(self.p - 1.0) * w;
        (dw, -self.n1 / r * dw + self.a * w - nl)
    }

    fn rhs_linear(&self, r: f64, w: f64, dw: f64) -> (f64, f64) {
        (dw, -self.n1 / r * dw + self.a * w)
    }

    /// Value and slope one step from the origin, from the even Taylor expansion.
    fn start(&self, w0: f64, dr: f64, dim: usize) -> (f64, f64) {
        let c = (self.a * w0 - w0.powf(self.p)) / dim as f64;
        (w0 + 0.5 * c * dr * dr, c * dr)
    }
}

fn rk4(
    f: &impl Fn(f64, f64, f64) -> (f64, f64),
    r: f64,
    w: f64,
    dw: f64,
    dr: f64,
) -> (f64, f64) {
    let (k1w, k1d) = f(r, w, dw);
    let (k2w, k2d) = f(r + 0.5 * dr, w + 0.5 * dr * k1w, dw + 0.5 * dr * k1d);
    let (k3w, k3d) = f(r + 0.5 * dr, w + 0.5 * dr * k2w, dw + 0.5 * dr * k2d);
    let (k4w, k4d) = f(r + dr, w + dr * k3w, dw + dr * k3d);
    (
        w + dr / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w),
        dw + dr / 6.0 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d),
    )
}

/// Integrates from the origin, recording samples, and classifies the shot.
fn shoot(ode: &Ode, dim: usize, w0: f64, dr: f64, steps: usize, record: bool) -> (Shot, Vec<(f64, f64)>) {
    let mut trace = Vec::new();
    if record {
        trace.push((w0, 0.0));
    }
    let (mut w, mut dw) = ode.start(w0, dr, dim);
    let f = |r, w, dw| ode.rhs(r, w, dw);
    for j in 1..steps {
        if record {
            trace.push((w, dw));
        }
        if w < 0.0 {
            return (Shot::Over, trace);
        }
        if dw > 0.0 {
            return (Shot::Under, trace);
        }
        let (nw, nd) = rk4(&f, j as f64 * dr, w, dw, dr);
        w = nw;
        dw = nd;
    }
    (Shot::Undecided, trace)
}

/// Shooting solve of the radial ground state on `[0, r_max]`.
///
/// `tol` bounds `w(r_max)`; a larger value means the box is too short for the
/// tail to have decayed.
pub fn solve_radial(p: f64, a_inf: f64, dim: usize, r_max: f64, tol: f64) -> Result<GroundState> {
    check_exponent(p, dim)?;
    if !(a_inf.is_finite() && a_inf > 0.0) {
        return Err(Error::Domain(format!("a_inf = {a_inf} must be positive")));
    }
    if !(a_inf * r_max >= 20.0) {
        return Err(Error::Domain(format!("r_max = {r_max} too short: need a_inf·r_max ≥ 20")));
    }
    let dr = BASE_STEP * (1.0f64).min(1.0 / a_inf.sqrt());
    let steps = (r_max / dr).ceil() as usize;
    let steps = steps + steps % 2;
    let dr = r_max / steps as f64;
    let ode = Ode { p, a: a_inf, n1: dim as f64 - 1.0 };

    // The constant solution a∞^{1/(p−1)} separates the regimes from below.
    let equilibrium = a_inf.powf(1.0 / (p - 1.0));
    let mut lo = equilibrium * (1.0 + 1e-6);
    match shoot(&ode, dim, lo, dr, steps + 1, false).0 {
        Shot::Under => {}
        _ => return Err(Error::Shooting(format!("no undershoot at w(0) = {lo}"))),
    }
    let mut hi = 2.0 * equilibrium;
    let mut found = false;
    for _ in 0..60 {
        if let Shot::Over = shoot(&ode, dim, hi, dr, steps + 1, false).0 {
            found = true;
            break;
        }
        lo = lo.max(hi);
        hi *= 2.0;
    }
    if !found {
        return Err(Error::Shooting("no overshooting initial value found".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match shoot(&ode, dim, mid, dr, steps + 1, false).0 {
            Shot::Under => lo = mid,
            Shot::Over => hi = mid,
            Shot::Undecided => {
                lo = mid;
                hi = mid;
                break;
            }
        }
    }
    let w0 = 0.5 * (lo + hi);
    let (_, trace) = shoot(&ode, dim, w0, dr, steps + 1, true);

    let cutoff = SPLICE_FRACTION * w0;
    let splice = trace
        .iter()
        .position(|&(w, _)| w < cutoff)
        .ok_or_else(|| Error::Shooting("trajectory left the bracket before decaying".into()))?;
    if splice < 2 {
        return Err(Error::Shooting("degenerate trajectory".into()));
    }

    let mut w = vec![0.0; steps + 1];
    let mut dw = vec![0.0; steps + 1];
    for (j, &(a, b)) in trace.iter().take(splice + 1).enumerate() {
        w[j] = a;
        dw[j] = b;
    }
    // Decaying mode of the linear equation, integrated inward from r_max.
    let lin = |r, w, dw| ode.rhs_linear(r, w, dw);
    let mut tw = 1.0;
    let mut td = -(a_inf.sqrt() + ode.n1 / (2.0 * r_max));
    let mut tail = vec![(0.0, 0.0); steps + 1];
    tail[steps] = (tw, td);
    for j in (splice..steps).rev() {
        let (nw, nd) = rk4(&lin, (j + 1) as f64 * dr, tw, td, -dr);
        tw = nw;
        td = nd;
        tail[j] = (tw, td);
    }
    let scale = w[splice] / tail[splice].0;
    for j in splice..=steps {
        w[j] = tail[j].0 * scale;
        dw[j] = tail[j].1 * scale;
    }

    if w.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Postcondition("ground state is not positive".into()));
    }
    if w.windows(2).any(|s| s[1] >= s[0]) {
        return Err(Error::Postcondition("ground state is not strictly decreasing".into()));
    }
    if w[steps] >= tol {
        return Err(Error::Domain(format!(
            "w(r_max) = {:.3e} exceeds tolerance {tol:.1e}: increase r_max",
            w[steps]
        )));
    }

    let mut gs = GroundState { p, a_inf, dim, step: dr, w, dw, energy: 0.0 };
    gs.energy = gs.radial_integral(|w, dw| 0.5 * (dw * dw + a_inf * w * w) - w.powf(p + 1.0) / (p + 1.0));
    Ok(gs)
}

impl GroundState {
    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn a_inf(&self) -> f64 {
        self.a_inf
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn r_max(&self) -> f64 {
        self.step * (self.w.len() - 1) as f64
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn w0(&self) -> f64 {
        self.w[0]
    }

    /// Mesh radii and values.
    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.w.iter().enumerate().map(|(j, &w)| (j as f64 * self.step, w))
    }

    /// `w′` on the mesh.
    pub fn slopes(&self) -> &[f64] {
        &self.dw
    }

    /// Cubic Hermite interpolation of `w`; asymptotic extension beyond `r_max`.
    pub fn value(&self, r: f64) -> f64 {
        self.value_and_slope(r).0
    }

    pub fn slope(&self, r: f64) -> f64 {
        self.value_and_slope(r).1
    }

    pub fn value_and_slope(&self, r: f64) -> (f64, f64) {
        let r = r.abs();
        let n = self.w.len() - 1;
        let r_max = self.r_max();
        if r >= r_max {
            let k = self.a_inf.sqrt();
            let e = 0.5 * (self.dim as f64 - 1.0);
            let v = self.w[n] * (r_max / r).powf(e) * (-k * (r - r_max)).exp();
            return (v, -v * (k + e / r));
        }
        let t = r / self.step;
        let j = (t.floor() as usize).min(n - 1);
        let s = t - j as f64;
        let h = self.step;
        let (y0, y1) = (self.w[j], self.w[j + 1]);
        let (m0, m1) = (self.dw[j] * h, self.dw[j + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let v = (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * m0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * m1;
        let d = ((6.0 * s2 - 6.0 * s) * y0
            + (3.0 * s2 - 4.0 * s + 1.0) * m0
            + (-6.0 * s2 + 6.0 * s) * y1
            + (3.0 * s2 - 2.0 * s) * m1)
            / h;
        (v, d)
    }

    /// `|S^{N−1}| ∫₀^{r_max} f(w, w′) r^{N−1} dr` by Simpson's rule on the mesh.
    pub fn radial_integral(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        let n = self.w.len() - 1;
        let e = self.dim as i32 - 1;
        let mut acc = 0.0;
        for j in 0..=n {
            let r = j as f64 * self.step;
            let weight = if j == 0 || j == n {
                1.0
            } else if j % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += weight * f(self.w[j], self.dw[j]) * r.powi(e);
        }
        sphere_area(self.dim) * acc * self.step / 3.0
    }

    /// `∫(|Dw|² + a∞w²)`.
    pub fn norm_sq(&self) -> f64 {
        let a = self.a_inf;
        self.radial_integral(|w, dw| dw * dw + a * w * w)
    }

    /// Largest node-wise residual of the radial equation using centred
    /// differences of the stored profile, over `[r_from, r_max)`.
    pub fn ode_residual(&self, r_from: f64) -> f64 {
        let h = self.step;
        let n1 = self.dim as f64 - 1.0;
        let start = ((r_from / h).ceil() as usize).max(1);
        (start..self.w.len() - 1)
            .map(|j| {
                let r = j as f64 * h;
                let d2 = (self.w[j + 1] - 2.0 * self.w[j] + self.w[j - 1]) / (h * h);
                (d2 + n1 / r * self.dw[j] - self.a_inf * self.w[j] + self.w[j].powf(self.p)).abs()
            })
            .fold(0.0, f64::max)
    }

    /// `w(|x − y|)` at every node.
    pub fn lift(&self, grid: Grid, center: &Point) -> Field {
        Field::from_fn(grid, |x| self.value(point::dist(x, center)))
    }

    /// Smallest mesh radius at which `w` drops below `level`, refined by
    /// bisection on the interpolant.
    pub fn crossing_radius(&self, level: f64) -> Result<f64> {
        if level >= self.w[0] {
            return Ok(0.0);
        }
        let j = self
            .w
            .iter()
            .position(|&v| v < level)
            .ok_or_else(|| Error::Domain(format!("w stays above {level} up to r_max: increase r_max")))?;
        let (mut lo, mut hi) = ((j - 1) as f64 * self.step, j as f64 * self.step);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.value(mid) < level {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    pub fn summary(&self, threshold: &Threshold) -> Result<GroundStateSummary> {
        let fit = fit_decay(self, 6.0 / self.a_inf.sqrt(), 10.0 / self.a_inf.sqrt())?;
        Ok(GroundStateSummary {
            dim: self.dim,
            p: self.p,
            a_inf: self.a_inf,
            w0: self.w0(),
            d0: fit.d0,
            decay_exponent: fit.exponent,
            e_inf: self.energy,
            delta: threshold.delta,
            r_delta: threshold.r_delta,
        })
    }

    /// Writes `r,w` rows.
    pub fn write_csv(&self, mut out: impl std::io::Write, stride: usize) -> Result<()> {
        writeln!(out, "r,w")?;
        for (r, w) in self.samples().step_by(stride.max(1)) {
            writeln!(out, "{r},{w:e}")?;
        }
        Ok(())
    }
}

fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn fit_profile(gs: &GroundState, r_lo: f64, r_hi: f64, values: &[f64]) -> Result<DecayFit> {
    if !(r_lo > 0.0 && r_lo < r_hi && r_hi <= gs.r_max() + 1e-12) {
        return Err(Error::Domain(format!("bad fit window [{r_lo}, {r_hi}]")));
    }
    let e = 0.5 * (gs.dim as f64 - 1.0);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (j, &v) in values.iter().enumerate() {
        let r = j as f64 * gs.step;
        if r >= r_lo && r <= r_hi {
            if !(v.abs() > 1e-200) {
                return Err(Error::Domain(format!("profile below noise floor at r = {r}")));
            }
            xs.push(-r);
            ys.push(v.abs().ln() + e * r.ln());
        }
    }
    if xs.len() < 8 {
        return Err(Error::Domain(format!("{} samples in fit window, need 8", xs.len())));
    }
    let (slope, intercept) = linear_fit(&xs, &ys);
    Ok(DecayFit { d0: intercept.exp(), exponent: slope })
}

/// Log-linear fit of `w(r) r^{(N−1)/2}` against `−r` on `[r_lo, r_hi]`.
pub fn fit_decay(gs: &GroundState, r_lo: f64, r_hi: f64) -> Result<DecayFit> {
    fit_profile(gs, r_lo, r_hi, &gs.w)
}

/// The same fit applied to `|w′|`.
pub fn fit_gradient_decay(gs: &GroundState, r_lo: f64, r_hi: f64) -> Result<DecayFit> {
    fit_profile(gs, r_lo, r_hi, &gs.dw)
}

/// `E∞(w)`.
pub fn energy_limit(gs: &GroundState) -> f64 {
    gs.energy
}

/// `δ = safety · min{1, (a₀/p)^{1/(p−1)}, (a₀/2)^{1/(p−1)}, a₀^{1/(p−1)}/2, w(0)/3}`
/// and `R_δ = 2 min{r : w(r) < δ}`.
pub fn derive_delta(gs: &GroundState, a0: f64, safety: f64) -> Result<Threshold> {
    if !(safety > 0.0 && safety < 1.0) {
        return Err(Error::Domain(format!("safety {safety} not in (0, 1)")));
    }
    if !(a0 > 0.0) {
        return Err(Error::Domain(format!("a0 = {a0} must be positive")));
    }
    let q = 1.0 / (gs.p - 1.0);
    let bound = [
        1.0,
        (a0 / gs.p).powf(q),
        (a0 / 2.0).powf(q),
        0.5 * a0.powf(q),
        gs.w0() / 3.0,
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min);
    let delta = safety * bound;
    let r_delta = 2.0 * gs.crossing_radius(delta)?;
    Ok(Threshold { delta, r_delta })
}
