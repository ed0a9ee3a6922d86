//! Reduced model of `g^{k,σ}` used to seed the outer search and to study
//! large `k` without PDE solves:
//!
//! `G = kE∞(w) + Σ_i τ(x_i) − Σ_{i<j} C e^{−√a∞ d_ij} d_ij^{−(N−1)/2}`,
//!
//! with `τ(x) = ∫(a(y) − a∞)(w^δ(y − x))² dy` and `C = d₀∫w^p(y)e^{√a∞ y₁}dy`,
//! the leading pair interaction of two ground states at distance `d`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{radius_search, spread_directions, tangent_basis, Admissibility, Configuration};
use crate::error::{Error, Result};
use crate::groundstate::{fit_decay, GroundState, Threshold};
use crate::point::{self, Point};
use crate::potential::Potential;
use crate::solver::Model;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateOptions {
    pub restarts: usize,
    pub proposals: usize,
    pub seed: u64,
    /// Start the first restart from equally spread directions.
    pub lattice_start: bool,
    /// Quadrature nodes per axis for `τ`.
    pub quadrature_nodes: usize,
    /// Table size and largest tabulated radius of `τ` for radial potentials.
    pub table_nodes: usize,
    pub table_radius: f64,
    /// Initial angle step (radians) and relative `ρ` step of the proposals.
    pub angle_step: f64,
    pub rho_step: f64,
    /// Initial and smallest radius steps of the inner search, relative to `ρ`.
    pub radius_step: f64,
    pub min_radius_step: f64,
}

impl Default for SurrogateOptions {
    fn default() -> Self {
        Self {
            restarts: 6,
            proposals: 400,
            seed: 0,
            lattice_start: true,
            quadrature_nodes: 40,
            table_nodes: 2048,
            table_radius: 5000.0,
            angle_step: 0.2,
            rho_step: 0.05,
            radius_step: 0.02,
            min_radius_step: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
enum Tail {
    /// `τ` on nodes uniform in `log(1 + r)`.
    Radial { step: f64, values: Vec<f64>, cap: f64 },
    Direct,
}

/// The reduced energy model for one potential and ground state.
#[derive(Debug, Clone)]
pub struct Surrogate {
    potential: Potential,
    dim: usize,
    e_inf: f64,
    r_delta: f64,
    sqrt_a: f64,
    coupling: f64,
    /// Offsets and weights `(w^δ)² h^N` of the `τ` quadrature.
    stencil: Vec<(Point, f64)>,
    tail: Tail,
}

/// Best configuration found by [`Surrogate::maximize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateResult {
    pub configuration: Configuration,
    pub value: f64,
    /// `G − kE∞(w)`.
    pub gap: f64,
    /// Best value reached by every restart.
    pub restart_values: Vec<f64>,
}

fn angular_mean_exp(dim: usize, s: f64) -> f64 {
    match dim {
        1 => 2.0 * s.cosh(),
        3 => {
            if s < 1e-8 {
                4.0 * std::f64::consts::PI
            } else {
                4.0 * std::f64::consts::PI * s.sinh() / s
            }
        }
        _ => {
            // 2π I₀(s) by the trapezoid rule, exact to rounding for periodic integrands
            let n = 128;
            let pi = std::f64::consts::PI;
            (0..n).map(|j| (s * (2.0 * pi * j as f64 / n as f64).cos()).exp()).sum::<f64>() * 2.0 * pi / n as f64
        }
    }
}

impl Surrogate {
    pub fn new(potential: &Potential, gs: &GroundState, threshold: Threshold, opts: &SurrogateOptions) -> Result<Self> {
        let dim = gs.dim();
        let a = gs.a_inf();
        if (potential.a_inf - a).abs() > 1e-12 * a {
            return Err(Error::Configuration("ground state solves a different limit problem".into()));
        }
        let sqrt_a = a.sqrt();
        let fit = fit_decay(gs, 6.0 / sqrt_a, 10.0 / sqrt_a)?;
        let p = gs.p();
        let samples: Vec<(f64, f64)> = gs.samples().collect();
        let mut integral = 0.0;
        for pair in samples.windows(2) {
            let f = |(r, w): (f64, f64)| w.max(0.0).powf(p) * angular_mean_exp(dim, sqrt_a * r) * r.powi(dim as i32 - 1);
            integral += 0.5 * (pair[1].0 - pair[0].0) * (f(pair[0]) + f(pair[1]));
        }
        let coupling = fit.d0 * integral;

        let reach = 0.5 * threshold.r_delta;
        let n = opts.quadrature_nodes.max(4);
        let hq = 2.0 * reach / n as f64;
        let mut stencil = Vec::new();
        let mut idx = [0usize; 3];
        let total = n.pow(dim as u32);
        for flat in 0..total {
            let mut rem = flat;
            for slot in idx.iter_mut().take(dim) {
                *slot = rem % n;
                rem /= n;
            }
            let mut z = point::ORIGIN;
            for axis in 0..dim {
                z[axis] = -reach + (idx[axis] as f64 + 0.5) * hq;
            }
            let v = gs.value(point::norm(&z)) - threshold.delta;
            if v > 0.0 {
                stencil.push((z, v * v * hq.powi(dim as i32)));
            }
        }
        let mut s = Self {
            potential: potential.clone(),
            dim,
            e_inf: crate::groundstate::energy_limit(gs),
            r_delta: threshold.r_delta,
            sqrt_a,
            coupling,
            stencil,
            tail: Tail::Direct,
        };
        if potential.is_radial() {
            let m = opts.table_nodes.max(16);
            let cap = opts.table_radius;
            let step = (1.0 + cap).ln() / (m - 1) as f64;
            let values = (0..m).map(|j| s.tau_direct(&[(j as f64 * step).exp() - 1.0, 0.0, 0.0])).collect();
            s.tail = Tail::Radial { step, values, cap };
        }
        Ok(s)
    }

    /// Surrogate for the potential, ground state and threshold of a model.
    pub fn for_model(model: &Model, opts: &SurrogateOptions) -> Result<Self> {
        Self::new(model.problem.potential(), &model.ground_state, model.threshold, opts)
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    /// Replaces the pair constant `C`.
    pub fn with_coupling(mut self, coupling: f64) -> Self {
        self.coupling = coupling;
        self
    }

    pub fn e_inf(&self) -> f64 {
        self.e_inf
    }

    pub fn r_delta(&self) -> f64 {
        self.r_delta
    }

    fn tau_direct(&self, x: &Point) -> f64 {
        let a = self.potential.a_inf;
        self.stencil.iter().map(|(z, wt)| (self.potential.eval(&point::add(x, z)) - a) * wt).sum()
    }

    /// `τ(x)`.
    pub fn tau(&self, x: &Point) -> f64 {
        match &self.tail {
            Tail::Radial { step, values, cap } => {
                let r = point::norm(x);
                if r >= *cap {
                    // far out `a` is flat across the support
                    let mass: f64 = self.stencil.iter().map(|(_, wt)| wt).sum();
                    return (self.potential.eval(x) - self.potential.a_inf) * mass;
                }
                let u = (1.0 + r).ln() / step;
                let j = (u.floor() as usize).min(values.len() - 2);
                let t = u - j as f64;
                let at = |i: isize| values[i.clamp(0, values.len() as isize - 1) as usize];
                let (p0, p1, p2, p3) = (at(j as isize - 1), at(j as isize), at(j as isize + 1), at(j as isize + 2));
                // Catmull-Rom
                p1 + 0.5
                    * t
                    * (p2 - p0 + t * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + t * (3.0 * (p1 - p2) + p3 - p0)))
            }
            Tail::Direct => self.tau_direct(x),
        }
    }

    /// `C e^{−√a∞ d} d^{−(N−1)/2}`.
    pub fn pair_energy(&self, d: f64) -> f64 {
        let e = self.coupling * (-self.sqrt_a * d).exp();
        match self.dim {
            1 => e,
            2 => e / d.sqrt(),
            _ => e / d,
        }
    }

    /// `G` at the given centers.
    pub fn value_at(&self, pts: &[Point]) -> f64 {
        let mut g = pts.len() as f64 * self.e_inf;
        for (i, x) in pts.iter().enumerate() {
            g += self.tau(x);
            for y in &pts[i + 1..] {
                g -= self.pair_energy(point::dist(x, y));
            }
        }
        g
    }

    pub fn value(&self, cfg: &Configuration) -> f64 {
        self.value_at(&cfg.points())
    }

    /// Smallest `ρ` at which equal radii keep the directions `3R_δ` apart.
    pub fn min_rho(&self, thetas: &[Point]) -> f64 {
        let gamma = point::min_pairwise_distance(thetas);
        if gamma.is_finite() {
            3.0 * self.r_delta / gamma * (1.0 + 1e-9)
        } else {
            1e-3 * self.r_delta
        }
    }

    /// Minimum of `G` over admissible radii at fixed `(ρ, θ)`, starting from
    /// equal radii. `None` if equal radii are inadmissible. The search stops
    /// early once the value drops below `floor`.
    pub fn inner(
        &self,
        adm: &Admissibility,
        rho: f64,
        thetas: &[Point],
        floor: f64,
        opts: &SurrogateOptions,
    ) -> Result<Option<(Configuration, f64)>> {
        let cfg = Configuration { sigma: adm.sigma, rho, thetas: thetas.to_vec(), radii: vec![rho; thetas.len()] };
        if !adm.admits(&cfg) {
            return Ok(None);
        }
        let band = 1.0 + 2.0 * adm.sigma;
        let pts = cfg.points();
        let taus: Vec<f64> = pts.iter().map(|x| self.tau(x)).collect();
        let v0 = self.value_at(&pts);
        // pairs farther apart than `cut` change G by less than rounding
        let cut = ((self.coupling / (1e-17 * v0.abs().max(1e-300))).max(1.0).ln() / self.sqrt_a).max(3.0 * adm.r_delta);
        let contribution = |pts: &[Point], i: usize, skip: usize| -> f64 {
            let mut acc = 0.0;
            for (j, y) in pts.iter().enumerate() {
                if j == i || j == skip {
                    continue;
                }
                let d2 = point::dot(&point::sub(&pts[i], y), &point::sub(&pts[i], y));
                if d2 < cut * cut {
                    acc += self.pair_energy(d2.sqrt());
                }
            }
            acc
        };
        let (radii, _, _, _) = radius_search(
            cfg.radii.clone(),
            (v0, (pts, taus, v0)),
            opts.radius_step * rho,
            opts.min_radius_step * rho,
            1e-12 * v0.abs(),
            floor,
            |r, i, j, (old_pts, old_taus, current): &(Vec<Point>, Vec<f64>, f64)| {
                for &m in &[i, j] {
                    if r[m] < rho / band || r[m] > rho * band {
                        return Ok(None);
                    }
                }
                let mut new_pts = old_pts.clone();
                new_pts[i] = point::scale(&thetas[i], r[i]);
                new_pts[j] = point::scale(&thetas[j], r[j]);
                if adm.box_violation(&[new_pts[i], new_pts[j]]) > 0.0 {
                    return Ok(None);
                }
                for &m in &[i, j] {
                    for (l, y) in new_pts.iter().enumerate() {
                        if l != m && point::dist(&new_pts[m], y) < 3.0 * adm.r_delta {
                            return Ok(None);
                        }
                    }
                }
                let mut taus = old_taus.clone();
                taus[i] = self.tau(&new_pts[i]);
                taus[j] = self.tau(&new_pts[j]);
                let old_pair = contribution(old_pts, i, j) + contribution(old_pts, j, i)
                    + self.pair_energy(point::dist(&old_pts[i], &old_pts[j]));
                let new_pair = contribution(&new_pts, i, j) + contribution(&new_pts, j, i)
                    + self.pair_energy(point::dist(&new_pts[i], &new_pts[j]));
                let v = current + (taus[i] + taus[j] - old_taus[i] - old_taus[j]) - (new_pair - old_pair);
                Ok(Some((v, (new_pts, taus, v))))
            },
        )?;
        let out = Configuration { radii, ..cfg };
        let v = self.value(&out);
        Ok(Some((out, v)))
    }

    /// Stochastic hill climb over `(ρ, θ)` with restarts; every candidate is
    /// scored by [`Surrogate::inner`]. Proposals rotate one direction, push
    /// every direction away from its nearest neighbour, or rescale `ρ`
    /// (never below the separation limit). A proposal is kept if `G` does not
    /// decrease. Restarts after the first start from randomly jittered lattices.
    pub fn maximize(&self, k: usize, adm: &Admissibility, opts: &SurrogateOptions) -> Result<SurrogateResult> {
        if k == 0 {
            return Err(Error::Configuration("k must be positive".into()));
        }
        let dim = self.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut best: Option<(Configuration, f64)> = None;
        let mut restart_values = Vec::new();
        for restart in 0..opts.restarts.max(1) {
            let thetas: Vec<Point> = if restart == 0 && opts.lattice_start {
                spread_directions(k, dim, 0.0)
            } else {
                // a lattice with every direction jittered by up to half the spacing
                let base = spread_directions(k, dim, rng.gen_range(0.0..std::f64::consts::TAU));
                let spacing = point::min_pairwise_distance(&base).min(1.0);
                base.iter()
                    .map(|t| {
                        let mut v = point::ORIGIN;
                        for b in tangent_basis(t, dim) {
                            v = point::add(&v, &point::scale(&b, rng.gen_range(-1.0..1.0)));
                        }
                        match point::unit(&v) {
                            Some(v) => {
                                let a = 0.5 * spacing * rng.gen_range(0.0..1.0);
                                point::unit(&super::rotate_toward(t, &v, a)).unwrap()
                            }
                            None => *t,
                        }
                    })
                    .collect()
            };
            let rho = self.min_rho(&thetas);
            let Some(mut state) = self.inner(adm, rho, &thetas, f64::NEG_INFINITY, opts)? else {
                restart_values.push(f64::NEG_INFINITY);
                continue;
            };
            let mut angle_step = opts.angle_step;
            let mut rho_step = opts.rho_step;
            for _ in 0..opts.proposals {
                let cfg = &state.0;
                let kind = rng.gen_range(0..3);
                let (rho, thetas) = match kind {
                    0 if k > 1 => {
                        let i = rng.gen_range(0..k);
                        let basis = tangent_basis(&cfg.thetas[i], dim);
                        let mut t = point::ORIGIN;
                        for b in &basis {
                            t = point::add(&t, &point::scale(b, rng.gen_range(-1.0..1.0)));
                        }
                        let mut thetas = cfg.thetas.clone();
                        if let Some(t) = point::unit(&t) {
                            let a = angle_step * rng.gen_range(-1.0..1.0);
                            thetas[i] = point::unit(&super::rotate_toward(&thetas[i], &t, a)).unwrap();
                        }
                        (cfg.rho, thetas)
                    }
                    1 if k > 1 => (cfg.rho, repel(&cfg.thetas, dim, angle_step * rng.gen_range(0.0..0.5))),
                    _ => {
                        let rho = cfg.rho * (1.0 + rho_step * rng.gen_range(-1.0..1.0));
                        (rho.max(self.min_rho(&cfg.thetas)), cfg.thetas.clone())
                    }
                };
                let accepted = match self.inner(adm, rho, &thetas, state.1, opts)? {
                    Some((c, v)) if v >= state.1 => {
                        state = (c, v);
                        true
                    }
                    _ => false,
                };
                match (kind, accepted) {
                    (2, true) => rho_step = (rho_step * 1.2).min(0.5),
                    (2, false) => rho_step = (rho_step * 0.97).max(1e-6),
                    (_, true) => angle_step = (angle_step * 1.2).min(1.0),
                    (_, false) => angle_step = (angle_step * 0.97).max(1e-6),
                }
            }
            restart_values.push(state.1);
            if best.as_ref().map_or(true, |b| state.1 > b.1) {
                best = Some(state);
            }
        }
        let (configuration, value) =
            best.ok_or_else(|| Error::Configuration("no admissible surrogate configuration".into()))?;
        Ok(SurrogateResult { gap: value - k as f64 * self.e_inf, configuration, value, restart_values })
    }
}

/// Every direction moved by `angle` away from its nearest neighbour.
fn repel(thetas: &[Point], dim: usize, angle: f64) -> Vec<Point> {
    thetas
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let nearest = thetas
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .min_by(|a, b| point::dist(t, a.1).total_cmp(&point::dist(t, b.1)))
                .map(|(_, q)| *q)
                .unwrap();
            let away = point::sub(t, &nearest);
            let tangent = point::sub(&away, &point::scale(t, point::dot(&away, t)));
            match point::unit(&tangent) {
                Some(dir) if dim > 1 => point::unit(&super::rotate_toward(t, &dir, angle)).unwrap(),
                _ => *t,
            }
        })
        .collect()
}

/// Surrogate maximiser for the model, used as the starting point of
/// [`super::outer_maximize`].
pub fn surrogate_seed(k: usize, sigma: f64, model: &Model, opts: &SurrogateOptions) -> Result<Configuration> {
    let s = Surrogate::for_model(model, opts)?;
    let adm = Admissibility::for_model(model, sigma);
    Ok(s.maximize(k, &adm, opts)?.configuration)
}
