//! The max-min search over bump configurations.
//!
//! For directions `θ₁..θ_k` and a quadratic-mean radius `ρ`, the inner level
//! minimises `f_k` over the radii `r_i` with `[(1/k)Σr_i²]^{1/2} = ρ`,
//! `(1+2σ)^{−1}ρ ≤ r_i ≤ (1+2σ)ρ` and pairwise distances at least `3R_δ`.
//! The outer level maximises the resulting `g(ρ, θ)`.

mod search;
pub mod surrogate;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point::{self, Point};
use crate::solver::Model;

pub use search::{
    attraction_probe, inner_g, outer_maximize, probe_is_increasing, InnerOutcome, MinimaxOptions,
    MinimaxRecord, MinimaxResult, ProbeOptions, ProbeRow, TraceEntry,
};
pub use surrogate::{surrogate_seed, Surrogate, SurrogateOptions};

/// Directions, quadratic-mean radius and radii of a `k`-bump configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub sigma: f64,
    pub rho: f64,
    pub thetas: Vec<Point>,
    pub radii: Vec<f64>,
}

impl Configuration {
    /// Configuration with every radius equal to `rho`.
    pub fn uniform(sigma: f64, rho: f64, thetas: Vec<Point>) -> Result<Self> {
        let thetas = thetas
            .iter()
            .map(|t| point::unit(t).ok_or_else(|| Error::Configuration("zero direction".into())))
            .collect::<Result<Vec<_>>>()?;
        let radii = vec![rho; thetas.len()];
        Ok(Self { sigma, rho, thetas, radii })
    }

    pub fn k(&self) -> usize {
        self.thetas.len()
    }

    pub fn points(&self) -> Vec<Point> {
        self.thetas.iter().zip(&self.radii).map(|(t, &r)| point::scale(t, r)).collect()
    }

    /// Rescales the radii onto the quadratic-mean sphere of radius `rho`.
    pub fn project_radii(radii: &[f64], rho: f64) -> Vec<f64> {
        let q = (radii.iter().map(|r| r * r).sum::<f64>() / radii.len() as f64).sqrt();
        radii.iter().map(|r| r * rho / q).collect()
    }

    pub fn quadratic_mean(&self) -> f64 {
        (self.radii.iter().map(|r| r * r).sum::<f64>() / self.k() as f64).sqrt()
    }
}

/// The constraints defining admissible configurations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    pub sigma: f64,
    pub r_delta: f64,
    /// Largest admissible `max_j |x_j|` coordinate, from the box margin.
    pub max_coordinate: Option<f64>,
}

impl Admissibility {
    /// Constraints for PDE runs: the box bound keeps `B(x_i, R_δ)` at least
    /// `3/√a∞` inside the box, matching [`Model::check_centers`].
    pub fn for_model(model: &Model, sigma: f64) -> Self {
        let r = model.threshold.r_delta;
        let need = r + 3.0 / model.problem.potential().a_inf.sqrt();
        Self { sigma, r_delta: r, max_coordinate: Some(model.problem.grid().half_width() - need) }
    }

    /// Sum of squared positive constraint violations, in units of `R_δ`.
    pub fn penalty(&self, cfg: &Configuration) -> f64 {
        let band = 1.0 + 2.0 * self.sigma;
        let s = self.r_delta;
        let sq = |v: f64| if v > 0.0 { v * v } else { 0.0 };
        let mut acc = 0.0;
        for &r in &cfg.radii {
            acc += sq((cfg.rho / band - r) / s) + sq((r - cfg.rho * band) / s);
        }
        let pts = cfg.points();
        acc += self.box_violation(&pts).max(0.0).powi(2);
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                acc += sq((3.0 * s - point::dist(&pts[i], &pts[j])) / s);
            }
        }
        acc
    }

    /// Largest excess of a center coordinate over the box bound, in units of `R_δ`.
    pub fn box_violation(&self, pts: &[Point]) -> f64 {
        match self.max_coordinate {
            None => f64::NEG_INFINITY,
            Some(limit) => pts
                .iter()
                .map(|p| (p.iter().fold(0.0f64, |m, c| m.max(c.abs())) - limit) / self.r_delta)
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Largest constraint violation, in units of `R_δ`; `≤ 0` means admissible.
    pub fn violation(&self, cfg: &Configuration) -> f64 {
        let band = 1.0 + 2.0 * self.sigma;
        let mut worst = f64::NEG_INFINITY;
        let rho = cfg.rho;
        if !(rho > 0.0) {
            return f64::INFINITY;
        }
        let scale = self.r_delta;
        for &r in &cfg.radii {
            worst = worst.max((rho / band - r) / scale);
            worst = worst.max((r - rho * band) / scale);
        }
        let pts = cfg.points();
        worst = worst.max(self.box_violation(&pts));
        worst = worst.max((3.0 * self.r_delta - point::min_pairwise_distance(&pts)) / scale);
        let q = cfg.quadratic_mean();
        worst = worst.max(((q - rho).abs() - 1e-12 * rho) / scale);
        worst
    }

    pub fn admits(&self, cfg: &Configuration) -> bool {
        self.violation(cfg) <= 0.0
    }

    /// Checks the three invariants and names the first one violated.
    pub fn validate(&self, cfg: &Configuration) -> Result<()> {
        let q = cfg.quadratic_mean();
        if (q - cfg.rho).abs() > 1e-12 * cfg.rho {
            return Err(Error::Configuration(format!("quadratic mean {q} differs from rho {}", cfg.rho)));
        }
        let band = 1.0 + 2.0 * self.sigma;
        for (i, &r) in cfg.radii.iter().enumerate() {
            if r < cfg.rho / band || r > cfg.rho * band {
                return Err(Error::Configuration(format!("radius {i} = {r} outside the band")));
            }
        }
        let d = point::min_pairwise_distance(&cfg.points());
        if d < 3.0 * self.r_delta {
            return Err(Error::Configuration(format!("separation {d} below 3R_delta")));
        }
        if self.violation(cfg) > 0.0 {
            return Err(Error::Configuration("center outside the admissible box".into()));
        }
        Ok(())
    }
}

/// Orthonormal basis of the tangent space of the unit sphere at `theta`.
pub fn tangent_basis(theta: &Point, dim: usize) -> Vec<Point> {
    match dim {
        1 => Vec::new(),
        2 => vec![[-theta[1], theta[0], 0.0]],
        _ => {
            let axis = (0..3)
                .min_by(|&a, &b| theta[a].abs().total_cmp(&theta[b].abs()))
                .unwrap();
            let mut e = point::ORIGIN;
            e[axis] = 1.0;
            let t1 = point::unit(&point::sub(&e, &point::scale(theta, point::dot(&e, theta)))).unwrap();
            let t2 = [
                theta[1] * t1[2] - theta[2] * t1[1],
                theta[2] * t1[0] - theta[0] * t1[2],
                theta[0] * t1[1] - theta[1] * t1[0],
            ];
            vec![t1, t2]
        }
    }
}

/// Moves a unit vector along a tangent direction by (approximately) `angle`.
pub fn rotate_toward(theta: &Point, tangent: &Point, angle: f64) -> Point {
    point::add(&point::scale(theta, angle.cos()), &point::scale(tangent, angle.sin()))
}

/// `k` equally spaced directions in the plane (a Fibonacci lattice in 3-D),
/// rotated by `phase`.
pub fn spread_directions(k: usize, dim: usize, phase: f64) -> Vec<Point> {
    if dim == 2 {
        (0..k)
            .map(|i| point::polar(phase + 2.0 * std::f64::consts::PI * i as f64 / k as f64))
            .collect()
    } else {
        crate::potential::fibonacci_sphere(k)
    }
}

/// Index pairs moved together by [`radius_search`].
fn partner_pairs(k: usize) -> Vec<(usize, usize)> {
    match k {
        0 | 1 => Vec::new(),
        2 => vec![(0, 1)],
        _ => (0..k).map(|i| (i, (i + 1) % k)).collect(),
    }
}

/// Pattern search over radii on the sphere `Σr_i² = const`.
///
/// A move changes `r_i` by `±s` and its partner `r_j` so that `r_i² + r_j²`
/// is unchanged. `trial(radii, i, j, best)` returns `None` for an
/// inadmissible candidate; `best` is the payload of the current point. A move is accepted when it lowers the value by more than
/// `noise`; the step halves after a sweep without progress until it drops
/// below `s_min`, or as soon as the value falls below `stop_below` (the
/// caller then only needs an upper bound of the minimum). Returns the final
/// radii, value, payload and trial count.
pub(crate) fn radius_search<T, F>(
    radii: Vec<f64>,
    start: (f64, T),
    s0: f64,
    s_min: f64,
    noise: f64,
    stop_below: f64,
    mut trial: F,
) -> Result<(Vec<f64>, f64, T, usize)>
where
    F: FnMut(&[f64], usize, usize, &T) -> Result<Option<(f64, T)>>,
{
    let pairs = partner_pairs(radii.len());
    let (mut value, mut payload) = start;
    let mut radii = radii;
    let mut trials = 0;
    let mut s = s0;
    while s >= s_min && !pairs.is_empty() && value >= stop_below {
        let mut improved = false;
        for &(i, j) in &pairs {
            for sign in [1.0, -1.0] {
                let ri = radii[i] + sign * s;
                let rest = radii[i] * radii[i] + radii[j] * radii[j] - ri * ri;
                if ri <= 0.0 || rest <= 0.0 {
                    continue;
                }
                let mut cand = radii.clone();
                cand[i] = ri;
                cand[j] = rest.sqrt();
                trials += 1;
                if let Some((v, t)) = trial(&cand, i, j, &payload)? {
                    if v < value - noise {
                        value = v;
                        payload = t;
                        radii = cand;
                        improved = true;
                        break;
                    }
                }
            }
            if value < stop_below {
                break;
            }
        }
        if !improved {
            s *= 0.5;
        }
    }
    Ok((radii, value, payload, trials))
}

/// Radii on the quadratic-mean sphere admissible for `(rho, thetas)`,
/// starting from equal radii and reducing [`Admissibility::penalty`] if needed.
pub fn admissible_radii(adm: &Admissibility, rho: f64, thetas: &[Point]) -> Result<Vec<f64>> {
    let mut cfg = Configuration { sigma: adm.sigma, rho, thetas: thetas.to_vec(), radii: vec![rho; thetas.len()] };
    if adm.admits(&cfg) {
        return Ok(cfg.radii);
    }
    let p0 = adm.penalty(&cfg);
    let (radii, p, _, _) = radius_search(cfg.radii.clone(), (p0, ()), 0.1 * rho, 1e-6 * rho, 0.0, f64::MIN_POSITIVE, |r, _, _, _| {
        let c = Configuration { radii: r.to_vec(), ..cfg.clone() };
        Ok(Some((adm.penalty(&c), ())))
    })?;
    cfg.radii = radii;
    if p > 0.0 || !adm.admits(&cfg) {
        return Err(Error::Configuration(format!(
            "no admissible radii for rho = {rho:.4}: violation {:.3e} R_delta",
            adm.violation(&cfg).max(0.0)
        )));
    }
    Ok(cfg.radii)
}
