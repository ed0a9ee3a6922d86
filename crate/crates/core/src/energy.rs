//! The energy `E(u) = ½∫(|Du|² + a u²) − ∫|u|^{p+1}/(p+1)`, the emerging-part
//! functional `F`, and the submerged/emerging decomposition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{self, Field, Grid};
use crate::groundstate::check_exponent;
use crate::point::{self, Point};
use crate::potential::Potential;

/// A grid, an exponent and a potential, with the potential sampled once.
#[derive(Debug, Clone)]
pub struct Problem {
    grid: Grid,
    p: f64,
    potential: Potential,
    a: Field,
}

impl Problem {
    pub fn new(grid: Grid, p: f64, potential: Potential) -> Result<Self> {
        check_exponent(p, grid.dim())?;
        let potential = potential.validated()?;
        Ok(Self { grid, p, potential, a: potential.sample(grid) })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    /// Node values of `a`.
    pub fn a_field(&self) -> &Field {
        &self.a
    }

    /// The same grid and exponent with `a ≡ a∞`.
    pub fn limit(&self) -> Result<Problem> {
        Problem::new(self.grid, self.p, Potential::constant(self.potential.a_inf)?)
    }

    /// `E(u)`.
    pub fn energy(&self, u: &Field) -> Result<f64> {
        u.check_same_grid(&self.a)?;
        let q = self.p + 1.0;
        let local: f64 = u
            .values()
            .iter()
            .zip(self.a.values())
            .map(|(&v, &a)| 0.5 * a * v * v - v.abs().powf(q) / q)
            .sum();
        Ok(0.5 * field::dirichlet_integral(u) + local * self.grid.cell_volume())
    }

    /// `F(v)` for an emerging part `v ≥ 0`.
    pub fn energy_f(&self, v: &Field, delta: f64) -> Result<f64> {
        v.check_same_grid(&self.a)?;
        if v.values().iter().any(|&x| x < 0.0) {
            return Err(Error::Domain("emerging part takes negative values".into()));
        }
        let q = self.p + 1.0;
        let dq = delta.powf(q) / q;
        let local: f64 = v
            .values()
            .iter()
            .zip(self.a.values())
            .filter(|(&x, _)| x > 0.0)
            .map(|(&x, &a)| 0.5 * a * x * x + a * delta * x - (delta + x).powf(q) / q + dq)
            .sum();
        Ok(0.5 * field::dirichlet_integral(v) + local * self.grid.cell_volume())
    }

    /// Strong residual `−Δu + a u − |u|^{p−1}u` at every node.
    pub fn residual(&self, u: &Field) -> Result<Field> {
        u.check_same_grid(&self.a)?;
        let lap = field::laplacian(u);
        let values = u
            .values()
            .iter()
            .zip(lap.values())
            .zip(self.a.values())
            .map(|((&v, &l), &a)| -l + a * v - v.abs().powf(self.p - 1.0) * v)
            .collect();
        Field::from_values(self.grid, values)
    }

    /// Node pairings `E′(u)[e_j]`: the residual weighted by `h^N`, so that
    /// `Σ_j G_j v_j = E′(u)[v]` exactly for the discrete energy.
    pub fn weak_gradient(&self, u: &Field) -> Result<Field> {
        Ok(self.residual(u)?.scaled(self.grid.cell_volume()))
    }

    /// `E′(u)[v]`.
    pub fn derivative(&self, u: &Field, v: &Field) -> Result<f64> {
        self.residual(u)?.dot(v)
    }

    /// Full energy bookkeeping for a decomposed field.
    pub fn report(&self, u: &Field, dec: &BumpDecomposition) -> Result<EnergyReport> {
        let bumps = dec
            .parts
            .iter()
            .map(|v| self.energy_f(v, dec.delta))
            .collect::<Result<Vec<_>>>()?;
        let res = self.residual(u)?;
        Ok(EnergyReport {
            energy: self.energy(u)?,
            submerged: self.energy(&dec.submerged)?,
            bumps,
            interface: interface_term(dec)?,
            residual_l2: res.dot(&res)?.sqrt(),
        })
    }
}

/// `E(u)` for `u` on the problem grid.
pub fn energy_e(u: &Field, problem: &Problem) -> Result<f64> {
    problem.energy(u)
}

/// `F(v)` for an emerging part.
pub fn energy_f(v: &Field, problem: &Problem, delta: f64) -> Result<f64> {
    problem.energy_f(v, delta)
}

pub fn weak_gradient(u: &Field, problem: &Problem) -> Result<Field> {
    problem.weak_gradient(u)
}

/// `u = u_δ + Σ u_i^δ` with `u_δ = min(u, δ)` and the excess split by ball.
#[derive(Debug, Clone)]
pub struct BumpDecomposition {
    pub submerged: Field,
    pub parts: Vec<Field>,
    /// Node indices where each emerging part is positive.
    pub supports: Vec<Vec<usize>>,
    pub centers: Vec<Point>,
    pub delta: f64,
    pub r_delta: f64,
}

impl BumpDecomposition {
    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// `u_δ + Σ t_i u_i^δ`.
    pub fn recompose(&self, scales: &[f64]) -> Field {
        let mut u = self.submerged.clone();
        let vals = u.values_mut();
        for ((part, support), &t) in self.parts.iter().zip(&self.supports).zip(scales) {
            for &i in support {
                vals[i] += t * part.values()[i];
            }
        }
        u
    }

    /// Measure `|supp u_i^δ|` as node count times `h^N`.
    pub fn support_measure(&self, i: usize) -> f64 {
        self.supports[i].len() as f64 * self.submerged.grid().cell_volume()
    }
}

/// Splits `u` at the level `delta` around the given centers.
///
/// Every node with `u > δ` must lie in some `B(x_i, R_δ)`, and every bump must
/// emerge. The balls are required to be disjoint.
pub fn decompose(u: &Field, centers: &[Point], delta: f64, r_delta: f64) -> Result<BumpDecomposition> {
    if !(delta > 0.0 && r_delta > 0.0) {
        return Err(Error::Domain("delta and R_delta must be positive".into()));
    }
    if centers.is_empty() {
        return Err(Error::Decomposition("no centers".into()));
    }
    let sep = point::min_pairwise_distance(centers);
    if sep < 2.0 * r_delta {
        return Err(Error::Decomposition(format!(
            "centers {sep:.4} apart, balls of radius {r_delta:.4} overlap"
        )));
    }
    let grid = *u.grid();
    let submerged = u.map(|v| v.min(delta));
    let mut parts: Vec<Vec<f64>> = vec![vec![0.0; grid.len()]; centers.len()];
    let mut supports = vec![Vec::new(); centers.len()];
    for (idx, &v) in u.values().iter().enumerate() {
        let excess = v - delta;
        if excess <= 0.0 {
            continue;
        }
        let x = grid.coord(idx);
        let owner = centers.iter().position(|c| point::dist(&x, c) <= r_delta);
        match owner {
            Some(i) => {
                parts[i][idx] = excess;
                supports[i].push(idx);
            }
            None => {
                return Err(Error::Decomposition(format!(
                    "u = {v:.4} > delta at {:?}, outside every ball",
                    &x[..grid.dim()]
                )))
            }
        }
    }
    if let Some(i) = supports.iter().position(|s| s.is_empty()) {
        return Err(Error::Decomposition(format!("bump {i} does not emerge above delta")));
    }
    let parts = parts
        .into_iter()
        .map(|p| Field::from_values(grid, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(BumpDecomposition { submerged, parts, supports, centers: centers.to_vec(), delta, r_delta })
}

/// Gradient cross term `Σ_i ∫ Du_δ·Du_i^δ` of the discrete Dirichlet form.
///
/// It vanishes in the continuum, where `Du_δ = 0` on `{u > δ}`, but every grid
/// edge that crosses the level set `{u = δ}` contributes, so discretely
/// `E(u) = E(u_δ) + Σ F(u_i^δ) + interface`.
pub fn interface_term(dec: &BumpDecomposition) -> Result<f64> {
    let mut total = 0.0;
    for part in &dec.parts {
        let sum = dec.submerged.axpy(1.0, part)?;
        let d = field::dirichlet_integral(&sum)
            - field::dirichlet_integral(&dec.submerged)
            - field::dirichlet_integral(part);
        total += 0.5 * d;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub energy: f64,
    pub submerged: f64,
    pub bumps: Vec<f64>,
    pub interface: f64,
    pub residual_l2: f64,
}

impl EnergyReport {
    /// `|E(u) − E(u_δ) − Σ F(u_i^δ)| / |E(u)|`.
    pub fn splitting_defect(&self) -> f64 {
        let rhs = self.submerged + self.bumps.iter().sum::<f64>();
        (self.energy - rhs).abs() / self.energy.abs()
    }
}
