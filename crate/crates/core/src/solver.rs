//! Minimisation of `E` over the fields that satisfy the local Nehari and
//! barycenter constraints around given centers.
//!
//! Descent uses the Sobolev gradient: the weak gradient is mapped through
//! `(−Δ_h + a∞)^{−1}` and projected, in that scalar product, onto the tangent
//! space of the barycenter constraints. After each step the field is
//! projected back with [`project_to_s`]. Because every emerging part is
//! rescaled to the maximum of the energy along its ray, the derivative of the
//! projected energy in any direction equals `E′(u)` there, and no Nehari
//! normal has to be removed from the step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::{project_to_s, ConstraintState, ProjectionOptions, Projected};
use crate::energy::{BumpDecomposition, EnergyReport, Problem};
use crate::error::{Error, Result};
use crate::field::{self, Field};
use crate::groundstate::{derive_delta, GroundState, Threshold};
use crate::linalg;
use crate::point::{self, Point};
use crate::spectral::HelmholtzSolver;

/// Everything a minimisation needs: the discrete problem, the ground state of
/// the limit problem, the threshold `δ` and the preconditioner.
#[derive(Debug, Clone)]
pub struct Model {
    pub problem: Problem,
    pub ground_state: GroundState,
    pub threshold: Threshold,
    helmholtz: HelmholtzSolver,
}

impl Model {
    /// Derives `δ` from the infimum of the potential with the given safety factor.
    pub fn new(problem: Problem, ground_state: GroundState, safety: f64) -> Result<Self> {
        let threshold = derive_delta(&ground_state, problem.potential().a0(), safety)?;
        Self::with_threshold(problem, ground_state, threshold)
    }

    pub fn with_threshold(problem: Problem, ground_state: GroundState, threshold: Threshold) -> Result<Self> {
        if ground_state.dim() != problem.grid().dim() {
            return Err(Error::Configuration(format!(
                "ground state in dimension {} for a {}-dimensional grid",
                ground_state.dim(),
                problem.grid().dim()
            )));
        }
        if (ground_state.a_inf() - problem.potential().a_inf).abs() > 1e-12 * ground_state.a_inf()
            || (ground_state.p() - problem.p()).abs() > 1e-12
        {
            return Err(Error::Configuration("ground state solves a different limit problem".into()));
        }
        let helmholtz = HelmholtzSolver::new(*problem.grid(), problem.potential().a_inf)?;
        Ok(Self { problem, ground_state, threshold, helmholtz })
    }

    pub fn helmholtz(&self) -> &HelmholtzSolver {
        &self.helmholtz
    }

    /// `E∞(w)`.
    pub fn e_inf(&self) -> f64 {
        crate::groundstate::energy_limit(&self.ground_state)
    }

    /// Default multiplier tolerance `10⁻⁴ δ`.
    ///
    /// The multipliers pair the emerging part against `(x − x_i)` test fields,
    /// so they carry the units of `a` per unit length.
    pub fn tol_lambda(&self) -> f64 {
        1e-4 * self.threshold.delta
    }

    /// Checks separation (`|x_i − x_j| ≥ 3R_δ`) and the box margin
    /// (`B(x_i, R_δ)` at least `3/√a∞` inside the box).
    pub fn check_centers(&self, centers: &[Point]) -> Result<()> {
        let r = self.threshold.r_delta;
        if centers.is_empty() {
            return Err(Error::Precondition("no centers".into()));
        }
        for i in 0..centers.len() {
            for j in i + 1..centers.len() {
                let d = point::dist(&centers[i], &centers[j]);
                if d < 3.0 * r {
                    return Err(Error::Precondition(format!(
                        "centers {i} and {j} are {d:.4} apart, below 3R_delta = {:.4}",
                        3.0 * r
                    )));
                }
            }
        }
        let need = r + 3.0 / self.problem.potential().a_inf.sqrt();
        for (i, c) in centers.iter().enumerate() {
            let m = self.problem.grid().margin(c);
            if m < need {
                return Err(Error::Precondition(format!(
                    "center {i} is {m:.4} from the box boundary, need {need:.4}"
                )));
            }
        }
        Ok(())
    }

    /// `max_i w(|x − x_i|)`.
    pub fn glued_ansatz(&self, centers: &[Point]) -> Field {
        let gs = &self.ground_state;
        Field::from_fn(*self.problem.grid(), |x| {
            centers.iter().map(|c| gs.value(point::dist(x, c))).fold(0.0, f64::max)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Absolute stopping threshold for the projected gradient norm. `None`
    /// means `10⁻⁶ ‖ansatz‖`.
    pub tol_grad: Option<f64>,
    /// Relative stopping threshold used when `tol_grad` is `None`.
    pub tol_grad_rel: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    pub initial_step: f64,
    pub max_step: f64,
    pub min_step: f64,
    /// Additional runs from randomly stretched ansätze; the best is kept.
    pub multistart: usize,
    pub perturbation: f64,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 3000,
            tol_grad: None,
            tol_grad_rel: 1e-6,
            armijo: 1e-4,
            initial_step: 1.0,
            max_step: 4.0,
            min_step: 1e-10,
            multistart: 0,
            perturbation: 0.05,
            seed: 0,
        }
    }
}

/// Projection settings used for retraction inside the descent loop.
fn retraction_options() -> ProjectionOptions {
    ProjectionOptions { max_sweeps: 20, tol_nehari_rel: 1e-10, tol_barycenter_cells: 1e-10, root_tol: 1e-13 }
}

#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub centers: Vec<Point>,
    pub field: Field,
    pub value: f64,
    pub multipliers: Vec<Point>,
    pub constraints: ConstraintState,
    /// Sobolev norm of the projected gradient at the last iterate.
    pub projected_gradient: f64,
    /// Sobolev norm of the full gradient at the last iterate.
    pub free_gradient: f64,
    pub exterior_residual: f64,
    pub energy: EnergyReport,
    pub iterations: usize,
    pub converged: bool,
    pub tol_grad: f64,
    pub trace: Vec<f64>,
}

impl MinimizeResult {
    pub fn max_multiplier(&self) -> f64 {
        self.multipliers.iter().map(point::norm).fold(0.0, f64::max)
    }

    pub fn record(&self) -> MinimizeRecord {
        MinimizeRecord {
            centers: self.centers.iter().map(|c| c[..self.field.grid().dim()].to_vec()).collect(),
            value: self.value,
            multipliers: self.multipliers.iter().map(|c| c[..self.field.grid().dim()].to_vec()).collect(),
            max_multiplier: self.max_multiplier(),
            nehari_residuals: self.constraints.nehari.clone(),
            barycenter_offsets: self.constraints.offsets.clone(),
            projected_gradient: self.projected_gradient,
            free_gradient: self.free_gradient,
            exterior_residual: self.exterior_residual,
            energy: self.energy.clone(),
            iterations: self.iterations,
            converged: self.converged,
            tol_grad: self.tol_grad,
        }
    }
}

/// Serializable summary of a [`MinimizeResult`] without the field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizeRecord {
    pub centers: Vec<Vec<f64>>,
    pub value: f64,
    pub multipliers: Vec<Vec<f64>>,
    pub max_multiplier: f64,
    pub nehari_residuals: Vec<f64>,
    pub barycenter_offsets: Vec<f64>,
    pub projected_gradient: f64,
    pub free_gradient: f64,
    pub exterior_residual: f64,
    pub energy: EnergyReport,
    pub iterations: usize,
    pub converged: bool,
    pub tol_grad: f64,
}

/// Where the descent starts.
#[derive(Debug, Clone, Default)]
pub enum Start {
    /// Glued translated ground states.
    #[default]
    Glued,
    /// A given field, for example a checkpoint or a nearby minimiser.
    Field(Field),
}

/// Sobolev gradient of the constrained problem at a projected iterate.
struct Descent {
    projected: Field,
    /// `‖projected‖²` in the Sobolev product, equal to `⟨G, projected⟩`.
    norm_sq: f64,
    full_norm_sq: f64,
}

fn normals(dec: &BumpDecomposition) -> Vec<(usize, Field)> {
    let g = *dec.submerged.grid();
    let hn = g.cell_volume();
    let mut out = Vec::new();
    for (i, (part, support)) in dec.parts.iter().zip(&dec.supports).enumerate() {
        for axis in 0..g.dim() {
            let mut c = Field::zeros(g);
            let vals = c.values_mut();
            for &n in support {
                vals[n] = part.values()[n] * (g.coord(n)[axis] - dec.centers[i][axis]) * hn;
            }
            out.push((i, c));
        }
    }
    out
}

fn descent(model: &Model, u: &Field, dec: &BumpDecomposition) -> Result<Descent> {
    let grad = model.problem.weak_gradient(u)?;
    let full = model.helmholtz.riesz(&grad)?;
    let cs = normals(dec);
    let ns = cs.iter().map(|(_, c)| model.helmholtz.riesz(c)).collect::<Result<Vec<_>>>()?;
    let m = cs.len();
    let raw = |a: &Field, b: &Field| -> f64 { a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum() };
    let mut gram = vec![0.0; m * m];
    let mut rhs = vec![0.0; m];
    for a in 0..m {
        rhs[a] = raw(&cs[a].1, &full);
        for b in 0..m {
            gram[a * m + b] = raw(&cs[a].1, &ns[b]);
        }
    }
    let coef = linalg::solve(gram, rhs, 1e-14)
        .ok_or_else(|| Error::Constraint("singular barycenter Gram matrix".into()))?;
    let mut projected = full.clone();
    for (c, n) in coef.iter().zip(&ns) {
        projected = projected.axpy(-c, n)?;
    }
    let norm_sq = raw(&grad, &projected).max(0.0);
    let full_norm_sq = raw(&grad, &full).max(0.0);
    Ok(Descent { projected, norm_sq, full_norm_sq })
}

/// Multipliers from the moment system
/// `E′(u)[ψ_j] = Σ_m λ_m ∫ (u_i^δ)² (x−x_i)_m (x−x_i)_j` with `ψ_j = u_i^δ (x−x_i)_j`.
pub fn extract_multipliers(problem: &Problem, u: &Field, dec: &BumpDecomposition) -> Result<Vec<Point>> {
    let g = *u.grid();
    let n = g.dim();
    let hn = g.cell_volume();
    let res = problem.residual(u)?;
    let mut out = Vec::with_capacity(dec.len());
    for (i, (part, support)) in dec.parts.iter().zip(&dec.supports).enumerate() {
        let mut moment = vec![0.0; n * n];
        let mut rhs = vec![0.0; n];
        for &idx in support {
            let v = part.values()[idx];
            let y = point::sub(&g.coord(idx), &dec.centers[i]);
            for a in 0..n {
                rhs[a] += res.values()[idx] * v * y[a] * hn;
                for b in 0..n {
                    moment[a * n + b] += v * v * y[a] * y[b] * hn;
                }
            }
        }
        let lambda = linalg::solve(moment, rhs, 1e-12)
            .ok_or_else(|| Error::Extraction(format!("singular moment matrix for bump {i}")))?;
        out.push(point::from_slice(&lambda));
    }
    Ok(out)
}

/// Marks the emerging supports and their axis neighbours.
fn near_supports(dec: &BumpDecomposition) -> Vec<bool> {
    let g = *dec.submerged.grid();
    let mut mask = vec![false; g.len()];
    for support in &dec.supports {
        for &i in support {
            mask[i] = true;
            let m = g.multi_index(i);
            for axis in 0..g.dim() {
                let s = g.stride(axis);
                if m[axis] > 0 {
                    mask[i - s] = true;
                }
                if m[axis] + 1 < g.points() {
                    mask[i + s] = true;
                }
            }
        }
    }
    mask
}

/// `max |−Δu + a u − u^p|` over nodes farther than one cell from every emerging support.
pub fn pde_residual_exterior(problem: &Problem, u: &Field, dec: &BumpDecomposition) -> Result<f64> {
    let res = problem.residual(u)?;
    let mask = near_supports(dec);
    Ok(res.values().iter().zip(&mask).filter(|(_, &m)| !m).map(|(r, _)| r.abs()).fold(0.0, f64::max))
}

/// Fit of `u(x) ≤ c e^{−b d(x)}`, with `d` the distance to `∪B(x_i, radius)`,
/// from the shell maxima of `u` over `d ∈ [d_lo, d_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExteriorDecay {
    pub amplitude: f64,
    pub rate: f64,
}

pub fn exterior_decay(u: &Field, centers: &[Point], radius: f64, d_lo: f64, d_hi: f64) -> Result<ExteriorDecay> {
    let g = *u.grid();
    let h = g.spacing();
    let bins = ((d_hi - d_lo) / h).floor() as usize;
    if bins < 4 {
        return Err(Error::Domain("exterior window too narrow".into()));
    }
    let mut shell = vec![0.0f64; bins];
    for (i, &v) in u.values().iter().enumerate() {
        let x = g.coord(i);
        let d = centers.iter().map(|c| point::dist(&x, c)).fold(f64::INFINITY, f64::min) - radius;
        if d >= d_lo && d < d_hi {
            let b = (((d - d_lo) / h) as usize).min(bins - 1);
            shell[b] = shell[b].max(v);
        }
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (b, &v) in shell.iter().enumerate() {
        if v > 0.0 {
            xs.push(d_lo + (b as f64 + 0.5) * h);
            ys.push(v.ln());
        }
    }
    if xs.len() < 4 {
        return Err(Error::Domain("too few exterior samples".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    // Lift the intercept so the fit bounds every sample.
    let lift = xs.iter().zip(&ys).map(|(x, y)| y - (my + slope * (x - mx))).fold(0.0, f64::max);
    Ok(ExteriorDecay { amplitude: (my - slope * mx + lift).exp(), rate: -slope })
}

fn finish(
    model: &Model,
    centers: &[Point],
    proj: Projected,
    iterations: usize,
    converged: bool,
    tol_grad: f64,
    trace: Vec<f64>,
) -> Result<MinimizeResult> {
    let d = descent(model, &proj.field, &proj.decomposition)?;
    let multipliers = extract_multipliers(&model.problem, &proj.field, &proj.decomposition)?;
    let exterior_residual = pde_residual_exterior(&model.problem, &proj.field, &proj.decomposition)?;
    let energy = model.problem.report(&proj.field, &proj.decomposition)?;
    Ok(MinimizeResult {
        centers: centers.to_vec(),
        value: energy.energy,
        multipliers,
        constraints: proj.state,
        projected_gradient: d.norm_sq.sqrt(),
        free_gradient: d.full_norm_sq.sqrt(),
        exterior_residual,
        energy,
        iterations,
        converged,
        tol_grad,
        trace,
        field: proj.field,
    })
}

/// Projected descent from one starting field.
pub fn descend(model: &Model, centers: &[Point], start: &Field, opts: &SolverOptions) -> Result<MinimizeResult> {
    model.check_centers(centers)?;
    let ropts = retraction_options();
    let t = &model.threshold;
    let problem = &model.problem;
    let tol_grad = match opts.tol_grad {
        Some(v) => v,
        None => opts.tol_grad_rel * field::h1_norm_sq(start, problem.potential().a_inf)?.sqrt(),
    };
    let mut proj = project_to_s(problem, start, centers, t, &ropts)?;
    let mut value = problem.energy(&proj.field)?;
    let mut trace = vec![value];
    let mut step = opts.initial_step;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        let d = descent(model, &proj.field, &proj.decomposition)?;
        if d.norm_sq.sqrt() < tol_grad {
            converged = true;
            break;
        }
        let mut accepted = None;
        let mut alpha = step;
        while alpha >= opts.min_step {
            let trial = proj.field.axpy(-alpha, &d.projected)?;
            if let Ok(p) = project_to_s(problem, &trial, centers, t, &ropts) {
                let e = problem.energy(&p.field)?;
                let allowance = 1e-14 * value.abs();
                if e <= value - opts.armijo * alpha * d.norm_sq + allowance {
                    accepted = Some((p, e, alpha));
                    break;
                }
            }
            alpha *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((p, e, a)) => {
                proj = p;
                value = e;
                trace.push(e);
                step = if a == step { (2.0 * a).min(opts.max_step) } else { a };
            }
            None => break,
        }
    }
    if !converged {
        // Stalled line search or iteration cap: report the state reached.
        let d = descent(model, &proj.field, &proj.decomposition)?;
        converged = d.norm_sq.sqrt() < tol_grad;
    }
    finish(model, centers, proj, iterations, converged, tol_grad, trace)
}

/// `f_k(x₁..x_k)`: projected descent from the glued ansatz (or a given start),
/// with optional extra starts from randomly stretched ansätze.
pub fn minimize_fk(model: &Model, centers: &[Point], start: &Start, opts: &SolverOptions) -> Result<MinimizeResult> {
    model.check_centers(centers)?;
    let first = match start {
        Start::Glued => model.glued_ansatz(centers),
        Start::Field(f) => {
            if f.grid() != model.problem.grid() {
                return Err(Error::GridMismatch);
            }
            f.clone()
        }
    };
    let tol = match opts.tol_grad {
        Some(v) => v,
        None => opts.tol_grad_rel * field::h1_norm_sq(&model.glued_ansatz(centers), model.problem.potential().a_inf)?.sqrt(),
    };
    let run_opts = SolverOptions { tol_grad: Some(tol), ..*opts };
    let mut best = descend(model, centers, &first, &run_opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.multistart {
        let stretch: Vec<f64> =
            centers.iter().map(|_| 1.0 + opts.perturbation * rng.gen_range(-1.0..1.0)).collect();
        let gs = &model.ground_state;
        let ansatz = Field::from_fn(*model.problem.grid(), |x| {
            centers
                .iter()
                .zip(&stretch)
                .map(|(c, s)| gs.value(point::dist(x, c) * s))
                .fold(0.0, f64::max)
        });
        if let Ok(r) = descend(model, centers, &ansatz, &run_opts) {
            if r.value < best.value {
                best = r;
            }
        }
    }
    Ok(best)
}

/// Starting field for new centers from a minimiser at old centers: every
/// bump of `previous` is cut out of its ball and translated by whole cells.
pub fn translate_bumps(model: &Model, previous: &MinimizeResult, centers: &[Point]) -> Result<Field> {
    if previous.centers.len() != centers.len() {
        return Err(Error::Configuration("warm start with a different number of bumps".into()));
    }
    let g = *model.problem.grid();
    let h = g.spacing();
    // A single bump keeps the whole field.
    let window = 0.5 * point::min_pairwise_distance(&previous.centers);
    let mut out = Field::zeros(g);
    for (old, new) in previous.centers.iter().zip(centers) {
        let piece = field::restrict_to_ball(&previous.field, old, window);
        let shift = point::sub(new, old);
        let cells = [
            (shift[0] / h).round() as isize,
            (shift[1] / h).round() as isize,
            (shift[2] / h).round() as isize,
        ];
        let moved = field::shift_nodes(&piece, cells);
        out = out.zip_map(&moved, f64::max)?;
    }
    // Fill the far field with the glued ansatz so no region is left empty.
    out.zip_map(&model.glued_ansatz(centers), |a, b| if a > 0.0 { a } else { b })
}
