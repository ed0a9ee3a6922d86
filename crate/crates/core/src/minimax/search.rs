use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::surrogate::{surrogate_seed, SurrogateOptions};
use super::{admissible_radii, radius_search, rotate_toward, tangent_basis, Admissibility, Configuration};
use crate::energy::Problem;
use crate::error::{Error, Result};
use crate::field::Grid;
use crate::groundstate::{GroundState, Threshold};
use crate::point::{self, Point};
use crate::potential::Potential;
use crate::solver::{minimize_fk, translate_bumps, MinimizeRecord, MinimizeResult, Model, SolverOptions, Start};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MinimaxOptions {
    pub sigma: f64,
    pub solver: SolverOptions,
    /// Initial radius step of the inner search, relative to `ρ`.
    pub radius_step: f64,
    /// Smallest inner radius step; `None` means one grid spacing.
    pub min_radius_step: Option<f64>,
    /// Initial `ρ` step of the outer search, relative to `ρ`.
    pub rho_step: f64,
    /// Smallest `ρ` step; `None` means one grid spacing.
    pub min_rho_step: Option<f64>,
    /// Initial and smallest direction steps, in radians.
    pub angle_step: f64,
    pub min_angle_step: f64,
    pub max_iterations: usize,
    /// Improvements below `noise_rel · kE∞(w)` are treated as noise.
    pub noise_rel: f64,
    /// Keep `θ₁` fixed when the potential is radial (rotations are symmetries).
    pub fix_gauge: bool,
    pub surrogate: SurrogateOptions,
}

impl Default for MinimaxOptions {
    fn default() -> Self {
        Self {
            sigma: 0.25,
            solver: SolverOptions::default(),
            radius_step: 0.05,
            min_radius_step: None,
            rho_step: 0.1,
            min_rho_step: None,
            angle_step: 0.2,
            min_angle_step: 0.01,
            max_iterations: 60,
            noise_rel: 1e-9,
            fix_gauge: true,
            surrogate: SurrogateOptions::default(),
        }
    }
}

/// Result of the inner minimisation at fixed `(ρ, θ)`.
#[derive(Debug, Clone)]
pub struct InnerOutcome {
    pub configuration: Configuration,
    /// `g^{k,σ}(ρ, θ)`.
    pub value: f64,
    pub result: MinimizeResult,
    /// Number of `f_k` evaluations.
    pub evaluations: usize,
}

fn noise(model: &Model, k: usize, opts: &MinimaxOptions) -> f64 {
    opts.noise_rel * k as f64 * model.e_inf()
}

fn evaluate(model: &Model, centers: &[Point], warm: Option<&MinimizeResult>, opts: &SolverOptions) -> Result<MinimizeResult> {
    let start = match warm {
        Some(prev) if prev.centers.len() == centers.len() => Start::Field(translate_bumps(model, prev, centers)?),
        _ => Start::Glued,
    };
    minimize_fk(model, centers, &start, opts)
}

/// `g^{k,σ}(ρ, θ)`: minimises `f_k` over the admissible radii by
/// [`radius_search`], warm-starting every solve from the best minimiser so far.
pub fn inner_g(
    model: &Model,
    rho: f64,
    thetas: &[Point],
    opts: &MinimaxOptions,
    warm: Option<&MinimizeResult>,
) -> Result<InnerOutcome> {
    inner_bounded(model, rho, thetas, opts, warm, f64::NEG_INFINITY)
}

/// [`inner_g`] stopped once the value falls below `floor`; the returned
/// value is then only an upper bound of `g`.
fn inner_bounded(
    model: &Model,
    rho: f64,
    thetas: &[Point],
    opts: &MinimaxOptions,
    warm: Option<&MinimizeResult>,
    floor: f64,
) -> Result<InnerOutcome> {
    let adm = Admissibility::for_model(model, opts.sigma);
    let base = Configuration::uniform(opts.sigma, rho, thetas.to_vec())?;
    let radii = admissible_radii(&adm, rho, &base.thetas)?;
    let cfg = Configuration { radii, ..base };
    let first = evaluate(model, &cfg.points(), warm, &opts.solver)?;
    let h = model.problem.grid().spacing();
    let s_min = opts.min_radius_step.unwrap_or(h);
    let proto = cfg.clone();
    let (radii, value, result, trials) = radius_search(
        cfg.radii.clone(),
        (first.value, first),
        opts.radius_step * rho,
        s_min,
        noise(model, thetas.len(), opts),
        floor,
        |r, _, _, best: &MinimizeResult| {
            let c = Configuration { radii: r.to_vec(), ..proto.clone() };
            if !adm.admits(&c) {
                return Ok(None);
            }
            match evaluate(model, &c.points(), Some(best), &opts.solver) {
                Ok(res) => Ok(Some((res.value, res))),
                Err(Error::Precondition(_)) => Ok(None),
                Err(e) => Err(e),
            }
        },
    )?;
    Ok(InnerOutcome { configuration: Configuration { radii, ..proto }, value, result, evaluations: trials + 1 })
}

/// One line of the outer search trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub rho: f64,
    pub thetas: Vec<Vec<f64>>,
    pub g: f64,
    pub lambda_max: f64,
}

#[derive(Debug, Clone)]
pub struct MinimaxResult {
    pub configuration: Configuration,
    /// `g^{k,σ}` at the maximiser.
    pub g: f64,
    pub e_inf: f64,
    pub result: MinimizeResult,
    pub trace: Vec<TraceEntry>,
    /// The surrogate configuration the search started from.
    pub seed: Configuration,
    pub evaluations: usize,
    /// The maximiser sits against the box bound on `ρ`: the box is too small.
    pub hit_box_bound: bool,
    pub warnings: Vec<String>,
}

impl MinimaxResult {
    pub fn k(&self) -> usize {
        self.configuration.k()
    }

    /// `g − kE∞(w)`.
    pub fn gap(&self) -> f64 {
        self.g - self.k() as f64 * self.e_inf
    }

    pub fn record(&self) -> MinimaxRecord {
        let dim = self.result.field.grid().dim();
        MinimaxRecord {
            k: self.k(),
            sigma: self.configuration.sigma,
            rho: self.configuration.rho,
            thetas: self.configuration.thetas.iter().map(|t| t[..dim].to_vec()).collect(),
            radii: self.configuration.radii.clone(),
            g: self.g,
            e_inf: self.e_inf,
            gap: self.gap(),
            max_multiplier: self.result.max_multiplier(),
            evaluations: self.evaluations,
            hit_box_bound: self.hit_box_bound,
            warnings: self.warnings.clone(),
            minimizer: self.result.record(),
        }
    }
}

/// Serializable summary of a [`MinimaxResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimaxRecord {
    pub k: usize,
    pub sigma: f64,
    pub rho: f64,
    pub thetas: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
    pub g: f64,
    pub e_inf: f64,
    pub gap: f64,
    pub max_multiplier: f64,
    pub evaluations: usize,
    pub hit_box_bound: bool,
    pub warnings: Vec<String>,
    pub minimizer: MinimizeRecord,
}

fn cache_key(rho: f64, thetas: &[Point]) -> Vec<i64> {
    let mut key = vec![(rho * 1e9).round() as i64];
    for t in thetas {
        key.extend(t.iter().map(|c| (c * 1e12).round() as i64));
    }
    key
}

struct Poll {
    rho: f64,
    thetas: Vec<Point>,
}

/// Maximises `g^{k,σ}` over `(ρ, θ)` by compass search from the surrogate
/// seed. Each iteration polls `ρ ± Δρ` and `θ_i` rotated by `±Δθ` along
/// every tangent direction, evaluating the polls in parallel. The best
/// improving poll is taken; without one both steps halve.
pub fn outer_maximize(model: &Model, k: usize, opts: &MinimaxOptions) -> Result<MinimaxResult> {
    if k < 2 {
        return Err(Error::Precondition(format!("outer search needs k >= 2, got {k}")));
    }
    let dim = model.problem.grid().dim();
    let adm = Admissibility::for_model(model, opts.sigma);
    let limit = adm.max_coordinate.unwrap_or(f64::INFINITY);
    if !(limit > 0.0) {
        return Err(Error::Configuration("box too small for any admissible center".into()));
    }
    let rho_max = limit * (dim as f64).sqrt();
    let seed = surrogate_seed(k, opts.sigma, model, &opts.surrogate)?;
    let h = model.problem.grid().spacing();
    let min_rho_step = opts.min_rho_step.unwrap_or(h);
    let tol = noise(model, k, opts);
    let mut warnings = Vec::new();

    let mut current = inner_g(model, seed.rho, &seed.thetas, opts, None)
        .map_err(|e| Error::Configuration(format!("no admissible seed: {e}")))?;
    let mut evaluations = current.evaluations;
    let mut cache: HashMap<Vec<i64>, f64> = HashMap::new();
    cache.insert(cache_key(seed.rho, &seed.thetas), current.value);
    let mut d_rho = opts.rho_step * seed.rho;
    let mut d_theta = opts.angle_step;
    let gauge = usize::from(opts.fix_gauge && model.problem.potential().is_radial());
    let mut trace = Vec::new();
    let entry = |iter: usize, c: &InnerOutcome| TraceEntry {
        iter,
        rho: c.configuration.rho,
        thetas: c.configuration.thetas.iter().map(|t| t[..dim].to_vec()).collect(),
        g: c.value,
        lambda_max: c.result.max_multiplier(),
    };
    trace.push(entry(0, &current));

    for iter in 1..=opts.max_iterations {
        if d_rho < min_rho_step && d_theta < opts.min_angle_step {
            break;
        }
        let cfg = &current.configuration;
        let mut polls = Vec::new();
        if d_rho >= min_rho_step {
            for sign in [1.0, -1.0] {
                let mut rho = cfg.rho + sign * d_rho;
                if rho > rho_max {
                    warnings.push(format!("iteration {iter}: rho {rho:.4} clipped to the box bound {rho_max:.4}"));
                    rho = rho_max;
                }
                if rho > 0.0 && rho != cfg.rho {
                    polls.push(Poll { rho, thetas: cfg.thetas.clone() });
                }
            }
        }
        if d_theta >= opts.min_angle_step {
            for i in gauge..k {
                for t in tangent_basis(&cfg.thetas[i], dim) {
                    for sign in [1.0, -1.0] {
                        let mut thetas = cfg.thetas.clone();
                        thetas[i] = point::unit(&rotate_toward(&thetas[i], &t, sign * d_theta)).unwrap();
                        polls.push(Poll { rho: cfg.rho, thetas });
                    }
                }
            }
        }
        let fresh: Vec<usize> =
            (0..polls.len()).filter(|&i| !cache.contains_key(&cache_key(polls[i].rho, &polls[i].thetas))).collect();
        let outcomes: Vec<(usize, Result<InnerOutcome>)> = fresh
            .par_iter()
            .map(|&i| {
                let floor = current.value + tol;
                (i, inner_bounded(model, polls[i].rho, &polls[i].thetas, opts, Some(&current.result), floor))
            })
            .collect();
        let mut best: Option<InnerOutcome> = None;
        for (i, out) in outcomes {
            let key = cache_key(polls[i].rho, &polls[i].thetas);
            match out {
                Ok(o) => {
                    evaluations += o.evaluations;
                    cache.insert(key, o.value);
                    // Ties go to the earlier poll.
                    if o.value > current.value + tol && best.as_ref().map_or(true, |b| o.value > b.value) {
                        best = Some(o);
                    }
                }
                Err(Error::Configuration(_)) | Err(Error::Precondition(_)) => {
                    cache.insert(key, f64::NEG_INFINITY);
                }
                Err(e) => return Err(e),
            }
        }
        match best {
            Some(b) => {
                current = b;
                trace.push(entry(iter, &current));
            }
            None => {
                d_rho *= 0.5;
                d_theta *= 0.5;
            }
        }
    }

    let cfg = &current.configuration;
    let probe = Configuration { rho: cfg.rho + min_rho_step, radii: vec![cfg.rho + min_rho_step; k], ..cfg.clone() };
    let pts = cfg.points();
    let hit_box_bound = adm.box_violation(&probe.points()) > 0.0 || adm.box_violation(&pts) > -min_rho_step / adm.r_delta;
    if hit_box_bound {
        warnings.push("maximiser against the box bound; enlarge the box".into());
    }
    Ok(MinimaxResult {
        configuration: current.configuration,
        g: current.value,
        e_inf: model.e_inf(),
        result: current.result,
        trace,
        seed,
        evaluations,
        hit_box_bound,
        warnings,
    })
}

/// One row of an attraction probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    /// Node-aligned separation actually used.
    pub separation: f64,
    pub f: f64,
    /// `(kE∞(w) − f_k)/(kE∞(w))`.
    pub gap_rel: f64,
    pub max_multiplier: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Grid settings of [`attraction_probe`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeOptions {
    pub spacing: f64,
    /// Distance from each center to the box boundary.
    pub padding: f64,
    pub safety: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self { spacing: 0.1, padding: 12.0, safety: 0.9 }
    }
}

/// `f_k` of a pair placed symmetrically about the origin at each separation
/// (`k = 2`), or of one bump at the origin (`k = 1`). Every row uses its own
/// box of half-width `d/2 + padding` with both centers on nodes.
pub fn attraction_probe(
    k: usize,
    p: f64,
    potential: &Potential,
    gs: &GroundState,
    threshold: Option<Threshold>,
    distances: &[f64],
    probe: &ProbeOptions,
    opts: &SolverOptions,
) -> Result<Vec<ProbeRow>> {
    if !(k == 1 || k == 2) {
        return Err(Error::Precondition(format!("attraction probe supports k = 1 or 2, got {k}")));
    }
    if distances.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("distances must increase".into()));
    }
    let dim = gs.dim();
    let h = probe.spacing;
    let rows = Mutex::new(Vec::new());
    distances.par_iter().enumerate().try_for_each(|(idx, &d)| -> Result<()> {
        // rounded up so that the separation never drops below the requested one
        let half = if k == 2 { (0.5 * d / h - 1e-9).ceil() * h } else { 0.0 };
        let grid = Grid::with_spacing(dim, half + probe.padding, h)?;
        let problem = Problem::new(grid, p, potential.clone())?;
        let model = match threshold {
            Some(t) => Model::with_threshold(problem, gs.clone(), t)?,
            None => Model::new(problem, gs.clone(), probe.safety)?,
        };
        let centers: Vec<Point> = if k == 2 {
            vec![[half, 0.0, 0.0], [-half, 0.0, 0.0]]
        } else {
            vec![point::ORIGIN]
        };
        let r = minimize_fk(&model, &centers, &Start::Glued, opts)?;
        let total = k as f64 * model.e_inf();
        let row = ProbeRow {
            separation: if k == 2 { 2.0 * half } else { 0.0 },
            f: r.value,
            gap_rel: (total - r.value) / total,
            max_multiplier: r.max_multiplier(),
            iterations: r.iterations,
            converged: r.converged,
        };
        rows.lock().unwrap().push((idx, row));
        Ok(())
    })?;
    let mut rows = rows.into_inner().unwrap();
    rows.sort_by_key(|(i, _)| *i);
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

/// Whether `f` increases along the rows up to `noise`.
pub fn probe_is_increasing(rows: &[ProbeRow], noise: f64) -> bool {
    rows.windows(2).all(|w| w[1].f >= w[0].f - noise)
}
