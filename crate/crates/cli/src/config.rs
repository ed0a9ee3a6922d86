//! Run configuration: a TOML file with `section.key = value` overrides.

use multibump::energy::Problem;
use multibump::groundstate::{check_exponent, solve_radial};
use multibump::minimax::{MinimaxOptions, SurrogateOptions};
use multibump::potential::Family;
use multibump::solver::{Model, SolverOptions};
use multibump::{GroundState, Grid, Potential};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "N")]
    pub dim: usize,
    #[serde(rename = "L")]
    pub half_width: f64,
    /// Nodes per axis, boundary included.
    #[serde(rename = "M")]
    pub points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { dim: 2, half_width: 12.0, points: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub p: f64,
    pub a_inf: f64,
    /// Factor applied to the largest admissible threshold.
    pub safety: f64,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self { p: 3.0, a_inf: 1.0, safety: 0.9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundStateConfig {
    pub r_max: f64,
    pub tol: f64,
}

impl Default for GroundStateConfig {
    fn default() -> Self {
        Self { r_max: 30.0, tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinimaxConfig {
    pub k: usize,
    pub sigma: f64,
    /// Seed of the surrogate restarts.
    pub seed: u64,
    pub restarts: usize,
    pub proposals: usize,
    pub max_iterations: usize,
    pub rho_step: f64,
    pub angle_step: f64,
    pub radius_step: f64,
}

impl Default for MinimaxConfig {
    fn default() -> Self {
        let m = MinimaxOptions::default();
        let s = SurrogateOptions::default();
        Self {
            k: 2,
            sigma: m.sigma,
            seed: s.seed,
            restarts: s.restarts,
            proposals: s.proposals,
            max_iterations: m.max_iterations,
            rho_step: m.rho_step,
            angle_step: m.angle_step,
            radius_step: m.radius_step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    /// Write the final field next to the result.
    pub checkpoint: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "runs".into(), checkpoint: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub problem: ProblemConfig,
    pub potential: Family,
    pub groundstate: GroundStateConfig,
    pub solver: SolverOptions,
    pub minimax: MinimaxConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            problem: ProblemConfig::default(),
            potential: Family::Constant,
            groundstate: GroundStateConfig::default(),
            solver: SolverOptions::default(),
            minimax: MinimaxConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

/// Parses the right-hand side of an override as a TOML value, falling back
/// to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Applies `section.key=value` to a parsed table.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override `{assignment}` is not of the form section.key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Usage(format!("bad key path `{path}`")));
    }
    let mut node = table;
    for k in &keys[..keys.len() - 1] {
        let entry = node.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("`{k}` in `{path}` is not a section")))?;
    }
    node.insert(keys[keys.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} = {v} must be positive")))
    }
}

impl RunConfig {
    /// Parses config text, applies overrides in order and validates.
    pub fn load(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse()?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = table.try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        Grid::new(g.dim, g.half_width, g.points).map_err(|e| CliError::Config(e.to_string()))?;
        check_exponent(self.problem.p, g.dim).map_err(|e| CliError::Config(e.to_string()))?;
        Potential::new(self.problem.a_inf, self.potential).map_err(|e| CliError::Config(e.to_string()))?;
        let s = self.problem.safety;
        if !(s > 0.0 && s < 1.0) {
            return Err(CliError::Config(format!("problem.safety = {s} must lie in (0, 1)")));
        }
        positive("groundstate.r_max", self.groundstate.r_max)?;
        positive("groundstate.tol", self.groundstate.tol)?;

        let sv = &self.solver;
        if let Some(t) = sv.tol_grad {
            positive("solver.tol_grad", t)?;
        }
        positive("solver.tol_grad_rel", sv.tol_grad_rel)?;
        positive("solver.initial_step", sv.initial_step)?;
        positive("solver.max_step", sv.max_step)?;
        positive("solver.min_step", sv.min_step)?;
        positive("solver.perturbation", sv.perturbation)?;
        if !(sv.armijo > 0.0 && sv.armijo < 1.0) {
            return Err(CliError::Config(format!("solver.armijo = {} must lie in (0, 1)", sv.armijo)));
        }
        if sv.max_iterations == 0 {
            return Err(CliError::Config("solver.max_iterations must be positive".into()));
        }

        let m = &self.minimax;
        if m.k == 0 {
            return Err(CliError::Config("minimax.k must be at least 1".into()));
        }
        if !(m.sigma > 0.0 && m.sigma < 1.0) {
            return Err(CliError::Config(format!("minimax.sigma = {} must lie in (0, 1)", m.sigma)));
        }
        if m.restarts == 0 || m.proposals == 0 || m.max_iterations == 0 {
            return Err(CliError::Config("minimax restarts, proposals and max_iterations must be positive".into()));
        }
        positive("minimax.rho_step", m.rho_step)?;
        positive("minimax.angle_step", m.angle_step)?;
        positive("minimax.radius_step", m.radius_step)?;
        if self.output.dir.is_empty() {
            return Err(CliError::Config("output.dir is empty".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the resolved config.
    pub fn digest(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn grid(&self) -> Result<Grid> {
        Ok(Grid::new(self.grid.dim, self.grid.half_width, self.grid.points)?)
    }

    pub fn potential(&self) -> Result<Potential> {
        Ok(Potential::new(self.problem.a_inf, self.potential)?)
    }

    pub fn ground_state(&self) -> Result<GroundState> {
        let gs = &self.groundstate;
        Ok(solve_radial(self.problem.p, self.problem.a_inf, self.grid.dim, gs.r_max, gs.tol)?)
    }

    pub fn model(&self, gs: GroundState) -> Result<Model> {
        let problem = Problem::new(self.grid()?, self.problem.p, self.potential()?)?;
        Ok(Model::new(problem, gs, self.problem.safety)?)
    }

    pub fn surrogate_options(&self) -> SurrogateOptions {
        let m = &self.minimax;
        SurrogateOptions { restarts: m.restarts, proposals: m.proposals, seed: m.seed, ..Default::default() }
    }

    pub fn minimax_options(&self) -> MinimaxOptions {
        let m = &self.minimax;
        MinimaxOptions {
            sigma: m.sigma,
            solver: self.solver,
            radius_step: m.radius_step,
            rho_step: m.rho_step,
            angle_step: m.angle_step,
            max_iterations: m.max_iterations,
            surrogate: self.surrogate_options(),
            ..Default::default()
        }
    }
}
