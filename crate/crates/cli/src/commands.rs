//! Subcommand implementations. Each writes into a fresh [`RunDir`].

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use multibump::diagnostics::{self, AsymptoticsReport, Solution};
use multibump::groundstate::derive_delta;
use multibump::minimax::{outer_maximize, Admissibility, MinimaxRecord, MinimaxResult, Surrogate};
use multibump::solver::{minimize_fk, MinimizeRecord, MinimizeResult, Model, Start};
use multibump::{io, point, GroundState, Point, Threshold};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::run::{self, Manifest, RunDir};

/// Shared context of one invocation.
pub struct Context {
    pub config: RunConfig,
    pub out_dir: PathBuf,
    pub args: Vec<String>,
}

impl Context {
    fn start(&self, command: &str) -> Result<RunDir> {
        let dir = RunDir::create(&self.out_dir, command)?;
        run::write_json(&dir.path().join("manifest.json"), &Manifest::new(command, &self.config, self.args.clone()))?;
        Ok(dir)
    }
}

fn threshold(cfg: &RunConfig, gs: &GroundState) -> Result<Threshold> {
    Ok(derive_delta(gs, cfg.potential()?.a0(), cfg.problem.safety)?)
}

#[derive(Debug, Serialize)]
struct SechReport {
    p: f64,
    a_inf: f64,
    samples: usize,
    max_error: f64,
    argmax: f64,
    passed: bool,
}

/// Closed-form one-dimensional ground state
/// `((p+1)a/2)^{1/(p−1)} sech^{2/(p−1)}((p−1)√a x/2)`.
fn soliton(p: f64, a: f64, x: f64) -> f64 {
    let q = 1.0 / (p - 1.0);
    (0.5 * (p + 1.0) * a).powf(q) * (0.5 * (p - 1.0) * a.sqrt() * x).cosh().powf(-2.0 * q)
}

pub fn groundstate(ctx: &Context, validate: bool) -> Result<PathBuf> {
    let cfg = &ctx.config;
    if validate && cfg.grid.dim != 1 {
        return Err(CliError::Usage(format!("--validate needs grid.N = 1, got {}", cfg.grid.dim)));
    }
    let gs = cfg.ground_state()?;
    let th = threshold(cfg, &gs)?;
    let summary = gs.summary(&th)?;
    let dir = ctx.start("groundstate")?;
    let path = dir.path().join("profile.csv");
    let mut w = run::create_file(&path)?;
    gs.write_csv(&mut w, 1)?;
    w.flush().map_err(|e| CliError::file(&path, e))?;
    run::write_json(&dir.path().join("summary.json"), &summary)?;
    println!(
        "w(0) = {:.10}  E_inf = {:.10}  delta = {:.6}  R_delta = {:.6}  decay exponent = {:.6}  d0 = {:.6}",
        summary.w0, summary.e_inf, summary.delta, summary.r_delta, summary.decay_exponent, summary.d0
    );
    if validate {
        let (p, a) = (cfg.problem.p, cfg.problem.a_inf);
        let (mut max_error, mut argmax, mut samples) = (0.0f64, 0.0, 0);
        for (r, w) in gs.samples() {
            let e = (w - soliton(p, a, r)).abs();
            samples += 1;
            if e > max_error {
                max_error = e;
                argmax = r;
            }
        }
        let report = SechReport { p, a_inf: a, samples, max_error, argmax, passed: max_error < 1e-6 };
        run::write_json(&dir.path().join("validation.json"), &report)?;
        println!("sech comparison: max error {max_error:.3e} at r = {argmax:.4} over {samples} samples");
        if !report.passed {
            return Err(CliError::Check(format!("sech max error {max_error:.3e} is not below 1e-6")));
        }
    }
    println!("wrote {}", dir.path().display());
    Ok(dir.path().to_path_buf())
}

fn write_solution(dir: &Path, res: &MinimizeResult, checkpoint: bool) -> Result<()> {
    let dim = res.field.grid().dim();
    let path = dir.join("centers.csv");
    let mut w = run::create_file(&path)?;
    io::write_centers(&mut w, &res.centers, dim)?;
    if checkpoint {
        let path = dir.join("field.bin");
        let mut w = run::create_file(&path)?;
        io::write_field(&mut w, &res.field)?;
    }
    Ok(())
}

fn print_minimizer(model: &Model, res: &MinimizeResult) {
    let c = &res.constraints;
    let nehari = c.nehari.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let offset = c.offsets.iter().copied().fold(0.0f64, f64::max);
    println!(
        "f_{} = {:.10}  (k E_inf = {:.10})  max|lambda| = {:.3e}  (tol {:.3e})",
        res.centers.len(),
        res.value,
        res.centers.len() as f64 * model.e_inf(),
        res.max_multiplier(),
        model.tol_lambda()
    );
    println!(
        "residuals: nehari {nehari:.3e}  barycenter {offset:.3e}  projected gradient {:.3e}  exterior {:.3e}  iterations {}  converged {}",
        res.projected_gradient, res.exterior_residual, res.iterations, res.converged
    );
}

pub fn minimize(ctx: &Context, centers: Option<&Path>, resume: Option<&Path>) -> Result<PathBuf> {
    let cfg = &ctx.config;
    let dim = cfg.grid.dim;
    let centers_path = match (centers, resume) {
        (Some(c), _) => c.to_path_buf(),
        (None, Some(r)) => r.join("centers.csv"),
        (None, None) => return Err(CliError::Usage("minimize needs --centers or --resume".into())),
    };
    let centers: Vec<Point> = io::read_centers(run::open(&centers_path)?, dim)
        .map_err(|e| CliError::Usage(format!("{}: {e}", centers_path.display())))?;
    let start = match resume {
        Some(r) => Start::Field(io::read_field(run::open(&r.join("field.bin"))?)?),
        None => Start::Glued,
    };
    let model = cfg.model(cfg.ground_state()?)?;
    model.check_centers(&centers)?;
    if let Start::Field(f) = &start {
        if f.grid() != model.problem.grid() {
            return Err(CliError::Usage("checkpoint grid differs from the configured grid".into()));
        }
    }
    let res = minimize_fk(&model, &centers, &start, &cfg.solver)?;
    let dir = ctx.start("minimize")?;
    run::write_json(&dir.path().join("result.json"), &res.record())?;
    write_solution(dir.path(), &res, cfg.output.checkpoint)?;
    print_minimizer(&model, &res);
    println!("wrote {}", dir.path().display());
    Ok(dir.path().to_path_buf())
}

fn write_minimax(dir: &Path, res: &MinimaxResult, checkpoint: bool) -> Result<()> {
    run::write_json(&dir.join("result.json"), &res.record())?;
    let path = dir.join("trace.jsonl");
    let mut w = run::create_file(&path)?;
    io::write_jsonl(&mut w, &res.trace)?;
    write_solution(dir, &res.result, checkpoint)
}

fn print_minimax(model: &Model, res: &MinimaxResult) {
    let k = res.k();
    println!(
        "k = {k}  g = {:.10}  k E_inf = {:.10}  gap = {:+.3e}  max|lambda| = {:.3e} (tol {:.3e})  rho = {:.5}  evaluations {}",
        res.g,
        k as f64 * res.e_inf,
        res.gap(),
        res.result.max_multiplier(),
        model.tol_lambda(),
        res.configuration.rho,
        res.evaluations
    );
    for w in &res.warnings {
        eprintln!("warning: {w}");
    }
}

pub fn minimax(ctx: &Context) -> Result<PathBuf> {
    let cfg = &ctx.config;
    let model = cfg.model(cfg.ground_state()?)?;
    let res = outer_maximize(&model, cfg.minimax.k, &cfg.minimax_options())?;
    let dir = ctx.start("minimax")?;
    write_minimax(dir.path(), &res, cfg.output.checkpoint)?;
    print_minimax(&model, &res);
    println!("wrote {}", dir.path().display());
    Ok(dir.path().to_path_buf())
}

fn csv_line(w: &mut impl Write, path: &Path, fields: &[String]) -> Result<()> {
    writeln!(w, "{}", fields.join(",")).map_err(|e| CliError::file(path, e))
}

fn ratio(points: &[Point]) -> f64 {
    let norms: Vec<f64> = points.iter().map(point::norm).collect();
    norms.iter().copied().fold(0.0, f64::max) / norms.iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn sweep(ctx: &Context, k_lo: usize, k_hi: usize, surrogate_only: bool, eps: &[f64]) -> Result<PathBuf> {
    if k_lo == 0 || k_lo > k_hi {
        return Err(CliError::Usage(format!("bad k range {k_lo}..{k_hi}")));
    }
    if surrogate_only {
        return sweep_surrogate(ctx, k_lo, k_hi, eps);
    }
    if k_lo < 2 {
        return Err(CliError::Usage("the min-max sweep starts at k = 2".into()));
    }
    let cfg = &ctx.config;
    let model = cfg.model(cfg.ground_state()?)?;
    let opts = cfg.minimax_options();
    let results: Vec<MinimaxResult> =
        (k_lo..=k_hi).into_par_iter().map(|k| outer_maximize(&model, k, &opts)).collect::<multibump::Result<_>>()?;
    let dir = ctx.start("sweep")?;
    let path = dir.path().join("table.csv");
    let mut table = run::create_file(&path)?;
    csv_line(
        &mut table,
        &path,
        &["k", "g", "k_e_inf", "gap", "max_lambda", "tol_lambda", "rho", "ratio", "min_separation", "hit_box_bound"]
            .map(String::from),
    )?;
    for res in &results {
        let k = res.k();
        write_minimax(&dir.subdir(&format!("k-{k:03}"))?, res, cfg.output.checkpoint)?;
        print_minimax(&model, res);
        csv_line(
            &mut table,
            &path,
            &[
                k.to_string(),
                res.g.to_string(),
                (k as f64 * res.e_inf).to_string(),
                res.gap().to_string(),
                res.result.max_multiplier().to_string(),
                model.tol_lambda().to_string(),
                res.configuration.rho.to_string(),
                ratio(&res.result.centers).to_string(),
                point::min_pairwise_distance(&res.result.centers).to_string(),
                res.hit_box_bound.to_string(),
            ],
        )?;
    }
    table.flush().map_err(|e| CliError::file(&path, e))?;
    println!("wrote {}", dir.path().display());
    Ok(dir.path().to_path_buf())
}

fn sweep_surrogate(ctx: &Context, k_lo: usize, k_hi: usize, eps: &[f64]) -> Result<PathBuf> {
    let cfg = &ctx.config;
    let dim = cfg.grid.dim;
    let gs = cfg.ground_state()?;
    let th = threshold(cfg, &gs)?;
    let so = cfg.surrogate_options();
    let surrogate = Surrogate::new(&cfg.potential()?, &gs, th, &so)?;
    let adm = Admissibility { sigma: cfg.minimax.sigma, r_delta: th.r_delta, max_coordinate: None };
    let rows = (k_lo..=k_hi)
        .into_par_iter()
        .map(|k| {
            let r = surrogate.maximize(k, &adm, &so)?;
            let pts = r.configuration.points();
            let stats = if k >= 2 { Some(diagnostics::configuration_stats(&pts, dim)?) } else { None };
            let eq = diagnostics::equidistribution(&pts, dim, eps, diagnostics::default_probe_count(dim))?;
            Ok((k, r, stats, eq))
        })
        .collect::<multibump::Result<Vec<_>>>()?;
    let dir = ctx.start("sweep")?;
    let path = dir.path().join("table.csv");
    let mut table = run::create_file(&path)?;
    csv_line(
        &mut table,
        &path,
        &["k", "G", "k_e_inf", "gap", "rho", "ratio", "gamma", "lambda", "min_separation"].map(String::from),
    )?;
    let eq_path = dir.path().join("equidistribution.csv");
    let mut eq_table = run::create_file(&eq_path)?;
    csv_line(
        &mut eq_table,
        &eq_path,
        &["k", "eps", "min_ratio", "min_count", "max_count", "mean_count"].map(String::from),
    )?;
    let centers_dir = dir.subdir("centers")?;
    for (k, r, stats, eq) in &rows {
        let pts = r.configuration.points();
        let nan = f64::NAN.to_string();
        let (gamma, lambda, sep) = match stats {
            Some(s) => (s.gamma.to_string(), s.lambda.to_string(), s.min_separation.to_string()),
            None => (nan.clone(), nan.clone(), nan),
        };
        csv_line(
            &mut table,
            &path,
            &[
                k.to_string(),
                r.value.to_string(),
                (*k as f64 * surrogate.e_inf()).to_string(),
                r.gap.to_string(),
                r.configuration.rho.to_string(),
                ratio(&pts).to_string(),
                gamma,
                lambda,
                sep,
            ],
        )?;
        for row in eq {
            csv_line(
                &mut eq_table,
                &eq_path,
                &[
                    k.to_string(),
                    row.eps.to_string(),
                    row.min_ratio.to_string(),
                    row.min_count.to_string(),
                    row.max_count.to_string(),
                    row.mean_count.to_string(),
                ],
            )?;
        }
        let cp = centers_dir.join(format!("k-{k:03}.csv"));
        let mut w = run::create_file(&cp)?;
        io::write_centers(&mut w, &pts, dim)?;
        let worst = eq.iter().map(|e| e.min_ratio).fold(f64::INFINITY, f64::min);
        println!("k = {k}  G - k E_inf = {:+.4e}  rho = {:.3}  ratio = {:.6}  min N/(k eps^(N-1)) = {worst:.3}", r.gap, r.configuration.rho, ratio(&pts));
    }
    table.flush().map_err(|e| CliError::file(&path, e))?;
    eq_table.flush().map_err(|e| CliError::file(&eq_path, e))?;
    println!("wrote {}", dir.path().display());
    Ok(dir.path().to_path_buf())
}

/// Either kind of stored result.
enum Stored {
    Minimize(MinimizeRecord),
    Minimax(Box<MinimaxRecord>),
}

impl Stored {
    fn load(path: &Path) -> Result<Self> {
        let v: serde_json::Value = run::read_json(path)?;
        if v.get("minimizer").is_some() {
            Ok(Stored::Minimax(Box::new(serde_json::from_value(v)?)))
        } else {
            Ok(Stored::Minimize(serde_json::from_value(v)?))
        }
    }

    fn minimizer(&self) -> &MinimizeRecord {
        match self {
            Stored::Minimize(r) => r,
            Stored::Minimax(r) => &r.minimizer,
        }
    }
}

fn find_results(dir: &Path, depth: usize, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::file(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| CliError::file(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() && depth > 0 {
            find_results(&p, depth - 1, out)?;
        } else if p.file_name().is_some_and(|n| n == "result.json") {
            out.push(p);
        }
    }
    Ok(())
}

/// The manifest of the run that produced `result`, found next to it or one
/// level up.
fn manifest_for(result: &Path) -> Option<PathBuf> {
    result
        .ancestors()
        .skip(1)
        .take(2)
        .map(|d| d.join("manifest.json"))
        .find(|m| m.is_file())
}

fn load_solution(path: &Path) -> Result<(RunConfig, MinimizeRecord, multibump::Field)> {
    let dir = path.parent().expect("result has a parent");
    let manifest = manifest_for(path).ok_or_else(|| CliError::Usage("no manifest.json".into()))?;
    let m: Manifest = run::read_json(&manifest)?;
    m.config.validate()?;
    let rec = Stored::load(path)?.minimizer().clone();
    let field_path = dir.join("field.bin");
    if !field_path.is_file() {
        return Err(CliError::Usage("no field.bin checkpoint".into()));
    }
    let field = io::read_field(run::open(&field_path)?)?;
    Ok((m.config, rec, field))
}

pub fn diagnose(ctx: &Context, results: &Path, eps: &[f64]) -> Result<PathBuf> {
    if !results.is_dir() {
        return Err(CliError::Usage(format!("{} is not a directory", results.display())));
    }
    let mut paths = Vec::new();
    find_results(results, 2, &mut paths)?;
    let mut loaded = Vec::new();
    for p in &paths {
        match load_solution(p) {
            Ok(s) => loaded.push(s),
            Err(e) => eprintln!("warning: skipping {}: {e}", p.display()),
        }
    }
    if loaded.is_empty() {
        return Err(CliError::Usage(format!("no usable results under {}", results.display())));
    }
    let mut ground_states: BTreeMap<String, (GroundState, Threshold, f64)> = BTreeMap::new();
    let mut report = AsymptoticsReport::default();
    for (cfg, rec, field) in &loaded {
        let key = format!("{:?}", (&cfg.grid.dim, cfg.problem.p, cfg.problem.a_inf, &cfg.groundstate, cfg.potential, cfg.problem.safety));
        if !ground_states.contains_key(&key) {
            let gs = cfg.ground_state()?;
            let th = threshold(cfg, &gs)?;
            let e = multibump::groundstate::energy_limit(&gs);
            ground_states.insert(key.clone(), (gs, th, e));
        }
        let (gs, th, e_inf) = &ground_states[&key];
        let centers: Vec<Point> = rec.centers.iter().map(|c| point::from_slice(c)).collect();
        let sol = Solution { field, centers: &centers, energy: rec.value, max_multiplier: rec.max_multiplier };
        report.records.push(diagnostics::asymptotics_record(sol, gs, th, *e_inf, eps)?);
    }
    report.records.sort_by_key(|r| r.k);
    report.validate()?;
    let dir = ctx.start("diagnose")?;
    run::write_json(&dir.path().join("asymptotics.json"), &report)?;
    let path = dir.path().join("asymptotics.csv");
    let mut w = run::create_file(&path)?;
    report.write_csv(&mut w)?;
    w.flush().map_err(|e| CliError::file(&path, e))?;
    for r in &report.records {
        println!(
            "k = {}  f/(k E_inf) = {:.6}  ratio = {:.6}  min separation = {:.4}  max|lambda| = {:.3e}",
            r.k, r.energy_ratio, r.stats.ratio, r.stats.min_separation, r.max_multiplier
        );
    }
    println!(
        "separation nondecreasing: {}  ratio nonincreasing: {}",
        report.separation_nondecreasing(1e-6),
        report.ratio_nonincreasing(1e-6)
    );
    println!("wrote {}", dir.path().display());
    Ok(dir.path().to_path_buf())
}
