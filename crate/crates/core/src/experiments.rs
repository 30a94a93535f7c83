//! Experiment runner: turns an [`ExperimentConfig`] into a report and CSV
//! artifacts on disk.

use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::averaging::{delta_of_eps, Domain, FastSlowField, SampledAverage};
use crate::config::{ExperimentConfig, ExperimentKind, GridKind};
use crate::error::{Error, Result};
use crate::field::{ParamValue, Params, PeriodicScalarField, PeriodicVectorField};
use crate::homog1d::{rate_1d, solve_eps_1d, Rate1DOptions};
use crate::integrate::{solve_ivp_with, solve_oscillatory, SolverOptions, Trajectory};
use crate::planar::{planar_convergence, PlanarOptions};
use crate::report::{eps_log_eps, fit_rate, Check, ConvergenceReport, ReferenceRate};
use crate::shear::{diophantine_badness, shear_convergence, ShearOptions, DEFAULT_KAPPA, DEFAULT_M_MAX};
use crate::transport::{transport_error, uniform_delta, InitialProfile, TransportOptions, TransportProblem};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Exit status for an error: bad input is a config error, anything raised
/// while solving is a runtime error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::UnknownBuiltin(_) | Error::InvalidParameter { .. } | Error::Resonance { .. } => {
            EXIT_CONFIG
        }
        _ => EXIT_RUNTIME,
    }
}

/// Contents of `report.json`.
#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub experiment: String,
    pub kind: ExperimentKind,
    pub config: ExperimentConfig,
    pub report: ConvergenceReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
    pub pass: bool,
}

impl SuiteReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Report plus the CSV files to write next to it.
#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub report: ConvergenceReport,
    pub details: Option<Value>,
    pub artifacts: Vec<(String, Vec<u8>)>,
}

/// Result of [`run_suite`].
#[derive(Debug)]
pub struct SuiteOutcome {
    pub exit_code: i32,
    pub report: Option<SuiteReport>,
    pub error: Option<Error>,
    pub output_dir: PathBuf,
}

/// Loads, runs and writes one config file.
pub fn run_config_file(path: impl AsRef<Path>) -> SuiteOutcome {
    match ExperimentConfig::load(path) {
        Ok(cfg) => run_suite(&cfg),
        Err(e) => SuiteOutcome { exit_code: exit_code(&e), report: None, error: Some(e), output_dir: PathBuf::new() },
    }
}

/// Runs the experiment on a pool of `parallelism` workers and writes
/// `report.json`, `errors.csv` and the per-ε CSV files.
pub fn run_suite(cfg: &ExperimentConfig) -> SuiteOutcome {
    let output_dir = cfg.output_dir();
    let fail = |e: Error, dir: &PathBuf| SuiteOutcome { exit_code: exit_code(&e), report: None, error: Some(e), output_dir: dir.clone() };
    if let Err(e) = cfg.validate() {
        return fail(e, &output_dir);
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cfg.parallelism).build() {
        Ok(p) => p,
        Err(e) => return fail(Error::InvalidInput(format!("worker pool: {e}")), &output_dir),
    };
    let out = match pool.install(|| run_experiment(cfg)) {
        Ok(o) => o,
        Err(e) => return fail(e, &output_dir),
    };
    let pass = out.report.pass;
    let suite = SuiteReport {
        experiment: cfg.experiment_id(),
        kind: cfg.experiment,
        config: cfg.clone(),
        report: out.report,
        details: out.details,
        pass,
    };
    if let Err(e) = write_outputs(&output_dir, &suite, &out.artifacts) {
        return SuiteOutcome { exit_code: EXIT_RUNTIME, report: Some(suite), error: Some(e), output_dir };
    }
    SuiteOutcome { exit_code: if pass { EXIT_PASS } else { EXIT_FAIL }, report: Some(suite), error: None, output_dir }
}

fn write_outputs(dir: &Path, suite: &SuiteReport, artifacts: &[(String, Vec<u8>)]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), suite.to_json()?)?;
    let mut csv = Vec::new();
    suite.report.write_csv(&mut csv)?;
    std::fs::write(dir.join("errors.csv"), csv)?;
    for (name, bytes) in artifacts {
        std::fs::write(dir.join(name), bytes)?;
    }
    Ok(())
}

/// Dispatches on the experiment kind. Runs on the current rayon pool and
/// touches no files.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    match cfg.experiment {
        ExperimentKind::Theorem1 => theorem1(cfg),
        ExperimentKind::Theorem2a => theorem2a(cfg),
        ExperimentKind::Theorem2b => theorem2b(cfg),
        ExperimentKind::Transport => transport(cfg),
        _ => run_example(cfg),
    }
}

/// Examples 1 to 5.
pub fn run_example(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    match cfg.experiment {
        ExperimentKind::Example1 => example1(cfg),
        ExperimentKind::Example2 => example2(cfg),
        ExperimentKind::Example3 => example3(cfg),
        ExperimentKind::Example4 => transport(cfg),
        ExperimentKind::Example5 => example5(cfg),
        other => Err(Error::config("experiment", format!("`{}` is not an example", other.as_str()))),
    }
}

fn point(cfg: &ExperimentConfig, dim: usize) -> Result<Vec<f64>> {
    match &cfg.p {
        None => Ok(vec![0.0; dim]),
        Some(p) if p.len() == dim => Ok(p.clone()),
        Some(p) => Err(Error::config("p", format!("has {} coordinates, field dimension is {dim}", p.len()))),
    }
}

/// `t,x_1,…,x_d` at `n + 1` uniform times.
fn sampled_csv(traj: &Trajectory, n: usize, scale: f64) -> Result<Vec<u8>> {
    let mut w = Vec::new();
    write!(w, "t")?;
    for k in 1..=traj.dim() {
        write!(w, ",x_{k}")?;
    }
    writeln!(w)?;
    let (a, b) = (traj.t_start(), traj.t_end());
    for i in 0..=n {
        let s = a + (b - a) * i as f64 / n as f64;
        write!(w, "{}", s * scale)?;
        for x in traj.eval(s) {
            write!(w, ",{}", x * scale)?;
        }
        writeln!(w)?;
    }
    Ok(w)
}

fn trajectory_artifacts(
    cfg: &ExperimentConfig,
    solve: impl Fn(f64) -> Result<Trajectory> + Sync,
) -> Result<Vec<(String, Vec<u8>)>> {
    if !cfg.output.trajectories {
        return Ok(Vec::new());
    }
    let ladder = cfg.ladder_values();
    ladder
        .par_iter()
        .enumerate()
        .map(|(k, &eps)| Ok((format!("trajectory_{k:02}.csv"), sampled_csv(&solve(eps)?, cfg.output.trajectory_samples, 1.0)?)))
        .collect()
}

fn theorem1(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let g = cfg.field_spec()?.scalar()?;
    if g.dim() != 1 {
        return Err(Error::config("field", "theorem1 needs a scalar field on the circle"));
    }
    let p = point(cfg, 1)?[0];
    let opts = Rate1DOptions {
        tol: cfg.tolerances.ode,
        slack: cfg.tolerances.slack,
        slope_window: cfg.slope_window(),
        ..Rate1DOptions::default()
    };
    let report = rate_1d(&g, p, cfg.t_end, &cfg.ladder_values(), &opts)?;
    let artifacts = trajectory_artifacts(cfg, |eps| solve_eps_1d(&g, eps, p, cfg.t_end, opts.tol))?;
    Ok(ExperimentOutput { report, details: None, artifacts })
}

fn shear_inputs(cfg: &ExperimentConfig) -> Result<(Vec<f64>, PeriodicScalarField)> {
    let spec = cfg.field_spec()?;
    if spec.builtin.as_deref() == Some("shear") {
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        let a = match spec.params.get("a") {
            None => vec![1.0, golden],
            Some(ParamValue::Vector(a)) => a.clone(),
            Some(other) => return Err(Error::config("field.params.a", format!("expected a vector, got {other:?}"))),
        };
        if cfg.shear.a.is_some() {
            return Err(Error::config("shear.a", "builtin `shear` takes its direction from field.params.a"));
        }
        let g = crate::field::shear_profile(a.len(), &spec.params)?;
        Ok((a, g))
    } else {
        let a = cfg.shear.a.clone().ok_or_else(|| Error::config("shear.a", "required unless field.builtin = \"shear\""))?;
        let g = spec.scalar()?;
        if g.dim() != a.len() {
            return Err(Error::config("shear.a", format!("has {} components, profile dimension is {}", a.len(), g.dim())));
        }
        Ok((a, g))
    }
}

fn theorem2a(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let (a, g) = shear_inputs(cfg)?;
    let p = point(cfg, a.len())?;
    let opts = ShearOptions {
        tol: cfg.tolerances.ode,
        slack: cfg.tolerances.slack,
        slope_window: cfg.slope_window(),
        kappa: cfg.shear.kappa.unwrap_or(DEFAULT_KAPPA),
        m_max: cfg.shear.m_max.unwrap_or(DEFAULT_M_MAX),
        corrector_tol: cfg.tolerances.corrector,
        ..ShearOptions::default()
    };
    let report = shear_convergence(&a, &g, &p, cfg.t_end, &cfg.ladder_values(), &opts)?;
    let dio = diophantine_badness(&a, opts.kappa, opts.m_max)?;
    let f = PeriodicVectorField::shear(a.clone(), &g);
    let artifacts = trajectory_artifacts(cfg, |eps| solve_oscillatory(&f, eps, (0.0, cfg.t_end), &p, opts.tol))?;
    Ok(ExperimentOutput { report, details: Some(json!({ "a": a, "diophantine": dio })), artifacts })
}

fn theorem2b(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let f = cfg.field_spec()?.vector()?;
    if f.dim() != 2 {
        return Err(Error::config("field", "theorem2b needs a planar vector field"));
    }
    let p = point(cfg, 2)?;
    let opts = PlanarOptions {
        tol: cfg.tolerances.ode,
        t0: cfg.t0.unwrap_or(0.1),
        slope_window: cfg.slope_window(),
        liouville_degree: cfg.planar.liouville_degree,
        liouville_tol: cfg.tolerances.liouville,
        grid_n: cfg.planar.grid_n,
        t_long: cfg.planar.t_long,
        allow_resonant: cfg.planar.allow_resonant,
        ..PlanarOptions::default()
    };
    let (report, setup) = planar_convergence(&f, &p, cfg.t_end, &cfg.ladder_values(), &opts)?;
    let mut artifacts = trajectory_artifacts(cfg, |eps| solve_oscillatory(&f, eps, (0.0, cfg.t_end), &p, opts.tol))?;
    let mut chart = Vec::new();
    setup.chart.write_csv(opts.grid_n, &mut chart)?;
    artifacts.push(("chart.csv".into(), chart));
    let details = json!({
        "drift": setup.drift,
        "rotation": setup.rotation,
        "liouville_residual": setup.density.residual,
        "density_uniform": setup.density.is_uniform(),
    });
    Ok(ExperimentOutput { report, details: Some(details), artifacts })
}

fn transport(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let h = cfg.field_spec()?.scalar()?;
    if h.dim() != 1 {
        return Err(Error::config("field", "transport needs a scalar speed on the circle"));
    }
    let tr = &cfg.transport;
    let v0 = match tr.v0.as_str() {
        "sine" => InitialProfile::sine(tr.k),
        _ => InitialProfile::constant(tr.value),
    };
    let grid = match tr.grid_kind {
        GridKind::Uniform => TransportProblem::uniform_grid(tr.grid),
        GridKind::Kronecker => TransportProblem::kronecker_grid(tr.grid),
    };
    let prob = TransportProblem::new(h, v0, grid, cfg.t_end)?;
    let opts = TransportOptions { tol: cfg.tolerances.ode, slack: cfg.tolerances.slack, slope_window: cfg.slope_window() };
    let t = tr.t.unwrap_or(cfg.t_end);
    let (report, snaps) = transport_error(&prob, &cfg.ladder_values(), t, &opts)?;
    let mut artifacts = Vec::new();
    if cfg.output.trajectories {
        for (k, s) in snaps.iter().enumerate() {
            let mut buf = Vec::new();
            s.write_csv(&prob, &mut buf)?;
            artifacts.push((format!("profile_{k:02}.csv"), buf));
        }
    }
    let details = json!({ "t": t, "effective_speed": prob.effective_speed(), "v0": prob.v0.name() });
    Ok(ExperimentOutput { report, details: Some(details), artifacts })
}

/// Largest eigenvector of the scatter matrix of `pts − p`: the line through
/// `p` closest to the points in least squares.
fn fitted_direction(pts: &[[f64; 2]], p: [f64; 2]) -> [f64; 2] {
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for q in pts {
        let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    [theta.cos(), theta.sin()]
}

fn seg_dist(q: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (vx, vy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = vx * vx + vy * vy;
    let s = if len2 == 0.0 { 0.0 } else { (((q[0] - a[0]) * vx + (q[1] - a[1]) * vy) / len2).clamp(0.0, 1.0) };
    ((q[0] - a[0] - s * vx).powi(2) + (q[1] - a[1] - s * vy).powi(2)).sqrt()
}

/// Hausdorff distance between the polyline `pts` and the segment of the line
/// `p + s·d` spanned by the projections of the polyline.
pub fn hausdorff_to_line(pts: &[[f64; 2]], p: [f64; 2], d: [f64; 2]) -> f64 {
    let n = (d[0] * d[0] + d[1] * d[1]).sqrt();
    let d = [d[0] / n, d[1] / n];
    let proj: Vec<f64> = pts.iter().map(|q| (q[0] - p[0]) * d[0] + (q[1] - p[1]) * d[1]).collect();
    let (lo, hi) = proj.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(*s), b.max(*s)));
    let a = [p[0] + lo * d[0], p[1] + lo * d[1]];
    let b = [p[0] + hi * d[0], p[1] + hi * d[1]];
    let to_line = pts.iter().map(|q| seg_dist(*q, a, b)).fold(0.0, f64::max);
    let m = pts.len();
    let to_curve = (0..=m)
        .map(|i| {
            let s = i as f64 / m as f64;
            let q = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
            pts.windows(2).map(|w| seg_dist(q, w[0], w[1])).fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    to_line.max(to_curve)
}

#[derive(Clone, Debug, Serialize)]
struct Example1Row {
    variant: String,
    eps: f64,
    endpoint: [f64; 2],
    fitted_direction: [f64; 2],
    hausdorff_fitted: f64,
    hausdorff_claimed: f64,
}

fn example1(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let spec = cfg.field_spec()?;
    if spec.builtin.as_deref() != Some("example1_piecewise") {
        return Err(Error::config("field.builtin", "example1 runs the `example1_piecewise` builtin"));
    }
    let ladder = cfg.ladder_values();
    // p₁/ε in (0, 1/4] for every ladder entry, inside the F₁ = 1 band
    let eps_min = ladder[ladder.len() - 1];
    let p = match &cfg.p {
        Some(_) => point(cfg, 2)?,
        None => vec![0.25 * eps_min, 0.0],
    };
    let p2 = [p[0], p[1]];
    let claimed = [2.0, 1.0];
    let variants = ["literal", "x2_dependent"];
    let jobs: Vec<(&str, usize, f64)> =
        variants.iter().flat_map(|v| ladder.iter().enumerate().map(move |(k, e)| (*v, k, *e))).collect();
    let runs = jobs
        .par_iter()
        .map(|&(variant, k, eps)| {
            let mut params: Params = spec.params.clone();
            params.insert("variant".into(), ParamValue::Text(variant.into()));
            let f = crate::field::builtin("example1_piecewise", &params).and_then(|b| match b {
                crate::field::Builtin::Vector(f) => Ok(f),
                crate::field::Builtin::Scalar(_) => Err(Error::config("field", "expected a vector field")),
            })?;
            let traj = solve_oscillatory(&f, eps, (0.0, cfg.t_end), &p, cfg.tolerances.ode)?;
            // 16 samples per fast period resolve the corners of the staircase
            let samples = cfg.output.trajectory_samples.max((16.0 * cfg.t_end / eps).ceil() as usize);
            let pts: Vec<[f64; 2]> = (0..=samples)
                .map(|i| {
                    let x = traj.eval(cfg.t_end * i as f64 / samples as f64);
                    [x[0], x[1]]
                })
                .collect();
            let d = fitted_direction(&pts, p2);
            let end = traj.last_state();
            let row = Example1Row {
                variant: variant.into(),
                eps,
                endpoint: [end[0], end[1]],
                fitted_direction: d,
                hausdorff_fitted: hausdorff_to_line(&pts, p2, d),
                hausdorff_claimed: hausdorff_to_line(&pts, p2, claimed),
            };
            let csv = sampled_csv(&traj, cfg.output.trajectory_samples, 1.0)?;
            Ok((row, (format!("trajectory_{variant}_{k:02}.csv"), csv)))
        })
        .collect::<Result<Vec<_>>>()?;
    let (rows, files): (Vec<Example1Row>, Vec<_>) = runs.into_iter().unzip();

    let x2 = &rows[ladder.len()..];
    let errs: Vec<f64> = x2.iter().map(|r| r.hausdorff_fitted).collect();
    let mut report = ConvergenceReport::new("example1:x2_dependent", ReferenceRate::Eps, &ladder, &errs, None, 1.0, None)?;
    let last = |v: usize| &rows[v * ladder.len() + ladder.len() - 1];
    let angle = |d: [f64; 2]| {
        let c = (d[0] * claimed[0] + d[1] * claimed[1]).abs() / 5f64.sqrt();
        c.clamp(-1.0, 1.0).acos()
    };
    for (v, name) in variants.iter().enumerate() {
        let r = last(v);
        report = report
            .with_constant(format!("{name}_direction_1"), r.fitted_direction[0])
            .with_constant(format!("{name}_direction_2"), r.fitted_direction[1])
            .with_constant(format!("{name}_angle_to_claimed"), angle(r.fitted_direction));
        if angle(r.fitted_direction) > 1e-3 {
            report = report.with_warning(format!(
                "{name}: empirical limit direction ({:.6}, {:.6}) differs from the claimed line p + s(2,1)",
                r.fitted_direction[0], r.fitted_direction[1]
            ));
        }
    }
    let lit = last(0);
    let freeze = eps_min * ((p[0] / eps_min).floor() + 0.5);
    report = report.with_constant("literal_x1_final", lit.endpoint[0]).with_constant("literal_x1_freeze_point", freeze);
    let artifacts = if cfg.output.trajectories { files } else { Vec::new() };
    Ok(ExperimentOutput { report, details: Some(json!({ "p": p, "rows": rows })), artifacts })
}

fn example2(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let spec = cfg.field_spec()?;
    let speed = spec.scalar()?;
    let (h, sigma) = match spec.builtin.as_deref() {
        Some("example2_sawtooth") => {
            let num = |k: &str, d: f64| match spec.params.get(k) {
                Some(ParamValue::Number(x)) => *x,
                _ => d,
            };
            (num("h", 3.0), num("sigma", 1.0))
        }
        _ => return Err(Error::config("field.builtin", "example2 runs the `example2_sawtooth` builtin")),
    };
    let c0 = h / ((h + sigma) / sigma).ln();
    let p = point(cfg, 1)?[0];
    let ladder = cfg.ladder_values();
    let g = speed.reciprocal();
    let tol = cfg.tolerances.ode;
    let runs = ladder
        .par_iter()
        .map(|&eps| {
            let traj = solve_eps_1d(&g, eps, p, cfg.t_end, tol)?;
            let err = traj.sample_times(2048).iter().map(|&t| (traj.eval(t)[0] - p - c0 * t).abs()).fold(0.0, f64::max);
            Ok((err, traj))
        })
        .collect::<Result<Vec<_>>>()?;
    let errs: Vec<f64> = runs.iter().map(|r| r.0).collect();
    // |X^ε − X⁰| ≤ c⁰·ε·osc Φ with Φ = ∫(1/F − M(1/F))
    let refs: Vec<f64> = ladder.iter().map(|&e| c0 * uniform_delta(&speed, e)).collect();
    let report = ConvergenceReport::new(
        format!("example2:{}", speed.name()),
        ReferenceRate::Delta,
        &ladder,
        &errs,
        Some(&refs),
        cfg.tolerances.slack,
        Some((cfg.tolerances.slope_window[0], f64::MAX)),
    )?
    .with_constant("speed", c0)
    .with_constant("beta", 1.0 / c0)
    .with_constant("bound_constant", refs[0] / ladder[0]);
    let artifacts = if cfg.output.trajectories {
        runs.iter()
            .enumerate()
            .map(|(k, (_, traj))| Ok((format!("trajectory_{k:02}.csv"), sampled_csv(traj, cfg.output.trajectory_samples, 1.0)?)))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok(ExperimentOutput { report, details: None, artifacts })
}

/// `ε·Σ_q min(2/q, S²/(2q³))` over the odd `q ≤ 2K + 1`, `S = T/ε`: a bound on
/// `δ(ε)` from `|∫₀^σ sin(s/q)/q² ds| = |1 − cos(σ/q)|/q`.
fn example3_delta_bound(k_max: usize, t_end: f64, eps: f64) -> f64 {
    let s = t_end / eps;
    eps * (0..=k_max)
        .map(|k| {
            let q = (2 * k + 1) as f64;
            (2.0 / q).min(s * s / (2.0 * q * q * q))
        })
        .sum::<f64>()
}

fn example3(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let spec = cfg.field_spec()?;
    if spec.builtin.as_deref() != Some("example3_almost_periodic") {
        return Err(Error::config("field.builtin", "example3 runs the `example3_almost_periodic` builtin"));
    }
    let num = |k: &str, d: f64| match spec.params.get(k) {
        Some(ParamValue::Number(x)) => *x,
        _ => d,
    };
    let (k_max, shift) = (num("K", 50.0) as usize, num("shift", 0.0));
    let g = FastSlowField::from_time_field(&spec.scalar()?)?;
    let d = Domain::point(0.0);
    let g0 = SampledAverage::constant(&g, &d, shift);
    let ladder = cfg.ladder_values();
    let delta = ladder.par_iter().map(|&e| delta_of_eps(&g, &g0, &d, cfg.t_end, e)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<f64> = ladder.iter().map(|&e| eps_log_eps(e)).collect();
    let c = ladder
        .iter()
        .zip(&refs)
        .map(|(&e, r)| example3_delta_bound(k_max, cfg.t_end, e) / r)
        .fold(0.0, f64::max);
    let ratios: Vec<f64> = delta.iter().zip(&refs).map(|(d, r)| d / r).collect();
    let report = ConvergenceReport::new(
        format!("example3:{}", g.name()),
        ReferenceRate::EpsLogEps,
        &ladder,
        &delta,
        Some(&refs),
        c,
        None,
    )?
    .with_constant("bound_constant", c)
    .with_constant("max_ratio", ratios.iter().copied().fold(0.0, f64::max));
    Ok(ExperimentOutput { report, details: Some(json!({ "ratios": ratios })), artifacts: Vec::new() })
}

fn example5(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let spec = cfg.field_spec()?;
    if spec.builtin.as_deref() != Some("example5_gradient") {
        return Err(Error::config("field.builtin", "example5 runs the `example5_gradient` builtin"));
    }
    let amp = match spec.params.get("amp") {
        Some(ParamValue::Number(x)) => *x,
        _ => 1.0,
    };
    let f = spec.vector()?;
    let potential = move |y: &[f64]| amp / (2.0 * PI) * (2.0 * PI * y[0]).cos() * (2.0 * PI * y[1]).cos();
    let p = match &cfg.p {
        Some(_) => point(cfg, 2)?,
        None => vec![1.0 / 3.0, 1.0 / 3.0],
    };
    let ladder = cfg.ladder_values();
    let tol = cfg.tolerances.ode;
    let runs = ladder
        .par_iter()
        .map(|&eps| {
            // fast variables z = X/ε, s = t/ε; the last slot accumulates ∫|F(z)|² ds
            let z0 = [p[0] / eps, p[1] / eps, 0.0];
            let mut buf = [0.0; 2];
            let traj = solve_ivp_with(
                |_, z, out| {
                    f.eval_into(&z[..2], &mut buf);
                    out[0] = buf[0];
                    out[1] = buf[1];
                    out[2] = buf[0] * buf[0] + buf[1] * buf[1];
                },
                (0.0, cfg.t_end / eps),
                &z0,
                &SolverOptions::with_tol(tol),
                &[],
            )?;
            let end = traj.last_state();
            let energy = eps * end[2];
            let identity = eps * (potential(&end[..2]) - potential(&z0[..2]));
            let pts: Vec<[f64; 2]> = traj
                .sample_times(512)
                .into_iter()
                .map(|s| {
                    let z = traj.eval(s);
                    [eps * z[0], eps * z[1]]
                })
                .collect();
            let diam = pts
                .iter()
                .flat_map(|a| pts.iter().map(move |b| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()))
                .fold(0.0, f64::max);
            Ok((energy, identity, diam, traj, eps))
        })
        .collect::<Result<Vec<_>>>()?;
    let energy: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let identity_gap = runs.iter().map(|r| (r.0 - r.1).abs()).fold(0.0, f64::max);
    let diam: Vec<f64> = runs.iter().map(|r| r.2).collect();
    let diam_slope = fit_rate(&ladder, &diam)?.slope;
    // ∫|Ẋ|² = ε(Φ(X(T)/ε) − Φ(p/ε)) ≤ ε·osc Φ = ε·amp/π
    let c = amp.abs() / PI;
    let refs = ladder.clone();
    let report = ConvergenceReport::new(
        "example5:gradient",
        ReferenceRate::Eps,
        &ladder,
        &energy,
        Some(&refs),
        c,
        Some((cfg.tolerances.slope_window[0], f64::MAX)),
    )?
    .with_constant("bound_constant", c)
    .with_check(Check::at_most("energy_identity", identity_gap, 1e-8))
    .with_check(Check::at_least("diameter_slope", diam_slope, cfg.tolerances.slope_window[0]));
    let artifacts = if cfg.output.trajectories {
        runs.iter()
            .enumerate()
            .map(|(k, r)| Ok((format!("trajectory_{k:02}.csv"), sampled_csv(&r.3, cfg.output.trajectory_samples, r.4)?)))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok(ExperimentOutput { report, details: Some(json!({ "p": p, "diameter": diam })), artifacts })
}
