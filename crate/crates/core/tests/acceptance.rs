//! Acceptance checks, one PASS/FAIL line each. Exits non-zero if any fails.

use std::f64::consts::PI;
use std::time::Instant;

use homog_core::averaging::{average_on_grid, bogolyubov_compare, delta_of_eps, Domain, FastSlowField};
use homog_core::config::ExperimentConfig;
use homog_core::experiments::run_experiment;
use homog_core::field::{
    builtin, for_each_lattice_point, shear_profile, Builtin, FourierSeries, FourierTerm, ParamValue, Params,
};
use homog_core::homog1d::{rate_1d, Rate1DOptions};
use homog_core::integrate::{oracle_solve, solve_oscillatory};
use homog_core::planar::{divergence, planar_convergence, solve_liouville, PlanarOptions};
use homog_core::quad;
use homog_core::shear::{build_corrector, diophantine_badness, shear_convergence, ShearOptions};
use homog_core::transport::{transport_error, InitialProfile, TransportOptions, TransportProblem};
use homog_core::{run_suite, Error, PeriodicScalarField, PeriodicVectorField};
use rand::{Rng, SeedableRng};

const GOLDEN: f64 = 1.618_033_988_749_895;

struct Outcome {
    pass: bool,
    detail: String,
    notes: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into(), notes: Vec::new() }
    }

    fn note(mut self, n: impl Into<String>) -> Self {
        self.notes.push(n.into());
        self
    }
}

fn ladder(from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|k| 2f64.powi(-k)).collect()
}

fn cosine_g() -> PeriodicScalarField {
    PeriodicScalarField::new("1+0.5cos", 1, |y| 1.0 + 0.5 * (2.0 * PI * y[0]).cos())
}

fn golden_shear() -> (Vec<f64>, PeriodicScalarField, PeriodicVectorField) {
    let a = vec![1.0, GOLDEN];
    let params = Params::from([("g_profile".to_string(), ParamValue::Text("cosprod".into()))]);
    let g = shear_profile(2, &params).unwrap();
    let f = PeriodicVectorField::shear(a.clone(), &g);
    (a, g, f)
}

fn vector(name: &str, params: &Params) -> PeriodicVectorField {
    match builtin(name, params).unwrap() {
        Builtin::Vector(f) => f,
        Builtin::Scalar(_) => unreachable!(),
    }
}

fn scalar(name: &str, params: &Params) -> PeriodicScalarField {
    match builtin(name, params).unwrap() {
        Builtin::Scalar(g) => g,
        Builtin::Vector(_) => unreachable!(),
    }
}

fn oracle_equivalence() -> Result<Outcome, Error> {
    let eps = 1.0 / 64.0;
    let f = PeriodicVectorField::from_scalar(&cosine_g().reciprocal());
    let adaptive = solve_oscillatory(&f, eps, (0.0, 1.0), &[0.0], 1e-12)?;
    let oracle = oracle_solve(&f, eps, (0.0, 1.0), &[0.0], eps / 2000.0)?;
    let dev = adaptive
        .sample_times(4096)
        .iter()
        .map(|&t| (adaptive.eval(t)[0] - oracle.eval(t)[0]).abs())
        .fold(0.0, f64::max);
    Ok(Outcome::new(dev <= 1e-8, format!("max |adaptive - rk4| = {dev:.2e} (limit 1e-8)")))
}

fn theorem1_rate() -> Result<Outcome, Error> {
    let opts = Rate1DOptions { slope_window: (0.9, 1.1), slack: 3.0, ..Rate1DOptions::default() };
    let r = rate_1d(&cosine_g(), 0.0, 1.0, &ladder(4, 9), &opts)?;
    Ok(Outcome::new(
        r.pass,
        format!(
            "slope {:.4} in [0.9, 1.1]; max error/delta {:.3} (limit 3)",
            r.fit.slope,
            r.max_ratio().unwrap_or(f64::NAN)
        ),
    ))
}

fn delta_estimate() -> Result<Outcome, Error> {
    let g = FastSlowField::fast_only("1+sin", |tau| 1.0 + (2.0 * PI * tau).sin());
    let d = Domain::point(0.0);
    let g0 = average_on_grid(&g, &d)?;
    let mut worst = 0.0f64;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for eps in ladder(4, 12) {
        let delta = delta_of_eps(&g, &g0, &d, 1.0, eps)?;
        worst = worst.max((delta - eps / PI).abs() / (eps / PI));
        lo = lo.min(delta / eps);
        hi = hi.max(delta / eps);
    }
    let band = lo > 0.0 && hi <= 1.02 / PI && lo >= 0.98 / PI;
    Ok(Outcome::new(
        worst <= 0.02 && band,
        format!("max |delta - eps/pi|/(eps/pi) = {worst:.2e} (limit 2%); delta/eps in [{lo:.5}, {hi:.5}]"),
    ))
}

fn bogolyubov() -> Result<Outcome, Error> {
    let g = FastSlowField::new("product", |tau, x| {
        (1.0 + 0.5 * (2.0 * PI * tau).sin()) * (1.0 + 0.1 * (2.0 * PI * x).cos())
    });
    let mut worst = 0.0f64;
    let mut all = true;
    for eps in ladder(4, 8) {
        let r = bogolyubov_compare(&g, 0.2, eps, 1.0, 3.0, 1e-10)?;
        worst = worst.max(r.sup_error / r.bound);
        all &= !r.exceeds;
    }
    Ok(Outcome::new(all, format!("max sup|theta_eps - theta_0| / Delta = {worst:.3} (limit 3)")))
}

fn corrector_identity() -> Result<Outcome, Error> {
    let mut rng = rand::rngs::StdRng::seed_from_u64(2024);
    let mut terms = vec![FourierTerm { index: vec![0, 0], re: 3.0, im: 0.0 }];
    for m1 in 0..=8i64 {
        for m2 in -8..=8i64 {
            if m1 == 0 && m2 <= 0 {
                continue;
            }
            terms.push(FourierTerm { index: vec![m1, m2], re: rng.gen_range(-0.05..0.05), im: rng.gen_range(-0.05..0.05) });
        }
    }
    let g = FourierSeries::from_terms(2, &terms)?;
    let a = [1.0, GOLDEN];
    let c = build_corrector(&g, &a, 1e-10)?;
    // independent grid evaluation of <grad phi, a> - (G - M(G))
    let mean = g.mean();
    let mut grid = 0.0f64;
    for_each_lattice_point(64, 2, |y| {
        grid = grid.max((c.phi.directional_derivative(y, &a) - (g.eval(y) - mean)).abs());
    });
    Ok(Outcome::new(
        grid <= 1e-10 && c.residual <= 1e-10,
        format!("grid residual {grid:.2e}, solver residual {:.2e} (limit 1e-10)", c.residual),
    ))
}

fn theorem2a_rate() -> Result<Outcome, Error> {
    let (a, g, _) = golden_shear();
    let opts = ShearOptions { slope_window: (0.9, 1.1), slack: 3.0, ..ShearOptions::default() };
    let start = Instant::now();
    let r = shear_convergence(&a, &g, &[0.0, 0.0], 1.0, &ladder(4, 8), &opts)?;
    let secs = start.elapsed().as_secs_f64();
    Ok(Outcome::new(
        r.pass && secs <= 300.0,
        format!(
            "slope {:.4} in [0.9, 1.1]; max error/(sup_phi eps) {:.3} (limit 3); {secs:.1} s",
            r.fit.slope,
            r.max_ratio().unwrap_or(f64::NAN)
        ),
    ))
}

fn theorem2b_chain() -> Result<Outcome, Error> {
    let f = vector("divfree_planar", &Params::new());
    let opts = PlanarOptions { t0: 0.1, slope_window: (0.85, 1.15), allow_resonant: true, ..PlanarOptions::default() };
    let (r, setup) = planar_convergence(&f, &[0.0, 0.0], 1.0, &ladder(4, 8), &opts)?;
    let pts: Vec<[f64; 2]> = (0..100).map(|i| [-1.0 + 0.031 * i as f64, 2.0 - 0.029 * i as f64]).collect();
    let defect = setup.chart.translation_defect(&pts);
    let drift = &setup.drift;
    // arithmetic averages of F over the torus by nested quadrature
    let avg = |i: usize| {
        quad::integrate(
            |x2| quad::integrate(|x1| f.eval(&[x1, x2])[i], 0.0, 1.0, 16, 1e-14).unwrap_or(f64::NAN),
            0.0,
            1.0,
            16,
            1e-13,
        )
    };
    let (m1, m2) = (avg(0)?, avg(1)?);
    let b_err = (drift.b[0] - 2.0).abs().max((drift.b[1] - 1.0).abs());
    let gamma_ok = drift.gamma_gap() <= 1e-3
        && (drift.gamma_chart - 0.5).abs() <= 1e-3
        && (drift.gamma_empirical - 0.5).abs() <= 1e-3;
    let avg_err = (m1 - 2.0).abs().max((m2 - 1.0).abs());
    let pass = defect <= 1e-10 && gamma_ok && b_err <= 1e-3 && avg_err <= 1e-3 && r.slope_ok();
    Ok(Outcome::new(
        pass,
        format!(
            "translation defect {defect:.1e}; gamma chart {:.6} empirical {:.6}; B = ({:.6}, {:.6}); slope {:.4} on [0.1, 1]",
            drift.gamma_chart, drift.gamma_empirical, drift.b[0], drift.b[1], r.fit.slope
        ),
    )
    .note(format!("quadrature averages of F: ({m1:.6}, {m2:.6})")))
}

fn liouville() -> Result<Outcome, Error> {
    let (_, g, f) = golden_shear();
    let rho = solve_liouville(&f, 16, 1e-8)?;
    let m = g.fourier().map(|s| s.mean()).unwrap_or(1.0);
    let mut rel = 0.0f64;
    for_each_lattice_point(32, 2, |y| {
        let expected = g.eval(y) / m;
        rel = rel.max((rho.eval(y) - expected).abs() / expected);
    });
    let prod = {
        let (rho, f) = (rho.clone(), f.clone());
        PeriodicVectorField::new("rhoF", 2, move |y, out| {
            f.eval_into(y, out);
            let r = rho.eval(y);
            out[0] *= r;
            out[1] *= r;
        })
    };
    let mut div = 0.0f64;
    for_each_lattice_point(16, 2, |y| div = div.max(divergence(&prod, &[y[0] + 0.013, y[1] + 0.029]).abs()));
    Ok(Outcome::new(
        rel <= 1e-6 && div <= 1e-8 && rho.residual <= 1e-8,
        format!("relative error vs G/M(G) {rel:.2e} (limit 1e-6); |div(rho F)| {div:.2e}, solver residual {:.2e} (limit 1e-8)", rho.residual),
    ))
}

fn config(text: &str) -> Result<ExperimentConfig, Error> {
    ExperimentConfig::from_toml_str(text)
}

fn example2() -> Result<Outcome, Error> {
    let cfg = config(
        "experiment = \"example2\"\np = [0.0]\nladder = { from = 4, to = 10 }\n[field]\nbuiltin = \"example2_sawtooth\"\nparams = { a = 1.0, h = 3.0, sigma = 1.0 }\n[output]\ntrajectories = false\n",
    )?;
    let out = run_experiment(&cfg)?;
    let r = &out.report;
    // mean of 1/F by quadrature against (a/h) ln((h + sigma)/sigma)
    let f = scalar("example2_sawtooth", &Params::new());
    let mean_inv = quad::integrate(|s| 1.0 / f.eval(&[s]), 0.0, 1.0, 64, 1e-14)?;
    let beta_gap = (mean_inv - 4f64.ln() / 3.0).abs();
    Ok(Outcome::new(
        r.pass && beta_gap <= 1e-12,
        format!(
            "slope {:.4} (>= 0.9); max error/(C eps) {:.3} (limit 3); |M(1/F) - ln4/3| = {beta_gap:.1e}",
            r.fit.slope,
            r.max_ratio().unwrap_or(f64::NAN)
        ),
    ))
}

fn example3() -> Result<Outcome, Error> {
    let cfg = config(
        "experiment = \"example3\"\nladder = { from = 4, to = 12 }\n[field]\nbuiltin = \"example3_almost_periodic\"\nparams = { K = 50 }\n",
    )?;
    let out = run_experiment(&cfg)?;
    let r = &out.report;
    let ratios: Vec<f64> = r.entries.iter().map(|e| e.error / e.reference.unwrap_or(f64::NAN)).collect();
    Ok(Outcome::new(
        r.pass,
        format!(
            "delta/(eps|log eps|) in [{:.3}, {:.3}], constant C = {:.3}",
            ratios.iter().copied().fold(f64::INFINITY, f64::min),
            ratios.iter().copied().fold(0.0, f64::max),
            r.slack
        ),
    ))
}

fn example5() -> Result<Outcome, Error> {
    let cfg = config(
        "experiment = \"example5\"\np = [0.3333333333333333, 0.3333333333333333]\nladder = { from = 4, to = 10 }\n[field]\nbuiltin = \"example5_gradient\"\n[tolerances]\nslope_window = [0.9, 1.1]\n",
    )?;
    let out = run_experiment(&cfg)?;
    let r = &out.report;
    Ok(Outcome::new(
        r.pass,
        format!(
            "energy slope {:.4} (>= 0.9); max energy/(C eps) {:.3} (limit 1)",
            r.fit.slope,
            r.max_ratio().unwrap_or(f64::NAN) / r.slack
        ),
    ))
}

fn transport_problem() -> Result<TransportProblem, Error> {
    let h = scalar("example4_transport_H", &Params::new());
    TransportProblem::new(h, InitialProfile::sine(1.0), TransportProblem::kronecker_grid(256), 1.0)
}

fn transport() -> Result<Outcome, Error> {
    let prob = transport_problem()?;
    let opts = TransportOptions::default();
    let (r, _) = transport_error(&prob, &ladder(4, 9), 1.0, &opts)?;
    let (r8, _) = transport_error(&prob, &ladder(4, 9), 0.8, &opts)?;
    Ok(Outcome::new(
        r.pass,
        format!(
            "t = 1: slope {:.4} in [0.9, 1.1]; max error/(Lip delta) {:.3} (limit 3)",
            r.fit.slope,
            r.max_ratio().unwrap_or(f64::NAN)
        ),
    )
    .note(format!("128 c0 = {:.6}: the fast phase c0 t / eps nearly returns to an integer at t = 1", 128.0 * prob.effective_speed()))
    .note(format!("t = 0.8: slope {:.4}, max error/(Lip delta) {:.3}", r8.fit.slope, r8.max_ratio().unwrap_or(f64::NAN))))
}

fn resonance_refusal() -> Result<Outcome, Error> {
    let a = [1.0, 0.5];
    let dio = diophantine_badness(&a, 0.5, 50)?;
    let mut g = FourierSeries::zero(2, 2);
    g.add_cos(&[0, 0], 1.0);
    g.add_cos(&[1, -2], 0.3);
    let corrector = build_corrector(&g, &a, 1e-10);
    let (_, profile, _) = golden_shear();
    let sweep = shear_convergence(&a, &profile, &[0.0, 0.0], 1.0, &ladder(4, 7), &ShearOptions::default());
    let diag = match (&corrector, &sweep) {
        (Err(Error::Resonance { m, divisor }), Err(Error::Resonance { m: m2, .. })) => {
            Some(format!("corrector refused at m = {m:?} (<a,m> = {divisor:.1e}); sweep refused at m = {m2:?}"))
        }
        _ => None,
    };
    Ok(match diag {
        Some(d) if dio.resonant => Outcome::new(true, d),
        _ => Outcome::new(false, format!("resonant flag {}, corrector {:?}, sweep ok {}", dio.resonant, corrector.err(), sweep.is_ok())),
    })
}

fn determinism() -> Result<Outcome, Error> {
    let dir = tempfile::tempdir().map_err(Error::Io)?;
    let configs = [
        "experiment = \"theorem1\"\np = [0.0]\nladder = { from = 4, to = 8 }\n[field]\ndim = 1\nfourier = [{ index = [0], re = 1.0, im = 0.0 }, { index = [1], re = 0.25, im = 0.0 }]\n",
        "experiment = \"theorem2a\"\nladder = { from = 4, to = 7 }\n[field]\nbuiltin = \"shear\"\n",
        "experiment = \"theorem2b\"\nladder = { from = 4, to = 7 }\n[field]\nbuiltin = \"divfree_planar\"\n[planar]\nallow_resonant = true\n",
        "experiment = \"example3\"\nladder = { from = 4, to = 9 }\n",
        "experiment = \"transport\"\nladder = { from = 4, to = 7 }\n[field]\nbuiltin = \"example4_transport_H\"\n[transport]\ngrid = 64\n",
    ];
    let mut identical = 0;
    let mut schedule_free = 0;
    for (k, text) in configs.iter().enumerate() {
        let out = dir.path().join(format!("run{k}"));
        let body = format!("{text}\n[output]\ndir = \"{}\"\ntrajectory_samples = 32\n", out.display());
        let mut reports = Vec::new();
        for threads in [1, 4, 4] {
            let mut cfg = config(&format!("parallelism = {threads}\n{body}"))?;
            cfg.base_dir = None;
            let outcome = run_suite(&cfg);
            if let Some(e) = outcome.error {
                return Err(e);
            }
            reports.push(std::fs::read(out.join("report.json")).map_err(Error::Io)?);
        }
        identical += usize::from(reports[1] == reports[2]);
        // parallelism is part of the config echo; compare everything else
        let strip = |b: &[u8]| {
            let mut v: serde_json::Value = serde_json::from_slice(b).unwrap();
            v["config"]["parallelism"] = serde_json::Value::Null;
            v.to_string()
        };
        schedule_free += usize::from(strip(&reports[0]) == strip(&reports[1]));
    }
    let n = configs.len();
    Ok(Outcome::new(
        identical == n && schedule_free == n,
        format!("{identical}/{n} configs bit-identical on rerun; {schedule_free}/{n} unchanged between 1 and 4 workers"),
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Result<Outcome, Error>); 14] = [
        ("oracle_equivalence", oracle_equivalence),
        ("theorem1_rate", theorem1_rate),
        ("delta_estimate", delta_estimate),
        ("bogolyubov_lemma", bogolyubov),
        ("corrector_identity", corrector_identity),
        ("theorem2a_rate", theorem2a_rate),
        ("theorem2b_chain", theorem2b_chain),
        ("liouville_solver", liouville),
        ("example2_sawtooth", example2),
        ("example3_almost_periodic", example3),
        ("example5_path_energy", example5),
        ("transport_sawtooth", transport),
        ("resonance_refusal", resonance_refusal),
        ("determinism", determinism),
    ];
    let mut passed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = check().unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
        let secs = start.elapsed().as_secs_f64();
        println!("{} {name:<26} {} [{secs:.1} s]", if outcome.pass { "PASS" } else { "FAIL" }, outcome.detail);
        for n in &outcome.notes {
            println!("     {:<26} note: {n}", "");
        }
        passed += usize::from(outcome.pass);
    }
    println!("{passed}/{} criteria passed", criteria.len());
    if passed != criteria.len() {
        std::process::exit(1);
    }
}
