//! The 1-D transport equation `∂ₜv + H(x/ε)∂ₓv = 0` solved exactly along
//! characteristics, and its travelling-wave limit `v₀(x − c⁰t)` with the
//! harmonic-mean speed `c⁰ = 1/M(1/H)`.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{PeriodicScalarField, PeriodicVectorField};
use crate::homog1d::positivity_1d;
use crate::integrate::solve_oscillatory;
use crate::quad;
use crate::report::{validate_ladder, Check, ConvergenceReport, ReferenceRate};

/// Initial profile `v₀` with a recorded Lipschitz constant.
#[derive(Clone)]
pub struct InitialProfile {
    name: String,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    lipschitz: f64,
}

impl InitialProfile {
    pub fn new(name: impl Into<String>, lipschitz: f64, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), f: Arc::new(f), lipschitz }
    }

    /// `sin(2πkx)`.
    pub fn sine(k: f64) -> Self {
        Self::new(format!("sin(2pi*{k}x)"), 2.0 * PI * k.abs(), move |x| (2.0 * PI * k * x).sin())
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("const({c})"), 0.0, move |_| c)
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

impl fmt::Debug for InitialProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InitialProfile").field("name", &self.name).field("lipschitz", &self.lipschitz).finish()
    }
}

#[derive(Clone, Debug)]
pub struct TransportProblem {
    pub h: PeriodicScalarField,
    pub v0: InitialProfile,
    pub grid: Vec<f64>,
    pub horizon: f64,
    /// `(min, max)` of `H`.
    pub bounds: (f64, f64),
}

impl TransportProblem {
    pub fn new(h: PeriodicScalarField, v0: InitialProfile, grid: Vec<f64>, horizon: f64) -> Result<Self> {
        if h.is_time_dependent() {
            return Err(Error::param("H", "transport speed must not depend on time"));
        }
        let bounds = positivity_1d(&h, 0.0)?;
        if !v0.lipschitz.is_finite() || v0.lipschitz < 0.0 {
            return Err(Error::param("v0", "Lipschitz constant must be finite and non-negative"));
        }
        if grid.is_empty() || grid.iter().any(|x| !x.is_finite()) {
            return Err(Error::param("grid", "must be a non-empty list of finite points"));
        }
        if !(horizon > 0.0) {
            return Err(Error::param("T", "horizon must be positive"));
        }
        Ok(Self { h, v0, grid, horizon, bounds })
    }

    /// `n` equispaced points on `[0, 1)`.
    pub fn uniform_grid(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 / n as f64).collect()
    }

    /// `n` points `frac((i + 1/2)·φ)` of the golden Kronecker sequence, sorted.
    /// Unlike a uniform grid, their fast phases `x/ε mod 1` stay spread out
    /// when `ε` is a power of two.
    pub fn kronecker_grid(n: usize) -> Vec<f64> {
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        let mut g: Vec<f64> = (0..n).map(|i| ((i as f64 + 0.5) * phi).fract()).collect();
        g.sort_by(f64::total_cmp);
        g
    }

    /// `c⁰ = 1/M(1/H)`.
    pub fn effective_speed(&self) -> f64 {
        1.0 / harmonic_integrand_mean(&self.h)
    }

    /// `v⁰(x, t) = v₀(x − c⁰t)`.
    pub fn limit(&self, x: f64, t: f64) -> f64 {
        self.v0.eval(x - self.effective_speed() * t)
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= 0.0 && t <= self.horizon) {
            return Err(Error::param("t", format!("must lie in [0, {}]", self.horizon)));
        }
        Ok(())
    }
}

const MEAN_PANELS: usize = 4096;

fn harmonic_integrand_mean(h: &PeriodicScalarField) -> f64 {
    let w = 1.0 / MEAN_PANELS as f64;
    let mut f = |s: f64| 1.0 / h.eval(&[s]);
    (0..MEAN_PANELS).map(|i| quad::gk15(&mut f, w * i as f64, w * (i + 1) as f64).0).sum()
}

/// `ε·(max Φ − min Φ)` with `Φ(s) = ∫₀^s (1/H − M(1/H))`, the sup over all
/// starting points of the 1-D rate function for the characteristic ODE.
pub fn uniform_delta(h: &PeriodicScalarField, eps: f64) -> f64 {
    let m = harmonic_integrand_mean(h);
    let w = 1.0 / MEAN_PANELS as f64;
    let mut f = |s: f64| 1.0 / h.eval(&[s]) - m;
    let (mut phi, mut lo, mut hi) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..MEAN_PANELS {
        // sub-panel sampling keeps the extrema of Φ inside each panel
        for j in 0..4 {
            let a = w * (i as f64 + j as f64 / 4.0);
            phi += quad::gk15(&mut f, a, a + w / 4.0).0;
            lo = lo.min(phi);
            hi = hi.max(phi);
        }
    }
    eps * (hi - lo)
}

/// `v^ε(·, t)` on the problem grid.
#[derive(Clone, Debug, Serialize)]
pub struct TransportSnapshot {
    pub eps: f64,
    pub t: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// Foot of the backward characteristic through `(x, t)`.
    pub foot: Vec<f64>,
    /// Grid points whose characteristic solve failed; `v` is NaN there.
    pub failed: Vec<bool>,
}

impl TransportSnapshot {
    pub fn failures(&self) -> usize {
        self.failed.iter().filter(|f| **f).count()
    }

    /// Rows `x,v_eps,v0,abs_diff` against the limit of `prob`.
    pub fn write_csv(&self, prob: &TransportProblem, mut w: impl Write) -> Result<()> {
        writeln!(w, "x,v_eps,v0,abs_diff")?;
        for (x, v) in self.x.iter().zip(&self.v) {
            let l = prob.limit(*x, self.t);
            writeln!(w, "{},{},{},{}", x, v, l, (v - l).abs())?;
        }
        Ok(())
    }
}

/// Foot of the characteristic through `(x, t)`: the value at time `t` of
/// `dX/ds = −H(X/ε)`, `X(0) = x`, computed as `−Y(t)` for the positive
/// reflected speed `dY/ds = H(−Y/ε)`.
pub fn characteristic_foot(h: &PeriodicScalarField, eps: f64, x: f64, t: f64, tol: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(x);
    }
    let h = h.clone();
    let reflected = PeriodicVectorField::new("H(-y)", 1, move |y, out| out[0] = h.eval(&[-y[0]]));
    let traj = solve_oscillatory(&reflected, eps, (0.0, t), &[-x], tol)?;
    Ok(-traj.last_state()[0])
}

pub fn transport_solve_eps(prob: &TransportProblem, eps: f64, t: f64, tol: f64) -> Result<TransportSnapshot> {
    prob.check_time(t)?;
    if !(eps > 0.0) {
        return Err(Error::param("eps", "must be positive"));
    }
    let feet: Vec<Option<f64>> = prob
        .grid
        .par_iter()
        .map(|&x| characteristic_foot(&prob.h, eps, x, t, tol).ok())
        .collect();
    let failed: Vec<bool> = feet.iter().map(|f| f.is_none()).collect();
    let foot: Vec<f64> = feet.iter().map(|f| f.unwrap_or(f64::NAN)).collect();
    let v = foot.iter().map(|&f| if f.is_nan() { f64::NAN } else { prob.v0.eval(f) }).collect();
    Ok(TransportSnapshot { eps, t, x: prob.grid.clone(), v, foot, failed })
}

/// Settings for [`transport_error`].
#[derive(Clone, Debug, Serialize)]
pub struct TransportOptions {
    pub tol: f64,
    pub slack: f64,
    pub slope_window: (f64, f64),
}

impl Default for TransportOptions {
    fn default() -> Self {
        Self { tol: 1e-10, slack: 3.0, slope_window: (0.9, 1.1) }
    }
}

/// Sup-grid error of `v^ε(·, t)` against `v₀(x − c⁰t)` along the ladder; the
/// reference is `Lip(v₀)·δ(ε)`.
pub fn transport_error(
    prob: &TransportProblem,
    ladder: &[f64],
    t: f64,
    opts: &TransportOptions,
) -> Result<(ConvergenceReport, Vec<TransportSnapshot>)> {
    validate_ladder(ladder)?;
    prob.check_time(t)?;
    let snaps = ladder
        .iter()
        .map(|&eps| transport_solve_eps(prob, eps, t, opts.tol))
        .collect::<Result<Vec<_>>>()?;
    if let Some(s) = snaps.iter().find(|s| s.failures() > 0) {
        return Err(Error::InvalidInput(format!(
            "{} characteristic solves failed at eps = {}",
            s.failures(),
            s.eps
        )));
    }
    let errors: Vec<f64> = snaps
        .iter()
        .map(|s| {
            s.x.iter().zip(&s.v).map(|(x, v)| (v - prob.limit(*x, t)).abs()).fold(0.0, f64::max)
        })
        .collect();
    let lip = prob.v0.lipschitz();
    let refs: Vec<f64> = ladder.iter().map(|&e| lip * uniform_delta(&prob.h, e)).collect();
    let refs_opt = if lip > 0.0 { Some(refs.as_slice()) } else { None };
    let report = ConvergenceReport::new(
        format!("transport:{}", prob.h.name()),
        ReferenceRate::Delta,
        ladder,
        &errors,
        refs_opt,
        opts.slack,
        if lip > 0.0 { Some(opts.slope_window) } else { None },
    )?
    .with_constant("lipschitz_v0", lip)
    .with_constant("effective_speed", prob.effective_speed())
    .with_check(Check::at_most("failed_characteristics", 0.0, 0.0));
    Ok((report, snaps))
}

/// Best shift `c` with `v(x) ≈ v₀(x − c)` on the snapshot grid and the
/// remaining sup deviation; `guess` seeds the search window `guess ± 1/4`.
pub fn translation_fit(snap: &TransportSnapshot, v0: &InitialProfile, guess: f64) -> (f64, f64) {
    let dev = |c: f64| {
        snap.x.iter().zip(&snap.v).map(|(x, v)| (v - v0.eval(x - c)).powi(2)).sum::<f64>()
    };
    // coarse scan, then golden section on the best bracket
    let n = 200;
    let (lo0, hi0) = (guess - 0.25, guess + 0.25);
    let step = (hi0 - lo0) / n as f64;
    let best = (0..=n)
        .map(|i| lo0 + step * i as f64)
        .min_by(|a, b| dev(*a).total_cmp(&dev(*b)))
        .unwrap_or(guess);
    let (mut a, mut b) = (best - step, best + step);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..80 {
        let c1 = b - r * (b - a);
        let c2 = a + r * (b - a);
        if dev(c1) < dev(c2) {
            b = c2;
        } else {
            a = c1;
        }
    }
    let c = 0.5 * (a + b);
    let sup = snap.x.iter().zip(&snap.v).map(|(x, v)| (v - v0.eval(x - c)).abs()).fold(0.0, f64::max);
    (c, sup)
}

/// De Giorgi's field `F = (0, sin 2πy₁)`: `u^ε(x,t) = u₀(x₁, x₂ − t·sin(2πx₁/ε))`
/// oscillates in `x₁` and has only a weak limit, so no rate applies. Rows are
/// `(ε, sup_x |u^ε − ū|)` with `ū` the weak limit `∫₀¹ u₀(x₁, x₂ − t sin 2πs) ds`
/// and `u₀ = sin(2πx₂)`.
#[derive(Clone, Debug, Serialize)]
pub struct DeGiorgiDemo {
    pub t: f64,
    pub rows: Vec<(f64, f64)>,
    pub note: String,
}

pub fn de_giorgi_demo(ladder: &[f64], t: f64, grid: usize, tol: f64) -> Result<DeGiorgiDemo> {
    let f = PeriodicVectorField::new("de_giorgi", 2, |y, out| {
        out[0] = 0.0;
        out[1] = (2.0 * PI * y[0]).sin();
    });
    let u0 = |x2: f64| (2.0 * PI * x2).sin();
    let weak = |x2: f64| {
        let mut g = |s: f64| u0(x2 - t * (2.0 * PI * s).sin());
        (0..16).map(|i| quad::gk15(&mut g, i as f64 / 16.0, (i + 1) as f64 / 16.0).0).sum::<f64>()
    };
    let pts: Vec<(f64, f64)> = (0..grid)
        .flat_map(|i| (0..grid).map(move |j| ((i as f64 + 0.5) / grid as f64, j as f64 / grid as f64)))
        .collect();
    let rows = ladder
        .iter()
        .map(|&eps| {
            let errs = pts
                .par_iter()
                .map(|&(x1, x2)| {
                    // backward characteristic: x₁ is frozen, x₂ moves at −sin(2πx₁/ε)
                    let g = PeriodicVectorField::new("de_giorgi_back", 2, {
                        let f = f.clone();
                        move |y, out| {
                            f.eval_into(y, out);
                            out[1] = -out[1];
                        }
                    });
                    let traj = solve_oscillatory(&g, eps, (0.0, t), &[x1, x2], tol)?;
                    Ok((u0(traj.last_state()[1]) - weak(x2)).abs())
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((eps, errs.into_iter().fold(0.0, f64::max)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DeGiorgiDemo {
        t,
        rows,
        note: "negative demo: sup errors do not decay with eps; no rate is certified".into(),
    })
}
