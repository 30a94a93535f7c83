//! One-dimensional homogenization of `dX/dt = 1/G(t, X/ε)`.
//!
//! The ε-trajectory is strictly increasing, so it has an inverse `h^ε`
//! solving `dh/dξ = G(h, ξ/ε)`. Averaging the fast slot gives
//! `dh⁰/dξ = G⁰(h⁰)`, and `X⁰` is recovered by inverting `h⁰` back. For
//! t-free `G` this collapses to `X⁰(t) = p + t/M(G)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::averaging::{average_limit, delta_of_eps, interp_cubic, Domain, FastSlowField, SampledAverage};
use crate::error::{Error, Result};
use crate::field::{mean_over_torus, PeriodicScalarField, PeriodicVectorField};
use crate::integrate::{solve_ivp_with, solve_oscillatory, SolverOptions, Trajectory};
use crate::report::{validate_ladder, Check, ConvergenceReport, ReferenceRate};

/// Grid used to certify positivity and to take torus means in 1-D.
const MEAN_GRID: usize = 1 << 16;
const TIME_SAMPLES: usize = 64;

/// `(min, max)` of `G` over `[0,1)` and, for time-dependent `G`, over `t ∈ [0,T]`.
pub fn positivity_1d(g: &PeriodicScalarField, t_end: f64) -> Result<(f64, f64)> {
    if g.dim() != 1 {
        return Err(Error::InvalidInput(format!("expected a 1-D field, got dimension {}", g.dim())));
    }
    let n = 1024;
    let times: Vec<f64> = if g.is_time_dependent() {
        (0..=TIME_SAMPLES).map(|k| t_end * k as f64 / TIME_SAMPLES as f64).collect()
    } else {
        vec![0.0]
    };
    let (mut lo, mut hi, mut at) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for &t in &times {
        for i in 0..n {
            let y = i as f64 / n as f64;
            let v = g.try_eval_at(t, &[y])?;
            if v < lo {
                lo = v;
                at = y;
            }
            hi = hi.max(v);
        }
    }
    if lo <= 0.0 {
        return Err(Error::Positivity { min: lo, at: vec![at] });
    }
    Ok((lo, hi))
}

/// Solves `dX/dt = 1/G(t, X/ε)`, `X(0) = p`, on `[0, T]`.
pub fn solve_eps_1d(g: &PeriodicScalarField, eps: f64, p: f64, t_end: f64, tol: f64) -> Result<Trajectory> {
    let (lo, _) = positivity_1d(g, t_end)?;
    if !g.is_time_dependent() {
        let f = PeriodicVectorField::from_scalar(&g.reciprocal());
        return solve_oscillatory(&f, eps, (0.0, t_end), &[p], tol);
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    // the fast argument moves at most 1/(λε) per unit time
    let opts = SolverOptions { max_step: eps * lo / 20.0, ..SolverOptions::with_tol(tol) };
    let g = g.clone();
    solve_ivp_with(move |t, x, out| out[0] = 1.0 / g.eval_at(t, &[x[0] / eps]), (0.0, t_end), &[p], &opts, &[])
}

/// Inverse `h` of a strictly increasing trajectory: `h(X(t)) = t`.
pub fn invert_trajectory(traj: &Trajectory) -> Result<Trajectory> {
    traj.invert()
}

/// The homogenized trajectory `X⁰` and, for t-free `G`, its slope.
#[derive(Clone, Debug)]
pub struct Homogenized1D {
    pub p: f64,
    /// `1/M(G)` when `G` is t-free.
    pub beta: Option<f64>,
    /// `h⁰` as a function of `ξ`.
    pub h0: Trajectory,
    /// `X⁰` as a function of `t`, the inverse of `h⁰`.
    pub x0: Trajectory,
    /// `G⁰` tabulated with spacing `table_step` from 0 (time-dependent `G`).
    table: Vec<f64>,
    table_step: f64,
}

impl Homogenized1D {
    pub fn eval(&self, t: f64) -> f64 {
        match self.beta {
            Some(b) => self.p + b * t,
            None => self.x0.eval(t)[0],
        }
    }

    /// `G⁰` at slow time `t`.
    pub fn average(&self, t: f64) -> f64 {
        match self.beta {
            Some(b) => 1.0 / b,
            None => interp_cubic(0.0, self.table_step, &self.table, t),
        }
    }
}

const AVERAGE_TABLE: usize = 257;

/// Homogenized limit on `[0, T]`.
pub fn homogenized_1d(g: &PeriodicScalarField, p: f64, t_end: f64, tol: f64) -> Result<Homogenized1D> {
    let (lo, _) = positivity_1d(g, t_end)?;
    // ξ-range needed for h⁰ to reach T: dh⁰/dξ = G⁰ ≥ λ
    let xi_end = p + 1.05 * t_end / lo + 1e-3;
    let opts = SolverOptions::with_tol(tol);
    let (beta, h0, table, table_step) = if g.is_time_dependent() {
        let swapped = FastSlowField::swapped(g, 0.0)?;
        let t_hi = 1.1 * t_end + 1e-3;
        let h = t_hi / (AVERAGE_TABLE - 1) as f64;
        let table = (0..AVERAGE_TABLE)
            .into_par_iter()
            .map(|i| average_limit(&swapped, h * i as f64))
            .collect::<Result<Vec<_>>>()?;
        if let Some(bad) = table.iter().position(|v| *v <= 0.0) {
            return Err(Error::Positivity { min: table[bad], at: vec![h * bad as f64] });
        }
        let h0 = solve_ivp_with(|_, th, out| out[0] = interp_cubic(0.0, h, &table, th[0]), (p, xi_end), &[0.0], &opts, &[])?;
        (None, h0, table, h)
    } else {
        let m = mean_over_torus(g, MEAN_GRID)?;
        let h0 = solve_ivp_with(|_, _, out| out[0] = m, (p, xi_end), &[0.0], &opts, &[])?;
        (Some(1.0 / m), h0, Vec::new(), 0.0)
    };
    let x0 = h0.invert()?;
    Ok(Homogenized1D { p, beta, h0, x0, table, table_step })
}

/// One ε of the 1-D pipeline.
#[derive(Clone, Debug)]
pub struct Homog1DResult {
    pub eps: f64,
    pub x_eps: Trajectory,
    pub h_eps: Trajectory,
    pub sup_error: f64,
    /// `sup |h^ε(X^ε(t)) − t|`.
    pub inverse_defect: f64,
    pub delta: f64,
}

/// Settings for [`rate_1d`].
#[derive(Clone, Debug, Serialize)]
pub struct Rate1DOptions {
    pub tol: f64,
    pub slack: f64,
    pub slope_window: (f64, f64),
    /// Uniform samples over `[0, T]` added to the solver nodes for sup norms.
    pub samples: usize,
}

impl Default for Rate1DOptions {
    fn default() -> Self {
        Self { tol: 1e-10, slack: 3.0, slope_window: (0.9, 1.1), samples: 2048 }
    }
}

/// Runs the pipeline for one ε against a precomputed limit.
pub fn homog1d_run(
    g: &PeriodicScalarField,
    limit: &Homogenized1D,
    eps: f64,
    t_end: f64,
    opts: &Rate1DOptions,
) -> Result<Homog1DResult> {
    let p = limit.p;
    let x_eps = solve_eps_1d(g, eps, p, t_end, opts.tol)?;
    let h_eps = invert_trajectory(&x_eps)?;
    let ts = x_eps.sample_times(opts.samples);
    let mut sup_error = 0.0f64;
    let mut inverse_defect = 0.0f64;
    for &t in &ts {
        let x = x_eps.eval(t)[0];
        sup_error = sup_error.max((x - limit.eval(t)).abs());
        inverse_defect = inverse_defect.max((h_eps.eval(x)[0] - t).abs());
    }
    // δ(ε) over the slow domain D = [0, T] and the ξ-range actually traversed
    let swapped = FastSlowField::swapped(g, p / eps)?;
    let domain = Domain::new(0.0, t_end)?;
    let xi_range = x_eps.last_state()[0] - p;
    let g0 = SampledAverage::from_fn(&swapped, &domain, |x| limit.average(x));
    let delta = delta_of_eps(&swapped, &g0, &domain, xi_range, eps)?;
    Ok(Homog1DResult { eps, x_eps, h_eps, sup_error, inverse_defect, delta })
}

/// Sup errors `|X^ε − X⁰|` over `[0, T]` along the ladder, fitted against ε
/// and compared with `slack·δ(ε)`.
pub fn rate_1d(g: &PeriodicScalarField, p: f64, t_end: f64, ladder: &[f64], opts: &Rate1DOptions) -> Result<ConvergenceReport> {
    validate_ladder(ladder)?;
    let limit = homogenized_1d(g, p, t_end, opts.tol.min(1e-12))?;
    let runs = ladder
        .par_iter()
        .map(|&eps| homog1d_run(g, &limit, eps, t_end, opts))
        .collect::<Result<Vec<_>>>()?;
    report_from_runs(&format!("theorem1:{}", g.name()), &runs, &limit, opts)
}

pub(crate) fn report_from_runs(
    id: &str,
    runs: &[Homog1DResult],
    limit: &Homogenized1D,
    opts: &Rate1DOptions,
) -> Result<ConvergenceReport> {
    let eps: Vec<f64> = runs.iter().map(|r| r.eps).collect();
    let errors: Vec<f64> = runs.iter().map(|r| r.sup_error).collect();
    let deltas: Vec<f64> = runs.iter().map(|r| r.delta).collect();
    let defect = runs.iter().map(|r| r.inverse_defect).fold(0.0, f64::max);
    let mut report =
        ConvergenceReport::new(id, ReferenceRate::Delta, &eps, &errors, Some(&deltas), opts.slack, Some(opts.slope_window))?
            .with_check(Check::at_most("inverse_identity", defect, 1e-9));
    if let Some(b) = limit.beta {
        report = report.with_constant("beta", b);
    }
    Ok(report)
}

/// `(X(T) − p)/T` for ε = 1.
pub fn long_time_slope(g: &PeriodicScalarField, p: f64, t_end: f64, tol: f64) -> Result<f64> {
    let traj = solve_eps_1d(g, 1.0, p, t_end, tol)?;
    Ok((traj.last_state()[0] - p) / t_end)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{builtin, Builtin, Params};
    use std::f64::consts::PI;

    fn cos_profile() -> PeriodicScalarField {
        PeriodicScalarField::new("1+0.5cos", 1, |y| 1.0 + 0.5 * (2.0 * PI * y[0]).cos())
    }

    fn sawtooth() -> PeriodicScalarField {
        match builtin("example2_sawtooth", &Params::new()).unwrap() {
            Builtin::Scalar(f) => f,
            Builtin::Vector(_) => unreachable!(),
        }
    }

    #[test]
    fn constant_g_is_linear() {
        let g = PeriodicScalarField::constant(1, 2.0);
        let traj = solve_eps_1d(&g, 0.1, 0.3, 1.0, 1e-10).unwrap();
        assert!((traj.last_state()[0] - 0.8).abs() < 1e-13);
        let lim = homogenized_1d(&g, 0.3, 1.0, 1e-12).unwrap();
        assert_eq!(lim.beta, Some(0.5));
        assert!((lim.x0.eval(0.6)[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn cosine_profile_has_unit_slope() {
        let lim = homogenized_1d(&cos_profile(), 0.0, 1.0, 1e-12).unwrap();
        assert!((lim.beta.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sawtooth_effective_speed() {
        // G = 1/F_saw, so β = 1/M(1/F) = 3/ln 4
        let g = sawtooth().reciprocal();
        let lim = homogenized_1d(&g, 0.0, 1.0, 1e-12).unwrap();
        assert!((lim.beta.unwrap() - 3.0 / 4f64.ln()).abs() < 1e-8);
        assert!((lim.beta.unwrap() - 2.164043).abs() < 1e-6);
    }

    #[test]
    fn non_positive_profile_rejected() {
        let g = PeriodicScalarField::new("cos", 1, |y| (2.0 * PI * y[0]).cos());
        assert!(matches!(solve_eps_1d(&g, 0.1, 0.0, 1.0, 1e-8), Err(Error::Positivity { .. })));
        assert!(matches!(homogenized_1d(&g, 0.0, 1.0, 1e-8), Err(Error::Positivity { .. })));
    }

    #[test]
    fn sawtooth_inversion_matches_segment_formula() {
        // on the rising piece dX/dt = 6X/ε + 1 has inverse t = (ε/6)·ln((X + ε/6)/(p + ε/6))
        let eps = 1.0 / 8.0;
        let g = sawtooth().reciprocal();
        let p = 0.01 * eps;
        let traj = solve_eps_1d(&g, eps, p, 0.025, 1e-12).unwrap();
        let h = invert_trajectory(&traj).unwrap();
        let c = eps / 6.0;
        for k in 0..=20 {
            let xi = p + (0.4 * eps - p) * k as f64 / 20.0;
            let exact = c * ((xi + c) / (p + c)).ln();
            assert!((h.eval(xi)[0] - exact).abs() < 1e-11, "ξ={xi}");
        }
    }

    #[test]
    fn round_trip_identity() {
        let lim = homogenized_1d(&cos_profile(), 0.2, 1.0, 1e-12).unwrap();
        let run = homog1d_run(&cos_profile(), &lim, 1.0 / 64.0, 1.0, &Rate1DOptions::default()).unwrap();
        assert!(run.inverse_defect < 1e-9, "{}", run.inverse_defect);
        assert!(run.sup_error <= 3.0 * run.delta);
    }

    #[test]
    fn long_time_slope_matches_beta() {
        let g = cos_profile();
        let slope = long_time_slope(&g, 0.0, 1000.0, 1e-10).unwrap();
        assert!((slope - 1.0).abs() < 1e-3);
        let saw = sawtooth().reciprocal();
        let slope = long_time_slope(&saw, 0.0, 1000.0, 1e-10).unwrap();
        assert!((slope - 3.0 / 4f64.ln()).abs() < 1e-3);
    }

    #[test]
    fn constant_rate_is_exact() {
        let g = PeriodicScalarField::constant(1, 1.5);
        let ladder: Vec<f64> = (4..=7).map(|k| 2f64.powi(-k)).collect();
        let r = rate_1d(&g, 0.0, 1.0, &ladder, &Rate1DOptions::default()).unwrap();
        assert!(r.entries.iter().all(|e| e.error < 1e-10));
    }

    #[test]
    fn ladder_validation() {
        let g = cos_profile();
        let o = Rate1DOptions::default();
        assert!(rate_1d(&g, 0.0, 1.0, &[0.1, 0.05, 0.025], &o).is_err());
        assert!(rate_1d(&g, 0.0, 1.0, &[0.1, 0.05, 0.06, 0.01], &o).is_err());
    }

    #[test]
    fn time_dependent_limit_follows_average() {
        // G(t, y) = (1 + t)(1 + 0.5 cos 2πy): G⁰(t) = 1 + t, so h⁰(ξ) solves
        // dh/dξ = 1 + h, h(0) = 0, and X⁰(t) = ln(1 + t)
        let g = PeriodicScalarField::with_time("ramp", 1, |t, y| (1.0 + t) * (1.0 + 0.5 * (2.0 * PI * y[0]).cos()));
        let lim = homogenized_1d(&g, 0.0, 1.0, 1e-12).unwrap();
        assert!(lim.beta.is_none());
        for t in [0.1, 0.5, 1.0] {
            assert!((lim.eval(t) - (1.0 + t).ln()).abs() < 1e-7, "t={t}");
        }
        let run = homog1d_run(&g, &lim, 1.0 / 64.0, 1.0, &Rate1DOptions::default()).unwrap();
        assert!(run.sup_error < 3.0 * run.delta, "{} vs {}", run.sup_error, run.delta);
    }
}
