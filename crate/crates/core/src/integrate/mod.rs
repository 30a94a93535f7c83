//! Initial value problem solvers.
//!
//! [`solve_ivp`] is an adaptive Dormand–Prince 5(4) integrator with
//! fourth-order dense output and optional event localization on switching
//! surfaces. [`solve_oscillatory`] specializes it to `dX/dt = F(X/ε)`.
//! [`oracle_solve`] is an independent fixed-step RK4 integrator used as
//! ground truth in tests.

mod dopri;
mod trajectory;

pub use trajectory::{Trajectory, TrajectoryMeta};

use crate::error::{Error, Result};
use crate::field::PeriodicVectorField;

#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub initial_step: Option<f64>,
    pub max_steps: usize,
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { rtol: tol, atol: tol, ..Self::default() }
    }

    pub fn max_step(mut self, h: f64) -> Self {
        self.max_step = h;
        self
    }
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-10,
            max_step: f64::INFINITY,
            initial_step: None,
            max_steps: 50_000_000,
        }
    }
}

/// Adaptive solution of `dx/dt = rhs(t, x)` on `[t0, t1]`.
pub fn solve_ivp(
    rhs: impl FnMut(f64, &[f64], &mut [f64]),
    t_span: (f64, f64),
    x0: &[f64],
    tol: f64,
) -> Result<Trajectory> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tol must be positive, got {tol}")));
    }
    dopri::integrate(rhs, t_span.0, t_span.1, x0, &SolverOptions::with_tol(tol), &[])
}

/// [`solve_ivp`] with explicit options and switching functions. A sign change
/// of any switching function inside a step is localized by bisection and the
/// step is cut there.
pub fn solve_ivp_with(
    rhs: impl FnMut(f64, &[f64], &mut [f64]),
    t_span: (f64, f64),
    x0: &[f64],
    opts: &SolverOptions,
    switches: &[&(dyn Fn(&[f64]) -> f64 + Sync)],
) -> Result<Trajectory> {
    dopri::integrate(rhs, t_span.0, t_span.1, x0, opts, switches)
}

/// Choice of variables for [`solve_oscillatory`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum OscillatoryMode {
    /// Fast variable when ε < 1/8, direct otherwise.
    #[default]
    Auto,
    /// Integrate `dZ/ds = F(Z)` with `Z = X/ε`, `s = t/ε`, then rescale.
    Fast,
    /// Integrate `dX/dt = F(X/ε)` directly.
    Direct,
}

/// Steps per unit fast length; at least 20 steps per traversed period.
const STEPS_PER_PERIOD: f64 = 20.0;

/// Solve `dX/dt = F(X/ε)`, `X(t0) = p`.
pub fn solve_oscillatory(
    f: &PeriodicVectorField,
    eps: f64,
    t_span: (f64, f64),
    p: &[f64],
    tol: f64,
) -> Result<Trajectory> {
    solve_oscillatory_with(f, eps, t_span, p, tol, OscillatoryMode::Auto)
}

pub fn solve_oscillatory_with(
    f: &PeriodicVectorField,
    eps: f64,
    t_span: (f64, f64),
    p: &[f64],
    tol: f64,
    mode: OscillatoryMode,
) -> Result<Trajectory> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tol must be positive, got {tol}")));
    }
    if p.len() != f.dim() {
        return Err(Error::InvalidInput(format!("initial point has dimension {}, field has {}", p.len(), f.dim())));
    }
    let speed = f.sup_norm(32).max(1e-12);
    let fast = match mode {
        OscillatoryMode::Auto => eps < 0.125,
        OscillatoryMode::Fast => true,
        OscillatoryMode::Direct => false,
    };
    let switch_fns: Vec<Box<dyn Fn(&[f64]) -> f64 + Sync>> = f
        .switching()
        .iter()
        .cloned()
        .map(|s| -> Box<dyn Fn(&[f64]) -> f64 + Sync> {
            if fast {
                Box::new(move |z: &[f64]| s.value(z))
            } else {
                Box::new(move |x: &[f64]| {
                    let z: Vec<f64> = x.iter().map(|v| v / eps).collect();
                    s.value(&z)
                })
            }
        })
        .collect();
    let switches: Vec<&(dyn Fn(&[f64]) -> f64 + Sync)> = switch_fns.iter().map(|b| b.as_ref()).collect();

    if fast {
        let z0: Vec<f64> = p.iter().map(|v| v / eps).collect();
        let opts = SolverOptions {
            rtol: tol,
            atol: tol / eps,
            max_step: 1.0 / (STEPS_PER_PERIOD * speed),
            ..SolverOptions::default()
        };
        let traj = dopri::integrate(
            |_, z, out| f.eval_into(z, out),
            t_span.0 / eps,
            t_span.1 / eps,
            &z0,
            &opts,
            &switches,
        )?;
        Ok(traj.rescaled(eps))
    } else {
        let opts = SolverOptions {
            rtol: tol,
            atol: tol,
            max_step: eps / (STEPS_PER_PERIOD * speed),
            ..SolverOptions::default()
        };
        let mut z = vec![0.0; f.dim()];
        dopri::integrate(
            |_, x, out| {
                for (zi, xi) in z.iter_mut().zip(x) {
                    *zi = xi / eps;
                }
                f.eval_into(&z, out)
            },
            t_span.0,
            t_span.1,
            p,
            &opts,
            &switches,
        )
    }
}

/// Fixed-step classical RK4 on `dX/dt = F(X/ε)` with step `h_step ≤ ε/1000`.
pub fn oracle_solve(
    f: &PeriodicVectorField,
    eps: f64,
    t_span: (f64, f64),
    p: &[f64],
    h_step: f64,
) -> Result<Trajectory> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    if !(h_step > 0.0 && h_step <= eps / 1000.0 * (1.0 + 1e-12)) {
        return Err(Error::InvalidInput(format!("oracle step {h_step} must satisfy 0 < h <= eps/1000")));
    }
    let d = f.dim();
    let mut z = vec![0.0; d];
    let rhs = |x: &[f64], out: &mut [f64], z: &mut [f64]| {
        for (zi, xi) in z.iter_mut().zip(x) {
            *zi = xi / eps;
        }
        f.eval_into(z, out);
    };
    rk4_fixed(|x, out| rhs(x, out, &mut z), t_span, p, h_step)
}

/// Fixed-step RK4 for autonomous `dx/dt = rhs(x)`; the step is shrunk so that
/// an integer number of steps covers the span.
pub fn rk4_fixed(
    mut rhs: impl FnMut(&[f64], &mut [f64]),
    t_span: (f64, f64),
    x0: &[f64],
    h_step: f64,
) -> Result<Trajectory> {
    let (t0, t1) = t_span;
    if !(t1 > t0) {
        return Err(Error::InvalidInput(format!("t_span must satisfy t1 > t0, got ({t0}, {t1})")));
    }
    let d = x0.len();
    let n = ((t1 - t0) / h_step).ceil().max(1.0) as usize;
    let h = (t1 - t0) / n as f64;
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity((n + 1) * d);
    let mut derivs = Vec::with_capacity((n + 1) * d);
    let mut x = x0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut tmp = vec![0.0; d];
    rhs(&x, &mut k1);
    for i in 0..=n {
        let t = t0 + h * i as f64;
        if k1.iter().chain(&x).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteRhs { t, state: x });
        }
        times.push(t);
        states.extend_from_slice(&x);
        derivs.extend_from_slice(&k1);
        if i == n {
            break;
        }
        for j in 0..d {
            tmp[j] = x[j] + 0.5 * h * k1[j];
        }
        rhs(&tmp, &mut k2);
        for j in 0..d {
            tmp[j] = x[j] + 0.5 * h * k2[j];
        }
        rhs(&tmp, &mut k3);
        for j in 0..d {
            tmp[j] = x[j] + h * k3[j];
        }
        rhs(&tmp, &mut k4);
        for j in 0..d {
            x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        rhs(&x, &mut k1);
    }
    let meta = TrajectoryMeta {
        solver: "rk4".into(),
        rtol: 0.0,
        atol: 0.0,
        steps: n,
        rejected: 0,
        events: 0,
    };
    Ok(Trajectory::from_hermite(d, times, states, derivs, meta))
}
