//! Time averages `G⁰`, the rate function δ(ε) and the slow-system comparison.
//!
//! Fields here are written `G(τ, x)` with a fast first argument `τ` and a slow
//! scalar second argument `x`. δ(ε) is
//!
//! ```text
//! δ(ε) = sup_{x ∈ D} sup_{s ∈ [0,T]} ε |∫₀^{s/ε} [G(τ,x) − G⁰(x)] dτ|
//! ```
//!
//! and is evaluated as `ε · sup |I(σ)|` over `σ ∈ [0, T/ε]`, where `I` is the
//! running integral accumulated panel by panel and refined near its largest
//! local maxima by golden-section search.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::PeriodicScalarField;
use crate::integrate::{solve_ivp_with, SolverOptions};
use crate::quad;
use crate::report::fit_rate;

type FastSlowFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// `G(τ, x)`: fast first argument, slow second argument.
#[derive(Clone)]
pub struct FastSlowField {
    name: String,
    f: Arc<FastSlowFn>,
    x_free: bool,
}

impl std::fmt::Debug for FastSlowField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FastSlowField").field("name", &self.name).field("x_free", &self.x_free).finish()
    }
}

impl FastSlowField {
    pub fn new(name: impl Into<String>, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), f: Arc::new(f), x_free: false }
    }

    /// A field depending on the fast variable only.
    pub fn fast_only(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), f: Arc::new(move |tau, _| f(tau)), x_free: true }
    }

    /// `G(τ, x) = g(t = τ, y = x)` for a one-dimensional field with time.
    pub fn from_time_field(g: &PeriodicScalarField) -> Result<Self> {
        if g.dim() != 1 {
            return Err(Error::InvalidInput(format!("expected a 1-D field, got dimension {}", g.dim())));
        }
        let g = g.clone();
        Ok(Self { name: g.name().to_string(), f: Arc::new(move |tau, x| g.eval_at(tau, &[x])), x_free: false })
    }

    /// `G(τ, x) = g(t = x, y = τ + shift)`: the ordering that appears after
    /// inverting `dX/dt = 1/g(t, X/ε)`, where the spatial slot becomes fast.
    pub fn swapped(g: &PeriodicScalarField, shift: f64) -> Result<Self> {
        if g.dim() != 1 {
            return Err(Error::InvalidInput(format!("expected a 1-D field, got dimension {}", g.dim())));
        }
        let x_free = !g.is_time_dependent();
        let g = g.clone();
        Ok(Self {
            name: format!("{}(swapped)", g.name()),
            f: Arc::new(move |tau, x| g.eval_at(x, &[tau + shift])),
            x_free,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_x_free(&self) -> bool {
        self.x_free
    }

    pub fn eval(&self, tau: f64, x: f64) -> f64 {
        (self.f)(tau, x)
    }
}

/// Compact slow domain `D = [lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
}

/// Grid points per axis of `D` for the sup in δ(ε).
pub const DOMAIN_POINTS: usize = 64;
/// Minimum number of panels over `[0, T/ε]`.
pub const S_PANELS: usize = 512;
/// Maximum panel length in fast units.
const MAX_PANEL: f64 = 1.0 / 32.0;
/// Local maxima of the running integral refined by golden-section search.
const REFINED_MAXIMA: usize = 8;

impl Domain {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidInput(format!("invalid domain [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn point(x: f64) -> Self {
        Self { lo: x, hi: x }
    }

    /// Sample points used for the sup over `D` (one point for x-free fields or
    /// degenerate domains).
    pub fn grid(&self, g: &FastSlowField) -> Vec<f64> {
        if g.x_free || self.lo == self.hi {
            return vec![self.lo];
        }
        let n = DOMAIN_POINTS - 1;
        (0..=n).map(|i| self.lo + (self.hi - self.lo) * i as f64 / n as f64).collect()
    }
}

/// `G⁰` sampled on the grid of a domain.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampledAverage {
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
}

impl SampledAverage {
    pub fn from_fn(g: &FastSlowField, d: &Domain, f: impl Fn(f64) -> f64) -> Self {
        let xs = d.grid(g);
        let values = xs.iter().map(|&x| f(x)).collect();
        Self { xs, values }
    }

    pub fn constant(g: &FastSlowField, d: &Domain, c: f64) -> Self {
        Self::from_fn(g, d, |_| c)
    }

    fn check_grid(&self, xs: &[f64]) -> Result<()> {
        if self.xs.len() != xs.len() || self.values.len() != xs.len() {
            return Err(Error::GridMismatch { expected: xs.len(), got: self.xs.len().min(self.values.len()) });
        }
        if self.xs.iter().zip(xs).any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + b.abs())) {
            return Err(Error::GridMismatch { expected: xs.len(), got: self.xs.len() });
        }
        Ok(())
    }
}

/// `(1/ℓ) ∫₀^ℓ G(s, y) ds`, absolute error at most 1e-10.
pub fn time_average(g: &FastSlowField, y: f64, ell: f64) -> Result<f64> {
    if !(ell > 0.0 && ell.is_finite()) {
        return Err(Error::InvalidInput(format!("averaging length must be positive, got {ell}")));
    }
    let pieces = (2.0 * ell.ceil()).min(200_000.0) as usize;
    let integral = quad::integrate(|s| g.eval(s, y), 0.0, ell, pieces, 1e-10 * ell)?;
    Ok(integral / ell)
}

/// Successive ladder values must agree to this for `G⁰` to count as converged.
pub const AVERAGE_TOL: f64 = 1e-8;
const MAX_AVERAGE_LENGTH: f64 = 65_536.0;

/// `G⁰(y)` from the doubling ladder `ℓ = 1, 2, 4, …`.
pub fn average_limit(g: &FastSlowField, y: f64) -> Result<f64> {
    let mut ell = 1.0;
    let mut prev = time_average(g, y, ell)?;
    let mut diff = f64::INFINITY;
    while ell < MAX_AVERAGE_LENGTH {
        ell *= 2.0;
        let next = time_average(g, y, ell)?;
        diff = (next - prev).abs();
        if diff < AVERAGE_TOL {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::AverageNotConverged { y, diff })
}

/// `G⁰` on the grid of `d`.
pub fn average_on_grid(g: &FastSlowField, d: &Domain) -> Result<SampledAverage> {
    let xs = d.grid(g);
    let values = xs.par_iter().map(|&x| average_limit(g, x)).collect::<Result<Vec<_>>>()?;
    Ok(SampledAverage { xs, values })
}

/// How the running integral is accumulated over one panel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum PanelRule {
    Kronrod,
    Adaptive,
}

fn panel_integral(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64, rule: PanelRule) -> Result<f64> {
    match rule {
        PanelRule::Kronrod => Ok(quad::gk15(f, a, b).0),
        PanelRule::Adaptive => quad::integrate(f, a, b, 1, 1e-14),
    }
}

/// `sup_{σ ∈ [0, upper]} |∫₀^σ f|`.
fn sup_running_integral(mut f: impl FnMut(f64) -> f64, upper: f64, rule: PanelRule) -> Result<f64> {
    let n = ((upper / MAX_PANEL).ceil() as usize).max(S_PANELS);
    let w = upper / n as f64;
    let mut running = Vec::with_capacity(n + 1);
    running.push(0.0);
    let mut acc = 0.0;
    for k in 0..n {
        let a = w * k as f64;
        let b = if k + 1 == n { upper } else { a + w };
        acc += panel_integral(&mut f, a, b, rule)?;
        running.push(acc);
    }
    let mut best = running.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    // local maxima of |I| on the grid, largest first
    let mut peaks: Vec<usize> = (0..=n)
        .filter(|&k| {
            let v = running[k].abs();
            (k == 0 || v >= running[k - 1].abs()) && (k == n || v >= running[k + 1].abs())
        })
        .collect();
    peaks.sort_by(|&a, &b| running[b].abs().total_cmp(&running[a].abs()).then(a.cmp(&b)));
    peaks.truncate(REFINED_MAXIMA);

    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    for k in peaks {
        let lo_idx = k.saturating_sub(1);
        let base = running[lo_idx];
        let left = w * lo_idx as f64;
        let (mut a, mut b) = (left, (w * (k + 1) as f64).min(upper));
        let value = |s: f64, f: &mut dyn FnMut(f64) -> f64| -> Result<f64> {
            let mut g = |x: f64| f(x);
            Ok((base + panel_integral(&mut g, left, s, rule)?).abs())
        };
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let mut fc = value(c, &mut f)?;
        let mut fd = value(d, &mut f)?;
        for _ in 0..60 {
            if b - a <= 1e-13 * (1.0 + b.abs()) {
                break;
            }
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                fc = value(c, &mut f)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                fd = value(d, &mut f)?;
            }
        }
        best = best.max(fc).max(fd);
    }
    Ok(best)
}

fn validate(eps: f64, t: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidInput(format!("horizon must be positive, got {t}")));
    }
    Ok(())
}

fn sup_over_domain(g: &FastSlowField, g0: &SampledAverage, d: &Domain, upper: f64, rule: PanelRule) -> Result<f64> {
    let xs = d.grid(g);
    g0.check_grid(&xs)?;
    let sups = xs
        .par_iter()
        .zip(&g0.values)
        .map(|(&x, &avg)| sup_running_integral(|tau| g.eval(tau, x) - avg, upper, rule))
        .collect::<Result<Vec<_>>>()?;
    Ok(sups.into_iter().fold(0.0, f64::max))
}

/// δ(ε) over `x ∈ D`, `s ∈ [0, T]`. `g0` must be sampled on `d.grid(g)`.
pub fn delta_of_eps(g: &FastSlowField, g0: &SampledAverage, d: &Domain, t: f64, eps: f64) -> Result<f64> {
    validate(eps, t)?;
    Ok(eps * sup_over_domain(g, g0, d, t / eps, PanelRule::Kronrod)?)
}

/// Δ(ε, T), the bound in the slow-system comparison. Same quantity as δ(ε)
/// but accumulated with adaptive quadrature in the fast time `ξ`.
pub fn bogolyubov_bound(g: &FastSlowField, g0: &SampledAverage, d: &Domain, t: f64, eps: f64) -> Result<f64> {
    validate(eps, t)?;
    Ok(eps * sup_over_domain(g, g0, d, t / eps, PanelRule::Adaptive)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BogolyubovResult {
    pub eps: f64,
    pub sup_error: f64,
    pub bound: f64,
    pub slack: f64,
    /// `sup_error > slack·bound`.
    pub exceeds: bool,
}

/// Grid points for the interpolated `G⁰` used by the averaged system.
const AVERAGE_TABLE: usize = 257;

/// Local cubic interpolation on a uniform table.
pub(crate) fn interp_cubic(xs0: f64, h: f64, vals: &[f64], x: f64) -> f64 {
    if vals.len() == 1 {
        return vals[0];
    }
    let n = vals.len();
    let u = ((x - xs0) / h).clamp(0.0, (n - 1) as f64);
    let i = (u.floor() as usize).clamp(1, n.saturating_sub(3).max(1));
    let i0 = i - 1;
    let m = 4.min(n);
    let mut out = 0.0;
    for j in 0..m {
        let xj = (i0 + j) as f64;
        let mut l = 1.0;
        for k in 0..m {
            if k != j {
                let xk = (i0 + k) as f64;
                l *= (u - xk) / (xj - xk);
            }
        }
        out += l * vals[i0 + j];
    }
    out
}

/// Compares `dθ/dξ = εG(ξ, θ)` with `dθ/dξ = εG⁰(θ)`, `θ(0) = x0`, for
/// `0 ≤ εξ ≤ T`. Both are integrated in slow time `εξ`.
pub fn bogolyubov_compare(g: &FastSlowField, x0: f64, eps: f64, t: f64, slack: f64, tol: f64) -> Result<BogolyubovResult> {
    validate(eps, t)?;
    let max_step = eps / 20.0;
    let opts = SolverOptions { max_step, ..SolverOptions::with_tol(tol) };
    let exact = solve_ivp_with(|s, th, out| out[0] = g.eval(s / eps, th[0]), (0.0, t), &[x0], &opts, &[])?;

    // G⁰ tabulated over the range the trajectory visits
    let (lo, hi) = exact
        .times()
        .iter()
        .enumerate()
        .map(|(i, _)| exact.state(i)[0])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let pad = 0.25 * (hi - lo).max(1e-3);
    let (lo, hi) = (lo - pad, hi + pad);
    let table_n = if g.x_free { 1 } else { AVERAGE_TABLE };
    let h = if table_n > 1 { (hi - lo) / (table_n - 1) as f64 } else { 1.0 };
    let table = (0..table_n)
        .into_par_iter()
        .map(|i| average_limit(g, lo + h * i as f64))
        .collect::<Result<Vec<_>>>()?;
    let averaged = solve_ivp_with(
        |_, th, out| out[0] = interp_cubic(lo, h, &table, th[0]),
        (0.0, t),
        &[x0],
        &SolverOptions::with_tol(tol),
        &[],
    )?;
    let sup_error = exact
        .sample_times(4096)
        .iter()
        .map(|&s| (exact.eval(s)[0] - averaged.eval(s)[0]).abs())
        .fold(0.0, f64::max);

    let d = Domain::new(lo, hi)?;
    let g0 = SampledAverage::from_fn(g, &d, |x| interp_cubic(lo, h, &table, x));
    let bound = bogolyubov_bound(g, &g0, &d, t, eps)?;
    Ok(BogolyubovResult { eps, sup_error, bound, slack, exceeds: sup_error > slack * bound })
}

/// δ over an ε ladder together with `G⁰` and the fitted slope.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AveragingReport {
    pub field: String,
    pub domain: Domain,
    pub horizon: f64,
    pub g0: SampledAverage,
    pub eps: Vec<f64>,
    pub delta: Vec<f64>,
    pub bogolyubov_bound: Option<Vec<f64>>,
    pub slope: Option<f64>,
}

impl AveragingReport {
    /// Evaluates δ (and optionally Δ) on every ladder entry, in parallel,
    /// merged in ladder order.
    pub fn compute(
        g: &FastSlowField,
        g0: SampledAverage,
        domain: Domain,
        horizon: f64,
        eps: &[f64],
        with_bound: bool,
    ) -> Result<Self> {
        let delta = eps.par_iter().map(|&e| delta_of_eps(g, &g0, &domain, horizon, e)).collect::<Result<Vec<_>>>()?;
        let bound = if with_bound {
            Some(eps.par_iter().map(|&e| bogolyubov_bound(g, &g0, &domain, horizon, e)).collect::<Result<Vec<_>>>()?)
        } else {
            None
        };
        let slope = if eps.len() >= 4 && delta.iter().all(|d| *d > 0.0) { Some(fit_rate(eps, &delta)?.slope) } else { None };
        Ok(Self {
            field: g.name().to_string(),
            domain,
            horizon,
            g0,
            eps: eps.to_vec(),
            delta,
            bogolyubov_bound: bound,
            slope,
        })
    }

    /// `delta` is nondecreasing in ε up to `tol`.
    pub fn is_monotone(&self, tol: f64) -> bool {
        let mut pairs: Vec<(f64, f64)> = self.eps.iter().copied().zip(self.delta.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        pairs.windows(2).all(|w| w[0].1 <= w[1].1 + tol)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{builtin, Builtin, Params};
    use std::f64::consts::PI;

    fn periodic() -> FastSlowField {
        FastSlowField::fast_only("1+sin", |tau| 1.0 + (2.0 * PI * tau).sin())
    }

    fn two_variable() -> FastSlowField {
        FastSlowField::new("product", |tau, x| {
            (1.0 + 0.5 * (2.0 * PI * tau).sin()) * (1.0 + 0.1 * (2.0 * PI * x).cos())
        })
    }

    fn example3() -> FastSlowField {
        match builtin("example3_almost_periodic", &Params::new()).unwrap() {
            Builtin::Scalar(g) => FastSlowField::from_time_field(&g).unwrap(),
            Builtin::Vector(_) => unreachable!(),
        }
    }

    /// ∫₀^ℓ of the truncated Example 3 series, term by term.
    fn example3_integral(ell: f64, k_max: usize) -> f64 {
        (0..=k_max)
            .map(|k| {
                let q = (2 * k + 1) as f64;
                (1.0 - (ell / q).cos()) / q
            })
            .sum()
    }

    #[test]
    fn constant_average_is_exact() {
        let g = FastSlowField::new("c(y)", |_, y| 2.0 + y * y);
        assert!((time_average(&g, 1.5, 3.7).unwrap() - 4.25).abs() < 1e-14);
    }

    #[test]
    fn whole_periods_average() {
        assert!((time_average(&periodic(), 0.0, 10.0).unwrap() - 1.0).abs() < 1e-10);
        let partial = time_average(&periodic(), 0.0, 10.25).unwrap();
        let exact = 1.0 + (1.0 - (2.0 * PI * 10.25).cos()) / (2.0 * PI * 10.25);
        assert!((partial - exact).abs() < 1e-10);
    }

    #[test]
    fn example3_averages_decay() {
        let g = example3();
        let mut prev = f64::INFINITY;
        for ell in [1e2, 1e3, 1e4] {
            let v = time_average(&g, 0.0, ell).unwrap();
            let exact = example3_integral(ell, 50) / ell;
            assert!((v - exact).abs() < 1e-10, "ℓ={ell}: {v} vs {exact}");
            let bound = 2.0 * (ell.ln() + 1.0) / ell;
            assert!(v.abs() <= bound);
            assert!(v.abs() < prev);
            prev = v.abs();
        }
    }

    #[test]
    fn periodic_limit_is_cell_mean() {
        let g = FastSlowField::fast_only("cos2", |tau| 2.0 + (2.0 * PI * tau).cos().powi(2));
        assert!((average_limit(&g, 0.0).unwrap() - 2.5).abs() < 1e-10);
    }

    #[test]
    fn non_convergent_average_is_reported() {
        let g = FastSlowField::fast_only("log", |tau| (1.0 + tau).ln());
        assert!(matches!(average_limit(&g, 0.0), Err(Error::AverageNotConverged { .. })));
    }

    #[test]
    fn constant_field_has_zero_delta() {
        let g = FastSlowField::fast_only("c", |_| 3.0);
        let d = Domain::point(0.0);
        let g0 = SampledAverage::constant(&g, &d, 3.0);
        assert_eq!(delta_of_eps(&g, &g0, &d, 1.0, 0.01).unwrap(), 0.0);
    }

    #[test]
    fn sine_delta_is_eps_over_pi() {
        let g = periodic();
        let d = Domain::point(0.0);
        let g0 = SampledAverage::constant(&g, &d, 1.0);
        for k in 4..=10 {
            let eps = 2f64.powi(-k);
            let delta = delta_of_eps(&g, &g0, &d, 1.0, eps).unwrap();
            assert!((delta - eps / PI).abs() < 1e-12, "eps={eps}: {delta}");
        }
        // T shorter than half a period: the sup is at s = T
        let eps = 1.0;
        let delta = delta_of_eps(&g, &g0, &d, 0.25, eps).unwrap();
        assert!((delta - (1.0 - (2.0 * PI * 0.25).cos()) / (2.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn delta_equals_bogolyubov_bound() {
        let g = two_variable();
        let d = Domain::new(0.0, 1.0).unwrap();
        let g0 = SampledAverage::from_fn(&g, &d, |x| 1.0 + 0.1 * (2.0 * PI * x).cos());
        for eps in [1.0 / 16.0, 1.0 / 64.0] {
            let a = delta_of_eps(&g, &g0, &d, 1.0, eps).unwrap();
            let b = bogolyubov_bound(&g, &g0, &d, 1.0, eps).unwrap();
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            assert!((a - 1.1 * 0.5 * eps / PI).abs() < 1e-10);
        }
    }

    #[test]
    fn mismatched_grid_rejected() {
        let g = two_variable();
        let d = Domain::new(0.0, 1.0).unwrap();
        let g0 = SampledAverage { xs: vec![0.0, 1.0], values: vec![1.0, 1.0] };
        assert!(matches!(delta_of_eps(&g, &g0, &d, 1.0, 0.1), Err(Error::GridMismatch { .. })));
    }

    #[test]
    fn x_free_field_has_zero_comparison_error() {
        let g = FastSlowField::new("x only", |_, x| 1.0 + 0.3 * (2.0 * PI * x).sin());
        let r = bogolyubov_compare(&g, 0.1, 1.0 / 32.0, 1.0, 3.0, 1e-11).unwrap();
        assert!(r.sup_error < 1e-8, "{r:?}");
    }

    #[test]
    fn periodic_comparison_matches_closed_form() {
        let g = periodic();
        for eps in [1.0 / 16.0, 1.0 / 128.0] {
            let r = bogolyubov_compare(&g, 0.0, eps, 1.0, 3.0, 1e-11).unwrap();
            assert!(r.sup_error <= eps / PI + 1e-8, "{r:?}");
            assert!(r.sup_error >= 0.99 * eps / PI, "{r:?}");
            assert!((r.bound - eps / PI).abs() < 1e-10);
        }
    }

    #[test]
    fn two_variable_comparison_within_slack() {
        let g = two_variable();
        for k in [4, 6] {
            let eps = 2f64.powi(-k);
            let r = bogolyubov_compare(&g, 0.2, eps, 1.0, 3.0, 1e-10).unwrap();
            assert!(!r.exceeds, "{r:?}");
        }
    }

    #[test]
    fn report_is_monotone_and_linear_for_periodic_field() {
        let g = periodic();
        let d = Domain::point(0.0);
        let g0 = average_on_grid(&g, &d).unwrap();
        assert!((g0.values[0] - 1.0).abs() < 1e-10);
        let eps: Vec<f64> = (4..=9).map(|k| 2f64.powi(-k)).collect();
        let r = AveragingReport::compute(&g, g0, d, 1.0, &eps, true).unwrap();
        assert!(r.is_monotone(1e-12));
        assert!((r.slope.unwrap() - 1.0).abs() < 1e-9);
        for (e, v) in r.eps.iter().zip(&r.delta) {
            let ratio = v / e;
            assert!(ratio > 0.3 && ratio < 0.35);
        }
        let json = r.to_json().unwrap();
        assert!(json.contains("\"delta\""));
    }

    #[test]
    fn example3_delta_is_eps_log_eps() {
        let g = example3();
        let d = Domain::point(0.0);
        let g0 = SampledAverage::constant(&g, &d, 0.0);
        let mut ratios = Vec::new();
        for k in [4, 8, 12] {
            let eps = 2f64.powi(-k);
            let delta = delta_of_eps(&g, &g0, &d, 1.0, eps).unwrap();
            // sup of the closed-form running integral on a fine grid (a lower bound)
            let n = 200_000;
            let sup = (0..=n).map(|i| example3_integral(i as f64 / n as f64 / eps, 50).abs()).fold(0.0, f64::max);
            assert!(delta >= eps * sup - 1e-12 && delta <= eps * sup * (1.0 + 1e-4), "{delta} vs {}", eps * sup);
            ratios.push(delta / crate::report::eps_log_eps(eps));
        }
        assert!(ratios.iter().all(|r| *r > 0.0 && *r < 2.0), "{ratios:?}");
    }

    #[test]
    fn swapped_field_reads_time_slot_as_slow() {
        let g = PeriodicScalarField::with_time("g", 1, |t, y| t + 10.0 * y[0]);
        let s = FastSlowField::swapped(&g, 0.0).unwrap();
        assert_eq!(s.eval(0.1, 2.0), 2.0 + 1.0);
        assert!(!s.is_x_free());
        let c = FastSlowField::swapped(&PeriodicScalarField::constant(1, 2.0), 0.3).unwrap();
        assert!(c.is_x_free());
    }

    #[test]
    fn cubic_table_is_exact_for_cubics() {
        let vals: Vec<f64> = (0..10).map(|i| (i as f64 * 0.1).powi(3)).collect();
        for x in [0.0, 0.05, 0.33, 0.87, 0.9] {
            assert!((interp_cubic(0.0, 0.1, &vals, x) - x.powi(3)).abs() < 1e-13);
        }
    }
}
