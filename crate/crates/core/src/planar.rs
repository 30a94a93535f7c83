//! Planar fields with an invariant density: Liouville solve, Tassa chart,
//! rotation number and the effective drift `B` with `X^ε(t) ≈ p + Bt`.
//!
//! With `b = ρF` divergence free, the chart
//! `y₁ = (1/b̄₂)∫₀^{x₁} b₂(ξ,0)dξ`, `y₂ = (1/b̄₁)∫₀^{x₂} b₁(x₁,ξ)dξ`
//! turns `dx/dt = F(x)` into the shear flow `dy/dt = (1,γ)/G(y)`.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{for_each_lattice_point, norm, FourierSeries, PeriodicScalarField, PeriodicVectorField};
use crate::integrate::{oracle_solve, solve_ivp, solve_oscillatory, Trajectory};
use crate::quad;
use crate::report::{validate_ladder, fit_rate, Check, ConvergenceReport, ReferenceRate};
use crate::shear::diophantine_badness;

pub const DEFAULT_LIOUVILLE_DEGREE: usize = 16;
/// Finite-difference step for `div F`.
const DIV_STEP: f64 = 1e-3;
/// Quadrature panels per unit length.
const PANELS_PER_UNIT: f64 = 8.0;
/// Divisor below which `(1, γ)` is reported resonant for a computed `γ`.
pub const PLANAR_RESONANCE_TOL: f64 = 1e-9;

/// Sixth-order central difference of `div F` at `x`.
pub fn divergence(f: &PeriodicVectorField, x: &[f64]) -> f64 {
    const W: [f64; 3] = [45.0, -9.0, 1.0];
    let d = f.dim();
    let mut y = x.to_vec();
    let mut out = vec![0.0; d];
    let mut div = 0.0;
    for i in 0..d {
        let mut s = 0.0;
        for (k, w) in W.iter().enumerate() {
            let h = DIV_STEP * (k + 1) as f64;
            y[i] = x[i] + h;
            f.eval_into(&y, &mut out);
            let fp = out[i];
            y[i] = x[i] - h;
            f.eval_into(&y, &mut out);
            s += w * (fp - out[i]);
        }
        y[i] = x[i];
        div += s / (60.0 * DIV_STEP);
    }
    div
}

/// Half-lattice `0 < |m|_∞ ≤ n` with the first non-zero entry positive.
fn half_lattice(dim: usize, n: i64) -> Vec<Vec<i64>> {
    let side = (2 * n + 1) as usize;
    let mut out = Vec::new();
    for idx in 0..side.pow(dim as u32) {
        let mut r = idx;
        let mut m = vec![0i64; dim];
        for k in (0..dim).rev() {
            m[k] = (r % side) as i64 - n;
            r /= side;
        }
        if matches!(m.iter().find(|&&k| k != 0), Some(&k) if k > 0) {
            out.push(m);
        }
    }
    out
}

/// Real trigonometric sum `Σ α_m cos(2π⟨m,y⟩) + β_m sin(2π⟨m,y⟩)`.
#[derive(Clone, Debug, Default)]
struct TrigSum {
    terms: Vec<(Vec<i64>, f64, f64)>,
}

impl TrigSum {
    fn eval(&self, y: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(m, a, b)| {
                let th = 2.0 * PI * m.iter().zip(y).map(|(&k, &x)| k as f64 * x).sum::<f64>();
                let (s, c) = th.sin_cos();
                a * c + b * s
            })
            .sum()
    }

    fn to_series(&self, dim: usize) -> FourierSeries {
        let mut s = FourierSeries::zero(dim, 0);
        for (m, a, b) in &self.terms {
            s.add_cos(m, *a);
            s.add_sin(m, *b);
        }
        s
    }
}

/// `ρ = exp(u − c)` with `mean(ρ) = 1`.
#[derive(Clone, Debug, Serialize)]
pub struct InvariantDensity {
    /// Fourier coefficients of `u`.
    pub u: FourierSeries,
    /// Normalizing constant `c`.
    pub log_norm: f64,
    /// Sup of `|div(ρF)|` on a staggered grid.
    pub residual: f64,
    pub degree: usize,
    pub tol: f64,
    #[serde(skip)]
    trig: Arc<TrigSum>,
}

impl InvariantDensity {
    /// `ρ ≡ 1`.
    pub fn uniform(dim: usize) -> Self {
        Self {
            u: FourierSeries::zero(dim, 0),
            log_norm: 0.0,
            residual: 0.0,
            degree: 0,
            tol: 0.0,
            trig: Arc::new(TrigSum::default()),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.trig.eval(x) - self.log_norm).exp()
    }

    pub fn is_uniform(&self) -> bool {
        self.trig.terms.is_empty()
    }

    pub fn field(&self) -> PeriodicScalarField {
        let this = self.clone();
        PeriodicScalarField::new("rho", self.u.dim(), move |y| this.eval(y))
    }
}

/// Least-squares solve of `⟨∇u, F⟩ = −div F` over Fourier modes of `u` up to
/// `max_degree`, giving `div(e^u F) = 0`.
pub fn solve_liouville(f: &PeriodicVectorField, max_degree: usize, tol: f64) -> Result<InvariantDensity> {
    let d = f.dim();
    if max_degree == 0 {
        return Err(Error::param("max_degree", "must be at least 1"));
    }
    let n = (4 * max_degree).max(16);
    let mut points = Vec::with_capacity(n.pow(d as u32));
    for_each_lattice_point(n, d, |y| points.push(y.to_vec()));
    let data: Vec<(Vec<f64>, f64)> = points.par_iter().map(|y| (f.eval(y), divergence(f, y))).collect();
    let div_sup = data.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max);
    if !div_sup.is_finite() {
        return Err(Error::InvalidInput("field divergence is not finite".into()));
    }
    if div_sup <= 1e-13 {
        return Ok(InvariantDensity { residual: div_sup, degree: max_degree, tol, ..InvariantDensity::uniform(d) });
    }

    let modes = half_lattice(d, max_degree as i64);
    let cols = 2 * modes.len();
    let rows = points.len();
    let mut a = DMatrix::<f64>::zeros(rows, cols);
    let mut rhs = DVector::<f64>::zeros(rows);
    for (r, (y, (fy, div))) in points.iter().zip(&data).enumerate() {
        rhs[r] = -div;
        for (j, m) in modes.iter().enumerate() {
            let th = 2.0 * PI * m.iter().zip(y).map(|(&k, &x)| k as f64 * x).sum::<f64>();
            let (s, c) = th.sin_cos();
            let mf = 2.0 * PI * m.iter().zip(fy).map(|(&k, &v)| k as f64 * v).sum::<f64>();
            a[(r, 2 * j)] = -mf * s;
            a[(r, 2 * j + 1)] = mf * c;
        }
    }
    // unit column scaling
    let scale: Vec<f64> = (0..cols).map(|j| a.column(j).norm().max(1e-300)).collect();
    for (j, s) in scale.iter().enumerate() {
        a.column_mut(j).scale_mut(1.0 / s);
    }
    // ridge term picks the small solution when the flow has extra invariants
    let mut normal = a.tr_mul(&a);
    for j in 0..cols {
        normal[(j, j)] += 1e-12;
    }
    let chol = normal
        .cholesky()
        .ok_or_else(|| Error::Liouville { degree: max_degree, residual: f64::NAN, tol })?;
    let mut x = chol.solve(&a.tr_mul(&rhs));
    for _ in 0..3 {
        let r = &rhs - &a * &x;
        x += chol.solve(&a.tr_mul(&r));
    }
    let terms: Vec<(Vec<i64>, f64, f64)> = modes
        .into_iter()
        .enumerate()
        .map(|(j, m)| (m, x[2 * j] / scale[2 * j], x[2 * j + 1] / scale[2 * j + 1]))
        .filter(|(_, c, s)| c.abs() > 1e-18 || s.abs() > 1e-18)
        .collect();
    let trig = TrigSum { terms };

    let norm_grid = (8 * max_degree).max(64);
    let mut pts = Vec::new();
    for_each_lattice_point(norm_grid, d, |y| pts.push(y.to_vec()));
    // collected before summing so the result does not depend on thread scheduling
    let vals: Vec<f64> = pts.par_iter().map(|y| trig.eval(y).exp()).collect();
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let log_norm = mean.ln();

    // residual on the staggered grid, away from the collocation points
    let half = 0.5 / n as f64;
    let u = trig.to_series(d);
    let residual = points
        .par_iter()
        .map(|y| {
            let z: Vec<f64> = y.iter().map(|v| v + half).collect();
            let fz = f.eval(&z);
            let grad = u.gradient(&z);
            let rho = (trig.eval(&z) - log_norm).exp();
            let lhs: f64 = grad.iter().zip(&fz).map(|(g, v)| g * v).sum::<f64>() + divergence(f, &z);
            (rho * lhs).abs()
        })
        .reduce(|| 0.0, f64::max);
    if !(residual <= tol) {
        return Err(Error::Liouville { degree: max_degree, residual, tol });
    }
    Ok(InvariantDensity { u, log_norm, residual, degree: max_degree, tol, trig: Arc::new(trig) })
}

/// Tassa coordinates for a planar field with positive `b = ρF`.
#[derive(Clone)]
pub struct TassaChart {
    field: PeriodicVectorField,
    density: InvariantDensity,
    /// `(b̄₁, b̄₂)`.
    pub b_bar: [f64; 2],
    /// Rotation number from the flow-derivative ratio through the chart.
    pub gamma: f64,
    /// Largest deviation of the sampled ratios from `gamma`.
    pub gamma_spread: f64,
    /// Spread of `∫₀¹ b₁(x₁,ξ)dξ` over `x₁` (and symmetrically).
    pub bbar_spread: f64,
    /// Grid mean of `ρ`.
    pub rho_mean: f64,
    pub grid_n: usize,
}

impl std::fmt::Debug for TassaChart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TassaChart")
            .field("field", &self.field.name())
            .field("b_bar", &self.b_bar)
            .field("gamma", &self.gamma)
            .field("gamma_spread", &self.gamma_spread)
            .field("bbar_spread", &self.bbar_spread)
            .finish()
    }
}

fn line_integral(mut f: impl FnMut(f64) -> f64, upper: f64) -> f64 {
    let pieces = (upper.abs() * PANELS_PER_UNIT).ceil().max(1.0) as usize;
    // smooth periodic integrands: GK15 on these panels is at rounding level
    quad::integrate(&mut f, 0.0, upper, pieces, 1e-13).unwrap_or_else(|_| {
        let w = upper / pieces as f64;
        (0..pieces).map(|i| quad::gk15(&mut f, w * i as f64, w * (i + 1) as f64).0).sum()
    })
}

/// Root of the increasing map `phi` on `[0,1]` with `phi(0) ≤ target ≤ phi(1)`,
/// by Newton steps kept inside a shrinking bracket.
fn monotone_root(target: f64, phi: impl Fn(f64) -> f64, dphi: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut x = target.clamp(0.0, 1.0);
    for _ in 0..100 {
        let r = phi(x) - target;
        if r == 0.0 {
            return x;
        }
        if r > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let mut next = x - r / dphi(x);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() < 1e-15 || hi - lo < 1e-15 {
            return next;
        }
        x = next;
    }
    x
}

impl TassaChart {
    pub fn b(&self, x: &[f64]) -> [f64; 2] {
        let mut out = [0.0; 2];
        self.field.eval_into(x, &mut out);
        let r = self.density.eval(x);
        [r * out[0], r * out[1]]
    }

    pub fn density(&self) -> &InvariantDensity {
        &self.density
    }

    fn f1(&self, x1: f64) -> f64 {
        line_integral(|s| self.b(&[s, 0.0])[1], x1) / self.b_bar[1]
    }

    fn f2(&self, x1: f64, x2: f64) -> f64 {
        line_integral(|s| self.b(&[x1, s])[0], x2) / self.b_bar[0]
    }

    /// `y = f(x)`.
    pub fn f(&self, x: &[f64]) -> [f64; 2] {
        [self.f1(x[0]), self.f2(x[0], x[1])]
    }

    /// Inverse chart; each coordinate is found by a 1-D monotone solve after
    /// reducing `y` to the unit cell with the translation relations.
    pub fn g(&self, y: &[f64]) -> [f64; 2] {
        let k1 = y[0].floor();
        let x1 = k1
            + monotone_root(y[0] - k1, |s| self.f1(s), |s| self.b(&[s, 0.0])[1] / self.b_bar[1]);
        let k2 = y[1].floor();
        let x2 = k2
            + monotone_root(y[1] - k2, |s| self.f2(x1, s), |s| self.b(&[x1, s])[0] / self.b_bar[0]);
        [x1, x2]
    }

    /// `det Df(x) = (b₁(x)/b̄₁)·(b₂(x₁,0)/b̄₂)`.
    pub fn jacobian(&self, x: &[f64]) -> f64 {
        self.b(x)[0] / self.b_bar[0] * self.b(&[x[0], 0.0])[1] / self.b_bar[1]
    }

    /// `Df(x)` by fourth-order central differences.
    pub fn jacobian_matrix_numeric(&self, x: &[f64]) -> [[f64; 2]; 2] {
        let h = 1e-3;
        let mut j = [[0.0; 2]; 2];
        for c in 0..2 {
            let at = |s: f64| {
                let mut z = [x[0], x[1]];
                z[c] += s;
                self.f(&z)
            };
            let (p1, m1, p2, m2) = (at(h), at(-h), at(2.0 * h), at(-2.0 * h));
            for r in 0..2 {
                j[r][c] = (8.0 * (p1[r] - m1[r]) - (p2[r] - m2[r])) / (12.0 * h);
            }
        }
        j
    }

    pub fn jacobian_numeric(&self, x: &[f64]) -> f64 {
        let j = self.jacobian_matrix_numeric(x);
        j[0][0] * j[1][1] - j[0][1] * j[1][0]
    }

    /// `1/G(y) = (b₂(g₁(y),0)/b̄₂)·F₁(g(y))`.
    pub fn profile(&self, y: &[f64]) -> f64 {
        let x = self.g(y);
        let mut fx = [0.0; 2];
        self.field.eval_into(&x, &mut fx);
        self.b_bar[1] / (self.b(&[x[0], 0.0])[1] * fx[0])
    }

    /// `G` as a field on the y-torus.
    pub fn profile_field(&self) -> PeriodicScalarField {
        let chart = self.clone();
        PeriodicScalarField::new("tassa_profile", 2, move |y| chart.profile(y))
    }

    /// `M(G) = ∫ρ/b̄₁`, the y-mean of the profile written in x-coordinates.
    pub fn profile_mean(&self) -> f64 {
        self.rho_mean / self.b_bar[0]
    }

    /// Largest violation of the four translation relations at `points`.
    pub fn translation_defect(&self, points: &[[f64; 2]]) -> f64 {
        points
            .par_iter()
            .map(|x| {
                let y = self.f(x);
                let e1 = self.f(&[x[0] + 1.0, x[1]]);
                let e2 = self.f(&[x[0], x[1] + 1.0]);
                [
                    (e1[0] - y[0] - 1.0).abs(),
                    (e2[0] - y[0]).abs(),
                    (e1[1] - y[1]).abs(),
                    (e2[1] - y[1] - 1.0).abs(),
                ]
                .into_iter()
                .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }

    /// `max |g(f(x)) − x|` over `points`.
    pub fn inverse_defect(&self, points: &[[f64; 2]]) -> f64 {
        points
            .par_iter()
            .map(|x| {
                let back = self.g(&self.f(x));
                ((back[0] - x[0]).abs()).max((back[1] - x[1]).abs())
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Ratio `(dy₂/dt)/(dy₁/dt)` of the pushed-forward flow at `x`.
    pub fn flow_slope(&self, x: &[f64]) -> f64 {
        let j = self.jacobian_matrix_numeric(x);
        let fx = self.field.eval(x);
        let dy1 = j[0][0] * fx[0] + j[0][1] * fx[1];
        let dy2 = j[1][0] * fx[0] + j[1][1] * fx[1];
        dy2 / dy1
    }

    /// Sup over interior nodes of `|dy/dt − (1,γ)/G(y)|` along `traj`, a
    /// solution of `dx/dt = F(x)`. `dy/dt` is a central difference of `f`
    /// along the nodes; `G(y)` is evaluated at `x` directly.
    pub fn conjugacy_residual(&self, traj: &Trajectory, stride: usize) -> f64 {
        let n = traj.len();
        let stride = stride.max(1);
        let idx: Vec<usize> = (2..n.saturating_sub(2)).step_by(stride).collect();
        idx.par_iter()
            .map(|&i| {
                let t = traj.times();
                let h = t[i + 1] - t[i];
                let y = |k: usize| self.f(traj.state(k));
                let (p1, m1, p2, m2) = (y(i + 1), y(i - 1), y(i + 2), y(i - 2));
                let x = traj.state(i);
                let mut fx = [0.0; 2];
                self.field.eval_into(x, &mut fx);
                let inv_g = self.b(&[x[0], 0.0])[1] / self.b_bar[1] * fx[0];
                let a = [1.0, self.gamma];
                (0..2)
                    .map(|r| {
                        let dy = (8.0 * (p1[r] - m1[r]) - (p2[r] - m2[r])) / (12.0 * h);
                        (dy - a[r] * inv_g).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Periodic part `ψ` of the stream function `φ = ψ + q·x` with
    /// `b = (∂₂φ, −∂₁φ)` and `q = (−b̄₂, b̄₁)`.
    pub fn stream_function(&self, x: &[f64]) -> f64 {
        let phi = line_integral(|s| self.b(&[0.0, s])[0], x[1]) - line_integral(|s| self.b(&[s, x[1]])[1], x[0]);
        phi + self.b_bar[1] * x[0] - self.b_bar[0] * x[1]
    }

    /// Rows `x1,x2,f1,f2,jacobian,g1,g2,G` on an `n × n` grid; the `g` and `G`
    /// columns are evaluated at `y = (x1, x2)`.
    pub fn write_csv(&self, n: usize, mut w: impl Write) -> Result<()> {
        let mut pts = Vec::new();
        for_each_lattice_point(n, 2, |x| pts.push([x[0], x[1]]));
        let rows: Vec<String> = pts
            .par_iter()
            .map(|x| {
                let y = self.f(x);
                let g = self.g(x);
                format!(
                    "{},{},{},{},{},{},{},{}",
                    x[0],
                    x[1],
                    y[0],
                    y[1],
                    self.jacobian(x),
                    g[0],
                    g[1],
                    self.profile(x)
                )
            })
            .collect();
        writeln!(w, "x1,x2,f1,f2,jacobian,g1,g2,G")?;
        for r in rows {
            writeln!(w, "{r}")?;
        }
        Ok(())
    }
}

/// Builds the chart for a planar field with density `rho`. `grid_n` sets the
/// positivity grid and the number of sample points for `γ`.
pub fn build_tassa_chart(f: &PeriodicVectorField, rho: &InvariantDensity, grid_n: usize) -> Result<TassaChart> {
    if f.dim() != 2 {
        return Err(Error::Chart(format!("planar chart needs d = 2, got {}", f.dim())));
    }
    if grid_n < 4 {
        return Err(Error::param("grid_n", "must be at least 4"));
    }
    let mut chart = TassaChart {
        field: f.clone(),
        density: rho.clone(),
        b_bar: [1.0, 1.0],
        gamma: 0.0,
        gamma_spread: 0.0,
        bbar_spread: 0.0,
        rho_mean: 0.0,
        grid_n,
    };
    let mut pts = Vec::new();
    for_each_lattice_point(grid_n, 2, |x| pts.push([x[0], x[1]]));
    let vals: Vec<([f64; 2], f64)> = pts.par_iter().map(|x| (chart.b(x), chart.density.eval(x))).collect();
    let mut b_min = [f64::INFINITY; 2];
    let mut b_max = [f64::NEG_INFINITY; 2];
    let mut rho_sum = 0.0;
    for (b, r) in &vals {
        for i in 0..2 {
            b_min[i] = b_min[i].min(b[i]);
            b_max[i] = b_max[i].max(b[i]);
        }
        rho_sum += r;
    }
    for i in 0..2 {
        if !(b_min[i] > 0.0) || !b_max[i].is_finite() {
            return Err(Error::Chart(format!(
                "b_{} = rho*F_{} is not positive on the grid (min {:e})",
                i + 1,
                i + 1,
                b_min[i]
            )));
        }
    }
    chart.rho_mean = rho_sum / pts.len() as f64;

    let samples: Vec<f64> = (0..8).map(|k| k as f64 / 8.0).collect();
    let bbar1: Vec<f64> = samples.par_iter().map(|&s| line_integral(|t| chart.b(&[s, t])[0], 1.0)).collect();
    let bbar2: Vec<f64> = samples.par_iter().map(|&s| line_integral(|t| chart.b(&[t, s])[1], 1.0)).collect();
    let spread = |v: &[f64]| v.iter().fold(f64::NEG_INFINITY, |m, x| m.max(*x)) - v.iter().fold(f64::INFINITY, |m, x| m.min(*x));
    chart.bbar_spread = spread(&bbar1).max(spread(&bbar2));
    chart.b_bar = [bbar1[0], bbar2[0]];

    let gpts: Vec<[f64; 2]> = {
        let m = grid_n.min(8);
        let mut v = Vec::new();
        // offset so that samples avoid the chart's base lines
        for_each_lattice_point(m, 2, |x| v.push([x[0] + 0.37 / m as f64, x[1] + 0.61 / m as f64]));
        v
    };
    let slopes: Vec<f64> = gpts.par_iter().map(|x| chart.flow_slope(x)).collect();
    let gamma = slopes.iter().sum::<f64>() / slopes.len() as f64;
    chart.gamma = gamma;
    chart.gamma_spread = slopes.iter().map(|s| (s - gamma).abs()).fold(0.0, f64::max);
    Ok(chart)
}

/// Empirical rotation number and drift of the ε = 1 flow.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RotationEstimate {
    pub gamma: f64,
    pub gamma_t: f64,
    pub gamma_2t: f64,
    /// Richardson-extrapolated `(X(T) − p)/T`.
    pub drift: [f64; 2],
    pub t_long: f64,
}

/// `(x₂(T) − p₂)/(x₁(T) − p₁)` at `T` and `2T`, extrapolated as `2γ_{2T} − γ_T`.
pub fn rotation_number_empirical(f: &PeriodicVectorField, p: &[f64], t_long: f64, tol: f64) -> Result<RotationEstimate> {
    if f.dim() != 2 || p.len() != 2 {
        return Err(Error::InvalidInput("rotation number needs a planar field and point".into()));
    }
    if !(t_long > 0.0) {
        return Err(Error::param("t_long", "must be positive"));
    }
    let mut lo = [f64::INFINITY; 2];
    let mut out = [0.0; 2];
    for_each_lattice_point(64, 2, |y| {
        f.eval_into(y, &mut out);
        lo = [lo[0].min(out[0]), lo[1].min(out[1])];
    });
    if !(lo[0] > 0.0 && lo[1] > 0.0) {
        return Err(Error::Positivity { min: lo[0].min(lo[1]), at: Vec::new() });
    }
    let field = f.clone();
    let traj = solve_ivp(move |_, x, o| field.eval_into(x, o), (0.0, 2.0 * t_long), p, tol)?;
    let a = traj.eval(t_long);
    let b = traj.last_state();
    let gamma_t = (a[1] - p[1]) / (a[0] - p[0]);
    let gamma_2t = (b[1] - p[1]) / (b[0] - p[0]);
    let drift = [
        2.0 * (b[0] - p[0]) / (2.0 * t_long) - (a[0] - p[0]) / t_long,
        2.0 * (b[1] - p[1]) / (2.0 * t_long) - (a[1] - p[1]) / t_long,
    ];
    Ok(RotationEstimate { gamma: 2.0 * gamma_2t - gamma_t, gamma_t, gamma_2t, drift, t_long })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EffectiveDrift {
    pub b: [f64; 2],
    pub gamma_chart: f64,
    pub gamma_empirical: f64,
    pub profile_mean: f64,
    pub long_time_drift: [f64; 2],
    pub resonant: bool,
    /// Smallest `|m₁ + γm₂|` over `|m|_∞ ≤ 50` and where it occurs.
    pub min_divisor: f64,
    pub min_divisor_at: Vec<i64>,
    pub warnings: Vec<String>,
}

impl EffectiveDrift {
    pub fn gamma_gap(&self) -> f64 {
        (self.gamma_chart - self.gamma_empirical).abs()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `B = (1, γ)/M(G)` from the chart, cross-checked against the long-time flow.
pub fn effective_drift(chart: &TassaChart, empirical: &RotationEstimate) -> Result<EffectiveDrift> {
    let m = chart.profile_mean();
    let gamma = chart.gamma;
    let b = [1.0 / m, gamma / m];
    let mut warnings = Vec::new();
    let gap = (gamma - empirical.gamma).abs();
    if gap > 1e-3 {
        warnings.push(format!("chart gamma {gamma} and empirical gamma {} differ by {gap:e}", empirical.gamma));
    }
    let dio = diophantine_badness(&[1.0, gamma], 0.5, 50)?;
    let resonant = dio.min_divisor < PLANAR_RESONANCE_TOL;
    if resonant {
        warnings.push(format!(
            "rotation number {gamma} is rational (m = {:?}); the flow is not ergodic and the limit may depend on p",
            dio.min_divisor_at
        ));
    }
    let drift_gap = ((b[0] - empirical.drift[0]).abs()).max((b[1] - empirical.drift[1]).abs());
    if drift_gap > 1e-3 {
        warnings.push(format!("chart drift {b:?} and long-time drift {:?} differ by {drift_gap:e}", empirical.drift));
    }
    Ok(EffectiveDrift {
        b,
        gamma_chart: gamma,
        gamma_empirical: empirical.gamma,
        profile_mean: m,
        long_time_drift: empirical.drift,
        resonant,
        min_divisor: dio.min_divisor,
        min_divisor_at: dio.min_divisor_at,
        warnings,
    })
}

/// Settings for [`planar_convergence`].
#[derive(Clone, Debug, Serialize)]
pub struct PlanarOptions {
    pub tol: f64,
    pub t0: f64,
    pub slope_window: (f64, f64),
    pub liouville_degree: usize,
    pub liouville_tol: f64,
    pub grid_n: usize,
    pub t_long: f64,
    pub samples: usize,
    /// Certify a rate even when `γ` is rational.
    pub allow_resonant: bool,
}

impl Default for PlanarOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            t0: 0.1,
            slope_window: (0.85, 1.15),
            liouville_degree: DEFAULT_LIOUVILLE_DEGREE,
            liouville_tol: 1e-8,
            grid_n: 32,
            t_long: 1000.0,
            samples: 2048,
            allow_resonant: false,
        }
    }
}

/// Density, chart and drift for one planar field.
#[derive(Clone, Debug)]
pub struct PlanarSetup {
    pub density: InvariantDensity,
    pub chart: TassaChart,
    pub rotation: RotationEstimate,
    pub drift: EffectiveDrift,
}

pub fn planar_setup(f: &PeriodicVectorField, p: &[f64], opts: &PlanarOptions) -> Result<PlanarSetup> {
    let density = solve_liouville(f, opts.liouville_degree, opts.liouville_tol)?;
    let (chart, rotation) = rayon::join(
        || build_tassa_chart(f, &density, opts.grid_n),
        || rotation_number_empirical(f, p, opts.t_long, opts.tol),
    );
    let (chart, rotation) = (chart?, rotation?);
    let drift = effective_drift(&chart, &rotation)?;
    Ok(PlanarSetup { density, chart, rotation, drift })
}

fn sup_distance(traj: &Trajectory, p: &[f64], b: &[f64; 2], t0: f64, samples: usize) -> f64 {
    let t_end = traj.t_end();
    let mut times: Vec<f64> = traj.times().iter().copied().filter(|t| *t >= t0).collect();
    times.extend((0..=samples).map(|k| t0 + (t_end - t0) * k as f64 / samples as f64));
    times
        .iter()
        .map(|&t| {
            let x = traj.eval(t);
            norm(&[x[0] - p[0] - b[0] * t, x[1] - p[1] - b[1] * t])
        })
        .fold(0.0, f64::max)
}

/// `sup_{[t₀,T]} |X^ε(t) − (p + Bt)|` along the ladder, fitted against ε.
pub fn planar_convergence(
    f: &PeriodicVectorField,
    p: &[f64],
    t_end: f64,
    ladder: &[f64],
    opts: &PlanarOptions,
) -> Result<(ConvergenceReport, PlanarSetup)> {
    validate_ladder(ladder)?;
    if !(opts.t0 >= 0.0 && opts.t0 < t_end) {
        return Err(Error::param("t0", "must lie in [0, T)"));
    }
    let setup = planar_setup(f, p, opts)?;
    if setup.drift.resonant && !opts.allow_resonant {
        return Err(Error::Resonance { m: setup.drift.min_divisor_at.clone(), divisor: setup.drift.min_divisor });
    }
    let b = setup.drift.b;
    let runs = ladder
        .par_iter()
        .map(|&eps| {
            let traj = solve_oscillatory(f, eps, (0.0, t_end), p, opts.tol)?;
            Ok((sup_distance(&traj, p, &b, opts.t0, opts.samples), sup_distance(&traj, p, &b, 0.0, opts.samples)))
        })
        .collect::<Result<Vec<_>>>()?;
    let errors: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let from_zero: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let refs: Vec<f64> = ladder.to_vec();
    let mut report = ConvergenceReport::new(
        format!("theorem2b:{}", f.name()),
        ReferenceRate::Eps,
        ladder,
        &errors,
        None,
        1.0,
        Some(opts.slope_window),
    )?
    .with_constant("B_1", b[0])
    .with_constant("B_2", b[1])
    .with_constant("gamma_chart", setup.drift.gamma_chart)
    .with_constant("gamma_empirical", setup.drift.gamma_empirical)
    .with_constant("t0", opts.t0)
    .with_constant(
        "max_error_over_eps",
        errors.iter().zip(&refs).map(|(e, r)| e / r).fold(0.0, f64::max),
    )
    .with_constant("slope_from_t0_zero", fit_rate(ladder, &from_zero)?.slope)
    .with_check(Check::at_most("gamma_agreement", setup.drift.gamma_gap(), 1e-3))
    .with_check(Check::at_most("liouville_residual", setup.density.residual, opts.liouville_tol));
    for w in &setup.drift.warnings {
        report = report.with_warning(w.clone());
    }
    Ok((report, setup))
}

/// Oracle trajectory of the ε = 1 flow `dx/dt = F(x)` for chart checks.
pub fn unit_flow_oracle(f: &PeriodicVectorField, p: &[f64], t_end: f64, h: f64) -> Result<Trajectory> {
    oracle_solve(f, 1.0, (0.0, t_end), p, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::shear_profile;
    use crate::field::Params;

    fn stripes() -> PeriodicVectorField {
        PeriodicVectorField::new("stripes", 2, |x, out| {
            out[0] = 2.0 + (2.0 * PI * x[1]).cos();
            out[1] = 1.0;
        })
    }

    fn golden() -> f64 {
        (1.0 + 5f64.sqrt()) / 2.0
    }

    fn shear_golden() -> (PeriodicVectorField, PeriodicScalarField) {
        let g = shear_profile(2, &Params::new()).unwrap();
        (PeriodicVectorField::shear(vec![1.0, golden()], &g), g)
    }

    #[test]
    fn divergence_of_known_field() {
        let f = PeriodicVectorField::new("sin", 2, |x, out| {
            out[0] = (2.0 * PI * x[0]).sin();
            out[1] = (2.0 * PI * x[1]).cos();
        });
        let x = [0.3, 0.7];
        let exact = 2.0 * PI * ((2.0 * PI * x[0]).cos() - (2.0 * PI * x[1]).sin());
        assert!((divergence(&f, &x) - exact).abs() < 1e-9);
    }

    #[test]
    fn half_lattice_counts() {
        assert_eq!(half_lattice(2, 2).len(), 12);
        assert_eq!(half_lattice(1, 5).len(), 5);
    }

    #[test]
    fn divergence_free_density_is_uniform() {
        let rho = solve_liouville(&stripes(), 8, 1e-10).unwrap();
        assert!(rho.is_uniform());
        assert!(rho.residual <= 1e-10);
        assert_eq!(rho.eval(&[0.2, 0.9]), 1.0);
    }

    #[test]
    fn shear_density_is_profile() {
        let (f, g) = shear_golden();
        let rho = solve_liouville(&f, 16, 1e-8).unwrap();
        let m = g.fourier().unwrap().mean();
        let mut worst = 0.0f64;
        for_each_lattice_point(32, 2, |y| {
            let expected = g.eval(y) / m;
            worst = worst.max((rho.eval(y) - expected).abs() / expected);
        });
        assert!(worst < 1e-6, "{worst}");
        // divergence of ρF by finite differences of the product
        let prod = {
            let rho = rho.clone();
            let f = f.clone();
            PeriodicVectorField::new("rhoF", 2, move |y, out| {
                f.eval_into(y, out);
                let r = rho.eval(y);
                out[0] *= r;
                out[1] *= r;
            })
        };
        for y in [[0.1, 0.2], [0.55, 0.35], [0.9, 0.77]] {
            assert!(divergence(&prod, &y).abs() < 1e-8);
        }
    }

    #[test]
    fn stripes_chart_closed_form() {
        let f = stripes();
        let chart = build_tassa_chart(&f, &InvariantDensity::uniform(2), 16).unwrap();
        assert!((chart.b_bar[0] - 2.0).abs() < 1e-13 && (chart.b_bar[1] - 1.0).abs() < 1e-13);
        assert!((chart.gamma - 0.5).abs() < 1e-9, "{}", chart.gamma);
        for x in [[0.3, 0.4], [1.7, -0.2]] {
            let y = chart.f(&x);
            let y2 = (2.0 * x[1] + (2.0 * PI * x[1]).sin() / (2.0 * PI)) / 2.0;
            assert!((y[0] - x[0]).abs() < 1e-13);
            assert!((y[1] - y2).abs() < 1e-13);
        }
        assert!(chart.bbar_spread < 1e-12);
    }

    #[test]
    fn identity_chart_for_constant_b() {
        let f = PeriodicVectorField::constant(vec![1.0, 1.0]);
        let chart = build_tassa_chart(&f, &InvariantDensity::uniform(2), 8).unwrap();
        assert_eq!(chart.f(&[0.25, 0.5]), [0.25, 0.5]);
        assert!((chart.profile(&[0.3, 0.3]) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn chart_identities_on_random_points() {
        use rand::{Rng, SeedableRng};
        let f = PeriodicVectorField::new("divfree", 2, |x, out| {
            out[0] = 2.0 + 0.7 * (2.0 * PI * x[1]).cos() + 0.2 * (4.0 * PI * x[1]).sin();
            out[1] = 1.5 + 0.5 * (2.0 * PI * x[0]).sin();
        });
        let chart = build_tassa_chart(&f, &InvariantDensity::uniform(2), 16).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let pts: Vec<[f64; 2]> = (0..100).map(|_| [rng.gen_range(-1.0..2.0), rng.gen_range(-1.0..2.0)]).collect();
        assert!(chart.translation_defect(&pts) <= 1e-10);
        assert!(chart.inverse_defect(&pts[..20]) <= 1e-9);
        for x in &pts[..10] {
            assert!((chart.jacobian_numeric(x) - chart.jacobian(x)).abs() < 1e-8);
            let psi = chart.stream_function(x);
            assert!((chart.stream_function(&[x[0] + 1.0, x[1]]) - psi).abs() < 1e-10);
            assert!((chart.stream_function(&[x[0], x[1] + 1.0]) - psi).abs() < 1e-10);
        }
        // γ = b̄₂/b̄₁ for a divergence-free field
        assert!((chart.gamma - 0.75).abs() < 1e-8, "{}", chart.gamma);
    }

    #[test]
    fn chart_conjugates_to_shear() {
        let f = stripes();
        let chart = build_tassa_chart(&f, &InvariantDensity::uniform(2), 16).unwrap();
        let traj = unit_flow_oracle(&f, &[0.1, 0.2], 1.0, 1e-3).unwrap();
        assert!(chart.conjugacy_residual(&traj, 25) <= 1e-6);
    }

    #[test]
    fn non_positive_b_is_refused() {
        let f = PeriodicVectorField::new("signchange", 2, |x, out| {
            out[0] = (2.0 * PI * x[1]).cos();
            out[1] = 1.0;
        });
        assert!(matches!(build_tassa_chart(&f, &InvariantDensity::uniform(2), 16), Err(Error::Chart(_))));
    }

    #[test]
    fn empirical_rotation_numbers() {
        let c = rotation_number_empirical(&PeriodicVectorField::constant(vec![2.0, 3.0]), &[0.0, 0.0], 100.0, 1e-10).unwrap();
        assert!((c.gamma - 1.5).abs() < 1e-12);
        let s = rotation_number_empirical(&stripes(), &[0.0, 0.0], 1000.0, 1e-10).unwrap();
        assert!((s.gamma - 0.5).abs() < 1e-3);
        let (f, _) = shear_golden();
        let r = rotation_number_empirical(&f, &[0.0, 0.0], 1000.0, 1e-10).unwrap();
        assert!((r.gamma - golden()).abs() < 1e-3);
    }

    #[test]
    fn stripes_drift_is_arithmetic_mean() {
        let f = stripes();
        let chart = build_tassa_chart(&f, &InvariantDensity::uniform(2), 16).unwrap();
        let rot = rotation_number_empirical(&f, &[0.0, 0.0], 1000.0, 1e-10).unwrap();
        let d = effective_drift(&chart, &rot).unwrap();
        assert!((d.b[0] - 2.0).abs() < 1e-9 && (d.b[1] - 1.0).abs() < 1e-9);
        assert!(d.resonant);
        assert!(!d.warnings.is_empty());
    }

    #[test]
    fn planar_and_shear_drifts_agree() {
        let (f, g) = shear_golden();
        let opts = PlanarOptions::default();
        let setup = planar_setup(&f, &[0.0, 0.0], &opts).unwrap();
        let line = crate::shear::effective_line(&[1.0, golden()], &g, &[0.0, 0.0]).unwrap();
        assert!(!setup.drift.resonant);
        for i in 0..2 {
            assert!((setup.drift.b[i] - line.b[i]).abs() < 1e-6, "{:?} vs {:?}", setup.drift.b, line.b);
        }
    }

    #[test]
    fn constant_field_converges_exactly() {
        let f = PeriodicVectorField::constant(vec![1.0, golden()]);
        let ladder: Vec<f64> = (4..=7).map(|k| 2f64.powi(-k)).collect();
        let (r, setup) = planar_convergence(&f, &[0.0, 0.0], 1.0, &ladder, &PlanarOptions::default()).unwrap();
        assert!((setup.drift.b[1] - golden()).abs() < 1e-12);
        assert!(r.errors().iter().all(|e| *e < 1e-9));
    }

    #[test]
    fn resonant_field_needs_override() {
        let ladder: Vec<f64> = (4..=7).map(|k| 2f64.powi(-k)).collect();
        let err = planar_convergence(&stripes(), &[0.0, 0.0], 1.0, &ladder, &PlanarOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Resonance { .. }));
    }

    #[test]
    fn chart_csv_has_header() {
        let chart = build_tassa_chart(&stripes(), &InvariantDensity::uniform(2), 8).unwrap();
        let mut buf = Vec::new();
        chart.write_csv(4, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x1,x2,f1,f2,jacobian,g1,g2,G\n"));
        assert_eq!(text.lines().count(), 17);
    }
}
