//! Periodic scalar and vector fields on the unit torus.
//!
//! Every field has period 1 along each axis. Scalar fields carry an optional
//! slow first argument `t`; the periodic argument is always the point `y`.
//! Fields are immutable and cheap to clone (closures are reference counted).

mod builtin;
mod fourier;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub use builtin::{
    builtin, example3_tail_bound, shear_profile, Builtin, ParamValue, Params, BUILTINS,
};
pub use fourier::{fourier_of, FourierFit, FourierSeries, FourierTerm};

type ScalarFn = dyn Fn(f64, &[f64]) -> f64 + Send + Sync;
type VectorFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// A scalar function `G(t, y)`, 1-periodic in every coordinate of `y`.
#[derive(Clone)]
pub struct PeriodicScalarField {
    name: String,
    dim: usize,
    eval: Arc<ScalarFn>,
    fourier: Option<FourierSeries>,
    time_dependent: bool,
}

impl PeriodicScalarField {
    /// A time-independent field `G(y)`.
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            dim,
            eval: Arc::new(move |_, y| f(y)),
            fourier: None,
            time_dependent: false,
        }
    }

    /// A field `G(t, y)` depending on a slow (or, for averaging, fast) time.
    pub fn with_time(
        name: impl Into<String>,
        dim: usize,
        f: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            dim,
            eval: Arc::new(f),
            fourier: None,
            time_dependent: true,
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        let mut series = FourierSeries::zero(dim, 0);
        series.insert(vec![0; dim], c.into());
        Self::new(format!("const({c})"), dim, move |_| c).with_fourier(series)
    }

    /// Field backed by a truncated Fourier series; evaluation is the series sum.
    pub fn from_fourier(name: impl Into<String>, series: FourierSeries) -> Self {
        let dim = series.dim();
        let s = series.clone();
        Self::new(name, dim, move |y| s.eval(y)).with_fourier(series)
    }

    /// Attach a Fourier representation. The caller asserts it matches `eval`.
    pub fn with_fourier(mut self, series: FourierSeries) -> Self {
        self.fourier = Some(series);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_time_dependent(&self) -> bool {
        self.time_dependent
    }

    pub fn fourier(&self) -> Option<&FourierSeries> {
        self.fourier.as_ref()
    }

    #[inline]
    pub fn eval(&self, y: &[f64]) -> f64 {
        (self.eval)(0.0, y)
    }

    #[inline]
    pub fn eval_at(&self, t: f64, y: &[f64]) -> f64 {
        (self.eval)(t, y)
    }

    /// Evaluate and reject non-finite values.
    pub fn try_eval_at(&self, t: f64, y: &[f64]) -> Result<f64> {
        let v = (self.eval)(t, y);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Evaluation { point: y.to_vec(), value: v })
        }
    }

    /// Pointwise reciprocal `1 / G`. Drops the Fourier representation.
    pub fn reciprocal(&self) -> Self {
        let inner = self.eval.clone();
        Self {
            name: format!("1/{}", self.name),
            dim: self.dim,
            eval: Arc::new(move |t, y| 1.0 / inner(t, y)),
            fourier: None,
            time_dependent: self.time_dependent,
        }
    }
}

impl fmt::Debug for PeriodicScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PeriodicScalarField")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("time_dependent", &self.time_dependent)
            .field("fourier_terms", &self.fourier.as_ref().map(|s| s.len()))
            .finish()
    }
}

/// Surfaces `y[axis] ∈ k + offset` (k ∈ ℤ) across which a field jumps.
#[derive(Clone, Debug, PartialEq)]
pub struct Switching {
    pub axis: usize,
    pub offsets: Vec<f64>,
}

impl Switching {
    /// Signed distance-like function, zero exactly on the surfaces.
    pub fn value(&self, y: &[f64]) -> f64 {
        let u = y[self.axis];
        self.offsets
            .iter()
            .map(|o| (std::f64::consts::PI * (u - o)).sin())
            .product()
    }
}

/// A vector field `F: T^d → R^d` with optional recorded Lipschitz and
/// positivity bounds.
#[derive(Clone)]
pub struct PeriodicVectorField {
    name: String,
    dim: usize,
    eval: Arc<VectorFn>,
    lipschitz_bound: Option<f64>,
    positivity: Option<(f64, f64)>,
    switching: Vec<Switching>,
}

impl PeriodicVectorField {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            dim,
            eval: Arc::new(f),
            lipschitz_bound: None,
            positivity: None,
            switching: Vec::new(),
        }
    }

    pub fn constant(c: Vec<f64>) -> Self {
        let dim = c.len();
        let name = format!("const{c:?}");
        Self::new(name, dim, move |_, out| out.copy_from_slice(&c)).with_lipschitz(0.0)
    }

    /// The one-dimensional field `F = g`.
    pub fn from_scalar(g: &PeriodicScalarField) -> Self {
        assert_eq!(g.dim(), 1, "from_scalar needs a one-dimensional field");
        let g = g.clone();
        Self::new(g.name().to_string(), 1, move |y, out| out[0] = g.eval(y))
    }

    /// Shear field `a / G(y)`.
    pub fn shear(a: Vec<f64>, g: &PeriodicScalarField) -> Self {
        assert_eq!(a.len(), g.dim(), "shear direction and profile dimensions differ");
        let dim = a.len();
        let g = g.clone();
        let name = format!("shear({:?}, {})", a, g.name());
        Self::new(name, dim, move |y, out| {
            let inv = 1.0 / g.eval(y);
            for (o, ai) in out.iter_mut().zip(&a) {
                *o = ai * inv;
            }
        })
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz_bound = Some(l);
        self
    }

    pub fn with_positivity(mut self, lambda: f64, upper: f64) -> Self {
        self.positivity = Some((lambda, upper));
        self
    }

    pub fn with_switching(mut self, s: Switching) -> Self {
        self.switching.push(s);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lipschitz_bound(&self) -> Option<f64> {
        self.lipschitz_bound
    }

    pub fn positivity(&self) -> Option<(f64, f64)> {
        self.positivity
    }

    pub fn switching(&self) -> &[Switching] {
        &self.switching
    }

    #[inline]
    pub fn eval_into(&self, y: &[f64], out: &mut [f64]) {
        (self.eval)(y, out)
    }

    pub fn eval(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        (self.eval)(y, &mut out);
        out
    }

    pub fn component(&self, i: usize) -> PeriodicScalarField {
        assert!(i < self.dim);
        let f = self.clone();
        PeriodicScalarField::new(format!("{}[{i}]", self.name), self.dim, move |y| {
            let mut buf = [0.0; 8];
            if f.dim <= 8 {
                f.eval_into(y, &mut buf[..f.dim]);
                buf[i]
            } else {
                f.eval(y)[i]
            }
        })
    }

    /// Largest Euclidean norm of `F` on a uniform `n^d` grid.
    pub fn sup_norm(&self, n: usize) -> f64 {
        let mut out = vec![0.0; self.dim];
        let mut best = 0.0f64;
        for_each_lattice_point(n, self.dim, |y| {
            self.eval_into(y, &mut out);
            best = best.max(norm(&out));
        });
        best
    }
}

impl fmt::Debug for PeriodicVectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PeriodicVectorField")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("lipschitz_bound", &self.lipschitz_bound)
            .field("positivity", &self.positivity)
            .field("switching", &self.switching)
            .finish()
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Visit every point `j / n`, `j ∈ {0..n-1}^d`, in lexicographic order.
pub fn for_each_lattice_point(n: usize, dim: usize, mut f: impl FnMut(&[f64])) {
    let total = n.pow(dim as u32);
    let mut idx = vec![0usize; dim];
    let mut y = vec![0.0; dim];
    for _ in 0..total {
        for (yi, &ii) in y.iter_mut().zip(&idx) {
            *yi = ii as f64 / n as f64;
        }
        f(&y);
        for k in (0..dim).rev() {
            idx[k] += 1;
            if idx[k] < n {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Rectangle-rule mean of `g` over the uniform `grid_n^d` lattice on `[0,1)^d`.
pub fn mean_over_torus(g: &PeriodicScalarField, grid_n: usize) -> Result<f64> {
    if grid_n < 2 {
        return Err(Error::param("grid_n", "must be at least 2"));
    }
    let mut sum = 0.0;
    let mut bad: Option<Error> = None;
    for_each_lattice_point(grid_n, g.dim(), |y| {
        if bad.is_some() {
            return;
        }
        match g.try_eval_at(0.0, y) {
            Ok(v) => sum += v,
            Err(e) => bad = Some(e),
        }
    });
    if let Some(e) = bad {
        return Err(e);
    }
    Ok(sum / grid_n.pow(g.dim() as u32) as f64)
}

/// Minimum and maximum of `g` over the uniform grid. A non-positive minimum
/// is reported as a positivity violation.
pub fn positivity_bounds(g: &PeriodicScalarField, grid_n: usize) -> Result<(f64, f64)> {
    if grid_n < 2 {
        return Err(Error::param("grid_n", "must be at least 2"));
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut arg = vec![0.0; g.dim()];
    let mut bad: Option<Error> = None;
    for_each_lattice_point(grid_n, g.dim(), |y| {
        if bad.is_some() {
            return;
        }
        match g.try_eval_at(0.0, y) {
            Ok(v) => {
                if v < lo {
                    lo = v;
                    arg.copy_from_slice(y);
                }
                hi = hi.max(v);
            }
            Err(e) => bad = Some(e),
        }
    });
    if let Some(e) = bad {
        return Err(e);
    }
    if lo <= 0.0 {
        return Err(Error::Positivity { min: lo, at: arg });
    }
    Ok((lo, hi))
}

/// Componentwise positivity bounds of a vector field.
pub fn vector_positivity_bounds(f: &PeriodicVectorField, grid_n: usize) -> Result<Vec<(f64, f64)>> {
    (0..f.dim()).map(|i| positivity_bounds(&f.component(i), grid_n)).collect()
}
