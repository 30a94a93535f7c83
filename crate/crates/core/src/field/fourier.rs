use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{for_each_lattice_point, PeriodicScalarField};
use crate::error::{Error, Result};

/// One term of a Fourier series in the serialized form (multi-index, re, im).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierTerm {
    pub index: Vec<i64>,
    pub re: f64,
    pub im: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SeriesRepr {
    dim: usize,
    max_degree: usize,
    terms: Vec<FourierTerm>,
}

/// Truncated Fourier series `Σ c_m exp(2πi⟨m, y⟩)` of a real field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "SeriesRepr", try_from = "SeriesRepr")]
pub struct FourierSeries {
    dim: usize,
    max_degree: usize,
    coefficients: BTreeMap<Vec<i64>, Complex64>,
}

impl From<FourierSeries> for SeriesRepr {
    fn from(s: FourierSeries) -> Self {
        SeriesRepr {
            dim: s.dim,
            max_degree: s.max_degree,
            terms: s.terms(),
        }
    }
}

impl TryFrom<SeriesRepr> for FourierSeries {
    type Error = Error;

    fn try_from(r: SeriesRepr) -> Result<Self> {
        FourierSeries::from_terms(r.dim, &r.terms)
    }
}

impl FourierSeries {
    pub fn zero(dim: usize, max_degree: usize) -> Self {
        Self { dim, max_degree, coefficients: BTreeMap::new() }
    }

    /// Build from explicit terms. Missing conjugate partners are added so the
    /// series is real-valued; inconsistent partners are rejected.
    pub fn from_terms(dim: usize, terms: &[FourierTerm]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("dim", "must be at least 1"));
        }
        let mut s = Self::zero(dim, 0);
        for t in terms {
            if t.index.len() != dim {
                return Err(Error::param(
                    "fourier",
                    format!("index {:?} has length {}, expected {dim}", t.index, t.index.len()),
                ));
            }
            s.insert(t.index.clone(), Complex64::new(t.re, t.im));
        }
        for t in terms {
            let neg: Vec<i64> = t.index.iter().map(|m| -m).collect();
            let c = Complex64::new(t.re, t.im);
            match s.coefficients.get(&neg) {
                Some(&partner) => {
                    if (partner - c.conj()).norm() > 1e-12 * (1.0 + c.norm()) {
                        return Err(Error::param(
                            "fourier",
                            format!("coefficients at {:?} and {neg:?} are not conjugate", t.index),
                        ));
                    }
                }
                None => s.insert(neg, c.conj()),
            }
        }
        Ok(s)
    }

    /// Adds `amp·cos(2π⟨m,y⟩)` to the series.
    pub fn add_cos(&mut self, m: &[i64], amp: f64) {
        if m.iter().all(|&k| k == 0) {
            self.add(m.to_vec(), amp.into());
            return;
        }
        let neg: Vec<i64> = m.iter().map(|k| -k).collect();
        self.add(m.to_vec(), (0.5 * amp).into());
        self.add(neg, (0.5 * amp).into());
    }

    /// Adds `amp·sin(2π⟨m,y⟩)` to the series.
    pub fn add_sin(&mut self, m: &[i64], amp: f64) {
        let neg: Vec<i64> = m.iter().map(|k| -k).collect();
        self.add(m.to_vec(), Complex64::new(0.0, -0.5 * amp));
        self.add(neg, Complex64::new(0.0, 0.5 * amp));
    }

    fn add(&mut self, m: Vec<i64>, c: Complex64) {
        let cur = self.coefficients.get(&m).copied().unwrap_or_default();
        self.insert(m, cur + c);
    }

    pub fn insert(&mut self, m: Vec<i64>, c: Complex64) {
        assert_eq!(m.len(), self.dim);
        let deg = m.iter().map(|k| k.unsigned_abs() as usize).max().unwrap_or(0);
        self.max_degree = self.max_degree.max(deg);
        self.coefficients.insert(m, c);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn get(&self, m: &[i64]) -> Complex64 {
        self.coefficients.get(m).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<i64>, &Complex64)> {
        self.coefficients.iter()
    }

    /// The torus mean, i.e. the coefficient at `m = 0`.
    pub fn mean(&self) -> f64 {
        self.get(&vec![0; self.dim]).re
    }

    pub fn terms(&self) -> Vec<FourierTerm> {
        self.coefficients
            .iter()
            .map(|(m, c)| FourierTerm { index: m.clone(), re: c.re, im: c.im })
            .collect()
    }

    #[inline]
    fn phase(m: &[i64], y: &[f64]) -> f64 {
        2.0 * PI * m.iter().zip(y).map(|(&k, &x)| k as f64 * x).sum::<f64>()
    }

    /// Real part of the series at `y`.
    pub fn eval(&self, y: &[f64]) -> f64 {
        self.coefficients
            .iter()
            .map(|(m, c)| {
                let (s, co) = Self::phase(m, y).sin_cos();
                c.re * co - c.im * s
            })
            .sum()
    }

    /// Gradient of the series at `y`.
    pub fn gradient(&self, y: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        for (m, c) in &self.coefficients {
            let (s, co) = Self::phase(m, y).sin_cos();
            // d/dy_j Re(c e^{iθ}) = Re(2πi m_j c e^{iθ}) = -2π m_j (c.re sinθ + c.im cosθ)
            let w = -2.0 * PI * (c.re * s + c.im * co);
            for (gj, &mj) in g.iter_mut().zip(m) {
                *gj += w * mj as f64;
            }
        }
        g
    }

    /// `⟨∇S(y), a⟩` evaluated term by term.
    pub fn directional_derivative(&self, y: &[f64], a: &[f64]) -> f64 {
        self.gradient(y).iter().zip(a).map(|(g, ai)| g * ai).sum()
    }

    /// Largest `|c_{-m} - conj(c_m)|`; zero for a real-valued field.
    pub fn hermitian_defect(&self) -> f64 {
        self.coefficients
            .iter()
            .map(|(m, c)| {
                let neg: Vec<i64> = m.iter().map(|k| -k).collect();
                (self.get(&neg) - c.conj()).norm()
            })
            .fold(0.0, f64::max)
    }

    /// Maximum of `|S|` on the uniform `n^d` grid.
    pub fn sup_on_grid(&self, n: usize) -> f64 {
        let mut best = 0.0f64;
        for_each_lattice_point(n, self.dim, |y| best = best.max(self.eval(y).abs()));
        best
    }
}

/// Result of a discrete Fourier projection.
#[derive(Clone, Debug)]
pub struct FourierFit {
    pub series: FourierSeries,
    /// Grid points per axis used by the transform.
    pub grid_n: usize,
    /// `max |g - Σ|` over the transform grid.
    pub residual: f64,
    /// Set when `residual` exceeds the caller tolerance.
    pub truncated: bool,
}

/// Discrete Fourier coefficients of `g` for `|m|_∞ ≤ max_degree`.
///
/// Uses `4·max_degree` points per axis (at least 4). Coefficients below
/// `1e-14` relative to the largest are dropped.
pub fn fourier_of(g: &PeriodicScalarField, max_degree: usize, tol: f64) -> Result<FourierFit> {
    let dim = g.dim();
    let n = (4 * max_degree).max(4);
    let total = n.pow(dim as u32);
    let width = 2 * max_degree + 1;

    let mut samples = Vec::with_capacity(total);
    let mut bad = None;
    for_each_lattice_point(n, dim, |y| match g.try_eval_at(0.0, y) {
        Ok(v) => samples.push(v),
        Err(e) => {
            if bad.is_none() {
                bad = Some(e)
            }
            samples.push(0.0)
        }
    });
    if let Some(e) = bad {
        return Err(e);
    }

    // twiddle[j][k] = exp(-2πi (k - K) j / n)
    let k0 = max_degree as i64;
    let twiddle: Vec<Vec<Complex64>> = (0..n)
        .map(|j| {
            (0..width)
                .map(|k| {
                    let m = k as i64 - k0;
                    Complex64::from_polar(1.0, -2.0 * PI * (m * j as i64) as f64 / n as f64)
                })
                .collect()
        })
        .collect();

    // Separable transform, one axis at a time. Layout: row-major, first axis slowest.
    let mut data: Vec<Complex64> = samples.iter().map(|&v| v.into()).collect();
    let mut shape = vec![n; dim];
    for axis in 0..dim {
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let mut next = vec![Complex64::default(); outer * width * inner];
        for o in 0..outer {
            for j in 0..n {
                let tw = &twiddle[j];
                let src = &data[(o * n + j) * inner..(o * n + j + 1) * inner];
                for (k, w) in tw.iter().enumerate() {
                    let dst = &mut next[(o * width + k) * inner..(o * width + k + 1) * inner];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += w * s;
                    }
                }
            }
        }
        shape[axis] = width;
        data = next;
    }

    let scale = 1.0 / total as f64;
    let biggest = data.iter().map(|c| c.norm()).fold(0.0, f64::max) * scale;
    let cutoff = 1e-14 * biggest.max(1e-300);
    let mut series = FourierSeries::zero(dim, max_degree);
    let mut index = vec![0usize; dim];
    for c in &data {
        let c = c * scale;
        if c.norm() > cutoff && c.norm() > 1e-300 {
            series.insert(index.iter().map(|&k| k as i64 - k0).collect(), c);
        }
        for a in (0..dim).rev() {
            index[a] += 1;
            if index[a] < width {
                break;
            }
            index[a] = 0;
        }
    }
    series.max_degree = max_degree;

    let mut residual = 0.0f64;
    let mut i = 0;
    for_each_lattice_point(n, dim, |y| {
        residual = residual.max((samples[i] - series.eval(y)).abs());
        i += 1;
    });

    Ok(FourierFit { series, grid_n: n, residual, truncated: residual > tol })
}
