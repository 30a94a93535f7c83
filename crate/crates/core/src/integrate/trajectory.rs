use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryMeta {
    pub solver: String,
    pub rtol: f64,
    pub atol: f64,
    pub steps: usize,
    pub rejected: usize,
    pub events: usize,
}

#[derive(Clone, Debug)]
enum Dense {
    /// Four coefficient vectors per segment (the fifth is the left state).
    Dopri(Vec<f64>),
    /// Derivative at every node; cubic Hermite between nodes.
    Hermite(Vec<f64>),
    /// One-dimensional inverse of a monotone trajectory, evaluated by root
    /// finding on the forward interpolant.
    Inverse(Arc<Trajectory>),
}

/// Time-stamped samples of an IVP solution with a dense interpolant.
#[derive(Clone, Debug)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    dense: Dense,
    meta: TrajectoryMeta,
}

impl Trajectory {
    pub(crate) fn from_dopri(dim: usize, times: Vec<f64>, states: Vec<f64>, coeffs: Vec<f64>, meta: TrajectoryMeta) -> Self {
        debug_assert_eq!(coeffs.len(), 4 * dim * (times.len() - 1));
        Self { dim, times, states, dense: Dense::Dopri(coeffs), meta }
    }

    pub(crate) fn from_hermite(dim: usize, times: Vec<f64>, states: Vec<f64>, derivs: Vec<f64>, meta: TrajectoryMeta) -> Self {
        Self { dim, times, states, dense: Dense::Hermite(derivs), meta }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("non-empty trajectory")
    }

    pub fn meta(&self) -> &TrajectoryMeta {
        &self.meta
    }

    /// Index `i` with `times[i] <= t <= times[i+1]` (clamped to the range).
    fn segment(&self, t: f64) -> usize {
        let n = self.times.len();
        if n < 2 || t <= self.times[0] {
            return 0;
        }
        if t >= self.times[n - 1] {
            return n - 2;
        }
        self.times.partition_point(|&s| s <= t).saturating_sub(1).min(n - 2)
    }

    /// Dense-output value at `t` (clamped to the time range).
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let d = self.dim;
        if self.times.len() == 1 {
            out.copy_from_slice(self.state(0));
            return;
        }
        let i = self.segment(t);
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let th = ((t - t0) / h).clamp(0.0, 1.0);
        match &self.dense {
            Dense::Dopri(c) => {
                let th1 = 1.0 - th;
                let y0 = self.state(i);
                let r = &c[4 * d * i..4 * d * (i + 1)];
                for k in 0..d {
                    let (r2, r3, r4, r5) = (r[k], r[d + k], r[2 * d + k], r[3 * d + k]);
                    out[k] = y0[k] + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5)));
                }
                // exact at the right node
                if th == 1.0 {
                    out.copy_from_slice(self.state(i + 1));
                }
            }
            Dense::Hermite(f) => {
                let (y0, y1) = (self.state(i), self.state(i + 1));
                let (f0, f1) = (&f[i * d..(i + 1) * d], &f[(i + 1) * d..(i + 2) * d]);
                let th2 = th * th;
                let th3 = th2 * th;
                let h00 = 2.0 * th3 - 3.0 * th2 + 1.0;
                let h10 = th3 - 2.0 * th2 + th;
                let h01 = -2.0 * th3 + 3.0 * th2;
                let h11 = th3 - th2;
                for k in 0..d {
                    out[k] = h00 * y0[k] + h10 * h * f0[k] + h01 * y1[k] + h11 * h * f1[k];
                }
            }
            Dense::Inverse(fwd) => {
                out[0] = fwd.solve_in_segment(i, t);
            }
        }
    }

    /// Time derivative of the interpolant.
    pub fn derivative(&self, t: f64) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d];
        if self.times.len() == 1 {
            return out;
        }
        let i = self.segment(t);
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let th = ((t - t0) / h).clamp(0.0, 1.0);
        match &self.dense {
            Dense::Dopri(c) => {
                let th1 = 1.0 - th;
                let r = &c[4 * d * i..4 * d * (i + 1)];
                for k in 0..d {
                    let (r2, r3, r4, r5) = (r[k], r[d + k], r[2 * d + k], r[3 * d + k]);
                    out[k] = (r2
                        + (1.0 - 2.0 * th) * r3
                        + th * (2.0 - 3.0 * th) * r4
                        + 2.0 * th * th1 * (1.0 - 2.0 * th) * r5)
                        / h;
                }
            }
            Dense::Hermite(f) => {
                let (y0, y1) = (self.state(i), self.state(i + 1));
                let (f0, f1) = (&f[i * d..(i + 1) * d], &f[(i + 1) * d..(i + 2) * d]);
                let th2 = th * th;
                let d00 = (6.0 * th2 - 6.0 * th) / h;
                let d10 = 3.0 * th2 - 4.0 * th + 1.0;
                let d01 = (-6.0 * th2 + 6.0 * th) / h;
                let d11 = 3.0 * th2 - 2.0 * th;
                for k in 0..d {
                    out[k] = d00 * y0[k] + d10 * f0[k] + d01 * y1[k] + d11 * f1[k];
                }
            }
            Dense::Inverse(fwd) => {
                let s = fwd.solve_in_segment(i, t);
                out[0] = 1.0 / fwd.derivative(s)[0];
            }
        }
        out
    }

    /// Solve `x(s) = xi` for `s` in forward segment `i` (1-D, increasing).
    fn solve_in_segment(&self, i: usize, xi: f64) -> f64 {
        let (mut lo, mut hi) = (self.times[i], self.times[i + 1]);
        let (ylo, yhi) = (self.states[i], self.states[i + 1]);
        if xi <= ylo {
            return lo;
        }
        if xi >= yhi {
            return hi;
        }
        // linear first guess, then safeguarded Newton
        let mut s = lo + (hi - lo) * (xi - ylo) / (yhi - ylo);
        let mut buf = [0.0];
        for _ in 0..100 {
            self.eval_into(s, &mut buf);
            let g = buf[0] - xi;
            if g == 0.0 {
                return s;
            }
            if g > 0.0 {
                hi = s;
            } else {
                lo = s;
            }
            let dg = self.derivative(s)[0];
            let newton = s - g / dg;
            let next = if dg > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if (next - s).abs() <= 1e-15 * s.abs().max(1.0) || hi - lo <= 1e-15 * s.abs().max(1.0) {
                return next;
            }
            s = next;
        }
        s
    }

    /// Inverse of a strictly increasing one-dimensional trajectory.
    pub fn invert(&self) -> Result<Trajectory> {
        if self.dim != 1 {
            return Err(Error::InvalidInput(format!("cannot invert a {}-dimensional trajectory", self.dim)));
        }
        if self.len() < 2 {
            return Err(Error::InvalidInput("cannot invert a single-node trajectory".into()));
        }
        for i in 1..self.len() {
            if !(self.states[i] > self.states[i - 1]) {
                return Err(Error::NonMonotone { index: i, t: self.times[i] });
            }
        }
        let fwd = Arc::new(self.clone());
        Ok(Trajectory {
            dim: 1,
            times: self.states.clone(),
            states: self.times.clone(),
            dense: Dense::Inverse(fwd),
            meta: TrajectoryMeta { solver: format!("inverse({})", self.meta.solver), ..self.meta.clone() },
        })
    }

    /// Rescale `t ↦ c·t`, `x ↦ c·x` (maps a fast-variable solution to slow units).
    pub(crate) fn rescaled(mut self, c: f64) -> Self {
        self.times.iter_mut().for_each(|t| *t *= c);
        self.states.iter_mut().for_each(|x| *x *= c);
        match &mut self.dense {
            Dense::Dopri(coeffs) => coeffs.iter_mut().for_each(|x| *x *= c),
            Dense::Hermite(_) => {} // dx/dt is invariant under joint scaling
            Dense::Inverse(_) => unreachable!("rescaling an inverse trajectory"),
        }
        self
    }

    /// `n + 1` uniformly spaced times over the span, merged with the nodes.
    pub fn sample_times(&self, n: usize) -> Vec<f64> {
        let (a, b) = (self.t_start(), self.t_end());
        let mut ts: Vec<f64> = (0..=n).map(|k| a + (b - a) * k as f64 / n as f64).collect();
        ts.extend_from_slice(&self.times);
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        ts
    }

    /// Writes `t,x_1,…,x_d` rows at the nodes.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        write!(w, "t")?;
        for k in 1..=self.dim {
            write!(w, ",x_{k}")?;
        }
        writeln!(w)?;
        for i in 0..self.len() {
            write!(w, "{}", self.times[i])?;
            for x in self.state(i) {
                write!(w, ",{x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}
