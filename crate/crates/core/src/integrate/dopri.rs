//! Dormand–Prince 5(4) with the classical fourth-order continuous extension.

use super::trajectory::{Trajectory, TrajectoryMeta};
use super::SolverOptions;
use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

pub(crate) type Switch<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);

struct Stepper<'a, F> {
    rhs: F,
    dim: usize,
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y_new: Vec<f64>,
    err: Vec<f64>,
    evals: &'a mut usize,
}

impl<F: FnMut(f64, &[f64], &mut [f64])> Stepper<'_, F> {
    fn call(&mut self, t: f64, y: &[f64], slot: usize) -> Result<()> {
        *self.evals += 1;
        let mut out = std::mem::take(&mut self.k[slot]);
        (self.rhs)(t, y, &mut out);
        let ok = out.iter().all(|v| v.is_finite());
        self.k[slot] = out;
        if ok {
            Ok(())
        } else {
            Err(Error::NonFiniteRhs { t, state: y.to_vec() })
        }
    }

    /// One trial step from (t, y) with k[0] = f(t, y) already set.
    /// Leaves the result in y_new, the error vector in err and f(t+h, y_new) in k[6].
    fn step(&mut self, t: f64, y: &[f64], h: f64) -> Result<()> {
        let n = self.dim;
        macro_rules! stage {
            ($slot:expr, $c:expr, [$(($a:expr, $j:expr)),*]) => {{
                for i in 0..n {
                    self.tmp[i] = y[i] + h * (0.0 $(+ $a * self.k[$j][i])*);
                }
                let tmp = std::mem::take(&mut self.tmp);
                let r = self.call(t + $c * h, &tmp, $slot);
                self.tmp = tmp;
                r?;
            }};
        }
        stage!(1, C2, [(A21, 0)]);
        stage!(2, C3, [(A31, 0), (A32, 1)]);
        stage!(3, C4, [(A41, 0), (A42, 1), (A43, 2)]);
        stage!(4, C5, [(A51, 0), (A52, 1), (A53, 2), (A54, 3)]);
        stage!(5, 1.0, [(A61, 0), (A62, 1), (A63, 2), (A64, 3), (A65, 4)]);
        for i in 0..n {
            self.y_new[i] = y[i]
                + h * (A71 * self.k[0][i] + A73 * self.k[2][i] + A74 * self.k[3][i] + A75 * self.k[4][i] + A76 * self.k[5][i]);
        }
        let yn = std::mem::take(&mut self.y_new);
        let r = self.call(t + h, &yn, 6);
        self.y_new = yn;
        r?;
        for i in 0..n {
            self.err[i] = h
                * (E1 * self.k[0][i] + E3 * self.k[2][i] + E4 * self.k[3][i] + E5 * self.k[4][i] + E6 * self.k[5][i]
                    + E7 * self.k[6][i]);
        }
        Ok(())
    }

    fn error_norm(&self, y: &[f64], opts: &SolverOptions) -> f64 {
        let n = self.dim as f64;
        (self
            .err
            .iter()
            .zip(y)
            .zip(&self.y_new)
            .map(|((e, a), b)| {
                let sk = opts.atol + opts.rtol * a.abs().max(b.abs());
                (e / sk).powi(2)
            })
            .sum::<f64>()
            / n)
            .sqrt()
    }

    fn dense_coeffs(&self, y: &[f64], h: f64, out: &mut Vec<f64>) {
        let n = self.dim;
        let base = out.len();
        out.resize(base + 4 * n, 0.0);
        for i in 0..n {
            let ydiff = self.y_new[i] - y[i];
            let bspl = h * self.k[0][i] - ydiff;
            out[base + i] = ydiff;
            out[base + n + i] = bspl;
            out[base + 2 * n + i] = ydiff - h * self.k[6][i] - bspl;
            out[base + 3 * n + i] = h
                * (D1 * self.k[0][i] + D3 * self.k[2][i] + D4 * self.k[3][i] + D5 * self.k[4][i] + D6 * self.k[5][i]
                    + D7 * self.k[6][i]);
        }
    }
}

fn sign_changed(before: &[f64], after: &[f64]) -> bool {
    before.iter().zip(after).any(|(a, b)| a * b < 0.0)
}

pub(crate) fn integrate(
    rhs: impl FnMut(f64, &[f64], &mut [f64]),
    t0: f64,
    t1: f64,
    x0: &[f64],
    opts: &SolverOptions,
    switches: &[Switch<'_>],
) -> Result<Trajectory> {
    let n = x0.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty initial state".into()));
    }
    if !(t1 > t0) {
        return Err(Error::InvalidInput(format!("t_span must satisfy t1 > t0, got ({t0}, {t1})")));
    }
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(Error::InvalidInput("tolerances must be positive".into()));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite initial state".into()));
    }
    let mut evals = 0usize;
    let mut st = Stepper {
        rhs,
        dim: n,
        k: std::array::from_fn(|_| vec![0.0; n]),
        tmp: vec![0.0; n],
        y_new: vec![0.0; n],
        err: vec![0.0; n],
        evals: &mut evals,
    };

    let mut times = vec![t0];
    let mut states = x0.to_vec();
    let mut coeffs = Vec::new();
    let mut y = x0.to_vec();
    let mut t = t0;
    st.call(t, &y, 0)?;

    let span = t1 - t0;
    let max_step = opts.max_step.min(span);
    let mut h = opts.initial_step.unwrap_or_else(|| {
        // Hairer's starting step heuristic
        let sk: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
        let d0 = (y.iter().zip(&sk).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64).sqrt();
        let d1 = (st.k[0].iter().zip(&sk).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64).sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0.min(max_step)
    });
    h = h.min(max_step).max(1e-12 * span);

    let mut sw_prev: Vec<f64> = switches.iter().map(|s| s(&y)).collect();
    if sw_prev.contains(&0.0) {
        // starting on a surface: use the one-sided value in the direction of motion
        let nudge = 1e-12 * span;
        let ahead: Vec<f64> = y.iter().zip(&st.k[0]).map(|(a, b)| a + nudge * b).collect();
        st.call(t, &ahead, 0)?;
        for (v, s) in sw_prev.iter_mut().zip(switches) {
            *v = s(&ahead);
        }
    }
    let mut sw_new = sw_prev.clone();
    let (mut steps, mut rejected, mut events) = (0usize, 0usize, 0usize);
    let h_min = 1e-14 * t0.abs().max(t1.abs()).max(span);

    while t < t1 {
        if steps + rejected > opts.max_steps {
            return Err(Error::StepUnderflow { t, state: y.clone() });
        }
        let mut last = false;
        if t + h >= t1 || t + 1.01 * h >= t1 {
            h = t1 - t;
            last = true;
        }
        if h < h_min {
            return Err(Error::StepUnderflow { t, state: y.clone() });
        }
        st.step(t, &y, h)?;

        if !switches.is_empty() {
            for (v, s) in sw_new.iter_mut().zip(switches) {
                *v = s(&st.y_new);
            }
            if sign_changed(&sw_prev, &sw_new) {
                // bisect on the step length with fresh steps; keep the crossed end
                let (mut lo, mut hi) = (0.0, h);
                for _ in 0..200 {
                    if hi - lo <= 1e-12f64.max(h_min) {
                        break;
                    }
                    let mid = 0.5 * (lo + hi);
                    st.step(t, &y, mid)?;
                    for (v, s) in sw_new.iter_mut().zip(switches) {
                        *v = s(&st.y_new);
                    }
                    if sign_changed(&sw_prev, &sw_new) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                // step to just before the surface, then across it with a step
                // no longer than the bracket
                for he in [lo, hi - lo] {
                    if he <= 0.0 {
                        continue;
                    }
                    st.step(t, &y, he)?;
                    st.dense_coeffs(&y, he, &mut coeffs);
                    t += he;
                    if t1 - t <= 10.0 * h_min {
                        t = t1;
                    }
                    t = t.min(t1);
                    y.copy_from_slice(&st.y_new);
                    times.push(t);
                    states.extend_from_slice(&y);
                    st.k.swap(0, 6);
                    steps += 1;
                }
                // restart: the jump invalidates FSAL
                st.call(t, &y.clone(), 0)?;
                for (v, s) in sw_prev.iter_mut().zip(switches) {
                    *v = s(&y);
                }
                events += 1;
                continue;
            }
        }

        let err = st.error_norm(&y, opts);
        if err <= 1.0 {
            st.dense_coeffs(&y, h, &mut coeffs);
            t = if last { t1 } else { t + h };
            y.copy_from_slice(&st.y_new);
            times.push(t);
            states.extend_from_slice(&y);
            st.k.swap(0, 6);
            std::mem::swap(&mut sw_prev, &mut sw_new);
            steps += 1;
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = (h * fac).min(max_step);
        } else {
            rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
        }
    }

    let meta = TrajectoryMeta {
        solver: "dopri5".into(),
        rtol: opts.rtol,
        atol: opts.atol,
        steps,
        rejected,
        events,
    };
    Ok(Trajectory::from_dopri(n, times, states, coeffs, meta))
}
