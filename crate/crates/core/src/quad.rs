//! Gauss–Kronrod (7, 15) quadrature, fixed and adaptive.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One 15-point Kronrod panel: (integral, |Kronrod − Gauss|).
pub fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive bisection of GK15 panels until the summed error estimate is
/// below `abs_tol`. Long intervals are first split into `pieces` panels.
pub fn integrate(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, pieces: usize, abs_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let pieces = pieces.max(1);
    let mut stack: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(pieces);
    let w = (b - a) / pieces as f64;
    for i in 0..pieces {
        let lo = a + w * i as f64;
        let hi = if i + 1 == pieces { b } else { lo + w };
        let (v, e) = gk15(&mut f, lo, hi);
        stack.push((lo, hi, v, e));
    }
    let mut total: f64 = stack.iter().map(|p| p.2).sum();
    let mut err: f64 = stack.iter().map(|p| p.3).sum();
    let mut evals = 0usize;
    while err > abs_tol {
        // refine the worst panel
        let (idx, _) = stack
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, v, e) = stack.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || evals > 200_000 {
            return Err(Error::Quadrature { a, b, estimate: err });
        }
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        total += v1 + v2 - v;
        err += e1 + e2 - e;
        stack.push((lo, mid, v1, e1));
        stack.push((mid, hi, v2, e2));
        evals += 30;
    }
    if !total.is_finite() {
        return Err(Error::Quadrature { a, b, estimate: err });
    }
    Ok(total)
}
