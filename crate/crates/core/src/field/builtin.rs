//! Library of the fields used throughout the examples and theorem checks.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{FourierSeries, PeriodicScalarField, PeriodicVectorField, Switching};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Number(f64),
    Vector(Vec<f64>),
    Text(String),
}

pub type Params = BTreeMap<String, ParamValue>;

#[derive(Clone, Debug)]
pub enum Builtin {
    Scalar(PeriodicScalarField),
    Vector(PeriodicVectorField),
}

/// `(name, description)` of every builtin.
pub const BUILTINS: &[(&str, &str)] = &[
    (
        "example1_piecewise",
        "vector d=2: F2 = 1, F1 = indicator of (0,1/2] in y1 (variant=literal) or y2 (variant=x2_dependent); smoothing=exact|mollified, eta",
    ),
    ("example2_sawtooth", "scalar d=1: saw-like profile with peak h+sigma and floor sigma; a, h, sigma"),
    (
        "example3_almost_periodic",
        "scalar d=1, time-dependent: sum_{k=0..K} sin(t/(2k+1))/(2k+1)^2 + shift; K, shift",
    ),
    ("example4_transport_H", "scalar d=1 transport speed: profile=sawtooth (h, sigma) or cosine (mean, amp)"),
    ("example5_gradient", "vector d=2: gradient of the bounded potential amp/(2pi) cos(2pi y1) cos(2pi y2); amp"),
    ("shear", "vector a/G(y): a (vector), g_profile=const|cos|cosprod, g_mean, g_amp"),
    ("divfree_planar", "vector d=2: (c1 + amp1 cos(2pi y2), c2 + amp2 cos(2pi y1)); divergence free"),
];

struct Reader<'a> {
    params: &'a Params,
}

impl Reader<'_> {
    fn number(&self, key: &str, default: f64) -> Result<f64> {
        match self.params.get(key) {
            None => Ok(default),
            Some(ParamValue::Number(x)) if x.is_finite() => Ok(*x),
            Some(other) => Err(Error::param(key, format!("expected a finite number, got {other:?}"))),
        }
    }

    fn vector(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.params.get(key) {
            None => Ok(default.to_vec()),
            Some(ParamValue::Vector(v)) if !v.is_empty() && v.iter().all(|x| x.is_finite()) => Ok(v.clone()),
            Some(other) => Err(Error::param(key, format!("expected a non-empty vector, got {other:?}"))),
        }
    }

    fn text<'b>(&self, key: &str, default: &'b str, allowed: &[&'b str]) -> Result<&'b str> {
        match self.params.get(key) {
            None => Ok(default),
            Some(ParamValue::Text(s)) => allowed
                .iter()
                .find(|a| **a == s.as_str())
                .copied()
                .ok_or_else(|| Error::param(key, format!("`{s}` is not one of {allowed:?}"))),
            Some(other) => Err(Error::param(key, format!("expected text, got {other:?}"))),
        }
    }
}

pub fn builtin(name: &str, params: &Params) -> Result<Builtin> {
    let r = Reader { params };
    match name {
        "example1_piecewise" => example1(&r).map(Builtin::Vector),
        "example2_sawtooth" => {
            let a = r.number("a", 1.0)?;
            if a <= 0.0 {
                return Err(Error::param("a", "period must be positive"));
            }
            sawtooth(r.number("h", 3.0)?, r.number("sigma", 1.0)?).map(Builtin::Scalar)
        }
        "example3_almost_periodic" => {
            let k = r.number("K", 50.0)?;
            if k < 0.0 || k.fract() != 0.0 {
                return Err(Error::param("K", "must be a non-negative integer"));
            }
            Ok(Builtin::Scalar(almost_periodic(k as usize, r.number("shift", 0.0)?)))
        }
        "example4_transport_H" => match r.text("profile", "sawtooth", &["sawtooth", "cosine"])? {
            "sawtooth" => sawtooth(r.number("h", 3.0)?, r.number("sigma", 1.0)?).map(Builtin::Scalar),
            _ => {
                let (mean, amp) = (r.number("mean", 1.0)?, r.number("amp", 0.5)?);
                if mean <= amp.abs() {
                    return Err(Error::param("mean", "must exceed |amp| so that H > 0"));
                }
                let mut s = FourierSeries::zero(1, 1);
                s.add_cos(&[0], mean);
                s.add_cos(&[1], amp);
                Ok(Builtin::Scalar(PeriodicScalarField::from_fourier("transport_cosine", s)))
            }
        },
        "example5_gradient" => {
            let amp = r.number("amp", 1.0)?;
            Ok(Builtin::Vector(
                PeriodicVectorField::new("example5_gradient", 2, move |y, out| {
                    let (s1, c1) = (2.0 * PI * y[0]).sin_cos();
                    let (s2, c2) = (2.0 * PI * y[1]).sin_cos();
                    out[0] = -amp * s1 * c2;
                    out[1] = -amp * c1 * s2;
                })
                .with_lipschitz(2.0 * PI * amp.abs() * 2f64.sqrt()),
            ))
        }
        "shear" => {
            let golden = (1.0 + 5f64.sqrt()) / 2.0;
            let a = r.vector("a", &[1.0, golden])?;
            let g = shear_profile(a.len(), params)?;
            let fs = g.fourier().expect("shear profiles are band limited");
            let lo = fs.mean() - fs.iter().filter(|(m, _)| m.iter().any(|&k| k != 0)).map(|(_, c)| c.norm()).sum::<f64>();
            let hi = 2.0 * fs.mean() - lo;
            let amax = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let mut f = PeriodicVectorField::shear(a.clone(), &g);
            if a.iter().all(|&x| x > 0.0) {
                let amin = a.iter().fold(f64::INFINITY, |m, x| m.min(*x));
                f = f.with_positivity(amin / hi, amax / lo);
            }
            Ok(Builtin::Vector(f))
        }
        "divfree_planar" => {
            let (c1, amp1) = (r.number("c1", 2.0)?, r.number("amp1", 1.0)?);
            let (c2, amp2) = (r.number("c2", 1.0)?, r.number("amp2", 0.0)?);
            if c1 <= amp1.abs() || c2 <= amp2.abs() {
                return Err(Error::param("c1", "components must stay positive (c_i > |amp_i|)"));
            }
            Ok(Builtin::Vector(
                PeriodicVectorField::new("divfree_planar", 2, move |y, out| {
                    out[0] = c1 + amp1 * (2.0 * PI * y[1]).cos();
                    out[1] = c2 + amp2 * (2.0 * PI * y[0]).cos();
                })
                .with_lipschitz(2.0 * PI * amp1.abs().max(amp2.abs()))
                .with_positivity((c1 - amp1.abs()).min(c2 - amp2.abs()), (c1 + amp1.abs()).max(c2 + amp2.abs())),
            ))
        }
        other => Err(Error::UnknownBuiltin(other.to_string())),
    }
}

/// Shear profile `G` read from `g_profile`, `g_mean`, `g_amp`.
pub fn shear_profile(dim: usize, params: &Params) -> Result<PeriodicScalarField> {
    let r = Reader { params };
    let kind = r.text("g_profile", "cosprod", &["const", "cos", "cosprod"])?;
    let mean = r.number("g_mean", 1.0)?;
    let amp = if kind == "const" { 0.0 } else { r.number("g_amp", 0.5)? };
    if mean <= amp.abs() {
        return Err(Error::param("g_mean", "must exceed |g_amp| so that G > 0"));
    }
    let mut s = FourierSeries::zero(dim, 0);
    s.add_cos(&vec![0; dim], mean);
    match kind {
        "cos" => {
            let mut m = vec![0; dim];
            m[0] = 1;
            s.add_cos(&m, amp);
        }
        "cosprod" => {
            // ∏ cos(2π y_i) = 2^{-d} Σ_{signs} exp(2πi ⟨±1, y⟩)
            let w = amp / (1u64 << dim) as f64;
            for mask in 0..(1u32 << dim) {
                let m: Vec<i64> = (0..dim).map(|i| if mask >> i & 1 == 1 { -1 } else { 1 }).collect();
                s.insert(m, w.into());
            }
        }
        _ => {}
    }
    Ok(PeriodicScalarField::from_fourier(format!("G_{kind}"), s))
}

fn sawtooth(h: f64, sigma: f64) -> Result<PeriodicScalarField> {
    if h <= 0.0 {
        return Err(Error::param("h", "peak height must be positive"));
    }
    if sigma <= 0.0 {
        return Err(Error::param("sigma", "floor must be positive"));
    }
    Ok(PeriodicScalarField::new(format!("sawtooth(h={h},sigma={sigma})"), 1, move |y| {
        let u = y[0] - y[0].floor();
        if u < 0.5 {
            2.0 * h * u + sigma
        } else {
            2.0 * h * (1.0 - u) + sigma
        }
    }))
}

fn almost_periodic(k_max: usize, shift: f64) -> PeriodicScalarField {
    let weights: Vec<(f64, f64)> = (0..=k_max)
        .map(|k| {
            let q = (2 * k + 1) as f64;
            (1.0 / q, 1.0 / (q * q))
        })
        .collect();
    PeriodicScalarField::with_time(format!("almost_periodic(K={k_max})"), 1, move |t, _| {
        shift + weights.iter().map(|(freq, w)| w * (freq * t).sin()).sum::<f64>()
    })
}

/// Bound on the dropped tail `Σ_{k>K} (2k+1)^{-2} ≤ 1/(2(2K+1))`.
pub fn example3_tail_bound(k_max: usize) -> f64 {
    1.0 / (2.0 * (2 * k_max + 1) as f64)
}

/// Length of `(0,1/2] + ℤ` inside `(-∞, x]`, shifted so that it is 0 at 0.
fn half_indicator_integral(x: f64) -> f64 {
    let k = x.floor();
    0.5 * k + (x - k).min(0.5)
}

fn example1(r: &Reader) -> Result<PeriodicVectorField> {
    let variant = r.text("variant", "literal", &["literal", "x2_dependent"])?;
    let smoothing = r.text("smoothing", "exact", &["exact", "mollified"])?;
    let axis = if variant == "literal" { 0 } else { 1 };
    let name = format!("example1_{variant}_{smoothing}");
    match smoothing {
        "exact" => Ok(PeriodicVectorField::new(name, 2, move |y, out| {
            let u = y[axis] - y[axis].floor();
            // (0, 1/2] has F1 = 1; u == 0 belongs to (1/2, 1].
            out[0] = if u > 0.0 && u <= 0.5 { 1.0 } else { 0.0 };
            out[1] = 1.0;
        })
        .with_switching(Switching { axis, offsets: vec![0.0, 0.5] })),
        _ => {
            let eta = r.number("eta", 0.1)?;
            if !(eta > 0.0 && eta < 0.5) {
                return Err(Error::param("eta", "mollification width must lie in (0, 1/2)"));
            }
            Ok(PeriodicVectorField::new(name, 2, move |y, out| {
                let u = y[axis];
                out[0] = (half_indicator_integral(u + 0.5 * eta) - half_indicator_integral(u - 0.5 * eta)) / eta;
                out[1] = 1.0;
            })
            .with_lipschitz(1.0 / eta))
        }
    }
}
