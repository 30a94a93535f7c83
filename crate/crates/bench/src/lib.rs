//! Fixtures shared by the criterion benches in `benches/`.

use std::f64::consts::PI;

use homog_core::field::{shear_profile, FourierSeries, Params, ParamValue};
use homog_core::{PeriodicScalarField, PeriodicVectorField};

pub const GOLDEN: f64 = 1.618_033_988_749_895;

/// `1 + 0.5 cos(2πy)` on the circle.
pub fn cosine_profile() -> PeriodicScalarField {
    PeriodicScalarField::new("1+0.5cos", 1, |y| 1.0 + 0.5 * (2.0 * PI * y[0]).cos())
}

/// `a/G` with `a = (1, golden)` and `G = 1 + 0.5 cos(2πy₁) cos(2πy₂)`.
pub fn golden_shear() -> (Vec<f64>, PeriodicScalarField, PeriodicVectorField) {
    let a = vec![1.0, GOLDEN];
    let params = Params::from([("g_profile".to_string(), ParamValue::Text("cosprod".into()))]);
    let g = shear_profile(2, &params).expect("valid shear profile");
    let f = PeriodicVectorField::shear(a.clone(), &g);
    (a, g, f)
}

/// Deterministic band-limited positive profile on the 2-torus with every
/// mode up to `degree`.
pub fn dense_series(degree: i64) -> FourierSeries {
    let mut s = FourierSeries::zero(2, degree as usize);
    s.add_cos(&[0, 0], 4.0);
    for m1 in -degree..=degree {
        for m2 in 0..=degree {
            if m2 == 0 && m1 <= 0 {
                continue;
            }
            let w = 0.1 / (1 + m1.abs() + m2) as f64;
            s.add_cos(&[m1, m2], w * ((m1 * 7 + m2 * 3) as f64).sin());
            s.add_sin(&[m1, m2], w * ((m1 * 5 - m2) as f64).cos());
        }
    }
    s
}
