//! Convergence reports and log–log rate fits.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

/// Least-squares fit of `log err = slope·log eps + intercept`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub warnings: Vec<String>,
}

pub fn fit_rate(eps: &[f64], err: &[f64]) -> Result<RateFit> {
    if eps.len() != err.len() {
        return Err(Error::InvalidInput(format!("{} abscissae but {} errors", eps.len(), err.len())));
    }
    if eps.len() < 4 {
        return Err(Error::InvalidInput(format!("rate fit needs at least 4 points, got {}", eps.len())));
    }
    if let Some(e) = eps.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidInput(format!("abscissa {e} is not positive")));
    }
    let mut warnings = Vec::new();
    let ly: Vec<f64> = err
        .iter()
        .map(|&e| {
            if !(e >= 0.0) || !e.is_finite() {
                return Err(Error::InvalidInput(format!("error value {e} is not a finite non-negative number")));
            }
            if e < f64::EPSILON {
                warnings.push(format!("error {e:e} floored at machine epsilon"));
                Ok(f64::EPSILON.ln())
            } else {
                Ok(e.ln())
            }
        })
        .collect::<Result<_>>()?;
    let lx: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("abscissae are all equal".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(RateFit { slope, intercept, r_squared, warnings })
}

/// At least 4 entries, positive and strictly decreasing.
pub fn validate_ladder(ladder: &[f64]) -> Result<()> {
    if ladder.len() < 4 {
        return Err(Error::InvalidInput(format!("ladder needs at least 4 entries, got {}", ladder.len())));
    }
    if ladder.windows(2).any(|w| !(w[1] < w[0])) || ladder.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidInput("ladder must be positive and strictly decreasing".into()));
    }
    Ok(())
}

/// What the per-ε errors are compared against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceRate {
    Eps,
    Delta,
    EpsLogEps,
    CorrectorBound,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LadderEntry {
    pub eps: f64,
    pub error: f64,
    /// Reference value (δ(ε), ε, …) the error is bounded against, if any.
    pub reference: Option<f64>,
    pub within: Option<bool>,
}

/// A named scalar check with its limit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, limit, pass: value <= limit }
    }

    pub fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, limit, pass: value >= limit }
    }
}

/// Per-ε errors, the fitted rate and the pass verdict for one experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub experiment: String,
    pub reference_rate: ReferenceRate,
    pub slack: f64,
    pub entries: Vec<LadderEntry>,
    pub fit: RateFit,
    /// Fit of error against the reference values instead of ε.
    pub fit_vs_reference: Option<RateFit>,
    pub slope_window: Option<(f64, f64)>,
    pub checks: Vec<Check>,
    pub constants: Vec<(String, f64)>,
    pub warnings: Vec<String>,
    pub pass: bool,
}

impl ConvergenceReport {
    /// Builds the report. Entry `k` is within bound when
    /// `error ≤ slack·reference[k]`.
    pub fn new(
        experiment: impl Into<String>,
        reference_rate: ReferenceRate,
        eps: &[f64],
        errors: &[f64],
        references: Option<&[f64]>,
        slack: f64,
        slope_window: Option<(f64, f64)>,
    ) -> Result<Self> {
        let fit = fit_rate(eps, errors)?;
        let fit_vs_reference = match references {
            Some(r) if r.iter().all(|v| *v > 0.0) => Some(fit_rate(r, errors)?),
            _ => None,
        };
        let entries = eps
            .iter()
            .zip(errors)
            .enumerate()
            .map(|(k, (&e, &err))| {
                let reference = references.map(|r| r[k]);
                LadderEntry { eps: e, error: err, reference, within: reference.map(|r| err <= slack * r) }
            })
            .collect();
        let mut report = Self {
            experiment: experiment.into(),
            reference_rate,
            slack,
            entries,
            warnings: fit.warnings.clone(),
            fit,
            fit_vs_reference,
            slope_window,
            checks: Vec::new(),
            constants: Vec::new(),
            pass: false,
        };
        report.update_pass();
        Ok(report)
    }

    pub fn with_check(mut self, check: Check) -> Self {
        self.checks.push(check);
        self.update_pass();
        self
    }

    pub fn with_constant(mut self, name: impl Into<String>, value: f64) -> Self {
        self.constants.push((name.into(), value));
        self
    }

    pub fn with_warning(mut self, warning: impl Into<String>) -> Self {
        self.warnings.push(warning.into());
        self
    }

    pub fn slope_ok(&self) -> bool {
        self.slope_window.map_or(true, |(lo, hi)| self.fit.slope >= lo && self.fit.slope <= hi)
    }

    pub fn bounds_ok(&self) -> bool {
        self.entries.iter().all(|e| e.within != Some(false))
    }

    fn update_pass(&mut self) {
        self.pass = self.fit.slope.is_finite() && self.slope_ok() && self.bounds_ok() && self.checks.iter().all(|c| c.pass);
    }

    pub fn errors(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.error).collect()
    }

    pub fn max_ratio(&self) -> Option<f64> {
        self.entries.iter().filter_map(|e| e.reference.map(|r| e.error / r)).reduce(f64::max)
    }

    /// `eps,error,reference` rows.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "eps,error,reference")?;
        for e in &self.entries {
            match e.reference {
                Some(r) => writeln!(w, "{},{},{}", e.eps, e.error, r)?,
                None => writeln!(w, "{},{},", e.eps, e.error)?,
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `ε·|log ε|`.
pub fn eps_log_eps(eps: f64) -> f64 {
    eps * eps.ln().abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ladder(n: i32) -> Vec<f64> {
        (4..4 + n).map(|k| 2f64.powi(-k)).collect()
    }

    #[test]
    fn linear_and_sqrt_rates() {
        let eps = ladder(6);
        let lin: Vec<f64> = eps.iter().map(|e| 3.0 * e).collect();
        let fit = fit_rate(&eps, &lin).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-10);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        let sq: Vec<f64> = eps.iter().map(|e| 0.2 * e.sqrt()).collect();
        assert!((fit_rate(&eps, &sq).unwrap().slope - 0.5).abs() < 1e-10);
    }

    #[test]
    fn zero_errors_are_floored_with_warning() {
        let eps = ladder(4);
        let fit = fit_rate(&eps, &[1e-3, 0.0, 1e-4, 1e-5]).unwrap();
        assert_eq!(fit.warnings.len(), 1);
        assert!(fit.slope.is_finite());
    }

    #[test]
    fn short_or_mismatched_input_rejected() {
        assert!(fit_rate(&[0.1, 0.05, 0.025], &[1.0, 0.5, 0.25]).is_err());
        assert!(fit_rate(&[0.1, 0.05, 0.025, 0.01], &[1.0, 0.5, 0.25]).is_err());
        assert!(fit_rate(&[0.1, 0.1, 0.1, 0.1], &[1.0, 0.5, 0.25, 0.1]).is_err());
        assert!(fit_rate(&[0.1, 0.05, 0.025, 0.01], &[1.0, -0.5, 0.25, 0.1]).is_err());
    }

    #[test]
    fn report_pass_logic() {
        let eps = ladder(5);
        let err: Vec<f64> = eps.iter().map(|e| 0.5 * e).collect();
        let refs: Vec<f64> = eps.clone();
        let r = ConvergenceReport::new("t", ReferenceRate::Eps, &eps, &err, Some(&refs), 1.0, Some((0.9, 1.1))).unwrap();
        assert!(r.pass);
        assert!((r.max_ratio().unwrap() - 0.5).abs() < 1e-15);
        let r = r.with_check(Check::at_most("x", 2.0, 1.0));
        assert!(!r.pass);

        let tight = ConvergenceReport::new("t", ReferenceRate::Eps, &eps, &err, Some(&refs), 0.4, None).unwrap();
        assert!(!tight.pass);
        assert!(tight.entries.iter().all(|e| e.within == Some(false)));
    }

    #[test]
    fn csv_rows() {
        let eps = ladder(4);
        let r = ConvergenceReport::new("t", ReferenceRate::Eps, &eps, &eps, None, 3.0, None).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("eps,error,reference\n0.0625,0.0625,\n"));
    }

    proptest! {
        #[test]
        fn power_laws_are_recovered(c in 1e-3f64..1e3, p in 0.2f64..3.0) {
            let eps = ladder(6);
            let err: Vec<f64> = eps.iter().map(|e| c * e.powf(p)).collect();
            let fit = fit_rate(&eps, &err).unwrap();
            prop_assert!((fit.slope - p).abs() < 1e-9);
            prop_assert!((fit.intercept - c.ln()).abs() < 1e-8);
        }
    }
}
