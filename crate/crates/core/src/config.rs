//! Declarative experiment configuration, read from TOML.
//!
//! ```toml
//! experiment = "theorem2a"
//! p = [0.0, 0.0]
//! T = 1.0
//! ladder = { from = 4, to = 8 }
//!
//! [field]
//! builtin = "shear"
//! params = { g_profile = "cosprod" }
//!
//! [output]
//! dir = "out/shear"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{builtin, Builtin, FourierSeries, FourierTerm, Params, PeriodicScalarField, PeriodicVectorField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Theorem1,
    Theorem2a,
    Theorem2b,
    Transport,
    Example1,
    Example2,
    Example3,
    Example4,
    Example5,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Theorem1 => "theorem1",
            Self::Theorem2a => "theorem2a",
            Self::Theorem2b => "theorem2b",
            Self::Transport => "transport",
            Self::Example1 => "example1",
            Self::Example2 => "example2",
            Self::Example3 => "example3",
            Self::Example4 => "example4",
            Self::Example5 => "example5",
        }
    }

    /// Builtin used when the config has no `[field]` table.
    pub fn default_builtin(self) -> Option<&'static str> {
        match self {
            Self::Example1 => Some("example1_piecewise"),
            Self::Example2 => Some("example2_sawtooth"),
            Self::Example3 => Some("example3_almost_periodic"),
            Self::Example4 => Some("example4_transport_H"),
            Self::Example5 => Some("example5_gradient"),
            _ => None,
        }
    }
}

/// A builtin with parameters, a scalar Fourier list, or one Fourier list per
/// vector component.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Params::is_empty")]
    pub params: Params,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fourier: Option<Vec<FourierTerm>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<Vec<FourierTerm>>>,
    /// Use `1/G` in place of a scalar field.
    #[serde(default)]
    pub reciprocal: bool,
}

impl FieldSpec {
    pub fn builtin(name: &str) -> Self {
        Self { builtin: Some(name.to_string()), ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        let sources = [self.builtin.is_some(), self.fourier.is_some(), self.components.is_some()];
        if sources.iter().filter(|s| **s).count() != 1 {
            return Err(Error::config("field", "exactly one of `builtin`, `fourier`, `components` is required"));
        }
        if self.builtin.is_none() && !self.params.is_empty() {
            return Err(Error::config("field.params", "only valid together with `builtin`"));
        }
        if (self.fourier.is_some() || self.components.is_some()) && self.dim.is_none() {
            return Err(Error::config("field.dim", "required for Fourier lists"));
        }
        if self.dim == Some(0) {
            return Err(Error::config("field.dim", "must be at least 1"));
        }
        if let Some(c) = &self.components {
            if Some(c.len()) != self.dim {
                return Err(Error::config("field.components", format!("{} components for dim {:?}", c.len(), self.dim)));
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Builtin> {
        let b = if let Some(name) = &self.builtin {
            builtin(name, &self.params)?
        } else if let Some(terms) = &self.fourier {
            let s = FourierSeries::from_terms(self.dim.unwrap_or(1), terms)?;
            Builtin::Scalar(PeriodicScalarField::from_fourier("fourier", s))
        } else if let Some(comps) = &self.components {
            let dim = self.dim.unwrap_or(comps.len());
            let series = comps
                .iter()
                .map(|terms| FourierSeries::from_terms(dim, terms))
                .collect::<Result<Vec<_>>>()?;
            Builtin::Vector(PeriodicVectorField::new("fourier", dim, move |y, out| {
                for (o, s) in out.iter_mut().zip(&series) {
                    *o = s.eval(y);
                }
            }))
        } else {
            return Err(Error::config("field", "no field source"));
        };
        match (b, self.reciprocal) {
            (Builtin::Scalar(g), true) => Ok(Builtin::Scalar(g.reciprocal())),
            (Builtin::Vector(_), true) => Err(Error::config("field.reciprocal", "only applies to scalar fields")),
            (b, false) => Ok(b),
        }
    }

    pub fn scalar(&self) -> Result<PeriodicScalarField> {
        match self.build()? {
            Builtin::Scalar(g) => Ok(g),
            Builtin::Vector(_) => Err(Error::config("field", "expected a scalar field")),
        }
    }

    pub fn vector(&self) -> Result<PeriodicVectorField> {
        match self.build()? {
            Builtin::Vector(f) => Ok(f),
            Builtin::Scalar(_) => Err(Error::config("field", "expected a vector field")),
        }
    }
}

/// An explicit list, or `ε = base^-k` for `k = from..=to`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LadderSpec {
    List(Vec<f64>),
    Geometric {
        #[serde(default = "two")]
        base: f64,
        from: i32,
        to: i32,
    },
}

fn two() -> f64 {
    2.0
}

impl LadderSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Self::List(v) => v.clone(),
            Self::Geometric { base, from, to } => (*from..=*to).map(|k| base.powi(-k)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub ode: f64,
    pub corrector: f64,
    pub liouville: f64,
    pub slack: f64,
    pub slope_window: [f64; 2],
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { ode: 1e-10, corrector: 1e-10, liouville: 1e-8, slack: 3.0, slope_window: [0.85, 1.15] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    /// Relative paths resolve against the config file's directory.
    pub dir: PathBuf,
    pub trajectories: bool,
    pub trajectory_samples: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), trajectories: true, trajectory_samples: 1024 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShearSpec {
    /// Direction for Fourier-list profiles; builtin `shear` reads `params.a`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_max: Option<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanarSpec {
    pub allow_resonant: bool,
    pub liouville_degree: usize,
    pub grid_n: usize,
    pub t_long: f64,
}

impl Default for PlanarSpec {
    fn default() -> Self {
        Self { allow_resonant: false, liouville_degree: crate::planar::DEFAULT_LIOUVILLE_DEGREE, grid_n: 32, t_long: 1000.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Uniform,
    Kronecker,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransportSpec {
    /// `sine` (`sin(2πkx)`) or `constant`.
    pub v0: String,
    pub k: f64,
    pub value: f64,
    pub grid: usize,
    pub grid_kind: GridKind,
    /// Evaluation time; defaults to `T`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
}

impl Default for TransportSpec {
    fn default() -> Self {
        Self { v0: "sine".into(), k: 1.0, value: 1.0, grid: 256, grid_kind: GridKind::Kronecker, t: None }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    #[serde(rename = "T", default = "one")]
    pub t_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    pub ladder: LadderSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputSpec,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub parallelism: usize,
    #[serde(default)]
    pub shear: ShearSpec,
    #[serde(default)]
    pub planar: PlanarSpec,
    #[serde(default)]
    pub transport: TransportSpec,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses and validates. Syntax errors carry the line and column.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config("toml", e.to_string().trim_end()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), format!("cannot read: {e}")))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let ladder = self.ladder_values();
        if ladder.len() < 4 {
            return Err(Error::config("ladder", format!("needs at least 4 entries, got {}", ladder.len())));
        }
        if ladder.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::config("ladder", "entries must be positive and finite"));
        }
        if ladder.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::config("ladder", "must be strictly decreasing"));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::config("T", "must be positive"));
        }
        if let Some(t0) = self.t0 {
            if !(t0 >= 0.0 && t0 < self.t_end) {
                return Err(Error::config("t0", "must lie in [0, T)"));
            }
        }
        let t = &self.tolerances;
        for (name, v) in [("ode", t.ode), ("corrector", t.corrector), ("liouville", t.liouville), ("slack", t.slack)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("tolerances.{name}"), format!("must be positive, got {v}")));
            }
        }
        let [lo, hi] = t.slope_window;
        if !(lo < hi) {
            return Err(Error::config("tolerances.slope_window", "needs lo < hi"));
        }
        if let Some(p) = &self.p {
            if p.is_empty() || p.iter().any(|x| !x.is_finite()) {
                return Err(Error::config("p", "must be a non-empty list of finite numbers"));
            }
        }
        match &self.field {
            Some(f) => f.validate()?,
            None if self.experiment.default_builtin().is_none() => {
                return Err(Error::config("field", format!("required for `{}`", self.experiment.as_str())));
            }
            None => {}
        }
        if self.output.trajectory_samples == 0 {
            return Err(Error::config("output.trajectory_samples", "must be positive"));
        }
        if self.planar.grid_n < 4 || !(self.planar.t_long > 0.0) {
            return Err(Error::config("planar", "grid_n must be at least 4 and t_long positive"));
        }
        if self.experiment == ExperimentKind::Transport || self.experiment == ExperimentKind::Example4 {
            let tr = &self.transport;
            if tr.grid == 0 {
                return Err(Error::config("transport.grid", "must be positive"));
            }
            if !matches!(tr.v0.as_str(), "sine" | "constant") {
                return Err(Error::config("transport.v0", format!("`{}` is not one of sine, constant", tr.v0)));
            }
            if let Some(tt) = tr.t {
                if !(tt >= 0.0 && tt <= self.t_end) {
                    return Err(Error::config("transport.t", "must lie in [0, T]"));
                }
            }
        }
        Ok(())
    }

    pub fn ladder_values(&self) -> Vec<f64> {
        self.ladder.values()
    }

    pub fn experiment_id(&self) -> String {
        self.id.clone().unwrap_or_else(|| self.experiment.as_str().to_string())
    }

    /// The configured field, or the experiment's default builtin.
    pub fn field_spec(&self) -> Result<FieldSpec> {
        match (&self.field, self.experiment.default_builtin()) {
            (Some(f), _) => Ok(f.clone()),
            (None, Some(name)) => Ok(FieldSpec::builtin(name)),
            (None, None) => Err(Error::config("field", "missing")),
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        match &self.base_dir {
            Some(base) if self.output.dir.is_relative() => base.join(&self.output.dir),
            _ => self.output.dir.clone(),
        }
    }

    pub fn slope_window(&self) -> (f64, f64) {
        (self.tolerances.slope_window[0], self.tolerances.slope_window[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
experiment = "theorem1"
p = [0.0]
ladder = [0.0625, 0.03125, 0.015625, 0.0078125]
[field]
fourier = [{ index = [0], re = 1.0, im = 0.0 }, { index = [1], re = 0.25, im = 0.0 }]
dim = 1
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.experiment, ExperimentKind::Theorem1);
        assert_eq!(c.t_end, 1.0);
        assert_eq!(c.tolerances, Tolerances::default());
        assert_eq!(c.experiment_id(), "theorem1");
        let g = c.field_spec().unwrap().scalar().unwrap();
        assert!((g.eval(&[0.0]) - 1.5).abs() < 1e-14);
    }

    #[test]
    fn geometric_ladder() {
        let c = ExperimentConfig::from_toml_str(&MINIMAL.replace(
            "ladder = [0.0625, 0.03125, 0.015625, 0.0078125]",
            "ladder = { from = 4, to = 9 }",
        ))
        .unwrap();
        assert_eq!(c.ladder_values(), (4..=9).map(|k| 2f64.powi(-k)).collect::<Vec<_>>());
    }

    #[test]
    fn short_ladder_is_a_config_error() {
        let text = MINIMAL.replace("ladder = [0.0625, 0.03125, 0.015625, 0.0078125]", "ladder = [0.1, 0.05, 0.025]");
        match ExperimentConfig::from_toml_str(&text) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "ladder"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn increasing_ladder_and_bad_tolerance_rejected() {
        let text = MINIMAL.replace("0.0625, 0.03125", "0.03125, 0.0625");
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(Error::Config { .. })));
        let text = format!("{MINIMAL}\n[tolerances]\node = 0.0\n");
        match ExperimentConfig::from_toml_str(&text) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "tolerances.ode"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_errors_report_location() {
        let err = ExperimentConfig::from_toml_str("experiment = \"theorem1\"\nladder = [0.1,\n").unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
        let err = ExperimentConfig::from_toml_str(&format!("{MINIMAL}\nbogus = 1\n")).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn field_is_required_for_theorems_only() {
        let text = "experiment = \"theorem2b\"\nladder = { from = 4, to = 8 }\n";
        assert!(ExperimentConfig::from_toml_str(text).is_err());
        let text = "experiment = \"example2\"\nladder = { from = 4, to = 8 }\n";
        let c = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(c.field_spec().unwrap().builtin.as_deref(), Some("example2_sawtooth"));
    }

    #[test]
    fn components_build_a_vector_field() {
        let text = r#"
experiment = "theorem2b"
ladder = { from = 4, to = 8 }
[field]
dim = 2
components = [
  [{ index = [0, 0], re = 2.0, im = 0.0 }, { index = [0, 1], re = 0.5, im = 0.0 }],
  [{ index = [0, 0], re = 1.0, im = 0.0 }],
]
"#;
        let f = ExperimentConfig::from_toml_str(text).unwrap().field_spec().unwrap().vector().unwrap();
        let v = f.eval(&[0.3, 0.0]);
        assert!((v[0] - 3.0).abs() < 1e-14 && (v[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn echo_round_trips() {
        let c = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let back: ExperimentConfig = toml::from_str(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn relative_output_resolves_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, format!("{MINIMAL}\n[output]\ndir = \"res\"\n")).unwrap();
        let c = ExperimentConfig::load(&path).unwrap();
        assert_eq!(c.output_dir(), dir.path().join("res"));
    }
}
