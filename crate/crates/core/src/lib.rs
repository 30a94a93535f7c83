//! Numerical homogenization of oscillatory systems `dX/dt = F(X/ε)`.

pub mod averaging;
pub mod config;
pub mod error;
pub mod experiments;
pub mod field;
pub mod homog1d;
pub mod integrate;
pub mod quad;
pub mod report;
pub mod planar;
pub mod shear;
pub mod transport;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{Error, Result};
pub use experiments::{run_config_file, run_experiment, run_example, run_suite, SuiteOutcome, SuiteReport};
pub use field::{PeriodicScalarField, PeriodicVectorField};
pub use integrate::{Trajectory, TrajectoryMeta};
pub use report::{fit_rate, Check, ConvergenceReport, RateFit, ReferenceRate};
