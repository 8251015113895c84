//! Mean-field Langevin dynamics: energies on measures, particle
//! discretizations with synchronous couplings, Wasserstein distances, the
//! Gibbs fixed-point map and the experiments built on them.

pub mod config;
pub mod dynamics;
pub mod energy;
pub mod error;
pub mod experiments;
pub mod gibbs;
pub mod measures;
pub mod wasserstein;

pub use config::{parse_config, parse_config_str, ExperimentConfig, ExperimentKind};
pub use dynamics::{CouplingTrace, KineticState, OverdampedState, QuadraticForm, SimParams};
pub use energy::{DeclaredConstants, EnergyFamily, EnergySpec, KineticFields, Potential};
pub use error::{Error, Result};
pub use experiments::{emit_report, run, ExperimentReport, KineticConstants, TestOutcome};
pub use measures::{EmpiricalMeasure, GridMeasure1D, Measure};
