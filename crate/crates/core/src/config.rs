//! Experiment configuration files.
//!
//! A config is a JSON object with an `experiment` kind plus parameters; every
//! optional field has a documented default and flags on the command line
//! only override what the file says.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::energy::{EnergySpec, KineticFields};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Contraction,
    Poc,
    KineticContraction,
    KineticPoc,
    FixedPoint,
    KineticConstants,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Contraction,
        ExperimentKind::Poc,
        ExperimentKind::KineticContraction,
        ExperimentKind::KineticPoc,
        ExperimentKind::FixedPoint,
        ExperimentKind::KineticConstants,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Contraction => "contraction",
            ExperimentKind::Poc => "poc",
            ExperimentKind::KineticContraction => "kinetic-contraction",
            ExperimentKind::KineticPoc => "kinetic-poc",
            ExperimentKind::FixedPoint => "fixed-point",
            ExperimentKind::KineticConstants => "kinetic-constants",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    fn is_kinetic(self) -> bool {
        matches!(
            self,
            ExperimentKind::KineticContraction
                | ExperimentKind::KineticPoc
                | ExperimentKind::KineticConstants
        )
    }

    fn simulates(self) -> bool {
        !matches!(
            self,
            ExperimentKind::FixedPoint | ExperimentKind::KineticConstants
        )
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Isotropic Gaussian: every coordinate is `mean + sd · ξ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianInit {
    #[serde(default)]
    pub mean: f64,
    #[serde(default = "one")]
    pub sd: f64,
}

impl Default for GaussianInit {
    fn default() -> Self {
        GaussianInit { mean: 0.0, sd: 1.0 }
    }
}

/// Initial laws. System A (and the chaos-propagation copies) start from `a`;
/// the coupled system B from `b`. With `b_shares_draws` B reuses A's
/// standard normal draws, so `B_i = mean_b + sd_b ξ_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    #[serde(default)]
    pub a: GaussianInit,
    #[serde(default = "default_init_b")]
    pub b: GaussianInit,
    #[serde(default)]
    pub velocity_a: GaussianInit,
    #[serde(default = "default_velocity_b")]
    pub velocity_b: GaussianInit,
    #[serde(default = "yes")]
    pub b_shares_draws: bool,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            a: GaussianInit::default(),
            b: default_init_b(),
            velocity_a: GaussianInit::default(),
            velocity_b: default_velocity_b(),
            b_shares_draws: true,
        }
    }
}

fn default_init_b() -> GaussianInit {
    GaussianInit { mean: 2.0, sd: 0.5 }
}

fn default_velocity_b() -> GaussianInit {
    GaussianInit {
        mean: -1.0,
        sd: 0.5,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "minus_ten")]
    pub lo: f64,
    #[serde(default = "ten")]
    pub hi: f64,
    #[serde(default = "default_nodes")]
    pub m: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            lo: -10.0,
            hi: 10.0,
            m: 2001,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPointConfig {
    /// Picard start `μ₀`, a Gaussian on the grid.
    #[serde(default = "default_picard_start")]
    pub start: GaussianInit,
    #[serde(default = "default_picard_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Random Gaussian-mixture pairs fed to the contraction-ratio check.
    #[serde(default)]
    pub ratio_pairs: usize,
    #[serde(default = "default_ratio_slack")]
    pub ratio_slack: f64,
    #[serde(default = "default_residual_tol")]
    pub residual_tol: f64,
    #[serde(default = "default_variance_tol")]
    pub variance_tol: f64,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig {
            start: default_picard_start(),
            tol: default_picard_tol(),
            max_iter: default_max_iter(),
            ratio_pairs: 0,
            ratio_slack: default_ratio_slack(),
            residual_tol: default_residual_tol(),
            variance_tol: default_variance_tol(),
        }
    }
}

fn default_picard_start() -> GaussianInit {
    GaussianInit { mean: 1.0, sd: 2.0 }
}
fn default_picard_tol() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    500
}
fn default_ratio_slack() -> f64 {
    0.02
}
fn default_residual_tol() -> f64 {
    1e-3
}
fn default_variance_tol() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Relative slack on decay rates.
    #[serde(default = "default_rate_tol")]
    pub rate: f64,
    /// Absolute slack on log-log scaling slopes.
    #[serde(default = "default_slope_tol")]
    pub slope: f64,
    /// Relative spread allowed in the late-time moment plateau.
    #[serde(default = "default_plateau_tol")]
    pub plateau: f64,
    /// Minimum `R²` of the `ln E[Q]` fit.
    #[serde(default = "default_r_squared")]
    pub r_squared: f64,
    /// Relative agreement with the linear matrix-exponential control.
    #[serde(default = "default_oracle_tol")]
    pub oracle: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rate: default_rate_tol(),
            slope: default_slope_tol(),
            plateau: default_plateau_tol(),
            r_squared: default_r_squared(),
            oracle: default_oracle_tol(),
        }
    }
}

fn default_rate_tol() -> f64 {
    0.15
}
fn default_slope_tol() -> f64 {
    0.15
}
fn default_plateau_tol() -> f64 {
    0.1
}
fn default_r_squared() -> f64 {
    0.9
}
fn default_oracle_tol() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<EnergySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kinetic: Option<KineticFields>,
    #[serde(default = "one_usize")]
    pub dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon", alias = "T")]
    pub horizon: f64,
    #[serde(default = "default_record_every")]
    pub record_every: f64,
    #[serde(default = "one_usize")]
    pub replicas: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub fixed_point: FixedPointConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Fit window as fractions of the horizon.
    #[serde(default = "default_fit_window")]
    pub fit_window: [f64; 2],
    /// Size of the reference system standing in for the nonlinear law;
    /// defaults to `max(8192, 8 n_max)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_size: Option<usize>,
    /// `γ` for `kinetic-constants` runs without an energy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Overrides `ε = λ_B` in the kinetic constant selection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Whether kinetic contraction also runs the linear control.
    #[serde(default = "yes")]
    pub linear_control: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn ten() -> f64 {
    10.0
}
fn minus_ten() -> f64 {
    -10.0
}
fn default_nodes() -> usize {
    2001
}
fn default_dt() -> f64 {
    1e-3
}
fn default_horizon() -> f64 {
    2.0
}
fn default_record_every() -> f64 {
    0.01
}
fn default_fit_window() -> [f64; 2] {
    [0.2, 0.9]
}

fn invalid(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

fn check_gaussian(path: &str, g: &GaussianInit) -> Result<()> {
    if !g.mean.is_finite() {
        return Err(invalid(&format!("{path}.mean"), "must be finite"));
    }
    if !(g.sd >= 0.0 && g.sd.is_finite()) {
        return Err(invalid(
            &format!("{path}.sd"),
            "must be finite and nonnegative",
        ));
    }
    Ok(())
}

impl ExperimentConfig {
    /// A config with every default filled in.
    pub fn new(experiment: ExperimentKind) -> Self {
        serde_json::from_value(serde_json::json!({ "experiment": experiment.name() }))
            .expect("defaults deserialize")
    }

    /// Particle counts swept by the run: `n_list`, or `[n]`.
    pub fn sizes(&self) -> Vec<usize> {
        match (&self.n_list, self.n) {
            (Some(list), _) => list.clone(),
            (None, Some(n)) => vec![n],
            (None, None) => Vec::new(),
        }
    }

    pub fn reference_size(&self) -> usize {
        let n_max = self.sizes().into_iter().max().unwrap_or(0);
        self.reference_size.unwrap_or_else(|| (8 * n_max).max(8192))
    }

    pub fn sim_params(&self) -> crate::dynamics::SimParams {
        crate::dynamics::SimParams {
            dt: self.dt,
            horizon: self.horizon,
            record_every: self.record_every,
        }
    }

    /// Checks every invariant and names the offending field.
    pub fn validate(&self) -> Result<()> {
        let kind = self.experiment;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid(
                "horizon",
                format!("must be positive, got {}", self.horizon),
            ));
        }
        if self.dt > self.horizon {
            return Err(invalid("dt", "must not exceed the horizon"));
        }
        if !(self.record_every > 0.0 && self.record_every.is_finite()) {
            return Err(invalid("record_every", "must be positive"));
        }
        if self.replicas == 0 {
            return Err(invalid("replicas", "must be at least 1"));
        }
        if self.dimension == 0 {
            return Err(invalid("dimension", "must be at least 1"));
        }
        let [lo, hi] = self.fit_window;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(invalid("fit_window", "needs 0 <= lo < hi <= 1"));
        }
        if let Some(n) = self.n {
            if n == 0 {
                return Err(invalid("n", "must be at least 1"));
            }
        }
        if let Some(list) = &self.n_list {
            if list.is_empty() {
                return Err(invalid("n_list", "must not be empty"));
            }
            for (i, w) in list.windows(2).enumerate() {
                if w[1] <= w[0] {
                    return Err(invalid(
                        &format!("n_list[{}]", i + 1),
                        "n_list must be strictly increasing",
                    ));
                }
            }
            if list[0] < 2 {
                return Err(invalid("n_list[0]", "must be at least 2"));
            }
        }
        if let Some(r) = self.reference_size {
            if r < 2 {
                return Err(invalid("reference_size", "must be at least 2"));
            }
        }
        check_gaussian("init.a", &self.init.a)?;
        check_gaussian("init.b", &self.init.b)?;
        check_gaussian("init.velocity_a", &self.init.velocity_a)?;
        check_gaussian("init.velocity_b", &self.init.velocity_b)?;
        check_gaussian("fixed_point.start", &self.fixed_point.start)?;
        if self.fixed_point.start.sd <= 0.0 {
            return Err(invalid("fixed_point.start.sd", "must be positive"));
        }
        if !(self.grid.lo < self.grid.hi) {
            return Err(invalid("grid.hi", "must exceed grid.lo"));
        }
        if self.grid.m < 3 {
            return Err(invalid("grid.m", "must be at least 3"));
        }
        if !(self.fixed_point.tol > 0.0) {
            return Err(invalid("fixed_point.tol", "must be positive"));
        }
        if self.fixed_point.max_iter == 0 {
            return Err(invalid("fixed_point.max_iter", "must be at least 1"));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("tolerances.rate", t.rate),
            ("tolerances.slope", t.slope),
            ("tolerances.plateau", t.plateau),
            ("tolerances.r_squared", t.r_squared),
            ("tolerances.oracle", t.oracle),
            ("fixed_point.ratio_slack", self.fixed_point.ratio_slack),
            ("fixed_point.residual_tol", self.fixed_point.residual_tol),
            ("fixed_point.variance_tol", self.fixed_point.variance_tol),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be finite and nonnegative"));
            }
        }
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0) {
                return Err(invalid("epsilon", "must be positive"));
            }
        }
        if let Some(g) = self.gamma {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(invalid("gamma", "must be finite and nonnegative"));
            }
        }

        match &self.energy {
            Some(e) => e.validate().map_err(|err| match err {
                Error::Config { path, message } if path.starts_with("energy") => {
                    invalid(&path, message)
                }
                Error::Config { path, message } => invalid(&format!("energy.{path}"), message),
                other => invalid("energy", other.to_string()),
            })?,
            None if kind != ExperimentKind::KineticConstants => {
                return Err(Error::MissingField("energy".into()));
            }
            None => {}
        }
        if kind.is_kinetic() {
            let fields = self
                .kinetic
                .as_ref()
                .ok_or_else(|| Error::MissingField("kinetic".into()))?;
            fields.validate()?;
            if kind == ExperimentKind::KineticConstants
                && self.energy.is_none()
                && self.gamma.is_none()
            {
                return Err(Error::MissingField("gamma".into()));
            }
            if let Some(e) = &self.energy {
                if e.declared.dm_lip.is_none() {
                    return Err(Error::MissingField("energy.declared.dm_lip".into()));
                }
            }
        }
        if kind == ExperimentKind::FixedPoint && self.dimension != 1 {
            return Err(invalid("dimension", "fixed-point runs are one-dimensional"));
        }
        if kind.simulates() && self.sizes().is_empty() {
            return Err(Error::MissingField("n".into()));
        }
        if matches!(kind, ExperimentKind::Poc | ExperimentKind::KineticPoc) {
            if self.n_list.is_none() {
                return Err(Error::MissingField("n_list".into()));
            }
        } else if self.n_list.is_some() && self.n.is_some() {
            return Err(invalid("n_list", "give either n or n_list"));
        }
        Ok(())
    }

    /// `γ = [D_mH]₁ + ‖D²_mH‖` from the declared constants, or the
    /// explicit `gamma` when no energy is configured.
    pub fn gamma(&self) -> Option<f64> {
        match &self.energy {
            Some(e) => e.declared.dm_lip.map(|l| l + e.declared.d2m_bound),
            None => self.gamma,
        }
    }
}

/// Parses and validates a config document.
///
/// Diagnostics are distinct for malformed JSON, an unknown experiment kind,
/// a missing required field and an invalid value.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::MalformedConfig(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::MalformedConfig("top level must be a JSON object".into()))?;
    match obj.get("experiment") {
        None => return Err(Error::MissingField("experiment".into())),
        Some(serde_json::Value::String(s)) if ExperimentKind::from_name(s).is_none() => {
            return Err(Error::UnknownExperiment(s.clone()));
        }
        Some(serde_json::Value::String(_)) => {}
        Some(other) => return Err(Error::UnknownExperiment(other.to_string())),
    }
    let config: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        match inner.strip_prefix("missing field `") {
            Some(rest) => {
                let field = rest.split('`').next().unwrap_or(rest);
                let full = if path == "." {
                    field.to_string()
                } else {
                    format!("{path}.{field}")
                };
                Error::MissingField(full)
            }
            None => invalid(&path, inner),
        }
    })?;
    config.validate()?;
    Ok(config)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text)
}
