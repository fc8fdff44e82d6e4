//! JSON run configuration and the manifest written next to every run.
//!
//! Every key is optional. The physics is given either as a dimensionless
//! `physics` block or as a `physical` block in SI units, never both; with
//! neither, the `physics` defaults apply.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{DynamicsParams, InitialState, MeasurementRep, TrajectoryConfig};
use crate::ensemble::{EnsembleConfig, SteadyStateConfig};
use crate::feedback::ControlLaw;
use crate::kernels::{tabulate_kernel, KernelConfig, KernelMethod, KernelTable, Polarization};
use crate::meanfield::{NoisePrefactor, ProbeConfig, ProbeTarget};
use crate::params::{derive_dimensionless, validate_regime, DimensionlessParams, PhysicalParams, RegimeWarning};
use crate::state::GridSpec;

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsBlock {
    pub alpha_tilde: f64,
    pub eta: f64,
    pub w: f64,
}

impl Default for PhysicsBlock {
    fn default() -> Self {
        PhysicsBlock {
            alpha_tilde: 2.0,
            eta: 6.0,
            w: 3000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrationBlock {
    pub dt: f64,
    pub tau_max: f64,
    pub sample_stride: f64,
}

impl Default for IntegrationBlock {
    fn default() -> Self {
        IntegrationBlock {
            dt: 1e-3,
            tau_max: 50.0,
            sample_stride: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleBlock {
    pub paths: usize,
    pub seed: u64,
}

impl Default for EnsembleBlock {
    fn default() -> Self {
        EnsembleBlock { paths: 100, seed: 0 }
    }
}

/// Kernel settings; `w` comes from the physics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelBlock {
    pub method: KernelMethod,
    pub n_kappa: usize,
    pub quad_tol: f64,
    pub polarization: Polarization,
}

impl Default for KernelBlock {
    fn default() -> Self {
        let k = KernelConfig::default();
        KernelBlock {
            method: k.method,
            n_kappa: k.n_kappa,
            quad_tol: k.quad_tol,
            polarization: k.polarization,
        }
    }
}

/// Settings of the mean-field convergence probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeanFieldBlock {
    pub target: ProbeTarget,
    pub prefactor: NoisePrefactor,
    /// Coarsest step of the ladder.
    pub dt: f64,
    pub levels: usize,
    pub tau_max: f64,
    pub sample_stride: f64,
    pub paths: usize,
}

impl Default for MeanFieldBlock {
    fn default() -> Self {
        MeanFieldBlock {
            target: ProbeTarget::MeanField,
            prefactor: NoisePrefactor::Alpha,
            dt: 8e-3,
            levels: 5,
            tau_max: 5.0,
            sample_stride: 0.2,
            paths: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub physics: Option<PhysicsBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub physical: Option<PhysicalParams>,
    pub control: ControlLaw,
    pub integration: IntegrationBlock,
    pub ensemble: EnsembleBlock,
    pub initial_state: InitialState,
    pub kernel: KernelBlock,
    pub measurement_rep: MeasurementRep,
    pub steady_state: SteadyStateConfig,
    pub meanfield: MeanFieldBlock,
}

/// A configuration with the physics resolved and every check passed.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    /// The input with `physics` filled in; `physical` is kept for the record.
    pub config: RunConfig,
    pub physics: PhysicsBlock,
    pub derived: Option<DimensionlessParams>,
    pub warnings: Vec<RegimeWarning>,
}

impl RunConfig {
    pub fn from_json(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        // A run manifest carries its configuration under `run.config`.
        let value = match value.pointer("/run/config").or_else(|| value.pointer("/config")) {
            Some(inner) if value.get("format_version").is_some() || value.get("tool").is_some() => inner.clone(),
            _ => value,
        };
        serde_json::from_value(value).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Reads a configuration file or the manifest of an earlier run.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text, path)
    }

    pub fn resolve(&self) -> Result<ResolvedConfig, ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        let (physics, derived, warnings) = match (self.physics, self.physical) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::Invalid(
                    "give either `physics` or `physical`, not both".into(),
                ))
            }
            (Some(p), None) => (p, None, Vec::new()),
            (None, None) => (PhysicsBlock::default(), None, Vec::new()),
            (None, Some(phys)) => {
                let d = derive_dimensionless(&phys).map_err(|e| invalid(&e))?;
                let block = PhysicsBlock {
                    alpha_tilde: d.alpha_tilde,
                    eta: d.eta,
                    w: d.w,
                };
                (block, Some(d), validate_regime(&phys))
            }
        };
        if !(physics.alpha_tilde >= 0.0 && physics.alpha_tilde.is_finite()) {
            return Err(ConfigError::Invalid(format!("alpha_tilde must be nonnegative, got {}", physics.alpha_tilde)));
        }
        if !(physics.eta > 0.0 && physics.eta.is_finite()) {
            return Err(ConfigError::Invalid(format!("eta must be positive, got {}", physics.eta)));
        }
        self.grid.validate().map_err(|e| invalid(&e))?;
        self.control.validate().map_err(|e| invalid(&e))?;
        self.kernel_config(&physics).validate().map_err(|e| invalid(&e))?;
        let i = &self.integration;
        if !(i.dt > 0.0 && i.dt.is_finite() && i.tau_max > 0.0 && i.tau_max.is_finite()) {
            return Err(ConfigError::Invalid("integration.dt and integration.tau_max must be positive".into()));
        }
        let r = i.sample_stride / i.dt;
        if !(r >= 1.0 && (r - r.round()).abs() <= 1e-6 * r) {
            return Err(ConfigError::Invalid(format!(
                "integration.sample_stride {} must be a positive multiple of dt {}",
                i.sample_stride, i.dt
            )));
        }
        if self.ensemble.paths < 2 {
            return Err(ConfigError::Invalid(format!("ensemble.paths must be at least 2, got {}", self.ensemble.paths)));
        }
        if !(self.initial_state.sigma2 > 0.0 && self.initial_state.center.is_finite()) {
            return Err(ConfigError::Invalid("initial_state.sigma2 must be positive".into()));
        }
        let ss = &self.steady_state;
        if !(ss.window_width > 0.0 && ss.slope_tol > 0.0 && ss.tail_fraction > 0.0 && ss.tail_fraction <= 1.0) {
            return Err(ConfigError::Invalid(
                "steady_state needs positive window_width and slope_tol and tail_fraction in (0, 1]".into(),
            ));
        }
        let mut config = self.clone();
        config.physics = Some(physics);
        Ok(ResolvedConfig {
            config,
            physics,
            derived,
            warnings,
        })
    }

    fn kernel_config(&self, physics: &PhysicsBlock) -> KernelConfig {
        KernelConfig {
            w: physics.w,
            method: self.kernel.method,
            n_kappa: self.kernel.n_kappa,
            quad_tol: self.kernel.quad_tol,
            polarization: self.kernel.polarization,
        }
    }
}

impl ResolvedConfig {
    pub fn kernel_config(&self) -> KernelConfig {
        self.config.kernel_config(&self.physics)
    }

    pub fn kernel_table(&self) -> Result<Arc<KernelTable>, ConfigError> {
        tabulate_kernel(&self.kernel_config())
            .map(Arc::new)
            .map_err(|e| ConfigError::Invalid(format!("kernel: {e}")))
    }

    pub fn trajectory(&self, kernel: Arc<KernelTable>) -> TrajectoryConfig {
        let c = &self.config;
        TrajectoryConfig {
            grid: c.grid,
            dynamics: DynamicsParams {
                alpha_tilde: self.physics.alpha_tilde,
                eta: self.physics.eta,
                kernel,
                dt: c.integration.dt,
                measurement_rep: c.measurement_rep,
            },
            control: c.control,
            tau_max: c.integration.tau_max,
            sample_stride: c.integration.sample_stride,
            initial: c.initial_state,
            seed: c.ensemble.seed,
        }
    }

    pub fn ensemble(&self, kernel: Arc<KernelTable>, workers: usize) -> EnsembleConfig {
        EnsembleConfig {
            trajectory: self.trajectory(kernel),
            paths: self.config.ensemble.paths,
            workers,
            steady_state: self.config.steady_state,
        }
    }

    pub fn probe(&self, kernel: Arc<KernelTable>) -> ProbeConfig {
        let c = &self.config;
        let m = &c.meanfield;
        ProbeConfig {
            target: m.target,
            grid: c.grid,
            alpha_tilde: self.physics.alpha_tilde,
            eta: self.physics.eta,
            kernel,
            prefactor: m.prefactor,
            dt: m.dt,
            levels: m.levels,
            tau_max: m.tau_max,
            sample_stride: m.sample_stride,
            paths: m.paths,
            seed: c.ensemble.seed,
            initial: c.initial_state,
        }
    }
}

/// Description of a finished run, written as JSON next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    /// Resolved configuration; replaying it reproduces the run.
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derived: Option<DimensionlessParams>,
    /// Seconds since the Unix epoch.
    pub started: f64,
    pub finished: f64,
    pub outputs: Vec<String>,
    pub failures: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<serde_json::Value>,
}

impl RunManifest {
    pub fn new(command: &str, resolved: &ResolvedConfig) -> Self {
        RunManifest {
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            command: command.into(),
            seed: resolved.config.ensemble.seed,
            config: resolved.config.clone(),
            derived: resolved.derived,
            started: now(),
            finished: 0.0,
            outputs: Vec::new(),
            failures: 0,
            summary: None,
        }
    }

    pub fn finish(&mut self) {
        self.finished = now();
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("manifest is plain data")
    }
}

pub fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        RunConfig::from_json(text, Path::new("test.json"))
    }

    #[test]
    fn empty_object_takes_defaults() {
        let c = parse("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        let r = c.resolve().unwrap();
        assert_eq!(r.physics, PhysicsBlock::default());
        assert_eq!(r.config.grid, GridSpec::default());
        assert_eq!(r.config.integration.tau_max, 50.0);
    }

    #[test]
    fn partial_blocks_are_filled() {
        let c = parse(r#"{"physics": {"alpha_tilde": 10}, "control": {"c2": 1.5}, "integration": {"tau_max": 5}}"#).unwrap();
        let r = c.resolve().unwrap();
        assert_eq!(r.physics.alpha_tilde, 10.0);
        assert_eq!(r.physics.eta, 6.0);
        assert_eq!(r.config.control.coefficients(), [0.0, 1.5, 0.0, 0.0]);
        assert_eq!(r.config.integration.dt, 1e-3);
    }

    #[test]
    fn both_physics_blocks_are_rejected() {
        let c = parse(
            r#"{"physics": {}, "physical": {"d_ge": 2.5e-29, "k0": 8.05e6, "omega_T": 628.0, "omega_z": 6.28e4,
                "Delta": 1e10, "F0": 1e12, "m": 1.44e-25}}"#,
        )
        .unwrap();
        assert!(matches!(c.resolve(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn physical_block_is_routed_through_params() {
        let c = parse(
            r#"{"physical": {"d_ge": 2.5e-29, "k0": 8.05e6, "omega_T": 628.0, "omega_z": 6.28e4,
                "Delta": 1e10, "F0": 1e12, "m": 1.44e-25}}"#,
        )
        .unwrap();
        let r = c.resolve().unwrap();
        let d = r.derived.unwrap();
        assert_eq!(r.physics.eta, d.eta);
        assert_eq!(r.physics.w, d.w);
        assert_eq!(r.config.physics, Some(r.physics));
    }

    #[test]
    fn bad_values_are_config_errors() {
        for text in [
            r#"{"grid": {"n_points": 100}}"#,
            r#"{"control": {"c1": -1}}"#,
            r#"{"integration": {"sample_stride": 0.0015}}"#,
            r#"{"ensemble": {"paths": 1}}"#,
            r#"{"physics": {"eta": 0}}"#,
            r#"{"kernel": {"n_kappa": 7}}"#,
        ] {
            assert!(matches!(parse(text).unwrap().resolve(), Err(ConfigError::Invalid(_))), "{text}");
        }
        assert!(matches!(parse(r#"{"grdi": {}}"#), Err(ConfigError::Parse { .. })));
        assert!(matches!(parse("{"), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn manifest_round_trips_to_the_same_config() {
        let c = parse(r#"{"physics": {"alpha_tilde": 4}, "ensemble": {"seed": 9}}"#).unwrap();
        let r = c.resolve().unwrap();
        let mut m = RunManifest::new("ensemble", &r);
        m.finish();
        let wrapped = serde_json::json!({"format_version": 1, "run": m.to_value()});
        let back = parse(&wrapped.to_string()).unwrap();
        assert_eq!(back, r.config);
        let direct = parse(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(direct, r.config);
    }
}
