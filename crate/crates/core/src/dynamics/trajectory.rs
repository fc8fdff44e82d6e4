use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::measurement::{measurement_operators, MeasurementFamily, MeasurementNoise, MeasurementRep};
use super::sse::SseIntegrator;
use super::{DynamicsError, DynamicsParams, InitialState};
use crate::feedback::ControlLaw;
use crate::kernels::KernelTable;
use crate::noise::{rng_stream, to_fourier_noise, NoiseRealization, NoiseStream, SpectralNoise};
use crate::state::{Grid, GridSpec, Wavefunction};

#[derive(Debug, Clone)]
pub struct TrajectoryConfig {
    pub grid: GridSpec,
    pub dynamics: DynamicsParams,
    pub control: ControlLaw,
    pub tau_max: f64,
    pub sample_stride: f64,
    pub initial: InitialState,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryStatus {
    Completed,
    Overflowed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub index: u64,
    pub seed: u64,
    pub tau: Vec<f64>,
    pub energy: Vec<f64>,
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    /// Largest `|1 - |psi|^2|` seen before renormalization since the previous sample.
    pub norm_deficit: Vec<f64>,
    pub status: TrajectoryStatus,
    pub failure: Option<String>,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    fn push(&mut self, tau: f64, (x, p, e): (f64, f64, f64), deficit: f64) {
        self.tau.push(tau);
        self.x.push(x);
        self.p.push(p);
        self.energy.push(e);
        self.norm_deficit.push(deficit);
    }

    /// Drops samples beyond `n`.
    pub fn truncate(&mut self, n: usize) {
        self.tau.truncate(n);
        self.energy.truncate(n);
        self.x.truncate(n);
        self.p.truncate(n);
        self.norm_deficit.truncate(n);
    }
}

/// Everything shared by the trajectories of one run.
#[derive(Debug)]
pub struct TrajectorySetup {
    config: TrajectoryConfig,
    grid: Arc<Grid>,
    family: Option<Arc<MeasurementFamily>>,
    initial: Wavefunction,
    steps_per_sample: u64,
    n_samples: usize,
}

impl TrajectorySetup {
    pub fn new(config: TrajectoryConfig) -> Result<Arc<Self>, DynamicsError> {
        config.dynamics.validate()?;
        config.control.validate()?;
        let dt = config.dynamics.dt;
        if !(config.sample_stride >= dt && config.sample_stride.is_finite()) {
            return Err(DynamicsError::Config(format!(
                "sample_stride {} must be at least dt {dt}",
                config.sample_stride
            )));
        }
        let ratio = config.sample_stride / dt;
        let steps_per_sample = ratio.round();
        if (ratio - steps_per_sample).abs() > 1e-6 * ratio {
            return Err(DynamicsError::Config(format!(
                "sample_stride {} is not a multiple of dt {dt}",
                config.sample_stride
            )));
        }
        if !(config.tau_max > 0.0 && config.tau_max.is_finite()) {
            return Err(DynamicsError::Config(format!("tau_max must be positive, got {}", config.tau_max)));
        }
        let n_samples = (config.tau_max / config.sample_stride + 1e-9).floor() as usize + 1;
        let grid = Grid::new(config.grid)?;
        let family = if config.dynamics.is_measured() {
            Some(Arc::new(measurement_operators(
                config.dynamics.measurement_rep,
                &config.dynamics.kernel,
                config.dynamics.eta,
                &grid,
            )?))
        } else {
            None
        };
        let initial = Wavefunction::gaussian(grid.clone(), config.initial.center, config.initial.sigma2)?;
        Ok(Arc::new(TrajectorySetup {
            config,
            grid,
            family,
            initial,
            steps_per_sample: steps_per_sample as u64,
            n_samples,
        }))
    }

    pub fn config(&self) -> &TrajectoryConfig {
        &self.config
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn family(&self) -> Option<&Arc<MeasurementFamily>> {
        self.family.as_ref()
    }

    pub fn initial_state(&self) -> &Wavefunction {
        &self.initial
    }

    /// Number of samples in a full run, including `tau = 0`.
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn steps_per_sample(&self) -> u64 {
        self.steps_per_sample
    }

    pub fn sample_tau(&self, k: usize) -> f64 {
        (k as u64 * self.steps_per_sample) as f64 * self.config.dynamics.dt
    }

    pub fn sample_times(&self) -> Vec<f64> {
        (0..self.n_samples).map(|k| self.sample_tau(k)).collect()
    }

    pub fn integrator(&self) -> Result<SseIntegrator, DynamicsError> {
        SseIntegrator::new(
            self.grid.clone(),
            self.family.clone(),
            self.config.dynamics.alpha_tilde,
            self.config.dynamics.dt,
            self.config.control,
        )
    }
}

/// Per-step noise for one trajectory.
pub struct NoiseSource {
    stream: NoiseStream,
    kind: SourceKind,
}

enum SourceKind {
    Spectral {
        kappa: Vec<f64>,
        real: Vec<f64>,
        std: f64,
        current: SpectralNoise,
    },
    Position(NoiseRealization),
}

impl NoiseSource {
    pub fn new(rep: MeasurementRep, table: &KernelTable, grid: &GridSpec, dt: f64, stream: NoiseStream) -> Self {
        let kind = match rep {
            MeasurementRep::Fourier => SourceKind::Spectral {
                kappa: table.kappa().to_vec(),
                real: vec![0.0; table.kappa().len()],
                std: (dt / table.dkappa()).sqrt(),
                current: SpectralNoise { values: Vec::new() },
            },
            MeasurementRep::RealSpace => SourceKind::Position(NoiseRealization {
                values: vec![0.0; grid.n_points],
                dt,
                dxi: grid.dxi(),
            }),
        };
        NoiseSource { stream, kind }
    }

    pub fn next_increment(&mut self) -> MeasurementNoise<'_> {
        match &mut self.kind {
            SourceKind::Spectral {
                kappa,
                real,
                std,
                current,
            } => {
                self.stream.fill_normal(real, *std);
                *current = to_fourier_noise(kappa, real).expect("kernel grid is symmetric");
                MeasurementNoise::Spectral(current)
            }
            SourceKind::Position(p) => {
                let std = (p.dt / p.dxi).sqrt();
                self.stream.fill_normal(&mut p.values, std);
                MeasurementNoise::Position(p)
            }
        }
    }
}

/// Incremental integration of one trajectory, sample by sample.
pub struct TrajectoryRunner {
    setup: Arc<TrajectorySetup>,
    psi: Wavefunction,
    integrator: SseIntegrator,
    noise: Option<NoiseSource>,
    step: u64,
    deficit: f64,
    record: TrajectoryRecord,
    stopped: bool,
}

impl TrajectoryRunner {
    pub fn new(setup: Arc<TrajectorySetup>, index: u64) -> Result<Self, DynamicsError> {
        let cfg = setup.config();
        let integrator = setup.integrator()?;
        let noise = setup.family().map(|_| {
            NoiseSource::new(
                cfg.dynamics.measurement_rep,
                &cfg.dynamics.kernel,
                &cfg.grid,
                cfg.dynamics.dt,
                rng_stream(cfg.seed, index),
            )
        });
        let mut psi = setup.initial_state().clone();
        let mut record = TrajectoryRecord {
            index,
            seed: cfg.seed,
            tau: Vec::new(),
            energy: Vec::new(),
            x: Vec::new(),
            p: Vec::new(),
            norm_deficit: Vec::new(),
            status: TrajectoryStatus::Completed,
            failure: None,
        };
        record.push(0.0, psi.observables()?, 0.0);
        Ok(TrajectoryRunner {
            setup,
            psi,
            integrator,
            noise,
            step: 0,
            deficit: 0.0,
            record,
            stopped: false,
        })
    }

    pub fn samples(&self) -> usize {
        self.record.len()
    }

    /// True after a failure or once every sample has been recorded.
    pub fn is_finished(&self) -> bool {
        self.stopped || self.record.len() >= self.setup.n_samples()
    }

    pub fn status(&self) -> TrajectoryStatus {
        self.record.status
    }

    pub fn record(&self) -> &TrajectoryRecord {
        &self.record
    }

    pub fn state(&self) -> &Wavefunction {
        &self.psi
    }

    /// Integrates until `n` samples exist (capped at the run length) or the
    /// path fails.
    pub fn advance_to(&mut self, n: usize) {
        let n = n.min(self.setup.n_samples());
        let dt = self.setup.config().dynamics.dt;
        let per = self.setup.steps_per_sample();
        while !self.stopped && self.record.len() < n {
            for _ in 0..per {
                let tau = self.step as f64 * dt;
                let noise = self.noise.as_mut().map(|s| s.next_increment());
                match self.integrator.step(&mut self.psi, noise, tau) {
                    Ok(info) => self.deficit = self.deficit.max(info.norm_deficit.abs()),
                    Err(e) => {
                        self.fail(TrajectoryStatus::Failed, e.to_string());
                        return;
                    }
                }
                self.step += 1;
            }
            let k = self.record.len();
            let tau = self.setup.sample_tau(k);
            if !self.psi.is_contained() {
                let e = DynamicsError::Overflow {
                    tau,
                    ratio: self.psi.boundary_ratio(),
                };
                self.fail(TrajectoryStatus::Overflowed, e.to_string());
                return;
            }
            match self.psi.observables() {
                Ok(obs) => {
                    self.record.push(tau, obs, self.deficit);
                    self.deficit = 0.0;
                }
                Err(e) => {
                    self.fail(TrajectoryStatus::Failed, e.to_string());
                    return;
                }
            }
        }
    }

    fn fail(&mut self, status: TrajectoryStatus, reason: String) {
        self.record.status = status;
        self.record.failure = Some(reason);
        self.stopped = true;
    }

    pub fn into_record(self) -> TrajectoryRecord {
        self.record
    }
}

/// Runs one full trajectory. Configuration problems are errors; numerical
/// failures along the path are reported in the record's status.
pub fn run_trajectory(config: &TrajectoryConfig, index: u64) -> Result<TrajectoryRecord, DynamicsError> {
    let setup = TrajectorySetup::new(config.clone())?;
    let mut runner = TrajectoryRunner::new(setup.clone(), index)?;
    runner.advance_to(setup.n_samples());
    Ok(runner.into_record())
}
