//! Mean-field filter for the condensate order parameter and a step-halving
//! probe of its pathwise convergence.
//!
//! The equation is linear with multiplicative noise and is integrated with the
//! same Strang split as the single-atom equation, but without renormalization:
//!
//! `dphi = [-i H_a phi - (a/2) M0 phi] dtau + beta phi Z(xi)`,
//!
//! with `Z(xi) = ∫ dkappa sqrt(gamma) exp(-i eta kappa xi) dWbar*(kappa)`
//! and `beta` either `a` or `sqrt(a)`.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    measurement_operators, DynamicsError, FourierFamily, InitialState, MeasurementFamily, MeasurementNoise,
    MeasurementRep, SseIntegrator,
};
use crate::feedback::ControlLaw;
use crate::kernels::{kernel_moment, KernelError, KernelTable};
use crate::noise::{rng_stream, to_fourier_noise, NoiseStream, SpectralNoise};
use crate::state::{kinetic_phase, Grid, GridSpec, StateError, Wavefunction};

/// Amplitude magnitude beyond which a field counts as diverged.
pub const DIVERGENCE_AMPLITUDE: f64 = 1e6;
/// Norm beyond which a field counts as diverged.
pub const DIVERGENCE_NORM: f64 = 1e3;
/// Smallest average per-halving reduction of the pathwise distance accepted
/// as convergence.
pub const CONVERGENCE_RATIO: f64 = 1.3;

#[derive(Debug, Error)]
pub enum MeanFieldError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("mean field diverged at tau = {tau}")]
    Diverged { tau: f64 },
}

/// Prefactor of the noise term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoisePrefactor {
    /// `beta = alpha_tilde`.
    #[default]
    Alpha,
    /// `beta = sqrt(alpha_tilde)`.
    SqrtAlpha,
}

impl NoisePrefactor {
    pub fn value(self, alpha_tilde: f64) -> f64 {
        match self {
            NoisePrefactor::Alpha => alpha_tilde,
            NoisePrefactor::SqrtAlpha => alpha_tilde.sqrt(),
        }
    }
}

/// Unnormalized order parameter on a grid.
#[derive(Debug, Clone)]
pub struct MeanField {
    phi: Wavefunction,
}

impl MeanField {
    pub fn new(phi: Wavefunction) -> Self {
        MeanField { phi }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.phi.grid()
    }

    pub fn phi(&self) -> &Wavefunction {
        &self.phi
    }

    pub fn norm(&self) -> f64 {
        self.phi.norm_sqr().sqrt()
    }

    pub fn distance(&self, other: &MeanField) -> f64 {
        self.phi.distance(&other.phi)
    }

    pub fn is_diverged(&self) -> bool {
        !self
            .phi
            .amplitudes()
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite() && z.norm() <= DIVERGENCE_AMPLITUDE)
            || !(self.norm() <= DIVERGENCE_NORM)
    }
}

#[derive(Debug, Clone)]
pub struct MeanFieldParams {
    pub alpha_tilde: f64,
    pub eta: f64,
    pub kernel: Arc<KernelTable>,
    pub dt: f64,
    pub prefactor: NoisePrefactor,
}

/// Precomputed propagators and noise synthesis for one grid and time step.
pub struct MeanFieldIntegrator {
    grid: Arc<Grid>,
    family: Option<FourierFamily>,
    center: usize,
    /// Amplitude of the `kappa = 0` component, which is real.
    zero_amp: f64,
    beta: f64,
    damping: f64,
    dt: f64,
    half_kinetic: Vec<Complex64>,
    trap_phase: Vec<Complex64>,
    coef: Vec<f64>,
    field: Vec<f64>,
    scratch: Vec<Complex64>,
}

impl MeanFieldIntegrator {
    pub fn new(params: &MeanFieldParams, grid: Arc<Grid>) -> Result<Self, MeanFieldError> {
        let MeanFieldParams {
            alpha_tilde,
            eta,
            dt,
            prefactor,
            ..
        } = *params;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(MeanFieldError::Config(format!("dt must be positive, got {dt}")));
        }
        if !(alpha_tilde >= 0.0 && alpha_tilde.is_finite()) {
            return Err(MeanFieldError::Config(format!("alpha_tilde must be nonnegative, got {alpha_tilde}")));
        }
        let table = &params.kernel;
        let family = if alpha_tilde > 0.0 {
            match measurement_operators(MeasurementRep::Fourier, table, eta, &grid)? {
                MeasurementFamily::Fourier(f) => Some(f),
                MeasurementFamily::RealSpace(_) => unreachable!(),
            }
        } else {
            None
        };
        let center = table.center();
        let zero_amp = (table.simpson_weights()[center] * table.gamma()[center] * table.dkappa()).sqrt();
        let m = family.as_ref().map_or(0, |f| 2 * f.active_components());
        let n = grid.len();
        Ok(MeanFieldIntegrator {
            half_kinetic: kinetic_phase(&grid, 0.5 * dt),
            trap_phase: grid.xi().iter().map(|x| Complex64::cis(-0.5 * x * x * dt)).collect(),
            grid,
            family,
            center,
            zero_amp,
            beta: prefactor.value(alpha_tilde),
            damping: 0.5 * alpha_tilde * kernel_moment(table, 0)?,
            dt,
            coef: vec![0.0; m],
            field: vec![0.0; n],
            scratch: Vec::new(),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// One step from `tau`. `noise` is required when the measurement is on.
    pub fn step(&mut self, mf: &mut MeanField, noise: Option<&SpectralNoise>, tau: f64) -> Result<(), MeanFieldError> {
        let grid = self.grid.clone();
        let amp = mf.phi.amplitudes_mut();
        grid.apply_in_momentum(amp, &self.half_kinetic, &mut self.scratch);
        amp.iter_mut().zip(&self.trap_phase).for_each(|(z, f)| *z *= f);
        if let Some(f) = &self.family {
            let noise =
                noise.ok_or_else(|| MeanFieldError::Config("noise required when alpha_tilde > 0".into()))?;
            f.noise_coefficients(noise, &mut self.coef);
            f.synthesize(&self.coef, &mut self.field);
            let base = 1.0 - self.damping * self.dt + self.beta * self.zero_amp * noise.values[self.center].re;
            for (z, zf) in amp.iter_mut().zip(&self.field) {
                *z *= base + self.beta * zf;
            }
        }
        grid.apply_in_momentum(amp, &self.half_kinetic, &mut self.scratch);
        if mf.is_diverged() {
            return Err(MeanFieldError::Diverged { tau: tau + self.dt });
        }
        Ok(())
    }
}

/// Advances `phi` by one step of size `params.dt`.
pub fn meanfield_step(
    phi: &mut MeanField,
    params: &MeanFieldParams,
    noise: Option<&SpectralNoise>,
    tau: f64,
) -> Result<(), MeanFieldError> {
    MeanFieldIntegrator::new(params, phi.grid().clone())?.step(phi, noise, tau)
}

/// Which equation the probe integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProbeTarget {
    #[default]
    MeanField,
    /// The normalized single-atom equation, as a reference.
    Sse,
}

#[derive(Debug, Clone)]
pub struct ProbeConfig {
    pub target: ProbeTarget,
    pub grid: GridSpec,
    pub alpha_tilde: f64,
    pub eta: f64,
    pub kernel: Arc<KernelTable>,
    pub prefactor: NoisePrefactor,
    /// Coarsest step; each further level halves it.
    pub dt: f64,
    pub levels: usize,
    pub tau_max: f64,
    /// Spacing of the comparison times; a multiple of the coarsest step.
    pub sample_stride: f64,
    pub paths: usize,
    pub seed: u64,
    pub initial: InitialState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Converging,
    NonConverging,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub target: ProbeTarget,
    /// Present for the mean-field target only.
    pub prefactor: Option<NoisePrefactor>,
    pub alpha_tilde: f64,
    pub eta: f64,
    pub tau_max: f64,
    pub paths: usize,
    pub seed: u64,
    pub dt: Vec<f64>,
    /// `D(dt[i])`: path average of `max_tau |phi_dt - phi_dt/2|`.
    pub distances: Vec<f64>,
    /// `D(dt[i]) / D(dt[i+1])`.
    pub ratios: Vec<f64>,
    /// Geometric mean of `ratios`; the verdict compares it with [`CONVERGENCE_RATIO`].
    pub mean_ratio: f64,
    /// Path-averaged `(|phi(tau_max)| - 1) / tau_max` at the finest step.
    pub norm_drift: Option<f64>,
    /// Earliest divergence seen on any level.
    pub diverged_at: Option<f64>,
    pub verdict: Verdict,
}

enum Stepper {
    MeanField(MeanFieldIntegrator, MeanField),
    Sse(SseIntegrator, Wavefunction),
}

impl Stepper {
    fn step(&mut self, noise: &SpectralNoise, tau: f64) -> Result<(), MeanFieldError> {
        match self {
            Stepper::MeanField(integ, mf) => integ.step(mf, Some(noise), tau),
            Stepper::Sse(integ, psi) => {
                integ.step(psi, Some(MeasurementNoise::Spectral(noise)), tau).map_err(|e| match e {
                    DynamicsError::NonFinite { tau } | DynamicsError::NormCollapse { tau, .. } => {
                        MeanFieldError::Diverged { tau }
                    }
                    e => e.into(),
                })?;
                Ok(())
            }
        }
    }

    fn state(&self) -> &Wavefunction {
        match self {
            Stepper::MeanField(_, mf) => &mf.phi,
            Stepper::Sse(_, psi) => psi,
        }
    }
}

/// Fine-step real increments for one path, replayed identically on every level.
struct FineNoise {
    stream: NoiseStream,
    std: f64,
}

impl ProbeConfig {
    fn validate(&self) -> Result<(), MeanFieldError> {
        if self.levels < 3 {
            return Err(MeanFieldError::Config(format!("need at least 3 levels, got {}", self.levels)));
        }
        if self.levels > 16 {
            return Err(MeanFieldError::Config(format!("at most 16 levels, got {}", self.levels)));
        }
        if self.paths == 0 {
            return Err(MeanFieldError::Config("paths must be positive".into()));
        }
        if !(self.dt > 0.0 && self.tau_max > 0.0 && self.sample_stride > 0.0) {
            return Err(MeanFieldError::Config("dt, tau_max and sample_stride must be positive".into()));
        }
        if !(self.alpha_tilde > 0.0 && self.alpha_tilde.is_finite()) {
            return Err(MeanFieldError::Config("the probe needs alpha_tilde > 0".into()));
        }
        let r = self.sample_stride / self.dt;
        if (r - r.round()).abs() > 1e-6 * r || r.round() < 1.0 {
            return Err(MeanFieldError::Config(format!(
                "sample_stride {} is not a multiple of dt {}",
                self.sample_stride, self.dt
            )));
        }
        Ok(())
    }

    fn ladder(&self) -> Vec<f64> {
        (0..self.levels).map(|i| self.dt / (1u64 << i) as f64).collect()
    }

    fn stepper(&self, grid: &Arc<Grid>, dt: f64) -> Result<Stepper, MeanFieldError> {
        let psi0 = Wavefunction::gaussian(grid.clone(), self.initial.center, self.initial.sigma2)?;
        Ok(match self.target {
            ProbeTarget::MeanField => {
                let params = MeanFieldParams {
                    alpha_tilde: self.alpha_tilde,
                    eta: self.eta,
                    kernel: self.kernel.clone(),
                    dt,
                    prefactor: self.prefactor,
                };
                Stepper::MeanField(MeanFieldIntegrator::new(&params, grid.clone())?, MeanField::new(psi0))
            }
            ProbeTarget::Sse => {
                let family = measurement_operators(MeasurementRep::Fourier, &self.kernel, self.eta, grid)?;
                let integ =
                    SseIntegrator::new(grid.clone(), Some(Arc::new(family)), self.alpha_tilde, dt, ControlLaw::none())?;
                Stepper::Sse(integ, psi0)
            }
        })
    }

    /// States at the comparison times for one level, or the divergence time.
    fn run_level(
        &self,
        grid: &Arc<Grid>,
        level: usize,
        path: u64,
    ) -> Result<Result<Vec<Wavefunction>, f64>, MeanFieldError> {
        let dt = self.ladder()[level];
        let block = 1usize << (self.levels - 1 - level);
        let fine_dt = self.ladder()[self.levels - 1];
        let kappa = self.kernel.kappa();
        let mut fine = FineNoise {
            stream: rng_stream(self.seed, path),
            std: (fine_dt / self.kernel.dkappa()).sqrt(),
        };
        let mut buf = vec![0.0; kappa.len()];
        let mut sum = vec![0.0; kappa.len()];
        let per_sample = ((self.sample_stride / self.dt).round() as usize) << level;
        let n_samples = (self.tau_max / self.sample_stride + 1e-9).floor() as usize;
        let mut stepper = self.stepper(grid, dt)?;
        let mut out = Vec::with_capacity(n_samples + 1);
        out.push(stepper.state().clone());
        let mut step = 0u64;
        for _ in 0..n_samples {
            for _ in 0..per_sample {
                sum.iter_mut().for_each(|v| *v = 0.0);
                for _ in 0..block {
                    fine.stream.fill_normal(&mut buf, fine.std);
                    sum.iter_mut().zip(&buf).for_each(|(s, b)| *s += b);
                }
                let noise = to_fourier_noise(kappa, &sum).map_err(|e| MeanFieldError::Config(e.to_string()))?;
                match stepper.step(&noise, step as f64 * dt) {
                    Ok(()) => {}
                    Err(MeanFieldError::Diverged { tau }) => return Ok(Err(tau)),
                    Err(e) => return Err(e),
                }
                step += 1;
            }
            out.push(stepper.state().clone());
        }
        Ok(Ok(out))
    }
}

/// Runs matched-noise step-halving pairs over the ladder and classifies the
/// result.
pub fn convergence_probe(config: &ProbeConfig) -> Result<ConvergenceReport, MeanFieldError> {
    config.validate()?;
    let grid = Grid::new(config.grid)?;
    let levels = config.levels;
    let mut sums = vec![0.0; levels - 1];
    let mut drift = 0.0;
    let mut diverged_at: Option<f64> = None;
    for path in 0..config.paths as u64 {
        let mut prev: Option<Vec<Wavefunction>> = None;
        for level in 0..levels {
            match config.run_level(&grid, level, path)? {
                Err(tau) => {
                    diverged_at = Some(diverged_at.map_or(tau, |t: f64| t.min(tau)));
                    prev = None;
                }
                Ok(states) => {
                    if let Some(p) = &prev {
                        let d = p.iter().zip(&states).map(|(a, b)| a.distance(b)).fold(0.0, f64::max);
                        sums[level - 1] += d;
                    }
                    if level == levels - 1 {
                        let last = states.last().expect("at least the initial state");
                        drift += (last.norm_sqr().sqrt() - 1.0) / config.tau_max;
                    }
                    prev = Some(states);
                }
            }
        }
    }
    let n = config.paths as f64;
    let distances: Vec<f64> = sums.iter().map(|s| s / n).collect();
    let ratios: Vec<f64> = distances.windows(2).map(|w| w[0] / w[1]).collect();
    // Geometric mean over the ladder; single ratios scatter by about 0.1 at
    // a few dozen paths, which is close to the margin above the threshold.
    let mean_ratio = match (distances.first(), distances.last()) {
        (Some(a), Some(b)) => (a / b).powf(1.0 / ratios.len() as f64),
        _ => f64::NAN,
    };
    let verdict = if diverged_at.is_some() {
        Verdict::Diverged
    } else if mean_ratio >= CONVERGENCE_RATIO {
        Verdict::Converging
    } else {
        Verdict::NonConverging
    };
    Ok(ConvergenceReport {
        target: config.target,
        prefactor: (config.target == ProbeTarget::MeanField).then_some(config.prefactor),
        alpha_tilde: config.alpha_tilde,
        eta: config.eta,
        tau_max: config.tau_max,
        paths: config.paths,
        seed: config.seed,
        dt: config.ladder(),
        distances,
        ratios,
        mean_ratio,
        norm_drift: (diverged_at.is_none()).then_some(drift / n),
        diverged_at,
        verdict,
    })
}
