//! Single-atom conditional dynamics: the normalized diffusive stochastic
//! Schrödinger equation and a dense density-matrix integrator for small grids.

mod density;
mod measurement;
mod sse;
mod trajectory;


use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feedback::{ControlLaw, ControlSignal, FeedbackError, MAX_ORDER};
use crate::kernels::{KernelError, KernelTable};
use crate::noise::{NoiseError, NoiseRealization, SpectralNoise};
use crate::state::{Grid, StateError};

pub use density::{lindblad_generator, run_sme_deterministic, DensityMatrix, SmeIntegrator, SmeRecord};
pub use measurement::{
    measurement_operators, FourierFamily, MeasurementFamily, MeasurementNoise, MeasurementRep, RealSpaceFamily,
};
pub use sse::{SseIntegrator, StepInfo};
pub use trajectory::{
    run_trajectory, NoiseSource, TrajectoryConfig, TrajectoryRecord, TrajectoryRunner, TrajectorySetup,
    TrajectoryStatus,
};

/// Pre-normalization squared norm below which a step is treated as a collapse.
pub const NORM_COLLAPSE: f64 = 1e-6;
/// Most negative eigenvalue tolerated in the density-matrix integrator.
pub const POSITIVITY_TOL: f64 = 1e-6;
/// Largest grid accepted by the dense integrator.
pub const MAX_DENSITY_POINTS: usize = 64;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Feedback(#[from] FeedbackError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error("norm collapse at tau = {tau}: squared norm {norm_sqr:e} before renormalization")]
    NormCollapse { tau: f64, norm_sqr: f64 },
    #[error("non-finite amplitudes at tau = {tau}")]
    NonFinite { tau: f64 },
    #[error("grid overflow at tau = {tau}: boundary density ratio {ratio:e}")]
    Overflow { tau: f64, ratio: f64 },
    #[error("positivity lost at tau = {tau}: smallest eigenvalue {min_eigenvalue:e}")]
    Positivity { tau: f64, min_eigenvalue: f64 },
    #[error("noise does not match the {0:?} measurement representation")]
    NoiseMismatch(MeasurementRep),
}

/// Parameters of the single-atom equation in trap units (`tau = omega_T t`).
#[derive(Debug, Clone)]
pub struct DynamicsParams {
    pub alpha_tilde: f64,
    pub eta: f64,
    pub kernel: Arc<KernelTable>,
    pub dt: f64,
    pub measurement_rep: MeasurementRep,
}

impl DynamicsParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(DynamicsError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.alpha_tilde >= 0.0 && self.alpha_tilde.is_finite()) {
            return Err(DynamicsError::Config(format!(
                "alpha_tilde must be nonnegative, got {}",
                self.alpha_tilde
            )));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(DynamicsError::Config(format!("eta must be positive, got {}", self.eta)));
        }
        Ok(())
    }

    pub fn is_measured(&self) -> bool {
        self.alpha_tilde > 0.0
    }
}

/// Gaussian initial state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitialState {
    pub center: f64,
    pub sigma2: f64,
}

impl Default for InitialState {
    fn default() -> Self {
        InitialState {
            center: 2.0,
            sigma2: 0.5,
        }
    }
}

/// Controls evaluated at the middle of the potential kick.
///
/// `s` holds `<p x^(n-1) + x^(n-1) p>` before the kick and `m[k] = <x^k>`.
/// The kick shifts `s_n` at rate `-2 <V' x^(n-1)>`, and `V'` itself depends on
/// the controls, so the midpoint values solve a small linear system.
pub(crate) fn midpoint_controls(law: &ControlLaw, s: &[f64; MAX_ORDER], m: &[f64; 7], dt: f64, tau: f64) -> ControlSignal {
    let c = law.coefficients();
    let order = law.max_order();
    // u_n = d_n (s_n - dt <V' x^(n-1)>) with V' = x + sum_k k u_k x^(k-1) is
    // linear in u: (I + dt D A) u = D (s - dt m_n), A_nk = k m_(n+k-2).
    // D A is similar to a positive semidefinite matrix, so the system is
    // always solvable.
    let mut a = DMatrix::<f64>::identity(order, order);
    let mut rhs = DVector::<f64>::zeros(order);
    for n in 1..=order {
        let d = c[n - 1] * n as f64 * 0.5;
        rhs[n - 1] = d * (s[n - 1] - dt * m[n]);
        for k in 1..=order {
            a[(n - 1, k - 1)] += dt * d * k as f64 * m[n + k - 2];
        }
    }
    let mut u = [0.0; MAX_ORDER];
    if order > 0 {
        let sol = a.lu().solve(&rhs).unwrap_or(rhs);
        u[..order].copy_from_slice(sol.as_slice());
    }
    ControlSignal { u, tau }
}

/// Recoil-space increments equivalent to a position-space realization,
/// scaled so that the Fourier family driven by them reproduces the
/// real-space noise field.
pub fn spectral_from_position(
    noise: &NoiseRealization,
    grid: &Grid,
    table: &KernelTable,
    eta: f64,
) -> Result<SpectralNoise, DynamicsError> {
    let mut sp = noise.to_spectral(grid.xi(), table.kappa(), eta)?;
    let dk = table.dkappa();
    for (z, w) in sp.values.iter_mut().zip(table.simpson_weights()) {
        *z *= (w / dk).sqrt();
    }
    Ok(sp)
}
