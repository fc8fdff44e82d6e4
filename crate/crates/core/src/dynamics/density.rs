//! Dense position-representation density matrices for grids of up to
//! [`MAX_DENSITY_POINTS`] points.
//!
//! The matrix is taken in the orthonormal grid basis, `rho_ab = psi_a psi_b^* dxi`,
//! so the trace is a plain sum of the diagonal.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::measurement::{measurement_operators, MeasurementFamily, MeasurementNoise};
use super::{midpoint_controls, DynamicsError, DynamicsParams, TrajectoryConfig, MAX_DENSITY_POINTS, POSITIVITY_TOL};
use crate::feedback::{control_value, ControlLaw, ControlSignal, MAX_ORDER};
use crate::state::{Grid, StateError, Wavefunction};

#[derive(Debug, Clone)]
pub struct DensityMatrix {
    grid: Arc<Grid>,
    matrix: DMatrix<Complex64>,
}

impl DensityMatrix {
    pub fn from_wavefunction(psi: &Wavefunction) -> Result<Self, DynamicsError> {
        let grid = psi.grid().clone();
        check_size(&grid)?;
        let dx = grid.dxi();
        let a = psi.amplitudes();
        let n = a.len();
        let matrix = DMatrix::from_fn(n, n, |i, j| a[i] * a[j].conj() * dx);
        Ok(DensityMatrix { grid, matrix })
    }

    pub fn from_matrix(grid: Arc<Grid>, matrix: DMatrix<Complex64>) -> Result<Self, DynamicsError> {
        check_size(&grid)?;
        if matrix.nrows() != grid.len() || matrix.ncols() != grid.len() {
            return Err(DynamicsError::State(StateError::Domain(format!(
                "matrix is {}x{}, grid has {} points",
                matrix.nrows(),
                matrix.ncols(),
                grid.len()
            ))));
        }
        Ok(DensityMatrix { grid, matrix })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|z| z.re).sum()
    }

    /// Largest `|rho - rho^dagger|` entry.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.matrix.nrows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0);
        SymmetricEigen::new(h).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// `sum_a rho_aa x_a^k / tr(rho)` for `k = 0..=6`.
    fn x_moments(&self) -> [f64; 7] {
        let mut m = [0.0; 7];
        for (a, &x) in self.grid.xi().iter().enumerate() {
            let w = self.matrix[(a, a)].re;
            let mut xp = 1.0;
            for mk in m.iter_mut() {
                *mk += w * xp;
                xp *= x;
            }
        }
        let t = m[0];
        m.iter_mut().for_each(|v| *v /= t);
        m
    }
}

fn check_size(grid: &Grid) -> Result<(), DynamicsError> {
    if grid.len() > MAX_DENSITY_POINTS {
        return Err(DynamicsError::Config(format!(
            "density-matrix integration supports at most {MAX_DENSITY_POINTS} points, got {}",
            grid.len()
        )));
    }
    Ok(())
}

/// `sum_l w_l (L rho L^dagger - {L^dagger L, rho} / 2)` for position-diagonal `L_l`.
pub fn lindblad_generator(ops: &[(f64, Vec<Complex64>)], rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = rho.nrows();
    let mut out = DMatrix::zeros(n, n);
    for (w, l) in ops {
        for i in 0..n {
            for j in 0..n {
                let f = l[i] * l[j].conj() - 0.5 * (l[i].norm_sqr() + l[j].norm_sqr());
                out[(i, j)] += rho[(i, j)] * f * *w;
            }
        }
    }
    out
}

/// Momentum-diagonal operator `f(k)` as a dense matrix on the grid basis.
fn momentum_operator(grid: &Grid, f: impl Fn(f64) -> Complex64) -> DMatrix<Complex64> {
    let n = grid.len();
    let diag: Vec<Complex64> = grid.k().iter().map(|&k| f(k)).collect();
    let mut m = DMatrix::zeros(n, n);
    let mut col = vec![Complex64::ZERO; n];
    let mut scratch = Vec::new();
    for j in 0..n {
        col.iter_mut().for_each(|z| *z = Complex64::ZERO);
        col[j] = Complex64::new(1.0, 0.0);
        grid.apply_in_momentum(&mut col, &diag, &mut scratch);
        for i in 0..n {
            m[(i, j)] = col[i];
        }
    }
    m
}

pub struct SmeIntegrator {
    grid: Arc<Grid>,
    family: Option<Arc<MeasurementFamily>>,
    alpha_tilde: f64,
    dt: f64,
    law: ControlLaw,
    half_kinetic: DMatrix<Complex64>,
    momentum: DMatrix<Complex64>,
    momentum_sq: DMatrix<Complex64>,
    /// `K(a,b) - K(a,a)/2 - K(b,b)/2`, row-major.
    decoherence: Vec<f64>,
    /// `exp(alpha dt decoherence)`.
    damping: Vec<f64>,
    corr_diag: Vec<f64>,
}

impl SmeIntegrator {
    pub fn new(params: &DynamicsParams, grid: Arc<Grid>, law: ControlLaw) -> Result<Self, DynamicsError> {
        params.validate()?;
        law.validate()?;
        check_size(&grid)?;
        let n = grid.len();
        let family = measurement_operators(params.measurement_rep, &params.kernel, params.eta, &grid)?;
        let k = family.correlation_matrix(&grid, &params.kernel, params.eta);
        let mut decoherence = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                decoherence[a * n + b] = k[a * n + b] - 0.5 * (k[a * n + a] + k[b * n + b]);
            }
        }
        let corr_diag = (0..n).map(|a| k[a * n + a]).collect();
        let adt = params.alpha_tilde * params.dt;
        let damping = decoherence.iter().map(|d| (adt * d).exp()).collect();
        let dt = params.dt;
        Ok(SmeIntegrator {
            half_kinetic: momentum_operator(&grid, |k| Complex64::cis(-0.25 * k * k * dt)),
            momentum: momentum_operator(&grid, |k| Complex64::new(k, 0.0)),
            momentum_sq: momentum_operator(&grid, |k| Complex64::new(k * k, 0.0)),
            grid,
            family: Some(Arc::new(family)),
            alpha_tilde: params.alpha_tilde,
            dt,
            law,
            decoherence,
            damping,
            corr_diag,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Dissipative part of the generator, `alpha (K - K_aa/2 - K_bb/2) o rho`.
    pub fn dissipator(&self, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let n = self.grid.len();
        DMatrix::from_fn(n, n, |a, b| rho[(a, b)] * (self.alpha_tilde * self.decoherence[a * n + b]))
    }

    /// `(<x>, <p>, energy)`.
    pub fn observables(&self, rho: &DensityMatrix) -> (f64, f64, f64) {
        let m = rho.x_moments();
        let n = self.grid.len();
        let t = rho.trace();
        let (mut p, mut p2) = (0.0, 0.0);
        for a in 0..n {
            for b in 0..n {
                p += (self.momentum[(a, b)] * rho.matrix[(b, a)]).re;
                p2 += (self.momentum_sq[(a, b)] * rho.matrix[(b, a)]).re;
            }
        }
        (m[1], p / t, 0.5 * (m[2] + p2 / t))
    }

    fn controls(&self, rho: &DensityMatrix, tau_mid: f64) -> ControlSignal {
        let order = self.law.max_order();
        if order == 0 {
            return ControlSignal::zero(tau_mid);
        }
        let m = rho.x_moments();
        let t = rho.trace();
        let pr = &self.momentum * &rho.matrix;
        let mut s = [0.0; MAX_ORDER];
        for (n, sn) in s.iter_mut().enumerate().take(order) {
            let mut acc = 0.0;
            for (a, &x) in self.grid.xi().iter().enumerate() {
                acc += x.powi(n as i32) * pr[(a, a)].re;
            }
            *sn = 2.0 * acc / t;
        }
        midpoint_controls(&self.law, &s, &m, self.dt, tau_mid)
    }

    /// `M_a = 1 + sqrt(alpha)(Z_a - <Z>) - (alpha dt / 2) V_a` with
    /// `V_a = K_aa - 2 <K_a.> + <<K>>`. Applying `rho -> M rho M` and
    /// renormalizing reproduces the dissipator in the mean and the innovation
    /// term of the conditional equation while keeping `rho` positive.
    fn conditional_multiplier(&self, rho: &DensityMatrix, z: &[f64]) -> Vec<f64> {
        let n = self.grid.len();
        let t = rho.trace();
        let p: Vec<f64> = (0..n).map(|a| rho.matrix[(a, a)].re / t).collect();
        let k = |a: usize, b: usize| self.decoherence[a * n + b] + 0.5 * (self.corr_diag[a] + self.corr_diag[b]);
        let mean_z: f64 = p.iter().zip(z).map(|(p, z)| p * z).sum();
        let row: Vec<f64> = (0..n).map(|a| (0..n).map(|c| p[c] * k(a, c)).sum()).collect();
        let total: f64 = p.iter().zip(&row).map(|(p, r)| p * r).sum();
        let sa = self.alpha_tilde.sqrt();
        let half_adt = 0.5 * self.alpha_tilde * self.dt;
        (0..n)
            .map(|a| 1.0 + sa * (z[a] - mean_z) - half_adt * (self.corr_diag[a] - 2.0 * row[a] + total))
            .collect()
    }

    /// One step. `None` integrates the unconditional master equation with the
    /// dissipator applied exactly; `Some` applies the conditional update
    /// driven by that noise increment.
    pub fn step(
        &self,
        rho: &mut DensityMatrix,
        noise: Option<MeasurementNoise<'_>>,
        tau: f64,
    ) -> Result<ControlSignal, DynamicsError> {
        let n = self.grid.len();
        rho.matrix = &self.half_kinetic * &rho.matrix * self.half_kinetic.adjoint();
        let controls = self.controls(rho, tau + 0.5 * self.dt);
        let phase: Vec<Complex64> = self
            .grid
            .xi()
            .iter()
            .map(|&x| Complex64::cis(-(0.5 * x * x + control_value(&controls, x)) * self.dt))
            .collect();
        for a in 0..n {
            for b in 0..n {
                rho.matrix[(a, b)] *= phase[a] * phase[b].conj();
            }
        }
        if self.alpha_tilde > 0.0 {
            match noise {
                None => {
                    for a in 0..n {
                        for b in 0..n {
                            rho.matrix[(a, b)] *= self.damping[a * n + b];
                        }
                    }
                }
                Some(noise) => {
                    let family = self.family.as_ref().expect("family built at construction");
                    if !matches!(
                        (&**family, noise),
                        (MeasurementFamily::Fourier(_), MeasurementNoise::Spectral(_))
                            | (MeasurementFamily::RealSpace(_), MeasurementNoise::Position(_))
                    ) {
                        return Err(DynamicsError::NoiseMismatch(family.rep()));
                    }
                    let m = self.conditional_multiplier(rho, &family.noise_field(&self.grid, noise));
                    for a in 0..n {
                        for b in 0..n {
                            rho.matrix[(a, b)] *= m[a] * m[b];
                        }
                    }
                    let t = rho.trace();
                    rho.matrix /= Complex64::new(t, 0.0);
                }
            }
        }
        rho.matrix = &self.half_kinetic * &rho.matrix * self.half_kinetic.adjoint();
        if rho.matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(DynamicsError::NonFinite { tau: tau + self.dt });
        }
        Ok(controls)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmeRecord {
    pub tau: Vec<f64>,
    pub energy: Vec<f64>,
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub trace: Vec<f64>,
    pub min_eigenvalue: Vec<f64>,
}

/// Integrates the unconditional master equation with the sampling plan of a
/// trajectory configuration (the grid must have at most 64 points).
pub fn run_sme_deterministic(config: &TrajectoryConfig) -> Result<SmeRecord, DynamicsError> {
    let setup = super::TrajectorySetup::new(config.clone())?;
    let grid = setup.grid().clone();
    let integrator = SmeIntegrator::new(&config.dynamics, grid, config.control)?;
    let mut rho = DensityMatrix::from_wavefunction(setup.initial_state())?;
    let mut rec = SmeRecord {
        tau: Vec::new(),
        energy: Vec::new(),
        x: Vec::new(),
        p: Vec::new(),
        trace: Vec::new(),
        min_eigenvalue: Vec::new(),
    };
    let dt = config.dynamics.dt;
    let push = |rho: &DensityMatrix, tau: f64, rec: &mut SmeRecord| -> Result<(), DynamicsError> {
        let (x, p, e) = integrator.observables(rho);
        let min_eigenvalue = rho.min_eigenvalue();
        if min_eigenvalue < -POSITIVITY_TOL {
            return Err(DynamicsError::Positivity { tau, min_eigenvalue });
        }
        rec.tau.push(tau);
        rec.x.push(x);
        rec.p.push(p);
        rec.energy.push(e);
        rec.trace.push(rho.trace());
        rec.min_eigenvalue.push(min_eigenvalue);
        Ok(())
    };
    push(&rho, 0.0, &mut rec)?;
    let mut step = 0u64;
    for k in 1..setup.n_samples() {
        for _ in 0..setup.steps_per_sample() {
            integrator.step(&mut rho, None, step as f64 * dt)?;
            step += 1;
        }
        push(&rho, setup.sample_tau(k), &mut rec)?;
    }
    Ok(rec)
}
