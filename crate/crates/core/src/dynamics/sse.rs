//! One step of the normalized diffusive unravelling:
//! `K(dt/2) V(dt) M(dt) K(dt/2)` with the measurement update `M` applied as
//! an Euler-Maruyama multiplier followed by renormalization.

use std::sync::Arc;

use num_complex::Complex64;

use super::measurement::{FourierFamily, MeasurementFamily, MeasurementNoise, RealSpaceFamily};
use super::{midpoint_controls, DynamicsError, MeasurementRep, NORM_COLLAPSE};
use crate::feedback::{control_value, ControlLaw, ControlSignal, MAX_ORDER};
use crate::state::{kinetic_phase, sym_xp_from, Grid, Wavefunction};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// Controls applied during the step.
    pub controls: ControlSignal,
    /// `1 - |psi|^2` just before renormalization.
    pub norm_deficit: f64,
}

/// Reusable integrator for one trajectory. The measurement family is shared.
pub struct SseIntegrator {
    grid: Arc<Grid>,
    family: Option<Arc<MeasurementFamily>>,
    alpha_tilde: f64,
    dt: f64,
    law: ControlLaw,
    half_kinetic: Vec<Complex64>,
    trap_phase: Vec<Complex64>,
    scratch: Vec<Complex64>,
    p_psi: Vec<Complex64>,
    conv: Vec<Complex64>,
    rho: Vec<f64>,
    field: Vec<f64>,
    aux: Vec<f64>,
    coef: Vec<f64>,
    moments: Vec<f64>,
}

impl SseIntegrator {
    /// `family` may be `None` only when `alpha_tilde == 0`.
    pub fn new(
        grid: Arc<Grid>,
        family: Option<Arc<MeasurementFamily>>,
        alpha_tilde: f64,
        dt: f64,
        law: ControlLaw,
    ) -> Result<Self, DynamicsError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(DynamicsError::Config(format!("dt must be positive, got {dt}")));
        }
        if !(alpha_tilde >= 0.0 && alpha_tilde.is_finite()) {
            return Err(DynamicsError::Config(format!("alpha_tilde must be nonnegative, got {alpha_tilde}")));
        }
        if alpha_tilde > 0.0 && family.is_none() {
            return Err(DynamicsError::Config("measurement family required when alpha_tilde > 0".into()));
        }
        law.validate()?;
        let n = grid.len();
        let half_kinetic = kinetic_phase(&grid, 0.5 * dt);
        let trap_phase = grid.xi().iter().map(|x| Complex64::cis(-0.5 * x * x * dt)).collect();
        let m = match family.as_deref() {
            Some(MeasurementFamily::Fourier(f)) => 2 * f.active_components(),
            _ => 0,
        };
        Ok(SseIntegrator {
            grid,
            family: if alpha_tilde > 0.0 { family } else { None },
            alpha_tilde,
            dt,
            law,
            half_kinetic,
            trap_phase,
            scratch: Vec::new(),
            p_psi: vec![Complex64::ZERO; n],
            conv: Vec::with_capacity(n),
            rho: vec![0.0; n],
            field: vec![0.0; n],
            aux: vec![0.0; n],
            coef: vec![0.0; m],
            moments: vec![0.0; m],
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn rep(&self) -> Option<MeasurementRep> {
        self.family.as_deref().map(MeasurementFamily::rep)
    }

    /// Advances `psi` from `tau` to `tau + dt`. `noise` is ignored when the
    /// measurement is off.
    pub fn step(
        &mut self,
        psi: &mut Wavefunction,
        noise: Option<MeasurementNoise<'_>>,
        tau: f64,
    ) -> Result<StepInfo, DynamicsError> {
        let controls = self.kinetic_and_controls(psi, tau + 0.5 * self.dt);
        self.kick(psi, &controls);
        let norm_deficit = match self.family.clone() {
            Some(family) => {
                let noise = noise.ok_or(DynamicsError::NoiseMismatch(family.rep()))?;
                match (&*family, noise) {
                    (MeasurementFamily::Fourier(f), MeasurementNoise::Spectral(s)) => {
                        f.noise_coefficients(s, &mut self.coef);
                        self.fourier_update(f, psi);
                    }
                    (MeasurementFamily::RealSpace(r), MeasurementNoise::Position(p)) => {
                        self.real_space_update(r, psi, &p.values);
                    }
                    _ => return Err(DynamicsError::NoiseMismatch(family.rep())),
                }
                let n2 = psi.norm_sqr();
                if !n2.is_finite() {
                    return Err(DynamicsError::NonFinite { tau: tau + self.dt });
                }
                if n2 < NORM_COLLAPSE {
                    return Err(DynamicsError::NormCollapse {
                        tau: tau + self.dt,
                        norm_sqr: n2,
                    });
                }
                psi.normalize();
                1.0 - n2
            }
            None => 1.0 - psi.norm_sqr(),
        };
        self.grid.apply_in_momentum(psi.amplitudes_mut(), &self.half_kinetic, &mut self.scratch);
        if !psi.amplitudes()[0].re.is_finite() {
            return Err(DynamicsError::NonFinite { tau: tau + self.dt });
        }
        Ok(StepInfo { controls, norm_deficit })
    }

    /// First kinetic half step; the momentum-space amplitudes are reused for
    /// the feedback moments.
    fn kinetic_and_controls(&mut self, psi: &mut Wavefunction, tau_mid: f64) -> ControlSignal {
        let order = self.law.max_order();
        let grid = self.grid.clone();
        let amp = psi.amplitudes_mut();
        grid.fft(amp, &mut self.scratch);
        amp.iter_mut().zip(&self.half_kinetic).for_each(|(z, f)| *z *= f);
        let mut s = [0.0; MAX_ORDER];
        if order == 1 {
            let (num, den) = amp.iter().zip(grid.k()).fold((0.0, 0.0), |(n, d), (z, k)| {
                let w = z.norm_sqr();
                (n + w * k, d + w)
            });
            s[0] = 2.0 * num / den;
        } else if order > 1 {
            self.p_psi.iter_mut().zip(amp.iter()).zip(grid.k()).for_each(|((o, z), k)| *o = z * k);
            grid.ifft(&mut self.p_psi, &mut self.scratch);
        }
        grid.ifft(amp, &mut self.scratch);
        if order == 0 {
            return ControlSignal::zero(tau_mid);
        }
        let dx = grid.dxi();
        let mut m = [0.0; 7];
        for (z, &x) in amp.iter().zip(grid.xi()) {
            let w = z.norm_sqr() * dx;
            let mut xp = 1.0;
            for mk in m.iter_mut() {
                *mk += w * xp;
                xp *= x;
            }
        }
        let norm = m[0];
        m.iter_mut().for_each(|v| *v /= norm);
        if order > 1 {
            let coef = self.law.coefficients();
            for n in 1..=order {
                if coef[n - 1] != 0.0 {
                    s[n - 1] = sym_xp_from(amp, &self.p_psi, grid.xi(), dx, n as u32) / norm;
                }
            }
        }
        midpoint_controls(&self.law, &s, &m, self.dt, tau_mid)
    }

    fn kick(&mut self, psi: &mut Wavefunction, controls: &ControlSignal) {
        let amp = psi.amplitudes_mut();
        if controls.is_zero() {
            amp.iter_mut().zip(&self.trap_phase).for_each(|(z, f)| *z *= f);
        } else {
            let dt = self.dt;
            for ((z, f), &x) in amp.iter_mut().zip(&self.trap_phase).zip(self.grid.xi()) {
                *z *= f * Complex64::cis(-control_value(controls, x) * dt);
            }
        }
    }

    fn load_density(&mut self, psi: &Wavefunction) {
        let amp = psi.amplitudes();
        let total: f64 = amp.iter().map(|z| z.norm_sqr()).sum();
        self.rho.iter_mut().zip(amp).for_each(|(r, z)| *r = z.norm_sqr() / total);
    }

    /// Multiplies by `1 + sqrt(a)(Z - <Z>) - (a dt / 2) V_d` with
    /// `V_d(xi) = sum_kappa W gamma |e^(-i eta kappa xi) - <e^(-i eta kappa xi)>|^2`.
    /// `self.coef` holds the noise coefficients on entry.
    fn fourier_update(&mut self, f: &FourierFamily, psi: &mut Wavefunction) {
        self.load_density(psi);
        f.phase_moments(&self.rho, &mut self.moments);
        let sa = self.alpha_tilde.sqrt();
        let adt = self.alpha_tilde * self.dt;
        let mut mean_z = 0.0;
        let mut constant = 1.0;
        for (j, d) in f.weight.iter().enumerate() {
            let (c, s) = (self.moments[2 * j], self.moments[2 * j + 1]);
            mean_z += self.coef[2 * j] * c + self.coef[2 * j + 1] * s;
            // the +kappa and -kappa terms contribute equally
            constant -= adt * d * (1.0 + c * c + s * s);
            self.coef[2 * j] = sa * self.coef[2 * j] + 2.0 * adt * d * c;
            self.coef[2 * j + 1] = sa * self.coef[2 * j + 1] + 2.0 * adt * d * s;
        }
        constant -= sa * mean_z;
        f.synthesize(&self.coef, &mut self.field);
        for (z, v) in psi.amplitudes_mut().iter_mut().zip(&self.field) {
            *z *= constant + v;
        }
    }

    fn real_space_update(&mut self, r: &RealSpaceFamily, psi: &mut Wavefunction, dw: &[f64]) {
        let grid = self.grid.clone();
        let dx = grid.dxi();
        self.load_density(psi);
        // Z = g * dW
        r.convolve(&grid, dw, &mut self.field, &mut self.conv, &mut self.scratch);
        let mean_z: f64 = self.rho.iter().zip(&self.field).map(|(r, z)| r * z).sum();
        // h(s) = sum_x rho(x) g(s - x)
        let inv_dx = 1.0 / dx;
        self.rho.iter_mut().for_each(|v| *v *= inv_dx);
        r.convolve(&grid, &self.rho, &mut self.aux, &mut self.conv, &mut self.scratch);
        let h2 = dx * self.aux.iter().map(|h| h * h).sum::<f64>();
        // g * h, reusing rho
        let h = std::mem::take(&mut self.aux);
        r.convolve(&grid, &h, &mut self.rho, &mut self.conv, &mut self.scratch);
        self.aux = h;
        let sa = self.alpha_tilde.sqrt();
        let half_adt = 0.5 * self.alpha_tilde * self.dt;
        for ((z, zf), gh) in psi.amplitudes_mut().iter_mut().zip(&self.field).zip(&self.rho) {
            let vd = r.g2 - 2.0 * gh + h2;
            *z *= 1.0 + sa * (zf - mean_z) - half_adt * vd;
        }
    }
}
