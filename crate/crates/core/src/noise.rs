//! White-noise increments in position and recoil space, and per-trajectory
//! random streams.
//!
//! Every trajectory draws from its own ChaCha stream selected by
//! `(master_seed, trajectory_index)`, so results do not depend on how
//! trajectories are scheduled across workers.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::state::GridSpec;

#[derive(Debug, Error, PartialEq)]
pub enum NoiseError {
    #[error("kappa grid is not symmetric about zero: {0}")]
    AsymmetricGrid(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },
}

/// Independent random stream for one trajectory.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha12Rng,
}

pub fn rng_stream(master_seed: u64, trajectory_index: u64) -> NoiseStream {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(trajectory_index);
    NoiseStream { rng }
}

impl NoiseStream {
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Fills `buf` with independent `N(0, std^2)` samples.
    pub fn fill_normal(&mut self, buf: &mut [f64], std: f64) {
        for v in buf.iter_mut() {
            *v = std * self.standard_normal();
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

/// One step of position-space increments, each `N(0, dt/dxi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization {
    pub values: Vec<f64>,
    pub dt: f64,
    pub dxi: f64,
}

pub fn sample_position_noise(grid: &GridSpec, dt: f64, stream: &mut NoiseStream) -> NoiseRealization {
    assert!(dt > 0.0, "noise increment needs dt > 0");
    let dxi = grid.dxi();
    let mut values = vec![0.0; grid.n_points];
    stream.fill_normal(&mut values, (dt / dxi).sqrt());
    NoiseRealization { values, dt, dxi }
}

impl NoiseRealization {
    /// Projects onto recoil components,
    /// `sqrt(eta / 2 pi) sum_xi dxi exp(-i eta kappa xi) dW(xi)`.
    ///
    /// The result is Hermitian on a symmetric `kappa` grid and has
    /// `E[|dWbar|^2] = dt * eta * L / (2 pi)`.
    pub fn to_spectral(&self, xi: &[f64], kappa: &[f64], eta: f64) -> Result<SpectralNoise, NoiseError> {
        if xi.len() != self.values.len() {
            return Err(NoiseError::Length {
                expected: self.values.len(),
                got: xi.len(),
            });
        }
        check_symmetric(kappa)?;
        let scale = (eta / (2.0 * PI)).sqrt() * self.dxi;
        let n = kappa.len();
        let mut values = vec![Complex64::ZERO; n];
        // Evaluate kappa >= 0 and mirror to keep the symmetry exact.
        for j in n / 2..n {
            let mut acc = Complex64::ZERO;
            for (x, dw) in xi.iter().zip(&self.values) {
                acc += Complex64::cis(-eta * kappa[j] * x) * dw;
            }
            values[j] = acc * scale;
            values[n - 1 - j] = values[j].conj();
        }
        values[n / 2].im = 0.0;
        Ok(SpectralNoise { values })
    }
}

/// Complex recoil-space increments with `value(-kappa) = conj(value(kappa))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralNoise {
    pub values: Vec<Complex64>,
}

fn check_symmetric(kappa: &[f64]) -> Result<(), NoiseError> {
    let n = kappa.len();
    if n % 2 == 0 {
        return Err(NoiseError::AsymmetricGrid(format!("even number of points ({n}) has no kappa = 0")));
    }
    for j in 0..n {
        if kappa[j] != -kappa[n - 1 - j] {
            return Err(NoiseError::AsymmetricGrid(format!(
                "kappa[{j}] = {} but kappa[{}] = {}",
                kappa[j],
                n - 1 - j,
                kappa[n - 1 - j]
            )));
        }
    }
    Ok(())
}

/// Combines real increments `dW(kappa)` into
/// `dWbar(kappa) = (i - 1)/2 (dW(kappa) + i dW(-kappa))`.
pub fn to_fourier_noise(kappa: &[f64], real_increments: &[f64]) -> Result<SpectralNoise, NoiseError> {
    if kappa.len() != real_increments.len() {
        return Err(NoiseError::Length {
            expected: kappa.len(),
            got: real_increments.len(),
        });
    }
    check_symmetric(kappa)?;
    let n = kappa.len();
    let c = Complex64::new(-0.5, 0.5);
    let values = (0..n)
        .map(|j| c * Complex64::new(real_increments[j], real_increments[n - 1 - j]))
        .collect();
    Ok(SpectralNoise { values })
}

/// Draws `N(0, dt/dkappa)` real increments for every grid point.
pub fn sample_real_spectral_increments(n: usize, dkappa: f64, dt: f64, stream: &mut NoiseStream) -> Vec<f64> {
    let mut v = vec![0.0; n];
    stream.fill_normal(&mut v, (dt / dkappa).sqrt());
    v
}

pub fn sample_spectral_noise(
    kappa: &[f64],
    dkappa: f64,
    dt: f64,
    stream: &mut NoiseStream,
) -> Result<SpectralNoise, NoiseError> {
    let real = sample_real_spectral_increments(kappa.len(), dkappa, dt, stream);
    to_fourier_noise(kappa, &real)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid9() -> Vec<f64> {
        (0..9).map(|i| (i as f64 - 4.0) * 0.25).collect()
    }

    #[test]
    fn hermitian_symmetry_is_exact() {
        let kappa = grid9();
        let mut s = rng_stream(3, 1);
        let noise = sample_spectral_noise(&kappa, 0.25, 1e-3, &mut s).unwrap();
        for j in 0..9 {
            assert_eq!(noise.values[8 - j], noise.values[j].conj());
        }
        assert_eq!(noise.values[4].im, 0.0);
    }

    #[test]
    fn asymmetric_grid_is_rejected() {
        let kappa = vec![-1.0, -0.4, 0.0, 0.5, 1.0];
        assert!(matches!(
            to_fourier_noise(&kappa, &[0.0; 5]),
            Err(NoiseError::AsymmetricGrid(_))
        ));
        assert!(to_fourier_noise(&[-1.0, 1.0], &[0.0; 2]).is_err());
    }

    #[test]
    fn streams_are_deterministic() {
        let mut a = rng_stream(42, 7);
        let mut b = rng_stream(42, 7);
        for _ in 0..10_000 {
            assert_eq!(a.standard_normal().to_bits(), b.standard_normal().to_bits());
        }
        let mut c = rng_stream(1, 0);
        let mut d = rng_stream(2, 0);
        let same = (0..100).filter(|_| c.next_u64() == d.next_u64()).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn position_noise_shape() {
        let spec = GridSpec { n_points: 64, length: 8.0 };
        let mut s = rng_stream(0, 0);
        let n = sample_position_noise(&spec, 1e-3, &mut s);
        assert_eq!(n.values.len(), 64);
        assert_eq!(n.dxi, 0.125);
    }

    #[test]
    fn projected_noise_is_hermitian() {
        let spec = GridSpec { n_points: 32, length: 8.0 };
        let mut s = rng_stream(9, 9);
        let n = sample_position_noise(&spec, 1e-3, &mut s);
        let kappa = grid9();
        let sp = n.to_spectral(&spec.positions(), &kappa, 2.0).unwrap();
        for j in 0..9 {
            assert_eq!(sp.values[8 - j], sp.values[j].conj());
        }
    }
}
