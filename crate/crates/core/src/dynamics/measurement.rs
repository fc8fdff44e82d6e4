//! Measurement operators of the single-atom filter.
//!
//! Every operator in the family is diagonal in position, so the family is
//! characterised by a real noise field `Z(xi)` whose covariance
//! `E[Z(x) Z(y)] = K(x, y) dt` also fixes the dissipator
//! `alpha * (K(x,y) - K(x,x)/2 - K(y,y)/2) rho(x,y)`.
//!
//! * `Fourier`: `L_kappa = sqrt(alpha gamma(kappa)) exp(-i eta kappa xi)` on
//!   the kernel grid with Simpson weights, driven by the Hermitian recoil
//!   noise `dWbar`. Only the `kappa > 0` half is stored; the `-kappa` partner
//!   is folded in, and `kappa = 0` only shifts a global phase.
//! * `RealSpace`: `L_s = sqrt(alpha) g(s - xi)` for every grid point `s`,
//!   driven by real white noise, with `g` normalised so that `g * g = K`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::kernels::{gamma_realspace, KernelError, KernelTable};
use crate::noise::{NoiseRealization, SpectralNoise};
use crate::state::Grid;

/// Recoil components whose weight is below this fraction of the largest are
/// dropped from the Fourier family.
const SPECTRAL_CUTOFF: f64 = 1e-20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementRep {
    #[default]
    Fourier,
    RealSpace,
}

/// Noise for one step, matching the representation in use.
#[derive(Debug, Clone, Copy)]
pub enum MeasurementNoise<'a> {
    Spectral(&'a SpectralNoise),
    Position(&'a NoiseRealization),
}

#[derive(Debug)]
pub struct FourierFamily {
    /// Table indices of the retained `kappa > 0` components.
    pub(crate) indices: Vec<usize>,
    /// `sqrt(W_j gamma_j dkappa)`, the amplitude paired with `dWbar_j`.
    pub(crate) noise_amp: Vec<f64>,
    /// `W_j gamma_j`.
    pub(crate) weight: Vec<f64>,
    /// Row-major `[xi][2j]` table of `(cos, sin)(eta kappa_j xi)`.
    pub(crate) trig: Vec<f64>,
    pub(crate) n_table: usize,
}

#[derive(Debug)]
pub struct RealSpaceFamily {
    /// `g` at grid offsets (minimal image), FFT order.
    pub(crate) kernel: Vec<f64>,
    /// FFT of `kernel`.
    pub(crate) kernel_hat: Vec<Complex64>,
    /// `dxi * sum g^2`.
    pub(crate) g2: f64,
}

#[derive(Debug)]
pub enum MeasurementFamily {
    Fourier(FourierFamily),
    RealSpace(RealSpaceFamily),
}

/// Builds the operator family for a grid.
pub fn measurement_operators(
    rep: MeasurementRep,
    table: &KernelTable,
    eta: f64,
    grid: &Arc<Grid>,
) -> Result<MeasurementFamily, KernelError> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(KernelError::Domain(format!("eta must be positive, got {eta}")));
    }
    match rep {
        MeasurementRep::Fourier => Ok(MeasurementFamily::Fourier(FourierFamily::new(table, eta, grid))),
        MeasurementRep::RealSpace => Ok(MeasurementFamily::RealSpace(RealSpaceFamily::new(table, eta, grid)?)),
    }
}

impl FourierFamily {
    fn new(table: &KernelTable, eta: f64, grid: &Grid) -> Self {
        let w = table.simpson_weights();
        let dk = table.dkappa();
        let center = table.center();
        let full: Vec<f64> = w.iter().zip(table.gamma()).map(|(w, g)| w * g).collect();
        let max = full.iter().cloned().fold(0.0, f64::max);
        let indices: Vec<usize> = (center + 1..table.kappa().len())
            .filter(|&j| full[j] > SPECTRAL_CUTOFF * max)
            .collect();
        let noise_amp = indices.iter().map(|&j| (full[j] * dk).sqrt()).collect();
        let weight = indices.iter().map(|&j| full[j]).collect();
        let mut trig = Vec::with_capacity(grid.len() * 2 * indices.len());
        for &x in grid.xi() {
            for &j in &indices {
                let (s, c) = (eta * table.kappa()[j] * x).sin_cos();
                trig.push(c);
                trig.push(s);
            }
        }
        FourierFamily {
            indices,
            noise_amp,
            weight,
            trig,
            n_table: table.kappa().len(),
        }
    }

    pub fn active_components(&self) -> usize {
        self.indices.len()
    }

    /// `(<cos>, <sin>)` pairs of `eta kappa_j x` for the density `rho`.
    pub(crate) fn phase_moments(&self, rho: &[f64], out: &mut [f64]) {
        let m = 2 * self.indices.len();
        out[..m].iter_mut().for_each(|v| *v = 0.0);
        for (row, &r) in self.trig.chunks_exact(m).zip(rho) {
            for (o, t) in out[..m].iter_mut().zip(row) {
                *o += r * t;
            }
        }
    }

    /// `sum_j (coef[2j] cos_j + coef[2j+1] sin_j)` at every grid point.
    pub(crate) fn synthesize(&self, coef: &[f64], out: &mut [f64]) {
        let m = 2 * self.indices.len();
        for (row, o) in self.trig.chunks_exact(m).zip(out.iter_mut()) {
            *o = row.iter().zip(&coef[..m]).map(|(t, c)| t * c).sum();
        }
    }

    /// Coefficients of `Z(xi)` for a spectral increment:
    /// `Z = sum_j 2 c_j (a_j cos_j - b_j sin_j)` with `dWbar_j = a_j + i b_j`.
    pub(crate) fn noise_coefficients(&self, noise: &SpectralNoise, coef: &mut [f64]) {
        assert_eq!(noise.values.len(), self.n_table, "spectral noise does not match the kernel grid");
        for (i, &j) in self.indices.iter().enumerate() {
            let z = noise.values[j];
            let a = 2.0 * self.noise_amp[i];
            coef[2 * i] = a * z.re;
            coef[2 * i + 1] = -a * z.im;
        }
    }
}

impl RealSpaceFamily {
    fn new(table: &KernelTable, eta: f64, grid: &Arc<Grid>) -> Result<Self, KernelError> {
        let n = grid.len();
        let dx = grid.dxi();
        let offsets: Vec<f64> = (0..n as isize)
            .map(|j| if j < n as isize / 2 { j as f64 * dx } else { (j - n as isize) as f64 * dx })
            .collect();
        let gamma = gamma_realspace(table, eta, &offsets)?;
        let scale = (8.0 * PI / 3.0).sqrt();
        let kernel: Vec<f64> = gamma.iter().map(|g| g * scale).collect();
        let mut kernel_hat: Vec<Complex64> = kernel.iter().map(|&g| Complex64::new(g, 0.0)).collect();
        let mut scratch = Vec::new();
        grid.fft(&mut kernel_hat, &mut scratch);
        let g2 = dx * kernel.iter().map(|g| g * g).sum::<f64>();
        Ok(RealSpaceFamily { kernel, kernel_hat, g2 })
    }

    /// Circular convolution `dxi * (g * f)` evaluated through the FFT.
    pub(crate) fn convolve(&self, grid: &Grid, f: &[f64], out: &mut [f64], buf: &mut Vec<Complex64>, scratch: &mut Vec<Complex64>) {
        buf.clear();
        buf.extend(f.iter().map(|&v| Complex64::new(v, 0.0)));
        grid.fft(buf, scratch);
        buf.iter_mut().zip(&self.kernel_hat).for_each(|(z, g)| *z *= g);
        grid.ifft(buf, scratch);
        let dx = grid.dxi();
        out.iter_mut().zip(buf.iter()).for_each(|(o, z)| *o = z.re * dx);
    }
}

impl MeasurementFamily {
    pub fn rep(&self) -> MeasurementRep {
        match self {
            MeasurementFamily::Fourier(_) => MeasurementRep::Fourier,
            MeasurementFamily::RealSpace(_) => MeasurementRep::RealSpace,
        }
    }

    /// Noise field `Z(xi)` for one increment (without the `sqrt(alpha)`).
    pub fn noise_field(&self, grid: &Grid, noise: MeasurementNoise<'_>) -> Vec<f64> {
        let mut out = vec![0.0; grid.len()];
        match (self, noise) {
            (MeasurementFamily::Fourier(f), MeasurementNoise::Spectral(s)) => {
                let mut coef = vec![0.0; 2 * f.indices.len()];
                f.noise_coefficients(s, &mut coef);
                f.synthesize(&coef, &mut out);
            }
            (MeasurementFamily::RealSpace(r), MeasurementNoise::Position(p)) => {
                let (mut buf, mut scratch) = (Vec::new(), Vec::new());
                r.convolve(grid, &p.values, &mut out, &mut buf, &mut scratch);
            }
            _ => panic!("noise does not match the measurement representation"),
        }
        out
    }

    /// Noise covariance `K(x, y)` on the grid (row-major, `N x N`).
    pub fn correlation_matrix(&self, grid: &Grid, table: &KernelTable, eta: f64) -> Vec<f64> {
        let n = grid.len();
        let xi = grid.xi();
        let mut k = vec![0.0; n * n];
        match self {
            MeasurementFamily::Fourier(_) => {
                let w = table.simpson_weights();
                let weights: Vec<(f64, f64)> = w
                    .iter()
                    .zip(table.gamma())
                    .zip(table.kappa())
                    .map(|((w, g), kap)| (w * g, *kap))
                    .collect();
                for a in 0..n {
                    for b in 0..n {
                        let d = xi[a] - xi[b];
                        k[a * n + b] = weights.iter().map(|(wg, kap)| wg * (eta * kap * d).cos()).sum();
                    }
                }
            }
            MeasurementFamily::RealSpace(r) => {
                let dx = grid.dxi();
                for a in 0..n {
                    for b in 0..n {
                        let mut s = 0.0;
                        for m in 0..n {
                            s += r.kernel[(m + n - a) % n] * r.kernel[(m + n - b) % n];
                        }
                        k[a * n + b] = s * dx;
                    }
                }
            }
        }
        k
    }

    /// Diagonals of the individual operators `L_l(xi)` with their quadrature
    /// weights, including the factor `sqrt(alpha)`.
    pub fn lindblad_diagonals(
        &self,
        grid: &Grid,
        table: &KernelTable,
        eta: f64,
        alpha_tilde: f64,
    ) -> Vec<(f64, Vec<Complex64>)> {
        match self {
            MeasurementFamily::Fourier(_) => {
                let w = table.simpson_weights();
                table
                    .kappa()
                    .iter()
                    .zip(table.gamma())
                    .zip(w)
                    .map(|((k, g), w)| {
                        let amp = (alpha_tilde * g).sqrt();
                        let diag = grid.xi().iter().map(|x| Complex64::cis(-eta * k * x) * amp).collect();
                        (w, diag)
                    })
                    .collect()
            }
            MeasurementFamily::RealSpace(r) => {
                let n = grid.len();
                let amp = alpha_tilde.sqrt();
                (0..n)
                    .map(|s| {
                        let diag = (0..n)
                            .map(|x| Complex64::new(amp * r.kernel[(s + n - x) % n], 0.0))
                            .collect();
                        (grid.dxi(), diag)
                    })
                    .collect()
            }
        }
    }
}
