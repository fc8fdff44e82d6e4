//! Wavefunctions on a uniform periodic grid with FFT-based momentum-space
//! operations.

use std::f64::consts::PI;
use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerated deviation of the squared norm before expectation values refuse
/// to run.
pub const NORM_CONTRACT_TOL: f64 = 1e-6;
/// Maximum boundary density, relative to the peak density.
pub const CONTAINMENT_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum StateError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("wavefunction not normalized: |norm^2 - 1| = {deviation:e}")]
    NotNormalized { deviation: f64 },
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub n_points: usize,
    pub length: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            n_points: 512,
            length: 40.0,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), StateError> {
        if self.n_points < 32 || !self.n_points.is_power_of_two() {
            return Err(StateError::Grid(format!(
                "n_points must be a power of two >= 32, got {}",
                self.n_points
            )));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(StateError::Grid(format!("length must be positive, got {}", self.length)));
        }
        Ok(())
    }

    pub fn dxi(&self) -> f64 {
        self.length / self.n_points as f64
    }

    pub fn dk(&self) -> f64 {
        2.0 * PI / self.length
    }

    pub fn nyquist(&self) -> f64 {
        PI * self.n_points as f64 / self.length
    }

    /// Grid points `-L/2 + j dxi`.
    pub fn positions(&self) -> Vec<f64> {
        let dx = self.dxi();
        (0..self.n_points).map(|j| -0.5 * self.length + j as f64 * dx).collect()
    }

    /// Momenta in FFT order.
    pub fn momenta(&self) -> Vec<f64> {
        let n = self.n_points as isize;
        let dk = self.dk();
        (0..n)
            .map(|j| if j < n / 2 { j as f64 * dk } else { (j - n) as f64 * dk })
            .collect()
    }
}

/// Grid geometry together with FFT plans, shared between wavefunctions.
pub struct Grid {
    spec: GridSpec,
    xi: Vec<f64>,
    k: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("spec", &self.spec).finish()
    }
}

impl Grid {
    pub fn new(spec: GridSpec) -> Result<Arc<Grid>, StateError> {
        spec.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Arc::new(Grid {
            spec,
            xi: spec.positions(),
            k: spec.momenta(),
            forward: planner.plan_fft_forward(spec.n_points),
            inverse: planner.plan_fft_inverse(spec.n_points),
        }))
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn len(&self) -> usize {
        self.spec.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn k(&self) -> &[f64] {
        &self.k
    }

    pub fn dxi(&self) -> f64 {
        self.spec.dxi()
    }

    pub fn fft(&self, buf: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        scratch.resize(self.forward.get_inplace_scratch_len(), Complex64::ZERO);
        self.forward.process_with_scratch(buf, scratch);
    }

    /// Inverse transform including the `1/N` normalization.
    pub fn ifft(&self, buf: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        scratch.resize(self.inverse.get_inplace_scratch_len(), Complex64::ZERO);
        self.inverse.process_with_scratch(buf, scratch);
        let s = 1.0 / self.spec.n_points as f64;
        buf.iter_mut().for_each(|z| *z *= s);
    }

    /// Applies a momentum-diagonal multiplier to `buf` (position representation).
    pub fn apply_in_momentum(&self, buf: &mut [Complex64], factor: &[Complex64], scratch: &mut Vec<Complex64>) {
        self.fft(buf, scratch);
        buf.iter_mut().zip(factor).for_each(|(z, f)| *z *= f);
        self.ifft(buf, scratch);
    }
}

#[derive(Clone)]
pub struct Wavefunction {
    grid: Arc<Grid>,
    amp: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl fmt::Debug for Wavefunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Wavefunction")
            .field("grid", &self.grid.spec)
            .field("norm_sqr", &self.norm_sqr())
            .finish()
    }
}

impl Wavefunction {
    pub fn from_amplitudes(grid: Arc<Grid>, amp: Vec<Complex64>) -> Result<Self, StateError> {
        if amp.len() != grid.len() {
            return Err(StateError::Domain(format!(
                "expected {} amplitudes, got {}",
                grid.len(),
                amp.len()
            )));
        }
        Ok(Wavefunction {
            grid,
            amp,
            scratch: Vec::new(),
        })
    }

    /// Normalized `exp(-(xi - center)^2 / (4 sigma2))`.
    pub fn gaussian(grid: Arc<Grid>, center: f64, sigma2: f64) -> Result<Self, StateError> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(StateError::Domain(format!("sigma2 must be positive, got {sigma2}")));
        }
        let sigma = sigma2.sqrt();
        let lo = grid.xi[0];
        let hi = grid.xi[grid.len() - 1];
        if center - 5.0 * sigma < lo || center + 5.0 * sigma > hi {
            return Err(StateError::Domain(format!(
                "gaussian at {center} with sigma {sigma} does not fit inside [{lo}, {hi}]"
            )));
        }
        let amp = grid
            .xi
            .iter()
            .map(|&x| Complex64::new((-(x - center).powi(2) / (4.0 * sigma2)).exp(), 0.0))
            .collect();
        let mut psi = Wavefunction::from_amplitudes(grid, amp)?;
        psi.normalize();
        Ok(psi)
    }

    /// Harmonic-oscillator eigenstate `n` (n <= 1 supported analytically) centred at 0.
    pub fn oscillator_eigenstate(grid: Arc<Grid>, n: usize) -> Result<Self, StateError> {
        let amp = grid
            .xi
            .iter()
            .map(|&x| {
                let g = (-0.5 * x * x).exp();
                let v = match n {
                    0 => g,
                    1 => x * g,
                    2 => (2.0 * x * x - 1.0) * g,
                    _ => return Err(StateError::Domain(format!("eigenstate {n} not tabulated"))),
                };
                Ok(Complex64::new(v, 0.0))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut psi = Wavefunction::from_amplitudes(grid, amp)?;
        psi.normalize();
        Ok(psi)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amp
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amp
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amp.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.dxi()
    }

    /// Rescales to unit norm and returns the squared norm found beforehand.
    pub fn normalize(&mut self) -> f64 {
        let n2 = self.norm_sqr();
        if n2 > 0.0 {
            let s = 1.0 / n2.sqrt();
            self.amp.iter_mut().for_each(|z| *z *= s);
        }
        n2
    }

    fn check_normalized(&self) -> Result<(), StateError> {
        let deviation = (self.norm_sqr() - 1.0).abs();
        if deviation > NORM_CONTRACT_TOL {
            Err(StateError::NotNormalized { deviation })
        } else {
            Ok(())
        }
    }

    /// Position probability density `|psi|^2 dxi`.
    pub fn density_weights(&self) -> Vec<f64> {
        let dx = self.grid.dxi();
        self.amp.iter().map(|z| z.norm_sqr() * dx).collect()
    }

    /// `<x^n>` for `n` in `1..=4` (higher powers are accepted as well).
    pub fn expect_x_power(&self, n: u32) -> Result<f64, StateError> {
        self.check_normalized()?;
        Ok(self.raw_x_moment(n))
    }

    pub(crate) fn raw_x_moment(&self, n: u32) -> f64 {
        let dx = self.grid.dxi();
        self.amp
            .iter()
            .zip(&self.grid.xi)
            .map(|(z, x)| z.norm_sqr() * x.powi(n as i32))
            .sum::<f64>()
            * dx
    }

    fn momentum_amplitudes(&mut self) -> Vec<Complex64> {
        let mut phi = self.amp.clone();
        self.grid.fft(&mut phi, &mut self.scratch);
        phi
    }

    /// `<p>` from the spectral representation.
    pub fn expect_p(&mut self) -> Result<f64, StateError> {
        self.check_normalized()?;
        let phi = self.momentum_amplitudes();
        Ok(momentum_moment(&phi, &self.grid.k, 1))
    }

    pub fn expect_p2(&mut self) -> Result<f64, StateError> {
        self.check_normalized()?;
        let phi = self.momentum_amplitudes();
        Ok(momentum_moment(&phi, &self.grid.k, 2))
    }

    /// `p psi` in the position representation.
    pub fn apply_p(&mut self) -> Vec<Complex64> {
        let mut buf = self.momentum_amplitudes();
        buf.iter_mut().zip(&self.grid.k).for_each(|(z, k)| *z *= k);
        self.grid.ifft(&mut buf, &mut self.scratch);
        buf
    }

    /// `<p x^(n-1) + x^(n-1) p> = 2 Re <psi| x^(n-1) p |psi>`.
    pub fn expect_sym_xp(&mut self, n: u32) -> Result<f64, StateError> {
        self.check_normalized()?;
        if n == 0 {
            return Err(StateError::Domain("sym_xp order must be >= 1".into()));
        }
        let p_psi = self.apply_p();
        Ok(sym_xp_from(&self.amp, &p_psi, &self.grid.xi, self.grid.dxi(), n))
    }

    /// `(<x^2> + <p^2>) / 2`.
    pub fn energy(&mut self) -> Result<f64, StateError> {
        let x2 = self.expect_x_power(2)?;
        let p2 = self.expect_p2()?;
        Ok(0.5 * (x2 + p2))
    }

    /// `(<x>, <p>, energy)` with a single transform.
    pub fn observables(&mut self) -> Result<(f64, f64, f64), StateError> {
        self.check_normalized()?;
        let phi = self.momentum_amplitudes();
        let p = momentum_moment(&phi, &self.grid.k, 1);
        let p2 = momentum_moment(&phi, &self.grid.k, 2);
        let x = self.raw_x_moment(1);
        let x2 = self.raw_x_moment(2);
        Ok((x, p, 0.5 * (x2 + p2)))
    }

    /// Applies `exp(-i (p^2/2) dt/2)`, half of a Strang kinetic step.
    pub fn kinetic_half_step(&mut self, dt: f64) {
        let phase = kinetic_phase(&self.grid, 0.5 * dt);
        self.apply_kinetic_phase(&phase);
    }

    /// Applies a precomputed momentum-diagonal phase.
    pub fn apply_kinetic_phase(&mut self, phase: &[Complex64]) {
        self.grid.apply_in_momentum(&mut self.amp, phase, &mut self.scratch);
    }

    /// Applies `exp(-i V dt/2)` pointwise.
    pub fn potential_half_step(&mut self, potential: &[f64], dt: f64) {
        self.potential_phase(potential, 0.5 * dt);
    }

    /// Applies `exp(-i V h)` pointwise.
    pub fn potential_phase(&mut self, potential: &[f64], h: f64) {
        self.amp
            .iter_mut()
            .zip(potential)
            .for_each(|(z, v)| *z *= Complex64::cis(-v * h));
    }

    /// Boundary density relative to the peak (outermost cell on each side).
    pub fn boundary_ratio(&self) -> f64 {
        let n = self.amp.len();
        let peak = self.amp.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
        if peak == 0.0 {
            return 0.0;
        }
        self.amp[0].norm_sqr().max(self.amp[n - 1].norm_sqr()) / peak
    }

    pub fn is_contained(&self) -> bool {
        self.boundary_ratio() < CONTAINMENT_THRESHOLD
    }

    /// `<a|b>` integrated over the grid.
    pub fn overlap(&self, other: &Wavefunction) -> Complex64 {
        self.amp
            .iter()
            .zip(&other.amp)
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            * self.grid.dxi()
    }

    /// L2 distance on the grid.
    pub fn distance(&self, other: &Wavefunction) -> f64 {
        (self
            .amp
            .iter()
            .zip(&other.amp)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            * self.grid.dxi())
        .sqrt()
    }

    /// Momentum-space density `|psi(k)|^2 dk` in FFT order.
    pub fn momentum_density(&mut self) -> Vec<f64> {
        let phi = self.momentum_amplitudes();
        let s = self.grid.dxi() / self.grid.len() as f64;
        phi.iter().map(|z| z.norm_sqr() * s).collect()
    }

    /// Writes a JSON header line `{n_points, L, tau}` followed by
    /// little-endian interleaved `(re, im)` doubles.
    pub fn write_snapshot<W: Write>(&self, mut out: W, tau: f64) -> Result<(), StateError> {
        let header = SnapshotHeader {
            n_points: self.grid.len(),
            length: self.grid.spec.length,
            tau,
        };
        let line = serde_json::to_string(&header).map_err(|e| StateError::Snapshot(e.to_string()))?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
        for z in &self.amp {
            out.write_all(&z.re.to_le_bytes())?;
            out.write_all(&z.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: BufRead>(mut input: R) -> Result<(Wavefunction, f64), StateError> {
        let mut line = String::new();
        input.read_line(&mut line)?;
        let header: SnapshotHeader =
            serde_json::from_str(line.trim_end()).map_err(|e| StateError::Snapshot(format!("header: {e}")))?;
        let grid = Grid::new(GridSpec {
            n_points: header.n_points,
            length: header.length,
        })?;
        let mut amp = Vec::with_capacity(header.n_points);
        let mut buf = [0u8; 8];
        for j in 0..header.n_points {
            let mut read = |part: &str| -> Result<f64, StateError> {
                input
                    .read_exact(&mut buf)
                    .map_err(|_| StateError::Snapshot(format!("truncated at amplitude {j} ({part})")))?;
                Ok(f64::from_le_bytes(buf))
            };
            let re = read("re")?;
            let im = read("im")?;
            amp.push(Complex64::new(re, im));
        }
        Ok((Wavefunction::from_amplitudes(grid, amp)?, header.tau))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotHeader {
    n_points: usize,
    #[serde(rename = "L")]
    length: f64,
    tau: f64,
}

/// `exp(-i k^2/2 h)` in FFT order.
pub fn kinetic_phase(grid: &Grid, h: f64) -> Vec<Complex64> {
    grid.k.iter().map(|k| Complex64::cis(-0.5 * k * k * h)).collect()
}

pub(crate) fn momentum_moment(phi: &[Complex64], k: &[f64], power: i32) -> f64 {
    let (num, den) = phi.iter().zip(k).fold((0.0, 0.0), |(n, d), (z, k)| {
        let w = z.norm_sqr();
        (n + w * k.powi(power), d + w)
    });
    num / den
}

pub(crate) fn sym_xp_from(psi: &[Complex64], p_psi: &[Complex64], xi: &[f64], dxi: f64, n: u32) -> f64 {
    let s: Complex64 = psi
        .iter()
        .zip(p_psi)
        .zip(xi)
        .map(|((a, b), x)| a.conj() * b * x.powi(n as i32 - 1))
        .sum();
    2.0 * s.re * dxi
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Arc<Grid> {
        Grid::new(GridSpec::default()).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec { n_points: 48, length: 10.0 }.validate().is_err());
        assert!(GridSpec { n_points: 16, length: 10.0 }.validate().is_err());
        assert!(GridSpec { n_points: 64, length: -1.0 }.validate().is_err());
        let g = GridSpec { n_points: 64, length: 8.0 };
        assert!((g.nyquist() - PI * 8.0).abs() < 1e-12);
    }

    #[test]
    fn ground_state_energy_and_parity() {
        let mut psi = Wavefunction::gaussian(grid(), 0.0, 0.5).unwrap();
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
        assert!((psi.energy().unwrap() - 0.5).abs() < 1e-12);
        assert!(psi.expect_p().unwrap().abs() < 1e-12);
        assert!(psi.expect_sym_xp(1).unwrap().abs() < 1e-12);
    }

    #[test]
    fn displaced_gaussian_moments() {
        let mut psi = Wavefunction::gaussian(grid(), 2.0, 0.5).unwrap();
        assert!((psi.expect_x_power(1).unwrap() - 2.0).abs() < 1e-12);
        assert!((psi.expect_x_power(2).unwrap() - 4.5).abs() < 1e-12);
        assert!(psi.expect_p().unwrap().abs() < 1e-12);
        assert!((psi.energy().unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn first_excited_state_energy() {
        let mut psi = Wavefunction::oscillator_eigenstate(grid(), 1).unwrap();
        assert!((psi.energy().unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn boosted_gaussian_momentum() {
        let g = grid();
        let mut psi = Wavefunction::gaussian(g.clone(), 0.0, 0.5).unwrap();
        let p0 = 1.5;
        for (z, x) in psi.amplitudes_mut().iter_mut().zip(g.xi()) {
            *z *= Complex64::cis(p0 * x);
        }
        assert!((psi.expect_p().unwrap() - p0).abs() < 1e-8);
        // <px + xp> = 2 p0 <x> = 0 at the origin
        assert!(psi.expect_sym_xp(2).unwrap().abs() < 1e-8);
    }

    #[test]
    fn containment_failure() {
        assert!(matches!(
            Wavefunction::gaussian(grid(), 18.0, 0.5),
            Err(StateError::Domain(_))
        ));
    }

    #[test]
    fn unnormalized_input_is_rejected() {
        let g = grid();
        let amp = vec![Complex64::new(1.0, 0.0); g.len()];
        let psi = Wavefunction::from_amplitudes(g, amp).unwrap();
        assert!(matches!(psi.expect_x_power(1), Err(StateError::NotNormalized { .. })));
    }

    #[test]
    fn parseval() {
        let mut psi = Wavefunction::gaussian(grid(), 1.3, 0.8).unwrap();
        let total: f64 = psi.momentum_density().iter().sum();
        assert!((total - psi.norm_sqr()).abs() < 1e-12);
    }

    #[test]
    fn split_steps_are_unitary() {
        let g = grid();
        let mut psi = Wavefunction::gaussian(g.clone(), 1.0, 0.5).unwrap();
        let v: Vec<f64> = g.xi().iter().map(|x| 0.5 * x * x).collect();
        for _ in 0..10 {
            let before = psi.norm_sqr();
            psi.kinetic_half_step(0.01);
            psi.potential_half_step(&v, 0.01);
            assert!((psi.norm_sqr() - before).abs() < 1e-12);
        }
    }

    #[test]
    fn snapshot_round_trip() {
        let psi = Wavefunction::gaussian(grid(), 0.5, 0.5).unwrap();
        let mut buf = Vec::new();
        psi.write_snapshot(&mut buf, 1.25).unwrap();
        let header_end = buf.iter().position(|&b| b == b'\n').unwrap();
        assert_eq!(buf.len() - header_end - 1, 16 * 512);
        let (back, tau) = Wavefunction::read_snapshot(&buf[..]).unwrap();
        assert_eq!(tau, 1.25);
        assert_eq!(back.amplitudes(), psi.amplitudes());
        let truncated = &buf[..buf.len() - 5];
        assert!(Wavefunction::read_snapshot(truncated).is_err());
    }
}
