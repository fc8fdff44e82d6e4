//! Measurement spectrum of dispersive imaging along the long axis of a
//! cigar-shaped trap.
//!
//! The spectrum `gamma(kappa)` weights the photon recoil `kappa` (in units of
//! the optical wavenumber) transferred along the measured axis. Two forms are
//! provided: the exact integral over the transverse recoil component, and the
//! large-`w` form in which the longitudinal recoil has been expanded to
//! quartic order.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{self, QuadError};

/// Largest exponent kept in the Gaussian-form integrand; beyond it the
/// integrand is below `exp(-60)` of its peak.
const EXPONENT_CUTOFF: f64 = 60.0;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid kernel configuration: {0}")]
    Config(String),
    #[error("quadrature failed at kappa = {kappa}: {source}")]
    Quadrature {
        kappa: f64,
        #[source]
        source: QuadError,
    },
    #[error("kernel table csv line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl KernelError {
    /// Best quadrature estimate carried by a quadrature failure.
    pub fn best_estimate(&self) -> Option<f64> {
        match self {
            KernelError::Quadrature { source, .. } => source.estimate(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KernelMethod {
    Full,
    #[default]
    Gaussian,
}

impl fmt::Display for KernelMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelMethod::Full => write!(f, "full"),
            KernelMethod::Gaussian => write!(f, "gaussian"),
        }
    }
}

impl FromStr for KernelMethod {
    type Err = KernelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(KernelMethod::Full),
            "gaussian" => Ok(KernelMethod::Gaussian),
            other => Err(KernelError::Config(format!("unknown kernel method `{other}`"))),
        }
    }
}

/// Treatment of the dipole projection `[d.eps]^2 / d^2`.
///
/// `Dipole` keeps the projection for a transition dipole along the transverse
/// `y` axis, giving `1 - kappa_y^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Polarization {
    #[default]
    Unity,
    Dipole,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelConfig {
    pub w: f64,
    pub method: KernelMethod,
    pub n_kappa: usize,
    pub quad_tol: f64,
    pub polarization: Polarization,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            w: 3000.0,
            method: KernelMethod::Gaussian,
            n_kappa: 64,
            quad_tol: 1e-10,
            polarization: Polarization::Unity,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<(), KernelError> {
        if !(self.w.is_finite() && self.w > 0.0) {
            return Err(KernelError::Config(format!("w must be positive, got {}", self.w)));
        }
        if self.n_kappa < 8 || self.n_kappa % 2 != 0 {
            return Err(KernelError::Config(format!(
                "n_kappa must be even and >= 8, got {}",
                self.n_kappa
            )));
        }
        if !(self.quad_tol > 0.0 && self.quad_tol <= 1e-2) {
            return Err(KernelError::Config(format!(
                "quad_tol must lie in (0, 1e-2], got {}",
                self.quad_tol
            )));
        }
        Ok(())
    }
}

/// Large-`w` spectrum
/// `gamma(kappa) = int dky exp(-w ky^2) exp(-w (kappa^2 + ky^2)^2 / 4)`.
pub fn gamma_tilde_gaussian(kappa: f64, w: f64, quad_tol: f64) -> Result<f64, KernelError> {
    if !(w > 0.0 && w.is_finite()) {
        return Err(KernelError::Domain(format!("w must be positive, got {w}")));
    }
    if !kappa.is_finite() {
        return Err(KernelError::Domain(format!("kappa must be finite, got {kappa}")));
    }
    let k2 = kappa * kappa;
    let integrand = |y: f64| {
        let s = k2 + y * y;
        (-w * y * y - 0.25 * w * s * s).exp()
    };
    let y_max = (EXPONENT_CUTOFF / w).sqrt().min((4.0 * EXPONENT_CUTOFF / w).powf(0.25));
    let est = quadrature::integrate(integrand, 0.0, y_max, quad_tol)
        .map_err(|source| KernelError::Quadrature { kappa, source })?;
    Ok(2.0 * est.value)
}

/// Exact spectrum with the inverse-square-root endpoint singularity removed by
/// `ky = sqrt(1 - kappa^2) sin(theta)`.
///
/// With `R = sqrt(1 - kappa^2)` the integrand becomes
/// `exp(-w [(1 - R)^2 + 2 R (1 - cos theta)])` over `theta in (-pi/2, pi/2)`.
pub fn gamma_tilde_full(
    kappa: f64,
    w: f64,
    quad_tol: f64,
    polarization: Polarization,
) -> Result<f64, KernelError> {
    if !(kappa.abs() < 1.0) {
        return Err(KernelError::Domain(format!("|kappa| must be < 1, got {kappa}")));
    }
    full_unchecked(kappa, w, quad_tol, polarization)
}

fn full_unchecked(kappa: f64, w: f64, quad_tol: f64, polarization: Polarization) -> Result<f64, KernelError> {
    if !(w > 0.0 && w.is_finite()) {
        return Err(KernelError::Domain(format!("w must be positive, got {w}")));
    }
    let k2 = (kappa * kappa).min(1.0);
    let r = (1.0 - k2).sqrt();
    let one_minus_r = k2 / (1.0 + r);
    let base = w * one_minus_r * one_minus_r;
    let integrand = |theta: f64| {
        let s = (0.5 * theta).sin();
        let pol = match polarization {
            Polarization::Unity => 1.0,
            Polarization::Dipole => {
                let ky = r * theta.sin();
                1.0 - ky * ky
            }
        };
        pol * (-base - 4.0 * w * r * s * s).exp()
    };
    let est = quadrature::integrate(integrand, 0.0, FRAC_PI_2, quad_tol)
        .map_err(|source| KernelError::Quadrature { kappa, source })?;
    Ok(2.0 * est.value)
}

/// Pointwise spectrum of the pancake (two-dimensional) geometry,
/// `gamma(kx, ky) = pol * exp(-w (1 - kz)^2) / kz`.
pub fn pancake_gamma(kx: f64, ky: f64, w: f64, polarization: Polarization) -> Result<f64, KernelError> {
    let rho2 = kx * kx + ky * ky;
    if !(rho2 < 1.0) {
        return Err(KernelError::Domain(format!(
            "transverse recoil must satisfy kx^2 + ky^2 < 1, got {rho2}"
        )));
    }
    let kz = (1.0 - rho2).sqrt();
    let one_minus_kz = rho2 / (1.0 + kz);
    let pol = match polarization {
        Polarization::Unity => 1.0,
        Polarization::Dipole => 1.0 - ky * ky,
    };
    Ok(pol * (-w * one_minus_kz * one_minus_kz).exp() / kz)
}

/// Tabulated spectrum on a uniform, symmetric grid over `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    kappa: Vec<f64>,
    gamma: Vec<f64>,
    w: f64,
    method: KernelMethod,
}

impl KernelTable {
    /// Builds a table from raw values, checking the grid layout and the
    /// evenness/positivity invariants.
    pub fn from_values(kappa: Vec<f64>, gamma: Vec<f64>, w: f64, method: KernelMethod) -> Result<Self, KernelError> {
        let n = kappa.len();
        if n != gamma.len() {
            return Err(KernelError::Config("kappa and gamma lengths differ".into()));
        }
        if n < 9 || (n - 1) % 2 != 0 {
            return Err(KernelError::Config(format!(
                "table needs an odd number (>= 9) of points, got {n}"
            )));
        }
        let intervals = n - 1;
        let h = 2.0 / intervals as f64;
        for (i, &k) in kappa.iter().enumerate() {
            let expected = (i as f64 - (intervals / 2) as f64) * h;
            if (k - expected).abs() > 1e-12 {
                return Err(KernelError::Domain(format!(
                    "kappa grid must be uniform on [-1, 1]; point {i} is {k}, expected {expected}"
                )));
            }
        }
        for (i, &g) in gamma.iter().enumerate() {
            if !(g.is_finite() && g >= 0.0) {
                return Err(KernelError::Domain(format!("gamma[{i}] = {g} is not a finite nonnegative value")));
            }
            let mirror = gamma[n - 1 - i];
            if (g - mirror).abs() > 1e-12 * g.abs().max(mirror.abs()) {
                return Err(KernelError::Domain(format!("gamma is not even at index {i}")));
            }
        }
        Ok(KernelTable { kappa, gamma, w, method })
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn method(&self) -> KernelMethod {
        self.method
    }

    /// Number of intervals (`n_kappa`).
    pub fn intervals(&self) -> usize {
        self.kappa.len() - 1
    }

    pub fn dkappa(&self) -> f64 {
        2.0 / self.intervals() as f64
    }

    /// Index of `kappa = 0`.
    pub fn center(&self) -> usize {
        self.intervals() / 2
    }

    pub fn simpson_weights(&self) -> Vec<f64> {
        quadrature::simpson_weights(self.intervals(), self.dkappa())
    }

    /// The same table with `kappa -> -kappa`.
    pub fn mirrored(&self) -> KernelTable {
        let mut gamma = self.gamma.clone();
        gamma.reverse();
        KernelTable {
            kappa: self.kappa.clone(),
            gamma,
            w: self.w,
            method: self.method,
        }
    }

    /// Writes `kappa,gamma` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), KernelError> {
        out.write_all(b"kappa,gamma\n")?;
        for (k, g) in self.kappa.iter().zip(&self.gamma) {
            writeln!(out, "{k:.16e},{g:.16e}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R, w: f64, method: KernelMethod) -> Result<Self, KernelError> {
        let mut kappa = Vec::new();
        let mut gamma = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            if idx == 0 {
                if line.trim() != "kappa,gamma" {
                    return Err(KernelError::Parse {
                        line: lineno,
                        message: format!("expected header `kappa,gamma`, found `{line}`"),
                    });
                }
                continue;
            }
            let mut fields = line.split(',');
            let mut next = |name: &str| -> Result<f64, KernelError> {
                let raw = fields.next().ok_or_else(|| KernelError::Parse {
                    line: lineno,
                    message: format!("missing field `{name}`"),
                })?;
                raw.trim().parse::<f64>().map_err(|e| KernelError::Parse {
                    line: lineno,
                    message: format!("field `{name}`: {e}"),
                })
            };
            kappa.push(next("kappa")?);
            gamma.push(next("gamma")?);
        }
        KernelTable::from_values(kappa, gamma, w, method)
    }
}

/// Evaluates the spectrum on `n_kappa + 1` uniform points, computing the
/// `kappa >= 0` half and mirroring it.
pub fn tabulate_kernel(config: &KernelConfig) -> Result<KernelTable, KernelError> {
    config.validate()?;
    let n = config.n_kappa;
    let half = n / 2;
    let h = 2.0 / n as f64;
    let kappa: Vec<f64> = (0..=n).map(|i| (i as f64 - half as f64) * h).collect();
    let mut gamma = vec![0.0; n + 1];
    for i in half..=n {
        let k = kappa[i];
        let g = match config.method {
            KernelMethod::Gaussian => gamma_tilde_gaussian(k, config.w, config.quad_tol)?,
            // The endpoints |kappa| = 1 are the finite limit of the substituted integral.
            KernelMethod::Full => full_unchecked(k, config.w, config.quad_tol, config.polarization)?,
        };
        gamma[i] = g;
        gamma[n - i] = g;
    }
    Ok(KernelTable {
        kappa,
        gamma,
        w: config.w,
        method: config.method,
    })
}

/// Even moment `int kappa^n gamma(kappa) dkappa` by composite Simpson.
pub fn kernel_moment(table: &KernelTable, n: u32) -> Result<f64, KernelError> {
    if n % 2 != 0 {
        return Err(KernelError::Domain(format!("odd moment {n} requested; odd moments vanish")));
    }
    let weights = table.simpson_weights();
    Ok(weights
        .iter()
        .zip(table.kappa())
        .zip(table.gamma())
        .map(|((w, k), g)| w * k.powi(n as i32) * g)
        .sum())
}

/// Real-space kernel
/// `G(xi) = sqrt(3 eta / 8 pi) int dkappa sqrt(gamma / 2 pi) exp(i eta kappa xi)`.
pub fn gamma_realspace(table: &KernelTable, eta: f64, xi: &[f64]) -> Result<Vec<f64>, KernelError> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(KernelError::Domain(format!("eta must be positive, got {eta}")));
    }
    let weights = table.simpson_weights();
    let amp: Vec<f64> = weights
        .iter()
        .zip(table.gamma())
        .map(|(w, g)| w * (g / (2.0 * PI)).sqrt())
        .collect();
    let prefactor = (3.0 * eta / (8.0 * PI)).sqrt();
    let mut re = Vec::with_capacity(xi.len());
    let mut max_im: f64 = 0.0;
    for &x in xi {
        let (mut sr, mut si) = (0.0, 0.0);
        for (a, k) in amp.iter().zip(table.kappa()) {
            let (s, c) = (eta * k * x).sin_cos();
            sr += a * c;
            si += a * s;
        }
        re.push(prefactor * sr);
        max_im = max_im.max((prefactor * si).abs());
    }
    let max_re = re.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if max_im > 1e-12 * max_re.max(f64::MIN_POSITIVE) {
        return Err(KernelError::Domain(format!(
            "real-space kernel has imaginary residue {max_im:e} (table not even?)"
        )));
    }
    Ok(re)
}
