//! Laboratory parameters and the dimensionless quantities that drive the
//! single-atom dynamics.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reduced Planck constant, CODATA 2018 (exact), J s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Vacuum permittivity, CODATA 2018, F/m.
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;

/// Ratio required before an ordering `a >> b` is considered satisfied.
pub const DOMINANCE_RATIO: f64 = 10.0;
/// Minimum `w` for the large-`w` kernel to be trusted.
pub const MIN_W: f64 = 100.0;

#[derive(Debug, Error, PartialEq)]
pub enum ParamsError {
    #[error("parameter `{name}` must be strictly positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
}

/// SI-unit description of the atom, trap and imaging beam.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Transition dipole moment, C m.
    pub d_ge: f64,
    /// Optical wavenumber, 1/m.
    pub k0: f64,
    /// Trap frequency along the measured axis, rad/s.
    #[serde(rename = "omega_T")]
    pub omega_t: f64,
    /// Tight transverse trap frequency, rad/s.
    pub omega_z: f64,
    /// Laser detuning, rad/s.
    #[serde(rename = "Delta")]
    pub delta: f64,
    /// Photon flux of the imaging laser, photons/s.
    #[serde(rename = "F0")]
    pub flux: f64,
    /// Atomic mass, kg.
    #[serde(rename = "m")]
    pub mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionlessParams {
    pub alpha: f64,
    pub alpha_tilde: f64,
    pub eta: f64,
    pub w: f64,
    pub x0: f64,
    pub z0: f64,
    #[serde(rename = "Gamma_sp")]
    pub gamma_sp: f64,
    #[serde(rename = "Omega")]
    pub omega: f64,
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<(), ParamsError> {
        let fields = [
            ("d_ge", self.d_ge),
            ("k0", self.k0),
            ("omega_T", self.omega_t),
            ("omega_z", self.omega_z),
            ("Delta", self.delta),
            ("F0", self.flux),
            ("m", self.mass),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(ParamsError::NonPositive { name, value });
            }
        }
        Ok(())
    }
}

/// Measurement strength scaled to the single-atom equation.
pub fn alpha_tilde_from_alpha(alpha: f64) -> f64 {
    3.0 * alpha / (2.0 * PI * PI)
}

pub fn derive_dimensionless(phys: &PhysicalParams) -> Result<DimensionlessParams, ParamsError> {
    phys.validate()?;
    let x0 = (HBAR / (phys.mass * phys.omega_t)).sqrt();
    let z0 = (HBAR / (phys.mass * phys.omega_z)).sqrt();
    let eta = phys.k0 * x0;
    let w = 0.5 * phys.k0 * phys.k0 * z0 * z0;
    let gamma_sp = 4.0 * phys.d_ge * phys.d_ge * phys.k0.powi(3) / (4.0 * PI * EPSILON_0 * 3.0 * HBAR);
    let two_pi_cubed = (2.0 * PI).powi(3);
    let omega = phys.d_ge / HBAR * (phys.flux * phys.k0 * HBAR / (2.0 * two_pi_cubed * EPSILON_0)).sqrt();
    let alpha = gamma_sp / phys.omega_t * (omega / phys.delta).powi(2);
    Ok(DimensionlessParams {
        alpha,
        alpha_tilde: alpha_tilde_from_alpha(alpha),
        eta,
        w,
        x0,
        z0,
        gamma_sp,
        omega,
    })
}

/// A violated frequency ordering or kernel-regime assumption.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum RegimeWarning {
    /// `larger` should dominate `smaller` by at least [`DOMINANCE_RATIO`].
    Ordering {
        larger: &'static str,
        smaller: &'static str,
        ratio: f64,
    },
    SmallW { w: f64 },
}

impl fmt::Display for RegimeWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegimeWarning::Ordering { larger, smaller, ratio } => write!(
                f,
                "{larger} not >> {smaller}: ratio {ratio:.3e} < {DOMINANCE_RATIO}"
            ),
            RegimeWarning::SmallW { w } => write!(f, "w not >> 1: w = {w:.3e} < {MIN_W}"),
        }
    }
}

/// Checks the orderings under which the excited state can be eliminated.
/// Invalid parameters yield no warnings; use [`derive_dimensionless`] to get
/// the error.
pub fn validate_regime(phys: &PhysicalParams) -> Vec<RegimeWarning> {
    let Ok(dim) = derive_dimensionless(phys) else {
        return Vec::new();
    };
    let mut warnings = Vec::new();
    let checks = [
        ("Delta", phys.delta, "Omega", dim.omega),
        ("Delta", phys.delta, "Gamma_sp", dim.gamma_sp),
        ("Delta", phys.delta, "omega_T", phys.omega_t),
        ("Omega", dim.omega, "Gamma_sp", dim.gamma_sp),
        ("Omega", dim.omega, "omega_T", phys.omega_t),
    ];
    for (larger, a, smaller, b) in checks {
        let ratio = a / b;
        if ratio < DOMINANCE_RATIO {
            warnings.push(RegimeWarning::Ordering { larger, smaller, ratio });
        }
    }
    if dim.w < MIN_W {
        warnings.push(RegimeWarning::SmallW { w: dim.w });
    }
    warnings
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn rubidium(omega_t: f64) -> PhysicalParams {
        PhysicalParams {
            d_ge: 3.584e-29,
            k0: 2.0 * PI / 780e-9,
            omega_t,
            omega_z: 2.0 * PI * 2.0e4,
            delta: 2.0 * PI * 1.0e10,
            flux: 1.0e12,
            mass: 1.443e-25,
        }
    }

    #[test]
    fn rubidium_lamb_dicke() {
        let dim = derive_dimensionless(&rubidium(2.0 * PI * 100.0)).unwrap();
        // k0 * sqrt(hbar / (m omega)) evaluated by hand: 8.0554e6 * 1.07853e-6.
        assert!((dim.eta - 8.6879).abs() < 1e-3, "eta = {}", dim.eta);
    }

    #[test]
    fn alpha_tilde_ratio_is_exact() {
        for omega_t in [1.0, 50.0, 3000.0] {
            let dim = derive_dimensionless(&rubidium(omega_t)).unwrap();
            assert_eq!(dim.alpha_tilde, 3.0 * dim.alpha / (2.0 * PI * PI));
        }
    }

    #[test]
    fn eta_and_w_scaling() {
        let base = rubidium(2.0 * PI * 40.0);
        let a = derive_dimensionless(&base).unwrap();
        let b = derive_dimensionless(&PhysicalParams {
            omega_t: base.omega_t / 4.0,
            ..base
        })
        .unwrap();
        assert!((b.eta / a.eta - 2.0).abs() < 1e-14);
        let c = derive_dimensionless(&PhysicalParams {
            omega_z: base.omega_z * 3.0,
            ..base
        })
        .unwrap();
        assert!((a.w / c.w - 3.0).abs() < 1e-13);
    }

    #[test]
    fn nonpositive_inputs_fail() {
        let mut p = rubidium(10.0);
        p.delta = 0.0;
        assert_eq!(
            derive_dimensionless(&p),
            Err(ParamsError::NonPositive { name: "Delta", value: 0.0 })
        );
        p.delta = 1.0;
        p.mass = -1.0;
        assert!(derive_dimensionless(&p).is_err());
    }

    #[test]
    fn json_field_names() {
        let json = serde_json::to_value(rubidium(1.0)).unwrap();
        for key in ["d_ge", "k0", "omega_T", "omega_z", "Delta", "F0", "m"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        let dim = serde_json::to_value(derive_dimensionless(&rubidium(1.0)).unwrap()).unwrap();
        for key in ["alpha", "alpha_tilde", "eta", "w", "x0", "z0", "Gamma_sp", "Omega"] {
            assert!(dim.get(key).is_some(), "missing {key}");
        }
    }
}
