//! Polynomial feedback on the trap: `H_control = sum_n u_n xi^n` with
//! `u_n = c_n (n/2) <p x^(n-1) + x^(n-1) p>`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::state::{StateError, Wavefunction};

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Error)]
pub enum FeedbackError {
    #[error("control coefficient c{order} = {value} must be finite and nonnegative")]
    Coefficient { order: usize, value: f64 },
    #[error(transparent)]
    State(#[from] StateError),
}

/// Coefficients `c_1..c_4`; a zero coefficient disables that order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlLaw {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl ControlLaw {
    pub fn none() -> Self {
        ControlLaw::default()
    }

    pub fn linear(c1: f64) -> Self {
        ControlLaw { c1, ..Default::default() }
    }

    pub fn from_coefficients(c: [f64; MAX_ORDER]) -> Result<Self, FeedbackError> {
        let law = ControlLaw {
            c1: c[0],
            c2: c[1],
            c3: c[2],
            c4: c[3],
        };
        law.validate()?;
        Ok(law)
    }

    pub fn coefficients(&self) -> [f64; MAX_ORDER] {
        [self.c1, self.c2, self.c3, self.c4]
    }

    pub fn validate(&self) -> Result<(), FeedbackError> {
        for (i, &c) in self.coefficients().iter().enumerate() {
            if !(c.is_finite() && c >= 0.0) {
                return Err(FeedbackError::Coefficient { order: i + 1, value: c });
            }
        }
        Ok(())
    }

    /// Highest enabled order, 0 when feedback is off.
    pub fn max_order(&self) -> usize {
        self.coefficients()
            .iter()
            .rposition(|&c| c != 0.0)
            .map_or(0, |i| i + 1)
    }

    pub fn is_active(&self) -> bool {
        self.max_order() > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlSignal {
    pub u: [f64; MAX_ORDER],
    pub tau: f64,
}

impl ControlSignal {
    pub fn zero(tau: f64) -> Self {
        ControlSignal { u: [0.0; MAX_ORDER], tau }
    }

    pub fn is_zero(&self) -> bool {
        self.u.iter().all(|&u| u == 0.0)
    }
}

/// Feedback signal from the symmetrized moments `s_n = <p x^(n-1) + x^(n-1) p>`.
pub fn controls_from_moments(law: &ControlLaw, sym_xp: &[f64; MAX_ORDER], tau: f64) -> ControlSignal {
    let mut u = [0.0; MAX_ORDER];
    for (n, (c, s)) in law.coefficients().iter().zip(sym_xp).enumerate() {
        if *c != 0.0 {
            u[n] = c * (n + 1) as f64 * 0.5 * s;
        }
    }
    ControlSignal { u, tau }
}

pub fn compute_controls(psi: &mut Wavefunction, law: &ControlLaw, tau: f64) -> Result<ControlSignal, FeedbackError> {
    let order = law.max_order();
    if order == 0 {
        return Ok(ControlSignal::zero(tau));
    }
    let mut s = [0.0; MAX_ORDER];
    for (n, slot) in s.iter_mut().enumerate().take(order) {
        if law.coefficients()[n] != 0.0 {
            *slot = psi.expect_sym_xp(n as u32 + 1)?;
        }
    }
    Ok(controls_from_moments(law, &s, tau))
}

/// `sum_n u_n xi^n` on the grid points.
pub fn control_potential(signal: &ControlSignal, xi: &[f64]) -> Vec<f64> {
    xi.iter().map(|&x| control_value(signal, x)).collect()
}

pub(crate) fn control_value(signal: &ControlSignal, x: f64) -> f64 {
    // Horner on u4 x^4 + u3 x^3 + u2 x^2 + u1 x
    let [u1, u2, u3, u4] = signal.u;
    x * (u1 + x * (u2 + x * (u3 + x * u4)))
}
