//! Self-checks runnable from the command line: closed-system exactness,
//! feedback damping, heating rate, unravelling consistency, noise statistics
//! and kernel validity.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    run_sme_deterministic, run_trajectory, DynamicsParams, InitialState, MeasurementRep, TrajectoryConfig,
    TrajectoryStatus,
};
use crate::ensemble::{run_ensemble, EnsembleConfig, SteadyStateConfig};
use crate::feedback::ControlLaw;
use crate::kernels::{kernel_moment, tabulate_kernel, KernelConfig, KernelMethod, KernelTable};
use crate::noise::{rng_stream, sample_spectral_noise};
use crate::state::GridSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        CheckResult {
            name: name.into(),
            passed,
            detail,
        }
    }

    fn error(name: &str, e: impl std::fmt::Display) -> Self {
        CheckResult::new(name, false, format!("error: {e}"))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ValidateOptions {
    pub seed: u64,
    pub workers: usize,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions { seed: 0, workers: 0 }
    }
}

fn default_table() -> Result<Arc<KernelTable>, crate::kernels::KernelError> {
    tabulate_kernel(&KernelConfig::default()).map(Arc::new)
}

fn trajectory(
    kernel: Arc<KernelTable>,
    grid: GridSpec,
    alpha_tilde: f64,
    eta: f64,
    control: ControlLaw,
    tau_max: f64,
    initial: InitialState,
    seed: u64,
) -> TrajectoryConfig {
    TrajectoryConfig {
        grid,
        dynamics: DynamicsParams {
            alpha_tilde,
            eta,
            kernel,
            dt: 1e-3,
            measurement_rep: MeasurementRep::Fourier,
        },
        control,
        tau_max,
        sample_stride: 0.05,
        initial,
        seed,
    }
}

pub fn check_closed_system(kernel: Arc<KernelTable>) -> CheckResult {
    let name = "closed-system exactness";
    let cfg = trajectory(kernel, GridSpec::default(), 0.0, 6.0, ControlLaw::none(), 20.0, InitialState::default(), 0);
    match run_trajectory(&cfg, 0) {
        Ok(rec) => {
            let de = rec.energy.iter().map(|e| (e - 2.5).abs()).fold(0.0, f64::max);
            let dx = rec.tau.iter().zip(&rec.x).map(|(t, x)| (x - 2.0 * t.cos()).abs()).fold(0.0, f64::max);
            let ok = rec.status == TrajectoryStatus::Completed && de < 1e-6 && dx < 1e-4;
            CheckResult::new(name, ok, format!("max |E - 2.5| = {de:.2e}, max |x - 2 cos tau| = {dx:.2e}"))
        }
        Err(e) => CheckResult::error(name, e),
    }
}

pub fn check_feedback_damping(kernel: Arc<KernelTable>) -> CheckResult {
    let name = "feedback damping";
    let cfg = trajectory(kernel, GridSpec::default(), 0.0, 6.0, ControlLaw::linear(2.0), 10.0, InitialState::default(), 0);
    match run_trajectory(&cfg, 0) {
        Ok(rec) => {
            let dx = rec
                .tau
                .iter()
                .zip(&rec.x)
                .map(|(t, x)| (x - 2.0 * (1.0 + t) * (-t).exp()).abs())
                .fold(0.0, f64::max);
            let de = (rec.energy.last().copied().unwrap_or(f64::NAN) - 0.5).abs();
            let ok = rec.status == TrajectoryStatus::Completed && dx < 1e-3 && de < 1e-4;
            CheckResult::new(name, ok, format!("sup |x - 2(1+t)e^-t| = {dx:.2e}, |E(10) - 0.5| = {de:.2e}"))
        }
        Err(e) => CheckResult::error(name, e),
    }
}

/// Mean and standard error of per-path least-squares slopes.
pub fn path_slopes(tau: &[f64], energies: &[&[f64]]) -> (f64, f64) {
    let n = tau.len() as f64;
    let tm = tau.iter().sum::<f64>() / n;
    let stt: f64 = tau.iter().map(|t| (t - tm).powi(2)).sum();
    let slopes: Vec<f64> = energies
        .iter()
        .map(|e| {
            let em = e.iter().sum::<f64>() / n;
            tau.iter().zip(e.iter()).map(|(t, v)| (t - tm) * (v - em)).sum::<f64>() / stt
        })
        .collect();
    let m = slopes.len() as f64;
    let mean = slopes.iter().sum::<f64>() / m;
    let var = slopes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

pub fn check_heating_rate(kernel: Arc<KernelTable>, opts: &ValidateOptions) -> CheckResult {
    let name = "heating rate";
    let m2 = match kernel_moment(&kernel, 2) {
        Ok(m) => m,
        Err(e) => return CheckResult::error(name, e),
    };
    let ground = InitialState { center: 0.0, sigma2: 0.5 };
    let mut ok = true;
    let mut detail = Vec::new();
    for eta in [2.0, 6.0] {
        let mut fitted = Vec::new();
        for alpha in [1.0, 4.0] {
            let cfg = EnsembleConfig {
                trajectory: trajectory(kernel.clone(), GridSpec::default(), alpha, eta, ControlLaw::none(), 0.5, ground, opts.seed),
                paths: 200,
                workers: opts.workers,
                steady_state: SteadyStateConfig {
                    early_stop: false,
                    ..Default::default()
                },
            };
            let run = match run_ensemble(&cfg) {
                Ok(r) => r,
                Err(e) => return CheckResult::error(name, e),
            };
            let done: Vec<&[f64]> = run
                .records
                .iter()
                .filter(|r| r.status == TrajectoryStatus::Completed)
                .map(|r| r.energy.as_slice())
                .collect();
            let (slope, se) = path_slopes(&run.stats.tau, &done);
            let oracle = 0.5 * alpha * eta * eta * m2;
            let pass = (slope - oracle).abs() < 3.0 * se;
            ok &= pass;
            detail.push(format!("a={alpha} eta={eta}: {slope:.4e} +- {se:.1e} vs {oracle:.4e}"));
            fitted.push((slope, se));
        }
        let (s1, e1) = fitted[0];
        let (s4, e4) = fitted[1];
        let ratio = s4 / s1;
        let err = ratio * ((e1 / s1).powi(2) + (e4 / s4).powi(2)).sqrt();
        let pass = (ratio - 4.0).abs() < 3.0 * err;
        ok &= pass;
        detail.push(format!("eta={eta}: ratio {ratio:.3} +- {err:.3}"));
    }
    CheckResult::new(name, ok, detail.join("; "))
}

pub fn check_unravelling(kernel: Arc<KernelTable>, opts: &ValidateOptions) -> CheckResult {
    let name = "unravelling consistency";
    let grid = GridSpec { n_points: 32, length: 12.0 };
    let initial = InitialState { center: 1.0, sigma2: 0.5 };
    let traj = trajectory(kernel, grid, 1.0, 2.0, ControlLaw::none(), 1.0, initial, opts.seed);
    let sme = match run_sme_deterministic(&traj) {
        Ok(r) => r,
        Err(e) => return CheckResult::error(name, e),
    };
    let cfg = EnsembleConfig {
        trajectory: traj,
        paths: 1000,
        workers: opts.workers,
        steady_state: SteadyStateConfig {
            early_stop: false,
            ..Default::default()
        },
    };
    let run = match run_ensemble(&cfg) {
        Ok(r) => r,
        Err(e) => return CheckResult::error(name, e),
    };
    let mut ok = run.stats.failures == 0;
    let mut detail = vec![format!("failures {}", run.stats.failures)];
    for t in [0.5, 1.0] {
        let k = (t / 0.05_f64).round() as usize;
        let d = run.stats.mean_energy[k] - sme.energy[k];
        let se = run.stats.stderr[k];
        ok &= d.abs() < 3.0 * se;
        detail.push(format!("tau={t}: dE = {d:.2e}, stderr {se:.2e}"));
    }
    CheckResult::new(name, ok, detail.join("; "))
}

pub fn check_noise_statistics(kernel: &KernelTable, opts: &ValidateOptions) -> CheckResult {
    let name = "noise statistics";
    let kappa = kernel.kappa();
    let n = kappa.len();
    let (dk, dt) = (kernel.dkappa(), 1e-3);
    let scale = dt / dk;
    let steps = 100_000;
    let mut stream = rng_stream(opts.seed, u64::MAX);
    let mut diag = vec![0.0; n];
    // E[dW_j dW_k] for k = j and k = j + 1, and E[dW_j conj(dW_(j+1))].
    let mut same = vec![(Complex64::ZERO, 0.0); n];
    let mut next = vec![(Complex64::ZERO, 0.0); n - 1];
    let mut next_conj = vec![(Complex64::ZERO, 0.0); n - 1];
    let mut hermitian = true;
    let acc = |slot: &mut (Complex64, f64), z: Complex64| {
        slot.0 += z;
        slot.1 += z.norm_sqr();
    };
    for _ in 0..steps {
        let w = match sample_spectral_noise(kappa, dk, dt, &mut stream) {
            Ok(w) => w.values,
            Err(e) => return CheckResult::error(name, e),
        };
        for j in 0..n {
            hermitian &= w[n - 1 - j] == w[j].conj();
            diag[j] += w[j].norm_sqr() / scale;
            acc(&mut same[j], w[j] * w[j] / scale);
            if j + 1 < n {
                acc(&mut next[j], w[j] * w[j + 1] / scale);
                acc(&mut next_conj[j], w[j] * w[j + 1].conj() / scale);
            }
        }
    }
    let s = steps as f64;
    let worst_diag = diag.iter().map(|d| (d / s - 1.0).abs()).fold(0.0, f64::max);
    let z_score = |(sum, sq): &(Complex64, f64)| {
        let mean = sum / s;
        let se = ((sq / s - mean.norm_sqr()) / s).sqrt();
        mean.norm() / se
    };
    let center = n / 2;
    // dW_j dW_j has mean zero except at kappa = 0, where it equals |dW_0|^2.
    let worst_same = same
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != center)
        .map(|(_, v)| z_score(v))
        .fold(0.0, f64::max);
    // dW_j dW_(j+1) has mean one when kappa_(j+1) = -kappa_j, which never
    // happens for adjacent points on an odd grid.
    let worst_cross = next.iter().chain(&next_conj).map(z_score).fold(0.0, f64::max);
    let ok = hermitian && worst_diag < 0.02 && worst_same < 4.0 && worst_cross < 4.0;
    CheckResult::new(
        name,
        ok,
        format!(
            "hermitian {hermitian}, worst |<|dW|^2> - 1| = {worst_diag:.2e}, cross-term z-scores {worst_same:.2} / {worst_cross:.2}"
        ),
    )
}

pub fn check_kernel_validity() -> CheckResult {
    let name = "kernel validity";
    let base = KernelConfig::default();
    let run = || -> Result<(f64, f64), crate::kernels::KernelError> {
        let gauss = tabulate_kernel(&base)?;
        let full = tabulate_kernel(&KernelConfig {
            method: KernelMethod::Full,
            ..base
        })?;
        let peak = gauss.gamma().iter().cloned().fold(0.0, f64::max);
        let dev = gauss
            .kappa()
            .iter()
            .zip(gauss.gamma().iter().zip(full.gamma()))
            .filter(|(k, _)| k.abs() <= 0.5)
            .map(|(_, (g, f))| (g - f).abs() / peak)
            .fold(0.0, f64::max);
        let mut drift: f64 = 0.0;
        for method in [KernelMethod::Gaussian, KernelMethod::Full] {
            let a = tabulate_kernel(&KernelConfig { method, ..base })?;
            let b = tabulate_kernel(&KernelConfig {
                method,
                quad_tol: base.quad_tol / 2.0,
                ..base
            })?;
            let peak = a.gamma().iter().cloned().fold(0.0, f64::max);
            for (x, y) in a.gamma().iter().zip(b.gamma()) {
                drift = drift.max((x - y).abs() / peak);
            }
        }
        Ok((dev, drift))
    };
    match run() {
        Ok((dev, drift)) => CheckResult::new(
            name,
            dev < 0.05 && drift < 10.0 * base.quad_tol,
            format!("full vs gaussian {dev:.2e} of peak on |kappa| <= 0.5; tolerance-halving drift {drift:.1e}"),
        ),
        Err(e) => CheckResult::error(name, e),
    }
}

/// Runs every check in order.
pub fn run_validation(opts: &ValidateOptions) -> Vec<CheckResult> {
    let kernel = match default_table() {
        Ok(k) => k,
        Err(e) => return vec![CheckResult::error("kernel table", e)],
    };
    vec![
        check_closed_system(kernel.clone()),
        check_feedback_damping(kernel.clone()),
        check_heating_rate(kernel.clone(), opts),
        check_unravelling(kernel.clone(), opts),
        check_noise_statistics(&kernel, opts),
        check_kernel_validity(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slopes_of_exact_lines() {
        let tau: Vec<f64> = (0..11).map(|k| k as f64 * 0.05).collect();
        let a: Vec<f64> = tau.iter().map(|t| 1.0 + 0.2 * t).collect();
        let b: Vec<f64> = tau.iter().map(|t| 0.5 + 0.4 * t).collect();
        let (m, se) = path_slopes(&tau, &[&a, &b]);
        assert!((m - 0.3).abs() < 1e-12);
        assert!((se - 0.1).abs() < 1e-12);
    }

    #[test]
    fn quick_checks_pass() {
        let k = default_table().unwrap();
        for c in [check_closed_system(k.clone()), check_feedback_damping(k), check_kernel_validity()] {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
