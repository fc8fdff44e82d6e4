use std::sync::Arc;

use proptest::prelude::*;

use phasecool::feedback::{controls_from_moments, ControlLaw};
use phasecool::kernels::{kernel_moment, tabulate_kernel, KernelConfig};
use phasecool::noise::{rng_stream, sample_spectral_noise};
use phasecool::params::{derive_dimensionless, PhysicalParams};
use phasecool::state::{Grid, GridSpec, Wavefunction};

fn grid() -> Arc<Grid> {
    Grid::new(GridSpec { n_points: 256, length: 40.0 }).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gaussian_energy_matches_closed_form(center in -3.0f64..3.0, sigma2 in 0.3f64..2.0) {
        let mut psi = Wavefunction::gaussian(grid(), center, sigma2).unwrap();
        let e = psi.energy().unwrap();
        let expected = 0.5 * (center * center + sigma2 + 0.25 / sigma2);
        prop_assert!((e - expected).abs() < 1e-8, "{} vs {}", e, expected);
        prop_assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fourier_noise_is_hermitian(seed in any::<u64>(), index in any::<u64>(), half in 1usize..40) {
        let n = 2 * half + 1;
        let dk = 1.0 / half as f64;
        let kappa: Vec<f64> = (0..n).map(|i| (i as f64 - half as f64) * dk).collect();
        let w = sample_spectral_noise(&kappa, dk, 1e-3, &mut rng_stream(seed, index)).unwrap().values;
        for j in 0..n {
            prop_assert_eq!(w[n - 1 - j], w[j].conj());
        }
        prop_assert_eq!(w[half].im, 0.0);
    }

    #[test]
    fn streams_are_reproducible(seed in any::<u64>(), index in 0u64..1000) {
        let mut a = rng_stream(seed, index);
        let mut b = rng_stream(seed, index);
        let mut c = rng_stream(seed, index + 1);
        let (xa, xb, xc): (Vec<u64>, Vec<u64>, Vec<u64>) = (
            (0..8).map(|_| a.next_u64()).collect(),
            (0..8).map(|_| b.next_u64()).collect(),
            (0..8).map(|_| c.next_u64()).collect(),
        );
        prop_assert_eq!(&xa, &xb);
        prop_assert_ne!(&xa, &xc);
    }

    #[test]
    fn controls_never_add_energy(
        c in prop::array::uniform4(0.0f64..4.0),
        s in prop::array::uniform4(-5.0f64..5.0),
    ) {
        // dE/dt from the control potential is -sum_n u_n (n/2) s_n.
        let law = ControlLaw::from_coefficients(c).unwrap();
        let u = controls_from_moments(&law, &s, 0.0).u;
        let rate: f64 = (0..4).map(|i| -u[i] * (i as f64 + 1.0) * 0.5 * s[i]).sum();
        prop_assert!(rate <= 1e-12);
    }

    #[test]
    fn kernel_tables_are_even_and_nonnegative(w in 200.0f64..8000.0, half in 8usize..40) {
        let table = tabulate_kernel(&KernelConfig { w, n_kappa: 2 * half, ..Default::default() }).unwrap();
        let g = table.gamma();
        let n = g.len();
        for j in 0..n {
            prop_assert!(g[j] >= 0.0);
            prop_assert_eq!(g[j], g[n - 1 - j]);
        }
        prop_assert!(kernel_moment(&table, 0).unwrap() > 0.0);
        prop_assert!(kernel_moment(&table, 1).is_err());
    }

    #[test]
    fn lamb_dicke_scales_with_wavenumber(scale in 0.5f64..2.0) {
        let base = PhysicalParams {
            d_ge: 2.5e-29,
            k0: 8.0e6,
            omega_t: 2.0 * std::f64::consts::PI * 100.0,
            omega_z: 2.0 * std::f64::consts::PI * 2.0e4,
            delta: 2.0 * std::f64::consts::PI * 1.0e9,
            flux: 1.0e12,
            mass: 1.44e-25,
        };
        let a = derive_dimensionless(&base).unwrap();
        let b = derive_dimensionless(&PhysicalParams { k0: base.k0 * scale, ..base }).unwrap();
        prop_assert!((b.eta / a.eta - scale).abs() < 1e-12);
        prop_assert!((b.w / a.w - scale * scale).abs() < 1e-12);
    }
}
