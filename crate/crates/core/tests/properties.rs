mod common;

use std::f64::consts::PI;
use std::sync::OnceLock;

use common::{lorentzian, rel_err, Fixture};
use floqnoise::floquet::{floquet_decompose, FloquetOptions};
use floqnoise::model::{builtin_vdp, VdpParams};
use floqnoise::noise_ops::phase_diffusion;
use floqnoise::pss::{solve_pss, PssGuess, PssOptions};
use floqnoise::spectra::{anoise_at, generate_sweep, pnoise_at, to_db, xnoise_at, SweepKind, SweepSpec};
use proptest::prelude::*;

fn vdp() -> &'static Fixture {
    static FX: OnceLock<Fixture> = OnceLock::new();
    FX.get_or_init(|| common::vdp(16))
}

fn ilo() -> &'static Fixture {
    static FX: OnceLock<Fixture> = OnceLock::new();
    FX.get_or_init(|| common::ilo2(1e-3, 16))
}

proptest! {
    #[test]
    fn log_sweep_is_geometric_and_inclusive(
        start in 1e-8f64..1e6,
        decades in 0.05f64..8.0,
        per in 3usize..40,
    ) {
        let stop = start * 10f64.powf(decades);
        let f = generate_sweep(&SweepSpec { start, stop, kind: SweepKind::Log, points: per }).unwrap();
        prop_assert_eq!(f[0], start);
        prop_assert_eq!(*f.last().unwrap(), stop);
        let ratio = 10f64.powf(1.0 / per as f64) * (1.0 + 1e-9);
        for w in f.windows(2) {
            prop_assert!(w[1] > w[0]);
            prop_assert!(w[1] / w[0] <= ratio);
        }
    }

    #[test]
    fn lin_sweep_is_evenly_spaced(start in 1e-3f64..1e3, span in 1e-3f64..1e3, n in 10usize..200) {
        let f = generate_sweep(&SweepSpec { start, stop: start + span, kind: SweepKind::Lin, points: n }).unwrap();
        prop_assert_eq!(f.len(), n);
        let step = span / (n - 1) as f64;
        for w in f.windows(2) {
            prop_assert!(((w[1] - w[0]) - step).abs() <= 1e-9 * (start + span));
        }
    }

    #[test]
    fn degenerate_sweeps_are_rejected(start in -1.0f64..1e3, per in 0usize..3) {
        let log = SweepSpec { start, stop: start.abs() * 10.0 + 1.0, kind: SweepKind::Log, points: per };
        prop_assert!(generate_sweep(&log).is_err());
        let inverted = SweepSpec { start: 10.0, stop: 10.0 - start.abs(), kind: SweepKind::Lin, points: 20 };
        prop_assert!(generate_sweep(&inverted).is_err());
    }

    #[test]
    fn single_oscillator_phase_noise_is_even_positive_and_decreasing(logf in -7.0f64..0.0) {
        let fx = vdp();
        let ops = fx.operators(1);
        let node = &ops.nodes[0];
        let wm = 2.0 * PI * 10f64.powf(logf);
        let s = pnoise_at(wm, &ops, node);
        prop_assert!(s > 0.0);
        prop_assert!(rel_err(s, pnoise_at(-wm, &ops, node)) < 1e-13);
        prop_assert!(pnoise_at(1.5 * wm, &ops, node) < s);
        prop_assert!(to_db(s).is_finite());
    }

    #[test]
    fn harmonic_scaling_of_single_oscillator(logf in -6.0f64..-1.0, nu in 1usize..4) {
        let fx = vdp();
        let ops = fx.operators(nu);
        let wm = 2.0 * PI * 10f64.powf(logf);
        let s = pnoise_at(wm, &ops, &ops.nodes[0]);
        prop_assert!(rel_err(s, lorentzian(wm, ops.omega0, nu, ops.c)) < 1e-12);
    }

    #[test]
    fn coupled_spectra_are_finite(logf in -9.0f64..-1.0) {
        let fx = ilo();
        let ops = fx.operators(1);
        let wm = 2.0 * PI * 10f64.powf(logf);
        for n in &ops.nodes {
            prop_assert!(pnoise_at(wm, &ops, n).is_finite());
            prop_assert!(anoise_at(wm, &ops, n).is_finite());
            prop_assert!(xnoise_at(wm, &ops, n).is_finite());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn floquet_invariants_hold_across_nonlinearity(eps in 0.1f64..1.2) {
        let model = builtin_vdp(VdpParams::normalized(eps, 1e-3)).unwrap();
        let guess = PssGuess { x0: vec![2.0, 0.0], period: 2.0 * PI };
        let pss = solve_pss(&model, &guess, &PssOptions::default()).unwrap();
        let lr = floqnoise::floquet::LinearResponse::new(&model, &pss).unwrap();
        let set = floqnoise::floquet::decompose_with(&lr, &pss, 1, &FloquetOptions::default()).unwrap();
        prop_assert!((set.mode(0).multiplier - 1.0).norm() <= 1e-6);
        prop_assert!(set.biorthogonality_error(&lr) <= 1e-6);
        prop_assert_eq!(set.len(), 2);
        // the amplitude mode relaxes and stays real for a planar cycle
        let mu2 = set.mode(1).exponent;
        prop_assert!(mu2.re < 0.0 && mu2.im.abs() < 1e-9 * pss.omega0());
        let c = phase_diffusion(&set.mode(0).lambda_harmonics).unwrap();
        prop_assert!(rel_err(c, common::diffusion_by_quadrature(&set)) < 1e-6);
    }

    #[test]
    fn diffusion_scales_with_noise_intensity(noise in 1e-6f64..1.0, factor in 1.5f64..10.0) {
        let c_of = |n: f64| {
            let model = builtin_vdp(VdpParams::normalized(0.5, n)).unwrap();
            let guess = PssGuess { x0: vec![2.0, 0.0], period: 2.0 * PI };
            let pss = solve_pss(&model, &guess, &PssOptions::default()).unwrap();
            let set = floquet_decompose(&model, &pss, 1, &FloquetOptions::default()).unwrap();
            phase_diffusion(&set.mode(0).lambda_harmonics).unwrap()
        };
        prop_assert!(rel_err(c_of(noise * factor), factor * c_of(noise)) < 1e-9);
    }
}
