//! Fixtures shared by the benchmarks.

use std::f64::consts::PI;

use floqnoise::floquet::{floquet_decompose, FloquetOptions, FloquetSet};
use floqnoise::fourier::Harmonics;
use floqnoise::model::{builtin_ilo2, builtin_vdp, TankEnsemble, VdpParams};
use floqnoise::pss::{pss_harmonics, solve_pss, PssGuess, PssOptions, PssSolution};

/// A solved oscillator ready for the later pipeline stages.
pub struct Prepared {
    pub model: TankEnsemble,
    pub guess: PssGuess,
    pub pss: PssSolution,
    pub set: FloquetSet,
    pub carrier: Harmonics,
    pub k: usize,
    pub nodes: Vec<(usize, String)>,
}

pub fn guess_for(units: usize) -> PssGuess {
    PssGuess {
        x0: [2.0, 0.0].repeat(units),
        period: 2.0 * PI,
    }
}

fn prepare(model: TankEnsemble, k: usize) -> Prepared {
    let guess = guess_for(k);
    let pss = solve_pss(&model, &guess, &PssOptions::default()).expect("PSS");
    let set = floquet_decompose(&model, &pss, k, &FloquetOptions::default()).expect("Floquet");
    let carrier = pss_harmonics(&pss, set.nf()).expect("harmonics");
    let nodes = (1..=k).map(|u| (2 * (u - 1), format!("v{u}"))).collect();
    Prepared {
        model,
        guess,
        pss,
        set,
        carrier,
        k,
        nodes,
    }
}

pub fn vdp() -> Prepared {
    prepare(builtin_vdp(VdpParams::normalized(0.5, 0.08)).expect("model"), 1)
}

pub fn ilo2() -> Prepared {
    prepare(builtin_ilo2(1e-3).expect("model").0, 2)
}
