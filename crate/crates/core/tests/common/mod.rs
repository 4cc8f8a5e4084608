//! Shared fixtures and independent reference implementations for the
//! integration tests.

#![allow(dead_code)]

use std::f64::consts::PI;

use floqnoise::floquet::{decompose_with, FloquetOptions, FloquetSet, LinearResponse};
use floqnoise::fourier::Harmonics;
use floqnoise::model::{
    builtin_ilo2, builtin_ring3, builtin_vdp, CircuitModel, TankEnsemble, VdpParams,
};
use floqnoise::noise_ops::{omega_diag, pi_diag, psi_diag, theta_diag, xi_diag, NoiseOperators};
use floqnoise::pss::{pss_harmonics, solve_pss, PssGuess, PssOptions, PssSolution};
use floqnoise::Complex64;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A solved and decomposed oscillator.
pub struct Fixture {
    pub name: &'static str,
    pub model: Box<dyn CircuitModel>,
    pub pss: PssSolution,
    pub lr: LinearResponse,
    pub set: FloquetSet,
    pub carrier: Harmonics,
    pub k: usize,
    pub nodes: Vec<(usize, String)>,
}

impl Fixture {
    pub fn solve(
        name: &'static str,
        model: Box<dyn CircuitModel>,
        guess: PssGuess,
        k: usize,
        nf: usize,
    ) -> Self {
        let pss = solve_pss(model.as_ref(), &guess, &PssOptions::default())
            .unwrap_or_else(|e| panic!("{name}: PSS failed: {e}"));
        let lr = LinearResponse::new(model.as_ref(), &pss).unwrap();
        let opts = FloquetOptions {
            nf,
            ..FloquetOptions::default()
        };
        let set = decompose_with(&lr, &pss, k, &opts)
            .unwrap_or_else(|e| panic!("{name}: decomposition failed: {e}"));
        let carrier = pss_harmonics(&pss, nf).unwrap();
        let nodes = (0..k)
            .map(|u| {
                let n = format!("v{}", u + 1);
                (model.node_index(&n).unwrap(), n)
            })
            .collect();
        Self {
            name,
            model,
            pss,
            lr,
            set,
            carrier,
            k,
            nodes,
        }
    }

    pub fn operators(&self, nu: usize) -> NoiseOperators {
        NoiseOperators::assemble(&self.set, &self.carrier, self.k, &self.nodes, nu).unwrap()
    }

    /// Lorentzian corner `omega0^2 c / 2` in Hz.
    pub fn corner_hz(&self) -> f64 {
        let ops = self.operators(1);
        0.5 * ops.omega0 * ops.omega0 * ops.c / (2.0 * PI)
    }
}

fn tank_guess(model: &TankEnsemble) -> PssGuess {
    let units = model.units();
    PssGuess {
        x0: units
            .iter()
            .flat_map(|u| [u.amplitude_estimate().max(1.0), 0.0])
            .collect(),
        period: 2.0 * PI / units[0].tank_omega(),
    }
}

pub fn tank(name: &'static str, model: TankEnsemble, k: usize, nf: usize) -> Fixture {
    let guess = tank_guess(&model);
    Fixture::solve(name, Box::new(model), guess, k, nf)
}

pub fn vdp(nf: usize) -> Fixture {
    tank("vdp", builtin_vdp(VdpParams::normalized(0.5, 0.08)).unwrap(), 1, nf)
}

pub fn rf900(nf: usize) -> Fixture {
    tank("rf900", builtin_vdp(VdpParams::rf900()).unwrap(), 1, nf)
}

pub fn ilo2(noise: f64, nf: usize) -> Fixture {
    tank("ilo2", builtin_ilo2(noise).unwrap().0, 2, nf)
}

pub fn ring3(nf: usize) -> Fixture {
    tank("ring3", builtin_ring3(1e-3).unwrap().0, 3, nf)
}

/// Two unilaterally coupled tanks with an even-order core term and a
/// state-modulated noise source. Breaks the odd symmetry of the built-in
/// models so that every operator term is populated.
pub struct SkewPair {
    pub eps: f64,
    pub g2: f64,
    pub gm: f64,
    pub noise: [f64; 2],
    pub names: Vec<String>,
}

impl SkewPair {
    pub fn new() -> Self {
        Self {
            eps: 0.4,
            g2: 0.15,
            gm: 0.08,
            noise: [1e-3, 4e-3],
            names: ["v1", "il1", "v2", "il2"].map(String::from).to_vec(),
        }
    }

    fn core(&self, v: f64) -> f64 {
        -self.eps * v + self.g2 * v * v + self.eps / 3.0 * v * v * v
    }

    fn core_slope(&self, v: f64) -> f64 {
        -self.eps + 2.0 * self.g2 * v + self.eps * v * v
    }
}

impl CircuitModel for SkewPair {
    fn dim(&self) -> usize {
        4
    }
    fn noise_dim(&self) -> usize {
        2
    }
    fn node_names(&self) -> &[String] {
        &self.names
    }
    fn charge(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }
    fn current(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x[1] + self.core(x[0]);
        out[1] = -x[0];
        out[2] = x[3] + self.core(x[2]) - self.gm * x[0];
        out[3] = -x[2];
    }
    fn noise_matrix(&self, x: &[f64], out: &mut DMatrix<f64>) {
        out.fill(0.0);
        out[(0, 0)] = self.noise[0].sqrt() * (1.0 + 0.3 * x[0]);
        out[(2, 1)] = self.noise[1].sqrt() * (1.0 + 0.2 * x[3]);
    }
    fn capacitance(&self, _x: &[f64], out: &mut DMatrix<f64>) {
        out.fill(0.0);
        out.fill_diagonal(1.0);
    }
    fn conductance(&self, x: &[f64], out: &mut DMatrix<f64>) {
        out.fill(0.0);
        out[(0, 0)] = self.core_slope(x[0]);
        out[(0, 1)] = 1.0;
        out[(1, 0)] = -1.0;
        out[(2, 2)] = self.core_slope(x[2]);
        out[(2, 3)] = 1.0;
        out[(3, 2)] = -1.0;
        out[(2, 0)] = -self.gm;
    }
}

pub fn skew_pair(nf: usize) -> Fixture {
    let guess = PssGuess {
        x0: vec![2.0, 0.0, 2.0, 0.0],
        period: 2.0 * PI,
    };
    Fixture::solve("skew", Box::new(SkewPair::new()), guess, 2, nf)
}

/// Dense `n x n` evaluation of the noise operators straight from the mode
/// harmonics, one rank-one outer product at a time. Mode numbers are
/// one-based as in the operator definitions.
pub struct DenseOperators<'a> {
    set: &'a FloquetSet,
    w0: f64,
}

impl<'a> DenseOperators<'a> {
    pub fn new(set: &'a FloquetSet) -> Self {
        Self {
            set,
            w0: set.omega0(),
        }
    }

    fn n(&self) -> usize {
        self.set.mode(0).u.nrows()
    }

    fn mu(&self, i: usize) -> Complex64 {
        self.set.mode(i - 1).exponent
    }

    fn u(&self, i: usize, m: i64) -> DVector<Complex64> {
        let h = &self.set.mode(i - 1).u_harmonics;
        h.vector(m).unwrap_or_else(|| DVector::zeros(h.dim()))
    }

    fn lam(&self, i: usize, m: i64) -> DVector<Complex64> {
        let h = &self.set.mode(i - 1).lambda_harmonics;
        h.vector(m).unwrap_or_else(|| DVector::zeros(h.dim()))
    }

    /// `U_{a,pa} Lambda_{b,pb}^T Lambda_{c,pc}^* U_{d,pd}^H`.
    #[allow(clippy::too_many_arguments)]
    fn outer(&self, a: usize, pa: i64, b: usize, pb: i64, c: usize, pc: i64, d: usize, pd: i64) -> DMatrix<Complex64> {
        let left = self.u(a, pa) * self.lam(b, pb).transpose();
        let right = self.lam(c, pc).conjugate() * self.u(d, pd).adjoint();
        left * right
    }

    fn harmonics(&self) -> std::ops::RangeInclusive<i64> {
        let nf = self.set.nf() as i64;
        -nf..=nf
    }

    fn carrier_sum(&self, nu: i64, modes: std::ops::RangeInclusive<usize>) -> DMatrix<Complex64> {
        let j = Complex64::i();
        let mut acc = DMatrix::zeros(self.n(), self.n());
        for m in modes {
            for p in self.harmonics() {
                let den = j * self.w0 * (p - nu) as f64 - self.mu(m).conj();
                acc += self.outer(1, nu, 1, 0, m, nu - p, m, p) / den;
            }
        }
        acc
    }

    fn relaxation_sum(&self, nu: i64, rho: i64, target: usize, modes: std::ops::RangeInclusive<usize>) -> DMatrix<Complex64> {
        let j = Complex64::i();
        let mut acc = DMatrix::zeros(self.n(), self.n());
        for i in modes {
            for p in self.harmonics() {
                let den = j * self.w0 * (nu - p) as f64 - self.mu(target).conj() - self.mu(i);
                acc += self.outer(i, p, i, rho - p, target, rho - nu, target, nu) / den;
            }
        }
        acc
    }

    fn zero_mode_term(&self, nu: i64, rho: i64, target: usize) -> DMatrix<Complex64> {
        let j = Complex64::i();
        let den = j * self.w0 * (nu - rho) as f64 - self.mu(target).conj() - self.mu(1);
        self.outer(1, rho, 1, 0, target, rho - nu, target, nu) / den
    }

    pub fn omega(&self, nu: usize, k: usize) -> DMatrix<Complex64> {
        self.carrier_sum(nu as i64, 2..=k)
    }

    pub fn theta(&self, l: usize, rho: i64, nu: usize, k: usize) -> DMatrix<Complex64> {
        let nu = nu as i64;
        self.zero_mode_term(nu, rho, l + 1) + self.relaxation_sum(nu, rho, l + 1, 2..=k)
    }

    pub fn pi(&self, l: usize, rho: i64, nu: usize, k: usize) -> DMatrix<Complex64> {
        self.relaxation_sum(nu as i64, rho, l + k, k + 1..=self.set.len())
    }

    pub fn psi(&self, nu: usize, k: usize) -> DMatrix<Complex64> {
        self.carrier_sum(nu as i64, k + 1..=self.set.len())
    }

    pub fn xi(&self, l: usize, rho: i64, nu: usize, k: usize) -> DMatrix<Complex64> {
        let nu = nu as i64;
        if l < k {
            self.relaxation_sum(nu, rho, l + 1, k + 1..=self.set.len())
        } else {
            self.theta(l, rho, nu as usize, k)
        }
    }
}

/// Worst relative deviation between fast and dense `(q, q)` elements over
/// ten random draws per operator, in the order Omega, Theta, Pi, Psi, Xi.
pub fn worst_deviation(fx: &Fixture, seed: u64) -> [f64; 5] {
    let set = &fx.set;
    let dense = DenseOperators::new(set);
    let (k, big_l) = (fx.k, set.len());
    let n = fx.pss.dim();
    let nf = set.nf() as i64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 5];
    for _ in 0..10 {
        let q = rng.random_range(0..n);
        let nu = rng.random_range(1..=3usize);
        let rho = rng.random_range(-nf..=nf);
        let cmp = |fast: Complex64, full: DMatrix<Complex64>| crel_err(fast, full[(q, q)]);

        worst[0] = worst[0].max(cmp(omega_diag(q, nu, set, k).unwrap(), dense.omega(nu, k)));
        worst[3] = worst[3].max(cmp(psi_diag(q, nu, set, k).unwrap(), dense.psi(nu, k)));
        if k > 1 {
            let l = rng.random_range(1..k);
            worst[1] = worst[1].max(cmp(theta_diag(l, rho, q, nu, set, k).unwrap(), dense.theta(l, rho, nu, k)));
        }
        if big_l > k {
            let l = rng.random_range(1..=big_l - k);
            worst[2] = worst[2].max(cmp(pi_diag(l, rho, q, nu, set, k).unwrap(), dense.pi(l, rho, nu, k)));
        }
        let l = rng.random_range(1..big_l);
        worst[4] = worst[4].max(cmp(xi_diag(l, rho, q, nu, set, k).unwrap(), dense.xi(l, rho, nu, k)));
    }
    worst
}

/// Direct (non-FFT) harmonic `X_m` of row `q` of a sampled periodic series.
pub fn direct_harmonic(series: &DMatrix<f64>, q: usize, m: i64) -> Complex64 {
    let len = series.ncols();
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..len {
        let ph = -2.0 * PI * (m as f64) * (j as f64) / len as f64;
        acc += series[(q, j)] * Complex64::from_polar(1.0, ph);
    }
    acc / len as f64
}

/// Time-domain `(1/T0) integral ||lambda_1||^2 dt` on the periodic grid.
pub fn diffusion_by_quadrature(set: &FloquetSet) -> f64 {
    let lam = &set.mode(0).lambda;
    lam.iter().map(|z| z.norm_sqr()).sum::<f64>() / lam.ncols() as f64
}

/// Single-oscillator phase spectrum.
pub fn lorentzian(omega_m: f64, omega0: f64, nu: usize, c: f64) -> f64 {
    let w = omega0 * omega0 * (nu * nu) as f64 * c;
    w / ((0.5 * w).powi(2) + omega_m * omega_m)
}

fn mode_term(val: Complex64, mu: Complex64, rho: i64, omega_m: f64, omega0: f64, c: f64) -> f64 {
    let d = omega0 * omega0 * (rho * rho) as f64 * c;
    let re = mu.re.abs() + 0.5 * d;
    let im = omega_m + mu.im;
    (val.re * (2.0 * mu.re.abs() + d) + 2.0 * val.im * im) / (re * re + im * im)
}

/// Single-oscillator amplitude spectrum over the `Pi` table of `node`.
pub fn single_amplitude(omega_m: f64, ops: &NoiseOperators, node: usize) -> f64 {
    let nf = ops.nf as i64;
    let n = &ops.nodes[node];
    let mut acc = 0.0;
    for (l, row) in n.pi.iter().enumerate() {
        for rho in -nf..=nf {
            acc += mode_term(row[(rho + nf) as usize], ops.exponents[l + 1], rho, omega_m, ops.omega0, ops.c);
        }
    }
    acc
}

/// Single-oscillator signed cross spectrum.
pub fn single_cross(omega_m: f64, ops: &NoiseOperators, node: usize) -> f64 {
    let nf = ops.nf as i64;
    let n = &ops.nodes[node];
    let w = ops.omega0 * ops.omega0 * (ops.nu * ops.nu) as f64 * ops.c;
    let mut acc = -(n.t_u.re * w + 2.0 * n.t_u.im * omega_m) / ((0.5 * w).powi(2) + omega_m * omega_m);
    for (l, row) in n.xi.iter().enumerate() {
        for rho in -nf..=nf {
            acc += mode_term(row[(rho + nf) as usize], ops.exponents[l + 1], rho, omega_m, ops.omega0, ops.c);
        }
    }
    acc
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

pub fn crel_err(a: Complex64, b: Complex64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).norm() / a.norm().max(b.norm())
    }
}

/// Least-squares slope of `10 log10 S` against `log10 f`.
pub fn db_slope(points: &[(f64, f64)]) -> f64 {
    let xy: Vec<(f64, f64)> = points.iter().map(|&(f, s)| (f.log10(), 10.0 * s.log10())).collect();
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let n = ((hi / lo).log10() * per_decade as f64).round() as usize;
    (0..=n).map(|i| lo * (hi / lo).powf(i as f64 / n as f64)).collect()
}
