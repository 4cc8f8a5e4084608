//! Floquet decomposition of the linearized limit-cycle dynamics.
//!
//! Mode `i` is the triplet `(mu_i, u_i(t), v_i(t))` with periodic `u_i`,
//! `v_i` normalized so that `v_i^T C u_j = delta_ij`. Mode 1 is the zero
//! (phase) mode with `u_1 = dx_s/dt`. Only relevant modes, those with
//! `|Re mu| <= 10 omega0`, are kept.

mod eigen;
mod lr;

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

pub use eigen::{eigen_decompose, floquet_exponent, EigenPair};
pub use lr::{calc_monodromy, integrate_lr, LinearResponse};

pub use crate::fourier::harmonics;

use crate::error::{Error, Result};
use crate::fourier::Harmonics;
use crate::model::CircuitModel;
use crate::pss::PssSolution;

#[derive(Debug, Clone, PartialEq)]
pub struct FloquetOptions {
    /// Harmonic truncation `Nf` of the stored Floquet and lambda vectors.
    pub nf: usize,
    /// Modes with `|Re mu| <= relevance * omega0` are retained.
    pub relevance: f64,
    /// Absolute multiplier-matching tolerance, relative to `max |lambda|`.
    pub pair_tol: f64,
    /// Bound on `|mu_1| T0` for the zero mode.
    pub zero_mode_tol: f64,
    /// Bound on the relative endpoint mismatch of the detrended series.
    pub periodicity_tol: f64,
}

impl Default for FloquetOptions {
    fn default() -> Self {
        Self {
            nf: 16,
            relevance: 10.0,
            pair_tol: 1e-6,
            zero_mode_tol: 1e-6,
            periodicity_tol: 1e-5,
        }
    }
}

/// One retained Floquet mode sampled on the PSS grid.
#[derive(Debug, Clone)]
pub struct FloquetMode {
    pub exponent: Complex64,
    pub multiplier: Complex64,
    /// `u_i(t_j)`, `n x M`.
    pub u: DMatrix<Complex64>,
    /// `v_i(t_j)`, `n x M`.
    pub v: DMatrix<Complex64>,
    /// `lambda_i(t_j) = v_i^T B`, `p x M`.
    pub lambda: DMatrix<Complex64>,
    /// Harmonics `U_{i,m}`.
    pub u_harmonics: Harmonics,
    /// Harmonics `Lambda_{i,m}`.
    pub lambda_harmonics: Harmonics,
}

/// Summary entry for every multiplier of the monodromy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumEntry {
    pub multiplier: Complex64,
    pub exponent: Complex64,
    pub retained: bool,
}

/// The retained modes plus the full multiplier spectrum.
#[derive(Debug, Clone)]
pub struct FloquetSet {
    period: f64,
    modes: Vec<FloquetMode>,
    spectrum: Vec<SpectrumEntry>,
}

impl FloquetSet {
    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn omega0(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.period
    }

    /// Number of retained modes `L`.
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Mode `i`, zero-based (`mode(0)` is the zero mode).
    pub fn mode(&self, i: usize) -> &FloquetMode {
        &self.modes[i]
    }

    pub fn modes(&self) -> &[FloquetMode] {
        &self.modes
    }

    pub fn exponents(&self) -> Vec<Complex64> {
        self.modes.iter().map(|m| m.exponent).collect()
    }

    /// All multipliers of the monodromy, retained or not.
    pub fn spectrum(&self) -> &[SpectrumEntry] {
        &self.spectrum
    }

    pub fn nf(&self) -> usize {
        self.modes[0].u_harmonics.nf()
    }

    /// Largest `|v_i^T C u_j - delta_ij|` over the grid and all retained pairs.
    pub fn biorthogonality_error(&self, lr: &LinearResponse) -> f64 {
        let m = lr.grid_size();
        (0..m)
            .into_par_iter()
            .map(|j| {
                let c = lr.capacitance(j).map(|v| Complex64::new(v, 0.0));
                let mut worst = 0.0f64;
                for (a, ma) in self.modes.iter().enumerate() {
                    let vc = ma.v.column(j).transpose() * &c;
                    for (b, mb) in self.modes.iter().enumerate() {
                        let val = (&vc * mb.u.column(j))[0];
                        let target = if a == b { 1.0 } else { 0.0 };
                        worst = worst.max((val - target).norm());
                    }
                }
                worst
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Write `i,re_mu,im_mu,abs_lambda,retained` for every multiplier.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "i,re_mu,im_mu,abs_lambda,retained")?;
        for (i, e) in self.spectrum.iter().enumerate() {
            writeln!(
                w,
                "{},{:.17e},{:.17e},{:.17e},{}",
                i + 1,
                e.exponent.re,
                e.exponent.im,
                e.multiplier.norm(),
                u8::from(e.retained)
            )?;
        }
        Ok(())
    }
}

/// Number of exponents with `|Re mu| <= 10 omega0`; vanishing multipliers
/// (`Re mu = -inf`) never count.
pub fn count_relevant_modes(exponents: &[Complex64], omega0: f64) -> usize {
    count_with_factor(exponents, omega0, 10.0)
}

fn count_with_factor(exponents: &[Complex64], omega0: f64, factor: f64) -> usize {
    exponents
        .iter()
        .filter(|mu| mu.re.is_finite() && mu.re.abs() <= factor * omega0)
        .count()
}

/// Initial vectors `(u_i0, v_i0)` of one mode with `v_i0^T C0 u_i0 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedMode {
    pub multiplier: Complex64,
    pub u0: DVector<Complex64>,
    pub v0: DVector<Complex64>,
}

fn bilinear(v: &DVector<Complex64>, c: &DMatrix<Complex64>, u: &DVector<Complex64>) -> Complex64 {
    (v.transpose() * c * u)[0]
}

/// Match each forward eigenpair with the adjoint eigenpair of the nearest
/// multiplier and rescale the dual vector so that `v^T C0 u = 1`.
///
/// `tol` is absolute. Two forward multipliers closer than `tol` make the
/// expansion ill-defined and are reported as a degenerate spectrum.
pub fn pair_and_normalize(
    forward: &[EigenPair],
    adjoint: &[EigenPair],
    c0: &DMatrix<f64>,
    tol: f64,
) -> Result<Vec<PairedMode>> {
    for (i, a) in forward.iter().enumerate() {
        if let Some(b) = forward[i + 1..].iter().find(|b| (a.value - b.value).norm() <= tol) {
            return Err(Error::DegenerateSpectrum {
                a: a.value,
                b: b.value,
                tol,
            });
        }
    }
    let c = c0.map(|v| Complex64::new(v, 0.0));
    let mut used = vec![false; adjoint.len()];
    let mut out = Vec::with_capacity(forward.len());
    for f in forward {
        let best = (0..adjoint.len())
            .filter(|&j| !used[j])
            .min_by(|&x, &y| {
                (adjoint[x].value - f.value)
                    .norm()
                    .total_cmp(&(adjoint[y].value - f.value).norm())
            })
            .ok_or_else(|| Error::FloquetConsistency("adjoint spectrum has fewer multipliers".into()))?;
        let dist = (adjoint[best].value - f.value).norm();
        if dist > tol {
            return Err(Error::DegenerateSpectrum {
                a: f.value,
                b: adjoint[best].value,
                tol,
            });
        }
        used[best] = true;
        let s = bilinear(&adjoint[best].vector, &c, &f.vector);
        if s.norm() <= 1e-12 {
            return Err(Error::FloquetConsistency(format!(
                "dual vector of multiplier {} is C0-orthogonal to its Floquet vector",
                f.value
            )));
        }
        out.push(PairedMode {
            multiplier: f.value,
            u0: f.vector.clone(),
            v0: &adjoint[best].vector / s,
        });
    }
    Ok(out)
}

/// Detrended periodic series `u_i(t_j) = exp(-mu_i t_j) Phi(t_j,0) u_i0` and
/// `v_i(t_j) = exp(-mu_i (T0 - t_j)) Psi(t_j,T0) v_i0`, `n x M` each.
pub fn floquet_time_series(
    model: &dyn CircuitModel,
    pss: &PssSolution,
    paired: &[PairedMode],
    exponents: &[Complex64],
    periodicity_tol: f64,
) -> Result<Vec<(DMatrix<Complex64>, DMatrix<Complex64>)>> {
    let lr = LinearResponse::new(model, pss)?;
    series_from(&lr, paired, exponents, periodicity_tol)
}

fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

fn endpoint_mismatch(first: &DVector<Complex64>, last: &DVector<Complex64>) -> f64 {
    (last - first).norm() / first.norm().max(f64::MIN_POSITIVE)
}

fn series_from(
    lr: &LinearResponse,
    paired: &[PairedMode],
    exponents: &[Complex64],
    periodicity_tol: f64,
) -> Result<Vec<(DMatrix<Complex64>, DMatrix<Complex64>)>> {
    let m = lr.grid_size();
    let n = lr.dim();
    let t0 = lr.period();
    paired
        .par_iter()
        .zip(exponents.par_iter())
        .enumerate()
        .map(|(i, (p, &mu))| {
            let mut u = DMatrix::zeros(n, m);
            let mut v = DMatrix::zeros(n, m);
            let mut u_end = DVector::zeros(n);
            let mut v_end = DVector::zeros(n);
            for j in 0..=m {
                let t = lr.time(j);
                let uj = to_complex(lr.propagator(j)) * &p.u0 * (-mu * t).exp();
                let vj = to_complex(&lr.dual_propagator(j)) * &p.v0 * (-mu * (t0 - t)).exp();
                if j < m {
                    u.set_column(j, &uj);
                    v.set_column(j, &vj);
                } else {
                    u_end = uj;
                    v_end = vj;
                }
            }
            let du = endpoint_mismatch(&u.column(0).into_owned(), &u_end);
            let dv = endpoint_mismatch(&v.column(0).into_owned(), &v_end);
            if du > periodicity_tol || dv > periodicity_tol {
                return Err(Error::FloquetConsistency(format!(
                    "mode {} is not periodic after detrending (u mismatch {du:.2e}, v mismatch {dv:.2e})",
                    i + 1
                )));
            }
            Ok((u, v))
        })
        .collect()
}

/// `lambda_i(t_j) = v_i(t_j)^T B(x_s(t_j))`, `p x M`.
pub fn lambda_series(v: &DMatrix<Complex64>, lr: &LinearResponse) -> DMatrix<Complex64> {
    let m = v.ncols();
    let p = lr.noise(0).ncols();
    let mut out = DMatrix::zeros(p, m);
    for j in 0..m {
        let b = to_complex(lr.noise(j));
        let row = v.column(j).transpose() * b;
        out.set_column(j, &row.transpose());
    }
    out
}

/// Full decomposition: monodromy, eigenpairs, relevant-mode filter, pairing,
/// zero-mode normalization and the periodic series with their harmonics.
/// `k` is the number of oscillator units, i.e. the number of phase modes
/// that must survive the relevance filter.
pub fn floquet_decompose(
    model: &dyn CircuitModel,
    pss: &PssSolution,
    k: usize,
    opts: &FloquetOptions,
) -> Result<FloquetSet> {
    let lr = LinearResponse::new(model, pss)?;
    decompose_with(&lr, pss, k, opts)
}

/// As [`floquet_decompose`] but reusing precomputed propagators.
pub fn decompose_with(
    lr: &LinearResponse,
    pss: &PssSolution,
    k: usize,
    opts: &FloquetOptions,
) -> Result<FloquetSet> {
    if k == 0 {
        return Err(Error::Contract("an ensemble has at least one unit".into()));
    }
    if pss.grid_size() < 4 * opts.nf.max(1) {
        return Err(Error::Aliasing {
            nf: opts.nf,
            grid: pss.grid_size(),
        });
    }
    let period = pss.period();
    let omega0 = pss.omega0();
    let (phi, psi) = (lr.monodromy(), lr.adjoint_monodromy());
    let (fwd, adj) = rayon::join(|| eigen_decompose(&phi), || eigen_decompose(&psi));
    let (mut fwd, adj) = (fwd?, adj?);

    // the multiplier nearest 1 is the zero mode
    let zero = (0..fwd.len())
        .min_by(|&a, &b| (fwd[a].value - 1.0).norm().total_cmp(&(fwd[b].value - 1.0).norm()))
        .ok_or_else(|| Error::FloquetConsistency("empty monodromy".into()))?;
    let zero_pair = fwd.remove(zero);
    fwd.insert(0, zero_pair);
    let mu1 = floquet_exponent(fwd[0].value, period);
    if !((mu1 * period).norm() <= opts.zero_mode_tol) {
        return Err(Error::FloquetConsistency(format!(
            "no zero mode: multiplier closest to 1 is {} (|mu_1| T0 = {:.2e})",
            fwd[0].value,
            (mu1 * period).norm()
        )));
    }

    let exponents: Vec<Complex64> = fwd.iter().map(|p| floquet_exponent(p.value, period)).collect();
    let retained_idx: Vec<usize> = (0..fwd.len())
        .filter(|&i| {
            let mu = exponents[i];
            mu.re.is_finite() && mu.re.abs() <= opts.relevance * omega0
        })
        .collect();
    debug_assert_eq!(retained_idx.len(), count_with_factor(&exponents, omega0, opts.relevance));
    if retained_idx.len() < k {
        return Err(Error::TooFewModes {
            found: retained_idx.len(),
            k,
        });
    }
    let retained: Vec<EigenPair> = retained_idx.iter().map(|&i| fwd[i].clone()).collect();
    let scale = fwd.iter().fold(0.0f64, |m, p| m.max(p.value.norm()));
    let mut paired = pair_and_normalize(&retained, &adj, lr.capacitance(0), opts.pair_tol * scale)?;

    // scale the zero mode so that u_1(0) = dx_s/dt(0)
    let xdot = DVector::from_iterator(pss.dim(), pss.velocity().column(0).iter().map(|&v| Complex64::new(v, 0.0)));
    let u1 = &paired[0].u0;
    let alpha = u1.dotc(&xdot) / u1.dotc(u1);
    paired[0].u0 *= alpha;
    paired[0].v0 /= alpha;

    let mut mus: Vec<Complex64> = retained_idx.iter().map(|&i| exponents[i]).collect();
    mus[0] = Complex64::new(0.0, 0.0);

    let series = series_from(lr, &paired, &mus, opts.periodicity_tol)?;
    let modes = series
        .into_par_iter()
        .zip(paired.par_iter())
        .zip(mus.par_iter())
        .map(|(((u, v), p), &mu)| {
            let lambda = lambda_series(&v, lr);
            Ok(FloquetMode {
                exponent: mu,
                multiplier: p.multiplier,
                u_harmonics: harmonics(&u, opts.nf)?,
                lambda_harmonics: harmonics(&lambda, opts.nf)?,
                u,
                v,
                lambda,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let spectrum = fwd
        .iter()
        .enumerate()
        .map(|(i, p)| SpectrumEntry {
            multiplier: p.value,
            exponent: if i == 0 { Complex64::new(0.0, 0.0) } else { exponents[i] },
            retained: retained_idx.contains(&i),
        })
        .collect();
    log::debug!(
        "floquet: {} of {} modes retained, exponents {:?}",
        modes.len(),
        fwd.len(),
        mus
    );
    Ok(FloquetSet {
        period,
        modes,
        spectrum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_vdp, LinearModel, VdpParams};
    use crate::pss::{solve_pss, PssGuess, PssOptions};

    fn vdp(eps: f64) -> (crate::model::TankEnsemble, PssSolution) {
        let model = builtin_vdp(VdpParams::normalized(eps, 1e-4)).unwrap();
        let pss = solve_pss(
            &model,
            &PssGuess {
                x0: vec![2.0, 0.0],
                period: 2.0 * std::f64::consts::PI,
            },
            &PssOptions {
                grid_size: 512,
                ..Default::default()
            },
        )
        .unwrap();
        (model, pss)
    }

    #[test]
    fn relevant_mode_rule() {
        let w = 2.0;
        let c = |re: f64| Complex64::new(re * w, 0.0);
        assert_eq!(count_relevant_modes(&[c(0.0), c(-0.5), c(-100.0)], w), 2);
        assert_eq!(
            count_relevant_modes(&[c(0.0), Complex64::new(f64::NEG_INFINITY, 0.0)], w),
            1
        );
        assert_eq!(count_relevant_modes(&[c(0.0), c(-10.0)], w), 2);
    }

    #[test]
    fn pairing_two_real_modes() {
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.2, 0.0, 0.4]);
        let c0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 2.0]);
        let adj_mat = c0.transpose().try_inverse().unwrap() * a.transpose() * c0.transpose();
        let f = eigen_decompose(&a).unwrap();
        let g = eigen_decompose(&adj_mat).unwrap();
        let paired = pair_and_normalize(&f, &g, &c0, 1e-9).unwrap();
        let c = c0.map(|v| Complex64::new(v, 0.0));
        for (i, pi) in paired.iter().enumerate() {
            for (j, pj) in paired.iter().enumerate() {
                let val = bilinear(&pi.v0, &c, &pj.u0);
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((val - target).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn pairing_keeps_conjugacy() {
        let th = 0.7f64;
        let a = DMatrix::from_row_slice(3, 3, &[
            0.8 * th.cos(), -0.8 * th.sin(), 0.1,
            0.8 * th.sin(), 0.8 * th.cos(), 0.0,
            0.0, 0.0, 0.3,
        ]);
        let c0 = DMatrix::identity(3, 3);
        let f = eigen_decompose(&a).unwrap();
        let g = eigen_decompose(&a.transpose()).unwrap();
        let paired = pair_and_normalize(&f, &g, &c0, 1e-9).unwrap();
        assert!((paired[0].multiplier - paired[1].multiplier.conj()).norm() < 1e-15);
        assert!((&paired[0].u0 - paired[1].u0.map(|z| z.conj())).norm() < 1e-14);
        assert!((&paired[0].v0 - paired[1].v0.map(|z| z.conj())).norm() < 1e-14);
    }

    #[test]
    fn degenerate_multipliers_are_reported() {
        let a = DMatrix::<f64>::identity(2, 2);
        let f = eigen_decompose(&a).unwrap();
        let err = pair_and_normalize(&f, &f, &a, 1e-6).unwrap_err();
        assert!(matches!(err, Error::DegenerateSpectrum { .. }));
    }

    #[test]
    fn scalar_lti_has_constant_floquet_vector() {
        let model = LinearModel::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 0.0),
            DMatrix::from_element(1, 1, 0.5),
        )
        .unwrap();
        let pss = PssSolution::from_samples(&model, 1.0, DMatrix::zeros(1, 64)).unwrap();
        let lr = LinearResponse::new(&model, &pss).unwrap();
        let fwd = eigen_decompose(&lr.monodromy()).unwrap();
        let adj = eigen_decompose(&lr.adjoint_monodromy()).unwrap();
        let paired = pair_and_normalize(&fwd, &adj, lr.capacitance(0), 1e-9).unwrap();
        let series = series_from(&lr, &paired, &[Complex64::new(0.0, 0.0)], 1e-9).unwrap();
        let (u, v) = &series[0];
        assert!(u.iter().all(|z| (z - 1.0).norm() < 1e-14));
        assert!(v.iter().all(|z| (z - 1.0).norm() < 1e-14));
        let lam = lambda_series(v, &lr);
        assert!(lam.iter().all(|z| (z - 0.5).norm() < 1e-14));
    }

    #[test]
    fn vdp_decomposition() {
        let (model, pss) = vdp(0.3);
        let lr = LinearResponse::new(&model, &pss).unwrap();
        let set = decompose_with(&lr, &pss, 1, &FloquetOptions::default()).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.mode(0).exponent, Complex64::new(0.0, 0.0));
        assert!((set.mode(0).multiplier - 1.0).norm() < 1e-6);
        // amplitude mode relaxes at roughly -eps
        let mu2 = set.mode(1).exponent;
        assert!(mu2.re < 0.0 && (mu2.re + 0.3).abs() < 0.05, "mu2 = {mu2}");
        assert!(set.biorthogonality_error(&lr) < 1e-9);
        // u_1 follows the tangent
        let vel = pss.velocity();
        for j in 0..pss.grid_size() {
            let u = set.mode(0).u.column(j).map(|z| z.re);
            let x = vel.column(j);
            let cos = u.dot(&x) / (u.norm() * x.norm());
            assert!(cos.clamp(-1.0, 1.0).acos() < 1e-4, "j={j}");
        }
        // lambda_1 is real for the real zero mode
        assert!(set.mode(0).lambda.iter().all(|z| z.im.abs() < 1e-14));
    }

    #[test]
    fn stm_reconstruction_with_all_modes() {
        let (model, pss) = vdp(0.3);
        let lr = LinearResponse::new(&model, &pss).unwrap();
        let set = decompose_with(&lr, &pss, 1, &FloquetOptions::default()).unwrap();
        let c0 = to_complex(lr.capacitance(0));
        let mut recon = DMatrix::<Complex64>::zeros(2, 2);
        for m in set.modes() {
            let u_t = m.u.column(0).into_owned() * (m.exponent * pss.period()).exp();
            recon += u_t * (m.v.column(0).transpose() * &c0);
        }
        let phi = to_complex(&lr.monodromy());
        assert!((recon - phi).iter().all(|z| z.norm() < 1e-5));
    }

    #[test]
    fn csv_lists_every_multiplier() {
        let (model, pss) = vdp(0.3);
        let set = floquet_decompose(&model, &pss, 1, &FloquetOptions::default()).unwrap();
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "i,re_mu,im_mu,abs_lambda,retained");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("1,0.0") && lines[1].ends_with(",1"));
    }

    #[test]
    fn too_few_modes_for_ensemble_size() {
        let (model, pss) = vdp(0.3);
        let err = floquet_decompose(&model, &pss, 3, &FloquetOptions::default()).unwrap_err();
        assert!(matches!(err, Error::TooFewModes { found: 2, k: 3 }));
    }
}
