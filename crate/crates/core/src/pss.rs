//! Periodic steady state by shooting-Newton on the trapezoidal flow map.
//!
//! The unknowns are the initial state `x0` and the period `T`. The residual
//! is the periodicity defect `x(T) - x0` plus a phase anchor that pins
//! `dx_1/dt = 0` at `t = 0`, removing the time-shift null direction of the
//! autonomous flow. Each Newton step is solved in the least-squares sense
//! so a multiply degenerate (e.g. decoupled) ensemble still converges;
//! Levenberg-Marquardt damping keeps early steps on well-conditioned
//! directions.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fourier::{self, Harmonics};
use crate::integrator::{integrate, solve_dense_in_place};
use crate::model::CircuitModel;

#[derive(Debug, Clone, PartialEq)]
pub struct PssOptions {
    /// Samples per period `M`; must be a power of two.
    pub grid_size: usize,
    /// Relative periodicity tolerance.
    pub tol: f64,
    pub max_iter: usize,
    /// Periods of plain transient integration before shooting starts.
    pub settle_periods: usize,
}

impl Default for PssOptions {
    fn default() -> Self {
        Self {
            grid_size: 1024,
            tol: 1e-9,
            max_iter: 50,
            settle_periods: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PssGuess {
    pub x0: Vec<f64>,
    pub period: f64,
}

/// Sampled limit cycle on the uniform grid `t_j = j T0 / M`, `j < M`.
#[derive(Debug, Clone)]
pub struct PssSolution {
    period: f64,
    /// `n x M`.
    states: DMatrix<f64>,
    /// Spectral time derivative of `states`, `n x M`.
    velocity: DMatrix<f64>,
    defect: f64,
}

impl PssSolution {
    /// Wrap an externally produced trajectory (e.g. stacked unit solutions of
    /// a decoupled ensemble). The periodicity defect is measured by
    /// re-integrating one period.
    pub fn from_samples(model: &dyn CircuitModel, period: f64, states: DMatrix<f64>) -> Result<Self> {
        let (n, m) = states.shape();
        if n != model.dim() {
            return Err(Error::ModelDefinition(format!(
                "trajectory has {n} rows, model has {}",
                model.dim()
            )));
        }
        if !m.is_power_of_two() || m < 4 {
            return Err(Error::Config(format!("grid size {m} is not a power of two >= 4")));
        }
        if !(period > 0.0) {
            return Err(Error::DegenerateSolution { period });
        }
        let x0: Vec<f64> = states.column(0).iter().copied().collect();
        let traj = integrate(model, &x0, 0.0, period / m as f64, m)?;
        let defect = relative_defect(&traj);
        let velocity = fourier::spectral_derivative(&states, period);
        Ok(Self {
            period,
            states,
            velocity,
            defect,
        })
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn omega0(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.period
    }

    pub fn dim(&self) -> usize {
        self.states.nrows()
    }

    pub fn grid_size(&self) -> usize {
        self.states.ncols()
    }

    pub fn step(&self) -> f64 {
        self.period / self.grid_size() as f64
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.step()
    }

    /// `n x M` samples.
    pub fn states(&self) -> &DMatrix<f64> {
        &self.states
    }

    /// State at grid index `j`, wrapping periodically.
    pub fn state(&self, j: usize) -> Vec<f64> {
        self.states.column(j % self.grid_size()).iter().copied().collect()
    }

    /// `dx_s/dt` on the grid.
    pub fn velocity(&self) -> &DMatrix<f64> {
        &self.velocity
    }

    /// Relative periodicity defect `||x(T0) - x(0)||_inf / ||x||_inf`.
    pub fn defect(&self) -> f64 {
        self.defect
    }

    pub fn is_periodic(&self, tol: f64) -> bool {
        self.defect.is_finite() && self.defect <= tol && self.states.iter().all(|v| v.is_finite())
    }

    pub fn amplitude(&self) -> f64 {
        self.states.amax()
    }

    /// Re-integrate one period from `x_s(0)`; returns `M + 1` states.
    pub fn reintegrate(&self, model: &dyn CircuitModel) -> Result<Vec<Vec<f64>>> {
        integrate(model, &self.state(0), 0.0, self.step(), self.grid_size())
    }

    /// Write `t,x_1,...,x_n` rows for the sampled period.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.dim();
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=n).map(|i| format!("x_{i}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for j in 0..self.grid_size() {
            write!(w, "{:.17e}", self.time(j))?;
            for r in 0..n {
                write!(w, ",{:.17e}", self.states[(r, j)])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Harmonic vectors `X_{s,m}`, `m` in `[-nf, nf]`.
pub fn pss_harmonics(pss: &PssSolution, nf: usize) -> Result<Harmonics> {
    fourier::real_harmonics(&pss.states, nf)
}

fn relative_defect(traj: &[Vec<f64>]) -> f64 {
    let last = traj.len() - 1;
    let scale = traj
        .iter()
        .flat_map(|s| s.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let d = traj[last]
        .iter()
        .zip(&traj[0])
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    d / scale
}

/// `dx/dt` at `x` from `C(x) dx/dt = -(i(x) + s)`.
fn state_velocity(model: &dyn CircuitModel, x: &[f64]) -> Result<Vec<f64>> {
    let n = model.dim();
    let mut c = DMatrix::zeros(n, n);
    model.capacitance(x, &mut c);
    let mut rhs = vec![0.0; n];
    let mut s = vec![0.0; n];
    model.current(x, &mut rhs);
    model.source(0.0, &mut s);
    for (r, sv) in rhs.iter_mut().zip(&s) {
        *r = -(*r + sv);
    }
    let mut a: Vec<f64> = (0..n * n).map(|k| c[(k / n, k % n)]).collect();
    if !solve_dense_in_place(&mut a, &mut rhs, n) {
        return Err(Error::Contract(
            "phase anchor needs a nonsingular C at the anchor point".into(),
        ));
    }
    Ok(rhs)
}

/// Sensitivities of the end state with respect to `x0` and `T`.
fn flow_sensitivity(
    model: &dyn CircuitModel,
    traj: &[Vec<f64>],
    period: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = model.dim();
    let steps = traj.len() - 1;
    let h = period / steps as f64;
    let mut c0 = DMatrix::zeros(n, n);
    let mut g0 = DMatrix::zeros(n, n);
    let mut c1 = DMatrix::zeros(n, n);
    let mut g1 = DMatrix::zeros(n, n);
    let mut i0 = vec![0.0; n];
    let mut i1 = vec![0.0; n];
    let mut s = vec![0.0; n];
    model.source(0.0, &mut s);
    model.capacitance(&traj[0], &mut c0);
    model.conductance(&traj[0], &mut g0);
    model.current(&traj[0], &mut i0);
    // columns 0..n: d x / d x0, column n: d x / d T
    let mut sens = DMatrix::<f64>::zeros(n, n + 1);
    sens.view_mut((0, 0), (n, n)).fill_with_identity();
    for j in 0..steps {
        model.capacitance(&traj[j + 1], &mut c1);
        model.conductance(&traj[j + 1], &mut g1);
        model.current(&traj[j + 1], &mut i1);
        let a = &c1 + &g1 * (0.5 * h);
        let b = &c0 - &g0 * (0.5 * h);
        let mut rhs = &b * &sens;
        for r in 0..n {
            rhs[(r, n)] -= (0.5 * (i1[r] + i0[r]) + s[r]) / steps as f64;
        }
        let lu = a.lu();
        sens = lu.solve(&rhs).ok_or(Error::RankDeficient { index: j + 1 })?;
        std::mem::swap(&mut c0, &mut c1);
        std::mem::swap(&mut g0, &mut g1);
        std::mem::swap(&mut i0, &mut i1);
    }
    let dt = sens.column(n).into_owned();
    let phi = sens.columns(0, n).into_owned();
    Ok((phi, dt))
}

struct Residual {
    traj: Vec<Vec<f64>>,
    /// Scaled residual vector, `n + 1` entries.
    scaled: DVector<f64>,
    defect: f64,
    anchor: f64,
}

/// Evaluate a trial point; when it does not lower the merit, let the flow
/// relax it for up to `RELAX_PERIODS` periods. Straight steps along a
/// slowly rotating phase direction leave the cycle by a second-order
/// amplitude error that the flow removes while keeping the phase.
fn relaxed_trial<F>(evaluate: &F, x: Vec<f64>, period: f64, merit: f64) -> Option<(Vec<f64>, Residual)>
where
    F: Fn(&[f64], f64) -> Result<Residual>,
{
    let mut x = x;
    for _ in 0..=RELAX_PERIODS {
        let r = evaluate(&x, period).ok()?;
        if r.scaled.norm() < merit {
            return Some((x, r));
        }
        x = r.traj.last()?.clone();
    }
    None
}

const RELAX_PERIODS: usize = 3;

/// Shooting-Newton periodic steady state.
pub fn solve_pss(model: &dyn CircuitModel, guess: &PssGuess, opts: &PssOptions) -> Result<PssSolution> {
    let n = model.dim();
    if guess.x0.len() != n {
        return Err(Error::ModelDefinition(format!(
            "initial guess has length {} but n = {n}",
            guess.x0.len()
        )));
    }
    if !model.is_autonomous() {
        return Err(Error::Contract("periodic steady state needs an autonomous model".into()));
    }
    let m = opts.grid_size;
    if !m.is_power_of_two() || m < 16 {
        return Err(Error::Config(format!("PSS grid size {m} must be a power of two >= 16")));
    }
    if !(guess.period > 0.0) {
        return Err(Error::DegenerateSolution { period: guess.period });
    }
    let t_ref = guess.period;
    let mut period = guess.period;
    let mut x0 = guess.x0.clone();
    if opts.settle_periods > 0 {
        let traj = integrate(model, &x0, 0.0, period / m as f64, m * opts.settle_periods)?;
        x0 = traj.last().unwrap().clone();
    }

    // component scales fixed from the first trajectory
    let first = integrate(model, &x0, 0.0, period / m as f64, m)?;
    let amax = first.iter().flat_map(|s| s.iter()).fold(0.0f64, |a, v| a.max(v.abs()));
    let scales: Vec<f64> = (0..n)
        .map(|r| {
            first
                .iter()
                .fold(0.0f64, |a, s| a.max(s[r].abs()))
                .max(1e-9 * amax)
                .max(f64::MIN_POSITIVE)
        })
        .collect();

    let evaluate = |x0: &[f64], period: f64| -> Result<Residual> {
        let traj = integrate(model, x0, 0.0, period / m as f64, m)?;
        let vel = state_velocity(model, x0)?;
        let mut scaled = DVector::zeros(n + 1);
        for r in 0..n {
            scaled[r] = (traj[m][r] - x0[r]) / scales[r];
        }
        let anchor = vel[0] * period / scales[0];
        scaled[n] = anchor;
        let defect = relative_defect(&traj);
        Ok(Residual {
            traj,
            scaled,
            defect,
            anchor,
        })
    };

    let mut res = evaluate(&x0, period)?;
    let mut damping = 0.0;
    for iter in 0..opts.max_iter {
        log::debug!(
            "pss iter {iter}: T = {period:.12e}, defect = {:.3e}, anchor = {:.3e}",
            res.defect,
            res.anchor
        );
        if res.defect <= opts.tol && res.anchor.abs() <= 1e-8 {
            let states = DMatrix::from_fn(n, m, |r, j| res.traj[j][r]);
            let velocity = fourier::spectral_derivative(&states, period);
            return Ok(PssSolution {
                period,
                states,
                velocity,
                defect: res.defect,
            });
        }
        let (phi, dxdt) = flow_sensitivity(model, &res.traj, period)?;
        // anchor gradient by central differences of the scaled anchor
        let mut grad = vec![0.0; n];
        let mut xp = x0.clone();
        for c in 0..n {
            let dh = 1e-7 * scales[c];
            xp[c] = x0[c] + dh;
            let up = state_velocity(model, &xp)?[0];
            xp[c] = x0[c] - dh;
            let dn = state_velocity(model, &xp)?[0];
            xp[c] = x0[c];
            grad[c] = (up - dn) / (2.0 * dh) * period / scales[0];
        }
        let mut jac = DMatrix::<f64>::zeros(n + 1, n + 1);
        for r in 0..n {
            for c in 0..n {
                let id = if r == c { 1.0 } else { 0.0 };
                jac[(r, c)] = (phi[(r, c)] - id) * scales[c] / scales[r];
            }
            jac[(r, n)] = dxdt[r] * t_ref / scales[r];
            jac[(n, r)] = grad[r] * scales[r];
        }
        let svd = jac.svd(true, true);
        let (u, vt) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
        let sig = &svd.singular_values;
        let smax = sig.max();
        let proj = u.transpose() * &res.scaled;
        if iter == 0 {
            damping = 1e-4 * smax * smax;
        }
        let merit = res.scaled.norm();
        let mut accepted = None;
        for _ in 0..16 {
            // Levenberg-Marquardt step through the SVD
            let mut coeff = DVector::zeros(n + 1);
            for i in 0..=n {
                if sig[i] > 1e-14 * smax {
                    coeff[i] = -sig[i] * proj[i] / (sig[i] * sig[i] + damping);
                }
            }
            let step = vt.transpose() * coeff;
            let trial_x: Vec<f64> = (0..n).map(|r| x0[r] + step[r] * scales[r]).collect();
            let trial_t = period + step[n] * t_ref;
            if trial_t > 1e-3 * t_ref {
                if let Some((x, r)) = relaxed_trial(&evaluate, trial_x, trial_t, merit) {
                    accepted = Some((x, trial_t, r));
                    damping *= 0.1;
                    break;
                }
            } else if damping < 1e-12 * smax * smax {
                return Err(Error::DegenerateSolution { period: trial_t });
            }
            damping = (damping * 10.0).max(1e-12 * smax * smax);
        }
        match accepted {
            Some((x, t, r)) => {
                x0 = x;
                period = t;
                res = r;
            }
            None => {
                return Err(Error::NoConvergence {
                    iterations: iter + 1,
                    defect: res.defect,
                });
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        defect: res.defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_vdp, LinearModel, VdpParams};
    use std::f64::consts::PI;

    fn lc() -> LinearModel {
        // C dv/dt + il = 0, L dil/dt - v = 0
        LinearModel::new(
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            DMatrix::zeros(2, 1),
        )
        .unwrap()
    }

    #[test]
    fn lossless_lc_period() {
        // The discrete trapezoidal rotation is exactly norm preserving; its
        // angle per step is 2 atan(h/2), so the shooting period is the one
        // that closes M steps: h = 2 tan(pi/M).
        let m = 256;
        let opts = PssOptions {
            grid_size: m,
            ..Default::default()
        };
        let sol = solve_pss(&lc(), &PssGuess { x0: vec![1.0, 0.0], period: 6.0 }, &opts).unwrap();
        let discrete = m as f64 * 2.0 * (PI / m as f64).tan();
        assert!((sol.period() - discrete).abs() < 1e-9, "T = {}", sol.period());
        assert!((sol.period() - 2.0 * PI).abs() < 2e-3);
        assert!(sol.is_periodic(1e-9));
    }

    #[test]
    fn vdp_period_close_to_two_pi() {
        let model = builtin_vdp(VdpParams::normalized(0.1, 0.0)).unwrap();
        let sol = solve_pss(&model, &PssGuess { x0: vec![2.0, 0.0], period: 6.3 }, &PssOptions::default()).unwrap();
        assert!((sol.period() / (2.0 * PI) - 1.0).abs() < 0.02);
        assert!(sol.defect() <= 1e-9);
        assert_eq!(sol.grid_size(), 1024);
        // anchor: dv/dt = 0 at t = 0
        assert!(sol.velocity()[(0, 0)].abs() < 1e-6 * sol.omega0() * sol.amplitude());
    }

    #[test]
    fn rejects_bad_grid_and_period() {
        let model = lc();
        let g = PssGuess { x0: vec![1.0, 0.0], period: 6.0 };
        let opts = PssOptions { grid_size: 1000, ..Default::default() };
        assert!(matches!(solve_pss(&model, &g, &opts), Err(Error::Config(_))));
        let g = PssGuess { x0: vec![1.0, 0.0], period: -1.0 };
        assert!(matches!(
            solve_pss(&model, &g, &PssOptions::default()),
            Err(Error::DegenerateSolution { .. })
        ));
    }

    #[test]
    fn no_oscillation_is_reported() {
        // a damped tank has no limit cycle: the shooting collapses or stalls
        let damped = LinearModel::new(
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 2, &[0.5, 1.0, -1.0, 0.0]),
            DMatrix::zeros(2, 1),
        )
        .unwrap();
        let opts = PssOptions { max_iter: 8, grid_size: 64, ..Default::default() };
        let r = solve_pss(&damped, &PssGuess { x0: vec![1.0, 0.0], period: 6.0 }, &opts);
        match r {
            Ok(sol) => assert!(sol.amplitude() < 1e-6, "found spurious cycle"),
            Err(e) => assert!(matches!(
                e,
                Error::NoConvergence { .. } | Error::DegenerateSolution { .. }
            )),
        }
    }

    #[test]
    fn vdp_harmonics_are_odd_dominated() {
        let model = builtin_vdp(VdpParams::normalized(0.5, 0.0)).unwrap();
        let sol = solve_pss(&model, &PssGuess { x0: vec![2.0, 0.0], period: 6.3 }, &PssOptions::default()).unwrap();
        let h = pss_harmonics(&sol, 16).unwrap();
        let x2 = h.coeff(2, 0).norm();
        let x3 = h.coeff(3, 0).norm();
        assert!(x2 < 1e-6 * x3, "|X2| = {x2}, |X3| = {x3}");
        assert!(h.coeff(0, 0).norm() < 1e-9);
        for k in 1..=16 {
            assert!((h.coeff(-k, 0) - h.coeff(k, 0).conj()).norm() < 1e-14);
        }
    }

    #[test]
    fn csv_export_layout() {
        let model = builtin_vdp(VdpParams::normalized(0.5, 0.0)).unwrap();
        let sol = solve_pss(
            &model,
            &PssGuess { x0: vec![2.0, 0.0], period: 6.3 },
            &PssOptions { grid_size: 64, ..Default::default() },
        )
        .unwrap();
        let mut buf = Vec::new();
        sol.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,x_1,x_2"));
        assert_eq!(lines.count(), 64);
    }
}
